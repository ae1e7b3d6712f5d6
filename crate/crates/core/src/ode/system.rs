use std::collections::{HashMap, HashSet};

use super::reservoir::{basis_values, eval_monomial, ReservoirModel, BASIS_LEN};
use super::{RhsForm, TruncationPolicy};
use crate::model::{ConcentrationState, ParticleType};

#[derive(Debug, Clone, Copy)]
struct InnerPair {
    i: u32,
    j: u32,
    target: u32,
    /// Bond count, halved on the diagonal.
    weight: f64,
}

#[derive(Debug, Clone)]
struct OuterPair {
    i: u32,
    j: u32,
    weight: f64,
    product: [f64; BASIS_LEN],
}

/// The truncated system: tracked types, their bonding pairs and the reservoir model.
///
/// State vectors hold the tracked concentrations followed by the seven reservoir
/// moments.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    policy: TruncationPolicy,
    types: Vec<ParticleType>,
    index: HashMap<ParticleType, usize>,
    inner: Vec<InnerPair>,
    outer: Vec<OuterPair>,
    male: Vec<f64>,
    female: Vec<f64>,
    reservoir: ReservoirModel,
    /// `tracked_monomial_values[k][i]` is monomial `k` of the reservoir model at type `i`.
    tracked_monomial_values: Vec<Vec<f64>>,
}

impl TruncatedSystem {
    /// Builds the closure of `seeds` under merging, intersected with the caps.
    pub fn new<'a, I>(seeds: I, policy: TruncationPolicy) -> Self
    where
        I: IntoIterator<Item = &'a ParticleType>,
    {
        let mut types: Vec<ParticleType> = Vec::new();
        let mut seen: HashSet<ParticleType> = HashSet::new();
        for p in seeds {
            if policy.admits(p) && seen.insert(*p) {
                types.push(*p);
            }
        }
        let mut cursor = 0;
        while cursor < types.len() {
            let x = types[cursor];
            for y_idx in 0..=cursor {
                let y = types[y_idx];
                if let Ok(z) = x.merge(&y) {
                    if policy.admits(&z) && seen.insert(z) {
                        types.push(z);
                    }
                }
            }
            cursor += 1;
        }
        types.sort_by_key(|p| (p.m, p.a, p.b));
        let index: HashMap<ParticleType, usize> = types.iter().enumerate().map(|(i, p)| (*p, i)).collect();

        let mut inner = Vec::new();
        let mut outer = Vec::new();
        for i in 0..types.len() {
            for j in i..types.len() {
                let rate = types[i].rate(&types[j]);
                if rate == 0 {
                    continue;
                }
                let weight = if i == j { 0.5 * rate as f64 } else { rate as f64 };
                let product = types[i].merge(&types[j]).expect("positive rate");
                match index.get(&product) {
                    Some(&target) => inner.push(InnerPair { i: i as u32, j: j as u32, target: target as u32, weight }),
                    None => outer.push(OuterPair { i: i as u32, j: j as u32, weight, product: basis_values(&product) }),
                }
            }
        }

        let reservoir = ReservoirModel::new();
        let tracked_monomial_values = reservoir
            .tracked_monomials
            .iter()
            .map(|mono| types.iter().map(|p| eval_monomial(mono, p)).collect())
            .collect();
        Self {
            male: types.iter().map(|p| p.a as f64).collect(),
            female: types.iter().map(|p| p.b as f64).collect(),
            policy,
            types,
            index,
            inner,
            outer,
            reservoir,
            tracked_monomial_values,
        }
    }

    pub fn types(&self) -> &[ParticleType] {
        &self.types
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn dimension(&self) -> usize {
        self.types.len() + BASIS_LEN
    }

    pub fn index_of(&self, p: &ParticleType) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// State vector for `c`: tracked entries plus the moments of whatever lies past the caps.
    pub fn pack(&self, c: &ConcentrationState) -> Vec<f64> {
        let mut y = vec![0.0; self.dimension()];
        let k = self.types.len();
        for (p, value) in c.iter() {
            match self.index.get(p) {
                Some(&i) => y[i] += value,
                None => {
                    for (slot, v) in y[k..].iter_mut().zip(basis_values(p)) {
                        *slot += value * v;
                    }
                }
            }
        }
        y
    }

    pub fn unpack(&self, y: &[f64], time: f64) -> ConcentrationState {
        let mut c = ConcentrationState::new(time);
        for (p, value) in self.types.iter().zip(y) {
            c.insert_unchecked(*p, *value);
        }
        c
    }

    pub fn rhs(&self, t: f64, y: &[f64], form: RhsForm, dy: &mut [f64]) {
        let k = self.types.len();
        let (c, r) = y.split_at(k);
        dy.iter_mut().for_each(|v| *v = 0.0);
        let (dc, dr) = dy.split_at_mut(k);

        for pair in &self.inner {
            dc[pair.target as usize] += pair.weight * c[pair.i as usize] * c[pair.j as usize];
        }
        for pair in &self.outer {
            let flux = pair.weight * c[pair.i as usize] * c[pair.j as usize];
            for (slot, v) in dr.iter_mut().zip(&pair.product) {
                *slot += flux * v;
            }
        }

        let feedback = self.policy.overflow_accounting;
        match form {
            RhsForm::Full => {
                let mut male_total: f64 = c.iter().zip(&self.male).map(|(x, a)| x * a).sum();
                let mut female_total: f64 = c.iter().zip(&self.female).map(|(x, b)| x * b).sum();
                if feedback {
                    male_total += r[1];
                    female_total += r[2];
                }
                for i in 0..k {
                    dc[i] -= c[i] * (self.male[i] * female_total + self.female[i] * male_total);
                }
            }
            RhsForm::Reduced => {
                let decay = 1.0 / (1.0 + t);
                for i in 0..k {
                    dc[i] -= (self.male[i] + self.female[i]) * decay * c[i];
                }
            }
        }

        if feedback {
            let tracked: Vec<f64> = self
                .tracked_monomial_values
                .iter()
                .map(|values| values.iter().zip(c).map(|(v, x)| v * x).sum())
                .collect();
            for (slot, (mixed, internal)) in dr.iter_mut().zip(self.reservoir.mixed.iter().zip(&self.reservoir.internal))
            {
                let m: f64 = mixed.iter().map(|t| t.coef * tracked[t.p] * r[t.q]).sum();
                let s: f64 = internal.iter().map(|t| t.coef * r[t.p] * r[t.q]).sum();
                *slot += m + s;
            }
        }
    }
}
