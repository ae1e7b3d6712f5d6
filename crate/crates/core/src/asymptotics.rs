//! Long-time limit: the fixed point `h_∞`, the limiting concentrations
//! `c_∞(m)` and the total-progeny law of the two-type Galton-Watson tree.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characteristics::arm_moments;
use crate::measures::{Measure2D, MeasureError};
use crate::model::TypeWeights;
use crate::rng::replicate_rng;
use crate::scalar::Scalar;
use crate::series::TruncatedSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("the critical time is finite (M = {m}); no limit state")]
    FiniteCriticalTime { m: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("reproduction law is empty")]
    EmptyLaw,
    #[error("invalid reproduction law: {0}")]
    InvalidLaw(String),
}

/// Arm laws for which the limiting tree is not almost surely finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// `μ = δ_(1,1)`.
    SingleMaleSingleFemale,
    /// `μ = ½(δ_(2,0) + δ_(0,2))`.
    TwoArmHalves,
    /// Every armed type has exactly one male arm.
    OneMaleArm,
    /// Every armed type has exactly one female arm.
    OneFemaleArm,
}

/// Classifies the arm law `μ(a,b) = Σ_m c0(a,b,m)` against the degenerate list.
/// Armless types are ignored.
pub fn detect_degeneracy<S: Scalar>(weights: &TypeWeights<S>) -> Option<Degeneracy> {
    let mut mu: BTreeMap<(u32, u32), S> = BTreeMap::new();
    for (p, c) in weights {
        if (p.a, p.b) != (0, 0) && !c.is_zero() {
            let slot = mu.entry((p.a, p.b)).or_insert_with(S::zero);
            *slot = slot.clone() + c.clone();
        }
    }
    let keys: Vec<(u32, u32)> = mu.keys().copied().collect();
    if keys.is_empty() {
        return None;
    }
    if keys == [(1, 1)] {
        return Some(Degeneracy::SingleMaleSingleFemale);
    }
    if keys == [(0, 2), (2, 0)] && mu[&(0, 2)] == mu[&(2, 0)] {
        return Some(Degeneracy::TwoArmHalves);
    }
    if keys.iter().all(|&(a, _)| a == 1) {
        return Some(Degeneracy::OneMaleArm);
    }
    if keys.iter().all(|&(_, b)| b == 1) {
        return Some(Degeneracy::OneFemaleArm);
    }
    None
}

/// `M <= 1`, decided with the scalar's own arithmetic (exact for rationals).
pub fn critical_time_is_infinite<S: Scalar>(weights: &TypeWeights<S>) -> bool {
    let (alpha, beta, gamma) = arm_moments(weights);
    let gap = S::one() - alpha.clone();
    alpha <= S::one() && beta * gamma <= gap.clone() * gap
}

/// `Σ coef x^a y^b z^shift` as a truncated series, with powers of `x` and `y` tabulated.
struct BivariatePowers<S> {
    x: Vec<TruncatedSeries<S>>,
    y: Vec<TruncatedSeries<S>>,
}

impl<S: Scalar> BivariatePowers<S> {
    fn new(x: &TruncatedSeries<S>, y: &TruncatedSeries<S>, max_a: u32, max_b: u32) -> Self {
        let powers = |s: &TruncatedSeries<S>, k: u32| {
            let mut out = vec![TruncatedSeries::constant(S::one(), s.order())];
            for i in 0..k as usize {
                out.push(out[i].mul_truncated(s));
            }
            out
        };
        Self { x: powers(x, max_a), y: powers(y, max_b) }
    }

    fn sum(&self, terms: &[(u32, u32, usize, S)], order: usize) -> TruncatedSeries<S> {
        let mut acc = vec![Vec::new(); order + 1];
        for (a, b, shift, coef) in terms {
            if *shift > order {
                continue;
            }
            let term = self.x[*a as usize].mul_truncated(&self.y[*b as usize]);
            for k in 0..=order - shift {
                acc[k + shift].push(term.coeff(k) * coef.clone());
            }
        }
        TruncatedSeries::from_coeffs(acc.into_iter().map(S::sum_terms).collect(), order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitState<S> {
    /// `h_∞^(1)` and `h_∞^(2)` through order `N`.
    pub h1: TruncatedSeries<S>,
    pub h2: TruncatedSeries<S>,
    /// `c_∞(m)` for `m = 1..=N`.
    pub c_inf: BTreeMap<u32, S>,
    /// `Σ_{m<=N} c_∞(m)`.
    pub total: S,
    /// `Σ_{m<=N} m c_∞(m)`.
    pub mass: S,
    pub degeneracy: Option<Degeneracy>,
}

impl<S: Scalar> LimitState<S> {
    pub fn get(&self, m: u32) -> S {
        self.c_inf.get(&m).cloned().unwrap_or_else(S::zero)
    }
}

/// `c_∞(m) = [z^m] g_∞` for `m <= n`, where `g_∞` is the antiderivative
/// vanishing at 0 of `∂_z g0(h_∞(z), z)` and `h_∞` solves
/// `h1 = ∂_y g0(h1,h2,z)`, `h2 = ∂_x g0(h1,h2,z)` as power series.
pub fn limiting_concentrations<S: Scalar>(weights: &TypeWeights<S>, n: u32) -> Result<LimitState<S>, AsymptoticsError> {
    if !critical_time_is_infinite(weights) {
        let (alpha, beta, gamma) = arm_moments(weights);
        return Err(AsymptoticsError::FiniteCriticalTime {
            m: alpha.to_f64() + (beta.to_f64() * gamma.to_f64()).sqrt(),
        });
    }
    let order = n as usize;
    let from = |k: u32| S::from_u64(k as u64);
    let dy: Vec<_> =
        weights.iter().filter(|(p, _)| p.b > 0).map(|(p, c)| (p.a, p.b - 1, p.m as usize, c.clone() * from(p.b))).collect();
    let dx: Vec<_> =
        weights.iter().filter(|(p, _)| p.a > 0).map(|(p, c)| (p.a - 1, p.b, p.m as usize, c.clone() * from(p.a))).collect();
    let dz: Vec<_> = weights.iter().map(|(p, c)| (p.a, p.b, p.m as usize - 1, c.clone() * from(p.m))).collect();
    let max_a = weights.keys().map(|p| p.a).max().unwrap_or(0);
    let max_b = weights.keys().map(|p| p.b).max().unwrap_or(0);

    let mut h1 = TruncatedSeries::zero(order);
    let mut h2 = TruncatedSeries::zero(order);
    // every term carries at least one factor of z, so each sweep fixes one more coefficient
    for _ in 0..=order {
        let powers = BivariatePowers::new(&h1, &h2, max_a, max_b);
        let next1 = powers.sum(&dy, order);
        let next2 = powers.sum(&dx, order);
        let done = next1 == h1 && next2 == h2;
        (h1, h2) = (next1, next2);
        if done {
            break;
        }
    }
    let g_prime = BivariatePowers::new(&h1, &h2, max_a, max_b).sum(&dz, order);
    let g = g_prime.antiderivative();
    let c_inf: BTreeMap<u32, S> = (1..=n).map(|m| (m, g.coeff(m as usize))).collect();
    let total = S::sum_terms(c_inf.values().cloned().collect());
    let mass = S::sum_terms(c_inf.iter().map(|(m, c)| c.clone() * from(*m)).collect());
    Ok(LimitState { h1, h2, c_inf, total, mass, degeneracy: detect_degeneracy(weights) })
}

/// `P(T = m)` for `m = 0..=n`, where `T` is the total progeny of the tree
/// started from one male and one female ancestor: `[z^m] g_m g_f` with
/// `g_m = z φ_m(g_m, g_f)` and `g_f = z φ_f(g_m, g_f)`.
pub fn gw_progeny_pmf_series<S: Scalar>(
    nu_m: &Measure2D<S>,
    nu_f: &Measure2D<S>,
    n: u32,
) -> Result<Vec<S>, AsymptoticsError> {
    if nu_m.is_empty() || nu_f.is_empty() {
        return Err(AsymptoticsError::EmptyLaw);
    }
    let order = n as usize;
    let terms = |law: &Measure2D<S>| law.iter().map(|(&(a, b), w)| (a, b, 1usize, w.clone())).collect::<Vec<_>>();
    let (tm, tf) = (terms(nu_m), terms(nu_f));
    let max_a = nu_m.iter().chain(nu_f.iter()).map(|((a, _), _)| *a).max().unwrap_or(0);
    let max_b = nu_m.iter().chain(nu_f.iter()).map(|((_, b), _)| *b).max().unwrap_or(0);
    let mut gm = TruncatedSeries::zero(order);
    let mut gf = TruncatedSeries::zero(order);
    for _ in 0..=order {
        let powers = BivariatePowers::new(&gm, &gf, max_a, max_b);
        let (next_m, next_f) = (powers.sum(&tm, order), powers.sum(&tf, order));
        let done = next_m == gm && next_f == gf;
        (gm, gf) = (next_m, next_f);
        if done {
            break;
        }
    }
    Ok(gm.mul_truncated(&gf).coeffs().to_vec())
}

/// Settings for sampling total progeny.
#[derive(Debug, Clone, PartialEq)]
pub struct GwConfig {
    pub nu_m: Measure2D<f64>,
    pub nu_f: Measure2D<f64>,
    /// Trees whose population exceeds this are recorded as censored.
    pub max_population: u64,
    pub replicates: u64,
    pub seed: u64,
}

pub const DEFAULT_MAX_POPULATION: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwSample {
    pub replicates: u64,
    /// Number of finished trees with each total progeny.
    pub counts: BTreeMap<u64, u64>,
    pub censored: u64,
}

impl GwSample {
    pub fn pmf(&self, m: u64) -> f64 {
        self.counts.get(&m).copied().unwrap_or(0) as f64 / self.replicates as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.replicates as f64
    }
}

struct Law {
    outcomes: Vec<(u64, u64)>,
    index: WeightedIndex<f64>,
}

impl Law {
    fn new(nu: &Measure2D<f64>) -> Result<Self, AsymptoticsError> {
        let (outcomes, weights): (Vec<_>, Vec<_>) = nu.iter().map(|(&(a, b), w)| ((a as u64, b as u64), *w)).unzip();
        if outcomes.is_empty() {
            return Err(AsymptoticsError::EmptyLaw);
        }
        let index = WeightedIndex::new(weights).map_err(|e| AsymptoticsError::InvalidLaw(e.to_string()))?;
        Ok(Self { outcomes, index })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        self.outcomes[self.index.sample(rng)]
    }
}

/// Total progeny of one tree, or `None` once the population exceeds `cap`.
///
/// Individuals are processed breadth first; only the counts of pending males
/// and females matter, so no explicit queue is kept.
fn sample_tree<R: Rng>(male: &Law, female: &Law, cap: u64, rng: &mut R) -> Option<u64> {
    let (mut pending_m, mut pending_f, mut population) = (1u64, 1u64, 2u64);
    while pending_m + pending_f > 0 {
        let (a, b) = if pending_m > 0 {
            pending_m -= 1;
            male.sample(rng)
        } else {
            pending_f -= 1;
            female.sample(rng)
        };
        pending_m += a;
        pending_f += b;
        population += a + b;
        if population > cap {
            return None;
        }
    }
    Some(population)
}

/// Samples the total progeny of `cfg.replicates` independent trees. Replicate
/// `r` uses a stream derived from `(seed, r)`, so the result does not depend on
/// the thread count.
pub fn gw_sample_total_progeny(cfg: &GwConfig) -> Result<GwSample, AsymptoticsError> {
    let male = Law::new(&cfg.nu_m)?;
    let female = Law::new(&cfg.nu_f)?;
    let outcomes: Vec<Option<u64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| sample_tree(&male, &female, cfg.max_population, &mut replicate_rng(cfg.seed, r)))
        .collect();
    let mut counts = BTreeMap::new();
    let mut censored = 0;
    for outcome in outcomes {
        match outcome {
            Some(t) => *counts.entry(t).or_insert(0) += 1,
            None => censored += 1,
        }
    }
    Ok(GwSample { replicates: cfg.replicates, counts, censored })
}
