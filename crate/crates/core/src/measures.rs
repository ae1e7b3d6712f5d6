//! Finite integer measures: convolution powers, the diamond product and the
//! size-biased reproduction laws of a two-type arm distribution.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("negative weight {weight} at {at}")]
    NegativeWeight { at: String, weight: f64 },
    #[error("diamond product is defined for m >= 2 (got {0})")]
    DiamondOrder(u32),
    #[error("arm law is not normalized: <a,mu> = {male}, <b,mu> = {female}")]
    Unnormalized { male: f64, female: f64 },
}

/// Finite-support measure on the nonnegative integers.
///
/// Measures with infinite support must be truncated by the caller, who records
/// the discarded mass in `tail_mass`; nothing here truncates implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure1D<S> {
    weights: Vec<S>,
    tail_mass: S,
}

impl<S: Scalar> Measure1D<S> {
    pub fn from_weights(weights: Vec<S>) -> Result<Self, MeasureError> {
        Self::with_tail(weights, S::zero())
    }

    pub fn with_tail(mut weights: Vec<S>, tail_mass: S) -> Result<Self, MeasureError> {
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| w.is_negative()) {
            return Err(MeasureError::NegativeWeight { at: j.to_string(), weight: w.to_f64() });
        }
        if tail_mass.is_negative() {
            return Err(MeasureError::NegativeWeight { at: "tail".into(), weight: tail_mass.to_f64() });
        }
        while weights.last().is_some_and(|w| w.is_zero()) {
            weights.pop();
        }
        Ok(Self { weights, tail_mass })
    }

    pub fn from_pairs<I: IntoIterator<Item = (u32, S)>>(pairs: I) -> Result<Self, MeasureError> {
        let mut weights: Vec<S> = Vec::new();
        for (j, w) in pairs {
            let j = j as usize;
            if weights.len() <= j {
                weights.resize(j + 1, S::zero());
            }
            weights[j] = weights[j].clone() + w;
        }
        Self::from_weights(weights)
    }

    /// Dirac mass at `j`.
    pub fn dirac(j: u32) -> Self {
        let mut weights = vec![S::zero(); j as usize + 1];
        weights[j as usize] = S::one();
        Self { weights, tail_mass: S::zero() }
    }

    pub fn get(&self, j: u32) -> S {
        self.weights.get(j as usize).cloned().unwrap_or_else(S::zero)
    }

    pub fn tail_mass(&self) -> &S {
        &self.tail_mass
    }

    /// Largest point of the support (0 for the zero measure).
    pub fn max_support(&self) -> u32 {
        self.weights.len().saturating_sub(1) as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &S)> {
        self.weights.iter().enumerate().map(|(j, w)| (j as u32, w)).filter(|(_, w)| !w.is_zero())
    }

    pub fn total_mass(&self) -> S {
        S::sum_terms(self.weights.clone())
    }

    pub fn mean(&self) -> S {
        S::sum_terms(self.iter().map(|(j, w)| w.clone() * S::from_u64(j as u64)).collect())
    }

    pub fn scaled(&self, factor: &S) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w.clone() * factor.clone()).collect(),
            tail_mass: self.tail_mass.clone() * factor.clone(),
        }
    }

    /// `ν(j) = (j+1) μ(j+1)`, the law of the number of remaining arms seen from a
    /// uniformly chosen arm.
    pub fn size_biased_shift(&self) -> Self {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, w)| w.clone() * S::from_u64(j as u64))
            .collect();
        Self { weights, tail_mass: S::zero() }
    }

    /// Convolution of two measures, truncated to indices `<= upto`.
    pub fn convolve(&self, other: &Self, upto: u32) -> Self {
        let len = (self.weights.len() + other.weights.len()).saturating_sub(1).min(upto as usize + 1);
        let mut weights = Vec::with_capacity(len);
        for j in 0..len {
            let lo = j.saturating_sub(other.weights.len().saturating_sub(1));
            let hi = j.min(self.weights.len().saturating_sub(1));
            let terms: Vec<S> = (lo..=hi)
                .filter(|&i| j - i < other.weights.len() && i < self.weights.len())
                .map(|i| self.weights[i].clone() * other.weights[j - i].clone())
                .collect();
            weights.push(S::sum_terms(terms));
        }
        Self { weights, tail_mass: S::zero() }
    }

    /// `ν^{*k}(j)` by iterated discrete convolution; `ν^{*0} = δ_0`.
    pub fn convolution_power(&self, k: u32, j: u32) -> S {
        ConvolutionPowers::new(self.clone(), j).power(k).get(j)
    }
}

/// Lazily grown table of convolution powers `ν^{*k}` truncated at a fixed index.
#[derive(Debug, Clone)]
pub struct ConvolutionPowers<S> {
    base: Measure1D<S>,
    upto: u32,
    powers: Vec<Measure1D<S>>,
}

impl<S: Scalar> ConvolutionPowers<S> {
    pub fn new(base: Measure1D<S>, upto: u32) -> Self {
        Self { base, upto, powers: vec![Measure1D::dirac(0)] }
    }

    pub fn power(&mut self, k: u32) -> &Measure1D<S> {
        while self.powers.len() <= k as usize {
            let next = self.powers.last().expect("table starts with delta_0").convolve(&self.base, self.upto);
            self.powers.push(next);
        }
        &self.powers[k as usize]
    }

    /// `ν^{*k}(j)`; negative `j` gives zero.
    pub fn value(&mut self, k: u32, j: i64) -> S {
        if j < 0 || j > self.upto as i64 {
            return S::zero();
        }
        self.power(k).get(j as u32)
    }
}

/// `ν₁ ⋄ ν₂ (m) = (m-1) Σ_{k=1}^{m-1} (1/k) ν₁^{*(m-k)}(k-1) (1/(m-k)) ν₂^{*k}(m-k-1)`.
pub fn diamond<S: Scalar>(nu1: &Measure1D<S>, nu2: &Measure1D<S>, m: u32) -> Result<S, MeasureError> {
    if m < 2 {
        return Err(MeasureError::DiamondOrder(m));
    }
    let mut p1 = ConvolutionPowers::new(nu1.clone(), m);
    let mut p2 = ConvolutionPowers::new(nu2.clone(), m);
    let terms: Vec<S> = (1..m)
        .map(|k| {
            let left = p1.value(m - k, k as i64 - 1) / S::from_u64(k as u64);
            let right = p2.value(k, (m - k) as i64 - 1) / S::from_u64((m - k) as u64);
            left * right
        })
        .collect();
    Ok(S::from_u64((m - 1) as u64) * S::sum_terms(terms))
}

/// Finite-support measure on pairs of arm counts `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure2D<S> {
    weights: BTreeMap<(u32, u32), S>,
}

impl<S: Scalar> Measure2D<S> {
    pub fn from_pairs<I: IntoIterator<Item = ((u32, u32), S)>>(pairs: I) -> Result<Self, MeasureError> {
        let mut weights: BTreeMap<(u32, u32), S> = BTreeMap::new();
        for (key, w) in pairs {
            if w.is_negative() {
                return Err(MeasureError::NegativeWeight { at: format!("{key:?}"), weight: w.to_f64() });
            }
            let slot = weights.entry(key).or_insert_with(S::zero);
            *slot = slot.clone() + w;
        }
        weights.retain(|_, w| !w.is_zero());
        Ok(Self { weights })
    }

    pub fn dirac(a: u32, b: u32) -> Self {
        Self { weights: BTreeMap::from([((a, b), S::one())]) }
    }

    pub fn get(&self, a: u32, b: u32) -> S {
        self.weights.get(&(a, b)).cloned().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32), &S)> {
        self.weights.iter()
    }

    pub fn total_mass(&self) -> S {
        S::sum_terms(self.weights.values().cloned().collect())
    }

    pub fn male_mean(&self) -> S {
        S::sum_terms(self.weights.iter().map(|((a, _), w)| w.clone() * S::from_u64(*a as u64)).collect())
    }

    pub fn female_mean(&self) -> S {
        S::sum_terms(self.weights.iter().map(|((_, b), w)| w.clone() * S::from_u64(*b as u64)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Reproduction laws `ν_m(a,b) = (b+1) μ(a,b+1)` and `ν_f(a,b) = (a+1) μ(a+1,b)`.
///
/// Requires `<a,μ> = <b,μ> = 1` within `tol` so that both are probability measures.
pub fn size_biased_laws<S: Scalar>(
    mu: &Measure2D<S>,
    tol: f64,
) -> Result<(Measure2D<S>, Measure2D<S>), MeasureError> {
    let male = mu.male_mean();
    let female = mu.female_mean();
    if !male.approx_eq(&S::one(), tol) || !female.approx_eq(&S::one(), tol) {
        return Err(MeasureError::Unnormalized { male: male.to_f64(), female: female.to_f64() });
    }
    let nu_m = Measure2D::from_pairs(
        mu.iter()
            .filter(|((_, b), _)| *b > 0)
            .map(|(&(a, b), w)| ((a, b - 1), w.clone() * S::from_u64(b as u64))),
    )?;
    let nu_f = Measure2D::from_pairs(
        mu.iter()
            .filter(|((a, _), _)| *a > 0)
            .map(|(&(a, b), w)| ((a - 1, b), w.clone() * S::from_u64(a as u64))),
    )?;
    Ok((nu_m, nu_f))
}
