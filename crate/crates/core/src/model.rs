//! Particle-type algebra: coagulation rates, merges, decompositions and
//! moment functionals over finite-support concentration states.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default relative tolerance for the balanced-arms check.
pub const DEFAULT_BALANCE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("particle mass must be at least 1 (got {0})")]
    ZeroMass(u32),
    #[error("particles {0} and {1} have zero coagulation rate and cannot merge")]
    ZeroRate(ParticleType, ParticleType),
    #[error("negative concentration {value} for {particle}")]
    NegativeConcentration { particle: ParticleType, value: f64 },
    #[error("zero arm moment: <a,c0> = {male}, <b,c0> = {female}")]
    ZeroArmMoment { male: f64, female: f64 },
    #[error("unbalanced arms: <a,c0> = {male} but <b,c0> = {female}")]
    UnbalancedArms { male: f64, female: f64 },
}

/// A particle with `a` male arms, `b` female arms and mass `m >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParticleType {
    pub a: u32,
    pub b: u32,
    pub m: u32,
}

impl ParticleType {
    pub fn new(a: u32, b: u32, m: u32) -> Result<Self, ModelError> {
        if m == 0 {
            return Err(ModelError::ZeroMass(m));
        }
        Ok(Self { a, b, m })
    }

    /// Number of (male, female) arm pairings between two particles: `a'b + ab'`.
    pub fn rate(&self, other: &ParticleType) -> u64 {
        other.a as u64 * self.b as u64 + self.a as u64 * other.b as u64
    }

    /// Type of the particle formed by one bond between `self` and `other`.
    pub fn merge(&self, other: &ParticleType) -> Result<ParticleType, ModelError> {
        if self.rate(other) == 0 {
            return Err(ModelError::ZeroRate(*self, *other));
        }
        Ok(ParticleType {
            a: self.a + other.a - 1,
            b: self.b + other.b - 1,
            m: self.m + other.m,
        })
    }

    /// All ordered pairs `(p', p \ p')` with `p' ⪯ p`. With `positive_rate_only`
    /// the pairs that cannot actually bond are left out.
    pub fn decompositions(&self, positive_rate_only: bool) -> Vec<(ParticleType, ParticleType)> {
        let mut out = Vec::new();
        for m1 in 1..self.m {
            for a1 in 0..=self.a + 1 {
                for b1 in 0..=self.b + 1 {
                    let left = ParticleType { a: a1, b: b1, m: m1 };
                    let right = ParticleType { a: self.a + 1 - a1, b: self.b + 1 - b1, m: self.m - m1 };
                    if positive_rate_only && left.rate(&right) == 0 {
                        continue;
                    }
                    out.push((left, right));
                }
            }
        }
        out
    }
}

impl fmt::Display for ParticleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.a, self.b, self.m)
    }
}

/// Finite-support weights over particle types, generic over the scalar field.
pub type TypeWeights<S> = BTreeMap<ParticleType, S>;

/// Concentrations at one instant. Absent keys have concentration zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConcentrationState {
    entries: BTreeMap<ParticleType, f64>,
    pub time: f64,
}

impl ConcentrationState {
    pub fn new(time: f64) -> Self {
        Self { entries: BTreeMap::new(), time }
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (ParticleType, f64)>,
    {
        let mut state = Self::new(0.0);
        for (p, c) in pairs {
            state.add(p, c)?;
        }
        Ok(state)
    }

    pub fn from_weights<S: Scalar>(weights: &TypeWeights<S>) -> Result<Self, ModelError> {
        Self::from_pairs(weights.iter().map(|(p, c)| (*p, c.to_f64())))
    }

    /// Adds `c` to the concentration of `p`.
    pub fn add(&mut self, p: ParticleType, c: f64) -> Result<(), ModelError> {
        if !(c >= 0.0) {
            return Err(ModelError::NegativeConcentration { particle: p, value: c });
        }
        *self.entries.entry(p).or_insert(0.0) += c;
        Ok(())
    }

    /// Stores `c` verbatim; used by solvers that have already clamped their state.
    pub(crate) fn insert_unchecked(&mut self, p: ParticleType, c: f64) {
        self.entries.insert(p, c);
    }

    pub fn get(&self, p: &ParticleType) -> f64 {
        self.entries.get(p).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParticleType, &f64)> {
        self.entries.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &ParticleType> {
        self.entries.iter().filter(|(_, c)| **c > 0.0).map(|(p, _)| p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `<c, f> = Σ_p c(p) f(p)`.
    pub fn moment<F: Fn(&ParticleType) -> f64>(&self, f: F) -> f64 {
        self.entries.iter().map(|(p, c)| c * f(p)).sum()
    }

    pub fn male_arms(&self) -> f64 {
        self.moment(|p| p.a as f64)
    }

    pub fn female_arms(&self) -> f64 {
        self.moment(|p| p.b as f64)
    }

    pub fn mass(&self) -> f64 {
        self.moment(|p| p.m as f64)
    }

    pub fn total(&self) -> f64 {
        self.moment(|_| 1.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(p, c)| (*p, c * factor)).collect(),
            time: self.time,
        }
    }
}

/// Result of bringing initial data to unit arm moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// Concentrations were multiplied by `scale = 1 / <a,c0>`.
    pub scale: f64,
}

impl Normalization {
    /// If `c` solves the system then so does `t -> λ c_{λt}`; a normalized
    /// time `t` therefore corresponds to original time `λ t`.
    pub fn original_time(&self, normalized_time: f64) -> f64 {
        self.scale * normalized_time
    }
}

/// Checks `<a,c0> = <b,c0>` within a relative tolerance and rescales to unit arm moments.
pub fn validate_and_normalize(
    c0: &ConcentrationState,
    tol: f64,
) -> Result<(ConcentrationState, Normalization), ModelError> {
    let male = c0.male_arms();
    let female = c0.female_arms();
    if !(male > 0.0) || !(female > 0.0) {
        return Err(ModelError::ZeroArmMoment { male, female });
    }
    if (male - female).abs() > tol * male.max(female) {
        return Err(ModelError::UnbalancedArms { male, female });
    }
    let scale = 1.0 / male;
    Ok((c0.scaled(scale), Normalization { scale }))
}

/// Exact-mode counterpart of [`validate_and_normalize`]: arms must balance exactly
/// (or within `tol` for floating scalars).
pub fn normalize_weights<S: Scalar>(
    weights: &TypeWeights<S>,
    tol: f64,
) -> Result<(TypeWeights<S>, S), ModelError> {
    let male = S::sum_terms(weights.iter().map(|(p, c)| c.clone() * S::from_u64(p.a as u64)).collect());
    let female = S::sum_terms(weights.iter().map(|(p, c)| c.clone() * S::from_u64(p.b as u64)).collect());
    if !(male > S::zero()) || !(female > S::zero()) {
        return Err(ModelError::ZeroArmMoment { male: male.to_f64(), female: female.to_f64() });
    }
    if !male.approx_eq(&female, tol) {
        return Err(ModelError::UnbalancedArms { male: male.to_f64(), female: female.to_f64() });
    }
    let scale = S::one() / male;
    let scaled = weights.iter().map(|(p, c)| (*p, c.clone() * scale.clone())).collect();
    Ok((scaled, scale))
}
