//! Generating-function view of the solution: `g0` and its partials, the
//! critical constants, the map `φ_t`, its inverse `h_t` and scalar evaluation
//! of `g_t` before the critical time.

use num_bigint::BigInt;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConcentrationState, TypeWeights};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharacteristicsError {
    #[error("t = {t} is not below the critical time {t_c} (margin {margin:e})")]
    BeyondCritical { t: f64, t_c: f64, margin: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("fixed-point iteration did not converge in {iterations} steps (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },
    #[error("inversion residual {residual:e} exceeds {bound:e}")]
    Residual { residual: f64, bound: f64 },
    #[error("denominator {0} is not positive; t is at or beyond the critical time")]
    NonPositiveDenominator(f64),
    #[error("the critical time is finite ({0}); the limit state needs T_c = +inf")]
    FiniteCriticalTime(f64),
}

/// `M = α + sqrt(βγ)` and `T_c = 1/(M-1)` (`None` meaning `+∞`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalData {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub m: f64,
    pub t_c: Option<f64>,
}

impl CriticalData {
    pub fn from_moments(alpha: f64, beta: f64, gamma: f64) -> Self {
        let m = alpha + (beta * gamma).sqrt();
        let t_c = (m > 1.0).then(|| 1.0 / (m - 1.0));
        Self { alpha, beta, gamma, m, t_c }
    }

    pub fn t_c_or_inf(&self) -> f64 {
        self.t_c.unwrap_or(f64::INFINITY)
    }

    pub fn is_finite(&self) -> bool {
        self.t_c.is_some()
    }
}

/// `(α, β, γ) = (<ab>, <b²-b>, <a²-a>)` of a weight map.
pub fn arm_moments<S: Scalar>(weights: &TypeWeights<S>) -> (S, S, S) {
    let moment = |f: &dyn Fn(u64, u64) -> u64| {
        S::sum_terms(weights.iter().map(|(p, c)| c.clone() * S::from_u64(f(p.a as u64, p.b as u64))).collect())
    };
    let alpha = moment(&|a, b| a * b);
    let beta = moment(&|_, b| b * b.saturating_sub(1));
    let gamma = moment(&|a, _| a * a.saturating_sub(1));
    (alpha, beta, gamma)
}

/// Critical data computed from exact rational weights.
///
/// Whether `M <= 1` is decided exactly (`α <= 1` and `βγ <= (1-α)²`). `M` and
/// `T_c` are exact whenever `βγ` is the square of a rational.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCriticalData {
    pub alpha: BigRational,
    pub beta: BigRational,
    pub gamma: BigRational,
    pub m: Option<BigRational>,
    pub infinite: bool,
    pub t_c: Option<BigRational>,
    pub approx: CriticalData,
}

impl ExactCriticalData {
    pub fn from_weights(weights: &TypeWeights<BigRational>) -> Self {
        let (alpha, beta, gamma) = arm_moments(weights);
        let product = &beta * &gamma;
        let one = BigRational::one();
        let infinite = alpha <= one && {
            let gap = &one - &alpha;
            product <= &gap * &gap
        };
        let m = rational_sqrt(&product).map(|root| &alpha + root);
        let t_c = if infinite { None } else { m.as_ref().map(|m| one.clone() / (m - &one)) };
        let approx = CriticalData::from_moments(alpha.to_f64(), beta.to_f64(), gamma.to_f64());
        // keep the float summary consistent with the exact decision
        let approx = CriticalData {
            t_c: if infinite { None } else { t_c.as_ref().map(Scalar::to_f64).or(approx.t_c) },
            ..approx
        };
        Self { alpha, beta, gamma, m, infinite, t_c, approx }
    }
}

fn rational_sqrt(x: &BigRational) -> Option<BigRational> {
    if Signed::is_negative(x) {
        return None;
    }
    let exact = |n: &BigInt| {
        let r = Roots::sqrt(n);
        (&r * &r == *n).then_some(r)
    };
    Some(BigRational::new(exact(x.numer())?, exact(x.denom())?))
}

/// `g0(x,y,z) = Σ c0(a,b,m) x^a y^b z^m` with term-wise partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGf {
    terms: Vec<(i32, i32, i32, f64)>,
    critical: CriticalData,
}

fn pow(x: f64, k: i32) -> f64 {
    if k < 0 {
        0.0
    } else {
        x.powi(k)
    }
}

impl InitialGf {
    /// `c0` is expected to have unit arm moments; the critical data is only
    /// meaningful then.
    pub fn new(c0: &ConcentrationState) -> Self {
        let terms: Vec<_> = c0.iter().map(|(p, c)| (p.a as i32, p.b as i32, p.m as i32, *c)).collect();
        let weights: TypeWeights<f64> = c0.iter().map(|(p, c)| (*p, *c)).collect();
        let (alpha, beta, gamma) = arm_moments(&weights);
        Self { terms, critical: CriticalData::from_moments(alpha, beta, gamma) }
    }

    pub fn critical_data(&self) -> CriticalData {
        self.critical
    }

    /// Sum of `c · ∂^(i,j,k) x^a y^b z^m` at a point.
    fn partial(&self, (i, j, k): (i32, i32, i32), x: f64, y: f64, z: f64) -> f64 {
        let falling = |n: i32, d: i32| (0..d).map(|s| (n - s) as f64).product::<f64>();
        self.terms
            .iter()
            .filter(|(a, b, m, _)| *a >= i && *b >= j && *m >= k)
            .map(|&(a, b, m, c)| {
                c * falling(a, i) * falling(b, j) * falling(m, k) * pow(x, a - i) * pow(y, b - j) * pow(z, m - k)
            })
            .sum()
    }

    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((0, 0, 0), x, y, z)
    }

    pub fn dx(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((1, 0, 0), x, y, z)
    }

    pub fn dy(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((0, 1, 0), x, y, z)
    }

    pub fn dz(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((0, 0, 1), x, y, z)
    }

    pub fn dxx(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((2, 0, 0), x, y, z)
    }

    pub fn dxy(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((1, 1, 0), x, y, z)
    }

    pub fn dyy(&self, x: f64, y: f64, z: f64) -> f64 {
        self.partial((0, 2, 0), x, y, z)
    }

    /// `φ_t(x,y,z) = ((1+t)x - t ∂_y g0, (1+t)y - t ∂_x g0)`.
    pub fn phi(&self, t: f64, x: f64, y: f64, z: f64) -> (f64, f64) {
        ((1.0 + t) * x - t * self.dy(x, y, z), (1.0 + t) * y - t * self.dx(x, y, z))
    }

    fn check_time(&self, t: f64, margin: f64) -> Result<(), CharacteristicsError> {
        if t < 0.0 || t.is_nan() {
            return Err(CharacteristicsError::NegativeTime(t));
        }
        match self.critical.t_c {
            Some(t_c) if t > t_c * (1.0 - margin) => Err(CharacteristicsError::BeyondCritical { t, t_c, margin }),
            _ => Ok(()),
        }
    }

    /// `h_t(u,v,z)`, the inverse of `φ_t(·,·,z)` at `(u,v)`.
    pub fn invert_phi(
        &self,
        t: f64,
        u: f64,
        v: f64,
        z: f64,
        opts: &InversionOptions,
    ) -> Result<(f64, f64), CharacteristicsError> {
        self.invert_phi_traced(t, u, v, z, opts).map(|(point, _)| point)
    }

    /// Like [`invert_phi`](Self::invert_phi), also returning the max-norm
    /// length of every iteration step.
    pub fn invert_phi_traced(
        &self,
        t: f64,
        u: f64,
        v: f64,
        z: f64,
        opts: &InversionOptions,
    ) -> Result<((f64, f64), Vec<f64>), CharacteristicsError> {
        self.check_time(t, opts.tc_margin)?;
        let s = t / (1.0 + t);
        let (mut x, mut y) = (u, v);
        let mut steps = Vec::new();
        loop {
            let nx = u / (1.0 + t) + s * self.dy(x, y, z);
            let ny = v / (1.0 + t) + s * self.dx(x, y, z);
            let step = (nx - x).abs().max((ny - y).abs());
            (x, y) = (nx, ny);
            steps.push(step);
            if step < opts.tol {
                break;
            }
            if steps.len() >= opts.max_iter || !step.is_finite() {
                return Err(CharacteristicsError::NonConvergence { iterations: steps.len(), last_step: step });
            }
        }
        let (pu, pv) = self.phi(t, x, y, z);
        let residual = (pu - u).abs().max((pv - v).abs());
        let bound = 10.0 * opts.tol;
        if residual > bound {
            return Err(CharacteristicsError::Residual { residual, bound });
        }
        Ok(((x, y), steps))
    }

    /// `g_t(x,y,z) = g0(h,z) - t/(1+t) ∂_x g0(h,z) ∂_y g0(h,z)` with `h = h_t(x,y,z)`.
    pub fn eval_g(&self, t: f64, x: f64, y: f64, z: f64, opts: &InversionOptions) -> Result<f64, CharacteristicsError> {
        let (hx, hy) = self.invert_phi(t, x, y, z, opts)?;
        Ok(self.eval(hx, hy, z) - t / (1.0 + t) * self.dx(hx, hy, z) * self.dy(hx, hy, z))
    }

    /// `(<a²-a,c_t>, <b²-b,c_t>) = (γ/D, β/D)` with `D = (1+t-tα)² - t²γβ`.
    pub fn second_moments_closed(&self, t: f64) -> Result<(f64, f64), CharacteristicsError> {
        self.check_time(t, 0.0)?;
        let CriticalData { alpha, beta, gamma, .. } = self.critical;
        let base = 1.0 + t - t * alpha;
        let d = base * base - t * t * gamma * beta;
        if !(d > 0.0) {
            return Err(CharacteristicsError::NonPositiveDenominator(d));
        }
        Ok((gamma / d, beta / d))
    }

    /// Fixed point of `(x,y) -> (∂_y g0, ∂_x g0)` at `z`, iterated from the origin.
    pub fn h_infinity(&self, z: f64, tol: f64, max_iter: usize) -> Result<(f64, f64), CharacteristicsError> {
        if let Some(t_c) = self.critical.t_c {
            return Err(CharacteristicsError::FiniteCriticalTime(t_c));
        }
        let (mut x, mut y) = (0.0, 0.0);
        for i in 1..=max_iter {
            let (nx, ny) = (self.dy(x, y, z), self.dx(x, y, z));
            let step = (nx - x).abs().max((ny - y).abs());
            (x, y) = (nx, ny);
            if step < tol {
                return Ok((x, y));
            }
            if !step.is_finite() || i == max_iter {
                return Err(CharacteristicsError::NonConvergence { iterations: i, last_step: step });
            }
        }
        Ok((x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Times above `T_c (1 - tc_margin)` are refused.
    pub tc_margin: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000, tc_margin: 1e-6 }
    }
}

/// `Σ c(a,b,m) x^a y^b z^m` over a concentration state (used to compare the
/// ODE solution with [`InitialGf::eval_g`]).
pub fn state_generating_function(c: &ConcentrationState, x: f64, y: f64, z: f64) -> f64 {
    c.iter().map(|(p, v)| v * x.powi(p.a as i32) * y.powi(p.b as i32) * z.powi(p.m as i32)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParticleType;

    fn p(a: u32, b: u32, m: u32) -> ParticleType {
        ParticleType::new(a, b, m).unwrap()
    }

    fn gf(pairs: &[((u32, u32, u32), f64)]) -> InitialGf {
        let c = ConcentrationState::from_pairs(pairs.iter().map(|&((a, b, m), c)| (p(a, b, m), c))).unwrap();
        InitialGf::new(&c)
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn exact(pairs: &[((u32, u32, u32), BigRational)]) -> ExactCriticalData {
        let w: TypeWeights<BigRational> = pairs.iter().map(|((a, b, m), c)| (p(*a, *b, *m), c.clone())).collect();
        ExactCriticalData::from_weights(&w)
    }

    #[test]
    fn critical_data_examples() {
        let mono = exact(&[((1, 1, 1), q(1, 1))]);
        assert_eq!(mono.m, Some(q(1, 1)));
        assert!(mono.infinite && mono.t_c.is_none());

        let three = exact(&[((3, 0, 1), q(1, 3)), ((0, 3, 1), q(1, 3))]);
        assert_eq!((three.alpha.clone(), three.beta.clone(), three.gamma.clone()), (q(0, 1), q(2, 1), q(2, 1)));
        assert_eq!(three.m, Some(q(2, 1)));
        assert_eq!(three.t_c, Some(q(1, 1)));

        let two = exact(&[((2, 0, 1), q(1, 2)), ((0, 2, 1), q(1, 2))]);
        assert_eq!(two.m, Some(q(1, 1)));
        assert!(two.infinite);
    }

    #[test]
    fn irrational_m_still_decides_criticality_exactly() {
        // α = 0, β = 1, γ = 2/3: M = sqrt(2/3) < 1
        let sub = exact(&[((2, 0, 1), q(1, 3)), ((1, 0, 1), q(1, 3)), ((0, 2, 1), q(1, 2))]);
        assert!(sub.m.is_none() && sub.infinite && sub.approx.t_c.is_none());
        // α = 0, β = 1, γ = 2: M = sqrt 2
        let sup = exact(&[((3, 0, 1), q(1, 3)), ((0, 2, 1), q(1, 2))]);
        assert!(sup.m.is_none() && !sup.infinite && sup.t_c.is_none());
        let t_c = sup.approx.t_c.unwrap();
        assert!((t_c - 1.0 / (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        let mono = gf(&[((1, 1, 1), 1.0)]);
        let (x, y, z, t) = (0.3, 0.6, 0.8, 1.7);
        let (u, v) = mono.phi(t, x, y, z);
        assert!((u - x * (1.0 + t - t * z)).abs() < 1e-15);
        assert!((v - y * (1.0 + t - t * z)).abs() < 1e-15);
        assert_eq!(mono.phi(0.0, x, y, z), (x, y));

        let pair = gf(&[((1, 0, 1), 1.0), ((0, 1, 1), 1.0)]);
        let (u, v) = pair.phi(t, x, y, z);
        assert!((u - ((1.0 + t) * x - t * z)).abs() < 1e-15);
        assert!((v - ((1.0 + t) * y - t * z)).abs() < 1e-15);
    }

    #[test]
    fn invert_phi_examples() {
        let opts = InversionOptions::default();
        let mono = gf(&[((1, 1, 1), 1.0)]);
        let (x, y) = mono.invert_phi(1.0, 0.5, 0.5, 0.5, &opts).unwrap();
        assert!((x - 1.0 / 3.0).abs() < 1e-11 && (y - 1.0 / 3.0).abs() < 1e-11);
        assert_eq!(mono.invert_phi(0.0, 0.2, 0.7, 0.4, &opts).unwrap(), (0.2, 0.7));

        let pair = gf(&[((1, 0, 1), 1.0), ((0, 1, 1), 1.0)]);
        let (t, u, v, z) = (0.8, 0.3, 0.9, 0.6);
        let (x, y) = pair.invert_phi(t, u, v, z, &opts).unwrap();
        assert!((x - (u + t * z) / (1.0 + t)).abs() < 1e-11);
        assert!((y - (v + t * z) / (1.0 + t)).abs() < 1e-11);
    }

    #[test]
    fn invert_phi_rejects_supercritical_time() {
        let three = gf(&[((3, 0, 1), 1.0 / 3.0), ((0, 3, 1), 1.0 / 3.0)]);
        let err = three.invert_phi(1.0, 0.5, 0.5, 0.5, &InversionOptions::default()).unwrap_err();
        assert!(matches!(err, CharacteristicsError::BeyondCritical { .. }));
        let tight = InversionOptions { max_iter: 3, ..InversionOptions::default() };
        let err = three.invert_phi(0.9, 0.5, 0.5, 0.5, &tight).unwrap_err();
        assert!(matches!(err, CharacteristicsError::NonConvergence { .. }));
    }

    #[test]
    fn eval_g_examples() {
        let opts = InversionOptions::default();
        let mono = gf(&[((1, 1, 1), 1.0)]);
        // xyz/((1+t)(1+t-tz)) at t=1, x=y=1, z=1/2
        let closed = 0.5 / (2.0 * 1.5);
        assert!((mono.eval_g(1.0, 1.0, 1.0, 0.5, &opts).unwrap() - closed).abs() < 1e-11);
        let series: f64 = (1..200).map(|m| 0.5f64.powi(m) / 2f64.powi(m + 1)).sum();
        assert!((series - 1.0 / 6.0).abs() < 1e-15);
        assert!((mono.eval_g(0.0, 0.3, 0.7, 0.5, &opts).unwrap() - mono.eval(0.3, 0.7, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn second_moment_examples() {
        let mono = gf(&[((1, 1, 1), 1.0)]);
        assert_eq!(mono.second_moments_closed(3.0).unwrap(), (0.0, 0.0));
        let three = gf(&[((3, 0, 1), 1.0 / 3.0), ((0, 3, 1), 1.0 / 3.0)]);
        let (g, b) = three.second_moments_closed(0.5).unwrap();
        assert!((g - 1.6).abs() < 1e-12 && (b - 1.6).abs() < 1e-12);
        let (g0, b0) = three.second_moments_closed(0.0).unwrap();
        assert!((g0 - 2.0).abs() < 1e-15 && (b0 - 2.0).abs() < 1e-15);
        assert!(three.second_moments_closed(1.0 - 1e-4).unwrap().0 > 1e3);
        assert!(three.second_moments_closed(1.5).is_err());
    }

    #[test]
    fn h_infinity_examples() {
        let pair = gf(&[((1, 0, 1), 1.0), ((0, 1, 1), 1.0)]);
        let (x, y) = pair.h_infinity(0.4, 1e-14, 1000).unwrap();
        assert!((x - 0.4).abs() < 1e-14 && (y - 0.4).abs() < 1e-14);
        let mono = gf(&[((1, 1, 1), 1.0)]);
        assert_eq!(mono.h_infinity(0.7, 1e-14, 1000).unwrap(), (0.0, 0.0));
        let half = gf(&[((1, 0, 1), 0.5), ((0, 1, 1), 0.5), ((1, 1, 1), 0.5)]);
        let z = 0.6;
        let (x, _) = half.h_infinity(z, 1e-14, 10_000).unwrap();
        assert!((x - z * 0.5 / (1.0 - z * 0.5)).abs() < 1e-12);
        let three = gf(&[((3, 0, 1), 1.0 / 3.0), ((0, 3, 1), 1.0 / 3.0)]);
        assert!(matches!(three.h_infinity(0.5, 1e-12, 100), Err(CharacteristicsError::FiniteCriticalTime(_))));
    }
}
