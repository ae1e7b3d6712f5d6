//! Closed-form solutions for three monodisperse families.

use thiserror::Error;

use crate::measures::{diamond, ConvolutionPowers, Measure1D};
use crate::model::{ParticleType, TypeWeights};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplicitError {
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("t = {t} is not below the critical time {t_c}")]
    BeyondCritical { t: f64, t_c: f64 },
    #[error("particle mass must be at least 1")]
    ZeroMass,
}

/// Arm laws of the solvable families; every initial particle has mass 1.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec<S> {
    /// One female arm and `a ~ μ₁` male arms.
    OneFemaleArm { mu1: Measure1D<S> },
    /// `l ~ μ₁` arms, each male or female with probability ½.
    RandomGender { mu1: Measure1D<S> },
    /// Cations with `a ~ μ₁` male arms and anions with `b ~ μ₂` female arms.
    TwoGender { mu1: Measure1D<S>, mu2: Measure1D<S> },
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), ExplicitError> {
    if cond {
        Ok(())
    } else {
        Err(ExplicitError::InvalidFamily(msg()))
    }
}

impl<S: Scalar> FamilySpec<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OneFemaleArm { .. } => "one_female_arm",
            Self::RandomGender { .. } => "random_gender",
            Self::TwoGender { .. } => "two_gender",
        }
    }

    /// Normalization constraints of each family, within relative `tol`.
    pub fn validate(&self, tol: f64) -> Result<(), ExplicitError> {
        let probability = |mu: &Measure1D<S>, mean: u64, label: &str| {
            check(mu.total_mass().approx_eq(&S::one(), tol), || {
                format!("{label} must have total mass 1 (got {})", mu.total_mass().to_f64())
            })?;
            check(mu.mean().approx_eq(&S::from_u64(mean), tol), || {
                format!("{label} must have mean {mean} (got {})", mu.mean().to_f64())
            })
        };
        let mean_one = |mu: &Measure1D<S>, label: &str| {
            check(mu.mean().approx_eq(&S::one(), tol), || {
                format!("{label} must have mean 1 (got {})", mu.mean().to_f64())
            })
        };
        match self {
            Self::OneFemaleArm { mu1 } => probability(mu1, 1, "mu1"),
            Self::RandomGender { mu1 } => probability(mu1, 2, "mu1"),
            Self::TwoGender { mu1, mu2 } => {
                mean_one(mu1, "mu1")?;
                mean_one(mu2, "mu2")?;
                check(mu1.get(0).approx_eq(&mu2.get(0), tol), || {
                    format!("mu1(0) = {} differs from mu2(0) = {}", mu1.get(0).to_f64(), mu2.get(0).to_f64())
                })
            }
        }
    }

    /// The induced initial state `c0(a,b,1) = μ(a,b)`.
    pub fn initial_weights(&self) -> TypeWeights<S> {
        let mut w = TypeWeights::new();
        let mut put = |a: u32, b: u32, v: S| {
            if !v.is_zero() {
                w.insert(ParticleType { a, b, m: 1 }, v);
            }
        };
        match self {
            Self::OneFemaleArm { mu1 } => mu1.iter().for_each(|(a, v)| put(a, 1, v.clone())),
            Self::RandomGender { mu1 } => {
                for (l, v) in mu1.iter() {
                    for b in 0..=l {
                        let split = S::factorial_ratio(&[l as u64], &[b as u64, (l - b) as u64]);
                        put(l - b, b, v.clone() * split / S::from_u64(2).powu(l));
                    }
                }
            }
            Self::TwoGender { mu1, mu2 } => {
                mu1.iter().for_each(|(a, v)| put(a, 0, v.clone()));
                mu2.iter().filter(|(b, _)| *b > 0).for_each(|(b, v)| put(0, b, v.clone()));
            }
        }
        w
    }

    /// `T_c` of the induced initial state (`None` for `+∞`), from `M = <ab> + sqrt(<a²-a><b²-b>)`.
    pub fn critical_time(&self) -> Option<f64> {
        let (alpha, beta, gamma) = crate::characteristics::arm_moments(&self.initial_weights());
        crate::characteristics::CriticalData::from_moments(alpha.to_f64(), beta.to_f64(), gamma.to_f64()).t_c
    }

    fn check_time(&self, t: &S) -> Result<(), ExplicitError> {
        let tf = t.to_f64();
        if t.is_negative() {
            return Err(ExplicitError::NegativeTime(tf));
        }
        match self.critical_time() {
            Some(t_c) if tf >= t_c => Err(ExplicitError::BeyondCritical { t: tf, t_c }),
            _ => Ok(()),
        }
    }

    /// `c_t(a,b,m)`.
    pub fn concentration(&self, t: &S, a: u32, b: u32, m: u32) -> Result<S, ExplicitError> {
        if m == 0 {
            return Err(ExplicitError::ZeroMass);
        }
        self.check_time(t)?;
        Ok(match self {
            Self::OneFemaleArm { mu1 } => one_female(mu1, t, a, b, m),
            Self::RandomGender { mu1 } => random_gender(mu1, t, a, b, m),
            Self::TwoGender { mu1, mu2 } => two_gender(mu1, mu2, t, a, b, m),
        })
    }

    /// Large-time limit of `c_t(0,0,m)`, `ν₁⋄ν₂(m)/(m-1)`, for the two-gender family.
    pub fn zero_arm_limit(&self, m: u32) -> Option<S> {
        match self {
            Self::TwoGender { mu1, mu2 } if m >= 2 => {
                let value = diamond(&mu1.size_biased_shift(), &mu2.size_biased_shift(), m).ok()?;
                Some(value / S::from_u64((m - 1) as u64))
            }
            Self::TwoGender { mu1, .. } if m == 1 => Some(mu1.get(0)),
            _ => None,
        }
    }

    /// Largest arm count a particle of mass `m` can carry.
    fn arm_bound(&self, m: u32) -> u32 {
        let max = match self {
            Self::OneFemaleArm { mu1 } => mu1.max_support() + 1,
            Self::RandomGender { mu1 } => mu1.max_support(),
            Self::TwoGender { mu1, mu2 } => mu1.max_support().max(mu2.max_support()),
        };
        (m * max).saturating_sub(2 * (m - 1))
    }

    /// All `(p, c_t(p))` with `m <= max_mass` and nonzero value.
    pub fn table(&self, t: &S, max_mass: u32) -> Result<Vec<(ParticleType, S)>, ExplicitError> {
        let mut rows = Vec::new();
        for m in 1..=max_mass {
            let bound = self.arm_bound(m);
            for a in 0..=bound {
                for b in 0..=bound - a {
                    let v = self.concentration(t, a, b, m)?;
                    if !v.is_zero() {
                        rows.push((ParticleType { a, b, m }, v));
                    }
                }
            }
        }
        Ok(rows)
    }
}

fn time_factor<S: Scalar>(t: &S, m: u32, exponent: u32) -> S {
    t.powu(m - 1) / (S::one() + t.clone()).powu(exponent)
}

/// `t^{m-1}/(1+t)^{m+a} (1/m) C(m+a-1, a) μ₁^{*m}(m+a-1)` on `b = 1`.
fn one_female<S: Scalar>(mu1: &Measure1D<S>, t: &S, a: u32, b: u32, m: u32) -> S {
    if b != 1 {
        return S::zero();
    }
    let j = m + a - 1;
    let conv = ConvolutionPowers::new(mu1.clone(), j).value(m, j as i64);
    let binom = S::factorial_ratio(&[j as u64], &[a as u64, (m - 1) as u64]);
    time_factor(t, m, m + a) * binom * conv / S::from_u64(m as u64)
}

/// Uniform gender split of the symmetric solution with arm law `μ₁/2`:
/// `c_t(a,b,m) = 2^{1-l} t^{m-1}/(1+t)^{l+m-1} (l+m-2)!/(m! a! b!) (ν₁/2)^{*m}(l+m-2)`, `l = a+b`.
fn random_gender<S: Scalar>(mu1: &Measure1D<S>, t: &S, a: u32, b: u32, m: u32) -> S {
    let l = a + b;
    if m == 1 && l == 0 {
        // inert initial particles; the general expression has a (-1)! here
        return mu1.get(0);
    }
    let j = l + m - 2;
    let half = S::one() / S::from_u64(2);
    let nu = mu1.size_biased_shift().scaled(&half);
    let conv = ConvolutionPowers::new(nu, j).value(m, j as i64);
    let factorials = S::factorial_ratio(&[j as u64], &[m as u64, a as u64, b as u64]);
    let gender = S::from_u64(2) / S::from_u64(2).powu(l);
    gender * time_factor(t, m, l + m - 1) * factorials * conv
}

/// Two-variable Lagrange inversion for the one-gender initial laws; terms
/// with a negative factorial or convolution index are absent.
fn two_gender<S: Scalar>(mu1: &Measure1D<S>, mu2: &Measure1D<S>, t: &S, a: u32, b: u32, m: u32) -> S {
    if (a, b) == (0, 0) {
        if m == 1 {
            return mu1.get(0);
        }
        let nu1 = mu1.size_biased_shift();
        let nu2 = mu2.size_biased_shift();
        let d = diamond(&nu1, &nu2, m).expect("m >= 2");
        let ratio = t.clone() / (S::one() + t.clone());
        return ratio.powu(m - 1) * d / S::from_u64((m - 1) as u64);
    }
    let (a, b, m) = (a as i64, b as i64, m as i64);
    let upto = (m + a + b) as u32;
    let mut p1 = ConvolutionPowers::new(mu1.size_biased_shift(), upto);
    let mut p2 = ConvolutionPowers::new(mu2.size_biased_shift(), upto);
    let mut terms = Vec::new();
    for k in 0..=m {
        let (f1, f2) = (m - k + b - 1, k + a - 1);
        if f1 < 0 || f2 < 0 {
            continue;
        }
        let v1 = p1.value((m - k) as u32, k + a - 1);
        let v2 = p2.value(k as u32, m - k - 1 + b);
        if v1.is_zero() || v2.is_zero() {
            continue;
        }
        let fac = S::factorial_ratio(&[f1 as u64, f2 as u64], &[(m - k) as u64, k as u64, a as u64, b as u64]);
        terms.push(fac * v1 * v2);
    }
    time_factor(t, m as u32, (m + a + b - 1) as u32) * S::sum_terms(terms)
}
