//! Deterministic integration of the truncated coagulation system.
//!
//! Tracked types are the closure of the initial support under merging,
//! restricted to a mass cap (and optionally an arm cap). Bonds that would
//! create an untracked particle move its moments into an overflow reservoir.
//! With `overflow_accounting` the reservoir keeps reacting through its seven
//! aggregate moments and the tracked loss terms see its arms, so under a pure
//! mass cap the tracked concentrations and the total moments are exact up to
//! the time-stepping error.

mod export;
pub mod reservoir;
mod system;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConcentrationState, ParticleType};
use reservoir::BASIS_LEN;
pub use system::TruncatedSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {time} (step {step:e}); the solution is likely blowing up")]
    StepUnderflow { time: f64, step: f64 },
    #[error("concentration of {particle} fell to {value:e} at t = {time}")]
    Negativity { time: f64, particle: ParticleType, value: f64 },
    #[error("invalid time {0}")]
    InvalidTime(f64),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
}

/// Which types are evolved explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub mass_cap: u32,
    /// Cap on each arm count separately; `None` leaves arms bounded only by the mass cap.
    pub arm_cap: Option<u32>,
    /// Evolve the reservoir moments and feed its arms back into loss terms.
    pub overflow_accounting: bool,
}

impl TruncationPolicy {
    pub fn with_mass_cap(mass_cap: u32) -> Self {
        Self { mass_cap, ..Self::default() }
    }

    pub fn admits(&self, p: &ParticleType) -> bool {
        p.m <= self.mass_cap && self.arm_cap.is_none_or(|cap| p.a <= cap && p.b <= cap)
    }

    pub fn doubled(&self) -> Self {
        Self {
            mass_cap: self.mass_cap * 2,
            arm_cap: self.arm_cap.map(|c| c * 2),
            overflow_accounting: self.overflow_accounting,
        }
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { mass_cap: 64, arm_cap: None, overflow_accounting: true }
    }
}

/// Loss term used by the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsForm {
    /// `c(p) Σ_{p'} p.p' c(p')`.
    Full,
    /// `(a+b)/(1+t) c(p)`, valid for unit arm moments before the critical time.
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub form: RhsForm,
    /// Nominal RK4 step.
    pub step: f64,
    /// Halving stops (with an error) below this step.
    pub min_step: f64,
    /// Values in `[-clamp_tol, 0)` are set to zero; anything lower forces a smaller step.
    pub clamp_tol: f64,
    /// Extra output times in `[0, t_end]`.
    pub checkpoints: Vec<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { form: RhsForm::Full, step: 1e-3, min_step: 1e-12, clamp_tol: 1e-12, checkpoints: Vec::new() }
    }
}

/// Aggregate moments of a population.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub count: f64,
    pub male: f64,
    pub female: f64,
    pub mass: f64,
    pub male_sq: f64,
    pub male_female: f64,
    pub female_sq: f64,
}

impl Moments {
    fn from_basis(v: &[f64]) -> Self {
        Self { count: v[0], male: v[1], female: v[2], mass: v[3], male_sq: v[4], male_female: v[5], female_sq: v[6] }
    }

    pub fn of_state(c: &ConcentrationState) -> Self {
        let mut v = [0.0; BASIS_LEN];
        for (p, x) in c.iter() {
            for (slot, b) in v.iter_mut().zip(reservoir::basis_values(p)) {
                *slot += x * b;
            }
        }
        Self::from_basis(&v)
    }

    /// `<a² - a>`.
    pub fn male_factorial2(&self) -> f64 {
        self.male_sq - self.male
    }

    /// `<b² - b>`.
    pub fn female_factorial2(&self) -> f64 {
        self.female_sq - self.female
    }

    pub fn plus(&self, o: &Self) -> Self {
        Self {
            count: self.count + o.count,
            male: self.male + o.male,
            female: self.female + o.female,
            mass: self.mass + o.mass,
            male_sq: self.male_sq + o.male_sq,
            male_female: self.male_female + o.male_female,
            female_sq: self.female_sq + o.female_sq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ConcentrationState,
    /// Moments of the tracked types.
    pub retained: Moments,
    /// Moments of the overflow reservoir (inflow only when accounting is off).
    pub lost: Moments,
}

impl Checkpoint {
    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn total(&self) -> Moments {
        self.retained.plus(&self.lost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy: TruncationPolicy,
    pub types: Vec<ParticleType>,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(Checkpoint::time).collect()
    }

    pub fn at(&self, t: f64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| (c.time() - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory has at least the initial checkpoint")
    }
}

/// Right-hand side of the full system at `c`, keyed by tracked type.
pub fn rhs_full(c: &ConcentrationState, policy: &TruncationPolicy) -> BTreeMap<ParticleType, f64> {
    evaluate_rhs(c, 0.0, policy, RhsForm::Full)
}

/// Right-hand side with the loss term replaced by `(a+b)/(1+t) c(p)`.
pub fn rhs_reduced(c: &ConcentrationState, t: f64, policy: &TruncationPolicy) -> BTreeMap<ParticleType, f64> {
    evaluate_rhs(c, t, policy, RhsForm::Reduced)
}

fn evaluate_rhs(c: &ConcentrationState, t: f64, policy: &TruncationPolicy, form: RhsForm) -> BTreeMap<ParticleType, f64> {
    let system = TruncatedSystem::new(c.support(), *policy);
    let y = system.pack(c);
    let mut dy = vec![0.0; y.len()];
    system.rhs(t, &y, form, &mut dy);
    system.types().iter().copied().zip(dy).collect()
}

fn output_times(t_end: f64, extra: &[f64]) -> Result<Vec<f64>, OdeError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(OdeError::InvalidTime(t_end));
    }
    let mut times = vec![0.0, t_end];
    for &t in extra {
        if !(t >= 0.0 && t <= t_end) {
            return Err(OdeError::InvalidTime(t));
        }
        times.push(t);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Integrates from `c0` up to `t_end` with fixed-step RK4, halving the step
/// whenever a stage produces a non-finite value or a concentration below
/// `-clamp_tol`.
pub fn integrate(
    c0: &ConcentrationState,
    t_end: f64,
    policy: &TruncationPolicy,
    settings: &SolverSettings,
) -> Result<Trajectory, OdeError> {
    let system = TruncatedSystem::new(c0.support(), *policy);
    integrate_system(&system, c0, t_end, settings)
}

pub fn integrate_system(
    system: &TruncatedSystem,
    c0: &ConcentrationState,
    t_end: f64,
    settings: &SolverSettings,
) -> Result<Trajectory, OdeError> {
    if !(settings.step > 0.0) || !(settings.min_step > 0.0) || settings.min_step > settings.step {
        return Err(OdeError::InvalidSettings(format!("step {} / min_step {}", settings.step, settings.min_step)));
    }
    let times = output_times(t_end, &settings.checkpoints)?;
    let k = system.types().len();
    let mut y = system.pack(c0);
    let mut stepper = Rk4::new(y.len());
    let mut t = 0.0;
    let mut checkpoints = Vec::with_capacity(times.len());

    for &target in &times {
        while t < target {
            let mut h = settings.step.min(target - t);
            loop {
                let ok = stepper.step(system, settings.form, t, &y, h);
                if ok {
                    match clamp(&mut stepper.out[..k], settings.clamp_tol) {
                        Ok(()) => break,
                        Err((i, value)) => {
                            if h / 2.0 < settings.min_step {
                                return Err(OdeError::Negativity { time: t + h, particle: system.types()[i], value });
                            }
                        }
                    }
                } else if h / 2.0 < settings.min_step {
                    return Err(OdeError::StepUnderflow { time: t, step: h });
                }
                h /= 2.0;
            }
            std::mem::swap(&mut y, &mut stepper.out);
            t = if target - (t + h) <= f64::EPSILON * target.max(1.0) { target } else { t + h };
        }
        let state = system.unpack(&y, target);
        checkpoints.push(Checkpoint {
            retained: Moments::of_state(&state),
            lost: Moments::from_basis(&y[k..]),
            state,
        });
    }
    Ok(Trajectory { policy: *system.policy(), types: system.types().to_vec(), checkpoints })
}

fn clamp(values: &mut [f64], tol: f64) -> Result<(), (usize, f64)> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < -tol) {
        return Err((i, *v));
    }
    values.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v = 0.0);
    Ok(())
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    out: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n], out: vec![0.0; n] }
    }

    /// Writes the step result into `out`; returns false on a non-finite value.
    fn step(&mut self, system: &TruncatedSystem, form: RhsForm, t: f64, y: &[f64], h: f64) -> bool {
        system.rhs(t, y, form, &mut self.k1);
        axpy(&mut self.tmp, y, 0.5 * h, &self.k1);
        system.rhs(t + 0.5 * h, &self.tmp, form, &mut self.k2);
        axpy(&mut self.tmp, y, 0.5 * h, &self.k2);
        system.rhs(t + 0.5 * h, &self.tmp, form, &mut self.k3);
        axpy(&mut self.tmp, y, h, &self.k3);
        system.rhs(t + h, &self.tmp, form, &mut self.k4);
        for (i, out) in self.out.iter_mut().enumerate() {
            *out = y[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        self.out.iter().all(|v| v.is_finite())
    }
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
    for ((o, a), b) in out.iter_mut().zip(y).zip(k) {
        *o = a + h * b;
    }
}

/// Empirical truncation error: the same run with doubled caps, compared on the
/// final checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationEstimate {
    /// Largest concentration difference over the base run's tracked types.
    pub sup_concentration: f64,
    /// Largest difference among the total (retained + lost) moments.
    pub sup_moment: f64,
}

pub fn estimate_truncation_error(
    c0: &ConcentrationState,
    t_end: f64,
    policy: &TruncationPolicy,
    settings: &SolverSettings,
) -> Result<TruncationEstimate, OdeError> {
    let base = integrate(c0, t_end, policy, settings)?;
    let fine = integrate(c0, t_end, &policy.doubled(), settings)?;
    let (b, f) = (base.last(), fine.last());
    let sup_concentration =
        base.types.iter().map(|p| (b.state.get(p) - f.state.get(p)).abs()).fold(0.0, f64::max);
    let (mb, mf) = (b.total(), f.total());
    let sup_moment = [
        mb.count - mf.count,
        mb.male - mf.male,
        mb.female - mf.female,
        mb.mass - mf.mass,
        mb.male_sq - mf.male_sq,
        mb.male_female - mf.male_female,
        mb.female_sq - mf.female_sq,
    ]
    .iter()
    .map(|d| d.abs())
    .fold(0.0, f64::max);
    Ok(TruncationEstimate { sup_concentration, sup_moment })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: u32, b: u32, m: u32) -> ParticleType {
        ParticleType::new(a, b, m).unwrap()
    }

    fn state(pairs: &[(ParticleType, f64)]) -> ConcentrationState {
        ConcentrationState::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn rhs_full_examples() {
        let c = state(&[(p(1, 1, 1), 1.0)]);
        let r = rhs_full(&c, &TruncationPolicy::default());
        assert_eq!(r[&p(1, 1, 1)], -2.0);
        // brute force over decompositions of (1,1,2): only (1,1,1)+(1,1,1) has weight
        let gain: f64 = p(1, 1, 2)
            .decompositions(true)
            .iter()
            .map(|(x, y)| 0.5 * x.rate(y) as f64 * c.get(x) * c.get(y))
            .sum();
        assert_eq!(gain, 1.0);
        assert_eq!(r[&p(1, 1, 2)], gain);

        let inert = state(&[(p(0, 0, 5), 3.0)]);
        assert!(rhs_full(&inert, &TruncationPolicy::default()).values().all(|v| *v == 0.0));
    }

    #[test]
    fn rhs_reduced_examples() {
        let c = state(&[(p(1, 1, 1), 1.0)]);
        assert_eq!(rhs_reduced(&c, 0.0, &TruncationPolicy::default())[&p(1, 1, 1)], -2.0);
        assert!(rhs_reduced(&ConcentrationState::new(0.0), 3.0, &TruncationPolicy::default()).is_empty());
    }

    #[test]
    fn rhs_matches_brute_force_system() {
        let c = state(&[(p(2, 0, 1), 0.3), (p(0, 1, 1), 0.4), (p(1, 1, 1), 0.2), (p(1, 2, 2), 0.05)]);
        let policy = TruncationPolicy::with_mass_cap(6);
        let r = rhs_full(&c, &policy);
        let male = c.male_arms();
        let female = c.female_arms();
        for (q, value) in &r {
            let gain: f64 =
                q.decompositions(true).iter().map(|(x, y)| 0.5 * x.rate(y) as f64 * c.get(x) * c.get(y)).sum();
            let loss = c.get(q) * (q.a as f64 * female + q.b as f64 * male);
            assert!((value - (gain - loss)).abs() < 1e-14, "{q}");
        }
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let c0 = state(&[(p(1, 1, 1), 1.0)]);
        let traj = integrate(&c0, 0.0, &TruncationPolicy::default(), &SolverSettings::default()).unwrap();
        assert_eq!(traj.checkpoints.len(), 1);
        assert_eq!(traj.last().state.get(&p(1, 1, 1)), 1.0);
        assert_eq!(traj.last().state.get(&p(1, 1, 2)), 0.0);
    }

    #[test]
    fn monodisperse_chain_matches_closed_form() {
        let c0 = state(&[(p(1, 1, 1), 1.0)]);
        let traj = integrate(&c0, 1.0, &TruncationPolicy::default(), &SolverSettings::default()).unwrap();
        let last = traj.last();
        for m in 1..=20 {
            let exact = 1.0 / 2f64.powi(m as i32 + 1);
            assert!((last.state.get(&p(1, 1, m)) - exact).abs() <= 1e-8, "m={m}");
        }
    }

    #[test]
    fn pair_annihilation_matches_closed_form() {
        let c0 = state(&[(p(1, 0, 1), 1.0), (p(0, 1, 1), 1.0)]);
        let traj = integrate(&c0, 3.0, &TruncationPolicy::default(), &SolverSettings::default()).unwrap();
        assert!((traj.last().state.get(&p(0, 0, 2)) - 0.75).abs() <= 1e-10);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let c0 = state(&[(p(1, 1, 1), 1.0)]);
        let policy = TruncationPolicy::default();
        assert!(matches!(integrate(&c0, -1.0, &policy, &SolverSettings::default()), Err(OdeError::InvalidTime(_))));
        let bad = SolverSettings { step: 0.0, ..SolverSettings::default() };
        assert!(matches!(integrate(&c0, 1.0, &policy, &bad), Err(OdeError::InvalidSettings(_))));
        let outside = SolverSettings { checkpoints: vec![2.0], ..SolverSettings::default() };
        assert!(matches!(integrate(&c0, 1.0, &policy, &outside), Err(OdeError::InvalidTime(_))));
    }

    #[test]
    fn blow_up_surfaces_as_step_underflow() {
        // far past the critical time of the 3-arm family without accounting feedback
        // the reservoir moments explode
        let c0 = state(&[(p(3, 0, 1), 1.0 / 3.0), (p(0, 3, 1), 1.0 / 3.0)]);
        let settings = SolverSettings { step: 0.05, min_step: 1e-4, ..SolverSettings::default() };
        let err = integrate(&c0, 5.0, &TruncationPolicy::with_mass_cap(4), &settings).unwrap_err();
        assert!(matches!(err, OdeError::StepUnderflow { .. } | OdeError::Negativity { .. }), "{err:?}");
    }

    #[test]
    fn arm_cap_diverts_flux_to_reservoir() {
        let c0 = state(&[(p(3, 0, 1), 1.0 / 3.0), (p(0, 3, 1), 1.0 / 3.0)]);
        let policy = TruncationPolicy { mass_cap: 8, arm_cap: Some(3), overflow_accounting: true };
        let traj = integrate(&c0, 0.5, &policy, &SolverSettings::default()).unwrap();
        assert!(traj.types.iter().all(|q| q.a <= 3 && q.b <= 3));
        let last = traj.last();
        assert!(last.lost.mass > 0.0);
        assert!((last.total().mass - 2.0 / 3.0).abs() < 1e-12);
    }
}
