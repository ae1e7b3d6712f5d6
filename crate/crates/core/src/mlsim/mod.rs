//! Marcus-Lushnikov particle system.
//!
//! Every unordered pair of particle instances `{i, j}` coagulates at rate
//! `a_i b_j + a_j b_i`, so the total rate is `Λ = (Σa)(Σb) - Σ ab`. Time is
//! reported on the rescaled axis, where the clock runs at `Λ / n` and `η / n`
//! approximates the concentrations.

mod fenwick;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConcentrationState, ParticleType};
use crate::ode::Trajectory;
use crate::rng::replicate_rng;
pub use fenwick::Fenwick;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("initial state violates the bound Σ(a+b+m)η = {load} > {bound} n")]
    BoundViolation { load: u128, bound: f64 },
    #[error("n must be positive")]
    ZeroScale,
    #[error("invalid time {0}")]
    InvalidTime(f64),
    #[error("checkpoint grids differ: {0}")]
    GridMismatch(String),
    #[error("cannot scale concentration {value} of {particle} to a count")]
    InvalidConcentration { particle: ParticleType, value: f64 },
}

/// One coagulation: `first ∘ second = product`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub first: ParticleType,
    pub second: ParticleType,
    pub product: ParticleType,
}

/// Instance-level state with arm-weighted prefix sums for pair sampling.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    n: u64,
    slots: Vec<Option<ParticleType>>,
    male: Fenwick,
    female: Fenwick,
    counts: BTreeMap<ParticleType, u64>,
    male_total: u64,
    female_total: u64,
    cross_total: u64,
    particles: u64,
    mass: u64,
}

impl ParticleSystem {
    pub fn new(counts: &BTreeMap<ParticleType, u64>, n: u64) -> Result<Self, SimulationError> {
        if n == 0 {
            return Err(SimulationError::ZeroScale);
        }
        let mut slots = Vec::new();
        for (p, &k) in counts {
            slots.extend(std::iter::repeat_n(Some(*p), k as usize));
        }
        let male = Fenwick::from_weights(slots.iter().map(|p| p.map_or(0, |p| p.a as u64)).collect());
        let female = Fenwick::from_weights(slots.iter().map(|p| p.map_or(0, |p| p.b as u64)).collect());
        let counts: BTreeMap<ParticleType, u64> = counts.iter().filter(|(_, k)| **k > 0).map(|(p, k)| (*p, *k)).collect();
        let sum = |f: &dyn Fn(&ParticleType) -> u64| counts.iter().map(|(p, k)| f(p) * k).sum::<u64>();
        Ok(Self {
            n,
            male_total: sum(&|p| p.a as u64),
            female_total: sum(&|p| p.b as u64),
            cross_total: sum(&|p| p.a as u64 * p.b as u64),
            particles: sum(&|_| 1),
            mass: sum(&|p| p.m as u64),
            slots,
            male,
            female,
            counts,
        })
    }

    /// Counts `round(n c(p))`.
    pub fn from_concentrations(c: &ConcentrationState, n: u64) -> Result<Self, SimulationError> {
        let mut counts = BTreeMap::new();
        for (p, value) in c.iter() {
            let scaled = (value * n as f64).round();
            if !scaled.is_finite() || scaled < 0.0 || scaled > u32::MAX as f64 {
                return Err(SimulationError::InvalidConcentration { particle: *p, value: *value });
            }
            if scaled > 0.0 {
                counts.insert(*p, scaled as u64);
            }
        }
        Self::new(&counts, n)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<ParticleType, u64> {
        &self.counts
    }

    pub fn male_arms(&self) -> u64 {
        self.male_total
    }

    pub fn female_arms(&self) -> u64 {
        self.female_total
    }

    pub fn particle_count(&self) -> u64 {
        self.particles
    }

    pub fn mass(&self) -> u64 {
        self.mass
    }

    /// `Σ (a+b+m) η`.
    pub fn load(&self) -> u128 {
        (self.male_total + self.female_total + self.mass) as u128
    }

    /// Checks `Σ (a+b+m) η <= bound · n`.
    pub fn check_bound(&self, bound: f64) -> Result<(), SimulationError> {
        if self.load() as f64 > bound * self.n as f64 {
            return Err(SimulationError::BoundViolation { load: self.load(), bound });
        }
        Ok(())
    }

    /// `Λ = (Σa)(Σb) - Σ ab`, the total rate of the unscaled process.
    pub fn total_rate(&self) -> u128 {
        self.male_total as u128 * self.female_total as u128 - self.cross_total as u128
    }

    pub fn concentrations(&self, time: f64) -> ConcentrationState {
        let mut c = ConcentrationState::new(time);
        for (p, k) in &self.counts {
            c.insert_unchecked(*p, *k as f64 / self.n as f64);
        }
        c
    }

    /// Picks the coagulating instances: a male arm and a female arm uniformly,
    /// redrawn while both sit on the same instance.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> Option<(usize, usize)> {
        if self.total_rate() == 0 {
            return None;
        }
        loop {
            let i = self.male.find(rng.random_range(0..self.male_total));
            let j = self.female.find(rng.random_range(0..self.female_total));
            if i != j {
                return Some((i, j));
            }
        }
    }

    pub fn slot(&self, i: usize) -> Option<ParticleType> {
        self.slots[i]
    }

    /// Merges instance `j` into instance `i`.
    pub fn apply(&mut self, i: usize, j: usize) -> Event {
        let first = self.slots[i].expect("live instance");
        let second = self.slots[j].expect("live instance");
        let product = first.merge(&second).expect("sampled pairs have a positive rate");
        self.slots[i] = Some(product);
        self.slots[j] = None;
        self.male.set(i, product.a as u64);
        self.male.set(j, 0);
        self.female.set(i, product.b as u64);
        self.female.set(j, 0);
        for p in [first, second] {
            let k = self.counts.get_mut(&p).expect("counted type");
            *k -= 1;
            if *k == 0 {
                self.counts.remove(&p);
            }
        }
        *self.counts.entry(product).or_insert(0) += 1;
        self.male_total -= 1;
        self.female_total -= 1;
        let ab = |p: &ParticleType| p.a as u64 * p.b as u64;
        self.cross_total = self.cross_total + ab(&product) - ab(&first) - ab(&second);
        self.particles -= 1;
        #[cfg(debug_assertions)]
        self.assert_cache();
        Event { first, second, product }
    }

    #[cfg(debug_assertions)]
    fn assert_cache(&self) {
        let sum = |f: &dyn Fn(&ParticleType) -> u64| self.counts.iter().map(|(p, k)| f(p) * k).sum::<u64>();
        debug_assert_eq!(self.male_total, sum(&|p| p.a as u64));
        debug_assert_eq!(self.female_total, sum(&|p| p.b as u64));
        debug_assert_eq!(self.cross_total, sum(&|p| p.a as u64 * p.b as u64));
        debug_assert_eq!(self.particles, sum(&|_| 1));
        debug_assert_eq!(self.mass, sum(&|p| p.m as u64));
        debug_assert_eq!(self.male.total(), self.male_total);
        debug_assert_eq!(self.female.total(), self.female_total);
    }

    /// Rescaled waiting time `n E / Λ` with `E ~ Exp(1)`; infinite when absorbed.
    pub fn waiting_time<R: Rng>(&self, rng: &mut R) -> f64 {
        let rate = self.total_rate();
        if rate == 0 {
            return f64::INFINITY;
        }
        let e: f64 = rng.sample(Exp1);
        e * self.n as f64 / rate as f64
    }

    /// Draws a waiting time and performs one event; `None` when absorbed.
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> Option<(Event, f64)> {
        let wait = self.waiting_time(rng);
        let (i, j) = self.sample_pair(rng)?;
        Some((self.apply(i, j), wait))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: u64,
    pub t_end: f64,
    /// Extra rescaled output times in `[0, t_end]`.
    pub checkpoints: Vec<f64>,
    pub seed: u64,
    /// Optional `M` in `Σ(a+b+m)η <= M n`, checked at initialization.
    pub load_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCheckpoint {
    pub time: f64,
    pub counts: BTreeMap<ParticleType, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalTotals {
    pub particles: u64,
    pub male_arms: u64,
    pub female_arms: u64,
    pub mass: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub n: u64,
    pub seed: u64,
    pub events: u64,
    pub checkpoints: Vec<EmpiricalCheckpoint>,
    pub final_totals: FinalTotals,
}

impl EmpiricalCheckpoint {
    /// `C^n_t(p) = η(p) / n`.
    pub fn concentration(&self, p: &ParticleType, n: u64) -> f64 {
        self.counts.get(p).copied().unwrap_or(0) as f64 / n as f64
    }

    pub fn state(&self, n: u64) -> ConcentrationState {
        let mut c = ConcentrationState::new(self.time);
        for (p, k) in &self.counts {
            c.insert_unchecked(*p, *k as f64 / n as f64);
        }
        c
    }
}

fn output_times(t_end: f64, extra: &[f64]) -> Result<Vec<f64>, SimulationError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(SimulationError::InvalidTime(t_end));
    }
    let mut times = vec![0.0, t_end];
    for &t in extra {
        if !(t >= 0.0 && t <= t_end) {
            return Err(SimulationError::InvalidTime(t));
        }
        times.push(t);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Runs the system from `counts` up to rescaled time `t_end`, recording `η`
/// at every output time. The result depends only on the inputs and the seed.
pub fn run(counts: &BTreeMap<ParticleType, u64>, cfg: &SimulationConfig) -> Result<SimulationRun, SimulationError> {
    let mut system = ParticleSystem::new(counts, cfg.n)?;
    if let Some(bound) = cfg.load_bound {
        system.check_bound(bound)?;
    }
    run_system(&mut system, cfg)
}

pub fn run_system(system: &mut ParticleSystem, cfg: &SimulationConfig) -> Result<SimulationRun, SimulationError> {
    let times = output_times(cfg.t_end, &cfg.checkpoints)?;
    let mut rng = replicate_rng(cfg.seed, 0);
    let mut events = 0;
    let mut next = system.waiting_time(&mut rng);
    let mut checkpoints = Vec::with_capacity(times.len());
    for &target in &times {
        while next <= target {
            let (i, j) = system.sample_pair(&mut rng).expect("finite waiting time implies a positive rate");
            system.apply(i, j);
            events += 1;
            next += system.waiting_time(&mut rng);
        }
        checkpoints.push(EmpiricalCheckpoint { time: target, counts: system.counts().clone() });
    }
    Ok(SimulationRun {
        n: system.n(),
        seed: cfg.seed,
        events,
        checkpoints,
        final_totals: FinalTotals {
            particles: system.particle_count(),
            male_arms: system.male_arms(),
            female_arms: system.female_arms(),
            mass: system.mass(),
        },
    })
}

/// `sup_{p ∈ tracked} |C^n_t(p) - c_t(p)|` at each checkpoint.
pub fn empirical_error(
    run: &SimulationRun,
    reference: &Trajectory,
    tracked: &[ParticleType],
) -> Result<Vec<f64>, SimulationError> {
    let ours: Vec<f64> = run.checkpoints.iter().map(|c| c.time).collect();
    let theirs = reference.times();
    if ours.len() != theirs.len() || ours.iter().zip(&theirs).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(SimulationError::GridMismatch(format!("{ours:?} vs {theirs:?}")));
    }
    Ok(run
        .checkpoints
        .iter()
        .zip(&reference.checkpoints)
        .map(|(emp, det)| {
            tracked.iter().map(|p| (emp.concentration(p, run.n) - det.state.get(p)).abs()).fold(0.0, f64::max)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: u32, b: u32, m: u32) -> ParticleType {
        ParticleType::new(a, b, m).unwrap()
    }

    fn system(pairs: &[(ParticleType, u64)], n: u64) -> ParticleSystem {
        ParticleSystem::new(&pairs.iter().copied().collect(), n).unwrap()
    }

    #[test]
    fn total_rate_examples() {
        assert_eq!(system(&[(p(1, 0, 1), 1), (p(0, 1, 1), 1)], 1).total_rate(), 1);
        assert_eq!(system(&[(p(1, 1, 1), 2)], 1).total_rate(), 2);
        assert_eq!(system(&[(p(3, 2, 1), 1)], 1).total_rate(), 0);
    }

    #[test]
    fn step_examples() {
        let mut rng = replicate_rng(1, 0);
        let mut s = system(&[(p(1, 0, 1), 1), (p(0, 1, 1), 1)], 1);
        let (event, wait) = s.step(&mut rng).unwrap();
        assert_eq!(event.product, p(0, 0, 2));
        assert!(wait > 0.0);
        assert_eq!(s.counts(), &[(p(0, 0, 2), 1)].into_iter().collect());

        let mut s = system(&[(p(1, 1, 1), 2)], 1);
        assert_eq!(s.step(&mut rng).unwrap().0.product, p(1, 1, 2));

        let mut s = system(&[(p(2, 0, 1), 1), (p(0, 0, 5), 7)], 1);
        assert_eq!(s.total_rate(), 0);
        assert!(s.step(&mut rng).is_none());
    }

    #[test]
    fn mean_waiting_time_is_n_over_rate() {
        let mut rng = replicate_rng(9, 0);
        for n in [1u64, 2] {
            let s = system(&[(p(1, 0, 1), 1), (p(0, 1, 1), 1)], n);
            let draws = 200_000;
            let mean: f64 = (0..draws).map(|_| s.waiting_time(&mut rng)).sum::<f64>() / draws as f64;
            // Exp(1) has standard deviation 1, so 5σ of the mean is 5n/sqrt(draws)
            assert!((mean - n as f64).abs() < 5.0 * n as f64 / (draws as f64).sqrt(), "n={n} mean={mean}");
        }
    }

    #[test]
    fn events_conserve_mass_and_consume_one_arm_pair() {
        let mut rng = replicate_rng(5, 0);
        let mut s = system(&[(p(2, 1, 1), 20), (p(1, 0, 1), 15), (p(0, 2, 1), 12), (p(1, 1, 1), 9)], 10);
        let mass = s.mass();
        while s.total_rate() > 0 {
            let (a, b, k) = (s.male_arms(), s.female_arms(), s.particle_count());
            s.step(&mut rng).unwrap();
            assert_eq!((s.male_arms(), s.female_arms(), s.particle_count()), (a - 1, b - 1, k - 1));
            assert_eq!(s.mass(), mass);
        }
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let counts: BTreeMap<_, _> = [(p(1, 1, 1), 100)].into_iter().collect();
        let cfg = SimulationConfig { n: 100, t_end: 0.0, checkpoints: vec![], seed: 1, load_bound: None };
        let run = run(&counts, &cfg).unwrap();
        assert_eq!(run.events, 0);
        assert_eq!(run.checkpoints.len(), 1);
        assert_eq!(run.checkpoints[0].counts, counts);
    }

    #[test]
    fn load_bound_enforced() {
        let counts: BTreeMap<_, _> = [(p(1, 1, 1), 100)].into_iter().collect();
        let cfg = SimulationConfig { n: 100, t_end: 1.0, checkpoints: vec![], seed: 1, load_bound: Some(2.0) };
        assert!(matches!(run(&counts, &cfg), Err(SimulationError::BoundViolation { .. })));
        let ok = SimulationConfig { load_bound: Some(3.0), ..cfg };
        assert!(run(&counts, &ok).is_ok());
    }

    #[test]
    fn monodisperse_hydrodynamics() {
        let n = 100_000;
        let counts: BTreeMap<_, _> = [(p(1, 1, 1), n)].into_iter().collect();
        let cfg = SimulationConfig { n, t_end: 1.0, checkpoints: vec![0.5], seed: 11, load_bound: None };
        let run = run(&counts, &cfg).unwrap();
        let last = run.checkpoints.last().unwrap();
        assert!((last.concentration(&p(1, 1, 1), n) - 0.25).abs() < 0.01);
        assert!((run.final_totals.male_arms as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn pair_annihilation_terminal_state() {
        let n = 100_000;
        let c0 = ConcentrationState::from_pairs([(p(1, 0, 1), 0.5), (p(0, 1, 1), 0.5)]).unwrap();
        let mut s = ParticleSystem::from_concentrations(&c0, n).unwrap();
        let cfg = SimulationConfig { n, t_end: 1e6, checkpoints: vec![], seed: 2, load_bound: None };
        let run = run_system(&mut s, &cfg).unwrap();
        let last = run.checkpoints.last().unwrap();
        assert!((last.concentration(&p(0, 0, 2), n) - 0.5).abs() < 0.01);
    }

    #[test]
    fn grid_mismatch_detected() {
        let counts: BTreeMap<_, _> = [(p(1, 1, 1), 10)].into_iter().collect();
        let cfg = SimulationConfig { n: 10, t_end: 1.0, checkpoints: vec![], seed: 1, load_bound: None };
        let run = run(&counts, &cfg).unwrap();
        let c0 = ConcentrationState::from_pairs([(p(1, 1, 1), 1.0)]).unwrap();
        let traj = crate::ode::integrate(
            &c0,
            0.5,
            &crate::ode::TruncationPolicy::default(),
            &crate::ode::SolverSettings::default(),
        )
        .unwrap();
        assert!(empirical_error(&run, &traj, &[p(1, 1, 1)]).is_err());
    }
}
