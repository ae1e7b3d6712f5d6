//! Run configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::Path;

use coag_core::explicit::FamilySpec;
use coag_core::measures::Measure1D;
use coag_core::model::{normalize_weights, DEFAULT_BALANCE_TOL};
use coag_core::ode::{RhsForm, SolverSettings, TruncationPolicy};
use coag_core::scalar::parse_rational;
use coag_core::{ParticleType, Scalar, TypeWeights};
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{config, CliError};

/// A number given either as a JSON number or as text such as `"1/3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Float(f64),
    Text(String),
}

impl Num {
    pub fn to_rational(&self) -> Result<BigRational, CliError> {
        // Display prints the shortest decimal that round-trips, which recovers the
        // literal written in the config for ordinary inputs
        let text = match self {
            Num::Float(x) => format!("{x}"),
            Num::Text(s) => s.clone(),
        };
        parse_rational(&text).ok_or_else(|| CliError::Config(format!("not a finite number: {text:?}")))
    }

    pub fn to_f64(&self) -> Result<f64, CliError> {
        match self {
            Num::Float(x) if x.is_finite() => Ok(*x),
            Num::Float(x) => Err(CliError::Config(format!("not a finite number: {x}"))),
            Num::Text(_) => Ok(self.to_rational()?.to_f64()),
        }
    }
}

/// Conversion of config numbers into a scalar field.
pub trait FromNum: Scalar {
    fn from_num(n: &Num) -> Result<Self, CliError>;

    fn text(&self) -> String;
}

impl FromNum for f64 {
    fn from_num(n: &Num) -> Result<Self, CliError> {
        n.to_f64()
    }

    fn text(&self) -> String {
        self.to_string()
    }
}

impl FromNum for BigRational {
    fn from_num(n: &Num) -> Result<Self, CliError> {
        n.to_rational()
    }

    fn text(&self) -> String {
        self.to_string()
    }
}

/// Weights on `0, 1, 2, ...` as a list, or as an object keyed by the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureConfig {
    List(Vec<Num>),
    Map(BTreeMap<String, Num>),
}

impl MeasureConfig {
    pub fn to_measure<S: FromNum>(&self) -> Result<Measure1D<S>, CliError> {
        let pairs: Vec<(u32, S)> = match self {
            MeasureConfig::List(v) => {
                v.iter().enumerate().map(|(j, w)| Ok((j as u32, S::from_num(w)?))).collect::<Result<_, CliError>>()?
            }
            MeasureConfig::Map(m) => m
                .iter()
                .map(|(k, w)| {
                    let j = k.parse::<u32>().map_err(|_| CliError::Config(format!("measure index {k:?} is not an integer")))?;
                    Ok((j, S::from_num(w)?))
                })
                .collect::<Result<_, CliError>>()?,
        };
        Measure1D::from_pairs(pairs).map_err(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    OneFemale,
    RandomGender,
    TwoGender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub family: FamilyName,
    pub mu1: MeasureConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu2: Option<MeasureConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleEntry {
    pub a: u32,
    pub b: u32,
    pub m: u32,
    pub conc: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Initial {
    Particles(Vec<ParticleEntry>),
    Family(FamilyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default = "default_mass_cap")]
    pub mass_cap: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_cap: Option<u32>,
    #[serde(default = "default_true")]
    pub overflow_accounting: bool,
}

fn default_mass_cap() -> u32 {
    TruncationPolicy::default().mass_cap
}

fn default_true() -> bool {
    true
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { mass_cap: default_mass_cap(), arm_cap: None, overflow_accounting: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_form")]
    pub form: RhsForm,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_clamp_tol")]
    pub clamp_tol: f64,
    /// Also run with doubled caps and report the difference.
    #[serde(default)]
    pub estimate_truncation: bool,
}

fn default_form() -> RhsForm {
    RhsForm::Full
}

fn default_step() -> f64 {
    SolverSettings::default().step
}

fn default_min_step() -> f64 {
    SolverSettings::default().min_step
}

fn default_clamp_tol() -> f64 {
    SolverSettings::default().clamp_tol
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            form: default_form(),
            step: default_step(),
            min_step: default_min_step(),
            clamp_tol: default_clamp_tol(),
            estimate_truncation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GwConfigSection {
    #[serde(default = "default_gw_replicates")]
    pub replicates: u64,
    #[serde(default = "default_max_population")]
    pub max_population: u64,
}

fn default_gw_replicates() -> u64 {
    100_000
}

fn default_max_population() -> u64 {
    coag_core::asymptotics::DEFAULT_MAX_POPULATION
}

impl Default for GwConfigSection {
    fn default() -> Self {
        Self { replicates: default_gw_replicates(), max_population: default_max_population() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub initial: Initial,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub t_grid: Vec<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Largest mass reported by `explicit`, `limit` and `gw`.
    #[serde(default = "default_max_mass")]
    pub max_mass: u32,
    /// Optional `M` in the simulator's bound `Σ(a+b+m)η <= M n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_bound: Option<f64>,
    #[serde(default)]
    pub gw: GwConfigSection,
    #[serde(default)]
    pub output: OutputConfig,
    /// Use exact rational arithmetic where the computation allows it.
    #[serde(default)]
    pub exact: bool,
}

fn default_replicates() -> u64 {
    1
}

fn default_max_mass() -> u32 {
    12
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.truncation.mass_cap == 0 {
            return Err(CliError::Config("truncation.mass_cap must be positive".into()));
        }
        if self.truncation.arm_cap == Some(0) {
            return Err(CliError::Config("truncation.arm_cap must be positive".into()));
        }
        if !(self.solver.step > 0.0) || !(self.solver.min_step > 0.0) || self.solver.min_step > self.solver.step {
            return Err(CliError::Config("solver needs 0 < min_step <= step".into()));
        }
        if self.n == Some(0) {
            return Err(CliError::Config("n must be positive".into()));
        }
        if self.replicates == 0 || self.gw.replicates == 0 {
            return Err(CliError::Config("replicate counts must be positive".into()));
        }
        for t in self.times()? {
            if !(t >= 0.0) {
                return Err(CliError::Config(format!("t_grid entries must be nonnegative (got {t})")));
            }
        }
        if let Initial::Family(f) = &self.initial {
            if (f.family == FamilyName::TwoGender) != f.mu2.is_some() {
                return Err(CliError::Config("mu2 is required for two_gender and only allowed there".into()));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        self.t_grid.iter().map(Num::to_f64).collect()
    }

    /// Output times with 0 first; at least one positive time is required.
    pub fn require_times(&self) -> Result<Vec<f64>, CliError> {
        let times = self.times()?;
        if times.is_empty() {
            return Err(CliError::Config("t_grid must not be empty".into()));
        }
        Ok(times)
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy {
            mass_cap: self.truncation.mass_cap,
            arm_cap: self.truncation.arm_cap,
            overflow_accounting: self.truncation.overflow_accounting,
        }
    }

    pub fn solver_settings(&self, checkpoints: Vec<f64>) -> SolverSettings {
        SolverSettings {
            form: self.solver.form,
            step: self.solver.step,
            min_step: self.solver.min_step,
            clamp_tol: self.solver.clamp_tol,
            checkpoints,
        }
    }

    pub fn family<S: FromNum>(&self) -> Result<Option<FamilySpec<S>>, CliError> {
        let Initial::Family(f) = &self.initial else {
            return Ok(None);
        };
        let mu1 = f.mu1.to_measure()?;
        let spec = match f.family {
            FamilyName::OneFemale => FamilySpec::OneFemaleArm { mu1 },
            FamilyName::RandomGender => FamilySpec::RandomGender { mu1 },
            FamilyName::TwoGender => {
                let mu2 = f.mu2.as_ref().expect("validated").to_measure()?;
                FamilySpec::TwoGender { mu1, mu2 }
            }
        };
        Ok(Some(spec))
    }

    /// Initial weights as given (before normalization).
    pub fn raw_weights<S: FromNum>(&self) -> Result<TypeWeights<S>, CliError> {
        match &self.initial {
            Initial::Particles(entries) => {
                let mut w = TypeWeights::new();
                for e in entries {
                    let p = ParticleType::new(e.a, e.b, e.m).map_err(config)?;
                    let c = S::from_num(&e.conc)?;
                    if c.is_negative() {
                        return Err(CliError::Config(format!("negative concentration for {p}")));
                    }
                    let slot = w.entry(p).or_insert_with(S::zero);
                    *slot = slot.clone() + c;
                }
                w.retain(|_, c| !c.is_zero());
                if w.is_empty() {
                    return Err(CliError::Config("initial condition is empty".into()));
                }
                Ok(w)
            }
            Initial::Family(_) => {
                let fam = self.family::<S>()?.expect("family config");
                let tol = if self.exact { 0.0 } else { 1e-9 };
                fam.validate(tol).map_err(config)?;
                Ok(fam.initial_weights())
            }
        }
    }

    /// Initial weights scaled to unit arm moments, with the scale factor.
    pub fn normalized_weights<S: FromNum>(&self) -> Result<(TypeWeights<S>, S), CliError> {
        let tol = if self.exact { 0.0 } else { DEFAULT_BALANCE_TOL.max(1e-9) };
        normalize_weights(&self.raw_weights::<S>()?, tol).map_err(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_particle_list_and_round_trips() {
        let text = r#"{"initial":[{"a":3,"b":0,"m":1,"conc":"1/3"},{"a":0,"b":3,"m":1,"conc":0.3333333333333333}],
            "truncation":{"mass_cap":32,"arm_cap":16},"t_grid":[0.5,1],"seed":7}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.truncation.arm_cap, Some(16));
        assert_eq!(cfg.times().unwrap(), vec![0.5, 1.0]);
        let again = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn parses_family_with_map_measure() {
        let text = r#"{"initial":{"family":"two_gender","mu1":{"1":1},"mu2":[0,"1"]}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let fam = cfg.family::<BigRational>().unwrap().unwrap();
        assert_eq!(fam.name(), "two_gender");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_json(r#"{"initial":[{"a":1,"b":1,"m":1,"conc":1}],"bogus":1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"initial":[{"a":1,"b":1,"m":1,"conc":1}],"truncation":{"cap":3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"initial":{"family":"one_female","mu1":[0,1],"mu2":[1]}}"#).is_err());
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(Num::Float(0.1).to_rational().unwrap(), BigRational::new(1.into(), 10.into()));
        assert_eq!(Num::Text("2/6".into()).to_rational().unwrap(), BigRational::new(1.into(), 3.into()));
        assert!(Num::Text("x".into()).to_rational().is_err());
    }
}
