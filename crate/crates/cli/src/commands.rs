//! Subcommand implementations. Each returns the files it wants written; the
//! caller writes them in one go.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use coag_core::asymptotics::{
    critical_time_is_infinite, detect_degeneracy, gw_progeny_pmf_series, gw_sample_total_progeny,
    limiting_concentrations, GwConfig, LimitState,
};
use coag_core::characteristics::{CriticalData, ExactCriticalData, InitialGf};
use coag_core::measures::{size_biased_laws, Measure2D};
use coag_core::mlsim::{self, ParticleSystem, SimulationConfig, SimulationRun};
use coag_core::ode::{estimate_truncation_error, integrate, Checkpoint};
use coag_core::rng::derive_seed;
use coag_core::{ConcentrationState, ParticleType, Scalar, TypeWeights};
use num_rational::BigRational;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{FromNum, RunConfig};
use crate::error::{config, numerical, CliError};
use crate::output::{Cell, OutputSet, Table};

fn t_c_value(t_c: Option<f64>) -> Value {
    t_c.map_or_else(|| json!("inf"), |t| json!(t))
}

fn normalized_state(cfg: &RunConfig) -> Result<(ConcentrationState, f64), CliError> {
    let (weights, scale) = cfg.normalized_weights::<f64>()?;
    Ok((ConcentrationState::from_weights(&weights).map_err(config)?, scale))
}

fn metadata(cfg: &RunConfig, fields: Value) -> Value {
    let mut meta = json!({ "config": cfg });
    if let (Value::Object(dst), Value::Object(src)) = (&mut meta, fields) {
        dst.extend(src);
    }
    meta
}

/// Critical constants and degeneracy of the normalized initial state.
pub fn analyze(cfg: &RunConfig) -> Result<Value, CliError> {
    let (c0, scale) = normalized_state(cfg)?;
    let mut data = InitialGf::new(&c0).critical_data();
    let weights: TypeWeights<f64> = c0.iter().map(|(p, c)| (*p, *c)).collect();
    let degeneracy = detect_degeneracy(&weights);
    let mut exact = Value::Null;
    if cfg.exact {
        let (w, s) = cfg.normalized_weights::<BigRational>()?;
        let ex = ExactCriticalData::from_weights(&w);
        data = ex.approx;
        let t_c = if ex.infinite { json!("inf") } else { json!(ex.t_c.as_ref().map(ToString::to_string)) };
        exact = json!({
            "alpha": ex.alpha.to_string(),
            "beta": ex.beta.to_string(),
            "gamma": ex.gamma.to_string(),
            "M": ex.m.as_ref().map(ToString::to_string),
            "T_c": t_c,
            "time_scale": s.to_string(),
        });
    }
    let CriticalData { alpha, beta, gamma, m, t_c } = data;
    let mut report = json!({
        "alpha": alpha,
        "beta": beta,
        "gamma": gamma,
        "M": m,
        "T_c": t_c_value(t_c),
        "degenerate": degeneracy.is_some(),
        "degeneracy": degeneracy,
        "time_scale": scale,
    });
    if !exact.is_null() {
        report["exact"] = exact;
    }
    Ok(report)
}

fn push_type_row(table: &mut Table, t: f64, p: &ParticleType, value: f64) {
    table.push(vec![Cell::Float(t), Cell::Int(p.a as u64), Cell::Int(p.b as u64), Cell::Int(p.m as u64), Cell::Float(value)]);
}

fn observables_row(cp: &Checkpoint) -> Vec<Cell> {
    let (r, l) = (&cp.retained, &cp.lost);
    [
        cp.time(),
        r.count,
        r.male,
        r.female,
        r.mass,
        r.male_factorial2(),
        r.female_factorial2(),
        r.male_female,
        l.count,
        l.male,
        l.female,
        l.mass,
        l.male_factorial2(),
        l.female_factorial2(),
        l.male_female,
    ]
    .into_iter()
    .map(Cell::Float)
    .collect()
}

pub const OBSERVABLE_COLUMNS: [&str; 15] = [
    "t",
    "total_conc",
    "mean_a",
    "mean_b",
    "mass",
    "a2_minus_a",
    "b2_minus_b",
    "ab",
    "lost_conc",
    "lost_a",
    "lost_b",
    "lost_mass",
    "lost_a2_minus_a",
    "lost_b2_minus_b",
    "lost_ab",
];

pub fn ode(cfg: &RunConfig) -> Result<OutputSet, CliError> {
    let times = cfg.require_times()?;
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let (c0, scale) = normalized_state(cfg)?;
    let settings = cfg.solver_settings(times);
    let policy = cfg.policy();
    let traj = integrate(&c0, t_end, &policy, &settings).map_err(numerical)?;

    let mut conc = Table::new(&["t", "a", "b", "m", "concentration"]);
    let mut obs = Table::new(&OBSERVABLE_COLUMNS);
    for cp in &traj.checkpoints {
        for p in &traj.types {
            push_type_row(&mut conc, cp.time(), p, cp.state.get(p));
        }
        obs.push(observables_row(cp));
    }
    let estimate = if cfg.solver.estimate_truncation {
        let e = estimate_truncation_error(&c0, t_end, &policy, &settings).map_err(numerical)?;
        json!({ "sup_concentration": e.sup_concentration, "sup_moment": e.sup_moment })
    } else {
        Value::Null
    };
    let mut out = OutputSet::default();
    out.add_table("concentrations", &conc, cfg.output.format);
    out.add_table("observables", &obs, cfg.output.format);
    out.add_json(
        "ode.meta.json",
        &metadata(
            cfg,
            json!({
                "time_scale": scale,
                "tracked_types": traj.types.len(),
                "truncation_estimate": estimate,
            }),
        ),
    );
    Ok(out)
}

fn explicit_rows<S: FromNum>(cfg: &RunConfig, table: &mut Table) -> Result<Option<f64>, CliError> {
    let fam = cfg.family::<S>()?.ok_or_else(|| CliError::Config("explicit needs a family initial condition".into()))?;
    let tol = if cfg.exact { 0.0 } else { 1e-9 };
    fam.validate(tol).map_err(config)?;
    for t in &cfg.t_grid {
        let ts = S::from_num(t)?;
        for (p, v) in fam.table(&ts, cfg.max_mass).map_err(numerical)? {
            push_type_row(table, ts.to_f64(), &p, v.to_f64());
        }
    }
    Ok(fam.critical_time())
}

pub fn explicit(cfg: &RunConfig) -> Result<OutputSet, CliError> {
    cfg.require_times()?;
    let mut table = Table::new(&["t", "a", "b", "m", "value"]);
    let t_c = if cfg.exact {
        explicit_rows::<BigRational>(cfg, &mut table)?
    } else {
        explicit_rows::<f64>(cfg, &mut table)?
    };
    let mut out = OutputSet::default();
    out.add_table("explicit", &table, cfg.output.format);
    out.add_json("explicit.meta.json", &metadata(cfg, json!({ "T_c": t_c_value(t_c), "rows": table.rows.len() })));
    Ok(out)
}

fn simulation_table(run: &SimulationRun) -> Table {
    let mut table = Table::new(&["t", "a", "b", "m", "C_n"]);
    for cp in &run.checkpoints {
        for p in cp.counts.keys() {
            push_type_row(&mut table, cp.time, p, cp.concentration(p, run.n));
        }
    }
    table
}

pub fn simulate(cfg: &RunConfig, timing: bool) -> Result<OutputSet, CliError> {
    let n = cfg.n.ok_or_else(|| CliError::Config("simulate needs n".into()))?;
    let times = cfg.require_times()?;
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let (c0, scale) = normalized_state(cfg)?;
    let start = Instant::now();
    let runs: Vec<SimulationRun> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut system = ParticleSystem::from_concentrations(&c0, n).map_err(config)?;
            if let Some(bound) = cfg.load_bound {
                system.check_bound(bound).map_err(config)?;
            }
            let sim = SimulationConfig {
                n,
                t_end,
                checkpoints: times.clone(),
                seed: derive_seed(cfg.seed, r),
                load_bound: cfg.load_bound,
            };
            mlsim::run_system(&mut system, &sim).map_err(numerical)
        })
        .collect::<Result<_, _>>()?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut out = OutputSet::default();
    if runs.len() == 1 {
        out.add_table("simulation", &simulation_table(&runs[0]), cfg.output.format);
    } else {
        for (r, run) in runs.iter().enumerate() {
            out.add_table(&format!("simulation_rep{r:04}"), &simulation_table(run), cfg.output.format);
        }
        // replicate average, with absent types counted as zero
        let mut mean: BTreeMap<(u64, ParticleType), f64> = BTreeMap::new();
        for run in &runs {
            for cp in &run.checkpoints {
                for p in cp.counts.keys() {
                    *mean.entry((cp.time.to_bits(), *p)).or_insert(0.0) += cp.concentration(p, n);
                }
            }
        }
        let mut rows: Vec<_> = mean.into_iter().collect();
        rows.sort_by(|((ta, pa), _), ((tb, pb), _)| f64::from_bits(*ta).total_cmp(&f64::from_bits(*tb)).then(pa.cmp(pb)));
        let mut table = Table::new(&["t", "a", "b", "m", "C_n"]);
        for ((t, p), sum) in rows {
            push_type_row(&mut table, f64::from_bits(t), &p, sum / runs.len() as f64);
        }
        out.add_table("simulation", &table, cfg.output.format);
    }
    let summaries: Vec<Value> = runs
        .iter()
        .enumerate()
        .map(|(r, run)| json!({ "replicate": r, "seed": run.seed, "events": run.events, "final_totals": run.final_totals }))
        .collect();
    let mut fields = json!({ "n": n, "seed": cfg.seed, "replicates": cfg.replicates, "time_scale": scale, "runs": summaries });
    if timing {
        fields["wall_time_s"] = json!(elapsed);
    }
    out.add_json("simulate.meta.json", &metadata(cfg, fields));
    Ok(out)
}

/// `μ(a,b)` of a monodisperse initial state, or a config error.
fn arm_law<S: Scalar>(weights: &TypeWeights<S>) -> Result<Measure2D<S>, CliError> {
    if let Some(p) = weights.keys().find(|p| p.m != 1) {
        return Err(CliError::Config(format!("Galton-Watson quantities need a monodisperse initial state (found {p})")));
    }
    Measure2D::from_pairs(weights.iter().map(|(p, c)| ((p.a, p.b), c.clone()))).map_err(config)
}

struct LimitTables {
    c_inf: Vec<f64>,
    pmf: Option<Vec<f64>>,
    summary: Value,
}

fn limit_tables<S: FromNum>(cfg: &RunConfig, with_pmf: bool) -> Result<LimitTables, CliError> {
    let (weights, _) = cfg.normalized_weights::<S>()?;
    let n = cfg.max_mass;
    let limit: LimitState<S> = limiting_concentrations(&weights, n).map_err(numerical)?;
    let pmf = if with_pmf {
        let mu = arm_law(&weights)?;
        let tol = if cfg.exact { 0.0 } else { 1e-9 };
        let (nu_m, nu_f) = size_biased_laws(&mu, tol).map_err(numerical)?;
        Some(gw_progeny_pmf_series(&nu_m, &nu_f, n).map_err(numerical)?)
    } else {
        None
    };
    let initial_total = S::sum_terms(weights.values().cloned().collect());
    let initial_mass = S::sum_terms(weights.iter().map(|(p, c)| c.clone() * S::from_u64(p.m as u64)).collect());
    let mut summary = json!({
        "max_mass": n,
        "degenerate": limit.degeneracy.is_some(),
        "degeneracy": limit.degeneracy,
        "total": limit.total.to_f64(),
        "expected_total": (initial_total.clone() - S::one()).to_f64(),
        "mass": limit.mass.to_f64(),
        "initial_mass": initial_mass.to_f64(),
    });
    if cfg.exact {
        summary["exact_c_inf"] = limit.c_inf.iter().map(|(m, c)| (m.to_string(), json!(c.text()))).collect();
        if let Some(p) = &pmf {
            summary["exact_pmf_series"] = (1..=n).map(|m| (m.to_string(), json!(p[m as usize].text()))).collect();
        }
    }
    Ok(LimitTables {
        c_inf: (1..=n).map(|m| limit.get(m).to_f64()).collect(),
        pmf: pmf.map(|p| (1..=n).map(|m| p[m as usize].to_f64()).collect()),
        summary,
    })
}

fn compute_limit(cfg: &RunConfig, with_pmf: bool) -> Result<LimitTables, CliError> {
    if cfg.exact {
        limit_tables::<BigRational>(cfg, with_pmf)
    } else {
        limit_tables::<f64>(cfg, with_pmf)
    }
}

fn is_monodisperse(cfg: &RunConfig) -> Result<bool, CliError> {
    Ok(cfg.raw_weights::<f64>()?.keys().all(|p| p.m == 1))
}

pub fn limit(cfg: &RunConfig) -> Result<OutputSet, CliError> {
    let tables = compute_limit(cfg, is_monodisperse(cfg)?)?;
    let mut table = match tables.pmf {
        Some(_) => Table::new(&["m", "c_inf", "pmf_series"]),
        None => Table::new(&["m", "c_inf"]),
    };
    for (i, c) in tables.c_inf.iter().enumerate() {
        let mut row = vec![Cell::Int(i as u64 + 1), Cell::Float(*c)];
        if let Some(p) = &tables.pmf {
            row.push(Cell::Float(p[i]));
        }
        table.push(row);
    }
    let mut out = OutputSet::default();
    out.add_table("limit", &table, cfg.output.format);
    out.add_json("limit.meta.json", &metadata(cfg, tables.summary));
    Ok(out)
}

pub fn gw(cfg: &RunConfig) -> Result<OutputSet, CliError> {
    let (weights, _) = cfg.normalized_weights::<f64>()?;
    let mu = arm_law(&weights)?;
    let (nu_m, nu_f) = size_biased_laws(&mu, 1e-9).map_err(numerical)?;
    let sample = gw_sample_total_progeny(&GwConfig {
        nu_m,
        nu_f,
        max_population: cfg.gw.max_population,
        replicates: cfg.gw.replicates,
        seed: cfg.seed,
    })
    .map_err(numerical)?;
    let censored = sample.censored_fraction();
    let limit = if critical_time_is_infinite(&weights) { Some(compute_limit(cfg, true)?) } else { None };

    let mut table = match limit {
        Some(_) => Table::new(&["m", "c_inf", "pmf_series", "pmf_sampled", "censored_fraction"]),
        None => Table::new(&["m", "pmf_sampled", "censored_fraction"]),
    };
    for m in 1..=cfg.max_mass {
        let i = m as usize - 1;
        let mut row = vec![Cell::Int(m as u64)];
        if let Some(l) = &limit {
            row.push(Cell::Float(l.c_inf[i]));
            row.push(Cell::Float(l.pmf.as_ref().expect("monodisperse")[i]));
        }
        row.push(Cell::Float(sample.pmf(m as u64)));
        row.push(Cell::Float(censored));
        table.push(row);
    }
    let beyond: u64 = sample.counts.range(cfg.max_mass as u64 + 1..).map(|(_, k)| k).sum();
    let mut fields = json!({
        "seed": cfg.seed,
        "replicates": sample.replicates,
        "max_population": cfg.gw.max_population,
        "censored": sample.censored,
        "censored_fraction": censored,
        "finished_beyond_max_mass": beyond,
    });
    if let Some(l) = limit {
        fields["limit"] = l.summary;
    }
    let mut out = OutputSet::default();
    out.add_table("gw", &table, cfg.output.format);
    out.add_json("gw.meta.json", &metadata(cfg, fields));
    Ok(out)
}

const KEYS: [&str; 4] = ["t", "a", "b", "m"];

type Key = (u64, u64, u64, u64);

fn read_keyed(path: &Path) -> Result<HashMap<Key, f64>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(config)?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let keys: Vec<usize> = KEYS
        .iter()
        .map(|k| position(k).ok_or_else(|| CliError::Config(format!("{} has no key column {k:?}", path.display()))))
        .collect::<Result<_, _>>()?;
    let value = (0..headers.len())
        .find(|i| !keys.contains(i))
        .ok_or_else(|| CliError::Config(format!("{} has no value column", path.display())))?;
    let mut rows = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(config)?;
        let num = |i: usize| -> Result<f64, CliError> {
            record[i].trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad number {:?} in {}", &record[i], path.display())))
        };
        let t = num(keys[0])?;
        let int = |i: usize| -> Result<u64, CliError> {
            record[i].trim().parse::<u64>().map_err(|_| CliError::Config(format!("bad integer {:?} in {}", &record[i], path.display())))
        };
        let key = ((t + 0.0).to_bits(), int(keys[1])?, int(keys[2])?, int(keys[3])?);
        rows.insert(key, num(value)?);
    }
    Ok(rows)
}

/// Max and mean absolute difference over the shared `(t,a,b,m)` keys.
pub fn compare(first: &Path, second: &Path, tolerance: f64) -> Result<Value, CliError> {
    let a = read_keyed(first)?;
    let b = read_keyed(second)?;
    let diffs: Vec<f64> = a.iter().filter_map(|(k, va)| b.get(k).map(|vb| (va - vb).abs())).collect();
    if diffs.is_empty() {
        return Err(CliError::Config("the files share no (t,a,b,m) keys".into()));
    }
    let max = diffs.iter().copied().fold(0.0, f64::max);
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    Ok(json!({
        "compared": diffs.len(),
        "only_in_first": a.len() - diffs.len(),
        "only_in_second": b.len() - diffs.len(),
        "max_abs_diff": max,
        "mean_abs_diff": mean,
        "tolerance": tolerance,
        "pass": max <= tolerance,
    }))
}
