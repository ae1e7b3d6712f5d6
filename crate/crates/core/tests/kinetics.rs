use coag_core::asymptotics::limiting_concentrations;
use coag_core::characteristics::{state_generating_function, InitialGf, InversionOptions};
use coag_core::explicit::FamilySpec;
use coag_core::measures::{diamond, Measure1D};
use coag_core::ode::{integrate, Moments, SolverSettings, Trajectory, TruncationPolicy};
use coag_core::{ConcentrationState, ParticleType, TypeWeights};
use num_rational::BigRational;

fn state(entries: &[((u32, u32, u32), f64)]) -> ConcentrationState {
    ConcentrationState::from_pairs(entries.iter().map(|&((a, b, m), c)| (ParticleType { a, b, m }, c))).unwrap()
}

fn family_state(fam: FamilySpec<f64>) -> ConcentrationState {
    fam.validate(1e-12).unwrap();
    ConcentrationState::from_weights(&fam.initial_weights()).unwrap()
}

fn families() -> Vec<(&'static str, ConcentrationState)> {
    vec![
        ("chain", state(&[((1, 1, 1), 1.0)])),
        ("pair", state(&[((1, 0, 1), 1.0), ((0, 1, 1), 1.0)])),
        ("half_half", state(&[((1, 0, 1), 0.5), ((0, 1, 1), 0.5), ((1, 1, 1), 0.5)])),
        ("three_arm", state(&[((3, 0, 1), 1.0 / 3.0), ((0, 3, 1), 1.0 / 3.0)])),
        (
            "one_female",
            family_state(FamilySpec::OneFemaleArm { mu1: Measure1D::from_weights(vec![0.4, 0.3, 0.2, 0.1]).unwrap() }),
        ),
        (
            "random_gender",
            family_state(FamilySpec::RandomGender { mu1: Measure1D::from_weights(vec![0.0, 0.5, 0.0, 0.5]).unwrap() }),
        ),
        (
            "two_gender",
            family_state(FamilySpec::TwoGender {
                mu1: Measure1D::from_weights(vec![0.3, 0.5, 0.1, 0.1]).unwrap(),
                mu2: Measure1D::from_weights(vec![0.3, 0.4, 0.3]).unwrap(),
            }),
        ),
    ]
}

fn run(c0: &ConcentrationState, times: &[f64], mass_cap: u32) -> Trajectory {
    let settings = SolverSettings { checkpoints: times.to_vec(), ..SolverSettings::default() };
    let t_end = times.iter().copied().fold(0.0, f64::max);
    integrate(c0, t_end, &TruncationPolicy::with_mass_cap(mass_cap), &settings).unwrap()
}

/// Grid of times `{0.1, 0.5, 0.9} min(T_c, 10)`.
fn time_grid(gf: &InitialGf) -> Vec<f64> {
    let scale = gf.critical_data().t_c_or_inf().min(10.0);
    [0.1, 0.5, 0.9].iter().map(|f| f * scale).collect()
}

#[test]
fn conservation_along_trajectories() {
    for (name, c0) in families() {
        let gf = InitialGf::new(&c0);
        let t_max = (0.9 * gf.critical_data().t_c_or_inf()).min(2.0);
        let times: Vec<f64> = (1..=8).map(|k| t_max * k as f64 / 8.0).collect();
        let traj = run(&c0, &times, 16);
        let m0 = Moments::of_state(&c0);
        for cp in &traj.checkpoints {
            let (t, total) = (cp.time(), cp.total());
            assert!((total.mass - m0.mass).abs() <= 1e-8, "{name} mass at {t}");
            assert!((total.male - 1.0 / (1.0 + t)).abs() <= 1e-6, "{name} male arms at {t}");
            assert!((total.female - 1.0 / (1.0 + t)).abs() <= 1e-6, "{name} female arms at {t}");
            assert!((total.count - (m0.count - t / (1.0 + t))).abs() <= 1e-6, "{name} count at {t}");
            assert!(traj.types.iter().all(|p| cp.state.get(p) >= 0.0), "{name} negativity at {t}");
        }
    }
}

#[test]
fn second_moments_follow_closed_form() {
    for (name, c0) in families() {
        let gf = InitialGf::new(&c0);
        let t_c = gf.critical_data().t_c_or_inf();
        let times: Vec<f64> = if t_c.is_finite() {
            [0.2, 0.5, 0.8, 0.9].iter().map(|f| f * t_c).collect()
        } else {
            vec![0.5, 1.0, 2.0]
        };
        let traj = run(&c0, &times, 12);
        for cp in &traj.checkpoints[1..] {
            let (gamma_t, beta_t) = gf.second_moments_closed(cp.time()).unwrap();
            let total = cp.total();
            assert!((total.male_factorial2() - gamma_t).abs() <= 1e-4, "{name} <a²-a> at {}", cp.time());
            assert!((total.female_factorial2() - beta_t).abs() <= 1e-4, "{name} <b²-b> at {}", cp.time());
        }
    }
}

#[test]
fn three_arm_second_moment_blows_up() {
    let c0 = state(&[((3, 0, 1), 1.0 / 3.0), ((0, 3, 1), 1.0 / 3.0)]);
    let times: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let traj = run(&c0, &times, 12);
    for cp in &traj.checkpoints[1..] {
        let t = cp.time();
        let expected = 2.0 / ((1.0 - t) * (1.0 + 3.0 * t));
        assert!((cp.total().male_factorial2() - expected).abs() <= 1e-4, "t = {t}");
    }
    let gf = InitialGf::new(&c0);
    assert!(gf.second_moments_closed(1.0 - 1e-4).unwrap().0 > 1e3);
    // the denominator (1-t)(1+3t) peaks at t = 1/3: decreasing before, increasing after
    let values: Vec<f64> = (0..300).map(|k| gf.second_moments_closed(k as f64 / 300.0).unwrap().0).collect();
    assert!(values[..=100].windows(2).all(|w| w[1] <= w[0]));
    assert!(values[100..].windows(2).all(|w| w[1] >= w[0]));
    assert!((values[100] - 1.5).abs() <= 1e-12);
}

#[test]
fn phi_inverts_on_grid() {
    let opts = InversionOptions::default();
    let grid = [0.05, 0.275, 0.5, 0.725, 0.95];
    for (name, c0) in families() {
        let gf = InitialGf::new(&c0);
        for t in time_grid(&gf) {
            for &u in &grid {
                for &v in &grid {
                    for &z in &grid {
                        let (x, y) = gf.invert_phi(t, u, v, z, &opts).unwrap();
                        let (pu, pv) = gf.phi(t, x, y, z);
                        assert!((pu - u).abs().max((pv - v).abs()) <= 1e-10, "{name} at t={t} ({u},{v},{z})");
                    }
                }
            }
        }
    }
}

#[test]
fn eval_g_matches_ode_generating_function() {
    let points = [(0.3, 0.7, 0.5), (0.5, 0.5, 0.5), (0.2, 0.4, 0.3), (0.8, 0.6, 0.4), (0.9, 0.1, 0.2)];
    let opts = InversionOptions::default();
    let t = 0.5;
    for (name, c0) in families() {
        let traj = run(&c0, &[t], 24);
        let gf = InitialGf::new(&c0);
        for &(x, y, z) in &points {
            let ode = state_generating_function(&traj.last().state, x, y, z);
            let g = gf.eval_g(t, x, y, z, &opts).unwrap();
            assert!((g - ode).abs() <= 1e-6, "{name} at ({x},{y},{z}): {g} vs {ode}");
        }
    }
}

#[test]
fn arm_derivative_identity() {
    let opts = InversionOptions::default();
    let h = 1e-5;
    for (name, c0) in families() {
        let gf = InitialGf::new(&c0);
        for t in time_grid(&gf) {
            for &(x, y, z) in &[(0.4, 0.5, 0.5), (0.6, 0.3, 0.7), (0.5, 0.6, 0.3)] {
                let (u, v) = gf.phi(t, x, y, z);
                if !(0.05..0.95).contains(&u) || !(0.05..0.95).contains(&v) {
                    continue;
                }
                let fd = (gf.eval_g(t, u + h, v, z, &opts).unwrap() - gf.eval_g(t, u - h, v, z, &opts).unwrap()) / (2.0 * h);
                let expected = gf.dx(x, y, z) / (1.0 + t);
                assert!((fd - expected).abs() <= 1e-5, "{name} t={t} ({x},{y},{z}): {fd} vs {expected}");
            }
        }
    }
}

#[test]
fn inversion_contracts_geometrically() {
    let opts = InversionOptions::default();
    for (name, c0) in families() {
        let gf = InitialGf::new(&c0);
        let m = gf.critical_data().m;
        for t in time_grid(&gf) {
            let bound = t * m / (1.0 + t) + 0.05;
            let (_, steps) = gf.invert_phi_traced(t, 0.6, 0.4, 0.7, &opts).unwrap();
            for w in steps.windows(2).filter(|w| w[0] > 1e-9) {
                assert!(w[1] <= bound * w[0], "{name} t={t}: ratio {} > {bound}", w[1] / w[0]);
            }
        }
    }
}

#[test]
fn long_time_ode_approaches_limit() {
    let t = 50.0;
    for (name, c0) in [families()[1].clone(), families()[2].clone()] {
        let weights: TypeWeights<f64> = c0.iter().map(|(p, c)| (*p, *c)).collect();
        let limit = limiting_concentrations(&weights, 12).unwrap();
        let traj = run(&c0, &[t], 12);
        for m in 1..=12 {
            let ode = traj.last().state.get(&ParticleType { a: 0, b: 0, m });
            assert!((ode - limit.get(m)).abs() <= 2.0 / (1.0 + t), "{name} m={m}");
        }
    }
}

#[test]
fn limit_mass_and_total() {
    let half = state(&[((1, 0, 1), 0.5), ((0, 1, 1), 0.5), ((1, 1, 1), 0.5)]);
    let weights: TypeWeights<f64> = half.iter().map(|(p, c)| (*p, *c)).collect();
    let limit = limiting_concentrations(&weights, 200).unwrap();
    assert!(limit.c_inf.values().all(|c| *c >= 0.0));
    assert!((limit.total - (half.total() - 1.0)).abs() <= 1e-9);
    assert!((limit.mass - half.mass()).abs() <= 1e-9);

    let chain: TypeWeights<f64> = [(ParticleType { a: 1, b: 1, m: 1 }, 1.0)].into_iter().collect();
    let limit = limiting_concentrations(&chain, 50).unwrap();
    assert_eq!(limit.mass, 0.0);
}

#[test]
fn two_gender_limit_is_diamond_over_m_minus_one() {
    let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    for mu in [vec![q(1, 2), q(0, 1), q(1, 2)], vec![q(1, 3), q(1, 3), q(1, 3)]] {
        let mu = Measure1D::from_weights(mu).unwrap();
        let nu = mu.size_biased_shift();
        let fam = FamilySpec::TwoGender { mu1: mu.clone(), mu2: mu };
        fam.validate(0.0).unwrap();
        let limit = limiting_concentrations(&fam.initial_weights(), 12).unwrap();
        for m in 2..=12u32 {
            let expected = diamond(&nu, &nu, m).unwrap() / BigRational::from_integer((m as i64 - 1).into());
            assert_eq!(limit.get(m), expected, "m = {m}");
            assert_eq!(fam.zero_arm_limit(m).unwrap(), expected, "m = {m}");
        }
    }
}
