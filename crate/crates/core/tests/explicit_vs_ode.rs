use coag_core::explicit::FamilySpec;
use coag_core::measures::Measure1D;
use coag_core::ode::{integrate, SolverSettings, TruncationPolicy};
use coag_core::ConcentrationState;

fn max_diff(fam: &FamilySpec<f64>, times: &[f64], max_mass: u32) -> f64 {
    fam.validate(1e-12).unwrap();
    let c0 = ConcentrationState::from_weights(&fam.initial_weights()).unwrap();
    let settings = SolverSettings { checkpoints: times.to_vec(), ..SolverSettings::default() };
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let traj = integrate(&c0, t_end, &TruncationPolicy::with_mass_cap(max_mass), &settings).unwrap();
    let mut worst: f64 = 0.0;
    for &t in times {
        let cp = traj.at(t).unwrap();
        for (p, v) in fam.table(&t, max_mass).unwrap() {
            worst = worst.max((cp.state.get(&p) - v).abs());
        }
        for p in traj.types.iter().filter(|p| p.m <= max_mass) {
            worst = worst.max((cp.state.get(p) - fam.concentration(&t, p.a, p.b, p.m).unwrap()).abs());
        }
    }
    worst
}

#[test]
fn random_gender_general_arm_law() {
    let fam = FamilySpec::RandomGender { mu1: Measure1D::from_weights(vec![0.0, 0.5, 0.0, 0.5]).unwrap() };
    let d = max_diff(&fam, &[0.25, 0.5, 1.0], 10);
    assert!(d <= 1e-8, "{d:e}");
}

#[test]
fn two_gender_general_arm_law() {
    let mu = Measure1D::from_weights(vec![0.3, 0.5, 0.1, 0.1]).unwrap();
    let nu = Measure1D::from_weights(vec![0.3, 0.4, 0.3]).unwrap();
    let fam = FamilySpec::TwoGender { mu1: mu, mu2: nu };
    let d = max_diff(&fam, &[0.25, 0.5, 1.0], 10);
    assert!(d <= 1e-8, "{d:e}");
}

#[test]
fn one_female_general_arm_law() {
    let fam = FamilySpec::OneFemaleArm { mu1: Measure1D::from_weights(vec![0.4, 0.3, 0.2, 0.1]).unwrap() };
    let d = max_diff(&fam, &[0.25, 0.5, 1.0], 10);
    assert!(d <= 1e-8, "{d:e}");
}
