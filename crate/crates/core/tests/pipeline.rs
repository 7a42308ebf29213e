use ggflow_core::{
    builtin_solution, classify_point, critical_constant, critical_time, dichotomy_classify,
    energy_residual, integrate, oscillation, solve_distance_like, solve_lax_oleinik,
    verify_viscosity, CriticalSets, DichotomyConfig, FlowParams, LaxOleinikConfig, Potential,
    Provenance, Tolerances, TorusPoint, ValueFunction, Verdict, ViscosityTolerances,
};

#[test]
fn tabulated_potential_through_every_stage() {
    // A shifted, tabulated copy of the pendulum potential.
    let n = 512;
    let mut csv = format!("# 1,{n}\n");
    for i in 0..n {
        let x = i as f64 / n as f64;
        csv.push_str(&format!("{}\n", 0.5 - (2.0 * std::f64::consts::PI * x).cos()));
    }
    let v = Potential::from_csv_str("shifted", &csv).unwrap();
    let alpha0 = critical_constant(&v, 1024).unwrap();
    assert!((alpha0 - 1.5).abs() < 1e-9);
    let osc = oscillation(&v, 1024).unwrap();
    assert!((osc - 2.0).abs() < 1e-9);

    let u = solve_distance_like(&v, alpha0, n).unwrap();
    assert_eq!(u.provenance(), Provenance::DistanceLike);
    let report = verify_viscosity(&u, &v, alpha0, &ViscosityTolerances::default()).unwrap();
    assert!(report.passes, "{report:?}");

    let lo = solve_lax_oleinik(&v, alpha0, &LaxOleinikConfig::new(256), None).unwrap();
    let coarse = lo.solution;
    let sup = coarse
        .shape()
        .nodes()
        .map(|x| (coarse.value(&x) - u.value(&x)).abs())
        .fold(0.0, f64::max);
    assert!(sup < 5e-3, "solvers disagree by {sup}");

    let u = ValueFunction::from_csv_str(&u.to_csv_string()).unwrap();
    let tols = Tolerances::for_grid(n, osc);
    let x0 = TorusPoint::new1(0.3);
    assert!(!classify_point(&u, &v, alpha0, &x0, &tols).kind.is_critical());
    let traj = integrate(&u, &x0, &FlowParams::new(&u, 2.0, 1e-3), None).unwrap();
    assert!(energy_residual(&traj) < 1e-2);
    let tau = critical_time(&traj, &u, &v, alpha0, &tols);
    assert!(tau.is_finite() && tau > 0.0);
    let sets = CriticalSets::compute(&u, &v, alpha0, &tols);
    assert!(sets.distance_to_sing(&traj.endpoint()) < 0.01);

    let cfg = DichotomyConfig::standard(&u, &v).unwrap();
    let r = dichotomy_classify(&u, &v, alpha0, &x0, &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::EntersSingularSet);
    assert!((r.tau - tau).abs() < 1e-9);
}

#[test]
fn degenerate_builtin_orbits_approach_the_regular_critical_point() {
    let v = Potential::degenerate();
    let u = builtin_solution("degenerate", 1024).unwrap();
    let alpha0 = critical_constant(&v, 1024).unwrap();
    let cfg = DichotomyConfig::standard(&u, &v).unwrap();
    for x in [0.1, 0.2, 0.35] {
        let r = dichotomy_classify(&u, &v, alpha0, &TorusPoint::new1(x), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::ApproachesRegularCritical, "x0 = {x}");
        assert!(r.tau.is_infinite());
    }
}
