use featmass::inconsistency::{
    degenerate_count, inconsistency_experiment, inconsistency_report, posterior_total_mass_check,
    DEFAULT_JUMP_TRUNCATION, KS_THRESHOLD,
};
use featmass::{power_law, run_replicates, Execution, GammaProcessSpec, ProbabilitySource, RegVarSpec};

#[test]
fn total_mass_law_for_several_tilts() {
    for &n in &[0u64, 10, 100] {
        let c = posterior_total_mass_check(
            n,
            10_000,
            DEFAULT_JUMP_TRUNCATION,
            41,
            KS_THRESHOLD,
            Execution::Parallel,
        )
        .unwrap();
        assert!(c.passed(), "{c:?}");
    }
}

#[test]
fn gamma_prior_misses_persist_and_control_decays() {
    let spec = GammaProcessSpec {
        jump_truncation: DEFAULT_JUMP_TRUNCATION,
        tilt: 0,
    };
    let grid = [100u64, 1000, 10_000];
    let (rep, ds) = inconsistency_experiment(&spec, &grid, 300, 0.1, 8, Execution::Parallel).unwrap();
    println!("gamma fractions {:?} degenerate {}", rep.fractions(), degenerate_count(&ds));
    assert!(rep.persists);
    assert!(rep.fractions().iter().all(|f| (0.0..=1.0).contains(f)));

    let p = power_law(&RegVarSpec::pure(0.5, 0.1, 1e-12)).unwrap();
    let control = run_replicates(&ProbabilitySource::Fixed(p), &grid, 300, 8, 1, Execution::Parallel)
        .unwrap();
    let c = inconsistency_report(&control, 0.1).unwrap().fractions();
    println!("control fractions {c:?}");
    assert!(c[2] < c[0]);
    assert!(rep.fractions()[2] > c[2]);
}
