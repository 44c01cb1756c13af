use pairpol::config::{Preset, RunConfig};
use pairpol::run::run;

/// Over independent simulated runs the correlated S-curve χ² should follow a
/// χ² law with its stated degrees of freedom, and p0 should track the fitted μ.
#[test]
fn s_curve_chi2_is_calibrated_on_simulated_runs() {
    let runs = 60u64;
    let mut chi2 = Vec::new();
    let mut dof = 0;
    for i in 0..runs {
        let mut cfg = RunConfig::from_preset(Preset::SFunctionEntangled);
        cfg.n_events = 200_000;
        cfg.seed = 9_000 + i;
        cfg.workers = 4;
        let summary = run(&cfg, false).unwrap().summary;
        let class = summary.primary().unwrap();
        let fit = class.correlations.s_fit.unwrap();
        let mu = class.fit.as_ref().unwrap().mu;
        assert!(
            (fit.p0 - mu).abs() < 3.0 * fit.sigma_p0,
            "run {i}: p0 {} vs mu {mu}",
            fit.p0
        );
        dof = fit.dof;
        chi2.push(fit.chi2);
    }
    assert_eq!(dof, 7);
    let n = runs as f64;
    let mean = chi2.iter().sum::<f64>() / n;
    // Standard error of the mean is sqrt(2 dof / runs) ≈ 0.48.
    assert!((mean - dof as f64).abs() < 1.5, "mean chi2 {mean}");
    let var = chi2.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((7.0..28.0).contains(&var), "chi2 variance {var}");
}
