// Every example is compiled into this test binary and run with its checks.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(poisson_binomial);
example!(palm_kernel);
example!(ibp_predictive);
example!(mixed_priors);
example!(dpp_survey);
example!(intensity_map);
example!(empirical_bayes);
example!(random_alpha);
example!(cli_pipeline);
example!(spruces_synthetic);
example!(spruces_survey);

#[test]
fn poisson_binomial_example() {
    let r = poisson_binomial::run_example().unwrap();
    assert!((r.mean - 2.56).abs() < 1e-12);
    assert!(r.tilted_mean < r.mean);
    assert!(r.tv <= r.bound);
}

#[test]
fn palm_kernel_example() {
    let r = palm_kernel::run_example().unwrap();
    assert!(r.at_anchor.abs() < 1e-8);
    assert!((r.far_away - 100.0).abs() < 1e-6);
    assert!(r.palm_trace < r.base_trace);
    assert!(r.top_eigenvalue < 1.0);
}

#[test]
fn ibp_predictive_example() {
    let r = ibp_predictive::run_example().unwrap();
    assert!(r.n == 12 && r.k > 0 && r.log_marginal.is_finite());
    assert!((r.predictive_mean - r.rate).abs() < 1e-9);
}

#[test]
fn mixed_priors_example() {
    let r = mixed_priors::run_example().unwrap();
    assert!((r.mb_generic_mean - 4.0).abs() < 1e-8);
    assert!((r.mb_negbin_mean - 0.25).abs() < 1e-9);
    assert!(r.mp_mean > 0.0 && r.mb_poisson_mean > 0.0);
}

#[test]
fn dpp_survey_example() {
    let r = dpp_survey::run_example().unwrap();
    assert!(r.lecam <= r.exact);
    assert!(r.exact >= r.k as f64);
}

#[test]
fn intensity_map_example() {
    let dir = tempfile::tempdir().unwrap();
    let r = intensity_map::run_example(dir.path()).unwrap();
    assert!((r.integral - r.unseen_mean).abs() <= 0.05 * r.unseen_mean);
    assert!(r.max < 100.0);
    assert!(r.files.iter().all(|f| f.exists()));
}

#[test]
fn empirical_bayes_example() {
    let r = empirical_bayes::run_example().unwrap();
    assert!(r.fit.log_marginal >= r.fit.initial_log_marginal);
    assert!(r.fit.log_marginal >= r.truth_log_marginal - 2.0);
}

#[test]
fn random_alpha_example() {
    let r = random_alpha::run_example().unwrap();
    assert!(r.rare_alpha > r.common_alpha);
    assert!(r.rare_predictive > r.common_predictive);
}

#[test]
fn cli_pipeline_example() {
    let dir = tempfile::tempdir().unwrap();
    let files = cli_pipeline::run_example(dir.path(), 20).unwrap();
    let names: Vec<_> = files.iter().map(|f| f.file_name().unwrap().to_str().unwrap().to_owned()).collect();
    for expected in ["truth.csv", "observations.csv", "count_posterior.csv", "intensity_map.pgm", "predict_new.csv"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
}

#[test]
fn bundled_stand_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stand.csv");
    spruces_synthetic::write_stand(&path).unwrap();
    let fresh = std::fs::read(&path).unwrap();
    let bundled = std::fs::read(spruces_synthetic::bundled_path()).unwrap();
    assert_eq!(fresh, bundled);
}

#[test]
fn spruces_survey_example_small() {
    let stand = featalloc::cli::read_points_csv(&spruces_synthetic::bundled_path()).unwrap();
    assert_eq!(stand.len(), spruces_synthetic::TREES);
    let fits = spruces_survey::survey_totals(&stand, &[5], 2).unwrap();
    assert!(fits[0].total >= fits[0].k as f64);
    assert!(fits[0].fit.log_marginal >= fits[0].fit.initial_log_marginal);
}
