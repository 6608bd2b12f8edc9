// Empirical Bayes for the DPP model: Nelder-Mead on the log marginal
// likelihood over (a, b, rho, alpha) for a synthetic survey.

use featalloc::fit::{fit_empirical_bayes, DppParams, FitOptions, FitResult};
use featalloc::infer_dpp::dpp_log_marginal;
use featalloc::kernels::Rect;
use featalloc::simulate::{sample_observations, summarize, DppSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Report {
    pub fit: FitResult,
    pub truth_log_marginal: f64,
}

pub fn run_example() -> featalloc::Result<Report> {
    let region = Rect::unit();
    let ngrid = 30;
    let truth = DppParams {
        a: 1.0,
        b: 5.0,
        rho: 100.0,
        alpha: 0.0535,
    };
    let model = truth.model(region, ngrid)?;
    let sampler = DppSampler::new(model.kernel(), ngrid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let psi = sampler.sample_psi(model.mark(), &mut rng);
    let sample = summarize(&sample_observations(&psi, 25, &mut rng));

    let init = DppParams::initial_guess(&sample, &region)?;
    println!("{} trees, k = {}; starting from {init:?}", psi.len(), sample.k());
    let fit = fit_empirical_bayes(&sample, &region, ngrid, init, &FitOptions::default())?;
    let report = Report {
        truth_log_marginal: dpp_log_marginal(&model, &sample)?,
        fit,
    };
    let p = report.fit.params;
    println!("fitted a = {:.3}, b = {:.3}, rho = {:.2}, alpha = {:.4}", p.a, p.b, p.rho, p.alpha);
    println!(
        "log marginal {:.3} (start {:.3}, generating parameters {:.3}) after {} evaluations",
        report.fit.log_marginal, report.fit.initial_log_marginal, report.truth_log_marginal, report.fit.evaluations
    );
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
