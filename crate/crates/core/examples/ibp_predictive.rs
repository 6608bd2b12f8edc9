// Beta-process feature allocation with a Poisson (CRM) prior: draw the
// random measure, survey it n times, then compute the marginal likelihood,
// weight posteriors and the law of new features. The predictive law only
// depends on n.

use featalloc::infer_crm::{crm_log_marginal, crm_predictive_new, crm_weight_posterior};
use featalloc::kernels::Rect;
use featalloc::priors::BetaLevy;
use featalloc::simulate::{sample_observations, sample_poisson_psi, summarize, DEFAULT_EPS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Report {
    pub n: usize,
    pub k: usize,
    pub log_marginal: f64,
    pub predictive_mean: f64,
    pub rate: f64,
}

pub fn run_example() -> featalloc::Result<Report> {
    let levy = BetaLevy::new(4.0, 0.3, 1.0, Rect::unit())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let psi = sample_poisson_psi(&levy, DEFAULT_EPS, &mut rng)?;
    let n = 12;
    let sample = summarize(&sample_observations(&psi, n, &mut rng));
    println!("{} atoms above {DEFAULT_EPS}, {} displayed by {n} observations", psi.len(), sample.k());

    let post = crm_weight_posterior(&levy, &sample);
    for (f, mean) in sample.features().iter().zip(post.means()).take(5) {
        println!("  feature seen {:2} times: posterior mean weight {mean:.3}", f.count);
    }
    let law = crm_predictive_new(&levy, n)?;
    let report = Report {
        n,
        k: sample.k(),
        log_marginal: crm_log_marginal(&levy, &sample)?,
        predictive_mean: law.count.mean(),
        rate: levy.new_feature_rate(n),
    };
    println!("log marginal {:.4}", report.log_marginal);
    println!(
        "new features at step {}: mean {:.4} (depends on {})",
        n + 1,
        report.predictive_mean,
        law.depends_on
    );
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
