// Beta process with an unknown discount alpha: Metropolis sampling of its
// posterior and the resulting mixture predictive for new features. Unlike
// the fixed-alpha case the predictive depends on how often each feature
// was seen, not only on n and k.

use featalloc::fit::{alpha_metropolis, random_alpha_predictive, AlphaPrior, DEFAULT_STEP};
use featalloc::kernels::Rect;
use featalloc::priors::BetaLevy;
use featalloc::simulate::FeatureSample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Report {
    pub rare_alpha: f64,
    pub common_alpha: f64,
    pub rare_predictive: f64,
    pub common_predictive: f64,
    pub acceptance_rate: f64,
}

fn spectrum(n: usize, counts: &[usize]) -> featalloc::Result<FeatureSample> {
    let locations: Vec<[f64; 2]> = (0..counts.len()).map(|i| [(i as f64 + 0.5) / counts.len() as f64, 0.5]).collect();
    FeatureSample::from_parts(n, &locations, counts)
}

pub fn run_example() -> featalloc::Result<Report> {
    let levy = BetaLevy::new(3.0, 0.5, 1.0, Rect::unit())?;
    let n = 8;
    // same n and k, opposite frequency spectra
    let rare = spectrum(n, &[1; 6])?;
    let common = spectrum(n, &[n; 6])?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut run = |s: &FeatureSample| {
        alpha_metropolis(s, levy.gamma(), levy.beta(), &AlphaPrior::Uniform, 20_000, DEFAULT_STEP, &mut rng)
    };
    let (rare_chain, common_chain) = (run(&rare)?, run(&common)?);
    let report = Report {
        rare_alpha: rare_chain.mean(),
        common_alpha: common_chain.mean(),
        rare_predictive: random_alpha_predictive(&rare_chain, &levy, n)?.count.mean(),
        common_predictive: random_alpha_predictive(&common_chain, &levy, n)?.count.mean(),
        acceptance_rate: rare_chain.acceptance_rate,
    };
    println!("six features seen once:        E[alpha] {:.3}, new features {:.3}", report.rare_alpha, report.rare_predictive);
    println!("six features seen every time:  E[alpha] {:.3}, new features {:.3}", report.common_alpha, report.common_predictive);
    println!("acceptance rate {:.2}", report.acceptance_rate);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
