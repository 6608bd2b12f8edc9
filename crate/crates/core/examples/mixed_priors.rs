// Mixed Poisson (gamma-mixed total mass) and mixed binomial (finite number
// of atoms) priors. Both posteriors depend on the data through n and k.

use featalloc::infer_crm::{
    mb_posterior_count, mb_posterior_count_generic, mb_predictive_new, mp_posterior_gamma, mp_predictive_new,
};
use featalloc::kernels::Rect;
use featalloc::priors::{BetaLevy, BetaMarkLaw, CountLaw, GammaMixing};
use featalloc::simulate::FeatureSample;

pub struct Report {
    pub mp_mean: f64,
    pub mb_poisson_mean: f64,
    pub mb_negbin_mean: f64,
    pub mb_generic_mean: f64,
}

pub fn run_example() -> featalloc::Result<Report> {
    let (n, k) = (10, 7);
    let sample = FeatureSample::from_parts(
        n,
        &[[0.1, 0.2], [0.4, 0.9], [0.5, 0.5], [0.7, 0.1], [0.8, 0.8], [0.2, 0.6], [0.9, 0.4]],
        &[1, 1, 2, 3, 1, 5, 2],
    )?;
    let levy = BetaLevy::new(1.0, 0.2, 1.0, Rect::unit())?;
    let mixing = GammaMixing::new(2.0, 0.5)?;
    let post = mp_posterior_gamma(&mixing, &levy, &sample)?;
    println!("mixed Poisson: total mass posterior Gamma({:.2}, {:.3})", post.shape(), post.rate());
    let mp = mp_predictive_new(&mixing, &levy, n, k)?;

    let mark = BetaMarkLaw::new(1.0, 5.0)?;
    let poisson = CountLaw::poisson(20.0)?;
    let negbin = CountLaw::neg_binomial(4.0, 0.2)?;
    let unseen = mb_posterior_count(&negbin, &mark, n, k)?;
    // the generic path only needs log P(M = m)
    let generic = mb_posterior_count_generic(|m| negbin.ln_pmf(m), &mark, n, k, 1e-12)?;
    println!(
        "mixed binomial, NB(4, 0.2) atoms: unseen mean {:.4} (closed form) vs {:.4} (series)",
        unseen.mean(),
        generic.mean()
    );

    let report = Report {
        mp_mean: mp.count.mean(),
        mb_poisson_mean: mb_predictive_new(&poisson, &mark, n, k)?.count.mean(),
        mb_negbin_mean: mb_predictive_new(&negbin, &mark, n, k)?.count.mean(),
        mb_generic_mean: generic.mean(),
    };
    println!("new features at step {}:", n + 1);
    println!("  mixed Poisson       {:.4} (depends on {})", report.mp_mean, mp.depends_on);
    println!("  binomial, Poisson   {:.4}", report.mb_poisson_mean);
    println!("  binomial, NB        {:.4}", report.mb_negbin_mean);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
