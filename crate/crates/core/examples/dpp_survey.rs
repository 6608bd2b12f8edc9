// Synthetic survey of a forest: trees follow a Gaussian DPP on the unit
// square with intensity 100, each carries a Beta(1, 5) detection
// probability, and n = 15 surveys are recorded. The posterior of the total
// number of trees is computed exactly and with the Le Cam approximation.

use featalloc::infer_dpp::{dpp_count_posterior, expected_total_count, DppModel, Mode};
use featalloc::kernels::{GaussianDppKernel, Rect};
use featalloc::priors::BetaMarkLaw;
use featalloc::simulate::{sample_observations, summarize, DppSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RHO: f64 = 100.0;
pub const ALPHA: f64 = 0.0535;
pub const NGRID: usize = 50;

pub struct SurveyRun {
    pub truth: usize,
    pub k: usize,
    pub exact: f64,
    pub lecam: f64,
    pub le_cam_bound: f64,
}

pub fn model() -> featalloc::Result<DppModel> {
    let kernel = GaussianDppKernel::new(RHO, ALPHA, Rect::unit())?;
    DppModel::new(kernel, BetaMarkLaw::new(1.0, 5.0)?, NGRID)
}

/// One simulated forest and survey, analysed with the generating
/// hyperparameters.
pub fn survey(sampler: &DppSampler, model: &DppModel, n: usize, seed: u64) -> featalloc::Result<SurveyRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sampler.sample_psi(model.mark(), &mut rng);
    let sample = summarize(&sample_observations(&truth, n, &mut rng));
    let exact = dpp_count_posterior(model, &sample, Mode::Exact)?;
    let lecam = dpp_count_posterior(model, &sample, Mode::Lecam)?;
    Ok(SurveyRun {
        truth: truth.len(),
        k: sample.k(),
        exact: expected_total_count(&exact),
        lecam: expected_total_count(&lecam),
        le_cam_bound: exact.le_cam_bound.unwrap_or(f64::NAN),
    })
}

pub fn run_example() -> featalloc::Result<SurveyRun> {
    let model = model()?;
    let sampler = DppSampler::new(model.kernel(), NGRID)?;
    let run = survey(&sampler, &model, 15, 3)?;
    println!("{} trees, {} seen in 15 surveys", run.truth, run.k);
    println!("E[M' + k]: exact {:.1}, Le Cam {:.1}", run.exact, run.lecam);
    println!("Le Cam total-variation bound {:.3}", run.le_cam_bound);
    Ok(run)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
