// Surveys of a fixed forest stand: each of n surveys spots every tree
// independently with its own Beta(1, 20) detection probability. The DPP
// hyperparameters are fitted by empirical Bayes and the Le Cam posterior
// gives the expected total number of trees.
//
// Reads the stand from `$FEATALLOC_SPRUCES` (CSV with `x,y` columns, 56 m x
// 38 m plot) when set, otherwise from the bundled synthetic stand.
//
// ```text
// cargo run --release --example spruces_survey [SEED]
// ```

use std::path::{Path, PathBuf};

use featalloc::cli::read_points_csv;
use featalloc::fit::{fit_empirical_bayes, DppParams, FitOptions, FitResult};
use featalloc::infer_dpp::{dpp_count_posterior, expected_total_count, Mode};
use featalloc::kernels::Rect;
use featalloc::priors::BetaMarkLaw;
use featalloc::simulate::{sample_observations, summarize, Atom, PsiRealization};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SPRUCES_ENV: &str = "FEATALLOC_SPRUCES";
pub const SURVEY_SIZES: [usize; 3] = [10, 20, 30];
pub const NGRID: usize = 50;

pub struct SurveyFit {
    pub n: usize,
    pub k: usize,
    pub fit: FitResult,
    pub total: f64,
}

pub fn stand_path() -> PathBuf {
    std::env::var_os(SPRUCES_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/spruces_synthetic.csv"))
}

/// One survey per size in `sizes`, all from the same marked stand.
pub fn survey_totals(stand: &[[f64; 2]], sizes: &[usize], seed: u64) -> featalloc::Result<Vec<SurveyFit>> {
    let region = Rect::new([0.0, 0.0], [56.0, 38.0])?;
    let mark = BetaMarkLaw::new(1.0, 20.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = PsiRealization::new(
        stand
            .iter()
            .map(|&location| Atom {
                location,
                weight: mark.sample(&mut rng),
            })
            .collect(),
    )?;
    let max_n = sizes.iter().copied().max().unwrap_or(0);
    // larger surveys extend the smaller ones
    let observations = sample_observations(&truth, max_n, &mut rng);
    sizes
        .iter()
        .map(|&n| {
            let sample = summarize(&observations[..n]);
            let init = DppParams::initial_guess(&sample, &region)?;
            let fit = fit_empirical_bayes(&sample, &region, NGRID, init, &FitOptions::default())?;
            let model = fit.params.model(region, NGRID)?;
            let total = expected_total_count(&dpp_count_posterior(&model, &sample, Mode::Lecam)?);
            Ok(SurveyFit {
                n,
                k: sample.k(),
                fit,
                total,
            })
        })
        .collect()
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let path = stand_path();
    let stand = read_points_csv(&path)?;
    println!("{} trees from {}", stand.len(), path.display());
    for s in survey_totals(&stand, &SURVEY_SIZES, seed)? {
        let p = s.fit.params;
        println!(
            "n={:2} k={:3}  a={:.3} b={:.2} rho={:.4} alpha={:.3}  E[M'+k]={:.1}",
            s.n, s.k, p.a, p.b, p.rho, p.alpha, s.total
        );
    }
    Ok(())
}
