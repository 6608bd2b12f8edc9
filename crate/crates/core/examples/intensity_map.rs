// Where are the unseen trees? Computes the intensity of unseen features
// over the plot for a synthetic survey and writes it as CSV and PGM.
//
// ```text
// cargo run --release --example intensity_map [OUT_DIR]
// ```

use std::path::{Path, PathBuf};

use featalloc::infer_dpp::{dpp_count_posterior, unseen_intensity_map, DppModel, Mode};
use featalloc::kernels::{GaussianDppKernel, Rect};
use featalloc::priors::BetaMarkLaw;
use featalloc::simulate::{sample_observations, summarize, DppSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Report {
    pub integral: f64,
    pub unseen_mean: f64,
    pub max: f64,
    pub files: Vec<PathBuf>,
}

pub fn run_example(out: &Path) -> featalloc::Result<Report> {
    let kernel = GaussianDppKernel::new(100.0, 0.0535, Rect::unit())?;
    let model = DppModel::new(kernel, BetaMarkLaw::new(1.0, 5.0)?, 30)?;
    let sampler = DppSampler::new(model.kernel(), 30)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = sampler.sample_psi(model.mark(), &mut rng);
    let sample = summarize(&sample_observations(&truth, 15, &mut rng));

    // the exact map costs one eigendecomposition and integrates to the
    // exact posterior mean of M'
    let map = unseen_intensity_map(&model, &sample, Mode::Exact)?;
    let count = dpp_count_posterior(&model, &sample, Mode::Exact)?;
    std::fs::create_dir_all(out).map_err(|e| featalloc::Error::io(out, e))?;
    let csv = out.join("intensity_map.csv");
    let pgm = out.join("intensity_map.pgm");
    let file = |p: &Path| std::fs::File::create(p).map_err(|e| featalloc::Error::io(p, e));
    map.write_csv(file(&csv)?, Some("unseen tree intensity, exact mode"))
        .map_err(|e| featalloc::Error::io(&csv, e))?;
    map.write_pgm(file(&pgm)?, None).map_err(|e| featalloc::Error::io(&pgm, e))?;

    let report = Report {
        integral: map.integral(),
        unseen_mean: count.unseen_mean(),
        max: map.max(),
        files: vec![csv, pgm],
    };
    println!("{} trees, {} seen", truth.len(), sample.k());
    println!(
        "map integrates to {:.2}; posterior mean of unseen trees {:.2}; peak {:.1} per unit area",
        report.integral, report.unseen_mean, report.max
    );
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("out"), PathBuf::from);
    run_example(&out).map(|_| ())
}
