// Regenerates the bundled 134-tree synthetic stand used in place of the
// Norwegian spruces survey when the real coordinates are not available.
//
// A Gaussian DPP on the 56 m x 38 m plot is drawn with a fixed seed; draws
// are repeated with the next seed until one has exactly 134 trees.
//
// ```text
// cargo run --release --example spruces_synthetic [OUT.csv]
// ```

use std::io::Write;
use std::path::{Path, PathBuf};

use featalloc::kernels::{GaussianDppKernel, Rect};
use featalloc::simulate::DppSampler;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TREES: usize = 134;
pub const WIDTH: f64 = 56.0;
pub const HEIGHT: f64 = 38.0;
pub const ALPHA: f64 = 1.5;
pub const BASE_SEED: u64 = 20_240_611;
const NGRID: usize = 50;

/// Returns the seed that produced the stand and its coordinates.
pub fn draw_stand() -> featalloc::Result<(u64, Vec<[f64; 2]>)> {
    let region = Rect::new([0.0, 0.0], [WIDTH, HEIGHT])?;
    let rho = TREES as f64 / region.area();
    let kernel = GaussianDppKernel::new(rho, ALPHA, region)?;
    let sampler = DppSampler::new(&kernel, NGRID)?;
    for seed in BASE_SEED.. {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = sampler.sample_points(&mut rng);
        if points.len() == TREES {
            return Ok((seed, points));
        }
    }
    unreachable!()
}

pub fn write_stand(path: &Path) -> featalloc::Result<u64> {
    let (seed, points) = draw_stand()?;
    let io = |e| featalloc::Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    (|| {
        writeln!(f, "# synthetic stand: gaussian dpp rho={TREES}/({WIDTH}*{HEIGHT}) alpha={ALPHA} seed={seed}")?;
        writeln!(f, "x,y")?;
        for p in &points {
            writeln!(f, "{:.3},{:.3}", p[0], p[1])?;
        }
        f.flush()
    })()
    .map_err(io)?;
    Ok(seed)
}

pub fn bundled_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/spruces_synthetic.csv")
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(bundled_path);
    let seed = write_stand(&out)?;
    println!("wrote {TREES} trees to {} (seed {seed})", out.display());
    Ok(())
}
