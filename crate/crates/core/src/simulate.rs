//! Samplers for the latent feature process `Ψ` under each prior family,
//! Bernoulli-process observations, and the summary a sample reduces to.
//!
//! Every sampler takes the generator explicitly, so a fixed seed reproduces
//! the same draws bit for bit.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{Grid, GridEig, Kernel, Point};
use crate::priors::{BetaLevy, BetaMarkLaw, CountLaw, GammaMixing, SpatialDensity};

/// Default weight truncation for the infinite-activity priors.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: Point,
    pub weight: f64,
}

/// A finite realization of `Ψ = Σ_j δ_(X_j, S_j)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PsiRealization {
    atoms: Vec<Atom>,
}

impl PsiRealization {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for (j, a) in atoms.iter().enumerate() {
            if !(a.weight > 0.0 && a.weight <= 1.0) {
                return Err(Error::domain(format!("atom {j} has weight {} outside (0, 1]", a.weight)));
            }
            if !(a.location[0].is_finite() && a.location[1].is_finite()) {
                return Err(Error::domain(format!("atom {j} has a non-finite location")));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> Vec<Point> {
        self.atoms.iter().map(|a| a.location).collect()
    }
}

/// One draw `Z_i` from the Bernoulli process: the atoms it displays.
///
/// Features are stored by location, which doubles as the feature label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observation {
    pub features: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedFeature {
    pub location: Point,
    pub count: usize,
}

/// Distinct observed features with their frequency counts across `n`
/// observations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    n: usize,
    features: Vec<ObservedFeature>,
}

impl FeatureSample {
    /// Checks `1 <= m <= n` and distinct locations. `n = 0` is allowed only
    /// with no features; it stands for the prior.
    pub fn new(n: usize, features: Vec<ObservedFeature>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(features.len());
        for (l, f) in features.iter().enumerate() {
            if f.count == 0 || f.count > n {
                return Err(Error::domain(format!(
                    "feature {l} has count {} outside 1..={n}",
                    f.count
                )));
            }
            if !(f.location[0].is_finite() && f.location[1].is_finite()) {
                return Err(Error::domain(format!("feature {l} has a non-finite location")));
            }
            if let Some(prev) = seen.insert(key(f.location), l) {
                return Err(Error::domain(format!("features {prev} and {l} share a location")));
            }
        }
        Ok(Self { n, features })
    }

    /// Convenience constructor from parallel location and count lists.
    pub fn from_parts(n: usize, locations: &[Point], counts: &[usize]) -> Result<Self> {
        if locations.len() != counts.len() {
            return Err(Error::domain(format!(
                "{} locations but {} counts",
                locations.len(),
                counts.len()
            )));
        }
        let features = locations
            .iter()
            .zip(counts)
            .map(|(&location, &count)| ObservedFeature { location, count })
            .collect();
        Self::new(n, features)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[ObservedFeature] {
        &self.features
    }

    pub fn locations(&self) -> Vec<Point> {
        self.features.iter().map(|f| f.location).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.count).collect()
    }
}

fn key(p: Point) -> (u64, u64) {
    // +0.0 and -0.0 are the same label
    ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())
}

/// Draws weights from `ρ` restricted to `[eps, 1]` and normalized.
///
/// Below the split the proposal is `s^{−1−α}` and the acceptance ratio is
/// `(1 − s)^{β+α−1}`; above it the roles swap. Both ratios are bounded by
/// their value at one end of the piece.
#[derive(Debug, Clone)]
struct LevyWeightSampler {
    alpha: f64,
    c: f64,
    eps: f64,
    split: f64,
    p_low: f64,
    low_bound: f64,
    mass: f64,
}

impl LevyWeightSampler {
    fn new(levy: &BetaLevy, eps: f64) -> Result<Self> {
        let parts = levy.mass_parts(eps)?;
        let c = levy.beta() + levy.alpha();
        let total = parts.low + parts.high;
        let low_bound = if c >= 1.0 {
            (1.0 - eps).powf(c - 1.0)
        } else {
            (1.0 - parts.split).powf(c - 1.0)
        };
        Ok(Self {
            alpha: levy.alpha(),
            c,
            eps,
            split: parts.split,
            p_low: if total > 0.0 { parts.low / total } else { 0.0 },
            low_bound,
            mass: total,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.p_low {
            loop {
                let u: f64 = rng.random();
                let s = if self.alpha == 0.0 {
                    self.eps * (self.split / self.eps).powf(u)
                } else {
                    let a = self.eps.powf(-self.alpha);
                    let b = self.split.powf(-self.alpha);
                    (a - u * (a - b)).powf(-1.0 / self.alpha)
                };
                let s = s.clamp(self.eps, self.split);
                let accept = (1.0 - s).powf(self.c - 1.0) / self.low_bound;
                if rng.random::<f64>() < accept {
                    return s;
                }
            }
        } else {
            loop {
                let u: f64 = 1.0 - rng.random::<f64>();
                let t = (1.0 - self.split) * u.powf(1.0 / self.c);
                let s = 1.0 - t;
                if s <= 0.0 || s > 1.0 {
                    continue;
                }
                let accept = (s / self.split).powf(-1.0 - self.alpha);
                if rng.random::<f64>() < accept {
                    return s;
                }
            }
        }
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    CountLaw::Poisson { lambda: mean }.sample(rng)
}

/// Atoms of the Poisson process with intensity `γ ρ(ds) G0(dx)` whose weight
/// is at least `eps`.
///
/// Discarding the smaller atoms loses `levy.truncation_bias(eps)` expected
/// features per observation.
pub fn sample_poisson_psi<R: Rng>(levy: &BetaLevy, eps: f64, rng: &mut R) -> Result<PsiRealization> {
    let sampler = LevyWeightSampler::new(levy, eps)?;
    log::debug!(
        "truncating at eps = {eps}: discarded features per observation {:.3e}",
        levy.truncation_bias(eps)
    );
    let count = poisson_count(levy.gamma() * sampler.mass, rng);
    let base = levy.base();
    let atoms = (0..count)
        .map(|_| {
            let weight = sampler.sample(rng);
            let location = base.sample(rng);
            Atom { location, weight }
        })
        .collect();
    Ok(PsiRealization { atoms })
}

/// Mixed Poisson prior: the mass `γ` is drawn from `mixing` first and
/// replaces the intensity's own mass.
pub fn sample_mixed_psi<R: Rng>(
    levy: &BetaLevy,
    mixing: &GammaMixing,
    eps: f64,
    rng: &mut R,
) -> Result<PsiRealization> {
    let gamma = mixing.sample(rng);
    if gamma <= 0.0 {
        return Ok(PsiRealization::default());
    }
    sample_poisson_psi(&levy.with_gamma(gamma)?, eps, rng)
}

/// Mixed binomial prior: `M` from the count law, then `M` independent
/// locations from `base` and weights from `mark`.
pub fn sample_mb_psi<R: Rng>(
    count: &CountLaw,
    mark: &BetaMarkLaw,
    base: &dyn SpatialDensity,
    rng: &mut R,
) -> PsiRealization {
    let m = count.sample(rng);
    let atoms = (0..m)
        .map(|_| {
            let location = base.sample(rng);
            let weight = mark.sample(rng);
            Atom { location, weight }
        })
        .collect();
    PsiRealization { atoms }
}

/// Exact sampler for the finite DPP on the grid defined by `Δ K`.
///
/// Holds the eigendecomposition so repeated draws cost `O(N m²)` each for
/// `m` selected eigenvectors.
#[derive(Debug, Clone)]
pub struct DppSampler {
    eig: GridEig,
}

impl DppSampler {
    pub fn new<K: Kernel + ?Sized>(kernel: &K, n_side: usize) -> Result<Self> {
        let grid = crate::kernels::grid_discretize(kernel.region(), n_side)?;
        Self::from_grid(kernel, grid)
    }

    pub fn from_grid<K: Kernel + ?Sized>(kernel: &K, grid: Grid) -> Result<Self> {
        Ok(Self {
            eig: GridEig::compute(kernel, &grid, true)?,
        })
    }

    pub fn eig(&self) -> &GridEig {
        &self.eig
    }

    /// Grid cells of one draw.
    pub fn sample_cells<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let lambda = self.eig.eigvals();
        let vecs = self.eig.eigvecs().expect("sampler keeps eigenvectors");
        let n = vecs.nrows();
        let selected: Vec<usize> = (0..lambda.len())
            .filter(|&k| rng.random::<f64>() < lambda[k])
            .collect();
        let m = selected.len();
        if m == 0 {
            return Vec::new();
        }
        // rows of the selected eigenvectors, contiguous per cell
        let mut v = vec![0.0; n * m];
        for (c, &k) in selected.iter().enumerate() {
            let col = vecs.col(k);
            for i in 0..n {
                v[i * m + c] = col[i];
            }
        }
        let mut residual: Vec<f64> = (0..n).map(|i| v[i * m..(i + 1) * m].iter().map(|x| x * x).sum()).collect();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cells = Vec::with_capacity(m);
        for _ in 0..m {
            let total: f64 = residual.iter().map(|r| r.max(0.0)).sum();
            let mut target = rng.random::<f64>() * total;
            let mut j = n - 1;
            for (i, r) in residual.iter().enumerate() {
                let r = r.max(0.0);
                if target < r {
                    j = i;
                    break;
                }
                target -= r;
            }
            // while a cell with positive residual exists the last index is a
            // fallback only for rounding at the very end of the scan
            if residual[j] <= 0.0 {
                j = (0..n)
                    .max_by(|&a, &b| residual[a].total_cmp(&residual[b]))
                    .expect("non-empty grid");
            }
            let row_j = &v[j * m..(j + 1) * m];
            let mut c: Vec<f64> = (0..n)
                .map(|i| v[i * m..(i + 1) * m].iter().zip(row_j).map(|(a, b)| a * b).sum())
                .collect();
            for prev in &basis {
                let w = prev[j];
                for (ci, pi) in c.iter_mut().zip(prev) {
                    *ci -= w * pi;
                }
            }
            let norm = residual[j].sqrt();
            for ci in c.iter_mut() {
                *ci /= norm;
            }
            for (r, ci) in residual.iter_mut().zip(&c) {
                *r -= ci * ci;
            }
            residual[j] = 0.0;
            cells.push(j);
            basis.push(c);
        }
        cells
    }

    /// Point locations of one draw, jittered uniformly within their cells.
    pub fn sample_points<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        let grid = self.eig.grid();
        self.sample_cells(rng)
            .into_iter()
            .map(|i| grid.jitter(i, rng))
            .collect()
    }

    /// A marked draw: each point carries an independent weight from `mark`.
    pub fn sample_psi<R: Rng + ?Sized>(&self, mark: &BetaMarkLaw, rng: &mut R) -> PsiRealization {
        let locations = self.sample_points(rng);
        let atoms = locations
            .into_iter()
            .map(|location| Atom {
                location,
                weight: mark.sample(rng),
            })
            .collect();
        PsiRealization { atoms }
    }
}

/// One marked DPP draw. Builds the eigendecomposition each call; keep a
/// [`DppSampler`] around for repeated draws.
pub fn sample_dpp_psi<K: Kernel + ?Sized, R: Rng + ?Sized>(
    kernel: &K,
    mark: &BetaMarkLaw,
    n_side: usize,
    rng: &mut R,
) -> Result<PsiRealization> {
    Ok(DppSampler::new(kernel, n_side)?.sample_psi(mark, rng))
}

/// `n` independent Bernoulli-process draws given `Ψ`.
pub fn sample_observations<R: Rng + ?Sized>(psi: &PsiRealization, n: usize, rng: &mut R) -> Vec<Observation> {
    (0..n)
        .map(|_| Observation {
            features: psi
                .atoms
                .iter()
                .filter(|a| rng.random::<f64>() < a.weight)
                .map(|a| a.location)
                .collect(),
        })
        .collect()
}

/// Distinct displayed features and how many observations display each, in
/// order of first appearance.
pub fn summarize(observations: &[Observation]) -> FeatureSample {
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut features: Vec<ObservedFeature> = Vec::new();
    for obs in observations {
        for &x in &obs.features {
            match index.get(&key(x)) {
                Some(&l) => features[l].count += 1,
                None => {
                    index.insert(key(x), features.len());
                    features.push(ObservedFeature { location: x, count: 1 });
                }
            }
        }
    }
    FeatureSample {
        n: observations.len(),
        features,
    }
}
