//! Posterior quantities for the independently marked DPP prior with beta
//! marks: marginal likelihood, weight posteriors, the law of the number of
//! unseen features and the map of where they are likely to be.
//!
//! Everything is computed on the cell-centred grid of the model. With
//! `L = Δ K_{x*}` the grid matrix of the Palm kernel and `c = 1 − g`,
//! `E[g^N] = det(I − c L)` and, for the Palm process at one more point `y`,
//! the determinant lemma gives
//! `E[g^{N_y}] / E[g^N] = 1 + c L_y·(I − c L)⁻¹ L_y / L_yy`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use faer::{Mat, Side};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::infer_crm::WeightPosterior;
use crate::kernels::{grid_discretize, scaled_gram, GaussianDppKernel, Grid, GridEig, Kernel, PalmKernel, Point};
use crate::poibin::{le_cam_pmf, poisson_binomial_pmf, tilt_pmf, Pmf, SuccessProbs, DEFAULT_TAIL_EPS};
use crate::priors::BetaMarkLaw;
use crate::simulate::FeatureSample;

/// Smallest grid resolution accepted by [`DppModel`].
pub const MIN_NGRID: usize = 10;

/// Evaluation of the Palm count law: exact Poisson-binomial or its Le Cam
/// Poisson approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Lecam,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Lecam => "lecam",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "lecam" => Ok(Mode::Lecam),
            other => Err(Error::Config(format!("mode must be exact or lecam, got {other:?}"))),
        }
    }
}

/// Gaussian DPP locations with iid beta marks, discretized on an
/// `n_grid × n_grid` grid.
#[derive(Debug, Clone)]
pub struct DppModel {
    kernel: GaussianDppKernel,
    mark: BetaMarkLaw,
    n_grid: usize,
}

impl DppModel {
    pub fn new(kernel: GaussianDppKernel, mark: BetaMarkLaw, n_grid: usize) -> Result<Self> {
        if n_grid < MIN_NGRID {
            return Err(Error::domain(format!("grid resolution must be at least {MIN_NGRID}, got {n_grid}")));
        }
        Ok(Self { kernel, mark, n_grid })
    }

    pub fn kernel(&self) -> &GaussianDppKernel {
        &self.kernel
    }

    pub fn mark(&self) -> &BetaMarkLaw {
        &self.mark
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn grid(&self) -> Result<Grid> {
        grid_discretize(self.kernel.region(), self.n_grid)
    }

    /// Palm kernel at the sample's feature locations, in a canonical order
    /// so results do not depend on how the features are listed.
    pub fn palm(&self, sample: &FeatureSample) -> Result<PalmKernel> {
        crate::kernels::palm_reduce(self.kernel.clone(), &canonical_anchors(sample))
    }
}

fn canonical_anchors(sample: &FeatureSample) -> Vec<Point> {
    let mut a = sample.locations();
    a.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    a
}

/// Beta factors `Σ_ℓ log B(m_ℓ + a, n − m_ℓ + b) − log B(a, b)` in a fixed
/// summation order.
fn ln_beta_factors(mark: &BetaMarkLaw, sample: &FeatureSample) -> f64 {
    let n = sample.n() as f64;
    let base = ln_beta(mark.a(), mark.b());
    let mut terms: Vec<f64> = sample
        .counts()
        .into_iter()
        .map(|m| {
            let m = m as f64;
            ln_beta(m + mark.a(), n - m + mark.b()) - base
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// `log det(I − c L)` by Cholesky, falling back to the clamped spectrum when
/// the factorization fails.
fn ln_det_i_minus(l: &Mat<f64>, c: f64, grid: &Grid) -> Result<f64> {
    if c == 0.0 {
        return Ok(0.0);
    }
    let n = l.nrows();
    let m = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - c * l[(i, j)]);
    if let Ok(llt) = m.llt(Side::Lower) {
        let f = llt.L();
        return Ok((0..n).map(|i| 2.0 * f[(i, i)].ln()).sum());
    }
    log::debug!("Cholesky of I - cL failed; using the clamped spectrum");
    let eig = GridEig::from_scaled_matrix(l.clone(), grid.clone(), false)?;
    pgf_log(eig.eigvals(), c)
}

/// `Σ_k log(1 − c λ_k)`, the log of `E[g^N]` for a Poisson-binomial count.
fn pgf_log(lambda: &[f64], c: f64) -> Result<f64> {
    let mut s = 0.0;
    for &l in lambda {
        let t = 1.0 - c * l;
        if !(t > 0.0) {
            return Err(Error::Numerical(format!(
                "probability generating function vanishes (eigenvalue {l}, 1 - g = {c})"
            )));
        }
        s += t.ln();
    }
    Ok(s)
}

/// `log det(I − c L)` through the Kronecker structure of the Gaussian kernel
/// on a product grid. `A = I − cΔK` is diagonal in the product of the two
/// axis eigenbases and the anchors enter through the determinant lemma,
/// `det(I − cL) = det A · det(C + cΔ Bᵀ A⁻¹ B) / det C` with `B` the
/// grid-anchor covariances, so only `n × n` and `k × k` problems are solved.
///
/// `None` when a factor is not positive definite.
fn ln_det_i_minus_separable(palm: &PalmKernel, grid: &Grid, c: f64) -> Option<f64> {
    let kernel = palm.base();
    let (rho, alpha) = (kernel.rho(), kernel.alpha());
    let n = grid.n_side();
    let pts = grid.points();
    let xs: Vec<f64> = (0..n).map(|i| pts[i][0]).collect();
    let ys: Vec<f64> = (0..n).map(|j| pts[j * n][1]).collect();
    let (dx, ux) = axis_eigen(&xs, alpha)?;
    let (dy, uy) = axis_eigen(&ys, alpha)?;
    let s = c * grid.cell_area() * rho;

    let mut ln_det_a = 0.0;
    let mut w = Vec::with_capacity(n * n);
    for &ey in &dy {
        for &ex in &dx {
            let t = 1.0 - s * ex * ey;
            if !(t > 0.0) {
                return None;
            }
            ln_det_a += t.ln();
            w.push(1.0 / t);
        }
    }
    let anchors = palm.anchors();
    let k = anchors.len();
    if k == 0 {
        return Some(ln_det_a);
    }
    let profile = |coords: &[f64], axis: usize| {
        Mat::from_fn(coords.len(), k, |i, l| (-((coords[i] - anchors[l][axis]) / alpha).powi(2)).exp())
    };
    let p = ux.transpose() * profile(&xs, 0);
    let q = uy.transpose() * profile(&ys, 1);
    let z = Mat::from_fn(n * n, k, |r, l| {
        let (j, i) = (r / n, r % n);
        p[(i, l)] * q[(j, l)] * w[r].sqrt()
    });
    let m = kernel.gram(anchors) + (z.transpose() * &z) * faer::Scale(s * rho);
    let llt = m.llt(Side::Lower).ok()?;
    let f = llt.L();
    let ln_det_m: f64 = (0..k).map(|i| 2.0 * f[(i, i)].ln()).sum();
    Some(ln_det_a + ln_det_m - palm.log_det_gram())
}

/// Share of the quadrature trace that the separable spectrum may discard.
const SPECTRAL_TAIL: f64 = 1e-14;

/// Eigenvalues of the Palm grid matrix, descending and clamped to `[0, 1]`,
/// through the same Kronecker structure. In the product eigenbasis the
/// matrix is `diag(d) − Δ W Wᵀ` with `W = V L⁻ᵀ`, `V` the rotated grid-anchor
/// covariances. Coordinates carrying less than `tail` of `Σ d` are dropped:
/// by interlacing the retained eigenvalues bound the full ones from below and
/// the total discarded mass is at most the dropped trace.
///
/// `None` when an axis decomposition fails.
fn palm_eigvals_separable(palm: &PalmKernel, grid: &Grid, tail: f64) -> Option<Vec<f64>> {
    let kernel = palm.base();
    let (rho, alpha) = (kernel.rho(), kernel.alpha());
    let n = grid.n_side();
    let pts = grid.points();
    let xs: Vec<f64> = (0..n).map(|i| pts[i][0]).collect();
    let ys: Vec<f64> = (0..n).map(|j| pts[j * n][1]).collect();
    let (dx, ux) = axis_eigen(&xs, alpha)?;
    let (dy, uy) = axis_eigen(&ys, alpha)?;
    let delta = grid.cell_area();

    // row r = j n + i pairs x-eigenvector i with y-eigenvector j
    let d: Vec<f64> = (0..n * n).map(|r| (delta * rho * dx[r % n] * dy[r / n]).max(0.0)).collect();
    let mut order: Vec<usize> = (0..n * n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let total: f64 = d.iter().sum();
    let mut rest = total;
    let mut keep = 0;
    while keep < order.len() && rest > tail * total {
        rest -= d[order[keep]];
        keep += 1;
    }
    let kept = &order[..keep.max(1).min(order.len())];
    log::debug!("separable Palm spectrum: {} of {} coordinates", kept.len(), n * n);

    let anchors = palm.anchors();
    let k = anchors.len();
    let mut m = Mat::from_fn(kept.len(), kept.len(), |a, b| if a == b { d[kept[a]] } else { 0.0 });
    if k > 0 {
        let profile = |coords: &[f64], axis: usize| {
            Mat::from_fn(coords.len(), k, |i, l| (-((coords[i] - anchors[l][axis]) / alpha).powi(2)).exp())
        };
        let p = ux.transpose() * profile(&xs, 0);
        let q = uy.transpose() * profile(&ys, 1);
        // W = V L⁻ᵀ, one forward substitution per retained row
        let chol = palm.gram_factor();
        let mut w = Mat::<f64>::zeros(kept.len(), k);
        for (a, &r) in kept.iter().enumerate() {
            let (i, j) = (r % n, r / n);
            for l in 0..k {
                let mut v = rho * p[(i, l)] * q[(j, l)];
                for t in 0..l {
                    v -= chol[(l, t)] * w[(a, t)];
                }
                w[(a, l)] = v / chol[(l, l)];
            }
        }
        m -= (&w * w.transpose()) * faer::Scale(delta);
    }
    let mut eig = m.self_adjoint_eigenvalues(Side::Lower).ok()?;
    if eig.iter().any(|&l| l > 1.0 + 1e-6) {
        log::warn!("Palm eigenvalue exceeds 1; clamping (kernel close to the existence boundary or grid too coarse)");
    }
    eig.sort_by(|a, b| b.total_cmp(a));
    Some(eig.into_iter().map(|l| l.clamp(0.0, 1.0)).collect())
}

fn axis_eigen(coords: &[f64], alpha: f64) -> Option<(Vec<f64>, Mat<f64>)> {
    let n = coords.len();
    let m = Mat::from_fn(n, n, |i, j| (-((coords[i] - coords[j]) / alpha).powi(2)).exp());
    let evd = m.self_adjoint_eigen(Side::Lower).ok()?;
    Some((evd.S().column_vector().iter().copied().collect(), evd.U().to_owned()))
}

/// Log marginal likelihood of `sample`, a density in the feature locations:
/// `log E[g^{N_{x*}}] + Σ_ℓ log B(m_ℓ + a, n − m_ℓ + b)/B(a, b) + log det C(x*)`.
pub fn dpp_log_marginal(model: &DppModel, sample: &FeatureSample) -> Result<f64> {
    let palm = model.palm(sample)?;
    let grid = model.grid()?;
    let c = 1.0 - model.mark.kappa(sample.n());
    let pgf = if c == 0.0 {
        0.0
    } else if let Some(v) = ln_det_i_minus_separable(&palm, &grid, c) {
        v
    } else {
        log::debug!("separable determinant unavailable; factorizing the full grid matrix");
        ln_det_i_minus(&scaled_gram(&palm, &grid), c, &grid)?
    };
    Ok(pgf + ln_beta_factors(&model.mark, sample) + palm.log_det_gram())
}

/// `Beta(m_ℓ + a, n − m_ℓ + b)` for each observed feature.
pub fn dpp_weight_posterior(model: &DppModel, sample: &FeatureSample) -> WeightPosterior {
    let n = sample.n() as f64;
    let (a, b) = (model.mark.a(), model.mark.b());
    let params = sample
        .counts()
        .into_iter()
        .map(|m| (m as f64 + a, n - m as f64 + b))
        .collect();
    WeightPosterior::new(params).expect("positive by construction")
}

/// Posterior law of the total number of features `M′ + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPosterior {
    /// Law of `M′ + k`; its support starts at `k`.
    pub pmf: Pmf,
    pub mode: Mode,
    pub k: usize,
    /// Expected number of Palm points, `Σ λ*` in exact mode and the
    /// quadrature trace in Le Cam mode.
    pub trace: f64,
    /// `Σ (λ*)²`, the Le Cam bound; only available in exact mode.
    pub le_cam_bound: Option<f64>,
}

impl CountPosterior {
    /// Posterior mean of `M′`.
    pub fn unseen_mean(&self) -> f64 {
        self.pmf.mean() - self.k as f64
    }
}

/// Law of `M′ + k`. Exact mode tilts the Poisson-binomial Palm count by
/// `g^m`; Le Cam mode uses `Poisson(g · trace)`.
///
/// In exact mode the untilted Le Cam bound is re-checked and a violation
/// is logged as an error.
pub fn dpp_count_posterior(model: &DppModel, sample: &FeatureSample, mode: Mode) -> Result<CountPosterior> {
    let palm = model.palm(sample)?;
    let grid = model.grid()?;
    let g = model.mark.kappa(sample.n());
    let k = sample.k();
    match mode {
        Mode::Exact => {
            let eigvals = match palm_eigvals_separable(&palm, &grid, SPECTRAL_TAIL) {
                Some(v) => v,
                None => GridEig::compute(&palm, &grid, false)?.eigvals().to_vec(),
            };
            let lambda = SuccessProbs::new(eigvals)?;
            let prior = poisson_binomial_pmf(&lambda);
            let bound = lambda.sum_of_squares();
            let tv = prior.total_variation(&le_cam_pmf(lambda.sum(), DEFAULT_TAIL_EPS)?);
            if tv > bound + 1e-12 {
                log::error!("Le Cam bound violated: TV {tv:.3e} > {bound:.3e}");
            }
            Ok(CountPosterior {
                pmf: tilt_pmf(&prior, g)?.trim_tail(DEFAULT_TAIL_EPS).shifted(k),
                mode,
                k,
                trace: lambda.sum(),
                le_cam_bound: Some(bound),
            })
        }
        Mode::Lecam => {
            let trace = crate::kernels::grid_trace(&palm, &grid);
            Ok(CountPosterior {
                pmf: le_cam_pmf(g * trace, DEFAULT_TAIL_EPS)?.shifted(k),
                mode,
                k,
                trace,
                le_cam_bound: None,
            })
        }
    }
}

/// Posterior mean of `M′ + k`.
pub fn expected_total_count(posterior: &CountPosterior) -> f64 {
    posterior.pmf.mean()
}

/// Intensity of unseen features per unit area at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    grid: Grid,
    values: Vec<f64>,
    mode: Mode,
    anchors: Vec<Point>,
}

impl IntensityMap {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `h(y)` in grid order (`iy · n + ix`, row 0 at the bottom).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    /// Value of the cell containing `p`, if inside the region.
    pub fn value_at(&self, p: Point) -> Option<f64> {
        self.grid.cell_of(p).map(|i| self.values[i])
    }

    /// `Δ Σ_y h(y)`, the expected number of unseen features.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// The map rescaled to integrate to one. A zero map stays zero.
    pub fn normalized(&self) -> IntensityMap {
        let total = self.integral();
        let values = if total > 0.0 {
            self.values.iter().map(|v| v / total).collect()
        } else {
            self.values.clone()
        };
        IntensityMap {
            values,
            ..self.clone()
        }
    }

    /// `x,y,h` rows after an optional `#` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "x,y,h")?;
        for (p, v) in self.grid.points().iter().zip(&self.values) {
            writeln!(w, "{},{},{}", p[0], p[1], v)?;
        }
        Ok(())
    }

    /// Binary 8-bit PGM, top row at the largest `y`, grey level
    /// `round(255 · h / scale)` with `scale` the map maximum.
    pub fn write_pgm<W: Write>(&self, mut w: W, comment: Option<&str>) -> io::Result<()> {
        let n = self.grid.n_side();
        let scale = self.max();
        writeln!(w, "P5")?;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        write!(w, "{n} {n}\n255\n")?;
        let mut bytes = Vec::with_capacity(n * n);
        for row in 0..n {
            let iy = n - 1 - row;
            for ix in 0..n {
                let v = self.values[iy * n + ix];
                let level = if scale > 0.0 { (255.0 * v / scale).round() } else { 0.0 };
                bytes.push(level.clamp(0.0, 255.0) as u8);
            }
        }
        w.write_all(&bytes)
    }

    /// Text describing how grey levels map back to intensities.
    pub fn pgm_scale_note(&self) -> String {
        format!(
            "pgm_levels=255\nvalue_at_0=0\nvalue_at_255={}\nmode={}\nngrid={}\n",
            self.max(),
            self.mode,
            self.grid.n_side()
        )
    }
}

/// `h(y) = K_{x*}(y, y) · g · E[g^{N_y}] / E[g^{N_{x*}}]` on the model grid.
///
/// Exact mode uses one eigendecomposition of `L = Δ K_{x*}` and the
/// determinant lemma at every cell, so the map integrates exactly to the
/// exact-mode `E[M′]`. Le Cam mode replaces the PGF ratio by
/// `exp{(1 − g) (L²)_yy / L_yy}`, the effect of a rank-one Palm step on the
/// trace.
pub fn unseen_intensity_map(model: &DppModel, sample: &FeatureSample, mode: Mode) -> Result<IntensityMap> {
    let palm = model.palm(sample)?;
    let grid = model.grid()?;
    let delta = grid.cell_area();
    let g = model.mark.kappa(sample.n());
    let c = 1.0 - g;
    let floor = 1e-12 * model.kernel.rho();
    let l = scaled_gram(&palm, &grid);
    let n = grid.len();

    let values = match mode {
        Mode::Exact => {
            let eig = GridEig::from_scaled_matrix(l, grid.clone(), true)?;
            let lambda = eig.eigvals();
            let u = eig.eigvecs().expect("requested eigenvectors");
            let weight: Vec<f64> = lambda.iter().map(|&lk| c * lk * lk / (1.0 - c * lk)).collect();
            (0..n)
                .map(|y| {
                    let (mut diag, mut extra) = (0.0, 0.0);
                    for k in 0..lambda.len() {
                        let u2 = u[(y, k)] * u[(y, k)];
                        diag += lambda[k] * u2;
                        extra += weight[k] * u2;
                    }
                    if diag / delta < floor {
                        0.0
                    } else {
                        g * (diag + extra) / delta
                    }
                })
                .collect()
        }
        Mode::Lecam => (0..n)
            .map(|y| {
                let diag = l[(y, y)];
                if diag / delta < floor {
                    return 0.0;
                }
                let col = l.col(y);
                let sq: f64 = col.iter().map(|v| v * v).sum();
                g * diag / delta * (c * sq / diag).exp()
            })
            .collect(),
    };
    Ok(IntensityMap {
        grid,
        values,
        mode,
        anchors: palm.anchors().to_vec(),
    })
}
