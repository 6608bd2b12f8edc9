//! Covariance kernels of determinantal point processes on a rectangle.
//!
//! [`GaussianDppKernel`] is the stationary kernel `ρ exp(−‖x − y‖²/α²)`.
//! [`PalmKernel`] conditions any [`Kernel`] on points at a set of anchors and
//! removes them, which for a DPP is again a DPP with the Schur-complement
//! kernel `K(y1, y2) = C(y1, y2) − c(y1)ᵀ C̃⁻¹ c(y2)`.
//!
//! Spectral quantities are approximated on a cell-centred grid: the grid
//! matrix scaled by the cell area has eigenvalues approximating those of the
//! integral operator (Nyström with midpoint weights).

use faer::{Mat, Side};
use log::warn;
use rand::Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Default grid resolution per side.
pub const DEFAULT_NGRID: usize = 50;

/// Axis-aligned rectangle `[x0, x0 + L1] × [y0, y0 + L2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    lower: Point,
    lengths: [f64; 2],
}

impl Rect {
    pub fn new(lower: Point, lengths: [f64; 2]) -> Result<Self> {
        if !(lengths[0] > 0.0 && lengths[1] > 0.0 && lengths.iter().all(|l| l.is_finite())) {
            return Err(Error::domain(format!(
                "rectangle side lengths must be positive, got {lengths:?}"
            )));
        }
        if !lower.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("rectangle corner must be finite"));
        }
        Ok(Self { lower, lengths })
    }

    pub fn unit() -> Self {
        Self {
            lower: [0.0, 0.0],
            lengths: [1.0, 1.0],
        }
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    pub fn area(&self) -> f64 {
        self.lengths[0] * self.lengths[1]
    }

    /// Closed containment with a relative slack of 1e-12 per side.
    pub fn contains(&self, p: Point) -> bool {
        (0..2).all(|d| {
            let slack = 1e-12 * self.lengths[d];
            p[d] >= self.lower[d] - slack && p[d] <= self.lower[d] + self.lengths[d] + slack
        })
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        [
            self.lower[0] + rng.random::<f64>() * self.lengths[0],
            self.lower[1] + rng.random::<f64>() * self.lengths[1],
        ]
    }
}

/// A real symmetric positive semi-definite kernel on a rectangle.
pub trait Kernel {
    /// Kernel value; points are not checked against the region.
    fn eval(&self, y1: Point, y2: Point) -> f64;

    fn region(&self) -> &Rect;

    /// Supremum of the diagonal, used as the scale of conditioning tolerances.
    fn scale(&self) -> f64;

    fn diag(&self, y: Point) -> f64 {
        self.eval(y, y)
    }

    /// Matrix `[K(rows_i, cols_j)]`.
    fn cross(&self, rows: &[Point], cols: &[Point]) -> Mat<f64> {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self.eval(rows[i], cols[j]))
    }

    /// Symmetric Gram matrix `[K(p_i, p_j)]`.
    fn gram(&self, points: &[Point]) -> Mat<f64> {
        let n = points.len();
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval(points[i], points[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// Region-checked kernel evaluation.
pub fn kernel_eval<K: Kernel + ?Sized>(kernel: &K, y1: Point, y2: Point) -> Result<f64> {
    for y in [y1, y2] {
        if !kernel.region().contains(y) {
            return Err(Error::domain(format!("point {y:?} lies outside the kernel region")));
        }
    }
    Ok(kernel.eval(y1, y2))
}

/// `C(x, y) = ρ exp(−‖(x − y)/α‖²)` restricted to a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDppKernel {
    rho: f64,
    alpha: f64,
    region: Rect,
}

impl GaussianDppKernel {
    /// Requires `ρ π α² < 1`, the existence condition of the stationary
    /// Gaussian DPP.
    pub fn new(rho: f64, alpha: f64, region: Rect) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::domain(format!("intensity rho must be positive, got {rho}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("length scale alpha must be positive, got {alpha}")));
        }
        let q = rho * std::f64::consts::PI * alpha * alpha;
        if q >= 1.0 {
            return Err(Error::domain(format!(
                "rho * pi * alpha^2 = {q} must be < 1 for a valid Gaussian DPP"
            )));
        }
        Ok(Self { rho, alpha, region })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ρ π α²`, the largest eigenvalue of the stationary kernel on ℝ².
    pub fn repulsion(&self) -> f64 {
        self.rho * std::f64::consts::PI * self.alpha * self.alpha
    }
}

impl Kernel for GaussianDppKernel {
    fn eval(&self, y1: Point, y2: Point) -> f64 {
        let dx = (y1[0] - y2[0]) / self.alpha;
        let dy = (y1[1] - y2[1]) / self.alpha;
        self.rho * (-(dx * dx + dy * dy)).exp()
    }

    fn region(&self) -> &Rect {
        &self.region
    }

    fn scale(&self) -> f64 {
        self.rho
    }

    fn diag(&self, _y: Point) -> f64 {
        self.rho
    }
}

/// Reduced Palm kernel of `base` at a set of anchors.
#[derive(Debug, Clone)]
pub struct PalmKernel<K = GaussianDppKernel> {
    base: K,
    anchors: Vec<Point>,
    /// Lower Cholesky factor of the anchor Gram matrix.
    chol: Mat<f64>,
}

/// Conditions `kernel` on points at `anchors`.
///
/// Fails with [`Error::Conditioning`] when a Cholesky pivot of the anchor Gram
/// matrix drops below `1e-10 · scale`, naming the anchor pair responsible.
pub fn palm_reduce<K: Kernel>(kernel: K, anchors: &[Point]) -> Result<PalmKernel<K>> {
    for (i, a) in anchors.iter().enumerate() {
        if !kernel.region().contains(*a) {
            return Err(Error::domain(format!("anchor #{i} at {a:?} lies outside the region")));
        }
    }
    let gram = kernel.gram(anchors);
    let chol = cholesky_with_pivot_check(&gram, 1e-10 * kernel.scale()).map_err(|(i, pivot)| {
        let j = (0..i)
            .min_by(|&a, &b| dist2(anchors[a], anchors[i]).total_cmp(&dist2(anchors[b], anchors[i])))
            .unwrap_or(i);
        Error::Conditioning {
            first: j,
            second: i,
            pivot,
        }
    })?;
    Ok(PalmKernel {
        base: kernel,
        anchors: anchors.to_vec(),
        chol,
    })
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Cholesky factorization that reports the first pivot below `min_pivot`.
fn cholesky_with_pivot_check(a: &Mat<f64>, min_pivot: f64) -> std::result::Result<Mat<f64>, (usize, f64)> {
    let n = a.nrows();
    let mut l = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > min_pivot) {
            return Err((j, d));
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

impl<K: Kernel> PalmKernel<K> {
    pub fn base(&self) -> &K {
        &self.base
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    /// Lower Cholesky factor of the anchor Gram matrix.
    pub fn gram_factor(&self) -> &Mat<f64> {
        &self.chol
    }

    /// `log det [C(x_h, x_w)]` of the anchor Gram matrix (0 with no anchors).
    pub fn log_det_gram(&self) -> f64 {
        (0..self.anchors.len())
            .map(|i| 2.0 * self.chol[(i, i)].ln())
            .sum()
    }

    /// `L⁻¹ c(y)` for the anchor cross-covariances of a single point.
    fn whitened(&self, y: Point) -> Vec<f64> {
        let k = self.anchors.len();
        let mut v: Vec<f64> = self.anchors.iter().map(|&x| self.base.eval(y, x)).collect();
        for i in 0..k {
            let mut s = v[i];
            for p in 0..i {
                s -= self.chol[(i, p)] * v[p];
            }
            v[i] = s / self.chol[(i, i)];
        }
        v
    }

    /// `L⁻¹ [C(x_i, p_j)]`, a `k × n` matrix.
    fn whitened_block(&self, points: &[Point]) -> Mat<f64> {
        let mut v = self.base.cross(&self.anchors, points);
        if !self.anchors.is_empty() {
            faer::linalg::triangular_solve::solve_lower_triangular_in_place(
                self.chol.as_ref(),
                v.as_mut(),
                faer::Par::Seq,
            );
        }
        v
    }
}

impl<K: Kernel> Kernel for PalmKernel<K> {
    fn eval(&self, y1: Point, y2: Point) -> f64 {
        let base = self.base.eval(y1, y2);
        if self.anchors.is_empty() {
            return base;
        }
        let v1 = self.whitened(y1);
        let v2 = self.whitened(y2);
        base - v1.iter().zip(&v2).map(|(a, b)| a * b).sum::<f64>()
    }

    fn diag(&self, y: Point) -> f64 {
        let base = self.base.diag(y);
        if self.anchors.is_empty() {
            return base;
        }
        base - self.whitened(y).iter().map(|v| v * v).sum::<f64>()
    }

    fn region(&self) -> &Rect {
        self.base.region()
    }

    fn scale(&self) -> f64 {
        self.base.scale()
    }

    fn cross(&self, rows: &[Point], cols: &[Point]) -> Mat<f64> {
        let c = self.base.cross(rows, cols);
        if self.anchors.is_empty() {
            return c;
        }
        let vr = self.whitened_block(rows);
        let vc = self.whitened_block(cols);
        c - vr.transpose() * &vc
    }

    fn gram(&self, points: &[Point]) -> Mat<f64> {
        let c = self.base.gram(points);
        if self.anchors.is_empty() {
            return c;
        }
        let v = self.whitened_block(points);
        c - v.transpose() * &v
    }
}

/// Cell-centred grid of `n_side²` points covering a rectangle.
///
/// Point `iy * n_side + ix` is the centre of cell `(ix, iy)`; rows run along
/// increasing x, and row 0 is at the bottom of the rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    region: Rect,
    n_side: usize,
    points: Vec<Point>,
}

/// Cell-centred grid with `n_side²` points; the cell area is
/// `(L1/n_side)(L2/n_side)`.
pub fn grid_discretize(region: &Rect, n_side: usize) -> Result<Grid> {
    if n_side < 2 {
        return Err(Error::domain(format!("grid needs at least 2 points per side, got {n_side}")));
    }
    let [hx, hy] = cell_sides(region, n_side);
    let lo = region.lower();
    let points = (0..n_side)
        .flat_map(|iy| {
            (0..n_side).map(move |ix| [lo[0] + (ix as f64 + 0.5) * hx, lo[1] + (iy as f64 + 0.5) * hy])
        })
        .collect();
    Ok(Grid {
        region: *region,
        n_side,
        points,
    })
}

fn cell_sides(region: &Rect, n_side: usize) -> [f64; 2] {
    let l = region.lengths();
    [l[0] / n_side as f64, l[1] / n_side as f64]
}

impl Grid {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn region(&self) -> &Rect {
        &self.region
    }

    pub fn cell_sides(&self) -> [f64; 2] {
        cell_sides(&self.region, self.n_side)
    }

    /// Cell area Δ.
    pub fn cell_area(&self) -> f64 {
        let [hx, hy] = self.cell_sides();
        hx * hy
    }

    /// Index of the cell containing `p`, if `p` is inside the region.
    pub fn cell_of(&self, p: Point) -> Option<usize> {
        if !self.region.contains(p) {
            return None;
        }
        let lo = self.region.lower();
        let h = self.cell_sides();
        let idx = |d: usize| (((p[d] - lo[d]) / h[d]).floor().max(0.0) as usize).min(self.n_side - 1);
        Some(idx(1) * self.n_side + idx(0))
    }

    /// Uniform point inside cell `i`.
    pub fn jitter<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Point {
        let [hx, hy] = self.cell_sides();
        let c = self.points[i];
        [
            c[0] + (rng.random::<f64>() - 0.5) * hx,
            c[1] + (rng.random::<f64>() - 0.5) * hy,
        ]
    }
}

/// `Δ · [K(y_i, y_j)]` over the grid.
pub fn scaled_gram<K: Kernel + ?Sized>(kernel: &K, grid: &Grid) -> Mat<f64> {
    let mut m = kernel.gram(grid.points());
    let delta = grid.cell_area();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= delta;
        }
    }
    m
}

/// Eigenvalues (and optionally eigenvectors) of the cell-area scaled grid
/// matrix of a kernel.
#[derive(Debug, Clone)]
pub struct GridEig {
    grid: Grid,
    /// Descending, clamped to `[0, 1]`.
    eigvals: Vec<f64>,
    /// Column `k` pairs with `eigvals[k]`.
    eigvecs: Option<Mat<f64>>,
    raw_max: f64,
    raw_min: f64,
    trace: f64,
}

impl GridEig {
    pub fn compute<K: Kernel + ?Sized>(kernel: &K, grid: &Grid, with_vectors: bool) -> Result<Self> {
        Self::from_scaled_matrix(scaled_gram(kernel, grid), grid.clone(), with_vectors)
    }

    /// Decomposes an already assembled `Δ·K̃` matrix.
    pub fn from_scaled_matrix(m: Mat<f64>, grid: Grid, with_vectors: bool) -> Result<Self> {
        let trace = (0..m.nrows()).map(|i| m[(i, i)]).sum();
        let (mut raw, vecs) = if with_vectors {
            let evd = m
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
            let s: Vec<f64> = evd.S().column_vector().iter().copied().collect();
            (s, Some(evd.U().to_owned()))
        } else {
            let s = m
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
            (s, None)
        };
        // descending order; faer returns ascending
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
        let eigvecs = vecs.map(|u| Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, order[j])]));
        raw = order.iter().map(|&i| raw[i]).collect();

        let raw_max = raw.first().copied().unwrap_or(0.0);
        let raw_min = raw.last().copied().unwrap_or(0.0);
        if raw_max > 1.0 + 1e-6 {
            warn!("grid eigenvalue {raw_max:.6} exceeds 1; clamping (kernel close to the existence boundary or grid too coarse)");
        }
        let eigvals = raw.into_iter().map(|l| l.clamp(0.0, 1.0)).collect();
        Ok(Self {
            grid,
            eigvals,
            eigvecs,
            raw_max,
            raw_min,
            trace,
        })
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> Option<&Mat<f64>> {
        self.eigvecs.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cell_area(&self) -> f64 {
        self.grid.cell_area()
    }

    /// Largest and smallest eigenvalue before clamping.
    pub fn raw_range(&self) -> (f64, f64) {
        (self.raw_max, self.raw_min)
    }

    /// `Δ Σ_i K(y_i, y_i)`, the quadrature trace.
    pub fn quadrature_trace(&self) -> f64 {
        self.trace
    }

    pub fn eigen_sum(&self) -> f64 {
        self.eigvals.iter().sum()
    }
}

/// Grid eigendecomposition of `kernel` on its own region.
pub fn grid_eigendecompose<K: Kernel + ?Sized>(kernel: &K, n_side: usize) -> Result<GridEig> {
    let grid = grid_discretize(kernel.region(), n_side)?;
    GridEig::compute(kernel, &grid, false)
}

/// Midpoint-rule trace `Δ Σ_i K(y_i, y_i)`, clamped at zero.
pub fn palm_trace<K: Kernel + ?Sized>(kernel: &K, n_side: usize) -> Result<f64> {
    let grid = grid_discretize(kernel.region(), n_side)?;
    Ok(grid_trace(kernel, &grid))
}

pub(crate) fn grid_trace<K: Kernel + ?Sized>(kernel: &K, grid: &Grid) -> f64 {
    let s: f64 = grid.points().iter().map(|&y| kernel.diag(y)).sum();
    (s * grid.cell_area()).max(0.0)
}
