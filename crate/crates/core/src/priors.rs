//! Prior ingredients: the three-parameter beta Lévy intensity, beta mark
//! laws, gamma mixing laws and count laws, plus the scalar integrals every
//! posterior formula consumes.
//!
//! All beta-function ratios are evaluated as log-gamma differences so that
//! sample sizes in the tens of thousands do not underflow.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, Gamma, Poisson};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{Point, Rect};
use crate::poibin::{negbin_pmf, poisson_pmf, Pmf};

/// A probability density on a rectangle together with a sampler for it.
pub trait SpatialDensity: Send + Sync + fmt::Debug {
    fn region(&self) -> &Rect;

    /// Density with respect to Lebesgue measure; zero outside the support.
    fn density(&self, x: Point) -> f64;

    fn sample(&self, rng: &mut dyn RngCore) -> Point;
}

/// Uniform density on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformDensity(pub Rect);

impl SpatialDensity for UniformDensity {
    fn region(&self) -> &Rect {
        &self.0
    }

    fn density(&self, x: Point) -> f64 {
        if self.0.contains(x) {
            1.0 / self.0.area()
        } else {
            0.0
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Point {
        self.0.sample_uniform(rng)
    }
}

pub type BaseMeasure = Arc<dyn SpatialDensity>;

/// Homogeneous three-parameter beta Lévy intensity
/// `γ s^{−1−α} (1 − s)^{β+α−1} ds G0(dx)` on `(0, 1]`.
#[derive(Debug, Clone)]
pub struct BetaLevy {
    gamma: f64,
    alpha: f64,
    beta: f64,
    base: BaseMeasure,
}

impl BetaLevy {
    /// Intensity with a uniform base density on `region`.
    pub fn new(gamma: f64, alpha: f64, beta: f64, region: Rect) -> Result<Self> {
        Self::with_base(gamma, alpha, beta, Arc::new(UniformDensity(region)))
    }

    /// Requires `γ > 0`, `0 ≤ α < 1` and `β + α > 0`, under which each
    /// observation displays finitely many features almost surely.
    pub fn with_base(gamma: f64, alpha: f64, beta: f64, base: BaseMeasure) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain(format!("mass gamma must be positive, got {gamma}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::domain(format!("discount alpha must be in [0, 1), got {alpha}")));
        }
        if !(beta + alpha > 0.0 && beta.is_finite()) {
            return Err(Error::domain(format!(
                "concentration needs beta + alpha > 0, got beta = {beta}, alpha = {alpha}"
            )));
        }
        Ok(Self {
            gamma,
            alpha,
            beta,
            base,
        })
    }

    /// Same intensity with a different discount `α`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::with_base(self.gamma, alpha, self.beta, self.base.clone())
    }

    /// Same intensity scaled to total mass multiplier `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::with_base(gamma, self.alpha, self.beta, self.base.clone())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    /// Unscaled Lévy density `s^{−1−α}(1 − s)^{β+α−1}`.
    pub fn density(&self, s: f64) -> f64 {
        if s <= 0.0 || s > 1.0 {
            return 0.0;
        }
        s.powf(-1.0 - self.alpha) * (1.0 - s).powf(self.beta + self.alpha - 1.0)
    }

    /// `φ_n = γ Σ_{i<n} B(1 − α, β + α + i)`: expected number of distinct
    /// features displayed by the first `n` observations.
    pub fn varphi(&self, n: usize) -> f64 {
        (0..n).map(|i| self.new_feature_rate(i)).sum()
    }

    /// `λ_n = γ B(1 − α, β + α + n)`: expected number of new features in
    /// observation `n + 1`.
    pub fn new_feature_rate(&self, n: usize) -> f64 {
        self.gamma * ln_beta(1.0 - self.alpha, self.beta + self.alpha + n as f64).exp()
    }

    /// `log γ B(m − α, n − m + β + α)`, the log of `∫ s^m (1 − s)^{n−m} ρ(ds)`.
    pub fn ln_feature_factor(&self, m: usize, n: usize) -> Result<f64> {
        if m == 0 || m > n {
            return Err(Error::domain(format!(
                "feature count must satisfy 1 <= m <= n, got m = {m}, n = {n}"
            )));
        }
        Ok(self.gamma.ln()
            + ln_beta(m as f64 - self.alpha, (n - m) as f64 + self.beta + self.alpha))
    }

    pub fn feature_factor(&self, m: usize, n: usize) -> Result<f64> {
        self.ln_feature_factor(m, n).map(f64::exp)
    }

    /// `γ ∫_eps^1 ρ(ds)`, the mean number of atoms with weight at least `eps`.
    pub fn mass_above(&self, eps: f64) -> Result<f64> {
        let parts = self.mass_parts(eps)?;
        Ok(self.gamma * (parts.low + parts.high))
    }

    /// Unscaled masses of `ρ` on `[eps, split)` and `[split, 1]` with
    /// `split = max(1/2, eps)`.
    pub(crate) fn mass_parts(&self, eps: f64) -> Result<MassParts> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!(
                "truncation level must be positive (the intensity has infinite mass), got {eps}"
            )));
        }
        if eps >= 1.0 {
            return Ok(MassParts {
                split: 1.0,
                low: 0.0,
                high: 0.0,
            });
        }
        let split = 0.5f64.max(eps);
        // log-scale substitution s = e^u on the part near zero
        let low = if eps < split {
            let f = |u: f64| {
                let s = u.exp();
                s.powf(-self.alpha) * (1.0 - s).powf(self.beta + self.alpha - 1.0)
            };
            quadrature::integrate(f, eps.ln(), split.ln(), 1e-13).integral
        } else {
            0.0
        };
        let high = quadrature::integrate(|s| self.density(s), split, 1.0, 1e-13).integral;
        Ok(MassParts { split, low, high })
    }

    /// `γ ∫_0^eps s ρ(ds)`: expected number of features per observation lost
    /// by discarding atoms with weight below `eps`.
    pub fn truncation_bias(&self, eps: f64) -> f64 {
        if eps <= 0.0 {
            return 0.0;
        }
        let top = eps.min(1.0);
        self.gamma
            * quadrature::integrate(|s| s * self.density(s), 0.0, top, 1e-14).integral
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MassParts {
    pub split: f64,
    pub low: f64,
    pub high: f64,
}

/// Beta law of feature weights, `Beta(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMarkLaw {
    a: f64,
    b: f64,
}

impl BetaMarkLaw {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::domain(format!("beta mark parameters must be positive, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// `log g(n; a, b) = log B(a, b + n) − log B(a, b)`.
    pub fn ln_kappa(&self, n: usize) -> f64 {
        ln_beta(self.a, self.b + n as f64) - ln_beta(self.a, self.b)
    }

    /// `g(n; a, b) = E[(1 − S)^n]`, the probability that a feature is missed
    /// by `n` observations.
    pub fn kappa(&self, n: usize) -> f64 {
        self.ln_kappa(n).exp()
    }

    /// `E[S (1 − S)^n] = B(a + 1, b + n) / B(a, b)`.
    pub fn survival_weighted_mean(&self, n: usize) -> f64 {
        (ln_beta(self.a + 1.0, self.b + n as f64) - ln_beta(self.a, self.b)).exp()
    }

    /// `E[S (1 − S)^n] / E[(1 − S)^n] = a / (a + b + n)`.
    pub fn c_p(&self, n: usize) -> f64 {
        self.a / (self.a + self.b + n as f64)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Beta::new(self.a, self.b).expect("validated parameters").sample(rng)
    }
}

/// Gamma law (shape, rate) of the random scale of a mixed Poisson prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMixing {
    shape: f64,
    rate: f64,
}

impl GammaMixing {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::domain(format!(
                "gamma mixing needs positive shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Law of the number of atoms of a mixed binomial prior.
///
/// The negative binomial counts failures before the `r`-th success, with
/// success probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountLaw {
    Poisson { lambda: f64 },
    NegBinomial { r: f64, p: f64 },
}

impl CountLaw {
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("Poisson mean must be >= 0, got {lambda}")));
        }
        Ok(CountLaw::Poisson { lambda })
    }

    pub fn neg_binomial(r: f64, p: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("negative binomial r must be > 0, got {r}")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("negative binomial p must be in (0, 1], got {p}")));
        }
        Ok(CountLaw::NegBinomial { r, p })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CountLaw::Poisson { lambda } => lambda,
            CountLaw::NegBinomial { r, p } => r * (1.0 - p) / p,
        }
    }

    /// Log probability of `m`; `-inf` outside the support.
    pub fn ln_pmf(&self, m: usize) -> f64 {
        let mf = m as f64;
        match *self {
            CountLaw::Poisson { lambda } => {
                if lambda == 0.0 {
                    if m == 0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    -lambda + mf * lambda.ln() - ln_gamma(mf + 1.0)
                }
            }
            CountLaw::NegBinomial { r, p } => {
                if p == 1.0 {
                    return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
                }
                ln_gamma(mf + r) - ln_gamma(r) - ln_gamma(mf + 1.0) + r * p.ln() + mf * (1.0 - p).ln()
            }
        }
    }

    /// Truncated pmf.
    pub fn pmf(&self, tail_eps: f64) -> Result<Pmf> {
        match *self {
            CountLaw::Poisson { lambda } => poisson_pmf(lambda, tail_eps),
            CountLaw::NegBinomial { r, p } => negbin_pmf(r, p, tail_eps),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let poisson = |mean: f64, rng: &mut R| -> usize {
            if mean <= 0.0 {
                0
            } else {
                Poisson::new(mean).expect("positive mean").sample(rng) as usize
            }
        };
        match *self {
            CountLaw::Poisson { lambda } => poisson(lambda, rng),
            CountLaw::NegBinomial { r, p } => {
                if p == 1.0 {
                    return 0;
                }
                let mean = Gamma::new(r, (1.0 - p) / p).expect("validated").sample(rng);
                poisson(mean, rng)
            }
        }
    }
}
