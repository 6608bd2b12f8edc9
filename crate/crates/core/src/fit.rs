//! Hyperparameter estimation: empirical Bayes for the DPP model and a
//! random-walk Metropolis sampler for the discount of a three-parameter
//! beta process with a prior on it.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::infer_crm::{Dependence, NewFeatureLaw};
use crate::infer_dpp::{dpp_log_marginal, DppModel};
use crate::kernels::{GaussianDppKernel, Rect};
use crate::poibin::{poisson_pmf, Pmf, DEFAULT_TAIL_EPS};
use crate::priors::{BetaLevy, BetaMarkLaw};
use crate::simulate::FeatureSample;

/// DPP hyperparameters: beta marks `(a, b)` and Gaussian kernel `(ρ, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppParams {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub alpha: f64,
}

impl DppParams {
    pub fn model(&self, region: Rect, n_grid: usize) -> Result<DppModel> {
        DppModel::new(
            GaussianDppKernel::new(self.rho, self.alpha, region)?,
            BetaMarkLaw::new(self.a, self.b)?,
            n_grid,
        )
    }

    /// `ρ π α²`, which must stay below one.
    pub fn repulsion(&self) -> f64 {
        self.rho * PI * self.alpha * self.alpha
    }

    /// `(log a, log b, logit(ρπα²), log α)`.
    pub fn to_unconstrained(&self) -> [f64; 4] {
        let q = self.repulsion();
        [self.a.ln(), self.b.ln(), (q / (1.0 - q)).ln(), self.alpha.ln()]
    }

    pub fn from_unconstrained(x: &[f64; 4]) -> Self {
        // kept off the existence boundary so large logits stay valid
        let q = (1.0 / (1.0 + (-x[2]).exp())).min(1.0 - 1e-10);
        let alpha = x[3].exp();
        Self {
            a: x[0].exp(),
            b: x[1].exp(),
            rho: q / (PI * alpha * alpha),
            alpha,
        }
    }

    /// A data-driven starting point.
    ///
    /// Marks start at `a = 1` with `b` matched to the mean observed
    /// frequency; the intensity covers the observed features inflated by
    /// the probability of seeing a feature at all; the kernel starts
    /// halfway to the existence boundary.
    pub fn initial_guess(sample: &FeatureSample, region: &Rect) -> Result<Self> {
        if sample.k() == 0 || sample.n() == 0 {
            return Err(Error::DegenerateData("no observed features to start from".into()));
        }
        let n = sample.n() as f64;
        let mean_freq = sample.counts().iter().sum::<usize>() as f64 / (sample.k() as f64 * n);
        let a = 1.0;
        let b = ((1.0 - mean_freq) / mean_freq).max(0.5);
        let seen = 1.0 - BetaMarkLaw::new(a, b)?.kappa(sample.n());
        let rho = sample.k() as f64 / (region.area() * seen);
        let alpha = (0.5 / (PI * rho)).sqrt();
        Ok(Self { a, b, rho, alpha })
    }
}

/// Result of an empirical-Bayes fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: DppParams,
    pub log_marginal: f64,
    pub initial_log_marginal: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Simplex diameter, in unconstrained coordinates, at which to stop.
    pub tol: f64,
    /// Initial simplex step in every free coordinate.
    pub step: f64,
    /// Which of `(a, b, ρπα², α)` are optimized; the rest stay at `init`.
    pub free: [bool; 4],
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            budget: 600,
            tol: 1e-6,
            step: 0.5,
            free: [true; 4],
        }
    }
}

/// Maximizes [`dpp_log_marginal`] over the hyperparameters by Nelder–Mead
/// in unconstrained coordinates, so every trial point is a valid kernel.
pub fn fit_empirical_bayes(
    sample: &FeatureSample,
    region: &Rect,
    n_grid: usize,
    init: DppParams,
    options: &FitOptions,
) -> Result<FitResult> {
    if sample.k() == 0 {
        return Err(Error::DegenerateData(
            "empirical Bayes needs at least one observed feature".into(),
        ));
    }
    let x0 = init.to_unconstrained();
    let free: Vec<usize> = (0..4).filter(|&i| options.free[i]).collect();
    let embed = |y: &[f64]| {
        let mut x = x0;
        for (&i, &v) in free.iter().zip(y) {
            x[i] = v;
        }
        x
    };
    let objective = |y: &[f64]| -> f64 {
        let p = DppParams::from_unconstrained(&embed(y));
        match p.model(*region, n_grid).and_then(|m| dpp_log_marginal(&m, sample)) {
            Ok(v) if v.is_finite() => -v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::debug!("objective failed at {p:?}: {e}");
                f64::INFINITY
            }
        }
    };
    let start: Vec<f64> = free.iter().map(|&i| x0[i]).collect();
    let initial = objective(&start);
    let nm = nelder_mead(objective, &start, options.step, options.tol, options.budget.max(1));
    if !nm.value.is_finite() {
        return Err(Error::DegenerateData(
            "the marginal likelihood is not finite anywhere the optimizer looked".into(),
        ));
    }
    log::info!(
        "empirical Bayes: {} iterations, {} evaluations, log marginal {:.4}",
        nm.iterations,
        nm.evaluations,
        -nm.value
    );
    Ok(FitResult {
        params: DppParams::from_unconstrained(&embed(&nm.point)),
        log_marginal: -nm.value,
        initial_log_marginal: -initial,
        converged: nm.converged,
        iterations: nm.iterations,
        evaluations: nm.evaluations,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct NelderMead {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Minimizes `f` with the standard Nelder–Mead moves. Non-finite values are
/// treated as `+∞`. Stops when every vertex is within `tol` of the best
/// one or after `budget` evaluations.
pub(crate) fn nelder_mead<F>(f: F, x0: &[f64], step: f64, tol: f64, budget: usize) -> NelderMead
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if d == 0 {
        let value = eval(x0);
        return NelderMead {
            point: Vec::new(),
            value,
            converged: true,
            iterations: 0,
            evaluations: 1,
        };
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        if evaluations.get() >= budget {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|x| x[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=d {
            let x: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(v, b)| b + 0.5 * (v - b))
                .collect();
            values[i] = eval(&x);
            simplex[i] = x;
        }
    }
    NelderMead {
        point: simplex[0].clone(),
        value: values[0],
        converged,
        iterations,
        evaluations: evaluations.get(),
    }
}

/// Prior density of the discount `α` on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPrior {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl AlphaPrior {
    pub fn ln_density(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            AlphaPrior::Uniform => 0.0,
            AlphaPrior::Beta { a, b } => (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b),
        }
    }
}

/// Unnormalized log posterior of the discount given the sample:
/// `−γ Σ_{h<n} B(1 − α, h + β + α) + Σ_ℓ log γB(m_ℓ − α, n − m_ℓ + β + α)
/// + log π(α)`, and `−∞` outside `(0, 1)`.
pub fn alpha_log_posterior(alpha: f64, sample: &FeatureSample, gamma: f64, beta: f64, prior: &AlphaPrior) -> f64 {
    if !(alpha > 0.0 && alpha < 1.0) {
        return f64::NEG_INFINITY;
    }
    let n = sample.n();
    let phi: f64 = (0..n)
        .map(|h| ln_beta(1.0 - alpha, h as f64 + beta + alpha).exp())
        .sum();
    let features: f64 = sample
        .counts()
        .iter()
        .map(|&m| gamma.ln() + ln_beta(m as f64 - alpha, (n - m) as f64 + beta + alpha))
        .sum();
    -gamma * phi + features + prior.ln_density(alpha)
}

/// Draws from the discount posterior, burn-in removed.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaChain {
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
}

impl AlphaChain {
    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }

    /// Every `every`-th draw.
    pub fn thinned(&self, every: usize) -> AlphaChain {
        AlphaChain {
            draws: self.draws.iter().step_by(every.max(1)).copied().collect(),
            acceptance_rate: self.acceptance_rate,
        }
    }
}

/// Fraction of the iterations discarded as burn-in.
pub const BURN_IN: f64 = 0.2;
/// Starting value of the chain.
pub const ALPHA_INIT: f64 = 0.5;
/// Default proposal scale on the logit scale.
pub const DEFAULT_STEP: f64 = 0.5;

/// Random-walk Metropolis on `logit α` with Gaussian proposals of scale
/// `step`, targeting [`alpha_log_posterior`] (with the logit Jacobian).
/// Starts at `α = 0.5` and drops the first 20% of iterations.
pub fn alpha_metropolis<R: Rng + ?Sized>(
    sample: &FeatureSample,
    gamma: f64,
    beta: f64,
    prior: &AlphaPrior,
    n_iter: usize,
    step: f64,
    rng: &mut R,
) -> Result<AlphaChain> {
    if n_iter == 0 {
        return Err(Error::domain("the chain needs at least one iteration"));
    }
    if !(gamma > 0.0 && beta > 0.0) {
        return Err(Error::domain(format!("need gamma > 0 and beta > 0, got {gamma}, {beta}")));
    }
    let target = |theta: f64| {
        let a = 1.0 / (1.0 + (-theta).exp());
        alpha_log_posterior(a, sample, gamma, beta, prior) + a.ln() + (1.0 - a).ln()
    };
    let mut theta = (ALPHA_INIT / (1.0 - ALPHA_INIT)).ln();
    let mut current = target(theta);
    let burn = (n_iter as f64 * BURN_IN) as usize;
    let mut draws = Vec::with_capacity(n_iter - burn);
    let mut accepted = 0usize;
    for it in 0..n_iter {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = theta + step * z;
        let value = target(proposal);
        if value.is_finite() && rng.random::<f64>().ln() < value - current {
            theta = proposal;
            current = value;
            accepted += 1;
        }
        if it >= burn {
            draws.push(1.0 / (1.0 + (-theta).exp()));
        }
    }
    Ok(AlphaChain {
        draws,
        acceptance_rate: accepted as f64 / n_iter as f64,
    })
}

/// New features at step `n + 1` averaged over the chain:
/// a mixture of `Poisson(λ_n(α_t))`.
pub fn random_alpha_predictive(chain: &AlphaChain, levy_template: &BetaLevy, n: usize) -> Result<NewFeatureLaw> {
    if chain.draws.is_empty() {
        return Err(Error::domain("the chain has no draws"));
    }
    let mut mix: Vec<f64> = Vec::new();
    let mut last: Option<(f64, Pmf)> = None;
    for &a in &chain.draws {
        // Metropolis chains repeat values; reuse the previous pmf when so
        let pmf = match &last {
            Some((prev, p)) if *prev == a => p.clone(),
            _ => poisson_pmf(levy_template.with_alpha(a)?.new_feature_rate(n), DEFAULT_TAIL_EPS)?,
        };
        if mix.len() < pmf.probs().len() {
            mix.resize(pmf.probs().len(), 0.0);
        }
        for (j, p) in pmf.iter() {
            mix[j] += p;
        }
        last = Some((a, pmf));
    }
    Ok(NewFeatureLaw {
        count: Pmf::from_weights(mix, 0)?,
        depends_on: Dependence::FrequencySpectrum,
    })
}
