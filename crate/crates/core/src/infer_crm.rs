//! Marginal likelihood, weight posteriors and predictive laws for the
//! Poisson, mixed Poisson and mixed binomial priors.
//!
//! The predictive functions take only the statistics the corresponding
//! prior is allowed to depend on, so their signatures state the dependence.

use std::fmt;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::poibin::{negbin_pmf, poisson_pmf, Pmf, DEFAULT_TAIL_EPS};
use crate::priors::{BetaLevy, BetaMarkLaw, CountLaw, GammaMixing};
use crate::simulate::FeatureSample;

/// Tail mass above which a truncated sum logs a warning.
const TRUNCATION_WARN: f64 = 1e-9;

/// Which sample statistics a predictive law depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependence {
    /// The sample size `n` only.
    SampleSize,
    /// `n` and the number of distinct features `k`.
    SizeAndCount,
    /// `n`, `k` and the frequency counts `m`.
    FrequencySpectrum,
    /// `n`, `k` and the feature labels `x*`.
    Labels,
}

impl fmt::Display for Dependence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dependence::SampleSize => "n",
            Dependence::SizeAndCount => "n,k",
            Dependence::FrequencySpectrum => "n,k,m",
            Dependence::Labels => "n,k,x*",
        })
    }
}

/// Law of the new features displayed by the next observation. Their
/// locations are always iid from the base density here.
#[derive(Debug, Clone, PartialEq)]
pub struct NewFeatureLaw {
    pub count: Pmf,
    pub depends_on: Dependence,
}

/// Independent beta posteriors `Beta(a_ℓ, b_ℓ)` of the observed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPosterior {
    params: Vec<(f64, f64)>,
}

impl WeightPosterior {
    pub fn new(params: Vec<(f64, f64)>) -> Result<Self> {
        if let Some((l, &(a, b))) = params.iter().enumerate().find(|(_, &(a, b))| !(a > 0.0 && b > 0.0)) {
            return Err(Error::domain(format!("feature {l} has non-positive beta parameters ({a}, {b})")));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[(f64, f64)] {
        &self.params
    }

    /// `E[S*_ℓ]`, which is also the probability that feature `ℓ` reappears
    /// in the next observation.
    pub fn means(&self) -> Vec<f64> {
        self.params.iter().map(|&(a, b)| a / (a + b)).collect()
    }
}

/// `log` of the marginal likelihood of `sample` under the Poisson prior:
/// `−φ_n + Σ_ℓ [log γB(m_ℓ − α, n − m_ℓ + β + α) + log g0(x*_ℓ)]`.
pub fn crm_log_marginal(levy: &BetaLevy, sample: &FeatureSample) -> Result<f64> {
    let n = sample.n();
    let base = levy.base();
    let mut terms = Vec::with_capacity(sample.k());
    for (l, f) in sample.features().iter().enumerate() {
        let g0 = base.density(f.location);
        if !(g0 > 0.0) {
            return Err(Error::domain(format!(
                "feature {l} at ({}, {}) lies outside the base density's support",
                f.location[0], f.location[1]
            )));
        }
        terms.push(levy.ln_feature_factor(f.count, n)? + g0.ln());
    }
    // sorting makes the floating-point sum independent of feature order
    terms.sort_by(f64::total_cmp);
    Ok(-levy.varphi(n) + terms.iter().sum::<f64>())
}

pub fn crm_weight_posterior(levy: &BetaLevy, sample: &FeatureSample) -> WeightPosterior {
    let n = sample.n() as f64;
    let params = sample
        .features()
        .iter()
        .map(|f| {
            let m = f.count as f64;
            let a = m - levy.alpha();
            let b = n - m + levy.beta() + levy.alpha();
            assert!(a > 0.0 && b > 0.0, "posterior beta parameters must be positive");
            (a, b)
        })
        .collect();
    WeightPosterior { params }
}

/// Poisson(λ_n) new features at step `n + 1`.
pub fn crm_predictive_new(levy: &BetaLevy, n: usize) -> Result<NewFeatureLaw> {
    Ok(NewFeatureLaw {
        count: poisson_pmf(levy.new_feature_rate(n), DEFAULT_TAIL_EPS)?,
        depends_on: Dependence::SampleSize,
    })
}

/// Features first displayed by any of observations `n + 1, …, n + steps`:
/// Poisson with mean `Σ_{i=n}^{n+steps−1} λ_i`.
pub fn crm_predictive_new_over(levy: &BetaLevy, n: usize, steps: usize) -> Result<NewFeatureLaw> {
    let mean = (n..n + steps).map(|i| levy.new_feature_rate(i)).sum();
    Ok(NewFeatureLaw {
        count: poisson_pmf(mean, DEFAULT_TAIL_EPS)?,
        depends_on: Dependence::SampleSize,
    })
}

/// Conjugate update `Gamma(a0 + k, b0 + φ_n)` of the mixing law.
pub fn mp_posterior_gamma(mixing: &GammaMixing, levy: &BetaLevy, sample: &FeatureSample) -> Result<GammaMixing> {
    GammaMixing::new(
        mixing.shape() + sample.k() as f64,
        mixing.rate() + levy.varphi(sample.n()),
    )
}

/// Gamma-mixed Poisson new-feature count:
/// `NegBinomial(a0 + k, (b0 + φ_n) / (b0 + φ_n + λ_n))`.
///
/// The mass of `levy` is ignored; the mixing law replaces it.
pub fn mp_predictive_new(mixing: &GammaMixing, levy: &BetaLevy, n: usize, k: usize) -> Result<NewFeatureLaw> {
    let unit = levy.with_gamma(1.0)?;
    let rate = mixing.rate() + unit.varphi(n);
    let lambda = unit.new_feature_rate(n);
    Ok(NewFeatureLaw {
        count: negbin_pmf(mixing.shape() + k as f64, rate / (rate + lambda), DEFAULT_TAIL_EPS)?,
        depends_on: Dependence::SizeAndCount,
    })
}

/// Posterior law of the number `M′` of unseen atoms under a mixed binomial
/// prior, in closed form.
pub fn mb_posterior_count(count: &CountLaw, mark: &BetaMarkLaw, n: usize, k: usize) -> Result<Pmf> {
    check_support(count, k)?;
    let kappa = mark.kappa(n);
    match *count {
        CountLaw::Poisson { lambda } => poisson_pmf(lambda * kappa, DEFAULT_TAIL_EPS),
        CountLaw::NegBinomial { r, p } => negbin_pmf(r + k as f64, 1.0 - kappa * (1.0 - p), DEFAULT_TAIL_EPS),
    }
}

/// Law of the number of new features at step `n + 1` under a mixed
/// binomial prior, in closed form. Each unseen atom is displayed with
/// probability `c_p = a / (a + b + n)` given that it was missed so far.
pub fn mb_predictive_new(count: &CountLaw, mark: &BetaMarkLaw, n: usize, k: usize) -> Result<NewFeatureLaw> {
    check_support(count, k)?;
    let kappa = mark.kappa(n);
    let c = mark.c_p(n);
    let pmf = match *count {
        CountLaw::Poisson { lambda } => poisson_pmf(lambda * kappa * c, DEFAULT_TAIL_EPS)?,
        CountLaw::NegBinomial { r, p } => {
            let p_post = 1.0 - kappa * (1.0 - p);
            negbin_pmf(
                r + k as f64,
                p_post / (p_post + (1.0 - p) * kappa * c),
                DEFAULT_TAIL_EPS,
            )?
        }
    };
    Ok(NewFeatureLaw {
        count: pmf,
        depends_on: Dependence::SizeAndCount,
    })
}

fn check_support(count: &CountLaw, k: usize) -> Result<()> {
    let empty = match *count {
        CountLaw::Poisson { lambda } => lambda == 0.0 && k > 0,
        CountLaw::NegBinomial { p, .. } => p == 1.0 && k > 0,
    };
    if empty {
        return Err(Error::Inconsistent(format!(
            "the count law puts no mass on {k} or more atoms, so the observed sample has zero marginal probability"
        )));
    }
    Ok(())
}

/// `M′` by direct normalization of `q_M(m + k) (m + k)!/m! κ_n^m`, for any
/// count law with a log pmf.
///
/// The sum runs until the remaining terms are below `tail_eps` of the
/// accumulated mass, bounded geometrically once consecutive ratios fall
/// below one.
pub fn mb_posterior_count_generic<F>(ln_q: F, mark: &BetaMarkLaw, n: usize, k: usize, tail_eps: f64) -> Result<Pmf>
where
    F: Fn(usize) -> f64,
{
    let ln_kappa = mark.ln_kappa(n);
    let kf = k as f64;
    let term = |m: usize| -> f64 {
        let mf = m as f64;
        ln_q(m + k) + ln_gamma(mf + kf + 1.0) - ln_gamma(mf + 1.0) + mf * ln_kappa
    };
    const MAX_TERMS: usize = 10_000_000;
    let mut logs: Vec<f64> = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    let mut tail_bound = f64::INFINITY;
    for m in 0..MAX_TERMS {
        let t = term(m);
        logs.push(t);
        peak = peak.max(t);
        if m == 0 || !peak.is_finite() {
            if m > 1000 && !peak.is_finite() {
                break;
            }
            continue;
        }
        let prev = logs[m - 1];
        let ratio = (t - prev).exp();
        if t.is_finite() && ratio < 1.0 && t < peak {
            // terms decrease from here on for the families we support
            let mass_so_far: f64 = logs.iter().map(|&l| (l - peak).exp()).sum();
            let bound = (t - peak).exp() * ratio / (1.0 - ratio);
            if bound <= tail_eps * mass_so_far {
                tail_bound = bound / mass_so_far;
                break;
            }
        } else if t == f64::NEG_INFINITY && prev == f64::NEG_INFINITY && peak.is_finite() {
            // support ended
            tail_bound = 0.0;
            break;
        }
    }
    if !peak.is_finite() {
        return Err(Error::Inconsistent(format!(
            "the count law puts no mass on {k} or more atoms, so the observed sample has zero marginal probability"
        )));
    }
    if tail_bound > TRUNCATION_WARN {
        log::warn!("truncated posterior count sum leaves relative tail mass {tail_bound:.2e}");
    }
    Pmf::from_log_weights(&logs, 0)
}

/// New-feature count at step `n + 1` by binomial thinning of the generic
/// `M′` law with probability `c_p`.
pub fn mb_predictive_new_generic<F>(ln_q: F, mark: &BetaMarkLaw, n: usize, k: usize, tail_eps: f64) -> Result<NewFeatureLaw>
where
    F: Fn(usize) -> f64,
{
    let m_post = mb_posterior_count_generic(ln_q, mark, n, k, tail_eps)?;
    Ok(NewFeatureLaw {
        count: binomial_thin(&m_post, mark.c_p(n))?,
        depends_on: Dependence::SizeAndCount,
    })
}

/// Law of `Binomial(Z, c)` with `Z` distributed as `pmf`.
pub fn binomial_thin(pmf: &Pmf, c: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::domain(format!("thinning probability must be in [0, 1], got {c}")));
    }
    let top = pmf.max_count();
    let mut out = vec![0.0; top + 1];
    if c == 0.0 || c == 1.0 {
        for (z, p) in pmf.iter() {
            out[if c == 0.0 { 0 } else { z }] += p;
        }
        return Pmf::new(out, 0);
    }
    let (lc, lq) = (c.ln(), (1.0 - c).ln());
    for (z, p) in pmf.iter() {
        if p == 0.0 {
            continue;
        }
        let zf = z as f64;
        for (j, o) in out.iter_mut().enumerate().take(z + 1) {
            let jf = j as f64;
            let lb = ln_gamma(zf + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(zf - jf + 1.0) + jf * lc + (zf - jf) * lq;
            *o += p * lb.exp();
        }
    }
    Pmf::new(out, 0)
}
