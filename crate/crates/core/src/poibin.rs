//! Finite discrete distributions on the nonnegative integers.
//!
//! Every law here is stored as a [`Pmf`]: a finite probability vector plus
//! a support offset. Laws with infinite support (Poisson, negative binomial)
//! are truncated where the right tail drops below `tail_eps` and then
//! renormalized, so that downstream operations act exactly on the truncated
//! object.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Default right-tail mass discarded when truncating an infinite-support law.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

/// A probability mass function on `{offset, offset + 1, ..., offset + N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
    offset: usize,
}

impl Pmf {
    /// Builds a pmf from probabilities that already sum to one (within 1e-9).
    /// The vector is renormalized exactly.
    pub fn new(probs: Vec<f64>, offset: usize) -> Result<Self> {
        let total = checked_total(&probs)?;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NonNormalizable(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self::normalized(probs, total, offset))
    }

    /// Builds a pmf from nonnegative, unnormalized weights.
    pub fn from_weights(weights: Vec<f64>, offset: usize) -> Result<Self> {
        let total = checked_total(&weights)?;
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::NonNormalizable(format!(
                "weights have total mass {total}"
            )));
        }
        Ok(Self::normalized(weights, total, offset))
    }

    /// Builds a pmf from log-weights; `-inf` entries get probability zero.
    pub fn from_log_weights(log_weights: &[f64], offset: usize) -> Result<Self> {
        let max = log_weights
            .iter()
            .copied()
            .filter(|w| !w.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonNormalizable(
                "all log-weights are -inf or NaN".into(),
            ));
        }
        let weights = log_weights
            .iter()
            .map(|&w| if w.is_nan() { 0.0 } else { (w - max).exp() })
            .collect();
        Self::from_weights(weights, offset)
    }

    pub fn point_mass(at: usize) -> Self {
        Self {
            probs: vec![1.0],
            offset: at,
        }
    }

    fn normalized(mut probs: Vec<f64>, total: f64, offset: usize) -> Self {
        probs.iter_mut().for_each(|p| *p /= total);
        Self { probs, offset }
    }

    /// Probabilities of `offset, offset + 1, ...`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Largest count carrying an entry (possibly with zero mass).
    pub fn max_count(&self) -> usize {
        self.offset + self.probs.len() - 1
    }

    /// Probability of `count`; zero outside the stored support.
    pub fn prob(&self, count: usize) -> f64 {
        count
            .checked_sub(self.offset)
            .and_then(|i| self.probs.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    /// `(count, probability)` pairs over the stored support.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (usize, f64)> + ExactSizeIterator + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (i + self.offset, p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(m, p)| m as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.iter()
            .map(|(m, p)| {
                let d = m as f64 - mean;
                d * d * p
            })
            .sum()
    }

    /// The law of `X + by`.
    pub fn shifted(mut self, by: usize) -> Self {
        self.offset += by;
        self
    }

    /// Total-variation distance `½ Σ |p(m) − q(m)|`.
    pub fn total_variation(&self, other: &Pmf) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = self.max_count().max(other.max_count());
        0.5 * (lo..=hi)
            .map(|m| (self.prob(m) - other.prob(m)).abs())
            .sum::<f64>()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, p) in self.iter() {
            acc += p;
            if u < acc {
                return m;
            }
        }
        // round-off: fall back to the last count with positive mass
        self.iter()
            .rev()
            .find(|&(_, p)| p > 0.0)
            .map(|(m, _)| m)
            .unwrap_or(self.offset)
    }

    /// Drops trailing entries whose combined mass is below `tol`.
    pub fn trim_tail(mut self, tol: f64) -> Self {
        let mut tail = 0.0;
        while self.probs.len() > 1 {
            let last = *self.probs.last().unwrap();
            if tail + last >= tol {
                break;
            }
            tail += last;
            self.probs.pop();
        }
        let total: f64 = self.probs.iter().sum();
        Self::normalized(self.probs, total, self.offset)
    }
}

fn checked_total(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::NonNormalizable("empty probability vector".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::domain(format!(
            "probability weights must be finite and nonnegative, got {v}"
        )));
    }
    Ok(values.iter().sum())
}

/// Success probabilities of independent Bernoulli trials, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessProbs(Vec<f64>);

impl SuccessProbs {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if let Some((i, l)) = lambdas
            .iter()
            .enumerate()
            .find(|(_, l)| !(0.0..=1.0).contains(*l))
        {
            return Err(Error::domain(format!(
                "success probability #{i} = {l} is outside [0, 1]"
            )));
        }
        Ok(Self(lambdas))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.0.iter().map(|l| l * l).sum()
    }
}

/// Exact law of the number of successes among independent Bernoulli trials.
///
/// One Bernoulli factor is convolved in per step, in the given order, which
/// costs O(n²) and involves only additions of nonnegative terms.
pub fn poisson_binomial_pmf(lambdas: &SuccessProbs) -> Pmf {
    let mut probs = Vec::with_capacity(lambdas.0.len() + 1);
    probs.push(1.0);
    for &l in &lambdas.0 {
        probs.push(0.0);
        for j in (1..probs.len()).rev() {
            probs[j] = probs[j] * (1.0 - l) + probs[j - 1] * l;
        }
        probs[0] *= 1.0 - l;
    }
    let total: f64 = probs.iter().sum();
    Pmf::normalized(probs, total, 0)
}

/// Exponential tilting: the entry for count `m` becomes proportional to
/// `g^m · pmf(m)`.
pub fn tilt_pmf(pmf: &Pmf, g: f64) -> Result<Pmf> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::domain(format!("tilt factor must be positive, got {g}")));
    }
    let ln_g = g.ln();
    let log_weights: Vec<f64> = pmf
        .probs
        .iter()
        .enumerate()
        .map(|(m, &p)| {
            if p > 0.0 {
                p.ln() + m as f64 * ln_g
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Pmf::from_log_weights(&log_weights, pmf.offset).map_err(|_| Error::DegenerateTilt)
}

/// Poisson law with the given mean, truncated where the right tail mass
/// falls below `tail_eps`.
pub fn poisson_pmf(mean: f64, tail_eps: f64) -> Result<Pmf> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain(format!("Poisson mean must be >= 0, got {mean}")));
    }
    check_tail_eps(tail_eps)?;
    if mean == 0.0 {
        return Ok(Pmf::point_mass(0));
    }
    let ln_mean = mean.ln();
    let mut probs = Vec::new();
    for m in 0usize.. {
        let p = (-mean + m as f64 * ln_mean - ln_gamma(m as f64 + 1.0)).exp();
        probs.push(p);
        let q = mean / (m as f64 + 1.0);
        if q < 1.0 && p * q / (1.0 - q) < tail_eps {
            break;
        }
    }
    let total = probs.iter().sum();
    Ok(Pmf::normalized(probs, total, 0))
}

/// Le Cam approximation of a Poisson-binomial law: Poisson with mean equal
/// to the sum of the success probabilities (here, a kernel trace).
pub fn le_cam_pmf(trace_sum: f64, tail_eps: f64) -> Result<Pmf> {
    poisson_pmf(trace_sum, tail_eps)
}

/// Negative binomial law of the number of failures observed before the
/// `r`-th success, with success probability `p`:
///
/// `P(K = k) = Γ(k + r) / (k! Γ(r)) · p^r (1 − p)^k`, mean `r(1 − p)/p`.
///
/// Truncated where the right tail mass falls below `tail_eps`.
pub fn negbin_pmf(r: f64, p: f64, tail_eps: f64) -> Result<Pmf> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("negative binomial r must be > 0, got {r}")));
    }
    if p == 0.0 {
        return Err(Error::NonNormalizable(
            "negative binomial with p = 0 has no finite mass".into(),
        ));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("negative binomial p must be in (0, 1], got {p}")));
    }
    check_tail_eps(tail_eps)?;
    if p == 1.0 {
        return Ok(Pmf::point_mass(0));
    }
    let ln_fail = (1.0 - p).ln();
    let head = r * p.ln() - ln_gamma(r);
    let mut probs = Vec::new();
    for k in 0usize.. {
        let kf = k as f64;
        let lp = head + ln_gamma(kf + r) - ln_gamma(kf + 1.0) + kf * ln_fail;
        let prob = lp.exp();
        probs.push(prob);
        // successive ratios (k + r)/(k + 1)·(1 − p) decrease in k when r >= 1
        // and increase towards 1 − p when r < 1
        let ratio = (kf + r) / (kf + 1.0) * (1.0 - p);
        let q = if r >= 1.0 { ratio } else { 1.0 - p };
        if q < 1.0 && ratio < 1.0 && prob * q / (1.0 - q) < tail_eps {
            break;
        }
    }
    let total = probs.iter().sum();
    Ok(Pmf::normalized(probs, total, 0))
}

fn check_tail_eps(tail_eps: f64) -> Result<()> {
    if tail_eps > 0.0 && tail_eps < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("tail_eps must be in (0, 1), got {tail_eps}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pb(l: &[f64]) -> Pmf {
        poisson_binomial_pmf(&SuccessProbs::new(l.to_vec()).unwrap())
    }

    fn enumerate(l: &[f64]) -> Vec<f64> {
        let n = l.len();
        let mut out = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let mut p = 1.0;
            for (i, li) in l.iter().enumerate() {
                p *= if mask >> i & 1 == 1 { *li } else { 1.0 - li };
            }
            out[mask.count_ones() as usize] += p;
        }
        out
    }

    #[test]
    fn poisson_binomial_small_cases() {
        assert_eq!(pb(&[]).probs(), &[1.0]);
        let two = pb(&[0.5, 0.5]);
        for (a, b) in two.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let three = pb(&[0.2, 0.7, 0.1]);
        for (a, b) in three.probs().iter().zip([0.216, 0.582, 0.188, 0.014]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        assert!(matches!(
            SuccessProbs::new(vec![0.2, 1.1]),
            Err(Error::Domain(_))
        ));
        assert!(SuccessProbs::new(vec![-0.1]).is_err());
        assert!(SuccessProbs::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn tilt_examples() {
        let p = Pmf::new(vec![0.5, 0.5], 0).unwrap();
        assert_eq!(tilt_pmf(&p, 1.0).unwrap(), p);
        let t = tilt_pmf(&p, 0.5).unwrap();
        assert_abs_diff_eq!(t.probs()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.probs()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert!(tilt_pmf(&p, 0.0).is_err());
        assert!(tilt_pmf(&p, f64::INFINITY).is_err());
    }

    #[test]
    fn tilted_poisson_is_poisson() {
        let lambda = 3.7;
        let g = 0.4;
        let base = poisson_pmf(lambda, 1e-14).unwrap();
        let tilted = tilt_pmf(&base, g).unwrap();
        let direct = poisson_pmf(g * lambda, 1e-14).unwrap();
        for m in 0..=tilted.max_count().max(direct.max_count()) {
            assert_abs_diff_eq!(tilted.prob(m), direct.prob(m), epsilon = 1e-10);
        }
    }

    #[test]
    fn le_cam_examples() {
        assert_eq!(le_cam_pmf(0.0, 1e-12).unwrap(), Pmf::point_mass(0));
        let p = le_cam_pmf(2.0, 1e-12).unwrap();
        // the cut tail of mass below 1e-12 is renormalized away
        assert_abs_diff_eq!(p.probs()[0], (-2.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.mean(), 2.0, epsilon = 1e-10);
        assert!(le_cam_pmf(-1.0, 1e-12).is_err());

        let l = [0.3, 0.2, 0.1];
        let tv = pb(&l).total_variation(&le_cam_pmf(0.6, 1e-14).unwrap());
        assert!(tv <= 0.14, "tv = {tv}");
    }

    #[test]
    fn negbin_examples() {
        let geo = negbin_pmf(1.0, 0.5, 1e-14).unwrap();
        for (k, p) in geo.probs().iter().take(10).enumerate() {
            assert_abs_diff_eq!(*p, 0.5f64.powi(k as i32 + 1), epsilon = 1e-13);
        }
        for (r, p) in [(1.0, 0.5), (7.0, 0.85), (0.3, 0.2), (12.5, 0.05)] {
            let pmf = negbin_pmf(r, p, 1e-14).unwrap();
            assert_abs_diff_eq!(pmf.mean(), r * (1.0 - p) / p, epsilon = 1e-8 * (1.0 + r / p));
        }
        // term-by-term against the gamma-function formula
        let pmf = negbin_pmf(7.0, 0.85, 1e-14).unwrap();
        for k in 0..12u32 {
            let kf = k as f64;
            let direct = statrs::function::gamma::gamma(kf + 7.0)
                / (statrs::function::gamma::gamma(kf + 1.0) * statrs::function::gamma::gamma(7.0))
                * 0.85f64.powf(7.0)
                * 0.15f64.powf(kf);
            assert_abs_diff_eq!(pmf.prob(k as usize), direct, epsilon = 1e-13);
        }
        assert!(matches!(negbin_pmf(2.0, 0.0, 1e-12), Err(Error::NonNormalizable(_))));
        assert_eq!(negbin_pmf(2.0, 1.0, 1e-12).unwrap(), Pmf::point_mass(0));
    }

    #[test]
    fn pmf_helpers() {
        let p = Pmf::new(vec![0.25, 0.75], 0).unwrap().shifted(3);
        assert_eq!(p.prob(3), 0.25);
        assert_eq!(p.prob(2), 0.0);
        assert_abs_diff_eq!(p.mean(), 3.75);
        assert!(Pmf::new(vec![0.5, 0.4], 0).is_err());
        assert!(Pmf::from_weights(vec![0.0, 0.0], 0).is_err());
        let q = Pmf::point_mass(4);
        assert_abs_diff_eq!(p.total_variation(&q), 0.25);
    }

    proptest! {
        #[test]
        fn matches_enumeration(l in prop::collection::vec(0.0f64..=1.0, 0..=12)) {
            let exact = enumerate(&l);
            let fast = pb(&l);
            for (m, e) in exact.iter().enumerate() {
                prop_assert!((fast.prob(m) - e).abs() <= 1e-12);
            }
            prop_assert!((fast.mean() - l.iter().sum::<f64>()).abs() <= 1e-10);
        }

        #[test]
        fn tilt_composes(l in prop::collection::vec(0.0f64..=1.0, 1..=20),
                         g1 in 0.05f64..3.0, g2 in 0.05f64..3.0) {
            let p = pb(&l);
            let twice = tilt_pmf(&tilt_pmf(&p, g1).unwrap(), g2).unwrap();
            let once = tilt_pmf(&p, g1 * g2).unwrap();
            for m in 0..=p.max_count() {
                prop_assert!((twice.prob(m) - once.prob(m)).abs() <= 1e-12);
            }
        }

        #[test]
        fn tilted_le_cam_stays_poisson(t in 0.0f64..40.0, g in 0.01f64..1.0) {
            let tilted = tilt_pmf(&le_cam_pmf(t, 1e-14).unwrap(), g).unwrap();
            let direct = le_cam_pmf(g * t, 1e-14).unwrap();
            for m in 0..=tilted.max_count().max(direct.max_count()) {
                prop_assert!((tilted.prob(m) - direct.prob(m)).abs() <= 1e-10);
            }
        }
    }
}
