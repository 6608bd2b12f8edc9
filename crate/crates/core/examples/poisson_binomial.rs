// Count laws of a determinantal process: the exact Poisson-binomial pmf of
// a set of eigenvalues, its survival tilt, and the Le Cam Poisson
// approximation with its total-variation bound.

use featalloc::poibin::{le_cam_pmf, poisson_binomial_pmf, tilt_pmf, SuccessProbs, DEFAULT_TAIL_EPS};

pub struct Report {
    pub mean: f64,
    pub tilted_mean: f64,
    pub tv: f64,
    pub bound: f64,
}

pub fn run_example() -> featalloc::Result<Report> {
    let lambdas = SuccessProbs::new(vec![0.92, 0.75, 0.4, 0.31, 0.12, 0.05, 0.01])?;
    let exact = poisson_binomial_pmf(&lambdas);
    for (m, p) in exact.iter() {
        println!("P(N = {m}) = {p:.6}");
    }

    // each point survives n surveys unseen with probability g
    let g = 0.35;
    let tilted = tilt_pmf(&exact, g)?;
    let approx = le_cam_pmf(lambdas.sum(), DEFAULT_TAIL_EPS)?;
    let report = Report {
        mean: exact.mean(),
        tilted_mean: tilted.mean(),
        tv: exact.total_variation(&approx),
        bound: lambdas.sum_of_squares(),
    };
    println!("mean {:.4}, tilted by g = {g}: {:.4}", report.mean, report.tilted_mean);
    println!("TV to Poisson({:.2}) = {:.4} <= {:.4}", lambdas.sum(), report.tv, report.bound);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
