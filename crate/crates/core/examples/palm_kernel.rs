// Gaussian DPP kernel on the unit square, its reduced Palm kernel at a few
// observed locations, and the grid spectrum that drives every count law.

use featalloc::kernels::{grid_eigendecompose, palm_reduce, palm_trace, GaussianDppKernel, Kernel, Rect};

pub struct Report {
    pub at_anchor: f64,
    pub far_away: f64,
    pub base_trace: f64,
    pub palm_trace: f64,
    pub top_eigenvalue: f64,
}

pub fn run_example() -> featalloc::Result<Report> {
    let kernel = GaussianDppKernel::new(100.0, 0.0535, Rect::unit())?;
    println!("rho pi alpha^2 = {:.3}", kernel.repulsion());
    let anchors = [[0.3, 0.3], [0.35, 0.32], [0.7, 0.6]];
    let palm = palm_reduce(kernel.clone(), &anchors)?;

    let report = Report {
        at_anchor: palm.diag(anchors[0]),
        far_away: palm.diag([0.9, 0.1]),
        base_trace: palm_trace(&kernel, 40)?,
        palm_trace: palm_trace(&palm, 40)?,
        top_eigenvalue: grid_eigendecompose(&palm, 30)?.eigvals()[0],
    };
    println!("K(x, x) at an anchor {:.2e}, far from anchors {:.3}", report.at_anchor, report.far_away);
    println!(
        "expected points: {:.2} before, {:.2} after conditioning on {} anchors",
        report.base_trace,
        report.palm_trace,
        anchors.len()
    );
    println!("largest Palm eigenvalue on a 30x30 grid: {:.4}", report.top_eigenvalue);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    run_example().map(|_| ())
}
