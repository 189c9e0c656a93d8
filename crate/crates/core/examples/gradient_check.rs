// Finite-difference checks: a hand-built graph first, then the suite that
// covers every differentiable stage of the pipeline.

use wirelayout::autodiff::{GradCheck, Graph, NodeId, Tensor};
use wirelayout::gradsuite::{gradient_suite, SuiteRow};
use wirelayout::Result;

pub struct GradSummary {
    pub toy_error: f64,
    pub rows: Vec<SuiteRow>,
}

pub fn run_example() -> Result<GradSummary> {
    // sum(sigmoid(x) * x^2)
    let f = |g: &mut Graph, x: NodeId| {
        let s = g.sigmoid(x);
        let sq = g.mul(x, x)?;
        let y = g.mul(s, sq)?;
        Ok(g.sum_all(y))
    };
    let check = GradCheck::default();
    let toy_error = check.at(f, &Tensor::vector(vec![-1.3, 0.2, 0.7, 2.1]))?;
    println!("toy graph: max relative error {toy_error:.2e}");

    let rows = gradient_suite(3, 5, &check)?;
    for r in &rows {
        println!("{:<24} {:>3} configs  max error {:.2e}", r.op, r.configs, r.max_error);
    }
    Ok(GradSummary { toy_error, rows })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
