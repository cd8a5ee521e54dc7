//! Integrates `dx/dt = −x` from `x(0) = 1` with each fixed-step solver and
//! prints the error at `t = 1` and the fitted log-log slope.
//!
//! ```text
//! cargo run --release --example solver_order
//! ```

use lediflow::ode::{integrate, Method, SolverConfig, VectorField};
use ndarray::{Array2, ArrayView2};

struct Decay;

impl VectorField<f64> for Decay {
    fn velocity(&self, _t: f64, x: ArrayView2<f64>) -> lediflow::Result<Array2<f64>> {
        Ok(x.mapv(|v| -v))
    }
}

fn main() -> lediflow::Result<()> {
    let exact = (-1f64).exp();
    let x0 = Array2::from_elem((1, 1), 1.0);
    let steps = [4usize, 8, 16, 32, 64];
    for method in Method::ALL {
        let mut pts = Vec::new();
        print!("{:>8}:", method.name());
        for &n in &steps {
            let end = integrate(&Decay, x0.view(), SolverConfig::forward(method, n))?;
            let e = (end[[0, 0]] - exact).abs();
            print!("  n={n:<2} err={e:.2e}");
            pts.push(((1.0 / n as f64).ln(), e.ln()));
        }
        let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (mx / pts.len() as f64, my / pts.len() as f64);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        println!("  slope {:.3} (nfe per step {})", num / den, method.stages());
    }
    Ok(())
}
