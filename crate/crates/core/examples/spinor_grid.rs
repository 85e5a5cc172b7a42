//! Spinor fields on a periodic grid: construction, norms, spectral
//! gradients, off-node interpolation and Born sampling.

use num_complex::Complex64;
use wbohm::lattice::{gradient, interpolate, sample_density};
use wbohm::{GridSpec, SpinorField, StreamId};

fn main() -> wbohm::Result<()> {
    let grid = GridSpec::line(-10.0, 10.0, 128)?;
    // Spin up moves right, spin down moves left.
    let psi = SpinorField::from_fn(grid.clone(), 2, |q, s| {
        let p = if s == 0 { 1.5 } else { -1.5 };
        Complex64::from_polar((-q[0] * q[0] / 4.0).exp(), p * q[0])
    })?
    .normalized()?;
    println!("nodes {}  spacing {:.4}  norm^2 {:.12}", grid.nodes(), grid.spacing(0), psi.norm_sqr());

    let d = gradient(&psi, 0)?;
    let n0 = grid.nodes() / 2;
    println!("at q = {:.3}: dpsi_up/psi_up = {:.6}", grid.coords(n0)[0], d.value(n0, 0) / psi.value(n0, 0));
    let between = interpolate(&psi, &[0.05]);
    println!("psi(0.05) = [{:.5}, {:.5}]", between[0], between[1]);

    let rho = wbohm::DensityField::new(grid.clone(), psi.density())?;
    let draws = sample_density(&rho, 10_000, StreamId::new(1, "example.sample", 0))?;
    let mean = draws.iter().map(|p| p[0]).sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|p| (p[0] - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    println!("10000 Born draws: mean {mean:.4}, variance {var:.4} (exact 1.0)");
    Ok(())
}
