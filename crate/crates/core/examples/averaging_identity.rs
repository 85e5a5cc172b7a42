//! Averaging conditional density matrices over Born-distributed environment
//! positions recovers the reduced density matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use wbohm::lattice::sample_density;
use wbohm::scenarios::oracle::random_entangled;
use wbohm::{conditional, reduced, to_kernel, Bipartition, DensityField, GridSpec, StreamId};

fn main() -> wbohm::Result<()> {
    let grid = GridSpec::cube(-8.0, 8.0, 32, 2)?;
    let split = Bipartition::new(vec![0], vec![1], 2, 2)?;
    let psi = random_entangled(&grid, 2, 2, 3, 1.5, 2, StreamId::new(2, "example.avg", 0))?;
    let target = to_kernel(&reduced(&psi, &split)?)?.operator();

    let n = grid.axis(0).points;
    let rho = psi.density();
    let marginal = (0..n).map(|j| (0..n).map(|i| rho[i * n + j]).sum::<f64>() * grid.spacing(0)).collect();
    let marginal = DensityField::new(split.s2_grid(&grid)?, marginal)?;

    for m in [250, 1000, 4000, 16000] {
        let mut sum = DMatrix::<Complex64>::zeros(target.nrows(), target.ncols());
        for q2 in sample_density(&marginal, m, StreamId::new(2, "example.avg.q2", m as u64))? {
            sum += to_kernel(&conditional(&psi, &split, &q2)?)?.operator();
        }
        let d = (sum / Complex64::new(m as f64, 0.0) - &target).norm();
        println!("M = {m:>5}: distance {d:.5}, sqrt(M) * distance {:.3}", d * (m as f64).sqrt());
    }
    Ok(())
}
