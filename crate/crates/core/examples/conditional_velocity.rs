//! Guidance of one subsystem by its conditional density matrix compared with
//! the full velocity field.

use wbohm::guidance::GuidanceSnapshot;
use wbohm::scenarios::oracle::random_entangled;
use wbohm::{conditional_velocity, Bipartition, GridSpec, Hamiltonian, QuantumState, StreamId};

fn main() -> wbohm::Result<()> {
    let grid = GridSpec::cube(-8.0, 8.0, 64, 2)?;
    let psi = random_entangled(&grid, 2, 2, 3, 1.5, 3, StreamId::new(9, "example.cond", 0))?;
    let h = Hamiltonian::free(grid.clone(), 4, 1.0, vec![1.0, 2.0])?;
    let split = Bipartition::new(vec![0], vec![1], 2, 2)?;
    let snap = GuidanceSnapshot::new(&QuantumState::Wave(psi.clone()), &h)?;
    println!("{:>8} {:>8} {:>14} {:>14} {:>10}", "q1", "q2", "full", "conditional", "rel gap");
    for q in [[0.0, 0.0], [0.7, -1.1], [-1.3, 0.4], [2.0, 1.6]] {
        let a = snap.velocity_at(&q).velocity[0];
        let b = conditional_velocity(&psi, &split, &h, &q)?.velocity[0];
        println!("{:8.3} {:8.3} {a:14.10} {b:14.10} {:10.1e}", q[0], q[1], (a - b).abs() / a.abs().max(b.abs()));
    }
    Ok(())
}
