//! Split-step propagation of a spinor through a Stern-Gerlach pulse.

use wbohm::{evolve_field, GridSpec, Hamiltonian, PotentialField, SpinorField};

fn main() -> wbohm::Result<()> {
    let grid = GridSpec::line(-20.0, 20.0, 512)?;
    let psi = SpinorField::from_fn(grid.clone(), 2, |q, _| (-q[0] * q[0] / 4.0).exp().into())?.normalized()?;
    let lambda = -8.0;
    let magnet = PotentialField::diagonal(&grid, 2, |q, s| if s == 0 { lambda * q[0] } else { -lambda * q[0] })?;
    let h = Hamiltonian::free(grid.clone(), 2, 1.0, vec![1.0])?.with_pulse(0.5, 0.75, magnet)?;

    let mut state = psi;
    let mut t = 0.0;
    for t_next in [0.5, 1.0, 2.0, 3.0] {
        state = evolve_field(&state, &h, t, t_next, 1e-3)?.field;
        t = t_next;
        let mean = |s: usize| {
            let plane = state.plane(s);
            let w: f64 = plane.iter().map(|z| z.norm_sqr()).sum();
            (0..grid.nodes()).map(|n| grid.coords(n)[0] * plane[n].norm_sqr()).sum::<f64>() / w
        };
        println!("t = {t:.2}: <q>_up = {:+.4}, <q>_down = {:+.4}, norm drift {:.1e}", mean(0), mean(1), state.norm_sqr() - 1.0);
    }
    Ok(())
}
