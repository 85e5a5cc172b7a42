//! Singlet pair through two parallel Stern-Gerlach magnets.
//!
//! `cargo run --release --example epr_bell` runs the desk-scale setup;
//! pass `compact` for a quick, coarser run.

use std::time::Instant;

use wbohm::scenarios::epr::{run_epr_ensemble, EprSetup};

fn main() -> wbohm::Result<()> {
    let setup = match std::env::args().nth(1).as_deref() {
        Some("compact") => EprSetup::compact(),
        _ => EprSetup::desk_scale(),
    };
    setup.preflight()?;
    let start = Instant::now();
    let out = run_epr_ensemble(&setup)?;
    let s = &out.summary;
    println!("runs                 {} ({} defined)", s.n_runs, s.n_defined);
    println!("up fraction (1)      {:.3}  Born {:.3}", s.up_fraction1, s.born_up[0]);
    println!("anti-correlation     {:.3}", s.anticorrelation_rate);
    println!("initial distance     {:.2e}", s.initial_distance_max);
    println!("purity defect        {:.2e}", s.purity_defect_before_t2);
    println!("mid fidelity (min)   {:.4}", s.mid_fidelity_min);
    println!("unitarity before t2  {:.2e} (mean {:.2e})", s.unitarity_before_t2_max, s.unitarity_before_t2_mean);
    println!("unitarity broken by  {:.2e}", s.unitarity_full_min);
    println!("collapse fidelity    {:.3} of runs >= 0.99", s.collapse_fidelity_pass_fraction);
    println!("velocity gap (max)   {:.2e}", s.velocity_gap_max);
    println!("norm drift           {:.2e}", s.norm_drift);
    println!("node flags {}  boundary excursions {}", s.node_flags, s.boundary_excursions);
    println!("all valid            {}", s.all_valid);
    println!("wall time            {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
