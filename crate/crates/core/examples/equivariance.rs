//! Born-distributed ensembles stay Born-distributed: a spinor packet and a
//! rank-two fundamental density matrix.

use wbohm::scenarios::oracle::{build_oracle_scenario, OracleScenario};
use wbohm::{equivariance_distance, GridSpec, StreamId};

fn main() -> wbohm::Result<()> {
    let grid = GridSpec::line(-16.0, 16.0, 512)?;
    let specs = [
        OracleScenario::FreeGaussian { grid: grid.clone(), hbar: 1.0, mass: 1.0, center: 0.0, sigma: 1.0, momenta: vec![2.0, -2.0] },
        OracleScenario::MixedWFundamental { grid, hbar: 1.0, mass: 1.0, sigma: 1.0, packets: vec![(0.7, -1.5, 1.0), (0.3, 1.5, -1.0)] },
    ];
    for (i, spec) in specs.iter().enumerate() {
        let (state, h) = build_oracle_scenario(spec, 1)?;
        let r = equivariance_distance(&state, &h, 0.0, 1.0, 2e-3, 10_000, 64, StreamId::new(1, "example.eq", i as u64))?;
        println!("{:<22} TV {:.4}  sampling noise ~{:.3}  node flags {}", spec.name(), r.distance, r.noise_floor, r.node_flags);
    }
    Ok(())
}
