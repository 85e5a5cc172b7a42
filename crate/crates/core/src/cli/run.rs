//! Scenario execution and the run summary.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ScenarioConfig, ScenarioParams};
use super::output::{OutputDir, OUTCOMES_FILE, SUMMARY_FILE};
use crate::densities::{purity, validate, Bipartition, DensityEnsemble};
use crate::error::{Error, Result};
use crate::guidance::{bin_density, bin_of, conditional_velocity, CoIntegrator, GuidanceSnapshot, QuantumState};
use crate::lattice::{sample_density, ConfigPoint};
use crate::rng::StreamId;
use crate::scenarios::epr::{run_epr_ensemble_with, EprOptions, Spin, BRANCH_LEAK};
use crate::scenarios::oracle::build_oracle_scenario;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub value: toml::Value,
    /// The property this number certifies.
    pub certifies: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub config_sha256: String,
    /// Seed actually used, after any command-line override.
    pub seed: u64,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub config: ScenarioConfig,
    pub metrics: BTreeMap<String, Metric>,
    /// Wall-clock seconds per phase. Not reproducible.
    pub timings: BTreeMap<String, f64>,
}

impl RunSummary {
    fn new(config: &ScenarioConfig, raw: &[u8]) -> Self {
        Self {
            scenario: config.scenario.clone(),
            config_sha256: sha256_hex(raw),
            seed: config.seed,
            warnings: Vec::new(),
            files: Vec::new(),
            config: config.clone(),
            metrics: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    fn metric(&mut self, name: &str, value: impl Into<toml::Value>, certifies: &str) {
        self.metrics.insert(
            name.to_string(),
            Metric {
                value: value.into(),
                certifies: certifies.to_string(),
            },
        );
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Timer {
    phases: BTreeMap<String, f64>,
}

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.phases.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

/// Result of a completed run. `failure` is set when outputs were written but
/// the run violated a physics requirement.
pub struct RunReport {
    pub summary: RunSummary,
    pub failure: Option<Error>,
}

/// Runs a checked configuration, writing artifacts into `out`. `raw` is the
/// configuration file's bytes, hashed into the summary.
pub fn execute(config: &ScenarioConfig, raw: &[u8], out: &mut OutputDir) -> Result<RunReport> {
    let mut summary = RunSummary::new(config, raw);
    let mut timer = Timer::default();
    timer.time("preflight", || config.preflight())?;
    let failure = match &config.params {
        ScenarioParams::Epr(_) => run_epr(config, out, &mut summary, &mut timer)?,
        _ => {
            run_fixture(config, out, &mut summary, &mut timer)?;
            None
        }
    };
    summary.timings = timer.phases;
    if config.output.summary {
        summary.files = out.written().to_vec();
        summary.files.push(SUMMARY_FILE.to_string());
        let text = summary.to_toml();
        out.write(SUMMARY_FILE, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(RunReport { summary, failure })
}

fn run_epr(config: &ScenarioConfig, out: &mut OutputDir, s: &mut RunSummary, timer: &mut Timer) -> Result<Option<Error>> {
    let setup = config.epr_setup()?;
    let options = EprOptions {
        record_densities: config.output.density_snapshots,
        allow_undefined: true,
    };
    let outcome = timer.time("evolution", || run_epr_ensemble_with(&setup, &options))?;
    let m = &outcome.summary;

    timer.time("output", || -> Result<()> {
        if config.output.trajectories {
            let paths: Vec<Vec<ConfigPoint>> = outcome.records.iter().map(|r| r.path.clone()).collect();
            out.write_trajectories(&m.snapshot_times, &paths, 2)?;
            out.write(OUTCOMES_FILE, |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["run_id", "outcome1", "outcome2", "final_fidelity", "undefined"])
                    .map_err(csv_io)?;
                let name = |o: Option<Spin>| match o {
                    Some(Spin::Up) => "up",
                    Some(Spin::Down) => "down",
                    None => "",
                };
                for r in &outcome.records {
                    csv.write_record([
                        r.run_id.to_string(),
                        name(r.outcome1).into(),
                        name(r.outcome2).into(),
                        format!("{:?}", r.final_fidelity),
                        r.undefined.clone().unwrap_or_default(),
                    ])
                    .map_err(csv_io)?;
                }
                csv.flush()?;
                Ok(())
            })?;
        }
        for (i, (t, rho)) in outcome.densities.iter().enumerate() {
            out.write_density(i, *t, rho)?;
        }
        Ok(())
    })?;

    let n = m.n_runs as f64;
    s.metric("n_defined", m.n_defined as i64, "runs with a well-separated readout for both particles");
    s.metric("undefined_fraction", m.undefined_fraction, "branch overlap at readout stays below 1% of runs");
    s.metric("anticorrelation_rate", m.anticorrelation_rate, "same-axis singlet readouts are perfectly anti-correlated");
    s.metric("up_fraction1", m.up_fraction1, "Born rule for particle 1: up with probability 1/2");
    s.metric("up_fraction1_bar", 3.0 * (0.25 / n).sqrt(), "three-sigma binomial bar for up_fraction1");
    s.metric("born_up", toml::Value::Array(m.born_up.iter().map(|&p| p.into()).collect()), "branch weights from the final state agree with readout frequencies");
    s.metric("initial_distance_max", m.initial_distance_max, "initial conditional density matrix equals half the spin identity times the packet");
    s.metric("purity_defect_before_t2", m.purity_defect_before_t2, "conditional purity stays 1/2 until particle 2's magnet");
    s.metric("mid_fidelity_min", m.mid_fidelity_min, "between the magnets the conditional matrix is an equal mixture of the two spin branches");
    s.metric("unitarity_before_t2_max", m.unitarity_before_t2_max, "conditional density matrix evolves unitarily before particle 2's magnet");
    s.metric("unitarity_before_t2_mean", m.unitarity_before_t2_mean, "mean of the per-run unitarity deviation before particle 2's magnet");
    s.metric("unitarity_full_min", m.unitarity_full_min, "readout of particle 2 breaks unitary evolution of the conditional matrix");
    s.metric("collapse_fidelity_pass_fraction", m.collapse_fidelity_pass_fraction, "after readout the conditional matrix collapses to the branch opposite particle 2's outcome");
    s.metric("velocity_gap_max", m.velocity_gap_max, "conditional guidance reproduces the full velocity of particle 1");
    s.metric("norm_drift", m.norm_drift, "split-step evolution conserves the norm");
    s.metric("all_valid", m.all_valid, "every conditional density matrix is a valid density matrix");
    s.metric("snapshot_times", floats(&m.snapshot_times), "times of the purity series");
    s.metric("mean_purity", floats(&m.mean_purity), "mean conditional purity over runs at each snapshot");
    warn_counts(s, m.node_flags, m.boundary_excursions);
    let undefined = m.n_runs - m.n_defined;
    if undefined > 0 {
        s.warnings.push(format!("{undefined} of {} runs have no defined outcome", m.n_runs));
    }
    if m.undefined_fraction > BRANCH_LEAK {
        return Ok(Some(Error::Geometry(format!(
            "{undefined} of {} runs have no defined outcome (more than {}%)",
            m.n_runs,
            100.0 * BRANCH_LEAK
        ))));
    }
    Ok(None)
}

fn run_fixture(config: &ScenarioConfig, out: &mut OutputDir, s: &mut RunSummary, timer: &mut Timer) -> Result<()> {
    let spec = config.oracle_spec()?;
    let (state, h) = timer.time("setup", || build_oracle_scenario(&spec, config.seed))?;
    let grid = h.grid().clone();
    let dims = grid.dims();
    let n = config.ensemble_size();
    let steps = config.steps();
    let stride = config.time.snapshot_stride;

    let ensemble = match &state {
        QuantumState::Wave(psi) => DensityEnsemble::pure(psi)?,
        QuantumState::Density(w) => w.clone(),
    };
    s.metric("initial_valid", validate(&ensemble).all_passed(), "the initial state is a valid density matrix");
    s.metric("initial_purity", purity(&ensemble), "purity of the initial state");

    let initial = sample_density(&state.position_density(), n, StreamId::new(config.seed, "cli.initial", 0))?;
    if let (ScenarioParams::RandomEntangled(p), QuantumState::Wave(psi)) = (&config.params, &state) {
        let split = Bipartition::new(vec![0], vec![1], p.k1, p.k2)?;
        let gap = timer.time("conditional", || -> Result<(f64, usize)> {
            let snap = GuidanceSnapshot::new(&state, &h)?;
            let mut worst: f64 = 0.0;
            let mut regularized = 0;
            for q in &initial {
                let full = snap.velocity_at(q);
                let cond = conditional_velocity(psi, &split, &h, q)?;
                if full.regularized || cond.regularized {
                    regularized += 1;
                    continue;
                }
                let (a, b) = (full.velocity[0], cond.velocity[0]);
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
            }
            Ok((worst, regularized))
        })?;
        s.metric("conditional_velocity_gap", gap.0, "conditional guidance reproduces the full velocity of particle 1");
        s.metric("conditional_regularized", gap.1 as i64, "sampled points where either velocity needed node regularization");
    }

    let mut co = CoIntegrator::new(&h, config.time.dt, 0.0, state, &initial)?;
    let mut times = Vec::new();
    let mut paths: Vec<Vec<ConfigPoint>> = vec![Vec::new(); n];
    let mut norm_drift: f64 = 0.0;
    let mut snapshots = 0;
    timer.time("evolution", || -> Result<()> {
        for step in 0..=steps {
            if step % stride == 0 || step == steps {
                let rho = co.state().position_density();
                norm_drift = norm_drift.max((rho.integral() - 1.0).abs());
                times.push(co.time());
                for (path, p) in paths.iter_mut().zip(co.points()) {
                    path.push(p);
                }
                if config.output.density_snapshots {
                    out.write_density(snapshots, co.time(), &rho)?;
                }
                snapshots += 1;
            }
            if step < steps {
                co.step()?;
            }
        }
        Ok(())
    })?;

    let bins = config.output.histogram_bins;
    let reference = bin_density(&co.state().position_density(), bins);
    let mut empirical = vec![0.0; reference.len()];
    for p in co.points() {
        empirical[bin_of(&grid, bins, &p)] += 1.0 / n as f64;
    }
    let tv = 0.5 * empirical.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>();
    s.metric("equivariance_tv", tv, "trajectories stay distributed as the evolved position density");
    s.metric("equivariance_noise_floor", (reference.len() as f64 / n as f64).sqrt(), "rough sampling-noise scale of equivariance_tv");
    s.metric("norm_drift", norm_drift, "split-step evolution conserves the norm");

    if let ScenarioParams::OscillatorCoherent(p) = &config.params {
        let mut worst: f64 = 0.0;
        for path in &paths {
            for (t, q) in times.iter().zip(path) {
                let expected = path[0][0] + p.displacement * ((p.omega * t).cos() - 1.0);
                worst = worst.max((q[0] - expected).abs());
            }
        }
        s.metric("classical_tracking_error", worst, "coherent-state trajectories follow the classical orbit rigidly");
    }

    let (flags, excursions) = (0..n).fold((0, 0), |(f, e), i| {
        let m = co.meta(i);
        (f + m.node_flags, e + m.boundary_excursions)
    });
    warn_counts(s, flags, excursions);
    if config.output.trajectories {
        timer.time("output", || out.write_trajectories(&times, &paths, dims))?;
    }
    Ok(())
}

fn warn_counts(s: &mut RunSummary, node_flags: usize, excursions: usize) {
    s.metric("node_flags", node_flags as i64, "integration steps that touched a regularized node");
    s.metric("boundary_excursions", excursions as i64, "steps that came within the safety margin of the box edge");
    if node_flags > 0 {
        s.warnings.push(format!("{node_flags} integration steps touched a regularized node"));
    }
    if excursions > 0 {
        s.warnings.push(format!("{excursions} steps came near the box edge"));
    }
}

fn floats(v: &[f64]) -> toml::Value {
    toml::Value::Array(v.iter().map(|&x| x.into()).collect())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
