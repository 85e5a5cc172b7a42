//! Two spin-1/2 particles in the singlet state, each sent through its own
//! Stern-Gerlach magnet, particle 1 first.
//!
//! Configuration space is `(q1, q2)`; the spin index is `s = s1 * 2 + s2`
//! with up = 0 and down = 1. Magnet `j` is the pulse `lambda_j q_j sigma_z`
//! acting on particle `j`. With `lambda_j < 0` the spin-up branch moves
//! towards positive `q_j`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{
    conditional, fidelity_with_pure, frobenius_distance, purity, region_probability, statistical, validate, AxisBox,
    Bipartition, DensityEnsemble,
};
use crate::error::{Error, Result};
use crate::evolution::{Hamiltonian, PotentialField, Propagator, UnitarityTracker};
use crate::guidance::{conditional_velocity, CoIntegrator, GuidanceSnapshot, QuantumState};
use crate::lattice::{inner_product, sample_density, Axis, ConfigPoint, DensityField, GridSpec, SpinorField};
use crate::rng::StreamId;

use super::oracle::gaussian;

/// A run is undefined when the minority branch carries more than this
/// fraction of the particle's marginal density at its final position.
pub const BRANCH_LEAK: f64 = 0.01;
/// Packet half-extent used by the geometry checks, in standard deviations.
pub const SAFE_SIGMAS: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Magnet {
    /// Coupling `lambda` in `lambda q sigma_z`.
    pub lambda: f64,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EprSetup {
    pub axes: [Axis; 2],
    pub hbar: f64,
    pub masses: [f64; 2],
    pub centers: [f64; 2],
    /// `|psi_j|^2` standard deviations.
    pub sigmas: [f64; 2],
    pub magnets: [Magnet; 2],
    pub t_final: f64,
    pub dt: f64,
    pub n_runs: usize,
    pub seed: u64,
    /// Steps between recorded snapshots.
    pub snapshot_every: usize,
}

impl EprSetup {
    /// Default experiment: 256^2 nodes on `[-20, 20]^2`, unit packets, about
    /// three thousand steps.
    pub fn desk_scale() -> Self {
        Self {
            axes: [Axis::new(-20.0, 20.0, 256); 2],
            hbar: 1.0,
            masses: [4.0, 4.0],
            centers: [0.0, 0.0],
            sigmas: [1.0, 1.0],
            magnets: [
                Magnet {
                    lambda: -10.0,
                    t_start: 0.5,
                    t_end: 1.0,
                },
                Magnet {
                    lambda: -14.0,
                    t_start: 4.5,
                    t_end: 5.0,
                },
            ],
            t_final: 8.0,
            dt: 2.5e-3,
            n_runs: 500,
            seed: 20240917,
            snapshot_every: 40,
        }
    }

    /// Small variant (128^2 nodes, a few hundred steps) for quick checks.
    pub fn compact() -> Self {
        Self {
            axes: [Axis::new(-16.0, 16.0, 128); 2],
            hbar: 1.0,
            masses: [2.0, 2.0],
            centers: [0.0, 0.0],
            sigmas: [1.0, 1.0],
            magnets: [
                Magnet {
                    lambda: -30.0,
                    t_start: 0.2,
                    t_end: 0.4,
                },
                Magnet {
                    lambda: -30.0,
                    t_start: 1.6,
                    t_end: 1.8,
                },
            ],
            t_final: 3.0,
            dt: 5e-3,
            n_runs: 64,
            seed: 7,
            snapshot_every: 20,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.axes.to_vec())
    }

    pub fn split() -> Bipartition {
        Bipartition::new(vec![0], vec![1], 2, 2).expect("valid bipartition")
    }

    /// Momentum transferred by magnet `j` to each branch.
    pub fn kick(&self, j: usize) -> f64 {
        let m = &self.magnets[j];
        m.lambda.abs() * (m.t_end - m.t_start)
    }

    /// Free-flight estimate of the displacement of particle `j`'s branches.
    pub fn branch_offset(&self, j: usize, t: f64) -> f64 {
        let m = &self.magnets[j];
        let width = m.t_end - m.t_start;
        let u = self.kick(j) / self.masses[j];
        if t <= m.t_start {
            0.0
        } else if t <= m.t_end {
            0.5 * u * (t - m.t_start).powi(2) / width
        } else {
            0.5 * u * width + u * (t - m.t_end)
        }
    }

    /// Free spreading of a packet, `|psi|^2` standard deviation.
    pub fn packet_width(&self, j: usize, t: f64) -> f64 {
        let s = self.sigmas[j];
        (s * s + (self.hbar * t / (2.0 * self.masses[j] * s)).powi(2)).sqrt()
    }

    /// Schedule, geometry and resolution checks made before any evolution.
    pub fn preflight(&self) -> Result<()> {
        let grid = self.grid()?;
        for v in [self.hbar, self.masses[0], self.masses[1], self.sigmas[0], self.sigmas[1], self.dt, self.t_final] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("physical parameters must be positive, got {v}")));
            }
        }
        if self.n_runs == 0 || self.snapshot_every == 0 {
            return Err(Error::Config("n_runs and snapshot_every must be positive".into()));
        }
        for (j, m) in self.magnets.iter().enumerate() {
            if !(m.t_start >= 0.0 && m.t_end > m.t_start && m.t_end <= self.t_final) {
                return Err(Error::Config(format!(
                    "magnet {} window [{}, {}] must lie inside [0, t_final = {}]",
                    j + 1,
                    m.t_start,
                    m.t_end,
                    self.t_final
                )));
            }
        }
        if !(self.magnets[0].t_end < self.magnets[1].t_start) {
            return Err(Error::Config("particle 1 must leave its magnet before particle 2 reaches its own".into()));
        }
        let total = self.t_final / self.dt;
        if (total - total.round()).abs() > 1e-6 {
            return Err(Error::Config(format!("dt = {} does not divide t_final = {}", self.dt, self.t_final)));
        }
        for m in &self.magnets {
            for b in [m.t_start, m.t_end] {
                let x = b / self.dt;
                if (x - x.round()).abs() > 1e-6 {
                    return Err(Error::Config(format!("magnet boundary t = {b} is not on a step boundary")));
                }
            }
        }
        for j in 0..2 {
            let a = grid.axis(j);
            let k_max = self.kick(j) / self.hbar + 0.5 * SAFE_SIGMAS / self.sigmas[j];
            let nyquist = std::f64::consts::PI / a.spacing();
            if k_max > 0.8 * nyquist {
                return Err(Error::Geometry(format!(
                    "particle {} reaches wavenumber {k_max:.2}, above 80% of the grid limit {nyquist:.2}",
                    j + 1
                )));
            }
            let samples = 400;
            for i in 0..=samples {
                let t = self.t_final * i as f64 / samples as f64;
                let reach = self.branch_offset(j, t) + SAFE_SIGMAS * self.packet_width(j, t);
                if self.centers[j] - reach < a.min || self.centers[j] + reach >= a.max {
                    return Err(Error::Geometry(format!(
                        "packet of particle {} reaches the box edge at t = {t:.4}",
                        j + 1
                    )));
                }
            }
            let gap = 2.0 * self.branch_offset(j, self.t_final);
            let need = SAFE_SIGMAS * self.packet_width(j, self.t_final);
            if gap < need {
                return Err(Error::Geometry(format!(
                    "branches of particle {} are only {gap:.2} apart at readout, need {need:.2}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// Particle 1 alone: its grid, spin 2, and its own magnet.
    pub fn subsystem_hamiltonian(&self) -> Result<Hamiltonian> {
        let g1 = GridSpec::new(vec![self.axes[0]])?;
        let m = &self.magnets[0];
        let lambda = m.lambda;
        Hamiltonian::free(g1.clone(), 2, self.hbar, vec![self.masses[0]])?.with_pulse(
            m.t_start,
            m.t_end,
            PotentialField::diagonal(&g1, 2, |q, s| lambda * q[0] * sigma_z(s))?,
        )
    }

    /// `|s> psi_1` on particle 1's grid.
    pub fn particle1_state(&self, spin: Spin) -> Result<SpinorField> {
        let g1 = GridSpec::new(vec![self.axes[0]])?;
        let (c, s) = (self.centers[0], self.sigmas[0]);
        SpinorField::from_fn(g1, 2, |q, idx| {
            Complex64::new(if idx == spin.index() { gaussian(q[0], c, s) } else { 0.0 }, 0.0)
        })?
        .normalized()
    }

    /// `(1/2) I (x) |psi_1><psi_1|`.
    pub fn half_identity(&self) -> Result<DensityEnsemble> {
        statistical(vec![
            (0.5, self.particle1_state(Spin::Up)?),
            (0.5, self.particle1_state(Spin::Down)?),
        ])
    }
}

fn sigma_z(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Singlet times `psi_1(q1) psi_2(q2)`, and the two-magnet Hamiltonian.
pub fn build_epr(setup: &EprSetup) -> Result<(SpinorField, Hamiltonian)> {
    setup.preflight()?;
    let grid = setup.grid()?;
    let (c, s) = (setup.centers, setup.sigmas);
    let psi = SpinorField::from_fn(grid.clone(), 4, |q, idx| {
        let spin = match idx {
            1 => FRAC_1_SQRT_2,
            2 => -FRAC_1_SQRT_2,
            _ => 0.0,
        };
        Complex64::new(spin * gaussian(q[0], c[0], s[0]) * gaussian(q[1], c[1], s[1]), 0.0)
    })?
    .normalized()?;
    let mut h = Hamiltonian::free(grid.clone(), 4, setup.hbar, setup.masses.to_vec())?;
    for (j, m) in setup.magnets.iter().enumerate() {
        let lambda = m.lambda;
        let v = PotentialField::diagonal(&grid, 4, |q, idx| {
            let s_j = if j == 0 { idx / 2 } else { idx % 2 };
            lambda * q[j] * sigma_z(s_j)
        })?;
        h = h.with_pulse(m.t_start, m.t_end, v)?;
    }
    Ok((psi, h))
}

/// Per-run observations.
#[derive(Clone, Debug, Serialize)]
pub struct EprRunRecord {
    pub run_id: usize,
    pub outcome1: Option<Spin>,
    pub outcome2: Option<Spin>,
    /// Why the run has no defined outcome, if it has none.
    pub undefined: Option<String>,
    /// Configuration at each snapshot time.
    pub path: Vec<ConfigPoint>,
    /// `tr W_cond^2` at each snapshot time.
    pub purity: Vec<f64>,
    /// Distance of `W_cond` from the unitary orbit of its initial value.
    pub unitarity: Vec<f64>,
    /// Distance of the initial `W_cond` to `(1/2) I (x) |psi_1><psi_1|`.
    pub initial_distance: f64,
    /// Smallest branch fidelity seen strictly between the two magnets.
    pub mid_fidelity: f64,
    /// Particle-1 spin state the conditional density matrix collapsed to.
    pub target: Option<Spin>,
    pub final_fidelity: f64,
    /// Largest relative gap between the full guidance velocity of `Q1` and the
    /// velocity computed from `W_cond`.
    pub velocity_gap: f64,
    pub node_flags: usize,
    pub boundary_excursions: usize,
    /// Every density matrix produced for this run passed validation.
    pub valid: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EprSummary {
    pub n_runs: usize,
    pub n_defined: usize,
    pub undefined_fraction: f64,
    pub up_fraction1: f64,
    pub anticorrelation_rate: f64,
    /// Born probabilities of each particle ending on its spin-up side.
    pub born_up: [f64; 2],
    pub initial_distance_max: f64,
    /// Largest `|purity - 1/2|` before particle 2's magnet.
    pub purity_defect_before_t2: f64,
    pub mid_fidelity_min: f64,
    pub unitarity_before_t2_max: f64,
    pub unitarity_before_t2_mean: f64,
    /// Smallest over runs of the largest deviation over the whole window.
    pub unitarity_full_min: f64,
    pub collapse_fidelity_pass_fraction: f64,
    pub velocity_gap_max: f64,
    pub norm_drift: f64,
    pub node_flags: usize,
    pub boundary_excursions: usize,
    pub all_valid: bool,
    pub snapshot_times: Vec<f64>,
    pub mean_purity: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EprOutcome {
    pub records: Vec<EprRunRecord>,
    pub summary: EprSummary,
    /// Position densities at each snapshot time, when requested.
    pub densities: Vec<(f64, DensityField)>,
}

#[derive(Clone, Debug, Default)]
pub struct EprOptions {
    pub record_densities: bool,
    /// Skip the geometry error on too many undefined runs.
    pub allow_undefined: bool,
}

struct RunState<'h> {
    tracker: UnitarityTracker<'h>,
    record: EprRunRecord,
}

/// Runs the experiment for every sampled initial configuration.
pub fn run_epr_ensemble(setup: &EprSetup) -> Result<EprOutcome> {
    run_epr_ensemble_with(setup, &EprOptions::default())
}

pub fn run_epr_ensemble_with(setup: &EprSetup, options: &EprOptions) -> Result<EprOutcome> {
    let (psi, h) = build_epr(setup)?;
    let h1 = setup.subsystem_hamiltonian()?;
    let split = EprSetup::split();
    let grid = psi.grid().clone();
    let dt = setup.dt;
    let t2a = setup.magnets[1].t_start;
    let t1b = setup.magnets[0].t_end;

    let initial = sample_density(
        &DensityField {
            grid: grid.clone(),
            values: psi.density(),
        },
        setup.n_runs,
        StreamId::new(setup.seed, "epr.initial", 0),
    )?;
    let margin = 0.0;
    let mut co = CoIntegrator::new(&h, dt, 0.0, QuantumState::Wave(psi.clone()), &initial)?.with_safe_margin(margin);
    let steps = Propagator::new(&h, dt)?.steps_between(0.0, setup.t_final)?;

    let prop1 = Propagator::new(&h1, dt)?;
    let mut up = setup.particle1_state(Spin::Up)?;
    let mut down = setup.particle1_state(Spin::Down)?;
    let half = setup.half_identity()?;

    let mut runs: Vec<RunState> = initial
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let w0 = conditional(&psi, &split, &[q[1]])?;
            let initial_distance = frobenius_distance(&w0, &half)?;
            Ok(RunState {
                tracker: UnitarityTracker::new(&h1, dt, 0.0, w0)?,
                record: EprRunRecord {
                    run_id: i,
                    outcome1: None,
                    outcome2: None,
                    undefined: None,
                    path: Vec::new(),
                    purity: Vec::new(),
                    unitarity: Vec::new(),
                    initial_distance,
                    mid_fidelity: 1.0,
                    target: None,
                    final_fidelity: 0.0,
                    velocity_gap: 0.0,
                    node_flags: 0,
                    boundary_excursions: 0,
                    valid: true,
                },
            })
        })
        .collect::<Result<_>>()?;

    let mut snapshot_times = Vec::new();
    let mut densities = Vec::new();
    let mut norm_drift: f64 = 0.0;
    for step in 0..=steps {
        if step % setup.snapshot_every == 0 || step == steps {
            let t = co.time();
            let QuantumState::Wave(state) = co.state() else { unreachable!() };
            norm_drift = norm_drift.max((state.norm_sqr() - 1.0).abs());
            snapshot_times.push(t);
            if options.record_densities {
                densities.push((
                    t,
                    DensityField {
                        grid: grid.clone(),
                        values: state.density(),
                    },
                ));
            }
            let full = GuidanceSnapshot::new(co.state(), &h)?;
            let mid = t > t1b && t < t2a;
            let points = co.points();
            runs.par_iter_mut().zip(points.par_iter()).for_each(|(run, q)| {
                observe(run, state, &split, &h, &full, q, t, mid, &up, &down);
            });
        }
        if step == steps {
            break;
        }
        co.step()?;
        prop1.step_in_place(&mut up, (step as f64) * dt);
        prop1.step_in_place(&mut down, (step as f64) * dt);
    }

    let QuantumState::Wave(final_state) = co.state() else { unreachable!() };
    let marginals = BranchMarginals::new(final_state);
    for (i, run) in runs.iter_mut().enumerate() {
        let meta = co.meta(i);
        let q = co.point(i);
        let rec = &mut run.record;
        rec.node_flags = meta.node_flags;
        rec.boundary_excursions = meta.boundary_excursions;
        if rec.undefined.is_some() {
            continue;
        }
        let o1 = marginals.classify(0, q[0], setup.centers[0]);
        let o2 = marginals.classify(1, q[1], setup.centers[1]);
        match (o1, o2) {
            (Ok(a), Ok(b)) => {
                rec.outcome1 = Some(a);
                rec.outcome2 = Some(b);
                // Particle 2 read out `b`, so particle 1 carries the opposite spin.
                let target = b.flip();
                rec.target = Some(target);
                let w = conditional(final_state, &split, &[q[1]])?;
                let field = if target == Spin::Up { &up } else { &down };
                rec.final_fidelity = fidelity_with_pure(&w, field)?;
            }
            (Err(e), _) | (_, Err(e)) => rec.undefined = Some(e),
        }
    }

    let records: Vec<EprRunRecord> = runs.into_iter().map(|r| r.record).collect();
    let born_up = [
        region_probability(
            &DensityEnsemble::pure(final_state)?,
            &[AxisBox::slab(2, 0, setup.centers[0], f64::INFINITY)?],
        ),
        region_probability(
            &DensityEnsemble::pure(final_state)?,
            &[AxisBox::slab(2, 1, setup.centers[1], f64::INFINITY)?],
        ),
    ];
    let summary = summarize(setup, &records, snapshot_times, born_up, norm_drift);
    if !options.allow_undefined && summary.undefined_fraction > BRANCH_LEAK {
        return Err(Error::Geometry(format!(
            "{} of {} runs have no defined outcome (more than {}%)",
            summary.n_runs - summary.n_defined,
            summary.n_runs,
            100.0 * BRANCH_LEAK
        )));
    }
    Ok(EprOutcome {
        records,
        summary,
        densities,
    })
}

#[allow(clippy::too_many_arguments)]
fn observe(
    run: &mut RunState,
    state: &SpinorField,
    split: &Bipartition,
    h: &Hamiltonian,
    full: &GuidanceSnapshot,
    q: &ConfigPoint,
    t: f64,
    mid: bool,
    up: &SpinorField,
    down: &SpinorField,
) {
    let rec = &mut run.record;
    rec.path.push(*q);
    if rec.undefined.is_some() {
        return;
    }
    let w = match conditional(state, split, &[q[1]]) {
        Ok(w) => w,
        Err(e) => {
            rec.undefined = Some(format!("conditional density matrix undefined at t = {t}: {e}"));
            return;
        }
    };
    rec.valid &= validate(&w).all_passed();
    rec.purity.push(purity(&w));
    match run.tracker.observe(t, &w) {
        Ok(d) => rec.unitarity.push(d),
        Err(e) => rec.undefined = Some(e.to_string()),
    }
    if mid {
        // The s2 = down slice carries particle 1's up branch and vice versa.
        for c in w.components() {
            let f = inner_product(up, &c.field)
                .map(|z| z.norm_sqr())
                .unwrap_or(0.0)
                .max(inner_product(down, &c.field).map(|z| z.norm_sqr()).unwrap_or(0.0));
            rec.mid_fidelity = rec.mid_fidelity.min(f);
        }
        if w.len() != 2 {
            rec.mid_fidelity = 0.0;
        }
    }
    let v_full = full.velocity_at(q);
    // Below this speed the relative gap would only measure round-off.
    let v_scale = 1e-6 * h.hbar() / h.masses()[0];
    if let Ok(v_cond) = conditional_velocity(state, split, h, q) {
        if !v_full.regularized && !v_cond.regularized {
            let (a, b) = (v_full.velocity[0], v_cond.velocity[0]);
            rec.velocity_gap = rec.velocity_gap.max((a - b).abs() / a.abs().max(b.abs()).max(v_scale));
        }
    }
}

/// Spin-resolved marginal densities of each particle.
struct BranchMarginals {
    /// `[particle][spin]` marginal on that particle's axis.
    marg: [[DensityField; 2]; 2],
}

impl BranchMarginals {
    fn new(psi: &SpinorField) -> Self {
        let grid = psi.grid();
        let make = |j: usize, spin: usize| {
            let g = grid.subgrid(&[j]).expect("axis");
            let mut values = vec![0.0; g.nodes()];
            let h_other = grid.spacing(1 - j);
            for idx in 0..4 {
                let s_j = if j == 0 { idx / 2 } else { idx % 2 };
                if s_j != spin {
                    continue;
                }
                for (node, z) in psi.plane(idx).iter().enumerate() {
                    let m = grid.multi_index(node);
                    values[m[j]] += z.norm_sqr() * h_other;
                }
            }
            DensityField { grid: g, values }
        };
        Self {
            marg: [[make(0, 0), make(0, 1)], [make(1, 0), make(1, 1)]],
        }
    }

    fn classify(&self, j: usize, x: f64, center: f64) -> std::result::Result<Spin, String> {
        let up = self.marg[j][0].at(&[x]);
        let down = self.marg[j][1].at(&[x]);
        let total = up + down;
        if !(total > 0.0) {
            return Err(format!("particle {} sits where its marginal vanishes", j + 1));
        }
        let (dominant, minority) = if up >= down { (Spin::Up, down) } else { (Spin::Down, up) };
        if minority / total > BRANCH_LEAK {
            return Err(format!(
                "branches of particle {} overlap at its final position ({:.2}% minority)",
                j + 1,
                100.0 * minority / total
            ));
        }
        let by_sign = if x >= center { Spin::Up } else { Spin::Down };
        if by_sign != dominant {
            return Err(format!("particle {} ended on the wrong side of its branch", j + 1));
        }
        Ok(by_sign)
    }
}

fn summarize(
    setup: &EprSetup,
    records: &[EprRunRecord],
    snapshot_times: Vec<f64>,
    born_up: [f64; 2],
    norm_drift: f64,
) -> EprSummary {
    let t2a = setup.magnets[1].t_start;
    let before: Vec<usize> = snapshot_times.iter().enumerate().filter(|(_, &t)| t <= t2a).map(|(i, _)| i).collect();
    let defined: Vec<&EprRunRecord> = records.iter().filter(|r| r.undefined.is_none()).collect();
    let n = records.len();
    let nd = defined.len().max(1) as f64;
    let count = |f: &dyn Fn(&EprRunRecord) -> bool| defined.iter().filter(|r| f(r)).count() as f64;
    let max_over = |f: &dyn Fn(&EprRunRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let before_max = |v: &[f64]| before.iter().filter_map(|&i| v.get(i)).copied().fold(0.0, f64::max);
    let unitarity_before: Vec<f64> = records.iter().map(|r| before_max(&r.unitarity)).collect();
    let mut mean_purity = vec![0.0; snapshot_times.len()];
    let mut counts = vec![0usize; snapshot_times.len()];
    for r in records {
        for (i, p) in r.purity.iter().enumerate() {
            mean_purity[i] += p;
            counts[i] += 1;
        }
    }
    mean_purity.iter_mut().zip(&counts).for_each(|(m, &c)| *m /= c.max(1) as f64);
    EprSummary {
        n_runs: n,
        n_defined: defined.len(),
        undefined_fraction: (n - defined.len()) as f64 / n.max(1) as f64,
        up_fraction1: count(&|r| r.outcome1 == Some(Spin::Up)) / nd,
        anticorrelation_rate: count(&|r| r.outcome1.is_some() && r.outcome1.map(Spin::flip) == r.outcome2) / nd,
        born_up,
        initial_distance_max: max_over(&|r| r.initial_distance),
        purity_defect_before_t2: max_over(&|r| {
            before.iter().filter_map(|&i| r.purity.get(i)).map(|p| (p - 0.5).abs()).fold(0.0, f64::max)
        }),
        mid_fidelity_min: records.iter().map(|r| r.mid_fidelity).fold(1.0, f64::min),
        unitarity_before_t2_max: unitarity_before.iter().copied().fold(0.0, f64::max),
        unitarity_before_t2_mean: unitarity_before.iter().sum::<f64>() / n.max(1) as f64,
        unitarity_full_min: records
            .iter()
            .map(|r| r.unitarity.iter().copied().fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min),
        collapse_fidelity_pass_fraction: count(&|r| r.final_fidelity >= 0.99) / nd,
        velocity_gap_max: max_over(&|r| r.velocity_gap),
        norm_drift,
        node_flags: records.iter().map(|r| r.node_flags).sum(),
        boundary_excursions: records.iter().map(|r| r.boundary_excursions).sum(),
        all_valid: records.iter().all(|r| r.valid),
        snapshot_times,
        mean_purity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singlet_is_antisymmetric_and_normalized() {
        let (psi, _) = build_epr(&EprSetup::compact()).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        for node in 0..psi.nodes() {
            assert_eq!(psi.value(node, 1), -psi.value(node, 2));
            assert_eq!(psi.value(node, 0), Complex64::default());
            assert_eq!(psi.value(node, 3), Complex64::default());
        }
    }

    #[test]
    fn initial_conditional_is_half_identity() {
        let setup = EprSetup::compact();
        let (psi, _) = build_epr(&setup).unwrap();
        let half = setup.half_identity().unwrap();
        for q2 in [-2.5, -0.3, 0.0, 1.7] {
            let w = conditional(&psi, &EprSetup::split(), &[q2]).unwrap();
            assert!(frobenius_distance(&w, &half).unwrap() < 1e-10);
        }
    }

    #[test]
    fn geometry_errors_name_the_time() {
        let mut setup = EprSetup::compact();
        setup.magnets[0].lambda = -45.0;
        setup.axes = [Axis::new(-16.0, 16.0, 256); 2];
        match setup.preflight() {
            Err(Error::Geometry(msg)) => assert!(msg.contains("t = "), "{msg}"),
            other => panic!("expected a geometry error, got {other:?}"),
        }
    }

    #[test]
    fn misordered_magnets_rejected() {
        let mut setup = EprSetup::compact();
        setup.magnets[1].t_start = 0.3;
        assert!(matches!(setup.preflight(), Err(Error::Config(_))));
    }

    #[test]
    fn default_setups_pass_preflight() {
        EprSetup::desk_scale().preflight().unwrap();
        EprSetup::compact().preflight().unwrap();
    }
}
