//! Guidance laws, trajectory co-integration and equivariance diagnostics.
//!
//! A velocity is `v_j = (hbar/m_j) Im(sum_i p_i psi_i^* d_j psi_i) / rho` with
//! `rho = sum_i p_i |psi_i|^2`; a wave function is the one-component case.
//! Small denominators are floored at `NODE_EPSILON * max rho`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::densities::{conditional, position_density, Bipartition, DensityEnsemble};
use crate::error::{Error, Result};
use crate::evolution::{Hamiltonian, Propagator};
use crate::lattice::{gradient, sample_density, ConfigPoint, DensityField, GridSpec, SpinorField, MAX_DIMS};
use crate::rng::StreamId;
use crate::spectral;

/// Relative floor on the velocity denominator.
pub const NODE_EPSILON: f64 = 1e-12;

/// A wave function or a density matrix, the two kinds of guiding state.
#[derive(Clone, Debug)]
pub enum QuantumState {
    Wave(SpinorField),
    Density(DensityEnsemble),
}

impl QuantumState {
    pub fn grid(&self) -> &GridSpec {
        match self {
            Self::Wave(f) => f.grid(),
            Self::Density(w) => w.grid(),
        }
    }

    pub fn spin_dim(&self) -> usize {
        match self {
            Self::Wave(f) => f.spin_dim(),
            Self::Density(w) => w.spin_dim(),
        }
    }

    pub fn position_density(&self) -> DensityField {
        match self {
            Self::Wave(f) => DensityField {
                grid: f.grid().clone(),
                values: f.density(),
            },
            Self::Density(w) => position_density(w),
        }
    }

    fn parts(&self) -> Vec<(f64, &SpinorField)> {
        match self {
            Self::Wave(f) => vec![(1.0, f)],
            Self::Density(w) => w.components().iter().map(|c| (c.weight, &c.field)).collect(),
        }
    }

    fn for_each_field(&mut self, f: impl Fn(&mut SpinorField) + Sync) {
        match self {
            Self::Wave(psi) => f(psi),
            Self::Density(w) => {
                let mut fields: Vec<SpinorField> = w.components().iter().map(|c| c.field.clone()).collect();
                fields.par_iter_mut().for_each(|x| f(x));
                *w = w.with_fields(fields);
            }
        }
    }

    fn check(&self, h: &Hamiltonian) -> Result<()> {
        h.grid().same_as(self.grid())?;
        if h.spin_dim() != self.spin_dim() {
            return Err(Error::Shape("state spin does not match the Hamiltonian".into()));
        }
        Ok(())
    }
}

impl From<SpinorField> for QuantumState {
    fn from(f: SpinorField) -> Self {
        Self::Wave(f)
    }
}

impl From<DensityEnsemble> for QuantumState {
    fn from(w: DensityEnsemble) -> Self {
        Self::Density(w)
    }
}

/// Velocity per node, stored dimension-major.
#[derive(Clone, Debug)]
pub struct VelocityField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub epsilon: f64,
    /// Nodes whose denominator was floored.
    pub regularized: usize,
}

impl VelocityField {
    pub fn component(&self, d: usize) -> &[f64] {
        let n = self.grid.nodes();
        &self.values[d * n..(d + 1) * n]
    }

    pub fn at_node(&self, node: usize) -> ConfigPoint {
        let mut p = ConfigPoint::zeros(self.grid.dims());
        for d in 0..self.grid.dims() {
            p[d] = self.component(d)[node];
        }
        p
    }
}

/// Amplitudes and gradients of a guiding state at one instant, ready for
/// pointwise velocity queries.
pub struct GuidanceSnapshot {
    grid: GridSpec,
    coeff: [f64; MAX_DIMS],
    parts: Vec<(f64, SpinorField, Vec<SpinorField>)>,
    floor: f64,
}

/// Velocity at a point plus whether the denominator was floored.
#[derive(Clone, Copy, Debug)]
pub struct PointVelocity {
    pub velocity: ConfigPoint,
    pub regularized: bool,
}

impl GuidanceSnapshot {
    pub fn new(state: &QuantumState, h: &Hamiltonian) -> Result<Self> {
        state.check(h)?;
        Self::from_parts(&state.parts(), h.hbar(), h.masses())
    }

    pub(crate) fn from_parts(parts: &[(f64, &SpinorField)], hbar: f64, masses: &[f64]) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::Validation("empty state".into()))?
            .1
            .grid()
            .clone();
        let dims = grid.dims();
        if masses.len() != dims {
            return Err(Error::Shape("one mass per dimension required".into()));
        }
        let mut coeff = [0.0; MAX_DIMS];
        for d in 0..dims {
            coeff[d] = hbar / masses[d];
        }
        let parts = parts
            .iter()
            .map(|(p, f)| {
                let grads = (0..dims).map(|d| gradient(f, d)).collect::<Result<Vec<_>>>()?;
                Ok((*p, (*f).clone(), grads))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rho = vec![0.0; grid.nodes()];
        for (p, f, _) in &parts {
            for (r, d) in rho.iter_mut().zip(f.density()) {
                *r += p * d;
            }
        }
        let floor = NODE_EPSILON * rho.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            grid,
            coeff,
            parts,
            floor,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn finish(&self, num: &[Complex64; MAX_DIMS], den: f64) -> PointVelocity {
        let regularized = den < self.floor;
        let den = den.max(self.floor);
        let dims = self.grid.dims();
        let mut v = ConfigPoint::zeros(dims);
        for d in 0..dims {
            v[d] = self.coeff[d] * num[d].im / den;
        }
        PointVelocity { velocity: v, regularized }
    }

    /// Velocity at an arbitrary point, from multilinearly interpolated
    /// amplitudes and gradients.
    pub fn velocity_at(&self, p: &[f64]) -> PointVelocity {
        let st = self.grid.stencil(p);
        let dims = self.grid.dims();
        let mut num = [Complex64::default(); MAX_DIMS];
        let mut den = 0.0;
        for (w, f, grads) in &self.parts {
            for s in 0..f.spin_dim() {
                let a = st.apply(f.plane(s));
                den += w * a.norm_sqr();
                for d in 0..dims {
                    num[d] += a.conj() * st.apply(grads[d].plane(s)) * w;
                }
            }
        }
        self.finish(&num, den)
    }

    pub fn velocity_at_node(&self, node: usize) -> PointVelocity {
        let dims = self.grid.dims();
        let mut num = [Complex64::default(); MAX_DIMS];
        let mut den = 0.0;
        for (w, f, grads) in &self.parts {
            for s in 0..f.spin_dim() {
                let a = f.value(node, s);
                den += w * a.norm_sqr();
                for d in 0..dims {
                    num[d] += a.conj() * grads[d].value(node, s) * w;
                }
            }
        }
        self.finish(&num, den)
    }

    pub fn field(&self) -> VelocityField {
        let n = self.grid.nodes();
        let dims = self.grid.dims();
        let mut values = vec![0.0; n * dims];
        let mut regularized = 0;
        for node in 0..n {
            let pv = self.velocity_at_node(node);
            regularized += pv.regularized as usize;
            for d in 0..dims {
                values[d * n + node] = pv.velocity[d];
            }
        }
        VelocityField {
            grid: self.grid.clone(),
            values,
            epsilon: NODE_EPSILON,
            regularized,
        }
    }
}

pub fn velocity_from_wavefunction(psi: &SpinorField, h: &Hamiltonian) -> Result<VelocityField> {
    Ok(GuidanceSnapshot::new(&QuantumState::Wave(psi.clone()), h)?.field())
}

pub fn velocity_from_density(w: &DensityEnsemble, h: &Hamiltonian) -> Result<VelocityField> {
    Ok(GuidanceSnapshot::new(&QuantumState::Density(w.clone()), h)?.field())
}

/// Velocity of the `S1` coordinates of `q` computed from the conditional
/// density matrix of `S1` at the environment coordinates of `q`.
pub fn conditional_velocity(
    psi: &SpinorField,
    split: &Bipartition,
    h: &Hamiltonian,
    q: &[f64],
) -> Result<PointVelocity> {
    if q.len() != psi.grid().dims() {
        return Err(Error::Shape("configuration point has the wrong dimension".into()));
    }
    let q = ConfigPoint::new(q);
    let w = conditional(psi, split, &q.select(split.s2_dims()))?;
    let masses: Vec<f64> = split.s1_dims().iter().map(|&d| h.masses()[d]).collect();
    let parts: Vec<(f64, &SpinorField)> = w.components().iter().map(|c| (c.weight, &c.field)).collect();
    let snap = GuidanceSnapshot::from_parts(&parts, h.hbar(), &masses)?;
    Ok(snap.velocity_at(&q.select(split.s1_dims())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<ConfigPoint>,
    /// Subsystem index of every configuration dimension.
    pub labels: Vec<usize>,
    pub meta: TrajectoryMeta,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryMeta {
    /// Velocity evaluations whose denominator was floored.
    pub node_flags: usize,
    /// Steps ending inside the unsafe border of the box.
    pub boundary_excursions: usize,
    pub first_excursion: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &ConfigPoint {
        self.points.last().expect("nonempty trajectory")
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    /// Distance from the box faces below which a point counts as an excursion.
    pub safe_margin: f64,
    /// Record every n-th step (the final point is always kept).
    pub record_every: usize,
    pub labels: Option<Vec<usize>>,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            safe_margin: 0.0,
            record_every: 1,
            labels: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Particle {
    point: ConfigPoint,
    meta_flags: usize,
    excursions: usize,
    first_excursion: Option<f64>,
}

/// Advances a guiding state together with a set of configurations.
///
/// Each step computes the splitting's midpoint state, freezes its velocity
/// field, moves every point with classical RK4 and then completes the field
/// step.
pub struct CoIntegrator<'h> {
    prop: Propagator<'h>,
    state: QuantumState,
    t0: f64,
    steps: usize,
    particles: Vec<Particle>,
    safe_margin: f64,
}

impl<'h> CoIntegrator<'h> {
    pub fn new(h: &'h Hamiltonian, dt: f64, t0: f64, state: QuantumState, points: &[ConfigPoint]) -> Result<Self> {
        state.check(h)?;
        for p in points {
            if p.len() != h.grid().dims() {
                return Err(Error::Shape("configuration point has the wrong dimension".into()));
            }
        }
        Ok(Self {
            prop: Propagator::new(h, dt)?,
            state,
            t0,
            steps: 0,
            particles: points
                .iter()
                .map(|p| Particle {
                    point: h.grid().wrap(p),
                    meta_flags: 0,
                    excursions: 0,
                    first_excursion: None,
                })
                .collect(),
            safe_margin: 0.0,
        })
    }

    pub fn with_safe_margin(mut self, margin: f64) -> Self {
        self.safe_margin = margin;
        self
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.prop.dt()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.prop.dt()
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn point(&self, i: usize) -> ConfigPoint {
        self.particles[i].point
    }

    pub fn points(&self) -> Vec<ConfigPoint> {
        self.particles.iter().map(|p| p.point).collect()
    }

    pub fn meta(&self, i: usize) -> TrajectoryMeta {
        let p = &self.particles[i];
        TrajectoryMeta {
            node_flags: p.meta_flags,
            boundary_excursions: p.excursions,
            first_excursion: p.first_excursion,
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        let dt = self.prop.dt();
        let prop = &self.prop;
        self.state.for_each_field(|f| prop.first_half(f, t));
        let snap = GuidanceSnapshot::new(&self.state, prop.hamiltonian())?;
        let grid = prop.hamiltonian().grid();
        let margin = self.safe_margin;
        let t_end = t + dt;
        self.particles.par_iter_mut().for_each(|part| {
            let (next, flagged) = rk4(&snap, grid, &part.point, dt);
            part.meta_flags += flagged;
            if margin > 0.0 && near_boundary(grid, &next, margin) {
                part.excursions += 1;
                part.first_excursion.get_or_insert(t_end);
            }
            part.point = next;
        });
        self.state.for_each_field(|f| prop.second_half(f, t));
        self.steps += 1;
        Ok(())
    }

    pub fn into_state(self) -> QuantumState {
        self.state
    }
}

fn rk4(snap: &GuidanceSnapshot, grid: &GridSpec, q: &ConfigPoint, dt: f64) -> (ConfigPoint, usize) {
    let dims = q.len();
    let mut flags = 0;
    let mut eval = |p: &ConfigPoint| {
        let pv = snap.velocity_at(&grid.wrap(p));
        flags += pv.regularized as usize;
        pv.velocity
    };
    let shifted = |k: &ConfigPoint, c: f64| {
        let mut p = *q;
        for d in 0..dims {
            p[d] += c * k[d];
        }
        p
    };
    let k1 = eval(q);
    let k2 = eval(&shifted(&k1, 0.5 * dt));
    let k3 = eval(&shifted(&k2, 0.5 * dt));
    let k4 = eval(&shifted(&k3, dt));
    let mut out = *q;
    for d in 0..dims {
        out[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
    }
    (grid.wrap(&out), flags)
}

fn near_boundary(grid: &GridSpec, p: &ConfigPoint, margin: f64) -> bool {
    grid.axes()
        .iter()
        .zip(p.iter())
        .any(|(a, &x)| x - a.min < margin || a.max - x < margin)
}

/// Co-integrates many configurations with the state over `[t0, t1]`.
pub fn integrate_trajectories(
    initial: &[ConfigPoint],
    state: &QuantumState,
    h: &Hamiltonian,
    t0: f64,
    t1: f64,
    dt: f64,
    options: &TrajectoryOptions,
) -> Result<(Vec<Trajectory>, QuantumState)> {
    let mut co = CoIntegrator::new(h, dt, t0, state.clone(), initial)?.with_safe_margin(options.safe_margin);
    let steps = Propagator::new(h, dt)?.steps_between(t0, t1)?;
    let every = options.record_every.max(1);
    let labels = options.labels.clone().unwrap_or_else(|| vec![0; h.grid().dims()]);
    let mut times = vec![t0];
    let mut paths: Vec<Vec<ConfigPoint>> = co.points().into_iter().map(|p| vec![p]).collect();
    for i in 1..=steps {
        co.step()?;
        if i % every == 0 || i == steps {
            times.push(co.time());
            for (path, p) in paths.iter_mut().zip(co.points()) {
                path.push(p);
            }
        }
    }
    let trajectories = paths
        .into_iter()
        .enumerate()
        .map(|(i, points)| Trajectory {
            times: times.clone(),
            points,
            labels: labels.clone(),
            meta: co.meta(i),
        })
        .collect();
    Ok((trajectories, co.into_state()))
}

pub fn integrate_trajectory(
    initial: ConfigPoint,
    state: &QuantumState,
    h: &Hamiltonian,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory> {
    let (mut t, _) = integrate_trajectories(&[initial], state, h, t0, t1, dt, &TrajectoryOptions::default())?;
    Ok(t.pop().expect("one trajectory"))
}

#[derive(Clone, Debug)]
pub struct EquivarianceReport {
    /// Total-variation distance between the binned trajectory ensemble and the
    /// binned density at the final time.
    pub distance: f64,
    /// `sqrt(bins / n_traj)`, the rough scale of pure sampling noise.
    pub noise_floor: f64,
    pub node_flags: usize,
    pub final_state: QuantumState,
}

/// Samples `n_traj` points from the position density at `t0`, transports them
/// to `t1` and compares histograms with `bins` bins per axis over the box.
#[allow(clippy::too_many_arguments)]
pub fn equivariance_distance(
    state: &QuantumState,
    h: &Hamiltonian,
    t0: f64,
    t1: f64,
    dt: f64,
    n_traj: usize,
    bins: usize,
    stream: StreamId<'_>,
) -> Result<EquivarianceReport> {
    if n_traj == 0 || bins == 0 {
        return Err(Error::Config("need at least one trajectory and one bin".into()));
    }
    let initial = sample_density(&state.position_density(), n_traj, stream)?;
    let mut co = CoIntegrator::new(h, dt, t0, state.clone(), &initial)?;
    let steps = Propagator::new(h, dt)?.steps_between(t0, t1)?;
    for _ in 0..steps {
        co.step()?;
    }
    let grid = h.grid().clone();
    let mut empirical = vec![0.0; bins.pow(grid.dims() as u32)];
    for p in co.points() {
        empirical[bin_of(&grid, bins, &p)] += 1.0 / n_traj as f64;
    }
    let node_flags = (0..n_traj).map(|i| co.meta(i).node_flags).sum();
    let final_state = co.into_state();
    let reference = bin_density(&final_state.position_density(), bins);
    let distance = 0.5 * empirical.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(EquivarianceReport {
        distance,
        noise_floor: (empirical.len() as f64 / n_traj as f64).sqrt(),
        node_flags,
        final_state,
    })
}

pub(crate) fn bin_of(grid: &GridSpec, bins: usize, p: &[f64]) -> usize {
    let mut idx = 0;
    for (a, &x) in grid.axes().iter().zip(p) {
        let b = (((x - a.min) / a.length()) * bins as f64).floor() as isize;
        idx = idx * bins + b.clamp(0, bins as isize - 1) as usize;
    }
    idx
}

/// Bin probabilities of a grid density, spreading each node's mass uniformly
/// over the cell centred on it (periodically), matching how
/// [`sample_density`] jitters its draws.
pub fn bin_density(rho: &DensityField, bins: usize) -> Vec<f64> {
    let grid = &rho.grid;
    let dims = grid.dims();
    // Per axis and node index: the (bin, fraction) pairs of its cell.
    let tables: Vec<Vec<Vec<(usize, f64)>>> = grid
        .axes()
        .iter()
        .map(|a| {
            let h = a.spacing();
            let width = a.length() / bins as f64;
            (0..a.points)
                .map(|i| {
                    let lo = a.coord(i) - 0.5 * h - a.min;
                    let mut parts = Vec::new();
                    let mut x = lo;
                    let end = lo + h;
                    while x < end - 1e-12 * h {
                        let b = (x / width).floor();
                        let next = ((b + 1.0) * width).min(end);
                        let bin = (b as isize).rem_euclid(bins as isize) as usize;
                        parts.push((bin, (next - x) / h));
                        x = next;
                    }
                    parts
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; bins.pow(dims as u32)];
    let dv = grid.cell_volume();
    for node in 0..grid.nodes() {
        let mass = rho.values[node] * dv;
        if mass == 0.0 {
            continue;
        }
        let idx = grid.multi_index(node);
        spread(&tables, &idx, 0, 0, mass, bins, &mut out);
    }
    out
}

fn spread(
    tables: &[Vec<Vec<(usize, f64)>>],
    idx: &[usize; MAX_DIMS],
    d: usize,
    acc: usize,
    mass: f64,
    bins: usize,
    out: &mut [f64],
) {
    if d == tables.len() {
        out[acc] += mass;
        return;
    }
    for &(b, f) in &tables[d][idx[d]] {
        spread(tables, idx, d + 1, acc * bins + b, mass * f, bins, out);
    }
}

#[derive(Clone, Debug)]
pub struct ContinuityResidual {
    pub field: DensityField,
    /// `sqrt(sum r^2 h^D)`.
    pub norm: f64,
}

/// `[rho(t+dt) - rho(t-dt)] / (2 dt) + div(rho v)` at time `t`.
pub fn continuity_residual(state: &QuantumState, h: &Hamiltonian, t: f64, dt: f64) -> Result<ContinuityResidual> {
    state.check(h)?;
    let forward = Propagator::new(h, dt)?;
    let backward = Propagator::signed(h, -dt);
    let mut plus = state.clone();
    plus.for_each_field(|f| forward.step_in_place(f, t));
    let mut minus = state.clone();
    minus.for_each_field(|f| backward.step_in_place(f, t));
    let rho_p = plus.position_density().values;
    let rho_m = minus.position_density().values;
    let rho = state.position_density().values;
    let v = GuidanceSnapshot::new(state, h)?.field();
    let grid = h.grid();
    let shape = grid.shape();
    let n = grid.nodes();
    let mut div = vec![0.0; n];
    for d in 0..grid.dims() {
        let mut flux: Vec<Complex64> = (0..n).map(|i| Complex64::new(rho[i] * v.component(d)[i], 0.0)).collect();
        spectral::fft_axis(&mut flux, &shape, d, false);
        let m = shape[d];
        let k = spectral::wavenumbers(m, grid.axis(d).length());
        let stride = grid.stride(d);
        for (i, z) in flux.iter_mut().enumerate() {
            let j = (i / stride) % m;
            *z = if 2 * j == m {
                Complex64::default()
            } else {
                *z * Complex64::new(0.0, k[j] / m as f64)
            };
        }
        spectral::fft_axis(&mut flux, &shape, d, true);
        div.iter_mut().zip(&flux).for_each(|(a, z)| *a += z.re);
    }
    let values: Vec<f64> = (0..n).map(|i| (rho_p[i] - rho_m[i]) / (2.0 * dt) + div[i]).collect();
    let norm = (values.iter().map(|r| r * r).sum::<f64>() * grid.cell_volume()).sqrt();
    Ok(ContinuityResidual {
        field: DensityField {
            grid: grid.clone(),
            values,
        },
        norm,
    })
}
