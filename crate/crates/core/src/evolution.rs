//! Hamiltonians with matrix-valued, piecewise-constant potentials and their
//! split-step propagation.
//!
//! Each time step is a Strang splitting: half a potential step (a pointwise
//! `k x k` unitary), a full kinetic step in Fourier space, and another half
//! potential step. Every factor is exactly unitary. Density ensembles evolve
//! component by component.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::densities::{frobenius_distance, DensityEnsemble};
use crate::error::{Error, Result};
use crate::lattice::{ConfigPoint, GridSpec, SpinorField};
use crate::spectral;

const HERMITIAN_TOL: f64 = 1e-12;
/// Planes at least this large are transformed in parallel.
const PARALLEL_PLANE_NODES: usize = 4096;

/// Potential values on every node of a grid.
#[derive(Clone, Debug)]
pub enum PotentialField {
    /// Spin-diagonal potential, stored spin-major like a field.
    Diagonal { spin_dim: usize, values: Vec<f64> },
    /// General Hermitian `k x k` block per node, stored node-major, row-major.
    Full { spin_dim: usize, values: Vec<Complex64> },
}

impl PotentialField {
    /// Spin-independent scalar potential.
    pub fn scalar(grid: &GridSpec, spin_dim: usize, f: impl Fn(&ConfigPoint) -> f64) -> Result<Self> {
        Self::diagonal(grid, spin_dim, |p, _| f(p))
    }

    pub fn diagonal(grid: &GridSpec, spin_dim: usize, f: impl Fn(&ConfigPoint, usize) -> f64) -> Result<Self> {
        let n = grid.nodes();
        let mut values = vec![0.0; n * spin_dim];
        for node in 0..n {
            let p = grid.coords(node);
            for s in 0..spin_dim {
                values[s * n + node] = f(&p, s);
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("potential contains non-finite values".into()));
        }
        Ok(Self::Diagonal { spin_dim, values })
    }

    /// General matrix potential; `f` returns the row-major `k x k` block.
    pub fn matrix(
        grid: &GridSpec,
        spin_dim: usize,
        f: impl Fn(&ConfigPoint) -> Vec<Complex64>,
    ) -> Result<Self> {
        let k = spin_dim;
        let mut values = Vec::with_capacity(grid.nodes() * k * k);
        for node in 0..grid.nodes() {
            let block = f(&grid.coords(node));
            if block.len() != k * k {
                return Err(Error::Shape(format!("potential block has {} entries, need {}", block.len(), k * k)));
            }
            for r in 0..k {
                for c in 0..k {
                    let a = block[r * k + c];
                    let b = block[c * k + r].conj();
                    if !(a.re.is_finite() && a.im.is_finite()) {
                        return Err(Error::Validation("potential contains non-finite values".into()));
                    }
                    if (a - b).norm() > HERMITIAN_TOL {
                        return Err(Error::Validation(format!(
                            "potential is not Hermitian at node {node} (defect {:e})",
                            (a - b).norm()
                        )));
                    }
                }
            }
            values.extend_from_slice(&block);
        }
        Ok(Self::Full { spin_dim, values })
    }

    pub fn spin_dim(&self) -> usize {
        match self {
            Self::Diagonal { spin_dim, .. } | Self::Full { spin_dim, .. } => *spin_dim,
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Diagonal { values, .. } => values.len(),
            Self::Full { values, .. } => values.len(),
        }
    }

    /// `k x k` block at a node.
    pub fn block(&self, nodes: usize, node: usize) -> Vec<Complex64> {
        match self {
            Self::Diagonal { spin_dim: k, values } => {
                let mut out = vec![Complex64::default(); k * k];
                for s in 0..*k {
                    out[s * k + s] = Complex64::new(values[s * nodes + node], 0.0);
                }
                out
            }
            Self::Full { spin_dim: k, values } => values[node * k * k..(node + 1) * k * k].to_vec(),
        }
    }
}

/// A potential switched on over `[t_start, t_end)`.
#[derive(Clone, Debug)]
pub struct Pulse {
    pub t_start: f64,
    pub t_end: f64,
    pub potential: Arc<PotentialField>,
}

/// `H = -sum_j hbar^2/(2 m_j) d_j^2 + V(t)` with `V` piecewise constant in time.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    hbar: f64,
    masses: Vec<f64>,
    grid: GridSpec,
    spin_dim: usize,
    schedule: Vec<Pulse>,
}

impl Hamiltonian {
    /// Purely kinetic Hamiltonian.
    pub fn free(grid: GridSpec, spin_dim: usize, hbar: f64, masses: Vec<f64>) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::Validation(format!("hbar must be positive, got {hbar}")));
        }
        if masses.len() != grid.dims() || masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::Validation(format!(
                "need one positive mass per dimension ({}), got {:?}",
                grid.dims(),
                masses
            )));
        }
        if spin_dim == 0 {
            return Err(Error::Validation("spin dimension must be positive".into()));
        }
        Ok(Self {
            hbar,
            masses,
            grid,
            spin_dim,
            schedule: Vec::new(),
        })
    }

    /// Appends a pulse. Pulses must be added in time order and may not overlap.
    pub fn with_pulse(mut self, t_start: f64, t_end: f64, potential: PotentialField) -> Result<Self> {
        if !(t_end > t_start) || t_start.is_nan() {
            return Err(Error::Validation(format!("pulse window [{t_start}, {t_end}) is empty")));
        }
        if let Some(last) = self.schedule.last() {
            if t_start < last.t_end {
                return Err(Error::Validation(format!(
                    "pulse starting at {t_start} overlaps or precedes the pulse ending at {}",
                    last.t_end
                )));
            }
        }
        if potential.spin_dim() != self.spin_dim || potential.len() % self.grid.nodes() != 0 {
            return Err(Error::Shape("potential does not match the Hamiltonian's grid or spin".into()));
        }
        let expected = match &potential {
            PotentialField::Diagonal { .. } => self.grid.nodes() * self.spin_dim,
            PotentialField::Full { .. } => self.grid.nodes() * self.spin_dim * self.spin_dim,
        };
        if potential.len() != expected {
            return Err(Error::Shape("potential does not match the Hamiltonian's grid".into()));
        }
        self.schedule.push(Pulse {
            t_start,
            t_end,
            potential: Arc::new(potential),
        });
        Ok(self)
    }

    /// Time-independent potential, on for all times.
    pub fn with_static(self, potential: PotentialField) -> Result<Self> {
        if !self.schedule.is_empty() {
            return Err(Error::Validation("a static potential excludes other pulses".into()));
        }
        self.with_pulse(f64::NEG_INFINITY, f64::INFINITY, potential)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn schedule(&self) -> &[Pulse] {
        &self.schedule
    }

    /// Index of the pulse covering time `t`.
    pub fn active_at(&self, t: f64) -> Option<usize> {
        self.schedule.iter().position(|p| t >= p.t_start && t < p.t_end)
    }

    /// Finite pulse boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.schedule
            .iter()
            .flat_map(|p| [p.t_start, p.t_end])
            .filter(|t| t.is_finite())
            .collect()
    }

    /// `<psi|H(t)|psi>` with the kinetic part evaluated spectrally.
    pub fn expectation(&self, psi: &SpinorField, t: f64) -> Result<f64> {
        self.check_field(psi)?;
        let shape = self.grid.shape();
        let n = self.grid.nodes();
        let mut kinetic = 0.0;
        let ks = self.kinetic_multipliers();
        for s in 0..psi.spin_dim() {
            let mut plane = psi.plane(s).to_vec();
            spectral::fft_all(&mut plane, &shape, false);
            kinetic += plane.iter().zip(&ks).map(|(z, e)| z.norm_sqr() * e).sum::<f64>();
        }
        kinetic *= self.grid.cell_volume() / n as f64;
        let mut potential = 0.0;
        if let Some(i) = self.active_at(t) {
            let v = &self.schedule[i].potential;
            let k = self.spin_dim;
            for node in 0..n {
                let block = v.block(n, node);
                for r in 0..k {
                    for c in 0..k {
                        potential += (psi.value(node, r).conj() * block[r * k + c] * psi.value(node, c)).re;
                    }
                }
            }
            potential *= self.grid.cell_volume();
        }
        Ok(kinetic + potential)
    }

    /// `sum_j hbar^2 k_j^2 / (2 m_j)` per Fourier node.
    pub(crate) fn kinetic_multipliers(&self) -> Vec<f64> {
        let dims = self.grid.dims();
        let ks: Vec<Vec<f64>> = (0..dims)
            .map(|d| spectral::wavenumbers(self.grid.axis(d).points, self.grid.axis(d).length()))
            .collect();
        (0..self.grid.nodes())
            .map(|node| {
                let idx = self.grid.multi_index(node);
                (0..dims)
                    .map(|d| self.hbar * self.hbar * ks[d][idx[d]].powi(2) / (2.0 * self.masses[d]))
                    .sum()
            })
            .collect()
    }

    pub(crate) fn check_field(&self, psi: &SpinorField) -> Result<()> {
        self.grid.same_as(psi.grid())?;
        if psi.spin_dim() != self.spin_dim {
            return Err(Error::Shape(format!(
                "field spin {} vs Hamiltonian spin {}",
                psi.spin_dim(),
                self.spin_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub field: SpinorField,
    /// Sum of the per-step changes of the squared norm.
    pub norm_drift: f64,
}

enum HalfFactor {
    Diagonal(Vec<Complex64>),
    Full(Vec<Complex64>),
}

/// Split-step propagator for a fixed Hamiltonian and time step. Potential
/// factors are built lazily, once per pulse.
pub struct Propagator<'h> {
    h: &'h Hamiltonian,
    dt: f64,
    kinetic: Vec<Complex64>,
    kinetic_half: Vec<Complex64>,
    half: Vec<OnceLock<HalfFactor>>,
}

impl<'h> Propagator<'h> {
    pub fn new(h: &'h Hamiltonian, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self::signed(h, dt))
    }

    /// Accepts negative steps (backward propagation).
    pub(crate) fn signed(h: &'h Hamiltonian, dt: f64) -> Self {
        let scale = 1.0 / h.grid.nodes() as f64;
        let energies = h.kinetic_multipliers();
        let phases = |tau: f64| -> Vec<Complex64> {
            energies
                .iter()
                .map(|e| Complex64::from_polar(scale, -e * tau / h.hbar))
                .collect()
        };
        let half = h.schedule.iter().map(|_| OnceLock::new()).collect();
        Self {
            h,
            dt,
            kinetic: phases(dt),
            kinetic_half: phases(0.5 * dt),
            half,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        self.h
    }

    fn half_factor(&self, pulse: usize) -> &HalfFactor {
        self.half[pulse].get_or_init(|| {
            let tau = 0.5 * self.dt / self.h.hbar;
            match &*self.h.schedule[pulse].potential {
                PotentialField::Diagonal { values, .. } => {
                    HalfFactor::Diagonal(values.iter().map(|v| Complex64::from_polar(1.0, -v * tau)).collect())
                }
                PotentialField::Full { spin_dim: k, values } => {
                    let k = *k;
                    let mut out = Vec::with_capacity(values.len());
                    for block in values.chunks(k * k) {
                        let m = DMatrix::from_row_slice(k, k, block);
                        let eig = m.symmetric_eigen();
                        let phases = eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * tau));
                        let u = &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
                        for r in 0..k {
                            for c in 0..k {
                                out.push(u[(r, c)]);
                            }
                        }
                    }
                    HalfFactor::Full(out)
                }
            }
        })
    }

    fn apply_half(&self, psi: &mut SpinorField, pulse: usize) {
        let n = psi.nodes();
        let k = psi.spin_dim();
        let data = psi.data_mut_keep_flag();
        match self.half_factor(pulse) {
            HalfFactor::Diagonal(ph) => data.iter_mut().zip(ph).for_each(|(z, p)| *z *= p),
            HalfFactor::Full(u) => {
                let mut tmp = vec![Complex64::default(); k];
                for node in 0..n {
                    let block = &u[node * k * k..(node + 1) * k * k];
                    for (r, t) in tmp.iter_mut().enumerate() {
                        *t = (0..k).map(|c| block[r * k + c] * data[c * n + node]).sum();
                    }
                    for (r, t) in tmp.iter().enumerate() {
                        data[r * n + node] = *t;
                    }
                }
            }
        }
    }

    fn apply_kinetic(&self, psi: &mut SpinorField, phases: &[Complex64]) {
        let shape = self.h.grid.shape();
        let n = psi.nodes();
        let apply = |plane: &mut [Complex64]| {
            spectral::fft_all(plane, &shape, false);
            plane.iter_mut().zip(phases).for_each(|(z, e)| *z *= e);
            spectral::fft_all(plane, &shape, true);
        };
        let data = psi.data_mut_keep_flag();
        if n >= PARALLEL_PLANE_NODES {
            data.par_chunks_mut(n).for_each(apply);
        } else {
            data.chunks_mut(n).for_each(apply);
        }
    }

    /// One Strang step over `[t, t + dt]`, in place.
    pub fn step_in_place(&self, psi: &mut SpinorField, t: f64) {
        let pulse = self.h.active_at(t + 0.5 * self.dt);
        if let Some(i) = pulse {
            self.apply_half(psi, i);
        }
        self.apply_kinetic(psi, &self.kinetic);
        if let Some(i) = pulse {
            self.apply_half(psi, i);
        }
    }

    /// Half potential factor then half kinetic factor: the splitting's
    /// midpoint state at `t + dt/2`.
    pub fn first_half(&self, psi: &mut SpinorField, t: f64) {
        if let Some(i) = self.h.active_at(t + 0.5 * self.dt) {
            self.apply_half(psi, i);
        }
        self.apply_kinetic(psi, &self.kinetic_half);
    }

    /// Completes a step started with [`Propagator::first_half`].
    pub fn second_half(&self, psi: &mut SpinorField, t: f64) {
        self.apply_kinetic(psi, &self.kinetic_half);
        if let Some(i) = self.h.active_at(t + 0.5 * self.dt) {
            self.apply_half(psi, i);
        }
    }

    /// Number of steps spanning `[t0, t1]`; every pulse boundary inside the
    /// interval must land on a step boundary.
    pub fn steps_between(&self, t0: f64, t1: f64) -> Result<usize> {
        let span = t1 - t0;
        if !(span > 0.0) {
            return Err(Error::Config(format!("need t1 > t0, got [{t0}, {t1}]")));
        }
        let steps = span / self.dt;
        let n = steps.round();
        if (steps - n).abs() > 1e-6 || n < 1.0 {
            return Err(Error::Config(format!(
                "time step {} does not divide the interval [{t0}, {t1}]",
                self.dt
            )));
        }
        for b in self.h.breakpoints() {
            if b > t0 && b < t1 {
                let x = (b - t0) / self.dt;
                if (x - x.round()).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "pulse boundary at t = {b} is not on a step boundary (dt = {})",
                        self.dt
                    )));
                }
            }
        }
        Ok(n as usize)
    }

    pub fn evolve(&self, psi: &SpinorField, t0: f64, t1: f64) -> Result<PropagationResult> {
        self.h.check_field(psi)?;
        let steps = self.steps_between(t0, t1)?;
        let mut field = psi.clone();
        let mut norm = field.norm_sqr();
        let mut drift = 0.0;
        for i in 0..steps {
            self.step_in_place(&mut field, t0 + i as f64 * self.dt);
            let next = field.norm_sqr();
            drift += (next - norm).abs();
            norm = next;
        }
        Ok(PropagationResult {
            field,
            norm_drift: drift,
        })
    }

    pub fn evolve_ensemble(&self, w: &DensityEnsemble, t0: f64, t1: f64) -> Result<DensityEnsemble> {
        let steps = self.steps_between(t0, t1)?;
        let fields: Vec<SpinorField> = w
            .components()
            .par_iter()
            .map(|c| {
                self.h.check_field(&c.field)?;
                let mut f = c.field.clone();
                for i in 0..steps {
                    self.step_in_place(&mut f, t0 + i as f64 * self.dt);
                }
                Ok(f)
            })
            .collect::<Result<_>>()?;
        Ok(w.with_fields(fields))
    }
}

/// One Strang step of `psi` from `t` to `t + dt`.
pub fn step_schrodinger(psi: &SpinorField, h: &Hamiltonian, t: f64, dt: f64) -> Result<SpinorField> {
    h.check_field(psi)?;
    let prop = Propagator::new(h, dt)?;
    let mut out = psi.clone();
    prop.step_in_place(&mut out, t);
    Ok(out)
}

/// Repeated Strang steps over `[t0, t1]`.
pub fn evolve_field(psi: &SpinorField, h: &Hamiltonian, t0: f64, t1: f64, dt: f64) -> Result<PropagationResult> {
    Propagator::new(h, dt)?.evolve(psi, t0, t1)
}

/// Evolves every ensemble component; weights are untouched.
pub fn evolve_ensemble(w: &DensityEnsemble, h: &Hamiltonian, t0: f64, t1: f64, dt: f64) -> Result<DensityEnsemble> {
    Propagator::new(h, dt)?.evolve_ensemble(w, t0, t1)
}

/// Tracks how far a sequence of density matrices strays from the unitary
/// orbit of its first member.
pub struct UnitarityTracker<'h> {
    prop: Propagator<'h>,
    reference: DensityEnsemble,
    time: f64,
    max_deviation: f64,
}

impl<'h> UnitarityTracker<'h> {
    pub fn new(h1: &'h Hamiltonian, dt: f64, t_first: f64, first: DensityEnsemble) -> Result<Self> {
        h1.grid().same_as(first.grid())?;
        if h1.spin_dim() != first.spin_dim() {
            return Err(Error::Shape("snapshot spin does not match the subsystem Hamiltonian".into()));
        }
        Ok(Self {
            prop: Propagator::new(h1, dt)?,
            reference: first,
            time: t_first,
            max_deviation: 0.0,
        })
    }

    /// Advances the reference to `t` and returns the distance to `snapshot`.
    pub fn observe(&mut self, t: f64, snapshot: &DensityEnsemble) -> Result<f64> {
        if t > self.time + 0.5 * self.prop.dt {
            self.reference = self.prop.evolve_ensemble(&self.reference, self.time, t)?;
            self.time = t;
        } else if (t - self.time).abs() > 0.5 * self.prop.dt {
            return Err(Error::Config("snapshots must be in increasing time order".into()));
        }
        let d = frobenius_distance(&self.reference, snapshot)?;
        self.max_deviation = self.max_deviation.max(d);
        Ok(d)
    }

    pub fn max_deviation(&self) -> f64 {
        self.max_deviation
    }

    pub fn reference(&self) -> &DensityEnsemble {
        &self.reference
    }
}

/// Maximum Hilbert-Schmidt distance between each snapshot and the unitary
/// evolution (under `h1`) of the first snapshot.
pub fn unitarity_deviation(snapshots: &[(f64, DensityEnsemble)], h1: &Hamiltonian, dt: f64) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::Config("need at least two snapshots".into()));
    }
    let (t_first, first) = &snapshots[0];
    let mut tracker = UnitarityTracker::new(h1, dt, *t_first, first.clone())?;
    for (t, w) in &snapshots[1..] {
        tracker.observe(*t, w)?;
    }
    Ok(tracker.max_deviation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::inner_product;

    fn packet(grid: &GridSpec, c: f64, sigma: f64, k: f64) -> SpinorField {
        SpinorField::from_fn(grid.clone(), 1, |p, _| {
            Complex64::from_polar((-(p[0] - c).powi(2) / (4.0 * sigma * sigma)).exp(), k * p[0])
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn overlapping_pulses_rejected() {
        let g = GridSpec::line(-5.0, 5.0, 32).unwrap();
        let v = || PotentialField::scalar(&g, 1, |p| p[0]).unwrap();
        let h = Hamiltonian::free(g.clone(), 1, 1.0, vec![1.0]).unwrap();
        let h = h.with_pulse(0.0, 1.0, v()).unwrap();
        assert!(h.clone().with_pulse(0.5, 2.0, v()).is_err());
        assert!(h.with_pulse(1.0, 2.0, v()).is_ok());
    }

    #[test]
    fn non_hermitian_potential_rejected() {
        let g = GridSpec::line(-5.0, 5.0, 16).unwrap();
        let bad = PotentialField::matrix(&g, 2, |_| {
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(1.0, 0.0),
            ]
        });
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn misaligned_breakpoint_is_a_config_error() {
        let g = GridSpec::line(-5.0, 5.0, 32).unwrap();
        let h = Hamiltonian::free(g.clone(), 1, 1.0, vec![1.0])
            .unwrap()
            .with_pulse(0.15, 0.3, PotentialField::scalar(&g, 1, |p| p[0]).unwrap())
            .unwrap();
        let psi = packet(&g, 0.0, 1.0, 0.0);
        assert!(matches!(evolve_field(&psi, &h, 0.0, 1.0, 0.1), Err(Error::Config(_))));
        assert!(evolve_field(&psi, &h, 0.0, 1.0, 0.05).is_ok());
        assert!(matches!(evolve_field(&psi, &h, 0.0, 1.0, 0.3), Err(Error::Config(_))));
    }

    #[test]
    fn plane_wave_returns_after_one_kinetic_period() {
        let g = GridSpec::line(0.0, 2.0 * std::f64::consts::PI, 32).unwrap();
        let h = Hamiltonian::free(g.clone(), 1, 1.0, vec![1.0]).unwrap();
        let k0 = 2.0;
        let psi = SpinorField::from_fn(g, 1, |p, _| Complex64::from_polar(1.0, k0 * p[0]))
            .unwrap()
            .normalized()
            .unwrap();
        // E = k0^2 / 2 = 2, period 2 pi / E = pi.
        let period = std::f64::consts::PI;
        let out = evolve_field(&psi, &h, 0.0, period, period / 200.0).unwrap().field;
        for (a, b) in out.data().iter().zip(psi.data()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn concatenation_is_bitwise() {
        let g = GridSpec::line(-10.0, 10.0, 64).unwrap();
        let h = Hamiltonian::free(g.clone(), 1, 1.0, vec![1.0])
            .unwrap()
            .with_pulse(0.2, 0.4, PotentialField::scalar(&g, 1, |p| 0.5 * p[0] * p[0]).unwrap())
            .unwrap();
        let psi = packet(&g, 1.0, 1.0, 0.5);
        let dt = 0.01;
        let direct = evolve_field(&psi, &h, 0.0, 0.6, dt).unwrap().field;
        let a = evolve_field(&psi, &h, 0.0, 0.3, dt).unwrap().field;
        let b = evolve_field(&a, &h, 0.3, 0.6, dt).unwrap().field;
        assert_eq!(direct.data(), b.data());
    }

    #[test]
    fn norm_is_kept_over_many_steps() {
        let g = GridSpec::line(-10.0, 10.0, 128).unwrap();
        let h = Hamiltonian::free(g.clone(), 1, 1.0, vec![1.0])
            .unwrap()
            .with_static(PotentialField::scalar(&g, 1, |p| 0.5 * p[0] * p[0]).unwrap())
            .unwrap();
        let psi = packet(&g, 2.0, 0.8, 1.0);
        let res = evolve_field(&psi, &h, 0.0, 1.0, 1e-3).unwrap();
        assert!((res.field.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(res.norm_drift < 1e-12);
        assert!(res.field.is_normalized());
    }

    #[test]
    fn matrix_potential_factor_is_unitary() {
        let g = GridSpec::line(-5.0, 5.0, 16).unwrap();
        let v = PotentialField::matrix(&g, 2, |p| {
            let (bx, by, bz) = (0.3 * p[0], -0.7, 1.1);
            vec![
                Complex64::new(bz, 0.0),
                Complex64::new(bx, -by),
                Complex64::new(bx, by),
                Complex64::new(-bz, 0.0),
            ]
        })
        .unwrap();
        let h = Hamiltonian::free(g.clone(), 2, 1.0, vec![1.0]).unwrap().with_static(v).unwrap();
        let a = SpinorField::from_fn(g.clone(), 2, |p, s| Complex64::new((-p[0] * p[0]).exp(), s as f64 * 0.3)).unwrap();
        let b = SpinorField::from_fn(g, 2, |p, s| Complex64::new(0.2, (-(p[0] - 1.0).powi(2)).exp() * (s as f64 - 0.5))).unwrap();
        let before = inner_product(&a, &b).unwrap();
        let ea = evolve_field(&a, &h, 0.0, 1.0, 0.01).unwrap().field;
        let eb = evolve_field(&b, &h, 0.0, 1.0, 0.01).unwrap().field;
        assert!((inner_product(&ea, &eb).unwrap() - before).norm() < 1e-12);
    }

    #[test]
    fn free_packet_spreads_as_predicted() {
        let g = GridSpec::line(-40.0, 40.0, 512).unwrap();
        let (sigma0, mass, hbar, t) = (1.0, 1.5, 1.0, 3.0);
        let h = Hamiltonian::free(g.clone(), 1, hbar, vec![mass]).unwrap();
        let psi = packet(&g, 0.0, sigma0, 0.0);
        let out = evolve_field(&psi, &h, 0.0, t, 0.05).unwrap().field;
        let rho = out.density();
        let dv = g.cell_volume();
        let mean: f64 = (0..g.nodes()).map(|i| g.coords(i)[0] * rho[i] * dv).sum();
        let var: f64 = (0..g.nodes()).map(|i| (g.coords(i)[0] - mean).powi(2) * rho[i] * dv).sum();
        let expected = sigma0 * sigma0 + (hbar * t / (2.0 * mass * sigma0)).powi(2);
        assert!(((var - expected) / expected).abs() < 1e-6, "{var} vs {expected}");
    }

    #[test]
    fn spin_z_pulse_kicks_momentum() {
        let g = GridSpec::line(-20.0, 20.0, 256).unwrap();
        let lambda = 0.8;
        let v = PotentialField::diagonal(&g, 2, |p, s| if s == 0 { lambda * p[0] } else { -lambda * p[0] }).unwrap();
        let h = Hamiltonian::free(g.clone(), 2, 1.0, vec![1.0]).unwrap().with_pulse(0.0, 0.5, v).unwrap();
        let psi = SpinorField::from_fn(g.clone(), 2, |p, s| {
            Complex64::new(if s == 0 { (-p[0] * p[0] / 4.0).exp() } else { 0.0 }, 0.0)
        })
        .unwrap()
        .normalized()
        .unwrap();
        let momentum = |f: &SpinorField| {
            let d = crate::lattice::gradient(f, 0).unwrap();
            (inner_product(f, &d).unwrap() * Complex64::new(0.0, -1.0)).re
        };
        let p0 = momentum(&psi);
        let out = evolve_field(&psi, &h, 0.0, 0.5, 0.01).unwrap().field;
        assert!((momentum(&out) - p0 + lambda * 0.5).abs() < 1e-6);
    }
}
