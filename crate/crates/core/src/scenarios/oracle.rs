//! Reproducible fixtures with known analytic behaviour.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::densities::statistical;
use crate::error::{Error, Result};
use crate::evolution::{Hamiltonian, PotentialField, Propagator};
use crate::guidance::QuantumState;
use crate::lattice::{inner_product, GridSpec, SpinorField};
use crate::rng::StreamId;
use crate::spectral;

/// Largest `nodes * spin_dim` for the dense one-step operator.
const DENSE_STEP_LIMIT: usize = 1024;

#[derive(Clone, Debug)]
pub enum OracleScenario {
    /// Free Gaussian, equal spin amplitudes, spin component `s` boosted by
    /// `momenta[s]`.
    FreeGaussian {
        grid: GridSpec,
        hbar: f64,
        mass: f64,
        center: f64,
        sigma: f64,
        momenta: Vec<f64>,
    },
    /// Ground state of the discretized oscillator, translated by
    /// `displacement`. Stationarity is exact for the given step `dt`.
    OscillatorCoherent {
        grid: GridSpec,
        hbar: f64,
        mass: f64,
        omega: f64,
        displacement: f64,
        dt: f64,
    },
    /// Free mixture of Gaussian packets `(weight, center, momentum)`,
    /// orthonormalized in the listed order.
    MixedWFundamental {
        grid: GridSpec,
        hbar: f64,
        mass: f64,
        sigma: f64,
        packets: Vec<(f64, f64, f64)>,
    },
    /// Random band-limited two-coordinate state with the requested Schmidt
    /// rank across the `q1 | q2` cut, spin `k1 * k2`.
    RandomEntangled {
        grid: GridSpec,
        hbar: f64,
        masses: [f64; 2],
        k1: usize,
        k2: usize,
        rank: usize,
        envelope: f64,
        modes: usize,
    },
}

impl OracleScenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FreeGaussian { .. } => "free_gaussian",
            Self::OscillatorCoherent { .. } => "oscillator_coherent",
            Self::MixedWFundamental { .. } => "mixed_w_fundamental",
            Self::RandomEntangled { .. } => "random_entangled",
        }
    }
}

/// Normalized Gaussian amplitude with `|psi|^2` standard deviation `sigma`.
pub fn gaussian(x: f64, center: f64, sigma: f64) -> f64 {
    (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25) * (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp()
}

fn check_packet(grid: &GridSpec, center: f64, sigma: f64, momentum: f64, hbar: f64) -> Result<()> {
    let a = grid.axis(0);
    if center - 6.0 * sigma < a.min || center + 6.0 * sigma >= a.max {
        return Err(Error::Geometry(format!(
            "packet at {center} with width {sigma} does not fit the box [{}, {})",
            a.min, a.max
        )));
    }
    let k = (momentum / hbar).abs() + 3.0 / sigma;
    if k >= 0.8 * std::f64::consts::PI / a.spacing() {
        return Err(Error::Geometry(format!("momentum {momentum} is too close to the grid's Nyquist limit")));
    }
    Ok(())
}

pub fn build_oracle_scenario(spec: &OracleScenario, seed: u64) -> Result<(QuantumState, Hamiltonian)> {
    match spec {
        OracleScenario::FreeGaussian {
            grid,
            hbar,
            mass,
            center,
            sigma,
            momenta,
        } => {
            one_dimensional(grid)?;
            if momenta.is_empty() {
                return Err(Error::Config("need at least one spin component".into()));
            }
            for p in momenta {
                check_packet(grid, *center, *sigma, *p, *hbar)?;
            }
            let k = momenta.len();
            let amp = 1.0 / (k as f64).sqrt();
            let psi = SpinorField::from_fn(grid.clone(), k, |q, s| {
                Complex64::from_polar(amp * gaussian(q[0], *center, *sigma), momenta[s] * q[0] / hbar)
            })?
            .normalized()?;
            let h = Hamiltonian::free(grid.clone(), k, *hbar, vec![*mass])?;
            Ok((QuantumState::Wave(psi), h))
        }
        OracleScenario::OscillatorCoherent {
            grid,
            hbar,
            mass,
            omega,
            displacement,
            dt,
        } => {
            one_dimensional(grid)?;
            let h = oscillator(grid, *hbar, *mass, *omega)?;
            let ground = stationary_states(&h, *dt, 1)?.remove(0);
            let width = (hbar / (2.0 * mass * omega)).sqrt();
            check_packet(grid, *displacement, width, 0.0, *hbar)?;
            Ok((QuantumState::Wave(translate(&ground, *displacement)?), h))
        }
        OracleScenario::MixedWFundamental {
            grid,
            hbar,
            mass,
            sigma,
            packets,
        } => {
            one_dimensional(grid)?;
            let mut fields: Vec<SpinorField> = Vec::new();
            for &(_, c, p) in packets {
                check_packet(grid, c, *sigma, p, *hbar)?;
                let mut f =
                    SpinorField::from_fn(grid.clone(), 1, |q, _| Complex64::from_polar(gaussian(q[0], c, *sigma), p * q[0] / hbar))?;
                for prev in &fields {
                    let proj = inner_product(prev, &f)?;
                    f.add_scaled(prev, -proj)?;
                }
                fields.push(f.normalized()?);
            }
            let w = statistical(packets.iter().map(|p| p.0).zip(fields).collect())?;
            let h = Hamiltonian::free(grid.clone(), 1, *hbar, vec![*mass])?;
            Ok((QuantumState::Density(w), h))
        }
        OracleScenario::RandomEntangled {
            grid,
            hbar,
            masses,
            k1,
            k2,
            rank,
            envelope,
            modes,
        } => {
            let psi = random_entangled(grid, *k1, *k2, *rank, *envelope, *modes, StreamId::new(seed, "oracle.random_entangled", 0))?;
            let h = Hamiltonian::free(grid.clone(), k1 * k2, *hbar, masses.to_vec())?;
            Ok((QuantumState::Wave(psi), h))
        }
    }
}

fn one_dimensional(grid: &GridSpec) -> Result<()> {
    if grid.dims() != 1 {
        return Err(Error::Config("this fixture lives on a one-dimensional grid".into()));
    }
    Ok(())
}

/// `-hbar^2/(2m) d^2 + m omega^2 q^2 / 2`, static.
pub fn oscillator(grid: &GridSpec, hbar: f64, mass: f64, omega: f64) -> Result<Hamiltonian> {
    Hamiltonian::free(grid.clone(), 1, hbar, vec![mass; grid.dims()])?.with_static(PotentialField::scalar(
        grid,
        1,
        |q| 0.5 * mass * omega * omega * q.iter().map(|x| x * x).sum::<f64>(),
    )?)
}

/// Lowest eigenvectors of the one-step split operator for a static, real,
/// spinless Hamiltonian.
///
/// Eigenvectors of the dense discretized Hamiltonian, sorted by energy, seed
/// shifted inverse iteration on the one-step operator `S`. `S` is complex
/// symmetric and unitary, so each nondegenerate eigenvector is real up to a
/// phase. The resulting states are stationary under split-step evolution with
/// the same `dt`.
pub fn stationary_states(h: &Hamiltonian, dt: f64, count: usize) -> Result<Vec<SpinorField>> {
    let grid = h.grid();
    let n = grid.nodes();
    if h.spin_dim() != 1 || n > DENSE_STEP_LIMIT {
        return Err(Error::Config(format!(
            "stationary states need a spinless field with at most {DENSE_STEP_LIMIT} nodes"
        )));
    }
    if count == 0 || count > n {
        return Err(Error::Config(format!("cannot extract {count} states from {n} nodes")));
    }
    let schedule = h.schedule();
    let potential: Vec<f64> = match schedule {
        [] => vec![0.0; n],
        [p] if p.t_start == f64::NEG_INFINITY => match &*p.potential {
            PotentialField::Diagonal { values, .. } => values.clone(),
            _ => return Err(Error::Config("stationary states need a scalar potential".into())),
        },
        _ => return Err(Error::Config("stationary states need a static potential".into())),
    };
    let kinetic = h.kinetic_multipliers();
    let e_max = kinetic.iter().fold(0.0_f64, |m, e| m.max(*e))
        + potential.iter().fold(0.0_f64, |m, v| m.max(*v))
        - potential.iter().fold(0.0_f64, |m, v| m.min(*v));
    if e_max * dt / h.hbar() >= 2.0 * std::f64::consts::PI {
        return Err(Error::Config(format!(
            "time step {dt} wraps the quasi-energy spectrum (energy spread {e_max:.3e})"
        )));
    }

    // Dense H and S, one column per unit vector.
    let shape = grid.shape();
    let prop = Propagator::new(h, dt)?;
    let mut hm = DMatrix::<f64>::zeros(n, n);
    let mut sm = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut col = vec![Complex64::default(); n];
        col[j] = Complex64::new(1.0, 0.0);
        spectral::fft_all(&mut col, &shape, false);
        for (z, e) in col.iter_mut().zip(&kinetic) {
            *z *= e / n as f64;
        }
        spectral::fft_all(&mut col, &shape, true);
        for i in 0..n {
            hm[(i, j)] = col[i].re;
        }
        hm[(j, j)] += potential[j];
        let mut e = SpinorField::zeros(grid.clone(), 1);
        e.data_mut()[j] = Complex64::new(1.0, 0.0);
        prop.step_in_place(&mut e, 0.0);
        sm.set_column(j, &nalgebra::DVector::from_column_slice(e.data()));
    }
    let hm = (&hm + hm.transpose()) * 0.5;
    let eig = hm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    order
        .into_iter()
        .take(count)
        .map(|j| {
            let mut v = eig.eigenvectors.column(j).map(|x| Complex64::new(x, 0.0));
            let mu = v.dotc(&(&sm * &v));
            let mut shifted = sm.clone();
            for i in 0..n {
                shifted[(i, i)] -= mu;
            }
            let lu = shifted.lu();
            for _ in 0..4 {
                let w = lu
                    .solve(&v)
                    .ok_or_else(|| Error::Numerical("inverse iteration hit a singular shift".into()))?;
                v = &w / Complex64::new(w.norm(), 0.0);
            }
            // Rotate onto the real axis, with the largest entry positive.
            let big = v.iter().copied().fold(Complex64::default(), |a, z| if z.norm() > a.norm() { z } else { a });
            let phase = big.conj() / big.norm();
            let data = v.iter().map(|z| Complex64::new((z * phase).re, 0.0)).collect();
            SpinorField::from_data(grid.clone(), 1, data)?.normalized()
        })
        .collect()
}

/// Band-limited translation `psi(q - a)` along the first axis.
pub fn translate(psi: &SpinorField, a: f64) -> Result<SpinorField> {
    let grid = psi.grid().clone();
    let shape = grid.shape();
    let m = shape[0];
    let k = spectral::wavenumbers(m, grid.axis(0).length());
    let stride = grid.stride(0);
    let n = grid.nodes();
    let mut out = psi.clone();
    let flagged = psi.is_normalized();
    for plane in out.data_mut().chunks_mut(n) {
        spectral::fft_axis(plane, &shape, 0, false);
        for (i, z) in plane.iter_mut().enumerate() {
            let j = (i / stride) % m;
            *z *= Complex64::from_polar(1.0 / m as f64, -k[j] * a);
        }
        spectral::fft_axis(plane, &shape, 0, true);
    }
    if flagged {
        out.normalize()?;
    }
    Ok(out)
}

/// Random smooth field: a Gaussian envelope of width `envelope` around the
/// box centre times random complex Fourier modes `|m| <= modes` on every
/// axis and spin component.
pub fn random_band_limited(grid: &GridSpec, spin_dim: usize, envelope: f64, modes: usize, stream: StreamId<'_>) -> Result<SpinorField> {
    let mut rng = stream.rng();
    let dims = grid.dims();
    let per_axis = 2 * modes + 1;
    let count = per_axis.pow(dims as u32);
    let coeffs: Vec<Complex64> = (0..spin_dim * count)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let phase_offset: f64 = rng.random::<f64>();
    let centers: Vec<f64> = grid.axes().iter().map(|a| 0.5 * (a.min + a.max)).collect();
    SpinorField::from_fn(grid.clone(), spin_dim, |q, s| {
        let mut env = 1.0;
        for d in 0..dims {
            env *= (-(q[d] - centers[d]).powi(2) / (4.0 * envelope * envelope)).exp();
        }
        let mut sum = Complex64::default();
        for c in 0..count {
            let mut rem = c;
            let mut phase = phase_offset;
            for d in (0..dims).rev() {
                let m = (rem % per_axis) as f64 - modes as f64;
                rem /= per_axis;
                phase += m * std::f64::consts::PI * (q[d] - centers[d]) / (4.0 * envelope);
            }
            sum += coeffs[s * count + c] * Complex64::from_polar(1.0, phase);
        }
        sum * env
    })?
    .normalized()
}

/// `Psi = sum_i sqrt(lambda_i) u_i (x) v_i` with random orthonormal `u_i` on
/// `q1` and `v_i` on `q2` and random Schmidt weights bounded away from zero.
pub fn random_entangled(
    grid: &GridSpec,
    k1: usize,
    k2: usize,
    rank: usize,
    envelope: f64,
    modes: usize,
    stream: StreamId<'_>,
) -> Result<SpinorField> {
    if grid.dims() != 2 {
        return Err(Error::Config("random entangled states live on two coordinates".into()));
    }
    let g1 = grid.subgrid(&[0])?;
    let g2 = grid.subgrid(&[1])?;
    if rank == 0 || rank > (g1.nodes() * k1).min(g2.nodes() * k2) || rank > 64 {
        return Err(Error::Config(format!("Schmidt rank {rank} is not attainable")));
    }
    let mut rng = stream.rng();
    let base = rng.random::<u64>();
    let factors = |g: &GridSpec, k: usize, tag: &str| -> Result<Vec<SpinorField>> {
        let mut out: Vec<SpinorField> = Vec::with_capacity(rank);
        for i in 0..rank {
            let mut f = random_band_limited(g, k, envelope, modes, StreamId::new(base, tag, i as u64))?;
            // Two Gram-Schmidt passes keep the factors orthonormal to round-off.
            for _ in 0..2 {
                for prev in &out {
                    let proj = inner_product(prev, &f)?;
                    f.add_scaled(prev, -proj)?;
                }
            }
            out.push(f.normalized()?);
        }
        Ok(out)
    };
    let u = factors(&g1, k1, "u")?;
    let v = factors(&g2, k2, "v")?;
    let raw: Vec<f64> = (0..rank).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let lambda: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let (n1, n2) = (g1.nodes(), g2.nodes());
    let mut data = vec![Complex64::default(); grid.nodes() * k1 * k2];
    let nodes = grid.nodes();
    for i in 0..rank {
        let c = lambda[i].sqrt();
        for s1 in 0..k1 {
            for s2 in 0..k2 {
                let plane = &mut data[(s1 * k2 + s2) * nodes..(s1 * k2 + s2 + 1) * nodes];
                for i1 in 0..n1 {
                    let a = u[i].value(i1, s1) * c;
                    for i2 in 0..n2 {
                        plane[i1 * n2 + i2] += a * v[i].value(i2, s2);
                    }
                }
            }
        }
    }
    SpinorField::from_data(grid.clone(), k1 * k2, data)?.normalized()
}
