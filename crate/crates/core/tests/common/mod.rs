//! Dense reference implementations. Nothing here calls the FFT code; the
//! kinetic operator is summed from plane waves directly.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wbohm::{DensityEnsemble, GridSpec, SpinorField};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Signed integer wavenumbers `0, 1, ..., n/2, -n/2 + 1, ..., -1` times `2 pi / L`.
pub fn wavenumber(j: usize, n: usize, length: f64) -> f64 {
    let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    2.0 * std::f64::consts::PI * m / length
}

/// `-hbar^2/(2m) d^2/dx^2` on one periodic axis, in the node basis.
pub fn kinetic_1d(points: usize, length: f64, hbar: f64, mass: f64) -> DMatrix<Complex64> {
    let n = points;
    let h = length / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        let mut sum = c(0.0, 0.0);
        for m in 0..n {
            let k = wavenumber(m, n, length);
            let e = hbar * hbar * k * k / (2.0 * mass);
            sum += Complex64::from_polar(e, k * (i as f64 - j as f64) * h);
        }
        sum / n as f64
    })
}

/// `d/dx` on one periodic axis from plane waves, Nyquist mode dropped.
pub fn derivative_1d(points: usize, length: f64) -> DMatrix<Complex64> {
    let n = points;
    let h = length / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        let mut sum = c(0.0, 0.0);
        for m in (0..n).filter(|&m| m != n / 2) {
            let k = wavenumber(m, n, length);
            sum += c(0.0, k) * Complex64::from_polar(1.0, k * (i as f64 - j as f64) * h);
        }
        sum / n as f64
    })
}

/// Kinetic operator on the full grid (row-major nodes).
pub fn kinetic(grid: &GridSpec, hbar: f64, masses: &[f64]) -> DMatrix<Complex64> {
    let dims = grid.dims();
    let n = grid.nodes();
    let mut total = DMatrix::<Complex64>::zeros(n, n);
    for d in 0..dims {
        let mut term = DMatrix::<Complex64>::identity(1, 1);
        for e in 0..dims {
            let a = grid.axis(e);
            let factor = if e == d {
                kinetic_1d(a.points, a.length(), hbar, masses[d])
            } else {
                DMatrix::identity(a.points, a.points)
            };
            term = term.kronecker(&factor);
        }
        total += term;
    }
    total
}

/// Full Hamiltonian on spin-major vectors, `block(node)` giving the row-major
/// `k x k` potential at each node.
pub fn hamiltonian(
    grid: &GridSpec,
    spin_dim: usize,
    hbar: f64,
    masses: &[f64],
    block: impl Fn(usize) -> Vec<Complex64>,
) -> DMatrix<Complex64> {
    let n = grid.nodes();
    let k = spin_dim;
    let mut h = DMatrix::<Complex64>::identity(k, k).kronecker(&kinetic(grid, hbar, masses));
    for node in 0..n {
        let b = block(node);
        for r in 0..k {
            for s in 0..k {
                h[(r * n + node, s * n + node)] += b[r * k + s];
            }
        }
    }
    h
}

pub fn propagator(h: &DMatrix<Complex64>, t: f64, hbar: f64) -> DMatrix<Complex64> {
    (h * c(0.0, -t / hbar)).exp()
}

/// Field as a unit vector in the orthonormal node basis.
pub fn vector(psi: &SpinorField) -> DVector<Complex64> {
    let scale = psi.grid().cell_volume().sqrt();
    DVector::from_iterator(psi.data().len(), psi.data().iter().map(|z| z * scale))
}

pub fn field(grid: &GridSpec, spin_dim: usize, v: &DVector<Complex64>) -> SpinorField {
    let scale = 1.0 / grid.cell_volume().sqrt();
    SpinorField::from_data(grid.clone(), spin_dim, v.iter().map(|z| z * scale).collect()).unwrap()
}

/// `sum_i p_i |psi_i><psi_i|` in the orthonormal node basis.
pub fn operator(w: &DensityEnsemble) -> DMatrix<Complex64> {
    let size = w.grid().nodes() * w.spin_dim();
    let mut out = DMatrix::zeros(size, size);
    for comp in w.components() {
        let v = vector(&comp.field);
        out += (&v * v.adjoint()) * c(comp.weight, 0.0);
    }
    out
}

/// Partial trace over the second coordinate and second spin factor of a
/// two-coordinate field with spin `k1 * k2` (index `s1 * k2 + s2`), as an
/// operator on `q1 (x) s1` in the orthonormal basis.
pub fn partial_trace(psi: &SpinorField, k1: usize, k2: usize) -> DMatrix<Complex64> {
    let grid = psi.grid();
    let (n1, n2) = (grid.axis(0).points, grid.axis(1).points);
    let n = grid.nodes();
    let dv = grid.cell_volume();
    let size = n1 * k1;
    let mut out = DMatrix::zeros(size, size);
    for s1 in 0..k1 {
        for t1 in 0..k1 {
            for i in 0..n1 {
                for j in 0..n1 {
                    let mut sum = c(0.0, 0.0);
                    for s2 in 0..k2 {
                        for q in 0..n2 {
                            let a = psi.data()[(s1 * k2 + s2) * n + i * n2 + q];
                            let b = psi.data()[(t1 * k2 + s2) * n + j * n2 + q];
                            sum += a * b.conj();
                        }
                    }
                    out[(s1 * n1 + i, t1 * n1 + j)] = sum * dv;
                }
            }
        }
    }
    out
}

/// Hilbert-Schmidt norm of `a - b`.
pub fn hs_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm()
}

/// Smooth random field: random low Fourier modes under a Gaussian envelope.
pub fn smooth_field(grid: &GridSpec, spin_dim: usize, seed: u64) -> SpinorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = grid.dims();
    let modes: Vec<(Vec<f64>, Complex64, usize)> = (0..6 * spin_dim)
        .map(|i| {
            let k: Vec<f64> = (0..dims).map(|_| rng.random_range(-2.0..2.0)).collect();
            (k, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), i % spin_dim)
        })
        .collect();
    let centers: Vec<f64> = grid.axes().iter().map(|a| 0.5 * (a.min + a.max)).collect();
    let widths: Vec<f64> = grid.axes().iter().map(|a| a.length() / 10.0).collect();
    SpinorField::from_fn(grid.clone(), spin_dim, |q, s| {
        let mut env = 1.0;
        for d in 0..dims {
            env *= (-((q[d] - centers[d]) / widths[d]).powi(2) / 2.0).exp();
        }
        let mut sum = c(0.0, 0.0);
        for (k, a, t) in &modes {
            if *t == s {
                let phase: f64 = (0..dims).map(|d| k[d] * q[d]).sum();
                sum += a * Complex64::from_polar(1.0, phase);
            }
        }
        sum * env
    })
    .unwrap()
    .normalized()
    .unwrap()
}

/// Normalized Gaussian packet `exp(-(x - c)^2 / (4 s^2) + i p x / hbar)`.
pub fn packet(x: f64, center: f64, sigma: f64, momentum: f64, hbar: f64) -> Complex64 {
    let amp = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25) * (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp();
    Complex64::from_polar(amp, momentum * x / hbar)
}
