//! Uniform periodic grids, spinor fields living on them, and the spectral
//! calculus, interpolation and sampling built on top.
//!
//! Field storage is spin-major: component `s` occupies the contiguous plane
//! `data[s * nodes..(s + 1) * nodes]`, and nodes are numbered row-major with the
//! last axis fastest.

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamId;
use crate::spectral;

/// Maximum number of configuration coordinates.
pub const MAX_DIMS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.points as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }
}

/// Tensor grid over a periodic box.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(Error::Validation(format!(
                "grid needs between 1 and {MAX_DIMS} axes, got {}",
                axes.len()
            )));
        }
        for (d, a) in axes.iter().enumerate() {
            if !(a.min.is_finite() && a.max.is_finite()) || a.max <= a.min {
                return Err(Error::Validation(format!(
                    "axis {d}: need finite max > min, got [{}, {}]",
                    a.min, a.max
                )));
            }
            if a.points < 8 || !a.points.is_power_of_two() {
                return Err(Error::Validation(format!(
                    "axis {d}: points must be a power of two >= 8, got {}",
                    a.points
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(min: f64, max: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(min, max, points)])
    }

    /// Same axis repeated `dims` times.
    pub fn cube(min: f64, max: f64, points: usize, dims: usize) -> Result<Self> {
        Self::new(vec![Axis::new(min, max, points); dims])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn nodes(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn spacing(&self, d: usize) -> f64 {
        self.axes[d].spacing()
    }

    /// Quadrature weight `h^D` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn stride(&self, d: usize) -> usize {
        self.axes[d + 1..].iter().map(|a| a.points).product()
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.points + i)
    }

    pub fn multi_index(&self, mut node: usize) -> [usize; MAX_DIMS] {
        let mut out = [0; MAX_DIMS];
        for d in (0..self.dims()).rev() {
            let n = self.axes[d].points;
            out[d] = node % n;
            node /= n;
        }
        out
    }

    pub fn coords(&self, node: usize) -> ConfigPoint {
        let idx = self.multi_index(node);
        let mut p = ConfigPoint::zeros(self.dims());
        for d in 0..self.dims() {
            p[d] = self.axes[d].coord(idx[d]);
        }
        p
    }

    /// True when the point lies in `[min, max)` on every axis.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dims()
            && p.iter()
                .zip(&self.axes)
                .all(|(&x, a)| x >= a.min && x < a.max)
    }

    /// Periodic image of `p` inside the box.
    pub fn wrap(&self, p: &ConfigPoint) -> ConfigPoint {
        let mut out = *p;
        for (x, a) in out.iter_mut().zip(&self.axes) {
            let len = a.length();
            let mut y = (*x - a.min).rem_euclid(len) + a.min;
            if y >= a.max {
                y -= len;
            }
            *x = y;
        }
        out
    }

    /// Grid made of the listed axes, in the given order.
    pub fn subgrid(&self, dims: &[usize]) -> Result<GridSpec> {
        GridSpec::new(dims.iter().map(|&d| self.axes[d]).collect())
    }

    /// Multilinear interpolation stencil for an arbitrary (wrapped) point.
    pub fn stencil(&self, p: &[f64]) -> Stencil {
        let dims = self.dims();
        let mut base = [0usize; MAX_DIMS];
        let mut frac = [0f64; MAX_DIMS];
        for d in 0..dims {
            let a = &self.axes[d];
            let u = (p[d] - a.min).rem_euclid(a.length()) / a.spacing();
            let i = u.floor();
            let mut f = u - i;
            let mut i = i as usize;
            if i >= a.points {
                i = a.points - 1;
                f = 1.0;
            }
            base[d] = i;
            frac[d] = f;
        }
        let mut st = Stencil {
            nodes: [0; 1 << MAX_DIMS],
            weights: [0.0; 1 << MAX_DIMS],
            len: 1 << dims,
        };
        for corner in 0..st.len {
            let mut node = 0;
            let mut w = 1.0;
            for d in 0..dims {
                let n = self.axes[d].points;
                let hi = (corner >> (dims - 1 - d)) & 1 == 1;
                let i = if hi { (base[d] + 1) % n } else { base[d] };
                w *= if hi { frac[d] } else { 1.0 - frac[d] };
                node = node * n + i;
            }
            st.nodes[corner] = node;
            st.weights[corner] = w;
        }
        st
    }

    pub(crate) fn same_as(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grids differ: {:?} vs {:?}",
                self.axes, other.axes
            )));
        }
        Ok(())
    }
}

/// Nodes and weights of a multilinear interpolation.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    nodes: [usize; 1 << MAX_DIMS],
    weights: [f64; 1 << MAX_DIMS],
    len: usize,
}

impl Stencil {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes[..self.len]
            .iter()
            .copied()
            .zip(self.weights[..self.len].iter().copied())
    }

    pub fn apply(&self, plane: &[Complex64]) -> Complex64 {
        self.iter().map(|(n, w)| plane[n] * w).sum()
    }

    pub fn apply_real(&self, plane: &[f64]) -> f64 {
        self.iter().map(|(n, w)| plane[n] * w).sum()
    }
}

/// A point in configuration space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfigPoint {
    coords: [f64; MAX_DIMS],
    len: usize,
}

impl ConfigPoint {
    pub fn new(coords: &[f64]) -> Self {
        assert!(coords.len() <= MAX_DIMS, "at most {MAX_DIMS} coordinates");
        let mut c = [0.0; MAX_DIMS];
        c[..coords.len()].copy_from_slice(coords);
        Self {
            coords: c,
            len: coords.len(),
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(&vec![0.0; len])
    }

    /// Coordinates at the listed positions.
    pub fn select(&self, dims: &[usize]) -> ConfigPoint {
        let v: Vec<f64> = dims.iter().map(|&d| self.coords[d]).collect();
        ConfigPoint::new(&v)
    }
}

impl Deref for ConfigPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords[..self.len]
    }
}

impl DerefMut for ConfigPoint {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.len]
    }
}

impl Serialize for ConfigPoint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self[..].serialize(serializer)
    }
}

impl From<&[f64]> for ConfigPoint {
    fn from(v: &[f64]) -> Self {
        ConfigPoint::new(v)
    }
}

impl<const N: usize> From<[f64; N]> for ConfigPoint {
    fn from(v: [f64; N]) -> Self {
        ConfigPoint::new(&v)
    }
}

/// Nonnegative real field on a grid, such as a position density.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::Shape(format!(
                "density has {} values for {} nodes",
                values.len(),
                grid.nodes()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Riemann-sum integral.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn at(&self, p: &[f64]) -> f64 {
        self.grid.stencil(p).apply_real(&self.values)
    }
}

/// A `C^k`-valued wave function sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    spin_dim: usize,
    data: Vec<Complex64>,
    normalized: bool,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec, spin_dim: usize) -> Self {
        assert!(spin_dim > 0, "spin dimension must be positive");
        let data = vec![Complex64::default(); grid.nodes() * spin_dim];
        Self {
            grid,
            spin_dim,
            data,
            normalized: false,
        }
    }

    /// Samples `f(point, s)` at every node and spin index.
    pub fn from_fn(
        grid: GridSpec,
        spin_dim: usize,
        mut f: impl FnMut(&ConfigPoint, usize) -> Complex64,
    ) -> Result<Self> {
        let mut field = Self::zeros(grid, spin_dim);
        let n = field.grid.nodes();
        for node in 0..n {
            let p = field.grid.coords(node);
            for s in 0..spin_dim {
                field.data[s * n + node] = f(&p, s);
            }
        }
        field.check_finite()?;
        Ok(field)
    }

    /// Wraps spin-major amplitude data.
    pub fn from_data(grid: GridSpec, spin_dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if spin_dim == 0 || data.len() != grid.nodes() * spin_dim {
            return Err(Error::Shape(format!(
                "{} amplitudes do not fit {} nodes x spin {}",
                data.len(),
                grid.nodes(),
                spin_dim
            )));
        }
        let field = Self {
            grid,
            spin_dim,
            data,
            normalized: false,
        };
        field.check_finite()?;
        Ok(field)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn nodes(&self) -> usize {
        self.grid.nodes()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Mutable amplitudes. Clears the normalized flag.
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        self.normalized = false;
        &mut self.data
    }

    pub(crate) fn data_mut_keep_flag(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn plane(&self, s: usize) -> &[Complex64] {
        let n = self.nodes();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn value(&self, node: usize, s: usize) -> Complex64 {
        self.data[s * self.nodes() + node]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn set_normalized_flag(&mut self, flag: bool) {
        self.normalized = flag;
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation("field contains non-finite amplitudes".into()))
        }
    }

    /// `<psi, psi>` under the grid quadrature.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Rescales to unit norm and sets the normalized flag.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Validation(format!("cannot normalize a field of norm {n}")));
        }
        let c = 1.0 / n.sqrt();
        self.data.iter_mut().for_each(|z| *z *= c);
        self.normalized = true;
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Multiplies every amplitude by `c`. The flag survives only unimodular `c`.
    pub fn scale(&mut self, c: Complex64) {
        self.data.iter_mut().for_each(|z| *z *= c);
        if (c.norm() - 1.0).abs() > 1e-15 {
            self.normalized = false;
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &SpinorField, c: Complex64) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        self.normalized = false;
        Ok(())
    }

    /// `sum_s |psi^s(q)|^2` per node.
    pub fn density(&self) -> Vec<f64> {
        let n = self.nodes();
        let mut rho = vec![0.0; n];
        for s in 0..self.spin_dim {
            for (r, z) in rho.iter_mut().zip(self.plane(s)) {
                *r += z.norm_sqr();
            }
        }
        rho
    }

    pub(crate) fn check_compatible(&self, other: &SpinorField) -> Result<()> {
        self.grid.same_as(&other.grid)?;
        if self.spin_dim != other.spin_dim {
            return Err(Error::Shape(format!(
                "spin dimensions differ: {} vs {}",
                self.spin_dim, other.spin_dim
            )));
        }
        Ok(())
    }
}

/// `sum_nodes h^D sum_s conj(phi_s) psi^s`.
pub fn inner_product(phi: &SpinorField, psi: &SpinorField) -> Result<Complex64> {
    phi.check_compatible(psi)?;
    let sum: Complex64 = phi
        .data
        .iter()
        .zip(&psi.data)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(sum * phi.grid.cell_volume())
}

/// Spectral derivative along configuration axis `dim`, applied to every spin
/// component. The Nyquist mode is dropped.
pub fn gradient(psi: &SpinorField, dim: usize) -> Result<SpinorField> {
    if dim >= psi.grid.dims() {
        return Err(Error::Shape(format!(
            "dimension {dim} out of range for a {}-d grid",
            psi.grid.dims()
        )));
    }
    let shape = psi.grid.shape();
    let n = shape[dim];
    let k = spectral::wavenumbers(n, psi.grid.axis(dim).length());
    let stride = psi.grid.stride(dim);
    let scale = 1.0 / n as f64;
    let mut out = psi.clone();
    out.normalized = false;
    let nodes = psi.nodes();
    for s in 0..psi.spin_dim {
        let plane = &mut out.data[s * nodes..(s + 1) * nodes];
        spectral::fft_axis(plane, &shape, dim, false);
        for (node, z) in plane.iter_mut().enumerate() {
            let j = (node / stride) % n;
            *z = if 2 * j == n {
                Complex64::default()
            } else {
                *z * Complex64::new(0.0, k[j] * scale)
            };
        }
        spectral::fft_axis(plane, &shape, dim, true);
    }
    Ok(out)
}

/// Multilinear interpolation of every spin component at `point`.
pub fn interpolate(field: &SpinorField, point: &[f64]) -> Vec<Complex64> {
    let st = field.grid.stencil(point);
    (0..field.spin_dim).map(|s| st.apply(field.plane(s))).collect()
}

/// Draws `n` configurations from a grid density: a node is picked with
/// probability proportional to its value, then the point is jittered uniformly
/// inside the cell centred on that node.
pub fn sample_density(rho: &DensityField, n: usize, stream: StreamId<'_>) -> Result<Vec<ConfigPoint>> {
    let cumulative = cumulative_weights(&rho.values)?;
    let mut rng = stream.rng();
    Ok((0..n)
        .map(|_| draw_point(&rho.grid, &cumulative, &mut rng))
        .collect())
}

pub(crate) fn cumulative_weights(values: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let mut cumulative = Vec::with_capacity(values.len());
    for &v in values {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Validation(format!("density value {v} is not a finite nonnegative number")));
        }
        acc += v;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    Ok(cumulative)
}

pub(crate) fn draw_point<R: Rng>(grid: &GridSpec, cumulative: &[f64], rng: &mut R) -> ConfigPoint {
    let total = *cumulative.last().expect("nonempty");
    let u = rng.random::<f64>() * total;
    let node = cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1);
    let mut p = grid.coords(node);
    for d in 0..grid.dims() {
        p[d] += (rng.random::<f64>() - 0.5) * grid.spacing(d);
    }
    grid.wrap(&p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: &GridSpec, c: f64, sigma: f64) -> SpinorField {
        SpinorField::from_fn(grid.clone(), 1, |p, _| {
            Complex64::new((-(p[0] - c).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn grid_rejects_bad_axes() {
        assert!(GridSpec::line(0.0, 1.0, 12).is_err());
        assert!(GridSpec::line(0.0, 1.0, 4).is_err());
        assert!(GridSpec::line(1.0, 1.0, 16).is_err());
        assert!(GridSpec::cube(0.0, 1.0, 8, 4).is_err());
        assert!(GridSpec::cube(0.0, 1.0, 8, 3).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(vec![Axis::new(0.0, 1.0, 8), Axis::new(0.0, 2.0, 16)]).unwrap();
        for node in 0..g.nodes() {
            let mi = g.multi_index(node);
            assert_eq!(g.node_index(&mi[..2]), node);
        }
        assert_eq!(g.stride(0), 16);
    }

    #[test]
    fn wrap_stays_inside() {
        let g = GridSpec::line(-1.0, 1.0, 8).unwrap();
        for x in [-3.5, -1.0, 0.999, 1.0, 7.25] {
            let w = g.wrap(&ConfigPoint::new(&[x]));
            assert!(g.contains(&w), "{x} -> {:?}", w);
        }
    }

    #[test]
    fn normalized_gaussian_has_unit_norm() {
        let g = GridSpec::line(-10.0, 10.0, 128).unwrap();
        let psi = gaussian(&g, 0.0, 1.0);
        let ip = inner_product(&psi, &psi).unwrap();
        assert!((ip.re - 1.0).abs() < 1e-12 && ip.im.abs() < 1e-15);
    }

    #[test]
    fn opposite_spins_are_orthogonal() {
        let g = GridSpec::line(-10.0, 10.0, 64).unwrap();
        let prof = |p: &ConfigPoint| (-p[0] * p[0]).exp();
        let up = SpinorField::from_fn(g.clone(), 2, |p, s| Complex64::new(if s == 0 { prof(p) } else { 0.0 }, 0.0)).unwrap();
        let down = SpinorField::from_fn(g, 2, |p, s| Complex64::new(if s == 1 { prof(p) } else { 0.0 }, 0.0)).unwrap();
        assert_eq!(inner_product(&up, &down).unwrap(), Complex64::default());
    }

    #[test]
    fn gaussian_overlap_matches_closed_form() {
        // Unit-norm Gaussians with |g|^2 std sigma: overlap exp(-d^2 / (8 sigma^2)).
        let g = GridSpec::line(-16.0, 16.0, 256).unwrap();
        let sigma = 1.3;
        for d in [0.5, 1.0, 2.5] {
            let a = gaussian(&g, 0.0, sigma);
            let b = gaussian(&g, d, sigma);
            let ip = inner_product(&a, &b).unwrap();
            let expected = (-d * d / (8.0 * sigma * sigma)).exp();
            assert!((ip.re - expected).abs() < 1e-12, "{d}: {} vs {expected}", ip.re);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let g1 = GridSpec::line(-1.0, 1.0, 8).unwrap();
        let g2 = GridSpec::line(-1.0, 1.0, 16).unwrap();
        let a = SpinorField::zeros(g1.clone(), 1);
        assert!(inner_product(&a, &SpinorField::zeros(g2, 1)).is_err());
        assert!(inner_product(&a, &SpinorField::zeros(g1, 2)).is_err());
    }

    #[test]
    fn plane_wave_derivative() {
        let g = GridSpec::line(0.0, 2.0 * PI, 64).unwrap();
        let k0 = 5.0;
        let psi = SpinorField::from_fn(g, 2, |p, s| Complex64::from_polar(1.0 + s as f64, k0 * p[0])).unwrap();
        let d = gradient(&psi, 0).unwrap();
        for (a, b) in d.data().iter().zip(psi.data()) {
            assert!((a - Complex64::new(0.0, k0) * b).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let g = GridSpec::cube(-1.0, 1.0, 16, 2).unwrap();
        let psi = SpinorField::from_fn(g, 1, |_, _| Complex64::new(0.3, -0.2)).unwrap();
        for dim in 0..2 {
            assert!(gradient(&psi, dim).unwrap().data().iter().all(|z| z.norm() < 1e-15));
        }
        assert!(gradient(&psi, 2).is_err());
    }

    #[test]
    fn gaussian_derivative_matches_closed_form() {
        let g = GridSpec::line(-12.0, 12.0, 256).unwrap();
        let (c, sigma) = (0.3, 1.0);
        let psi = gaussian(&g, c, sigma);
        let d = gradient(&psi, 0).unwrap();
        for node in 0..g.nodes() {
            let x = g.coords(node)[0];
            let expected = -(x - c) / (2.0 * sigma * sigma) * psi.value(node, 0);
            assert!((d.value(node, 0) - expected).norm() < 1e-12, "{node} {} {}", d.value(node, 0), expected);
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let g = GridSpec::new(vec![Axis::new(-8.0, 8.0, 32), Axis::new(-6.0, 6.0, 64)]).unwrap();
        let psi = SpinorField::from_fn(g, 2, |p, s| {
            let env = (-(p[0] * p[0] + 0.5 * p[1] * p[1]) / 3.0).exp();
            Complex64::from_polar(env, 0.7 * p[0] - 0.4 * p[1] * (s as f64 + 1.0))
        })
        .unwrap();
        let xy = gradient(&gradient(&psi, 0).unwrap(), 1).unwrap();
        let yx = gradient(&gradient(&psi, 1).unwrap(), 0).unwrap();
        for (a, b) in xy.data().iter().zip(yx.data()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn interpolation_at_nodes_and_midpoints() {
        let g = GridSpec::line(0.0, 8.0, 8).unwrap();
        let psi = SpinorField::from_fn(g.clone(), 1, |p, _| Complex64::new(2.0 * p[0] + 1.0, -p[0])).unwrap();
        for node in 0..8 {
            let v = interpolate(&psi, &g.coords(node));
            assert_eq!(v[0], psi.value(node, 0));
        }
        let v = interpolate(&psi, &[2.5]);
        assert!((v[0] - 0.5 * (psi.value(2, 0) + psi.value(3, 0))).norm() < 1e-15);
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let mut errs = Vec::new();
        for points in [64, 128] {
            let g = GridSpec::line(-10.0, 10.0, points).unwrap();
            let sigma = 1.0;
            let psi = gaussian(&g, 0.0, sigma);
            let norm = (2.0 * PI * sigma * sigma).powf(-0.25);
            let x = 0.4321;
            let exact = norm * (-x * x / (4.0 * sigma * sigma)).exp();
            let h = g.spacing(0);
            let err = (interpolate(&psi, &[x])[0].re - exact).abs();
            // |f''| <= norm / (2 sigma^2) bounds the linear-interpolation error by h^2 |f''| / 8.
            assert!(err <= h * h * norm / (2.0 * sigma * sigma) / 8.0 + 1e-12);
            errs.push(err);
        }
        assert!(errs[1] < errs[0]);
    }

    #[test]
    fn point_mass_samples_stay_in_its_cell() {
        let g = GridSpec::line(-4.0, 4.0, 16).unwrap();
        let mut v = vec![0.0; 16];
        v[5] = 3.0;
        let rho = DensityField::new(g.clone(), v).unwrap();
        let x5 = g.coords(5)[0];
        let h = g.spacing(0);
        for p in sample_density(&rho, 1000, StreamId::new(1, "cell", 0)).unwrap() {
            assert!((p[0] - x5).abs() <= h / 2.0);
        }
    }

    #[test]
    fn zero_density_is_degenerate() {
        let g = GridSpec::line(-4.0, 4.0, 16).unwrap();
        let rho = DensityField::new(g, vec![0.0; 16]).unwrap();
        assert!(matches!(
            sample_density(&rho, 3, StreamId::new(1, "z", 0)),
            Err(Error::DegenerateDensity)
        ));
    }

    #[test]
    fn sampling_is_reproducible() {
        let g = GridSpec::cube(-4.0, 4.0, 16, 2).unwrap();
        let rho = DensityField::new(g.clone(), (0..g.nodes()).map(|i| (i % 7) as f64).collect()).unwrap();
        let a = sample_density(&rho, 500, StreamId::new(9, "rep", 2)).unwrap();
        let b = sample_density(&rho, 500, StreamId::new(9, "rep", 2)).unwrap();
        assert_eq!(a, b);
    }
}
