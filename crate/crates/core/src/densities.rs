//! Density matrices in ensemble form `W = sum_i p_i |psi_i><psi_i|`.
//!
//! Every construction (statistical, reduced, combined, conditional,
//! fundamental) yields a [`DensityEnsemble`]. Dense kernels exist only for
//! toy grids through [`KernelDensity`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{inner_product, DensityField, GridSpec, SpinorField};

/// Singular values below this are treated as numerical noise.
pub const SCHMIDT_CUTOFF: f64 = 1e-9;
/// Largest `nodes * spin_dim` for which a dense kernel may be formed.
pub const TOY_LIMIT: usize = 128;
/// Conditional normalizers at or below this mark an environment node.
pub const NODE_NORM: f64 = 1e-30;

const WEIGHT_SUM_TOL: f64 = 1e-8;
const AXIOM_TOL: f64 = 1e-10;
const DROP_WEIGHT: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct Component {
    pub weight: f64,
    pub field: SpinorField,
}

#[derive(Clone, Debug)]
pub struct DensityEnsemble {
    grid: GridSpec,
    spin_dim: usize,
    components: Vec<Component>,
}

impl DensityEnsemble {
    /// `{(1, psi)}`.
    pub fn pure(psi: &SpinorField) -> Result<Self> {
        statistical(vec![(1.0, psi.clone())])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Weighted union of ensembles, `sum_j q_j W_j`.
    pub fn mixture(parts: &[(f64, DensityEnsemble)]) -> Result<Self> {
        let first = &parts.first().ok_or_else(|| Error::Validation("empty mixture".into()))?.1;
        let mut components = Vec::new();
        let mut total = 0.0;
        for (q, w) in parts {
            first.check_compatible(w)?;
            if !(*q > 0.0) {
                return Err(Error::Validation(format!("mixture weight {q} is not positive")));
            }
            total += q;
            components.extend(w.components.iter().map(|c| Component {
                weight: q * c.weight,
                field: c.field.clone(),
            }));
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!("mixture weights sum to {total}")));
        }
        components.iter_mut().for_each(|c| c.weight /= total);
        Ok(Self {
            grid: first.grid.clone(),
            spin_dim: first.spin_dim,
            components,
        })
    }

    /// Same weights, new component fields.
    pub(crate) fn with_fields(&self, fields: Vec<SpinorField>) -> Self {
        Self {
            grid: self.grid.clone(),
            spin_dim: self.spin_dim,
            components: self
                .components
                .iter()
                .zip(fields)
                .map(|(c, field)| Component { weight: c.weight, field })
                .collect(),
        }
    }

    pub(crate) fn check_compatible(&self, other: &DensityEnsemble) -> Result<()> {
        self.grid.same_as(&other.grid)?;
        if self.spin_dim != other.spin_dim {
            return Err(Error::Shape(format!(
                "spin dimensions differ: {} vs {}",
                self.spin_dim, other.spin_dim
            )));
        }
        Ok(())
    }

    /// Gram matrix `G_ij = <psi_i, psi_j>`.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = inner_product(&self.components[i].field, &self.components[j].field).expect("same grid");
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
        g
    }

    /// Columns are the components scaled by `sqrt(h^D)`, so that plain
    /// Euclidean algebra on the columns matches the grid inner product.
    fn scaled_columns(&self) -> DMatrix<Complex64> {
        stack(self.components.iter().map(|c| &c.field), self.grid.cell_volume())
    }
}

fn stack<'a>(fields: impl Iterator<Item = &'a SpinorField>, cell_volume: f64) -> DMatrix<Complex64> {
    let fields: Vec<&SpinorField> = fields.collect();
    let rows = fields.first().map_or(0, |f| f.data().len());
    let s = cell_volume.sqrt();
    DMatrix::from_fn(rows, fields.len(), |r, c| fields[c].data()[r] * s)
}

/// Statistical density matrix of a finite mixture. The components are kept
/// exactly as given.
pub fn statistical(mixture: Vec<(f64, SpinorField)>) -> Result<DensityEnsemble> {
    let (grid, spin_dim) = match mixture.first() {
        Some((_, f)) => (f.grid().clone(), f.spin_dim()),
        None => return Err(Error::Validation("empty mixture".into())),
    };
    let mut total = 0.0;
    let mut components = Vec::with_capacity(mixture.len());
    for (p, mut field) in mixture {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Validation(format!("mixture weight {p} is not positive")));
        }
        grid.same_as(field.grid())?;
        if field.spin_dim() != spin_dim {
            return Err(Error::Shape("mixture fields carry different spin dimensions".into()));
        }
        let norm = field.norm_sqr();
        if (norm - 1.0).abs() > AXIOM_TOL {
            return Err(Error::Validation(format!("mixture field has squared norm {norm}, expected 1")));
        }
        field.set_normalized_flag(true);
        total += p;
        components.push(Component { weight: p, field });
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Validation(format!("mixture weights sum to {total}")));
    }
    components.iter_mut().for_each(|c| c.weight /= total);
    Ok(DensityEnsemble {
        grid,
        spin_dim,
        components,
    })
}

/// Split of a composite system into `S1` and `S2`. Configuration axes are
/// assigned by index; the spin index factorizes as `s = s1 * k2 + s2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bipartition {
    s1_dims: Vec<usize>,
    s2_dims: Vec<usize>,
    k1: usize,
    k2: usize,
}

/// Precomputed index maps for one bipartition of one grid.
struct Layout {
    g1: GridSpec,
    g2: GridSpec,
    /// Full node index contribution of each S1 node.
    off1: Vec<usize>,
    off2: Vec<usize>,
}

impl Bipartition {
    pub fn new(s1_dims: Vec<usize>, s2_dims: Vec<usize>, k1: usize, k2: usize) -> Result<Self> {
        if s1_dims.is_empty() || s2_dims.is_empty() {
            return Err(Error::Validation("both subsystems need configuration dimensions".into()));
        }
        if k1 == 0 || k2 == 0 {
            return Err(Error::Validation("spin factors must be positive".into()));
        }
        let mut all: Vec<usize> = s1_dims.iter().chain(&s2_dims).copied().collect();
        all.sort_unstable();
        if all.iter().enumerate().any(|(i, &d)| i != d) {
            return Err(Error::Validation(format!(
                "dimensions {s1_dims:?} | {s2_dims:?} do not partition 0..{}",
                all.len()
            )));
        }
        Ok(Self {
            s1_dims,
            s2_dims,
            k1,
            k2,
        })
    }

    pub fn s1_dims(&self) -> &[usize] {
        &self.s1_dims
    }

    pub fn s2_dims(&self) -> &[usize] {
        &self.s2_dims
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn s1_grid(&self, full: &GridSpec) -> Result<GridSpec> {
        full.subgrid(&self.s1_dims)
    }

    pub fn s2_grid(&self, full: &GridSpec) -> Result<GridSpec> {
        full.subgrid(&self.s2_dims)
    }

    fn layout(&self, psi: &SpinorField) -> Result<Layout> {
        let grid = psi.grid();
        if self.s1_dims.len() + self.s2_dims.len() != grid.dims() {
            return Err(Error::Shape(format!(
                "bipartition covers {} dimensions, field has {}",
                self.s1_dims.len() + self.s2_dims.len(),
                grid.dims()
            )));
        }
        if self.k1 * self.k2 != psi.spin_dim() {
            return Err(Error::Shape(format!(
                "spin factors {} x {} do not match spin dimension {}",
                self.k1,
                self.k2,
                psi.spin_dim()
            )));
        }
        let g1 = self.s1_grid(grid)?;
        let g2 = self.s2_grid(grid)?;
        let offsets = |g: &GridSpec, dims: &[usize]| -> Vec<usize> {
            (0..g.nodes())
                .map(|n| {
                    let idx = g.multi_index(n);
                    dims.iter().enumerate().map(|(i, &d)| idx[i] * grid.stride(d)).sum()
                })
                .collect()
        };
        let off1 = offsets(&g1, &self.s1_dims);
        let off2 = offsets(&g2, &self.s2_dims);
        Ok(Layout { g1, g2, off1, off2 })
    }
}

/// Reduced density matrix of `S1` via the Schmidt decomposition of `psi`.
pub fn reduced(psi: &SpinorField, split: &Bipartition) -> Result<DensityEnsemble> {
    let lay = split.layout(psi)?;
    let (n1, n2) = (lay.g1.nodes(), lay.g2.nodes());
    let (k1, k2) = (split.k1, split.k2);
    let scale = psi.grid().cell_volume().sqrt();
    let a = DMatrix::from_fn(k1 * n1, k2 * n2, |r, c| {
        let (s1, i1) = (r / n1, r % n1);
        let (s2, i2) = (c / n2, c % n2);
        psi.value(lay.off1[i1] + lay.off2[i2], s1 * k2 + s2) * scale
    });
    // Left singular vectors from the Hermitian Gram matrix A A^H; each
    // singular value is then measured directly as |A^H u|, which stays accurate
    // near zero where the Gram eigenvalues would not.
    let eig = (&a * a.adjoint()).symmetric_eigen();
    let inv_h1 = 1.0 / lay.g1.cell_volume().sqrt();
    let mut mixture = Vec::new();
    for (j, u) in eig.eigenvectors.column_iter().enumerate() {
        if eig.eigenvalues[j] < 0.5 * SCHMIDT_CUTOFF * SCHMIDT_CUTOFF {
            continue;
        }
        let sigma = (a.adjoint() * u).norm();
        if sigma < SCHMIDT_CUTOFF {
            continue;
        }
        let data: Vec<Complex64> = u.iter().map(|z| z * inv_h1).collect();
        let field = SpinorField::from_data(lay.g1.clone(), k1, data)?.normalized()?;
        mixture.push((sigma * sigma, field));
    }
    mixture.sort_by(|a, b| b.0.total_cmp(&a.0));
    renormalized(mixture)
}

fn renormalized(mut mixture: Vec<(f64, SpinorField)>) -> Result<DensityEnsemble> {
    let total: f64 = mixture.iter().map(|(p, _)| p).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    mixture.iter_mut().for_each(|(p, _)| *p /= total);
    statistical(mixture)
}

/// Reduced density matrix of a statistical mixture of composite states.
pub fn combined(mixture: &[(f64, SpinorField)], split: &Bipartition) -> Result<DensityEnsemble> {
    let parts = mixture
        .iter()
        .map(|(p, psi)| Ok((*p, reduced(psi, split)?)))
        .collect::<Result<Vec<_>>>()?;
    DensityEnsemble::mixture(&parts)
}

/// `Psi(., Q2)` for each environment spin index `s2`, as S1 fields, plus the
/// squared norm of each.
fn environment_slices(psi: &SpinorField, split: &Bipartition, q2: &[f64]) -> Result<(GridSpec, Vec<(f64, SpinorField)>)> {
    let lay = split.layout(psi)?;
    if q2.len() != split.s2_dims.len() {
        return Err(Error::Shape(format!(
            "environment point has {} coordinates, expected {}",
            q2.len(),
            split.s2_dims.len()
        )));
    }
    let st = lay.g2.stencil(q2);
    let (n1, k1, k2) = (lay.g1.nodes(), split.k1, split.k2);
    let mut slices = Vec::with_capacity(k2);
    for s2 in 0..k2 {
        let mut data = vec![Complex64::default(); k1 * n1];
        for s1 in 0..k1 {
            let plane = psi.plane(s1 * k2 + s2);
            for (i1, z) in data[s1 * n1..(s1 + 1) * n1].iter_mut().enumerate() {
                *z = st.iter().map(|(i2, w)| plane[lay.off1[i1] + lay.off2[i2]] * w).sum();
            }
        }
        let field = SpinorField::from_data(lay.g1.clone(), k1, data)?;
        slices.push((field.norm_sqr(), field));
    }
    Ok((lay.g1, slices))
}

/// Normalizer `N(Q2) = sum_{s2} integral |Psi(q1, Q2)|^2 dq1`.
pub fn conditional_normalizer(psi: &SpinorField, split: &Bipartition, q2: &[f64]) -> Result<f64> {
    Ok(environment_slices(psi, split, q2)?.1.iter().map(|(n, _)| n).sum())
}

/// Conditional density matrix of `S1` given the environment configuration.
pub fn conditional(psi: &SpinorField, split: &Bipartition, q2: &[f64]) -> Result<DensityEnsemble> {
    let (_, slices) = environment_slices(psi, split, q2)?;
    let norm: f64 = slices.iter().map(|(n, _)| n).sum();
    if !(norm > NODE_NORM) {
        return Err(Error::EnvironmentNode { norm });
    }
    let mut mixture = Vec::with_capacity(slices.len());
    for (n, field) in slices {
        let p = n / norm;
        if p > DROP_WEIGHT {
            mixture.push((p, field.normalized()?));
        }
    }
    renormalized(mixture)
}

/// Conditional wave function of `S1`; requires a spinless environment.
pub fn conditional_wavefunction(psi: &SpinorField, split: &Bipartition, q2: &[f64]) -> Result<SpinorField> {
    if split.k2 != 1 {
        return Err(Error::SpinMismatch { k2: split.k2 });
    }
    let (_, mut slices) = environment_slices(psi, split, q2)?;
    let (norm, field) = slices.pop().expect("one slice");
    if !(norm > NODE_NORM) {
        return Err(Error::EnvironmentNode { norm });
    }
    field.normalized()
}

/// Axis-aligned box `[lower, upper)`; bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Validation(format!("invalid box {lower:?} .. {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn everything(dims: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dims],
            upper: vec![f64::INFINITY; dims],
        }
    }

    /// `{q : lo <= q[axis] < hi}`.
    pub fn slab(dims: usize, axis: usize, lo: f64, hi: f64) -> Result<Self> {
        let mut b = Self::everything(dims);
        b.lower[axis] = lo;
        b.upper[axis] = hi;
        Self::new(b.lower, b.upper)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.lower.len() && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| x >= l && x < u)
    }
}

/// Reduced density matrix of `Psi` collapsed to `q2 in cell`.
pub fn macro_conditional(psi: &SpinorField, split: &Bipartition, cell: &AxisBox) -> Result<DensityEnsemble> {
    let lay = split.layout(psi)?;
    if cell.lower.len() != split.s2_dims.len() {
        return Err(Error::Shape("cell dimension does not match S2".into()));
    }
    let inside: Vec<bool> = (0..lay.g2.nodes()).map(|i| cell.contains(&lay.g2.coords(i))).collect();
    let mut collapsed = psi.clone();
    let n = psi.nodes();
    let (n1, n2) = (lay.g1.nodes(), lay.g2.nodes());
    let data = collapsed.data_mut();
    for (i2, keep) in inside.iter().enumerate() {
        if *keep {
            continue;
        }
        for s in 0..psi.spin_dim() {
            for i1 in 0..n1 {
                data[s * n + lay.off1[i1] + lay.off2[i2]] = Complex64::default();
            }
        }
    }
    debug_assert_eq!(n1 * n2, n);
    if !(collapsed.norm_sqr() > NODE_NORM) {
        return Err(Error::DegenerateDensity);
    }
    reduced(&collapsed.normalized()?, split)
}

/// `tr W^2` from the Gram matrix.
pub fn purity(w: &DensityEnsemble) -> f64 {
    let g = w.gram();
    let p = w.weights();
    let mut sum = 0.0;
    for i in 0..p.len() {
        for j in 0..p.len() {
            sum += p[i] * p[j] * g[(i, j)].norm_sqr();
        }
    }
    sum
}

/// `rho(q) = sum_i p_i sum_s |psi_i^s(q)|^2`.
pub fn position_density(w: &DensityEnsemble) -> DensityField {
    let mut rho = vec![0.0; w.grid.nodes()];
    for c in &w.components {
        for (r, d) in rho.iter_mut().zip(c.field.density()) {
            *r += c.weight * d;
        }
    }
    DensityField {
        grid: w.grid.clone(),
        values: rho,
    }
}

/// Probability that the configuration lies in the union of `boxes`; a cell
/// counts when its node does.
pub fn region_probability(w: &DensityEnsemble, boxes: &[AxisBox]) -> f64 {
    let rho = position_density(w);
    let g = &w.grid;
    (0..g.nodes())
        .filter(|&i| {
            let p = g.coords(i);
            boxes.iter().any(|b| b.contains(&p))
        })
        .map(|i| rho.values[i])
        .sum::<f64>()
        * g.cell_volume()
}

/// `<psi|W|psi>` for a normalized `psi`.
pub fn fidelity_with_pure(w: &DensityEnsemble, psi: &SpinorField) -> Result<f64> {
    w.components
        .iter()
        .map(|c| Ok(c.weight * inner_product(psi, &c.field)?.norm_sqr()))
        .sum()
}

/// Hilbert-Schmidt distance `||W_a - W_b||_F`, from the union of components.
pub fn frobenius_distance(a: &DensityEnsemble, b: &DensityEnsemble) -> Result<f64> {
    a.check_compatible(b)?;
    let x = stack(
        a.components.iter().chain(&b.components).map(|c| &c.field),
        a.grid.cell_volume(),
    );
    let signs: Vec<f64> = a
        .components
        .iter()
        .map(|c| c.weight)
        .chain(b.components.iter().map(|c| -c.weight))
        .collect();
    Ok(signed_gram_core(x, &signs).norm())
}

/// `R diag(c) R^H` where `X = QR`; its spectrum is that of `X diag(c) X^H`.
fn signed_gram_core(x: DMatrix<Complex64>, c: &[f64]) -> DMatrix<Complex64> {
    let r = x.qr().r();
    let mut rc = r.clone();
    for (j, &cj) in c.iter().enumerate() {
        rc.column_mut(j).scale_mut(cj);
    }
    rc * r.adjoint()
}

/// Orthogonal (spectral) ensemble equal to `w` as an operator.
pub fn eigendecompose(w: &DensityEnsemble) -> Result<DensityEnsemble> {
    let x = w.scaled_columns();
    let qr = x.qr();
    let q = qr.q();
    let r = qr.r();
    let p = DVector::from_iterator(w.len(), w.weights().into_iter().map(|v| Complex64::new(v, 0.0)));
    let m = &r * DMatrix::from_diagonal(&p) * r.adjoint();
    let eig = m.symmetric_eigen();
    let vecs = q * eig.eigenvectors;
    let inv = 1.0 / w.grid.cell_volume().sqrt();
    let mut mixture = Vec::new();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -AXIOM_TOL {
            return Err(Error::Validation(format!("negative eigenvalue {lambda}")));
        }
        if lambda <= AXIOM_TOL * 1e-2 {
            continue;
        }
        let data: Vec<Complex64> = vecs.column(j).iter().map(|z| z * inv).collect();
        mixture.push((lambda, SpinorField::from_data(w.grid.clone(), w.spin_dim, data)?.normalized()?));
    }
    mixture.sort_by(|a, b| b.0.total_cmp(&a.0));
    renormalized(mixture)
}

/// Dense kernel `W^s_{s'}(q, q')`, rows and columns indexed `s * nodes + node`.
#[derive(Clone, Debug)]
pub struct KernelDensity {
    grid: GridSpec,
    spin_dim: usize,
    kernel: DMatrix<Complex64>,
}

impl KernelDensity {
    pub fn from_kernel(grid: GridSpec, spin_dim: usize, kernel: DMatrix<Complex64>) -> Result<Self> {
        let size = grid.nodes() * spin_dim;
        if size > TOY_LIMIT {
            return Err(Error::ToySize { size, limit: TOY_LIMIT });
        }
        if kernel.nrows() != size || kernel.ncols() != size {
            return Err(Error::Shape(format!("kernel must be {size} x {size}")));
        }
        Ok(Self { grid, spin_dim, kernel })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn kernel(&self) -> &DMatrix<Complex64> {
        &self.kernel
    }

    /// `W^s_{s'}(q_node, q'_node')`.
    pub fn entry(&self, node: usize, s: usize, node2: usize, s2: usize) -> Complex64 {
        let n = self.grid.nodes();
        self.kernel[(s * n + node, s2 * n + node2)]
    }

    /// Matrix of the operator in the orthonormal grid basis.
    pub fn operator(&self) -> DMatrix<Complex64> {
        self.kernel.scale(self.grid.cell_volume())
    }

    /// Hilbert-Schmidt distance between the operators.
    pub fn distance(&self, other: &KernelDensity) -> Result<f64> {
        self.grid.same_as(&other.grid)?;
        if self.spin_dim != other.spin_dim {
            return Err(Error::Shape("spin dimensions differ".into()));
        }
        Ok((self.operator() - other.operator()).norm())
    }

    /// Spectral ensemble of the operator.
    pub fn to_ensemble(&self) -> Result<DensityEnsemble> {
        let op = self.operator();
        let herm = (&op + op.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        let inv = 1.0 / self.grid.cell_volume().sqrt();
        let mut mixture = Vec::new();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < -AXIOM_TOL {
                return Err(Error::Validation(format!("negative eigenvalue {lambda}")));
            }
            if lambda <= AXIOM_TOL * 1e-2 {
                continue;
            }
            let data: Vec<Complex64> = eig.eigenvectors.column(j).iter().map(|z| z * inv).collect();
            mixture.push((lambda, SpinorField::from_data(self.grid.clone(), self.spin_dim, data)?.normalized()?));
        }
        mixture.sort_by(|a, b| b.0.total_cmp(&a.0));
        renormalized(mixture)
    }
}

/// Dense kernel of a toy-sized ensemble.
pub fn to_kernel(w: &DensityEnsemble) -> Result<KernelDensity> {
    let size = w.grid.nodes() * w.spin_dim;
    if size > TOY_LIMIT {
        return Err(Error::ToySize { size, limit: TOY_LIMIT });
    }
    let mut kernel = DMatrix::zeros(size, size);
    for c in &w.components {
        let v = DVector::from_column_slice(c.field.data());
        kernel += (&v * v.adjoint()).scale(c.weight);
    }
    KernelDensity::from_kernel(w.grid.clone(), w.spin_dim, kernel)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub defect: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, defect: f64, passed: bool) {
        self.checks.push(Check { name, passed, defect });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<24} {} (defect {:.3e})", c.name, if c.passed { "ok" } else { "FAIL" }, c.defect)?;
        }
        Ok(())
    }
}

/// Objects whose density-matrix axioms can be audited.
pub trait Validate {
    fn validate(&self) -> ValidationReport;
}

pub fn validate<T: Validate + ?Sized>(w: &T) -> ValidationReport {
    w.validate()
}

impl Validate for DensityEnsemble {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let min_weight = self.components.iter().map(|c| c.weight).fold(f64::INFINITY, f64::min);
        r.push("positive weights", (-min_weight).max(0.0), min_weight > 0.0);
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        r.push("unit weight sum", (sum - 1.0).abs(), (sum - 1.0).abs() <= AXIOM_TOL);
        let norm_defect = self
            .components
            .iter()
            .map(|c| (c.field.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max);
        r.push("normalized components", norm_defect, norm_defect <= AXIOM_TOL);
        let shape_ok = self
            .components
            .iter()
            .all(|c| c.field.grid() == &self.grid && c.field.spin_dim() == self.spin_dim && c.field.check_finite().is_ok());
        r.push("consistent shapes", if shape_ok { 0.0 } else { 1.0 }, shape_ok && !self.is_empty());
        r
    }
}

impl Validate for KernelDensity {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let op = self.operator();
        let herm_defect = (&op - op.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        r.push("hermitian", herm_defect, herm_defect <= AXIOM_TOL);
        let herm = (&op + op.adjoint()).scale(0.5);
        let min_eig = herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        r.push("positive semidefinite", (-min_eig).max(0.0), min_eig >= -AXIOM_TOL);
        let trace = op.trace();
        let trace_defect = (trace - Complex64::new(1.0, 0.0)).norm();
        r.push("unit trace", trace_defect, trace_defect <= AXIOM_TOL);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn profile(grid: &GridSpec, c: f64, sigma: f64, k: f64) -> SpinorField {
        SpinorField::from_fn(grid.clone(), 1, |p, _| {
            Complex64::from_polar((-(p[0] - c).powi(2) / (4.0 * sigma * sigma)).exp(), k * p[0])
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn spinor(space: &SpinorField, spin: [Complex64; 2]) -> SpinorField {
        SpinorField::from_fn(space.grid().clone(), 2, |p, s| {
            let node = space.grid().stencil(p).iter().find(|(_, w)| *w > 0.5).unwrap().0;
            space.value(node, 0) * spin[s]
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Two-coordinate singlet on an 8 x 8 grid.
    fn singlet(n: usize) -> (SpinorField, Bipartition, SpinorField) {
        let g = GridSpec::cube(-6.0, 6.0, n, 2).unwrap();
        let g1 = g.subgrid(&[0]).unwrap();
        let psi1 = profile(&g1, 0.5, 1.2, 0.3);
        let psi = SpinorField::from_fn(g, 4, |p, s| {
            let a = (-(p[0] - 0.5).powi(2) / (4.0 * 1.44)).exp() * Complex64::from_polar(1.0, 0.3 * p[0]);
            let b = (-(p[1] + 0.4).powi(2) / 4.0).exp();
            let spin = match s {
                1 => FRAC_1_SQRT_2,
                2 => -FRAC_1_SQRT_2,
                _ => 0.0,
            };
            a * b * spin
        })
        .unwrap()
        .normalized()
        .unwrap();
        (psi, Bipartition::new(vec![0], vec![1], 2, 2).unwrap(), psi1)
    }

    fn half_identity(psi1: &SpinorField) -> DensityEnsemble {
        statistical(vec![(0.5, spinor(psi1, [c(1.0), c(0.0)])), (0.5, spinor(psi1, [c(0.0), c(1.0)]))]).unwrap()
    }

    #[test]
    fn weight_sum_checked() {
        let g = GridSpec::line(-5.0, 5.0, 16).unwrap();
        let f = profile(&g, 0.0, 1.0, 0.0);
        assert!(matches!(statistical(vec![(0.5, f.clone()), (0.6, f)]), Err(Error::Validation(_))));
    }

    #[test]
    fn spin_z_and_spin_x_mixtures_coincide() {
        let g = GridSpec::line(-5.0, 5.0, 16).unwrap();
        let f = profile(&g, 0.0, 1.0, 0.0);
        let z = statistical(vec![(0.5, spinor(&f, [c(1.0), c(0.0)])), (0.5, spinor(&f, [c(0.0), c(1.0)]))]).unwrap();
        let x = statistical(vec![
            (0.5, spinor(&f, [c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)])),
            (0.5, spinor(&f, [c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)])),
        ])
        .unwrap();
        assert!(frobenius_distance(&z, &x).unwrap() <= 1e-12);
        assert!((purity(&z) - 0.5).abs() < 1e-12);
        let rho = position_density(&z);
        for (a, b) in rho.values.iter().zip(f.density()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn frobenius_matches_dense() {
        let g = GridSpec::line(-5.0, 5.0, 16).unwrap();
        let a = statistical(vec![(0.3, profile(&g, 0.0, 1.0, 0.4)), (0.7, profile(&g, 1.0, 0.8, -0.2))]).unwrap();
        let b = DensityEnsemble::pure(&profile(&g, -0.5, 1.1, 0.1)).unwrap();
        let dense = to_kernel(&a).unwrap().distance(&to_kernel(&b).unwrap()).unwrap();
        assert!((frobenius_distance(&a, &b).unwrap() - dense).abs() < 1e-13);
        assert!(frobenius_distance(&a, &a).unwrap() < 1e-13);
    }

    #[test]
    fn product_state_reduces_to_pure() {
        let g = GridSpec::cube(-6.0, 6.0, 16, 2).unwrap();
        let g1 = g.subgrid(&[0]).unwrap();
        let a = profile(&g1, 0.3, 1.0, 0.7);
        let psi = SpinorField::from_fn(g, 1, |p, _| {
            Complex64::from_polar((-(p[0] - 0.3).powi(2) / 4.0).exp(), 0.7 * p[0]) * (-(p[1] - 1.0).powi(2) / 2.0).exp()
        })
        .unwrap()
        .normalized()
        .unwrap();
        let split = Bipartition::new(vec![0], vec![1], 1, 1).unwrap();
        let w = reduced(&psi, &split).unwrap();
        assert_eq!(w.len(), 1);
        assert!((fidelity_with_pure(&w, &a).unwrap() - 1.0).abs() < 1e-10);
        let cond = conditional(&psi, &split, &[0.77]).unwrap();
        assert!((purity(&cond) - 1.0).abs() < 1e-12);
        let cwf = conditional_wavefunction(&psi, &split, &[0.77]).unwrap();
        assert!((inner_product(&cwf, &a).unwrap().norm() - 1.0).abs() < 1e-10);
        let mc = macro_conditional(&psi, &split, &AxisBox::new(vec![0.0], vec![2.0]).unwrap()).unwrap();
        assert!((purity(&mc) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn singlet_reduced_and_conditional() {
        let (psi, split, psi1) = singlet(16);
        let target = half_identity(&psi1);
        let red = reduced(&psi, &split).unwrap();
        assert!(frobenius_distance(&red, &target).unwrap() < 1e-10);
        for q2 in [-2.0, -0.4, 0.13, 1.9] {
            let cond = conditional(&psi, &split, &[q2]).unwrap();
            assert!(frobenius_distance(&cond, &target).unwrap() < 1e-10);
            assert!((purity(&cond) - 0.5).abs() < 1e-8);
            assert!(cond.validate().all_passed());
        }
        assert!(matches!(
            conditional_wavefunction(&psi, &split, &[0.0]),
            Err(Error::SpinMismatch { k2: 2 })
        ));
    }

    #[test]
    fn environment_node_reported() {
        let g = GridSpec::cube(-4.0, 4.0, 8, 2).unwrap();
        // Environment factor vanishes on the q2 >= 0 half.
        let psi = SpinorField::from_fn(g, 1, |p, _| c(if p[1] < 0.0 { (-p[0] * p[0]).exp() } else { 0.0 }))
            .unwrap()
            .normalized()
            .unwrap();
        let split = Bipartition::new(vec![0], vec![1], 1, 1).unwrap();
        assert!(matches!(conditional(&psi, &split, &[2.0]), Err(Error::EnvironmentNode { .. })));
        assert!(matches!(
            macro_conditional(&psi, &split, &AxisBox::new(vec![1.0], vec![3.0]).unwrap()),
            Err(Error::DegenerateDensity)
        ));
    }

    #[test]
    fn macro_cell_covering_everything_is_reduced() {
        let (psi, split, _) = singlet(8);
        let all = macro_conditional(&psi, &split, &AxisBox::everything(1)).unwrap();
        assert!(frobenius_distance(&all, &reduced(&psi, &split).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn combined_of_products() {
        let g = GridSpec::cube(-6.0, 6.0, 16, 2).unwrap();
        let g1 = g.subgrid(&[0]).unwrap();
        let make = |c1: f64| {
            SpinorField::from_fn(g.clone(), 1, move |p, _| c((-(p[0] - c1).powi(2) / 4.0 - p[1] * p[1] / 4.0).exp()))
                .unwrap()
                .normalized()
                .unwrap()
        };
        let w = combined(&[(0.5, make(-1.0)), (0.5, make(1.5))], &Bipartition::new(vec![0], vec![1], 1, 1).unwrap())
            .unwrap();
        let expected = statistical(vec![(0.5, profile(&g1, -1.0, 1.0, 0.0)), (0.5, profile(&g1, 1.5, 1.0, 0.0))]).unwrap();
        let d = frobenius_distance(&w, &expected).unwrap();
        assert!(d < 1e-10, "{d} {:?}", w.weights());
    }

    #[test]
    fn region_probability_of_gaussians() {
        let g = GridSpec::line(-10.0, 10.0, 256).unwrap();
        let h = g.spacing(0);
        let w = DensityEnsemble::pure(&profile(&g, 0.0, 1.0, 0.0)).unwrap();
        assert!((region_probability(&w, &[AxisBox::everything(1)]) - 1.0).abs() < 1e-10);
        let right = AxisBox::slab(1, 0, 0.0, f64::INFINITY).unwrap();
        assert!((region_probability(&w, &[right]) - 0.5).abs() <= h);
    }

    #[test]
    fn kernel_checks() {
        let g = GridSpec::line(-4.0, 4.0, 16).unwrap();
        let w = statistical(vec![(0.6, profile(&g, 0.0, 1.0, 0.5)), (0.4, profile(&g, 1.0, 0.7, -1.0))]).unwrap();
        let k = to_kernel(&w).unwrap();
        assert!(k.validate().all_passed(), "{}", k.validate());
        let doubled = KernelDensity::from_kernel(g.clone(), 1, k.kernel().scale(2.0)).unwrap();
        let rep = doubled.validate();
        assert!((rep.get("unit trace").unwrap().defect - 1.0).abs() < 1e-10);
        let back = to_kernel(&eigendecompose(&w).unwrap()).unwrap();
        assert!(k.distance(&back).unwrap() < 1e-10);
        let big = GridSpec::line(-4.0, 4.0, 256).unwrap();
        let wb = DensityEnsemble::pure(&profile(&big, 0.0, 1.0, 0.0)).unwrap();
        assert!(matches!(to_kernel(&wb), Err(Error::ToySize { .. })));
    }

    #[test]
    fn negated_weight_breaks_positivity() {
        let g = GridSpec::line(-4.0, 4.0, 16).unwrap();
        let a = profile(&g, -1.0, 0.8, 0.0);
        let b = profile(&g, 1.0, 0.8, 0.0);
        let va = DVector::from_column_slice(a.data());
        let vb = DVector::from_column_slice(b.data());
        let kernel = (&va * va.adjoint()).scale(1.5) - (&vb * vb.adjoint()).scale(0.5);
        let rep = KernelDensity::from_kernel(g, 1, kernel).unwrap().validate();
        let pos = rep.get("positive semidefinite").unwrap();
        assert!(!pos.passed && pos.defect > 0.1);
    }
}
