//! The five density matrices of a bipartite two-spin system, in ensemble
//! form, with purities and axiom checks.

use wbohm::scenarios::oracle::random_entangled;
use wbohm::{
    combined, conditional, eigendecompose, macro_conditional, purity, reduced, statistical, validate, AxisBox,
    Bipartition, DensityEnsemble, GridSpec, StreamId,
};

fn show(name: &str, w: &DensityEnsemble) {
    println!("{name:<12} rank {:>2}  purity {:.4}  valid {}", w.len(), purity(w), validate(w).all_passed());
}

fn main() -> wbohm::Result<()> {
    let grid = GridSpec::cube(-8.0, 8.0, 32, 2)?;
    let split = Bipartition::new(vec![0], vec![1], 2, 2)?;
    let a = random_entangled(&grid, 2, 2, 3, 1.5, 2, StreamId::new(5, "example.five", 0))?;
    let b = random_entangled(&grid, 2, 2, 2, 1.5, 2, StreamId::new(5, "example.five", 1))?;

    show("statistical", &statistical(vec![(0.7, a.clone()), (0.3, b.clone())])?);
    show("reduced", &reduced(&a, &split)?);
    show("combined", &combined(&[(0.7, a.clone()), (0.3, b)], &split)?);
    let w_cond = conditional(&a, &split, &[0.3])?;
    show("conditional", &w_cond);
    show("macro", &macro_conditional(&a, &split, &AxisBox::new(vec![-1.0], vec![1.0])?)?);
    // Any of them can serve as a fundamental state; its spectral form is canonical.
    show("spectral", &eigendecompose(&w_cond)?);
    Ok(())
}
