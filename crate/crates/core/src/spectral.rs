//! FFT plumbing shared by the lattice and evolution modules.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type PlanCache = Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>;

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    plans
        .entry((len, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Unnormalized transform of a row-major array along one axis.
pub(crate) fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    debug_assert_eq!(data.len(), n * inner * outer);
    let fft = plan(n, inverse);
    if inner == 1 {
        fft.process(data);
        return;
    }
    let mut lines = vec![Complex64::default(); data.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for j in 0..n {
            let row = &data[base + j * inner..base + (j + 1) * inner];
            for (i, &v) in row.iter().enumerate() {
                lines[(o * inner + i) * n + j] = v;
            }
        }
    }
    fft.process(&mut lines);
    for o in 0..outer {
        let base = o * n * inner;
        for j in 0..n {
            let row = &mut data[base + j * inner..base + (j + 1) * inner];
            for (i, v) in row.iter_mut().enumerate() {
                *v = lines[(o * inner + i) * n + j];
            }
        }
    }
}

/// Unnormalized transform along every axis.
pub(crate) fn fft_all(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    for axis in (0..shape.len()).rev() {
        fft_axis(data, shape, axis, inverse);
    }
}

/// Angular wavenumbers in FFT order for `n` points on a period of `length`.
/// The Nyquist entry carries `-pi n / length`.
pub(crate) fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let dk = 2.0 * PI / length;
    (0..n)
        .map(|j| {
            let j = j as i64;
            let n = n as i64;
            let m = if j < n / 2 { j } else { j - n };
            dk * m as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_transform_matches_direct_dft() {
        let shape = [8usize, 4, 2];
        let data: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        for axis in 0..3 {
            let mut got = data.clone();
            fft_axis(&mut got, &shape, axis, false);
            let strides = [8usize, 2, 1];
            let n = shape[axis];
            for idx in 0..64 {
                let mi = [idx / 8, (idx / 2) % 4, idx % 2];
                let mut acc = Complex64::default();
                for j in 0..n {
                    let mut src = mi;
                    src[axis] = j;
                    let s = src[0] * strides[0] + src[1] * strides[1] + src[2];
                    let ang = -2.0 * PI * (mi[axis] * j) as f64 / n as f64;
                    acc += data[s] * Complex64::from_polar(1.0, ang);
                }
                assert!((acc - got[idx]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn wavenumber_layout() {
        let k = wavenumbers(8, 2.0 * PI);
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }
}
