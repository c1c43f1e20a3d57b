//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Imaginary parts up to this size are treated as round-off.
pub const COMPLEX_TOL: f64 = 1e-8;

/// Flip the sign of each column so its largest-magnitude entry is positive.
pub fn normalize_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Singular values (descending) and matching right singular vectors as columns.
pub fn right_singular_pairs(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    (values, v)
}

/// Condition number in the spectral norm; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of a real square matrix in ascending order, or `None` when some
/// eigenvalue has imaginary part above [`COMPLEX_TOL`].
pub fn real_eigenvalues(b: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = b.nrows();
    match n {
        0 => Some(Vec::new()),
        1 => Some(vec![b[(0, 0)]]),
        2 => {
            let (a, bb, c, d) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + bb * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                Some(vec![half_tr - r, half_tr + r])
            } else if (-disc).sqrt() < COMPLEX_TOL {
                Some(vec![half_tr, half_tr])
            } else {
                None
            }
        }
        _ => {
            let eig = b.clone().complex_eigenvalues();
            if eig.iter().any(|z| z.im.abs() > COMPLEX_TOL || !z.re.is_finite()) {
                return None;
            }
            let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
            re.sort_by(f64::total_cmp);
            Some(re)
        }
    }
}

/// Unit eigenvector of `b` for the real eigenvalue `lambda`.
pub fn eigenvector(b: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let n = b.nrows();
    let mut v = if n == 2 {
        let (a, bb, c, d) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
        // Rows of (B - lambda I) are orthogonal to the eigenvector.
        let from_row0 = DVector::from_vec(vec![bb, lambda - a]);
        let from_row1 = DVector::from_vec(vec![lambda - d, c]);
        if from_row0.norm() >= from_row1.norm() {
            from_row0
        } else {
            from_row1
        }
    } else {
        let shifted = b - DMatrix::identity(n, n) * lambda;
        let (_, v) = right_singular_pairs(&shifted);
        v.column(n - 1).into_owned()
    };
    let norm = v.norm();
    if norm == 0.0 {
        // B = lambda I: any vector works; pick a coordinate axis.
        v = DVector::zeros(n);
        v[0] = 1.0;
    } else {
        v /= norm;
    }
    v
}
