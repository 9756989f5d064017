//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Symmetric eigendecomposition with eigenvalues sorted non-increasing.
/// Ties keep the solver's order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Eigenvalues only, non-increasing.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Thin SVD `m = u * diag(s) * vᵗ` with `s` non-increasing and each pair of
/// singular vectors oriented so the largest-magnitude entry of the `u` column
/// is positive.
pub fn svd_oriented(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v = svd.v_t.expect("right singular vectors requested").transpose();
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u = u.select_columns(&order);
    let mut v = v.select_columns(&order);
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| s[i].max(0.0)));

    for j in 0..s.len() {
        if dominant_sign(u.column(j).iter().copied()) < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    (u, s, v)
}

/// Singular values only, non-increasing.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Sign of the largest-magnitude entry (first one on ties); 1 for an all-zero vector.
pub fn dominant_sign(values: impl Iterator<Item = f64>) -> f64 {
    let mut best = 0.0f64;
    for v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Flip eigenvector columns to the largest-magnitude-entry-positive convention.
pub fn orient_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        if dominant_sign(m.column(j).iter().copied()) < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the R-diagonal sign correction).
pub fn random_orthogonal<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    if dim == 0 {
        return DMatrix::zeros(0, 0);
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn svd_orientation_and_order() {
        let m = DMatrix::from_row_slice(3, 2, &[0.1, -0.3, 0.0, 0.2, -0.5, 0.0]);
        let (u, s, v) = svd_oriented(&m);
        assert!(s[0] >= s[1]);
        for j in 0..2 {
            assert!(dominant_sign(u.column(j).iter().copied()) > 0.0);
        }
        let rebuilt = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((rebuilt - m).amax() < 1e-12);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let q = random_orthogonal(6, &mut rng);
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(6, 6)).amax();
        assert!(err < 1e-12);
    }
}
