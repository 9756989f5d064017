//! Data blocks, standardization and within/cross-block correlation matrices.

use nalgebra::DMatrix;

use crate::error::{BlockSide, Error, Result};
use crate::linalg;

/// Relative spectral cutoff: an eigenvalue below `RANK_TOLERANCE * λ_max`
/// counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Columns whose sample standard deviation falls below this are constant.
pub const CONSTANT_SD: f64 = 1e-12;

/// An `n × k` observation matrix (rows are observations) with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl DataBlock {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidBlock(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidBlock("need at least one variable".into()));
        }
        if labels.len() != values.ncols() {
            return Err(Error::InvalidBlock(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidBlock(format!(
                "non-finite value at row {row}, column `{}`",
                labels[col]
            )));
        }
        Ok(DataBlock { values, labels })
    }

    /// Build a block labelled `{prefix}1 … {prefix}k`.
    pub fn with_prefix(values: DMatrix<f64>, prefix: &str) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|j| format!("{prefix}{j}")).collect();
        DataBlock::new(values, labels)
    }

    pub(crate) fn from_parts_unchecked(values: DMatrix<f64>, labels: Vec<String>) -> Self {
        debug_assert_eq!(values.ncols(), labels.len());
        DataBlock { values, labels }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// The rows at `rows`, in that order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<DataBlock> {
        if rows.len() < 2 {
            return Err(Error::InvalidBlock(format!(
                "row selection of size {} is too small",
                rows.len()
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {} rows",
                self.n()
            )));
        }
        Ok(DataBlock {
            values: self.values.select_rows(rows),
            labels: self.labels.clone(),
        })
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<DataBlock> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.k()) {
            return Err(Error::InvalidArgument(format!(
                "invalid column selection {cols:?} for {} columns",
                self.k()
            )));
        }
        Ok(DataBlock {
            values: self.values.select_columns(cols),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
        })
    }
}

fn column_mean_sd(values: &DMatrix<f64>, j: usize) -> (f64, f64) {
    let col = values.column(j);
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Center every column and scale it by its sample standard deviation.
pub fn zscore_columns(block: &DataBlock) -> Result<DataBlock> {
    let mut values = block.values.clone();
    for j in 0..block.k() {
        let (mean, sd) = column_mean_sd(&block.values, j);
        if !(sd >= CONSTANT_SD) {
            return Err(Error::ConstantColumn {
                label: block.labels[j].clone(),
            });
        }
        values.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    Ok(DataBlock::from_parts_unchecked(values, block.labels.clone()))
}

/// Center every column (no scaling). Used by covariance-scale PCA.
pub fn center_columns(block: &DataBlock) -> DataBlock {
    let mut values = block.values.clone();
    for j in 0..block.k() {
        let mean = values.column(j).mean();
        values.column_mut(j).add_scalar_mut(-mean);
    }
    DataBlock::from_parts_unchecked(values, block.labels.clone())
}

/// `Zᵗ Z / (n − 1)` for an already standardized (or centered) block.
pub(crate) fn gram(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = z.tr_mul(z) / (z.nrows() as f64 - 1.0);
    linalg::symmetrize(&mut g);
    g
}

/// Within- and cross-block correlation matrices for a block pair, plus the
/// within-block-adjusted cross matrix Ω when requested.
#[derive(Debug, Clone)]
pub struct CorrelationBundle {
    pub n: usize,
    pub rxx: DMatrix<f64>,
    pub ryy: DMatrix<f64>,
    pub rxy: DMatrix<f64>,
    pub ryx: DMatrix<f64>,
    pub omega: Option<DMatrix<f64>>,
    whiteners: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl CorrelationBundle {
    pub fn p(&self) -> usize {
        self.rxx.nrows()
    }

    pub fn q(&self) -> usize {
        self.ryy.nrows()
    }

    /// `(Rxx^{-1/2}, Ryy^{-1/2})` when Ω was computed.
    pub fn whiteners(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        self.whiteners.as_ref().map(|(a, b)| (a, b))
    }

    /// Assemble a bundle from precomputed matrices (no data). Ω is derived
    /// when `with_omega` is set.
    pub fn from_matrices(
        n: usize,
        rxx: DMatrix<f64>,
        ryy: DMatrix<f64>,
        rxy: DMatrix<f64>,
        with_omega: bool,
    ) -> Result<Self> {
        if rxx.nrows() != rxx.ncols() || ryy.nrows() != ryy.ncols() {
            return Err(Error::ShapeMismatch("within-block matrices must be square".into()));
        }
        if rxy.nrows() != rxx.nrows() || rxy.ncols() != ryy.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "rxy is {}x{}, expected {}x{}",
                rxy.nrows(),
                rxy.ncols(),
                rxx.nrows(),
                ryy.nrows()
            )));
        }
        let ryx = rxy.transpose();
        let mut bundle = CorrelationBundle {
            n,
            rxx,
            ryy,
            rxy,
            ryx,
            omega: None,
            whiteners: None,
        };
        if with_omega {
            let wx = whitener(&bundle.rxx, BlockSide::X)?;
            let wy = whitener(&bundle.ryy, BlockSide::Y)?;
            bundle.omega = Some(&wx * &bundle.rxy * &wy);
            bundle.whiteners = Some((wx, wy));
        }
        Ok(bundle)
    }
}

fn whitener(r: &DMatrix<f64>, side: BlockSide) -> Result<DMatrix<f64>> {
    let rank = effective_rank(r);
    if rank < r.nrows() {
        return Err(Error::RankDeficient {
            block: side,
            detail: format!("effective rank {rank} of {} variables", r.nrows()),
        });
    }
    inverse_sqrt_sym(r).map_err(|e| match e {
        Error::NotPositiveDefinite { eigenvalue } => Error::RankDeficient {
            block: side,
            detail: format!("eigenvalue {eigenvalue:e} below tolerance"),
        },
        other => other,
    })
}

/// Correlations of a block pair. Both blocks are z-scored internally.
pub fn correlation_bundle(x: &DataBlock, y: &DataBlock, with_omega: bool) -> Result<CorrelationBundle> {
    if x.n() != y.n() {
        return Err(Error::ObservationMismatch { x: x.n(), y: y.n() });
    }
    let xz = zscore_columns(x)?;
    let yz = zscore_columns(y)?;
    correlation_bundle_standardized(&xz.values, &yz.values, with_omega)
}

pub(crate) fn correlation_bundle_standardized(
    xz: &DMatrix<f64>,
    yz: &DMatrix<f64>,
    with_omega: bool,
) -> Result<CorrelationBundle> {
    let n = xz.nrows();
    let denom = n as f64 - 1.0;
    let rxx = gram(xz);
    let ryy = gram(yz);
    let rxy = xz.tr_mul(yz) / denom;
    CorrelationBundle::from_matrices(n, rxx, ryy, rxy, with_omega)
}

/// Symmetric inverse square root `A` with `A · m · A = I`, via eigendecomposition.
pub fn inverse_sqrt_sym(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = linalg::max_asymmetry(m);
    if asym > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (max |m_ij - m_ji| = {asym:e})"
        )));
    }
    let (values, vectors) = linalg::sym_eigen_desc(m);
    let largest = values[0];
    let smallest = values[values.len() - 1];
    if !(smallest > 0.0) || smallest < RANK_TOLERANCE * largest {
        return Err(Error::NotPositiveDefinite { eigenvalue: smallest });
    }
    let scale = values.map(|v| 1.0 / v.sqrt());
    let mut a = &vectors * DMatrix::from_diagonal(&scale) * vectors.transpose();
    linalg::symmetrize(&mut a);
    Ok(a)
}

/// Number of eigenvalues above `RANK_TOLERANCE × λ_max`.
pub fn effective_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let values = linalg::sym_eigenvalues_desc(m);
    let largest = values[0];
    if !(largest > 0.0) {
        return 0;
    }
    values.iter().filter(|&&v| v > RANK_TOLERANCE * largest).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn col_block(cols: &[&[f64]]) -> DataBlock {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        DataBlock::with_prefix(m, "v").unwrap()
    }

    #[test]
    fn zscore_unit_sd_column_is_shifted() {
        let z = zscore_columns(&col_block(&[&[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(z.values().as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zscore_hand_computed() {
        // mean 4, sample sd 2
        let z = zscore_columns(&col_block(&[&[2.0, 4.0, 6.0]])).unwrap();
        assert_eq!(z.values().as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zscore_constant_column_is_rejected() {
        let err = zscore_columns(&col_block(&[&[1.0, 2.0, 3.0], &[10.0, 10.0, 10.0]])).unwrap_err();
        assert!(matches!(err, Error::ConstantColumn { ref label } if label == "v2"));
    }

    #[test]
    fn zscore_leaves_input_untouched() {
        let b = col_block(&[&[2.0, 4.0, 9.0]]);
        let before = b.clone();
        let _ = zscore_columns(&b).unwrap();
        assert_eq!(b, before);
    }

    #[test]
    fn block_validation() {
        assert!(DataBlock::with_prefix(DMatrix::from_row_slice(1, 1, &[1.0]), "x").is_err());
        assert!(DataBlock::with_prefix(DMatrix::zeros(3, 0), "x").is_err());
        assert!(DataBlock::new(DMatrix::zeros(3, 2), vec!["a".into()]).is_err());
        assert!(DataBlock::with_prefix(DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]), "x").is_err());
    }

    #[test]
    fn self_and_anti_correlation() {
        let x = col_block(&[&[1.0, 2.0, 3.0]]);
        let y = col_block(&[&[3.0, 2.0, 1.0]]);
        let same = correlation_bundle(&x, &x, false).unwrap();
        assert_abs_diff_eq!(same.rxy[(0, 0)], 1.0, epsilon = 1e-15);
        let anti = correlation_bundle(&x, &y, false).unwrap();
        assert_abs_diff_eq!(anti.rxy[(0, 0)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_pearson_on_three_points() {
        let x = col_block(&[&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]]);
        let b = correlation_bundle(&x, &x, false).unwrap();
        assert_abs_diff_eq!(b.rxx[(0, 1)], 0.5, epsilon = 1e-14);
        assert_eq!(b.ryx, b.rxy.transpose());
    }

    #[test]
    fn observation_mismatch() {
        let x = col_block(&[&[1.0, 2.0, 3.0]]);
        let y = col_block(&[&[1.0, 2.0]]);
        assert!(matches!(
            correlation_bundle(&x, &y, false),
            Err(Error::ObservationMismatch { x: 3, y: 2 })
        ));
    }

    #[test]
    fn omega_needs_full_rank() {
        // second column is an exact multiple of the first
        let x = col_block(&[&[1.0, 2.0, 3.0, 5.0], &[2.0, 4.0, 6.0, 10.0]]);
        let y = col_block(&[&[1.0, 0.0, 2.0, 1.0]]);
        assert!(correlation_bundle(&x, &y, false).is_ok());
        let err = correlation_bundle(&x, &y, true).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { block: BlockSide::X, .. }));
    }

    #[test]
    fn inverse_sqrt_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((inverse_sqrt_sym(&i3).unwrap() - &i3).amax() < 1e-14);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let a = inverse_sqrt_sym(&d).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(a[(1, 1)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_sqrt_against_spectral_oracle() {
        // [[1, .6], [.6, 1]] has eigenvalues 1.6 and 0.4 with eigenvectors (1, ±1)/√2.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let a = inverse_sqrt_sym(&m).unwrap();
        let h = 0.5 * (1.0 / 1.6f64.sqrt() + 1.0 / 0.4f64.sqrt());
        let g = 0.5 * (1.0 / 1.6f64.sqrt() - 1.0 / 0.4f64.sqrt());
        let oracle = DMatrix::from_row_slice(2, 2, &[h, g, g, h]);
        assert!((&a - oracle).amax() < 1e-12);
        assert!((&a * &m * &a - DMatrix::<f64>::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn inverse_sqrt_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse_sqrt_sym(&m), Err(Error::NotPositiveDefinite { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(inverse_sqrt_sym(&asym).is_err());
    }

    #[test]
    fn effective_rank_examples() {
        assert_eq!(effective_rank(&DMatrix::<f64>::identity(5, 5)), 5);
        let v = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(effective_rank(&(&v * v.transpose())), 1);
        assert_eq!(effective_rank(&DMatrix::<f64>::zeros(3, 3)), 0);
    }
}
