//! CCA and PLS-C fits by SVD of the cross-block matrix, canonical
//! coefficients, and singular-vector alignment utilities.
//!
//! PLS decomposes `Rxy` directly; CCA decomposes
//! `Ω = Rxx^{-1/2} Rxy Ryy^{-1/2}`, whose singular values are the canonical
//! correlations. Both fits orient every latent variable so that the
//! largest-magnitude entry of its X-side vector is positive. LVs with tied
//! singular values keep the SVD routine's order; only their joint subspace is
//! identified.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::block::{correlation_bundle, CorrelationBundle, DataBlock};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pls,
    Cca,
}

impl Method {
    pub fn needs_omega(self) -> bool {
        matches!(self, Method::Cca)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pls => "pls",
            Method::Cca => "cca",
        }
    }

    /// The matrix this method decomposes.
    pub fn cross_matrix(self, bundle: &CorrelationBundle) -> Result<&DMatrix<f64>> {
        match self {
            Method::Pls => Ok(&bundle.rxy),
            Method::Cca => bundle.omega.as_ref().ok_or(Error::MissingOmega),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pls" => Ok(Method::Pls),
            "cca" => Ok(Method::Cca),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// A fitted two-block model: `M = u · diag(s) · vᵗ` for the method's cross matrix `M`.
#[derive(Debug, Clone)]
pub struct CrossBlockModel {
    pub method: Method,
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl CrossBlockModel {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }
}

fn decompose(method: Method, m: &DMatrix<f64>) -> CrossBlockModel {
    let (u, s, v) = linalg::svd_oriented(m);
    CrossBlockModel { method, u, s, v }
}

pub fn fit_pls(bundle: &CorrelationBundle) -> CrossBlockModel {
    decompose(Method::Pls, &bundle.rxy)
}

pub fn fit_cca(bundle: &CorrelationBundle) -> Result<CrossBlockModel> {
    let omega = bundle.omega.as_ref().ok_or(Error::MissingOmega)?;
    Ok(decompose(Method::Cca, omega))
}

pub fn fit(bundle: &CorrelationBundle, method: Method) -> Result<CrossBlockModel> {
    match method {
        Method::Pls => Ok(fit_pls(bundle)),
        Method::Cca => fit_cca(bundle),
    }
}

/// Correlate and fit in one step.
pub fn analyze(x: &DataBlock, y: &DataBlock, method: Method) -> Result<(CorrelationBundle, CrossBlockModel)> {
    let bundle = correlation_bundle(x, y, method.needs_omega())?;
    let model = fit(&bundle, method)?;
    Ok((bundle, model))
}

/// Standardized canonical weights and canonical structure coefficients.
#[derive(Debug, Clone)]
pub struct CanonicalCoefficients {
    pub weights_x: DMatrix<f64>,
    pub structure_x: DMatrix<f64>,
    pub weights_y: DMatrix<f64>,
    pub structure_y: DMatrix<f64>,
}

/// `A = Rxx^{-1/2} U`, `S_A = Rxx A`, and likewise for the Y side.
pub fn canonical_coefficients(bundle: &CorrelationBundle, model: &CrossBlockModel) -> Result<CanonicalCoefficients> {
    if model.method != Method::Cca {
        return Err(Error::MethodMismatch {
            expected: "cca".into(),
            found: model.method.to_string(),
        });
    }
    let (wx, wy) = bundle.whiteners().ok_or(Error::MissingOmega)?;
    if wx.ncols() != model.u.nrows() || wy.ncols() != model.v.nrows() {
        return Err(Error::ShapeMismatch("model does not belong to this bundle".into()));
    }
    let weights_x = wx * &model.u;
    let weights_y = wy * &model.v;
    let structure_x = &bundle.rxx * &weights_x;
    let structure_y = &bundle.ryy * &weights_y;
    Ok(CanonicalCoefficients {
        weights_x,
        structure_x,
        weights_y,
        structure_y,
    })
}

/// `(U · diag(s), V · diag(s))`.
pub fn scale_vectors(model: &CrossBlockModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = DMatrix::from_diagonal(&model.s);
    (&model.u * &d, &model.v * &d)
}

/// Reflection correction against a reference basis.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub candidate: DMatrix<f64>,
    pub paired: DMatrix<f64>,
    pub flips: Vec<bool>,
}

/// Negate every column `j` of `candidate` (and of `paired`) whose cosine
/// with reference column `j` is negative. Rotations are left alone.
pub fn align_reflections(reference: &DMatrix<f64>, candidate: &DMatrix<f64>, paired: &DMatrix<f64>) -> Result<Alignment> {
    if reference.shape() != candidate.shape() {
        return Err(Error::ShapeMismatch(format!(
            "reference is {:?}, candidate is {:?}",
            reference.shape(),
            candidate.shape()
        )));
    }
    if paired.ncols() != candidate.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "paired matrix has {} columns, candidate has {}",
            paired.ncols(),
            candidate.ncols()
        )));
    }
    let mut candidate = candidate.clone();
    let mut paired = paired.clone();
    let mut flips = Vec::with_capacity(candidate.ncols());
    for j in 0..candidate.ncols() {
        let flip = reference.column(j).dot(&candidate.column(j)) < 0.0;
        if flip {
            candidate.column_mut(j).neg_mut();
            paired.column_mut(j).neg_mut();
        }
        flips.push(flip);
    }
    Ok(Alignment { candidate, paired, flips })
}

/// `aᵗ b`: the cosines between columns of two orthonormal bases.
pub fn cosine_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "bases live in different dimensions ({} vs {})",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(a.tr_mul(b))
}

/// Diagonal of `aᵗ b` without forming the full product.
pub(crate) fn diagonal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..a.ncols().min(b.ncols()))
        .map(|j| a.column(j).dot(&b.column(j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bundle_from(rxx: DMatrix<f64>, ryy: DMatrix<f64>, rxy: DMatrix<f64>, omega: bool) -> CorrelationBundle {
        CorrelationBundle::from_matrices(100, rxx, ryy, rxy, omega).unwrap()
    }

    #[test]
    fn pls_scalar() {
        let b = bundle_from(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, 0.5),
            false,
        );
        let m = fit_pls(&b);
        assert_abs_diff_eq!(m.s[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.u[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.v[(0, 0)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pls_zero_matrix() {
        let b = bundle_from(DMatrix::identity(3, 3), DMatrix::identity(2, 2), DMatrix::zeros(3, 2), false);
        let m = fit_pls(&b);
        assert_eq!(m.rank(), 2);
        assert!(m.s.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pls_diagonal() {
        let rxy = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.1]);
        let b = bundle_from(DMatrix::identity(2, 2), DMatrix::identity(2, 2), rxy, false);
        let m = fit_pls(&b);
        assert_abs_diff_eq!(m.s[0], 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(m.s[1], 0.1, epsilon = 1e-14);
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((m.u.abs() - &id).amax() < 1e-12);
        assert!((m.v.abs() - &id).amax() < 1e-12);
    }

    #[test]
    fn cca_requires_omega() {
        let b = bundle_from(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::zeros(2, 2), false);
        assert!(matches!(fit_cca(&b), Err(Error::MissingOmega)));
    }

    #[test]
    fn cca_equals_pls_with_identity_within_blocks() {
        let rxy = DMatrix::from_row_slice(3, 2, &[0.2, -0.1, 0.05, 0.3, 0.0, 0.12]);
        let b = bundle_from(DMatrix::identity(3, 3), DMatrix::identity(2, 2), rxy, true);
        let pls = fit_pls(&b);
        let cca = fit_cca(&b).unwrap();
        assert!((&pls.s - &cca.s).amax() < 1e-10);
    }

    #[test]
    fn canonical_coefficients_identity_case() {
        let rxy = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, -0.2, 0.2]);
        let b = bundle_from(DMatrix::identity(2, 2), DMatrix::identity(2, 2), rxy, true);
        let m = fit_cca(&b).unwrap();
        let c = canonical_coefficients(&b, &m).unwrap();
        assert!((&c.weights_x - &m.u).amax() < 1e-12);
        assert!((&c.structure_x - &m.u).amax() < 1e-12);
        assert!((&c.weights_y - &m.v).amax() < 1e-12);
    }

    #[test]
    fn canonical_coefficients_single_variable() {
        let b = bundle_from(
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[0.3, -0.2]),
            true,
        );
        let m = fit_cca(&b).unwrap();
        let c = canonical_coefficients(&b, &m).unwrap();
        assert_abs_diff_eq!(c.structure_x[(0, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_coefficients_reject_pls() {
        let b = bundle_from(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::zeros(2, 2), true);
        let m = fit_pls(&b);
        assert!(matches!(canonical_coefficients(&b, &m), Err(Error::MethodMismatch { .. })));
    }

    #[test]
    fn scale_vectors_examples() {
        let model = CrossBlockModel {
            method: Method::Pls,
            u: DMatrix::from_row_slice(2, 1, &[0.6, 0.8]),
            s: DVector::from_vec(vec![0.5]),
            v: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        let (us, vs) = scale_vectors(&model);
        assert_abs_diff_eq!(us[(0, 0)], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(us[(1, 0)], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(vs[(0, 0)], 0.5, epsilon = 1e-15);

        let unit = CrossBlockModel {
            s: DVector::from_vec(vec![1.0, 1.0]),
            u: DMatrix::identity(2, 2),
            v: DMatrix::identity(2, 2),
            method: Method::Pls,
        };
        let (us, vs) = scale_vectors(&unit);
        assert_eq!(us, unit.u);
        assert_eq!(vs, unit.v);

        let zero = CrossBlockModel {
            s: DVector::zeros(2),
            ..unit
        };
        let (us, vs) = scale_vectors(&zero);
        assert!(us.iter().chain(vs.iter()).all(|&x| x == 0.0));
    }

    fn rotation(deg: f64) -> DMatrix<f64> {
        let (s, c) = deg.to_radians().sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn align_identity_and_negation() {
        let r = rotation(20.0);
        let paired = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let same = align_reflections(&r, &r, &paired).unwrap();
        assert_eq!(same.flips, vec![false, false]);
        assert_eq!(same.candidate, r);
        assert_eq!(same.paired, paired);

        let neg = align_reflections(&r, &(-&r), &paired).unwrap();
        assert_eq!(neg.flips, vec![true, true]);
        assert_eq!(neg.candidate, r);
        assert_eq!(neg.paired, -&paired);
    }

    #[test]
    fn align_single_column() {
        let r = DMatrix::<f64>::identity(3, 3);
        let mut cand = r.clone();
        cand.column_mut(1).neg_mut();
        let paired = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let out = align_reflections(&r, &cand, &paired).unwrap();
        assert_eq!(out.flips, vec![false, true, false]);
        assert_eq!(out.candidate, r);
        assert_eq!(out.paired, DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 4.0, -5.0, 6.0]));
    }

    #[test]
    fn align_shape_mismatch() {
        let r = DMatrix::<f64>::identity(3, 3);
        assert!(align_reflections(&r, &DMatrix::identity(3, 2), &DMatrix::identity(2, 2)).is_err());
        assert!(align_reflections(&r, &r, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn cosine_examples() {
        let r = rotation(10.0);
        assert!((cosine_matrix(&r, &r).unwrap() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);

        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(cosine_matrix(&a, &b).unwrap(), DMatrix::zeros(2, 2));

        let rotated = rotation(30.0) * &r;
        let c = cosine_matrix(&r, &rotated).unwrap();
        let expected = 30f64.to_radians().cos();
        assert_abs_diff_eq!(c[(0, 0)], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(1, 1)], expected, epsilon = 1e-12);
        assert!(cosine_matrix(&r, &DMatrix::identity(3, 3)).is_err());
    }
}
