//! Permutation tests, bootstrap confidence intervals and Bartlett's test.
//!
//! Resampling iterations are independent. Iteration `i` draws from its own
//! seeded stream and results are collected by index, so the thread count
//! never changes an outcome.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::block::{correlation_bundle, zscore_columns, DataBlock};
use crate::decomposition::{align_reflections, analyze, scale_vectors, CrossBlockModel, Method};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};
use crate::stats::percentile;

/// Bounded redraws for a degenerate bootstrap sample.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone)]
pub struct PermutationResult {
    pub observed_s: Vec<f64>,
    /// `n_perm × r`; row `i` holds the singular values of permutation `i`.
    pub null_s: DMatrix<f64>,
    pub p_values: Vec<f64>,
    pub n_perm: usize,
}

impl PermutationResult {
    fn from_draws(observed_s: Vec<f64>, draws: Vec<Vec<f64>>) -> Self {
        let n_perm = draws.len();
        let r = observed_s.len();
        let null_s = DMatrix::from_fn(n_perm, r, |i, k| draws[i][k]);
        let p_values = (0..r)
            .map(|k| {
                let count = draws.iter().filter(|d| d[k] >= observed_s[k]).count();
                count as f64 / n_perm as f64
            })
            .collect();
        PermutationResult {
            observed_s,
            null_s,
            p_values,
            n_perm,
        }
    }
}

/// Refits the cross-block decomposition under row permutations of Y.
///
/// Permuting Y's rows leaves both within-block matrices unchanged, so the
/// standardized blocks and whitening matrices are computed once. The observed
/// statistic goes through the same code path as every permuted one.
pub(crate) struct PermutationEngine {
    xz: DMatrix<f64>,
    yz: DMatrix<f64>,
    whiteners: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl PermutationEngine {
    pub(crate) fn new(x: &DataBlock, y: &DataBlock, method: Method) -> Result<Self> {
        let bundle = correlation_bundle(x, y, method.needs_omega())?;
        let whiteners = bundle.whiteners().map(|(a, b)| (a.clone(), b.clone()));
        Ok(PermutationEngine {
            xz: zscore_columns(x)?.into_values(),
            yz: zscore_columns(y)?.into_values(),
            whiteners,
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.xz.nrows()
    }

    pub(crate) fn singular_values(&self, perm: &[usize]) -> Vec<f64> {
        let yp = self.yz.select_rows(perm);
        let rxy = self.xz.tr_mul(&yp) / (self.n() as f64 - 1.0);
        let m = match &self.whiteners {
            Some((wx, wy)) => wx * rxy * wy,
            None => rxy,
        };
        linalg::singular_values_desc(&m)
    }

    pub(crate) fn observed(&self) -> Vec<f64> {
        let identity: Vec<usize> = (0..self.n()).collect();
        self.singular_values(&identity)
    }

    pub(crate) fn run<F>(&self, n_perm: usize, draw: F) -> PermutationResult
    where
        F: Fn(usize) -> Vec<usize> + Sync,
    {
        let observed = self.observed();
        let draws: Vec<Vec<f64>> = (0..n_perm)
            .into_par_iter()
            .map(|i| self.singular_values(&draw(i)))
            .collect();
        PermutationResult::from_draws(observed, draws)
    }
}

/// Uniform random permutation of `0..n` for permutation `index`.
pub(crate) fn seeded_permutation(n: usize, seed: u64, purpose: Purpose, path: &[u64]) -> Vec<usize> {
    let mut rng = rng::stream(seed, purpose, path);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Permutation test of every LV's singular value: Y rows shuffled, X fixed.
/// `p_k` is the fraction of permutations whose k-th singular value is at
/// least the observed k-th singular value.
pub fn permutation_test(x: &DataBlock, y: &DataBlock, method: Method, n_perm: usize, seed: u64) -> Result<PermutationResult> {
    let n = x.n();
    permutation_test_with(x, y, method, n_perm, |i| {
        seeded_permutation(n, seed, Purpose::Permutation, &[i as u64])
    })
}

/// Permutation test with caller-supplied row permutations (`draw(i)` is the
/// permutation for iteration `i`).
pub fn permutation_test_with<F>(x: &DataBlock, y: &DataBlock, method: Method, n_perm: usize, draw: F) -> Result<PermutationResult>
where
    F: Fn(usize) -> Vec<usize> + Sync,
{
    if n_perm == 0 {
        return Err(Error::InvalidArgument("n_perm must be at least 1".into()));
    }
    if x.n() != y.n() {
        return Err(Error::ObservationMismatch { x: x.n(), y: y.n() });
    }
    let engine = PermutationEngine::new(x, y, method)?;
    let n = engine.n();
    let checked = |i: usize| {
        let perm = draw(i);
        assert_eq!(perm.len(), n, "permutation {i} has the wrong length");
        perm
    };
    Ok(engine.run(n_perm, checked))
}

/// Percentile intervals for one block's scaled weights.
#[derive(Debug, Clone)]
pub struct WeightIntervals {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// True where the interval excludes zero.
    pub stable: DMatrix<bool>,
}

impl WeightIntervals {
    fn from_samples(samples: &[DMatrix<f64>], lo: f64, hi: f64) -> Self {
        let (rows, cols) = samples[0].shape();
        let mut lower = DMatrix::zeros(rows, cols);
        let mut upper = DMatrix::zeros(rows, cols);
        let mut buf = vec![0.0; samples.len()];
        for i in 0..rows {
            for j in 0..cols {
                for (b, s) in buf.iter_mut().zip(samples) {
                    *b = s[(i, j)];
                }
                lower[(i, j)] = percentile(&mut buf, lo);
                upper[(i, j)] = percentile(&mut buf, hi);
            }
        }
        let stable = DMatrix::from_fn(rows, cols, |i, j| lower[(i, j)] > 0.0 || upper[(i, j)] < 0.0);
        WeightIntervals { lower, upper, stable }
    }

    pub fn stable_fraction(&self) -> f64 {
        self.stable.iter().filter(|&&s| s).count() as f64 / self.stable.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// The full-sample fit the draws were aligned to.
    pub original: CrossBlockModel,
    /// Intervals for `U · diag(s)`.
    pub x: WeightIntervals,
    /// Intervals for `V · diag(s)`.
    pub y: WeightIntervals,
    pub n_boot: usize,
    /// Degenerate draws that were replaced.
    pub redraws: usize,
}

/// Bootstrap 95% percentile intervals for the scaled singular-vector weights.
///
/// Rows of both blocks are resampled together with replacement. Each refit is
/// reflection-aligned to the original `U` (flips carried over to `V`), scaled
/// by its singular values, and pooled with the original estimate.
pub fn bootstrap_ci(x: &DataBlock, y: &DataBlock, method: Method, n_boot: usize, seed: u64) -> Result<BootstrapResult> {
    if n_boot < 100 {
        return Err(Error::InvalidArgument(format!("n_boot must be at least 100, got {n_boot}")));
    }
    if x.n() != y.n() {
        return Err(Error::ObservationMismatch { x: x.n(), y: y.n() });
    }
    let (_, original) = analyze(x, y, method)?;
    let n = x.n();

    let draws: Vec<Result<(DMatrix<f64>, DMatrix<f64>, usize)>> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let mut last_reason = String::new();
            for attempt in 0..=MAX_REDRAWS {
                let mut rng = rng::stream(seed, Purpose::Bootstrap, &[i as u64, attempt as u64]);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let fitted = x
                    .select_rows(&rows)
                    .and_then(|xb| Ok((xb, y.select_rows(&rows)?)))
                    .and_then(|(xb, yb)| analyze(&xb, &yb, method));
                match fitted {
                    Ok((_, model)) => {
                        let aligned = align_reflections(&original.u, &model.u, &model.v)?;
                        let model = CrossBlockModel {
                            u: aligned.candidate,
                            v: aligned.paired,
                            ..model
                        };
                        let (us, vs) = scale_vectors(&model);
                        return Ok((us, vs, attempt));
                    }
                    Err(e) if e.is_numerical() || matches!(e, Error::ConstantColumn { .. }) => {
                        last_reason = e.to_string();
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::DegenerateResample {
                iteration: i,
                attempts: MAX_REDRAWS + 1,
                reason: last_reason,
            })
        })
        .collect();

    let (orig_us, orig_vs) = scale_vectors(&original);
    let mut us_samples = vec![orig_us];
    let mut vs_samples = vec![orig_vs];
    let mut redraws = 0;
    for d in draws {
        let (us, vs, attempts) = d?;
        us_samples.push(us);
        vs_samples.push(vs);
        redraws += attempts;
    }

    Ok(BootstrapResult {
        x: WeightIntervals::from_samples(&us_samples, 0.025, 0.975),
        y: WeightIntervals::from_samples(&vs_samples, 0.025, 0.975),
        original,
        n_boot,
        redraws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BartlettRow {
    /// 1-based index of the first LV included in the test.
    pub start_lv: usize,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BartlettResult {
    pub tests: Vec<BartlettRow>,
}

/// Bartlett's chi-square approximation to Wilks' lambda for the nested
/// hypotheses "canonical correlations k, k+1, … are all zero".
pub fn bartlett_test(model: &CrossBlockModel, n: usize, p: usize, q: usize) -> Result<BartlettResult> {
    if model.method != Method::Cca {
        return Err(Error::MethodMismatch {
            expected: "cca".into(),
            found: model.method.to_string(),
        });
    }
    bartlett_from_correlations(model.s.as_slice(), n, p, q)
}

/// Bartlett's test from a list of canonical correlations.
pub fn bartlett_from_correlations(s: &[f64], n: usize, p: usize, q: usize) -> Result<BartlettResult> {
    if n <= p + q {
        return Err(Error::InvalidArgument(format!(
            "Bartlett's test needs n > p + q (n = {n}, p = {p}, q = {q})"
        )));
    }
    if s.len() > p.min(q) {
        return Err(Error::ShapeMismatch(format!(
            "{} canonical correlations for p = {p}, q = {q}",
            s.len()
        )));
    }
    let factor = n as f64 - 1.0 - (p + q + 1) as f64 / 2.0;
    let logs: Vec<f64> = s
        .iter()
        .map(|&r| (1.0 - r * r).max(f64::MIN_POSITIVE).ln())
        .collect();
    let mut tests = Vec::with_capacity(s.len());
    for k in 1..=s.len() {
        let tail: f64 = logs[k - 1..].iter().sum();
        let chi_square = (-factor * tail).max(0.0);
        let df = (p - k + 1) * (q - k + 1);
        let dist = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        tests.push(BartlettRow {
            start_lv: k,
            chi_square,
            df,
            p_value: dist.sf(chi_square),
        });
    }
    Ok(BartlettResult { tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn block(values: &[f64], n: usize, k: usize, prefix: &str) -> DataBlock {
        DataBlock::with_prefix(DMatrix::from_column_slice(n, k, values), prefix).unwrap()
    }

    #[test]
    fn p_value_zero_when_observed_dominates() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + ((v * 7.0) % 3.0) * 0.1).collect();
        let res = permutation_test(&block(&x, 40, 1, "x"), &block(&y, 40, 1, "y"), Method::Pls, 1000, 1).unwrap();
        assert_eq!(res.p_values, vec![0.0]);
        assert_eq!(res.null_s.shape(), (1000, 1));
    }

    #[test]
    fn p_value_one_when_every_permutation_is_larger() {
        let x = block(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 6, 1, "x");
        let y = block(&[3.0, 6.0, 1.0, 5.0, 2.0, 4.0], 6, 1, "y");
        // reorders y into 1..6, a perfect correlation with x
        let sorting = vec![2, 4, 0, 5, 3, 1];
        let res = permutation_test_with(&x, &y, Method::Pls, 50, |_| sorting.clone()).unwrap();
        assert!(res.observed_s[0] < 1.0);
        assert_eq!(res.p_values, vec![1.0]);
    }

    #[test]
    fn identity_permutation_gives_p_one() {
        let x = block(&[1.0, 4.0, 2.0, 8.0, 5.0, 7.0, 3.0, 9.0, 1.5, 2.5, 3.5, 0.5], 6, 2, "x");
        let y = block(&[2.0, 1.0, 4.0, 3.0, 6.0, 5.0], 6, 1, "y");
        for method in [Method::Pls, Method::Cca] {
            let res = permutation_test_with(&x, &y, method, 20, |_| (0..6).collect()).unwrap();
            assert!(res.p_values.iter().all(|&p| p == 1.0), "{method}: {:?}", res.p_values);
        }
    }

    #[test]
    fn zero_permutations_rejected() {
        let x = block(&[1.0, 2.0, 3.0], 3, 1, "x");
        assert!(permutation_test(&x, &x, Method::Pls, 0, 0).is_err());
    }

    #[test]
    fn bootstrap_collinear_single_columns() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 17) % 11) as f64).collect();
        let xb = block(&x, 30, 1, "x");
        let yb = block(&x, 30, 1, "y");
        for method in [Method::Pls, Method::Cca] {
            let res = bootstrap_ci(&xb, &yb, method, 100, 5).unwrap();
            assert!(res.x.stable[(0, 0)]);
            assert!((res.x.lower[(0, 0)] - 1.0).abs() < 1e-9);
            assert!((res.x.upper[(0, 0)] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bootstrap_needs_enough_draws() {
        let x = block(&[1.0, 2.0, 3.0, 4.0], 4, 1, "x");
        assert!(bootstrap_ci(&x, &x, Method::Pls, 99, 0).is_err());
    }

    #[test]
    fn bootstrap_redraws_degenerate_samples() {
        // one non-constant row: almost every resample produces a constant column
        let mut x = vec![0.0; 40];
        x[0] = 1.0;
        let xb = block(&x, 40, 1, "x");
        let yb = block(&(0..40).map(|i| i as f64).collect::<Vec<_>>(), 40, 1, "y");
        // P(row 0 absent from a 40-draw resample) ≈ 0.36
        let res = bootstrap_ci(&xb, &yb, Method::Pls, 100, 0).unwrap();
        assert!(res.redraws > 0);
    }

    #[test]
    fn bartlett_zero_correlations() {
        let res = bartlett_from_correlations(&[0.0, 0.0, 0.0], 200, 3, 4).unwrap();
        for row in &res.tests {
            assert_eq!(row.chi_square, 0.0);
            assert!((row.p_value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bartlett_degrees_of_freedom() {
        let dfs = |p: usize, q: usize| -> Vec<usize> {
            let s = vec![0.1; p.min(q)];
            bartlett_from_correlations(&s, 10_000, p, q)
                .unwrap()
                .tests
                .iter()
                .map(|t| t.df)
                .collect()
        };
        assert_eq!(dfs(10, 5), vec![50, 36, 24, 14, 6]);
        assert_eq!(dfs(6, 3), vec![18, 10, 4]);
        assert_eq!(dfs(6, 4), vec![24, 15, 8, 3]);
        assert_eq!(dfs(50, 4), vec![200, 147, 96, 47]);
    }

    #[test]
    fn bartlett_chi_square_is_non_increasing() {
        let res = bartlett_from_correlations(&[0.6, 0.3, 0.2, 0.05], 500, 6, 4).unwrap();
        for w in res.tests.windows(2) {
            assert!(w[0].chi_square >= w[1].chi_square);
        }
    }

    #[test]
    fn bartlett_rejects_pls_and_small_n() {
        let model = CrossBlockModel {
            method: Method::Pls,
            u: DMatrix::identity(2, 1),
            s: DVector::from_vec(vec![0.2]),
            v: DMatrix::identity(1, 1),
        };
        assert!(matches!(bartlett_test(&model, 100, 2, 1), Err(Error::MethodMismatch { .. })));
        assert!(bartlett_from_correlations(&[0.2], 3, 2, 1).is_err());
    }
}
