//! Split-sample reproducibility of a cross-block fit.
//!
//! Each iteration splits the rows into two random halves. The train/test
//! metric projects the test half's cross-block matrix onto the train half's
//! singular vectors; the split-half metric compares the two halves' singular
//! vectors directly. Both are summarized per LV as mean/sd over iterations.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{correlation_bundle, DataBlock};
use crate::decomposition::{diagonal_cosines, fit, Method};
use crate::error::{Error, Result};
use crate::inference::seeded_permutation;
use crate::rng::{self, Purpose};
use crate::stats::ZSummary;

#[derive(Debug, Clone)]
pub struct TrainTestReport {
    /// `n_split × r`, signed.
    pub s_test_draws: DMatrix<f64>,
    pub z: Vec<ZSummary>,
}

#[derive(Debug, Clone)]
pub struct SplitHalfReport {
    /// `n_split × r`, absolute cosines.
    pub u_cosine_draws: DMatrix<f64>,
    pub v_cosine_draws: DMatrix<f64>,
    pub z_u: Vec<ZSummary>,
    pub z_v: Vec<ZSummary>,
}

/// What to do when a half fails the rank guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Abort with the first iteration's error.
    #[default]
    Abort,
    /// Drop the iteration and record it.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSplit {
    pub iteration: usize,
    pub reason: String,
}

/// Both metrics computed on the same partitions.
#[derive(Debug, Clone)]
pub struct ReproducibilityReport {
    pub train_test: TrainTestReport,
    pub split_half: SplitHalfReport,
    pub skipped: Vec<SkippedSplit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Halves {
    /// `⌈n/2⌉` rows.
    pub train: Vec<usize>,
    /// `⌊n/2⌋` rows.
    pub test: Vec<usize>,
}

impl Halves {
    /// Uniformly random partition for split `iteration`.
    pub fn draw(n: usize, seed: u64, iteration: usize) -> Halves {
        let mut rng = rng::stream(seed, Purpose::Split, &[iteration as u64]);
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let test = rows.split_off(n.div_ceil(2));
        Halves { train: rows, test }
    }
}

/// `diag(U_trainᵗ · M_test · V_train)` for one pair of halves.
pub fn train_test_pair(
    train: (&DataBlock, &DataBlock),
    test: (&DataBlock, &DataBlock),
    method: Method,
) -> Result<Vec<f64>> {
    let train_bundle = correlation_bundle(train.0, train.1, method.needs_omega())?;
    let model = fit(&train_bundle, method)?;
    let test_bundle = correlation_bundle(test.0, test.1, method.needs_omega())?;
    let m_test = method.cross_matrix(&test_bundle)?;
    let projected = model.u.transpose() * m_test * &model.v;
    Ok((0..model.rank()).map(|k| projected[(k, k)]).collect())
}

/// `|diag(U₁ᵗU₂)|` and `|diag(V₁ᵗV₂)|` for one pair of halves.
pub fn split_half_pair(
    first: (&DataBlock, &DataBlock),
    second: (&DataBlock, &DataBlock),
    method: Method,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = fit(&correlation_bundle(first.0, first.1, method.needs_omega())?, method)?;
    let b = fit(&correlation_bundle(second.0, second.1, method.needs_omega())?, method)?;
    let abs = |v: Vec<f64>| v.into_iter().map(f64::abs).collect::<Vec<_>>();
    Ok((abs(diagonal_cosines(&a.u, &b.u)), abs(diagonal_cosines(&a.v, &b.v))))
}

struct SplitDraw {
    s_test: Vec<f64>,
    u_cos: Vec<f64>,
    v_cos: Vec<f64>,
}

fn one_split(x: &DataBlock, y: &DataBlock, method: Method, seed: u64, iteration: usize, permute: bool) -> Result<SplitDraw> {
    let n = x.n();
    let permuted;
    let y = if permute {
        let perm = seeded_permutation(n, seed, Purpose::NullCalibration, &[iteration as u64]);
        permuted = y.select_rows(&perm)?;
        &permuted
    } else {
        y
    };
    let halves = Halves::draw(n, seed, iteration);
    let (x1, y1) = (x.select_rows(&halves.train)?, y.select_rows(&halves.train)?);
    let (x2, y2) = (x.select_rows(&halves.test)?, y.select_rows(&halves.test)?);

    let b1 = correlation_bundle(&x1, &y1, method.needs_omega())?;
    let b2 = correlation_bundle(&x2, &y2, method.needs_omega())?;
    let m1 = fit(&b1, method)?;
    let m2 = fit(&b2, method)?;
    let projected = m1.u.transpose() * method.cross_matrix(&b2)? * &m1.v;
    Ok(SplitDraw {
        s_test: (0..m1.rank()).map(|k| projected[(k, k)]).collect(),
        u_cos: diagonal_cosines(&m1.u, &m2.u).into_iter().map(f64::abs).collect(),
        v_cos: diagonal_cosines(&m1.v, &m2.v).into_iter().map(f64::abs).collect(),
    })
}

fn run(
    x: &DataBlock,
    y: &DataBlock,
    method: Method,
    n_split: usize,
    seed: u64,
    permute: bool,
    policy: FailurePolicy,
) -> Result<ReproducibilityReport> {
    if x.n() != y.n() {
        return Err(Error::ObservationMismatch { x: x.n(), y: y.n() });
    }
    if x.n() < 4 {
        return Err(Error::InvalidArgument(format!("split-half analysis needs n ≥ 4, got {}", x.n())));
    }
    if n_split == 0 {
        return Err(Error::InvalidArgument("n_split must be at least 1".into()));
    }
    let results: Vec<Result<SplitDraw>> = (0..n_split)
        .into_par_iter()
        .map(|i| one_split(x, y, method, seed, i, permute))
        .collect();

    let mut draws = Vec::with_capacity(n_split);
    let mut skipped = Vec::new();
    let mut last_error = None;
    for (iteration, r) in results.into_iter().enumerate() {
        match r {
            Ok(d) => draws.push(d),
            Err(e) if policy == FailurePolicy::Skip && e.is_numerical() => {
                skipped.push(SkippedSplit {
                    iteration,
                    reason: e.to_string(),
                });
                last_error = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    if draws.is_empty() {
        return Err(last_error.expect("no draws implies at least one error"));
    }

    let to_matrix = |pick: fn(&SplitDraw) -> &Vec<f64>| {
        let r = pick(&draws[0]).len();
        DMatrix::from_fn(draws.len(), r, |i, k| pick(&draws[i])[k])
    };
    let summarize = |m: &DMatrix<f64>| -> Vec<ZSummary> {
        m.column_iter().map(|c| ZSummary::from_draws(c.iter().copied())).collect()
    };
    let s_test_draws = to_matrix(|d| &d.s_test);
    let u_cosine_draws = to_matrix(|d| &d.u_cos);
    let v_cosine_draws = to_matrix(|d| &d.v_cos);
    Ok(ReproducibilityReport {
        train_test: TrainTestReport {
            z: summarize(&s_test_draws),
            s_test_draws,
        },
        split_half: SplitHalfReport {
            z_u: summarize(&u_cosine_draws),
            z_v: summarize(&v_cosine_draws),
            u_cosine_draws,
            v_cosine_draws,
        },
        skipped,
    })
}

/// Train/test and split-half metrics over `n_split` random partitions.
pub fn reproducibility(
    x: &DataBlock,
    y: &DataBlock,
    method: Method,
    n_split: usize,
    seed: u64,
    policy: FailurePolicy,
) -> Result<ReproducibilityReport> {
    run(x, y, method, n_split, seed, false, policy)
}

pub fn train_test(x: &DataBlock, y: &DataBlock, method: Method, n_split: usize, seed: u64) -> Result<TrainTestReport> {
    Ok(reproducibility(x, y, method, n_split, seed, FailurePolicy::Abort)?.train_test)
}

pub fn split_half(x: &DataBlock, y: &DataBlock, method: Method, n_split: usize, seed: u64) -> Result<SplitHalfReport> {
    Ok(reproducibility(x, y, method, n_split, seed, FailurePolicy::Abort)?.split_half)
}

/// Both metrics with Y's rows permuted once per iteration before splitting.
pub fn null_calibration_with(
    x: &DataBlock,
    y: &DataBlock,
    method: Method,
    n_split: usize,
    seed: u64,
    policy: FailurePolicy,
) -> Result<ReproducibilityReport> {
    run(x, y, method, n_split, seed, true, policy)
}

pub fn null_calibration(
    x: &DataBlock,
    y: &DataBlock,
    method: Method,
    n_split: usize,
    seed: u64,
) -> Result<(TrainTestReport, SplitHalfReport)> {
    let r = null_calibration_with(x, y, method, n_split, seed, FailurePolicy::Abort)?;
    Ok((r.train_test, r.split_half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, k: usize, seed: u64, prefix: &str) -> DataBlock {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DataBlock::with_prefix(DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng)), prefix).unwrap()
    }

    #[test]
    fn halves_partition_rows() {
        for n in [4, 7, 50] {
            let h = Halves::draw(n, 9, 3);
            assert_eq!(h.train.len(), n.div_ceil(2));
            assert_eq!(h.test.len(), n / 2);
            let mut all: Vec<usize> = h.train.iter().chain(&h.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn identical_halves_reproduce_train_singular_values() {
        let x = noise(40, 4, 1, "x");
        let y = noise(40, 3, 2, "y");
        for method in [Method::Pls, Method::Cca] {
            let s = train_test_pair((&x, &y), (&x, &y), method).unwrap();
            let (_, model) = crate::decomposition::analyze(&x, &y, method).unwrap();
            for (a, b) in s.iter().zip(model.s.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_halves_give_unit_cosines() {
        let x = noise(30, 3, 4, "x");
        let y = noise(30, 2, 5, "y");
        let (u, v) = split_half_pair((&x, &y), (&x, &y), Method::Pls).unwrap();
        assert!(u.iter().chain(&v).all(|c| (c - 1.0).abs() < 1e-12));
        let z = ZSummary::from_draws(vec![u[0]; 10]);
        assert!(z.is_degenerate());
    }

    #[test]
    fn one_dimensional_y_has_unit_v_cosine() {
        let x = noise(60, 4, 6, "x");
        let y = noise(60, 1, 7, "y");
        let rep = split_half(&x, &y, Method::Pls, 25, 3).unwrap();
        assert!(rep.v_cosine_draws.iter().all(|c| (c - 1.0).abs() < 1e-12));
        assert!(rep.z_v[0].is_degenerate());
    }

    #[test]
    fn cosines_lie_in_unit_interval() {
        let x = noise(50, 5, 8, "x");
        let y = noise(50, 3, 9, "y");
        let rep = split_half(&x, &y, Method::Cca, 30, 1).unwrap();
        assert!(rep.u_cosine_draws.iter().chain(rep.v_cosine_draws.iter()).all(|&c| (0.0..=1.0 + 1e-12).contains(&c)));
    }

    #[test]
    fn skip_policy_records_failures() {
        // p = 6 with a 5-row half: Rxx is rank deficient in every half
        let x = noise(10, 6, 10, "x");
        let y = noise(10, 2, 11, "y");
        assert!(reproducibility(&x, &y, Method::Cca, 5, 0, FailurePolicy::Abort).is_err());
        let err = reproducibility(&x, &y, Method::Cca, 5, 0, FailurePolicy::Skip).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = noise(3, 1, 1, "x");
        assert!(train_test(&x, &x, Method::Pls, 5, 0).is_err());
    }
}
