//! Principal components of a single block: fitting, score substitution,
//! reflection alignment and subsample stability.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{center_columns, gram, zscore_columns, DataBlock};
use crate::decomposition::diagonal_cosines;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};
use crate::stats::ZSummary;

/// Matrix the components are extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaScale {
    /// Correlation matrix of the z-scored columns.
    #[default]
    Correlation,
    /// Covariance matrix of the centered columns.
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    pub scale: PcaScale,
    /// `n_kept` is the smallest count whose cumulative variance fraction
    /// reaches this target.
    pub variance_target: f64,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions {
            scale: PcaScale::Correlation,
            variance_target: 0.98,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcaModel {
    /// `k × k`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    /// Non-increasing, non-negative.
    pub eigenvalues: DVector<f64>,
    /// Cumulative explained-variance ratios.
    pub variance_fraction: Vec<f64>,
    pub n_kept: usize,
    pub scale: PcaScale,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `eigenvectors · diag(eigenvalues) · eigenvectorsᵗ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }
}

fn scaled(block: &DataBlock, scale: PcaScale) -> Result<DMatrix<f64>> {
    Ok(match scale {
        PcaScale::Correlation => zscore_columns(block)?.into_values(),
        PcaScale::Covariance => center_columns(block).into_values(),
    })
}

/// PCA with default options (correlation scale, 98% variance target).
pub fn fit_pca(block: &DataBlock) -> Result<PcaModel> {
    fit_pca_with(block, &PcaOptions::default())
}

pub fn fit_pca_with(block: &DataBlock, options: &PcaOptions) -> Result<PcaModel> {
    if !(options.variance_target > 0.0 && options.variance_target <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance target must lie in (0, 1], got {}",
            options.variance_target
        )));
    }
    let m = gram(&scaled(block, options.scale)?);
    Ok(model_from_matrix(&m, options))
}

pub(crate) fn model_from_matrix(m: &DMatrix<f64>, options: &PcaOptions) -> PcaModel {
    let (values, mut vectors) = linalg::sym_eigen_desc(m);
    linalg::orient_columns(&mut vectors);
    let eigenvalues = values.map(|v| v.max(0.0));
    let total: f64 = eigenvalues.sum();
    let mut acc = 0.0;
    let mut variance_fraction: Vec<f64> = eigenvalues
        .iter()
        .map(|v| {
            acc += v;
            acc / total
        })
        .collect();
    if let Some(last) = variance_fraction.last_mut() {
        *last = 1.0;
    }
    let n_kept = variance_fraction
        .iter()
        .position(|&f| f >= options.variance_target - 1e-12)
        .map_or(eigenvalues.len(), |i| i + 1);
    PcaModel {
        eigenvectors: vectors,
        eigenvalues,
        variance_fraction,
        n_kept,
        scale: options.scale,
    }
}

/// Scores on the first `n_keep` components, re-standardized to unit variance
/// so the returned block's correlation matrix is the identity.
pub fn component_scores(block: &DataBlock, model: &PcaModel, n_keep: usize) -> Result<DataBlock> {
    if block.k() != model.k() {
        return Err(Error::ShapeMismatch(format!(
            "block has {} columns, PCA model has {}",
            block.k(),
            model.k()
        )));
    }
    if n_keep == 0 || n_keep > model.k() {
        return Err(Error::InvalidArgument(format!(
            "n_keep must lie in 1..={}, got {n_keep}",
            model.k()
        )));
    }
    let scores = scaled(block, model.scale)? * model.eigenvectors.columns(0, n_keep);
    let labels = (1..=n_keep).map(|i| format!("PC{i}")).collect();
    zscore_columns(&DataBlock::from_parts_unchecked(scores, labels))
}

/// Flip eigenvector columns so each has a non-negative cosine with the
/// matching reference column. Order is never changed.
pub fn align_to_reference(model: &PcaModel, reference: &PcaModel) -> Result<PcaModel> {
    if model.eigenvectors.shape() != reference.eigenvectors.shape() {
        return Err(Error::ShapeMismatch(format!(
            "PCA model {:?} vs reference {:?}",
            model.eigenvectors.shape(),
            reference.eigenvectors.shape()
        )));
    }
    let mut aligned = model.clone();
    for (j, c) in diagonal_cosines(&reference.eigenvectors, &model.eigenvectors).into_iter().enumerate() {
        if c < 0.0 {
            aligned.eigenvectors.column_mut(j).neg_mut();
        }
    }
    Ok(aligned)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub sample_size: usize,
    /// 1-based component index.
    pub pc: usize,
    pub cosine: ZSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub aligned: bool,
    pub n_iter: usize,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    pub fn get(&self, sample_size: usize, pc: usize) -> Option<&StabilityRow> {
        self.rows.iter().find(|r| r.sample_size == sample_size && r.pc == pc)
    }
}

/// Cosine between population and subsample eigenvectors, summarized as
/// mean/sd over `n_iter` subsamples per size.
///
/// Without alignment, each subsample eigenvector keeps an arbitrary
/// orientation (an independent seeded sign per iteration and component), as
/// an eigen-solver gives no sign guarantee.
pub fn pca_stability(
    population: &DataBlock,
    sample_sizes: &[usize],
    n_iter: usize,
    n_pc: usize,
    with_alignment: bool,
    seed: u64,
) -> Result<StabilityTable> {
    pca_stability_with(population, sample_sizes, n_iter, n_pc, with_alignment, seed, &PcaOptions::default())
}

pub fn pca_stability_with(
    population: &DataBlock,
    sample_sizes: &[usize],
    n_iter: usize,
    n_pc: usize,
    with_alignment: bool,
    seed: u64,
    options: &PcaOptions,
) -> Result<StabilityTable> {
    let n = population.n();
    if let Some(&bad) = sample_sizes.iter().find(|&&s| s < 2 || s > n) {
        return Err(Error::InvalidArgument(format!("sample size {bad} outside 2..={n}")));
    }
    if n_pc == 0 || n_pc > population.k() {
        return Err(Error::InvalidArgument(format!(
            "n_pc must lie in 1..={}, got {n_pc}",
            population.k()
        )));
    }
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
    }
    let reference = fit_pca_with(population, options)?;
    let mut rows = Vec::new();
    for &size in sample_sizes {
        let draws: Vec<Result<Vec<f64>>> = (0..n_iter)
            .into_par_iter()
            .map(|i| {
                let path = [size as u64, i as u64];
                let mut rng = rng::stream(seed, Purpose::Subsample, &path);
                let idx = rand::seq::index::sample(&mut rng, n, size).into_vec();
                let model = fit_pca_with(&population.select_rows(&idx)?, options)?;
                let model = if with_alignment {
                    align_to_reference(&model, &reference)?
                } else {
                    let mut signs = rng::stream(seed, Purpose::Reflection, &path);
                    let mut m = model;
                    for j in 0..n_pc {
                        if signs.random::<bool>() {
                            m.eigenvectors.column_mut(j).neg_mut();
                        }
                    }
                    m
                };
                let cos = diagonal_cosines(&reference.eigenvectors, &model.eigenvectors);
                Ok(cos[..n_pc].to_vec())
            })
            .collect();
        let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
        for pc in 0..n_pc {
            rows.push(StabilityRow {
                sample_size: size,
                pc: pc + 1,
                cosine: ZSummary::from_draws(draws.iter().map(|d| d[pc])),
            });
        }
    }
    Ok(StabilityTable {
        aligned: with_alignment,
        n_iter,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, k: usize, seed: u64) -> DataBlock {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DataBlock::with_prefix(DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng)), "x").unwrap()
    }

    #[test]
    fn perfectly_correlated_pair() {
        let b = DataBlock::with_prefix(
            DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 5.0, 10.0]),
            "x",
        )
        .unwrap();
        let m = fit_pca(&b).unwrap();
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(m.eigenvalues[1].abs() < 1e-12);
        assert_eq!(m.n_kept, 1);
    }

    #[test]
    fn model_invariants() {
        let b = noise(80, 6, 1);
        let m = fit_pca(&b).unwrap();
        let orth = (m.eigenvectors.transpose() * &m.eigenvectors - DMatrix::<f64>::identity(6, 6)).amax();
        assert!(orth < 1e-8);
        assert!(m.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert!(m.variance_fraction.windows(2).all(|w| w[0] <= w[1]));
        assert!((m.variance_fraction[5] - 1.0).abs() < 1e-10);
        let r = gram(&zscore_columns(&b).unwrap().into_values());
        assert!((m.reconstruct() - r).amax() < 1e-8);
    }

    #[test]
    fn full_scores_are_uncorrelated() {
        let b = noise(60, 5, 2);
        let m = fit_pca(&b).unwrap();
        let s = component_scores(&b, &m, 5).unwrap();
        let r = gram(s.values());
        assert!((r - DMatrix::<f64>::identity(5, 5)).amax() < 1e-8);
        let one = component_scores(&b, &m, 1).unwrap();
        assert_eq!(one.k(), 1);
        assert!((gram(one.values())[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(component_scores(&b, &m, 6).is_err());
        assert!(component_scores(&b, &m, 0).is_err());
    }

    #[test]
    fn alignment_flips_only_negated_columns() {
        let b = noise(50, 4, 3);
        let reference = fit_pca(&b).unwrap();
        let same = align_to_reference(&reference, &reference).unwrap();
        assert_eq!(same.eigenvectors, reference.eigenvectors);
        let mut flipped = reference.clone();
        flipped.eigenvectors.column_mut(0).neg_mut();
        let back = align_to_reference(&flipped, &reference).unwrap();
        assert_eq!(back.eigenvectors, reference.eigenvectors);
        let other = fit_pca(&noise(50, 3, 4)).unwrap();
        assert!(align_to_reference(&other, &reference).is_err());
    }

    #[test]
    fn covariance_scale_tracks_variances() {
        let mut b = noise(4000, 3, 5).into_values();
        b.column_mut(0).scale_mut(3.0);
        let b = DataBlock::with_prefix(b, "x").unwrap();
        let m = fit_pca_with(
            &b,
            &PcaOptions {
                scale: PcaScale::Covariance,
                variance_target: 0.98,
            },
        )
        .unwrap();
        assert!((m.eigenvalues[0] - 9.0).abs() < 0.6);
        assert!(m.eigenvectors[(0, 0)].abs() > 0.99);
    }

    #[test]
    fn stability_is_deterministic() {
        let b = noise(200, 4, 6);
        let a = pca_stability(&b, &[50, 20], 30, 2, true, 9).unwrap();
        let c = pca_stability(&b, &[50, 20], 30, 2, true, 9).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.rows.len(), 4);
        assert!(a.get(20, 2).is_some());
        assert!(pca_stability(&b, &[201], 3, 1, true, 0).is_err());
    }
}
