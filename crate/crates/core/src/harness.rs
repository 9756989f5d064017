//! Experiment protocols: full-sample analysis, subsampled detectability,
//! false-positive sweeps and reproducibility by sample size.
//!
//! Every random draw is keyed by `(seed, sample size, iteration)` and results
//! are gathered by index, so a report is a pure function of the population
//! data and the configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::datagen::generate_null;
use crate::decomposition::{analyze, Method};
use crate::error::{BlockSide, Error, Result};
use crate::inference::{bartlett_test, bootstrap_ci, permutation_test, seeded_permutation, BartlettRow, PermutationEngine, WeightIntervals};
use crate::pca::{align_to_reference, component_scores, fit_pca_with, PcaModel, PcaOptions, PcaScale};
use crate::reproducibility::{null_calibration_with, reproducibility, FailurePolicy, ReproducibilityReport};
use crate::rng::{self, derive_seed, Purpose};
use crate::stats::ZSummary;

/// Replace X by its leading principal-component scores before analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaPre {
    /// Fixed component count; `None` keeps the smallest count reaching
    /// `variance_target` on the population data.
    pub n_components: Option<usize>,
    pub variance_target: f64,
    pub scale: PcaScale,
}

impl Default for PcaPre {
    fn default() -> Self {
        PcaPre {
            n_components: None,
            variance_target: 0.98,
            scale: PcaScale::Correlation,
        }
    }
}

impl PcaPre {
    fn options(&self) -> PcaOptions {
        PcaOptions {
            scale: self.scale,
            variance_target: self.variance_target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sample_sizes: Vec<usize>,
    pub n_iterations: usize,
    pub n_perm: usize,
    pub n_boot: usize,
    pub n_split: usize,
    pub methods: Vec<Method>,
    pub pca_pre: Option<PcaPre>,
    pub alpha: f64,
    pub seed: u64,
    /// Also compute the permuted-Y reproducibility null in full-sample runs.
    pub null_calibrate: bool,
    /// Worker threads; `None` uses the global pool. Never affects results,
    /// so it is read from config files but never echoed into reports.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sample_sizes: vec![500, 250, 100, 50, 20],
            n_iterations: 500,
            n_perm: 1000,
            n_boot: 1000,
            n_split: 500,
            methods: vec![Method::Pls, Method::Cca],
            pca_pre: None,
            alpha: 0.05,
            seed: 0,
            null_calibrate: false,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.n_iterations == 0 || self.n_perm == 0 || self.n_split == 0 {
            return bad("iteration, permutation and split counts must be positive".into());
        }
        if self.sample_sizes.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("thread count must be positive".into());
        }
        if let Some(pre) = &self.pca_pre {
            if pre.n_components == Some(0) {
                return bad("pca_pre.n_components must be positive".into());
            }
        }
        Ok(())
    }

    fn validate_sizes(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.sample_sizes.is_empty() {
            return Err(Error::InvalidArgument("no sample sizes configured".into()));
        }
        if let Some(&s) = self.sample_sizes.iter().find(|&&s| s > n || s < 4) {
            return Err(Error::InvalidArgument(format!("sample size {s} outside 4..={n}")));
        }
        Ok(())
    }
}

/// Run `f` on a dedicated pool with `threads` workers (global pool for `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CellStatus {
    Completed,
    NotRun { reason: String },
}

impl CellStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, CellStatus::Completed)
    }
}

/// Bootstrap intervals for one block, one row per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub block: BlockSide,
    pub labels: Vec<String>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub stable: Vec<Vec<bool>>,
}

impl WeightTable {
    pub fn new(block: BlockSide, labels: &[String], w: &WeightIntervals) -> Self {
        let rows = |m: &nalgebra::DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        WeightTable {
            block,
            labels: labels.to_vec(),
            lower: rows(&w.lower),
            upper: rows(&w.upper),
            stable: w.stable.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

/// Raw reproducibility draws, one inner vector per LV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproducibilityDraws {
    pub train_test: Vec<Vec<f64>>,
    pub split_half_x: Vec<Vec<f64>>,
    pub split_half_y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproducibilitySummary {
    pub train_test: Vec<ZSummary>,
    pub split_half_x: Vec<ZSummary>,
    pub split_half_y: Vec<ZSummary>,
    pub skipped_splits: usize,
    pub draws: ReproducibilityDraws,
}

impl From<&ReproducibilityReport> for ReproducibilitySummary {
    fn from(r: &ReproducibilityReport) -> Self {
        let cols = |m: &nalgebra::DMatrix<f64>| m.column_iter().map(|c| c.iter().copied().collect()).collect();
        ReproducibilitySummary {
            train_test: r.train_test.z.clone(),
            split_half_x: r.split_half.z_u.clone(),
            split_half_y: r.split_half.z_v.clone(),
            skipped_splits: r.skipped.len(),
            draws: ReproducibilityDraws {
                train_test: cols(&r.train_test.s_test_draws),
                split_half_x: cols(&r.split_half.u_cosine_draws),
                split_half_y: cols(&r.split_half.v_cosine_draws),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSampleDetail {
    pub singular_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n_perm: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bartlett: Option<Vec<BartlettRow>>,
    pub n_boot: usize,
    pub weights: Vec<WeightTable>,
    pub reproducibility: ReproducibilitySummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_reproducibility: Option<ReproducibilitySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAnalysis {
    pub method: Method,
    #[serde(flatten)]
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<FullSampleDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub scale: PcaScale,
    pub n_components: usize,
    pub eigenvalues: Vec<f64>,
    pub variance_fraction: Vec<f64>,
}

impl PcaSummary {
    fn new(model: &PcaModel, n_components: usize) -> Self {
        PcaSummary {
            scale: model.scale,
            n_components,
            eigenvalues: model.eigenvalues.iter().copied().collect(),
            variance_fraction: model.variance_fraction.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullSampleReport {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSummary>,
    pub analyses: Vec<MethodAnalysis>,
}

impl FullSampleReport {
    pub fn analysis(&self, method: Method) -> Option<&MethodAnalysis> {
        self.analyses.iter().find(|a| a.method == method)
    }
}

/// Population PCA used for score substitution.
struct Reduction {
    model: PcaModel,
    options: PcaOptions,
    n_components: usize,
}

impl Reduction {
    fn new(x: &DataBlock, pre: &PcaPre) -> Result<Self> {
        let options = pre.options();
        let model = fit_pca_with(x, &options)?;
        let n_components = pre.n_components.unwrap_or(model.n_kept);
        if n_components > x.k() {
            return Err(Error::InvalidArgument(format!(
                "pca_pre keeps {n_components} components of {} variables",
                x.k()
            )));
        }
        Ok(Reduction {
            model,
            options,
            n_components,
        })
    }

    fn population_scores(&self, x: &DataBlock) -> Result<DataBlock> {
        component_scores(x, &self.model, self.n_components)
    }

    /// Refit on a subsample, align to the population components, score.
    fn subsample_scores(&self, x: &DataBlock) -> Result<DataBlock> {
        let fitted = fit_pca_with(x, &self.options)?;
        let aligned = align_to_reference(&fitted, &self.model)?;
        component_scores(x, &aligned, self.n_components)
    }
}

/// Population PCA scores of X for a pre-reduced analysis.
pub fn reduce_x(x: &DataBlock, pre: &PcaPre) -> Result<(DataBlock, PcaSummary)> {
    let red = Reduction::new(x, pre)?;
    Ok((red.population_scores(x)?, PcaSummary::new(&red.model, red.n_components)))
}

fn recoverable(e: &Error) -> bool {
    e.is_numerical() || matches!(e, Error::ConstantColumn { .. })
}

fn analyze_method(x: &DataBlock, y: &DataBlock, method: Method, config: &ExperimentConfig) -> Result<FullSampleDetail> {
    let (_, model) = analyze(x, y, method)?;
    let perm = permutation_test(x, y, method, config.n_perm, derive_seed(config.seed, Purpose::Harness, &[0]))?;
    let bartlett = match method {
        Method::Cca if x.n() > x.k() + y.k() => Some(bartlett_test(&model, x.n(), x.k(), y.k())?.tests),
        _ => None,
    };
    let boot = bootstrap_ci(x, y, method, config.n_boot, derive_seed(config.seed, Purpose::Harness, &[1]))?;
    let split_seed = derive_seed(config.seed, Purpose::Harness, &[2]);
    let repro = reproducibility(x, y, method, config.n_split, split_seed, FailurePolicy::Skip)?;
    let null_reproducibility = if config.null_calibrate {
        let null = null_calibration_with(x, y, method, config.n_split, split_seed, FailurePolicy::Skip)?;
        Some(ReproducibilitySummary::from(&null))
    } else {
        None
    };
    Ok(FullSampleDetail {
        singular_values: model.s.iter().copied().collect(),
        p_values: perm.p_values,
        n_perm: config.n_perm,
        bartlett,
        n_boot: config.n_boot,
        weights: vec![
            WeightTable::new(BlockSide::X, x.labels(), &boot.x),
            WeightTable::new(BlockSide::Y, y.labels(), &boot.y),
        ],
        reproducibility: ReproducibilitySummary::from(&repro),
        null_reproducibility,
    })
}

/// Fit, permutation test, Bartlett (CCA), bootstrap intervals and
/// reproducibility for every configured method on the full data. A method
/// whose within-block matrices fail the rank guard is reported as not run.
pub fn run_full_sample(x: &DataBlock, y: &DataBlock, config: &ExperimentConfig) -> Result<FullSampleReport> {
    config.validate()?;
    if x.n() != y.n() {
        return Err(Error::ObservationMismatch { x: x.n(), y: y.n() });
    }
    with_threads(config.threads, || {
        let (x_used, pca) = match &config.pca_pre {
            Some(pre) => {
                let (scores, summary) = reduce_x(x, pre)?;
                (scores, Some(summary))
            }
            None => (x.clone(), None),
        };
        let mut analyses = Vec::new();
        for &method in &config.methods {
            let analysis = match analyze_method(&x_used, y, method, config) {
                Ok(detail) => MethodAnalysis {
                    method,
                    status: CellStatus::Completed,
                    detail: Some(detail),
                },
                Err(e) if e.is_numerical() => MethodAnalysis {
                    method,
                    status: CellStatus::NotRun { reason: e.to_string() },
                    detail: None,
                },
                Err(e) => return Err(e),
            };
            analyses.push(analysis);
        }
        Ok(FullSampleReport {
            n: x.n(),
            p: x.k(),
            q: y.k(),
            pca,
            analyses,
        })
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Detectability,
    FalsePositive,
    NullSelfCheck,
    Reproducibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedIteration {
    pub iteration: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvCell {
    /// 1-based.
    pub lv: usize,
    /// Fraction of completed iterations with `p ≤ alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectability: Option<f64>,
    /// Mean over completed iterations of the per-subsample z.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_test_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_half_x_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_half_y_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleCell {
    pub method: Method,
    pub sample_size: usize,
    #[serde(flatten)]
    pub status: CellStatus,
    pub n_iterations: usize,
    pub completed: usize,
    pub skipped: Vec<SkippedIteration>,
    pub lvs: Vec<LvCell>,
    /// Fraction of completed iterations rejecting at least one LV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub any_lv: Option<f64>,
}

impl SubsampleCell {
    fn not_run(method: Method, sample_size: usize, n_iterations: usize, reason: String) -> Self {
        SubsampleCell {
            method,
            sample_size,
            status: CellStatus::NotRun { reason },
            n_iterations,
            completed: 0,
            skipped: Vec::new(),
            lvs: Vec::new(),
            any_lv: None,
        }
    }

    pub fn lv(&self, lv: usize) -> Option<&LvCell> {
        self.lvs.iter().find(|c| c.lv == lv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleReport {
    pub kind: SweepKind,
    pub population_n: usize,
    pub p: usize,
    pub q: usize,
    pub alpha: f64,
    pub cells: Vec<SubsampleCell>,
}

impl SubsampleReport {
    pub fn cell(&self, method: Method, sample_size: usize) -> Option<&SubsampleCell> {
        self.cells.iter().find(|c| c.method == method && c.sample_size == sample_size)
    }
}

/// Distinct population rows for one subsample.
pub fn subsample_rows(n: usize, size: usize, seed: u64, iteration: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, Purpose::Subsample, &[size as u64, iteration as u64]);
    rand::seq::index::sample(&mut rng, n, size).into_vec()
}

struct Prepared<'a> {
    x: &'a DataBlock,
    y: &'a DataBlock,
    reduction: Option<Reduction>,
    /// X-side variable count seen by the analysis.
    p_eff: usize,
}

impl<'a> Prepared<'a> {
    fn new(x: &'a DataBlock, y: &'a DataBlock, config: &ExperimentConfig) -> Result<Self> {
        if x.n() != y.n() {
            return Err(Error::ObservationMismatch { x: x.n(), y: y.n() });
        }
        config.validate_sizes(x.n())?;
        let reduction = config.pca_pre.as_ref().map(|pre| Reduction::new(x, pre)).transpose()?;
        let p_eff = reduction.as_ref().map_or(x.k(), |r| r.n_components);
        Ok(Prepared { x, y, reduction, p_eff })
    }

    fn subsample(&self, rows: &[usize]) -> Result<(DataBlock, DataBlock)> {
        let xs = self.x.select_rows(rows)?;
        let xs = match &self.reduction {
            Some(r) => r.subsample_scores(&xs)?,
            None => xs,
        };
        Ok((xs, self.y.select_rows(rows)?))
    }

    /// CCA needs both within-block matrices invertible.
    fn guard(&self, method: Method, size: usize) -> Option<String> {
        let q = self.y.k();
        (method == Method::Cca && (size <= self.p_eff || size <= q)).then(|| {
            format!("CCA not run: sample size {size} does not exceed the variable count (p = {}, q = {q})", self.p_eff)
        })
    }
}

enum IterationOutcome<T> {
    Done(T),
    Skipped(String),
}

fn run_cells<T, F>(
    prep: &Prepared,
    config: &ExperimentConfig,
    kind: SweepKind,
    per_iteration: F,
    summarize: fn(&[T], f64) -> (Vec<LvCell>, Option<f64>),
) -> Result<SubsampleReport>
where
    T: Send,
    F: Fn(&DataBlock, &DataBlock, Method, u64) -> Result<T> + Sync,
{
    let n = prep.x.n();
    let mut cells = Vec::new();
    for &method in &config.methods {
        for &size in &config.sample_sizes {
            if let Some(reason) = prep.guard(method, size) {
                cells.push(SubsampleCell::not_run(method, size, config.n_iterations, reason));
                continue;
            }
            let outcomes: Vec<Result<IterationOutcome<T>>> = (0..config.n_iterations)
                .into_par_iter()
                .map(|i| {
                    let rows = subsample_rows(n, size, config.seed, i);
                    let item_seed = derive_seed(config.seed, Purpose::Harness, &[size as u64, i as u64]);
                    match prep.subsample(&rows).and_then(|(xs, ys)| per_iteration(&xs, &ys, method, item_seed)) {
                        Ok(t) => Ok(IterationOutcome::Done(t)),
                        Err(e) if recoverable(&e) => Ok(IterationOutcome::Skipped(e.to_string())),
                        Err(e) => Err(e),
                    }
                })
                .collect();
            let mut done = Vec::new();
            let mut skipped = Vec::new();
            for (iteration, o) in outcomes.into_iter().enumerate() {
                match o? {
                    IterationOutcome::Done(t) => done.push(t),
                    IterationOutcome::Skipped(reason) => skipped.push(SkippedIteration { iteration, reason }),
                }
            }
            let status = if done.is_empty() {
                CellStatus::NotRun {
                    reason: "every iteration failed the rank guard".into(),
                }
            } else {
                CellStatus::Completed
            };
            let (lvs, any_lv) = if done.is_empty() {
                (Vec::new(), None)
            } else {
                summarize(&done, config.alpha)
            };
            cells.push(SubsampleCell {
                method,
                sample_size: size,
                status,
                n_iterations: config.n_iterations,
                completed: done.len(),
                skipped,
                lvs,
                any_lv,
            });
        }
    }
    Ok(SubsampleReport {
        kind,
        population_n: n,
        p: prep.x.k(),
        q: prep.y.k(),
        alpha: config.alpha,
        cells,
    })
}

fn summarize_detectability(p_values: &[Vec<f64>], alpha: f64) -> (Vec<LvCell>, Option<f64>) {
    let completed = p_values.len() as f64;
    let r = p_values[0].len();
    let lvs = (0..r)
        .map(|k| LvCell {
            lv: k + 1,
            detectability: Some(p_values.iter().filter(|p| p[k] <= alpha).count() as f64 / completed),
            train_test_z: None,
            split_half_x_z: None,
            split_half_y_z: None,
        })
        .collect();
    let any = p_values.iter().filter(|p| p.iter().any(|&v| v <= alpha)).count() as f64 / completed;
    (lvs, Some(any))
}

fn detectability_report(prep: &Prepared, config: &ExperimentConfig, kind: SweepKind) -> Result<SubsampleReport> {
    let n_perm = config.n_perm;
    run_cells(
        prep,
        config,
        kind,
        |xs, ys, method, item_seed| {
            let engine = PermutationEngine::new(xs, ys, method)?;
            let size = xs.n();
            let res = engine.run(n_perm, |j| seeded_permutation(size, item_seed, Purpose::Permutation, &[j as u64]));
            Ok(res.p_values)
        },
        summarize_detectability,
    )
}

/// Permutation-test detectability per LV over seeded subsamples.
pub fn run_detectability(x: &DataBlock, y: &DataBlock, config: &ExperimentConfig) -> Result<SubsampleReport> {
    let prep = Prepared::new(x, y, config)?;
    with_threads(config.threads, || detectability_report(&prep, config, SweepKind::Detectability))?
}

/// Detectability on a null population (independent standard-normal blocks).
pub fn run_false_positive_sweep_with(config: &ExperimentConfig, n: usize, p: usize, q: usize) -> Result<SubsampleReport> {
    let data = generate_null(n, p, q, derive_seed(config.seed, Purpose::GenerateNull, &[]))?;
    let prep = Prepared::new(&data.x, &data.y, config)?;
    with_threads(config.threads, || detectability_report(&prep, config, SweepKind::FalsePositive))?
}

/// False-positive sweep on 10,000 observations of 10 X and 5 Y variables.
pub fn run_false_positive_sweep(config: &ExperimentConfig) -> Result<SubsampleReport> {
    run_false_positive_sweep_with(config, 10_000, 10, 5)
}

/// Detectability after permuting Y's rows once, destroying any association.
pub fn run_null_self_check(x: &DataBlock, y: &DataBlock, config: &ExperimentConfig) -> Result<SubsampleReport> {
    let perm = seeded_permutation(y.n(), config.seed, Purpose::NullSelfCheck, &[]);
    let y_null = y.select_rows(&perm)?;
    let prep = Prepared::new(x, &y_null, config)?;
    with_threads(config.threads, || detectability_report(&prep, config, SweepKind::NullSelfCheck))?
}

struct ReproducibilityZ {
    train_test: Vec<Option<f64>>,
    split_x: Vec<Option<f64>>,
    split_y: Vec<Option<f64>>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn summarize_reproducibility(draws: &[ReproducibilityZ], _alpha: f64) -> (Vec<LvCell>, Option<f64>) {
    let r = draws[0].train_test.len();
    let lvs = (0..r)
        .map(|k| LvCell {
            lv: k + 1,
            detectability: None,
            train_test_z: mean_defined(draws.iter().map(|d| d.train_test[k])),
            split_half_x_z: mean_defined(draws.iter().map(|d| d.split_x[k])),
            split_half_y_z: mean_defined(draws.iter().map(|d| d.split_y[k])),
        })
        .collect();
    (lvs, None)
}

/// Train/test and split-half z per LV, averaged over seeded subsamples.
/// Degenerate (zero-spread) z values are left out of the average.
pub fn run_reproducibility_by_n(x: &DataBlock, y: &DataBlock, config: &ExperimentConfig) -> Result<SubsampleReport> {
    let prep = Prepared::new(x, y, config)?;
    let n_split = config.n_split;
    with_threads(config.threads, || {
        run_cells(
            &prep,
            config,
            SweepKind::Reproducibility,
            |xs, ys, method, item_seed| {
                let rep = reproducibility(xs, ys, method, n_split, item_seed, FailurePolicy::Skip)?;
                let z = |v: &[ZSummary]| v.iter().map(|s| s.z).collect();
                Ok(ReproducibilityZ {
                    train_test: z(&rep.train_test.z),
                    split_x: z(&rep.split_half.z_u),
                    split_y: z(&rep.split_half.z_v),
                })
            },
            summarize_reproducibility,
        )
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_null;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            sample_sizes: vec![40, 12],
            n_iterations: 8,
            n_perm: 30,
            n_boot: 100,
            n_split: 10,
            seed: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_match_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!(c.sample_sizes, vec![500, 250, 100, 50, 20]);
        assert_eq!((c.n_iterations, c.n_perm, c.n_boot, c.n_split), (500, 1000, 1000, 500));
        assert_eq!(c.alpha, 0.05);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small_config();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.methods.clear();
        assert!(c.validate().is_err());
        let d = generate_null(30, 2, 2, 0).unwrap();
        assert!(run_detectability(&d.x, &d.y, &small_config()).is_err());
    }

    #[test]
    fn subsample_rows_are_distinct() {
        let rows = subsample_rows(100, 60, 1, 4);
        let mut sorted = rows.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 60);
        assert!(rows.iter().all(|&r| r < 100));
    }

    #[test]
    fn cca_guard_marks_cells_not_run() {
        let d = generate_null(200, 15, 3, 1).unwrap();
        let rep = run_detectability(&d.x, &d.y, &small_config()).unwrap();
        let cca_small = rep.cell(Method::Cca, 12).unwrap();
        assert!(!cca_small.status.is_completed());
        assert!(cca_small.any_lv.is_none());
        let pls_small = rep.cell(Method::Pls, 12).unwrap();
        assert!(pls_small.status.is_completed());
        for c in rep.cells.iter().filter(|c| c.status.is_completed()) {
            assert_eq!(c.completed + c.skipped.len(), c.n_iterations);
            for lv in &c.lvs {
                assert!((0.0..=1.0).contains(&lv.detectability.unwrap()));
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let d = generate_null(120, 4, 2, 2).unwrap();
        let c = small_config();
        assert_eq!(run_detectability(&d.x, &d.y, &c).unwrap(), run_detectability(&d.x, &d.y, &c).unwrap());
        let a = run_reproducibility_by_n(&d.x, &d.y, &c).unwrap();
        assert_eq!(a, run_reproducibility_by_n(&d.x, &d.y, &c).unwrap());
        assert!(a.cells.iter().all(|c| c.lvs.iter().all(|l| l.detectability.is_none())));
    }

    #[test]
    fn full_sample_reports_rank_deficient_cca_as_not_run() {
        let d = generate_null(10, 12, 2, 4).unwrap();
        let rep = run_full_sample(&d.x, &d.y, &small_config()).unwrap();
        assert!(rep.analysis(Method::Pls).unwrap().status.is_completed());
        assert!(!rep.analysis(Method::Cca).unwrap().status.is_completed());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let d = generate_null(100, 3, 2, 5).unwrap();
        let mut c = small_config();
        c.threads = Some(1);
        let one = run_detectability(&d.x, &d.y, &c).unwrap();
        c.threads = Some(3);
        assert_eq!(one, run_detectability(&d.x, &d.y, &c).unwrap());
    }
}
