//! Versioned report documents, their JSON and CSV-bundle serializations, and
//! long-format plot data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::SimulationSpec;
use crate::decomposition::Method;
use crate::error::{Error, Result};
use crate::harness::{
    CellStatus, ExperimentConfig, FullSampleReport, PcaSummary, ReproducibilitySummary, SubsampleReport, SweepKind,
    WeightTable,
};
use crate::inference::BartlettRow;
use crate::io::{format_f64, write_table};
use crate::pca::StabilityTable;
use crate::stats::ZSummary;

pub const SCHEMA: &str = "crossblock-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// Effective configuration after file and flag overrides.
    pub config: ExperimentConfig,
    /// Command-specific inputs (file paths, option values).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, String>,
    /// Wall-clock creation time; absent unless requested, so reruns stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSection {
    pub method: Method,
    pub observed_s: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n_perm: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bartlett: Option<Vec<BartlettRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSection {
    pub method: Method,
    pub n_boot: usize,
    pub redraws: usize,
    pub weights: Vec<WeightTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSection {
    pub method: Method,
    pub observed: ReproducibilitySummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null: Option<ReproducibilitySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSection {
    pub spectrum: PcaSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stability: Vec<StabilityTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    pub kind: String,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SimulationSpec>,
    pub population_r2: Vec<f64>,
    pub population_canonical_correlations: Vec<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub metadata: Metadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_sample: Option<FullSampleReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub permutation: Vec<PermutationSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap: Vec<BootstrapSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reproducibility: Vec<ReproductionSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<SubsampleReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSection>,
}

impl ReportDocument {
    /// A document with metadata only.
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        ReportDocument {
            schema: SCHEMA.to_string(),
            metadata: Metadata {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                seed: config.seed,
                config: config.clone(),
                parameters: BTreeMap::new(),
                created: None,
            },
            simulation: None,
            full_sample: None,
            permutation: Vec::new(),
            bootstrap: Vec::new(),
            reproducibility: Vec::new(),
            sweeps: Vec::new(),
            pca: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDocument = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.schema != SCHEMA {
            return Err(Error::Serialization(format!("unsupported schema `{}`", doc.schema)));
        }
        Ok(doc)
    }

    fn weight_tables(&self) -> Vec<(Method, &WeightTable)> {
        let mut out = Vec::new();
        if let Some(full) = &self.full_sample {
            for a in &full.analyses {
                if let Some(d) = &a.detail {
                    out.extend(d.weights.iter().map(|w| (a.method, w)));
                }
            }
        }
        for b in &self.bootstrap {
            out.extend(b.weights.iter().map(|w| (b.method, w)));
        }
        out
    }

    /// `(method, source, summary)` for every reproducibility result.
    fn reproducibility_summaries(&self) -> Vec<(Method, &'static str, &ReproducibilitySummary)> {
        let mut out = Vec::new();
        if let Some(full) = &self.full_sample {
            for a in &full.analyses {
                if let Some(d) = &a.detail {
                    out.push((a.method, "observed", &d.reproducibility));
                    if let Some(n) = &d.null_reproducibility {
                        out.push((a.method, "null", n));
                    }
                }
            }
        }
        for r in &self.reproducibility {
            out.push((r.method, "observed", &r.observed));
            if let Some(n) = &r.null {
                out.push((r.method, "null", n));
            }
        }
        out
    }

    fn spectrum(&self) -> Option<&PcaSummary> {
        self.pca
            .as_ref()
            .map(|p| &p.spectrum)
            .or_else(|| self.full_sample.as_ref().and_then(|f| f.pca.as_ref()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvBundle,
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn z_fields(s: &ZSummary) -> [String; 3] {
    [format_f64(s.mean), format_f64(s.sd), opt(s.z)]
}

fn sweep_file(kind: SweepKind) -> &'static str {
    match kind {
        SweepKind::Detectability => "detectability.csv",
        SweepKind::FalsePositive => "false_positive.csv",
        SweepKind::NullSelfCheck => "null_self_check.csv",
        SweepKind::Reproducibility => "reproducibility_by_n.csv",
    }
}

/// Write `report.json`, or one CSV per populated table plus `metadata.csv`.
/// Returns the written paths.
pub fn write_report(doc: &ReportDocument, format: ReportFormat, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        ReportFormat::Json => {
            let path = dir.join("report.json");
            std::fs::write(&path, doc.to_json()?).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        ReportFormat::CsvBundle => write_bundle(doc, dir),
    }
}

fn write_bundle(doc: &ReportDocument, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        write_table(&path, header, &rows)?;
        written.push(path);
        Ok(())
    };

    let config = serde_json::to_string(&doc.metadata.config).map_err(|e| Error::Serialization(e.to_string()))?;
    let mut meta = vec![
        vec!["schema".to_string(), doc.schema.clone()],
        vec!["tool_version".to_string(), doc.metadata.tool_version.clone()],
        vec!["command".to_string(), doc.metadata.command.clone()],
        vec!["seed".to_string(), doc.metadata.seed.to_string()],
        vec!["config".to_string(), config],
    ];
    meta.extend(doc.metadata.parameters.iter().map(|(k, v)| vec![format!("parameter.{k}"), v.clone()]));
    if let Some(c) = &doc.metadata.created {
        meta.push(vec!["created".to_string(), c.clone()]);
    }
    emit("metadata.csv", &["key", "value"], meta)?;

    let mut sv = Vec::new();
    let mut bart = Vec::new();
    let push_bartlett = |method: Method, rows: &[BartlettRow], bart: &mut Vec<Vec<String>>| {
        for b in rows {
            bart.push(vec![
                method.to_string(),
                b.start_lv.to_string(),
                format_f64(b.chi_square),
                b.df.to_string(),
                format_f64(b.p_value),
            ]);
        }
    };
    if let Some(full) = &doc.full_sample {
        for a in &full.analyses {
            if let Some(d) = &a.detail {
                for (k, (s, p)) in d.singular_values.iter().zip(&d.p_values).enumerate() {
                    sv.push(vec![a.method.to_string(), (k + 1).to_string(), format_f64(*s), format_f64(*p), d.n_perm.to_string()]);
                }
                if let Some(b) = &d.bartlett {
                    push_bartlett(a.method, b, &mut bart);
                }
            }
        }
    }
    for s in &doc.permutation {
        for (k, (v, p)) in s.observed_s.iter().zip(&s.p_values).enumerate() {
            sv.push(vec![s.method.to_string(), (k + 1).to_string(), format_f64(*v), format_f64(*p), s.n_perm.to_string()]);
        }
        if let Some(b) = &s.bartlett {
            push_bartlett(s.method, b, &mut bart);
        }
    }
    if !sv.is_empty() {
        emit("singular_values.csv", &["method", "lv", "singular_value", "p_value", "n_perm"], sv)?;
    }
    if !bart.is_empty() {
        emit("bartlett.csv", &["method", "start_lv", "chi_square", "df", "p_value"], bart)?;
    }

    let mut repro = Vec::new();
    for (method, source, summary) in doc.reproducibility_summaries() {
        for (metric, zs) in [
            ("train-test", &summary.train_test),
            ("split-half-x", &summary.split_half_x),
            ("split-half-y", &summary.split_half_y),
        ] {
            for (k, z) in zs.iter().enumerate() {
                let mut row = vec![method.to_string(), source.to_string(), metric.to_string(), (k + 1).to_string()];
                row.extend(z_fields(z));
                repro.push(row);
            }
        }
    }
    if !repro.is_empty() {
        emit("reproducibility.csv", &["method", "source", "metric", "lv", "mean", "sd", "z"], repro)?;
    }

    let weights = weight_rows(doc);
    if !weights.is_empty() {
        emit("stable_weights.csv", &WEIGHT_HEADER, weights)?;
    }

    for sweep in &doc.sweeps {
        let mut rows = Vec::new();
        for c in &sweep.cells {
            let skipped = c.skipped.len().to_string();
            let m = c.method.to_string();
            let size = c.sample_size.to_string();
            if let CellStatus::NotRun { .. } = c.status {
                let width = if sweep.kind == SweepKind::Reproducibility { 3 } else { 1 };
                let mut row = vec![m, size, String::new()];
                row.extend(std::iter::repeat_n("NOT-RUN".to_string(), width));
                row.push(c.n_iterations.to_string());
                rows.push(row);
                continue;
            }
            for lv in &c.lvs {
                let mut row = vec![m.clone(), size.clone(), lv.lv.to_string()];
                if sweep.kind == SweepKind::Reproducibility {
                    row.extend([opt(lv.train_test_z), opt(lv.split_half_x_z), opt(lv.split_half_y_z)]);
                } else {
                    row.push(opt(lv.detectability));
                }
                row.push(skipped.clone());
                rows.push(row);
            }
            if let Some(any) = c.any_lv {
                rows.push(vec![m, size, "any".to_string(), format_f64(any), skipped]);
            }
        }
        let header: &[&str] = if sweep.kind == SweepKind::Reproducibility {
            &["method", "sample_size", "lv", "train_test_z", "split_half_x_z", "split_half_y_z", "skipped"]
        } else {
            &["method", "sample_size", "lv", "detectability", "skipped"]
        };
        emit(sweep_file(sweep.kind), header, rows)?;
    }

    if let Some(spec) = doc.spectrum() {
        emit("pca_eigenvalues.csv", &SPECTRUM_HEADER, spectrum_rows(spec))?;
    }
    if let Some(pca) = &doc.pca {
        let mut rows = Vec::new();
        for t in &pca.stability {
            for r in &t.rows {
                let mut row = vec![t.aligned.to_string(), r.sample_size.to_string(), r.pc.to_string()];
                row.extend(z_fields(&r.cosine));
                rows.push(row);
            }
        }
        if !rows.is_empty() {
            emit("pca_stability.csv", &["aligned", "sample_size", "pc", "mean", "sd", "z"], rows)?;
        }
    }
    Ok(written)
}

const WEIGHT_HEADER: [&str; 7] = ["method", "block", "variable", "lv", "lower", "upper", "stable"];
const SPECTRUM_HEADER: [&str; 3] = ["component", "eigenvalue", "variance_fraction"];

fn weight_rows(doc: &ReportDocument) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (method, w) in doc.weight_tables() {
        for (i, label) in w.labels.iter().enumerate() {
            for lv in 0..w.lower[i].len() {
                rows.push(vec![
                    method.to_string(),
                    w.block.to_string(),
                    label.clone(),
                    (lv + 1).to_string(),
                    format_f64(w.lower[i][lv]),
                    format_f64(w.upper[i][lv]),
                    w.stable[i][lv].to_string(),
                ]);
            }
        }
    }
    rows
}

fn spectrum_rows(s: &PcaSummary) -> Vec<Vec<String>> {
    s.eigenvalues
        .iter()
        .zip(&s.variance_fraction)
        .enumerate()
        .map(|(j, (v, f))| vec![(j + 1).to_string(), format_f64(*v), format_f64(*f)])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    DetectabilityBars,
    WeightIntervals,
    Eigenspectrum,
    ZDistributions,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::DetectabilityBars,
        PlotKind::WeightIntervals,
        PlotKind::Eigenspectrum,
        PlotKind::ZDistributions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::DetectabilityBars => "detectability-bars",
            PlotKind::WeightIntervals => "weight-intervals",
            PlotKind::Eigenspectrum => "eigenspectrum",
            PlotKind::ZDistributions => "z-distributions",
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown plot kind `{s}`")))
    }
}

/// Long-format table for one plot kind, or `MissingSection`.
///
/// Columns:
/// - detectability-bars: `method,N,lv,value`
/// - weight-intervals: `method,block,variable,lv,lower,upper,stable`
/// - eigenspectrum: `component,eigenvalue,variance_fraction`
/// - z-distributions: `method,source,metric,lv,draw,value`
pub fn plot_table(doc: &ReportDocument, kind: PlotKind) -> Result<(Vec<&'static str>, Vec<Vec<String>>)> {
    let missing = |s: &str| Err(Error::MissingSection(s.to_string()));
    match kind {
        PlotKind::DetectabilityBars => {
            let sweeps: Vec<&SubsampleReport> = doc.sweeps.iter().filter(|s| s.kind != SweepKind::Reproducibility).collect();
            if sweeps.is_empty() {
                return missing("detectability");
            }
            let mut rows = Vec::new();
            for s in sweeps {
                for c in s.cells.iter().filter(|c| c.status.is_completed()) {
                    for lv in &c.lvs {
                        rows.push(vec![c.method.to_string(), c.sample_size.to_string(), lv.lv.to_string(), opt(lv.detectability)]);
                    }
                }
            }
            Ok((vec!["method", "N", "lv", "value"], rows))
        }
        PlotKind::WeightIntervals => {
            let rows = weight_rows(doc);
            if rows.is_empty() {
                return missing("bootstrap");
            }
            Ok((WEIGHT_HEADER.to_vec(), rows))
        }
        PlotKind::Eigenspectrum => match doc.spectrum() {
            Some(s) => Ok((SPECTRUM_HEADER.to_vec(), spectrum_rows(s))),
            None => missing("pca"),
        },
        PlotKind::ZDistributions => {
            let summaries = doc.reproducibility_summaries();
            if summaries.is_empty() {
                return missing("reproducibility");
            }
            let mut rows = Vec::new();
            for (method, source, s) in summaries {
                for (metric, draws) in [
                    ("train-test", &s.draws.train_test),
                    ("split-half-x", &s.draws.split_half_x),
                    ("split-half-y", &s.draws.split_half_y),
                ] {
                    for (k, lv_draws) in draws.iter().enumerate() {
                        for (d, v) in lv_draws.iter().enumerate() {
                            rows.push(vec![
                                method.to_string(),
                                source.to_string(),
                                metric.to_string(),
                                (k + 1).to_string(),
                                (d + 1).to_string(),
                                format_f64(*v),
                            ]);
                        }
                    }
                }
            }
            Ok((vec!["method", "source", "metric", "lv", "draw", "value"], rows))
        }
    }
}

/// Write `<kind>.csv` into `out_dir`.
pub fn emit_plot_data(doc: &ReportDocument, kind: PlotKind, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let (header, rows) = plot_table(doc, kind)?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.csv", kind.name()));
    write_table(&path, &header, &rows)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_round_trips() {
        let doc = ReportDocument::new("fit", &ExperimentConfig::default());
        let text = doc.to_json().unwrap();
        let back = ReportDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(text.contains(SCHEMA));
        assert!(!text.contains("created"));
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = ReportDocument::new("fit", &ExperimentConfig::default())
            .to_json()
            .unwrap()
            .replace(SCHEMA, "other/9");
        assert!(ReportDocument::from_json(&text).is_err());
    }

    #[test]
    fn missing_sections_reported() {
        let doc = ReportDocument::new("fit", &ExperimentConfig::default());
        for kind in PlotKind::ALL {
            assert!(matches!(plot_table(&doc, kind), Err(Error::MissingSection(_))));
        }
    }

    #[test]
    fn plot_kind_names_parse() {
        for kind in PlotKind::ALL {
            assert_eq!(kind.name().parse::<PlotKind>().unwrap(), kind);
        }
        assert!("histogram".parse::<PlotKind>().is_err());
    }
}
