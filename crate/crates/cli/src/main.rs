mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use crossblock::block::DataBlock;
use crossblock::datagen::{generate_null, generate_relevant_subspace, GeneratedDataset, SimulationSpec};
use crossblock::harness::{
    self, reduce_x, run_detectability, run_false_positive_sweep_with, run_full_sample, run_null_self_check,
    run_reproducibility_by_n, with_threads, CellStatus, ExperimentConfig, PcaPre, ReproducibilitySummary, WeightTable,
};
use crossblock::inference::{bartlett_test, bootstrap_ci, permutation_test};
use crossblock::io::{load_csv, write_csv, write_matrix_csv, CsvOptions};
use crossblock::pca::{component_scores, fit_pca_with, pca_stability_with, PcaOptions, PcaScale};
use crossblock::report::{
    emit_plot_data, write_report, BootstrapSection, PcaSection, PermutationSection, ReportDocument, ReportFormat,
    ReproductionSection, SimulationSection,
};
use crossblock::reproducibility::{null_calibration_with, reproducibility, FailurePolicy};
use crossblock::{analyze, BlockSide, Method};

use args::{Cli, Command, FormatArg, Inputs, PcaAction, Shared, SimulateKind, SweepArg};

/// Every requested analysis failed for numerical reasons.
#[derive(Debug)]
struct NotRun(String);

impl std::error::Error for NotRun {}

impl std::fmt::Display for NotRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<crossblock::Error>() {
            return if e.is_io() {
                4
            } else if e.is_numerical() {
                3
            } else {
                2
            };
        }
        if cause.is::<NotRun>() {
            return 3;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Defaults, then the config file, then flags.
fn resolve_config(shared: &Shared) -> Result<ExperimentConfig> {
    let mut config = match &shared.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(m) = shared.method {
        config.methods = m.methods();
    }
    if let Some(s) = shared.seed {
        config.seed = s;
    }
    if let Some(v) = shared.permutations {
        config.n_perm = v;
    }
    if let Some(v) = shared.bootstraps {
        config.n_boot = v;
    }
    if let Some(v) = shared.splits {
        config.n_split = v;
    }
    if let Some(v) = shared.iterations {
        config.n_iterations = v;
    }
    if let Some(v) = &shared.sample_sizes {
        config.sample_sizes = v.clone();
    }
    if let Some(v) = shared.alpha {
        config.alpha = v;
    }
    if shared.pca_components.is_some() || shared.pca_scale.is_some() {
        let mut pre = config.pca_pre.unwrap_or_default();
        if let Some(k) = shared.pca_components {
            pre.n_components = Some(k);
        }
        if let Some(s) = shared.pca_scale {
            pre.scale = s.into();
        }
        config.pca_pre = Some(pre);
    }
    if let Some(t) = shared.threads {
        config.threads = Some(t);
    }
    config.validate()?;
    Ok(config)
}

fn csv_options(no_header: bool) -> CsvOptions {
    CsvOptions {
        has_header: !no_header,
        ..CsvOptions::default()
    }
}

fn load_pair(inputs: &Inputs) -> Result<(DataBlock, DataBlock)> {
    let opts = csv_options(inputs.no_header);
    let x = load_csv(&inputs.x, &opts)?;
    let y = load_csv(&inputs.y, &opts)?;
    if x.n() != y.n() {
        return Err(crossblock::Error::ObservationMismatch { x: x.n(), y: y.n() }.into());
    }
    Ok((x, y))
}

fn input_params(doc: &mut ReportDocument, inputs: &Inputs) {
    doc.metadata.parameters.insert("x".into(), inputs.x.display().to_string());
    doc.metadata.parameters.insert("y".into(), inputs.y.display().to_string());
}

/// Apply the configured PCA pre-reduction to X.
fn maybe_reduce(x: DataBlock, config: &ExperimentConfig) -> Result<DataBlock> {
    Ok(match &config.pca_pre {
        Some(pre) => reduce_x(&x, pre)?.0,
        None => x,
    })
}

fn finish(doc: ReportDocument, shared: &Shared) -> Result<()> {
    let mut doc = doc;
    if shared.stamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc.metadata.created = Some(format!("unix:{secs}"));
    }
    let format = match shared.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::CsvBundle,
    };
    for path in write_report(&doc, format, &shared.out_dir)? {
        println!("wrote {}", path.display());
    }
    for &kind in &shared.plot {
        let path = emit_plot_data(&doc, kind.into(), &shared.out_dir)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let shared = &cli.shared;
    let config = resolve_config(shared)?;
    // the pool is installed here; nested harness calls reuse it
    let threads = config.threads;
    let mut inner = config.clone();
    inner.threads = None;
    with_threads(threads, || dispatch(&cli.command, shared, &inner))?
}

fn dispatch(command: &Command, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    match command {
        Command::Simulate { kind } => simulate(kind, shared, config),
        Command::Fit { inputs, null_calibrate } => fit(inputs, *null_calibrate, shared, config),
        Command::Permute { inputs } => permute(inputs, shared, config),
        Command::Bootstrap { inputs } => bootstrap(inputs, shared, config),
        Command::Reproduce { inputs, null_calibrate } => reproduce(inputs, *null_calibrate, shared, config),
        Command::Sweep { kind } => sweep(kind, shared, config),
        Command::Pca { action } => pca(action, shared, config),
        Command::Plot { report, kind } => plot(report, kind, shared),
    }
}

fn simulate(kind: &SimulateKind, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let (label, data): (&str, GeneratedDataset) = match kind {
        SimulateKind::Null { n, p, q } => ("null", generate_null(*n, *p, *q, config.seed)?),
        SimulateKind::Subspace { n, spec } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str::<SimulationSpec>(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
                }
                None => SimulationSpec::two_component(*n, config.seed),
            };
            ("subspace", generate_relevant_subspace(&spec)?)
        }
    };
    let dir = &shared.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| crossblock::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let files = ["x.csv", "y.csv", "truth_covariance.csv"];
    write_csv(dir.join(files[0]), &data.x)?;
    write_csv(dir.join(files[1]), &data.y)?;
    let labels: Vec<String> = data.x.labels().iter().chain(data.y.labels()).cloned().collect();
    write_matrix_csv(dir.join(files[2]), &labels, &data.truth.joint_covariance())?;
    for f in files {
        println!("wrote {}", dir.join(f).display());
    }

    let mut doc = ReportDocument::new("simulate", config);
    doc.simulation = Some(SimulationSection {
        kind: label.to_string(),
        n: data.x.n(),
        p: data.x.k(),
        q: data.y.k(),
        spec: data.truth.spec.clone(),
        population_r2: data.truth.population_r2(),
        population_canonical_correlations: data.truth.canonical_correlations(),
        files: files.iter().map(|f| f.to_string()).collect(),
    });
    finish(doc, shared)
}

fn fit(inputs: &Inputs, null_calibrate: bool, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let (x, y) = load_pair(inputs)?;
    let mut cfg = config.clone();
    cfg.null_calibrate |= null_calibrate;
    let report = run_full_sample(&x, &y, &cfg)?;
    let mut failures = Vec::new();
    for a in &report.analyses {
        match (&a.status, &a.detail) {
            (CellStatus::Completed, Some(d)) => {
                println!("{}:", a.method);
                for (k, (s, p)) in d.singular_values.iter().zip(&d.p_values).enumerate() {
                    let tt = d.reproducibility.train_test[k].z;
                    let sx = d.reproducibility.split_half_x[k].z;
                    let sy = d.reproducibility.split_half_y[k].z;
                    println!(
                        "  LV{}  s = {s:.4}  p = {p:.3}  train/test z = {}  split-half z = ({}, {})",
                        k + 1,
                        show(tt),
                        show(sx),
                        show(sy)
                    );
                }
                if let Some(b) = &d.bartlett {
                    for row in b {
                        println!(
                            "  Bartlett LV{}+  chi2({}) = {:.2}  p = {:.3}",
                            row.start_lv, row.df, row.chi_square, row.p_value
                        );
                    }
                }
            }
            (CellStatus::NotRun { reason }, _) => {
                eprintln!("warning: {} not run: {reason}", a.method);
                failures.push(format!("{}: {reason}", a.method));
            }
            _ => {}
        }
    }
    let mut doc = ReportDocument::new("fit", &cfg);
    input_params(&mut doc, inputs);
    let all_failed = failures.len() == report.analyses.len();
    doc.full_sample = Some(report);
    finish(doc, shared)?;
    if all_failed {
        bail!(NotRun(failures.join("; ")));
    }
    Ok(())
}

fn show(z: Option<f64>) -> String {
    z.map_or_else(|| "degenerate".to_string(), |v| format!("{v:.2}"))
}

/// Run `f` per method, skipping methods that fail numerically unless all do.
fn per_method<T>(config: &ExperimentConfig, mut f: impl FnMut(Method) -> crossblock::Result<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for &m in &config.methods {
        match f(m) {
            Ok(t) => out.push(t),
            Err(e) if e.is_numerical() => {
                eprintln!("warning: {m} not run: {e}");
                failures.push(format!("{m}: {e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        bail!(NotRun(failures.join("; ")));
    }
    Ok(out)
}

fn permute(inputs: &Inputs, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let (x, y) = load_pair(inputs)?;
    let x = maybe_reduce(x, config)?;
    let sections = per_method(config, |method| {
        let res = permutation_test(&x, &y, method, config.n_perm, config.seed)?;
        let bartlett = if method == Method::Cca && x.n() > x.k() + y.k() {
            let (_, model) = analyze(&x, &y, method)?;
            Some(bartlett_test(&model, x.n(), x.k(), y.k())?.tests)
        } else {
            None
        };
        Ok(PermutationSection {
            method,
            observed_s: res.observed_s,
            p_values: res.p_values,
            n_perm: res.n_perm,
            bartlett,
        })
    })?;
    for s in &sections {
        println!("{}:", s.method);
        for (k, (v, p)) in s.observed_s.iter().zip(&s.p_values).enumerate() {
            println!("  LV{}  s = {v:.4}  p = {p:.3}", k + 1);
        }
    }
    let mut doc = ReportDocument::new("permute", config);
    input_params(&mut doc, inputs);
    doc.permutation = sections;
    finish(doc, shared)
}

fn bootstrap(inputs: &Inputs, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let (x, y) = load_pair(inputs)?;
    let x = maybe_reduce(x, config)?;
    let sections = per_method(config, |method| {
        let res = bootstrap_ci(&x, &y, method, config.n_boot, config.seed)?;
        Ok(BootstrapSection {
            method,
            n_boot: res.n_boot,
            redraws: res.redraws,
            weights: vec![
                WeightTable::new(BlockSide::X, x.labels(), &res.x),
                WeightTable::new(BlockSide::Y, y.labels(), &res.y),
            ],
        })
    })?;
    for s in &sections {
        let stable: usize = s.weights.iter().flat_map(|w| w.stable.iter().flatten()).filter(|&&b| b).count();
        let total: usize = s.weights.iter().flat_map(|w| w.stable.iter().flatten()).count();
        println!("{}: {stable} of {total} scaled weights have intervals excluding zero", s.method);
    }
    let mut doc = ReportDocument::new("bootstrap", config);
    input_params(&mut doc, inputs);
    doc.bootstrap = sections;
    finish(doc, shared)
}

fn reproduce(inputs: &Inputs, null_calibrate: bool, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let (x, y) = load_pair(inputs)?;
    let x = maybe_reduce(x, config)?;
    let sections = per_method(config, |method| {
        let obs = reproducibility(&x, &y, method, config.n_split, config.seed, FailurePolicy::Skip)?;
        let null = if null_calibrate {
            let n = null_calibration_with(&x, &y, method, config.n_split, config.seed, FailurePolicy::Skip)?;
            Some(ReproducibilitySummary::from(&n))
        } else {
            None
        };
        Ok(ReproductionSection {
            method,
            observed: ReproducibilitySummary::from(&obs),
            null,
        })
    })?;
    for s in &sections {
        println!("{}:", s.method);
        for k in 0..s.observed.train_test.len() {
            let line = |r: &ReproducibilitySummary| {
                format!(
                    "train/test z = {}  split-half z = ({}, {})",
                    show(r.train_test[k].z),
                    show(r.split_half_x[k].z),
                    show(r.split_half_y[k].z)
                )
            };
            println!("  LV{}  {}", k + 1, line(&s.observed));
            if let Some(n) = &s.null {
                println!("       null: {}", line(n));
            }
        }
    }
    let mut doc = ReportDocument::new("reproduce", config);
    input_params(&mut doc, inputs);
    if null_calibrate {
        doc.metadata.parameters.insert("null_calibrate".into(), "true".into());
    }
    doc.reproducibility = sections;
    finish(doc, shared)
}

fn print_sweep(report: &harness::SubsampleReport) {
    println!("{:?} (alpha = {}):", report.kind, report.alpha);
    for c in &report.cells {
        match &c.status {
            CellStatus::NotRun { reason } => println!("  {} N={}: NOT-RUN ({reason})", c.method, c.sample_size),
            CellStatus::Completed => {
                let cells: Vec<String> = c
                    .lvs
                    .iter()
                    .map(|l| match l.detectability {
                        Some(d) => format!("LV{} {d:.3}", l.lv),
                        None => format!(
                            "LV{} tt {} sh ({}, {})",
                            l.lv,
                            show(l.train_test_z),
                            show(l.split_half_x_z),
                            show(l.split_half_y_z)
                        ),
                    })
                    .collect();
                let any = c.any_lv.map(|a| format!("  any {a:.3}")).unwrap_or_default();
                println!(
                    "  {} N={}: {}{any}  ({} skipped)",
                    c.method,
                    c.sample_size,
                    cells.join("  "),
                    c.skipped.len()
                );
            }
        }
    }
}

fn sweep(kind: &SweepArg, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let mut doc = ReportDocument::new("sweep", config);
    match kind {
        SweepArg::Detectability { inputs, null_check } => {
            let (x, y) = load_pair(inputs)?;
            input_params(&mut doc, inputs);
            doc.sweeps.push(run_detectability(&x, &y, config)?);
            if *null_check {
                doc.sweeps.push(run_null_self_check(&x, &y, config)?);
            }
        }
        SweepArg::FalsePositive { n, p, q } => {
            for (k, v) in [("n", n), ("p", p), ("q", q)] {
                doc.metadata.parameters.insert(k.into(), v.to_string());
            }
            doc.sweeps.push(run_false_positive_sweep_with(config, *n, *p, *q)?);
        }
        SweepArg::Reproducibility { inputs } => {
            let (x, y) = load_pair(inputs)?;
            input_params(&mut doc, inputs);
            doc.sweeps.push(run_reproducibility_by_n(&x, &y, config)?);
        }
    }
    doc.sweeps.iter().for_each(print_sweep);
    finish(doc, shared)
}

fn pca(action: &PcaAction, shared: &Shared, config: &ExperimentConfig) -> Result<()> {
    let (PcaAction::Fit { input } | PcaAction::Scores { input } | PcaAction::Stability { input }) = action;
    let x = load_csv(&input.x, &csv_options(input.no_header))?;
    let pre = config.pca_pre.unwrap_or(PcaPre {
        variance_target: input.variance_target,
        ..PcaPre::default()
    });
    let options = PcaOptions {
        scale: pre.scale,
        variance_target: input.variance_target,
    };
    let model = fit_pca_with(&x, &options)?;
    let n_components = pre.n_components.unwrap_or(model.n_kept);
    let (_, spectrum) = reduce_x(
        &x,
        &PcaPre {
            n_components: Some(n_components),
            variance_target: input.variance_target,
            scale: pre.scale,
        },
    )?;

    let mut doc = ReportDocument::new("pca", config);
    doc.metadata.parameters.insert("x".into(), input.x.display().to_string());
    let scale_name = match pre.scale {
        PcaScale::Correlation => "correlation",
        PcaScale::Covariance => "covariance",
    };
    println!(
        "{} components reach {:.1}% of the variance ({scale_name} scale); keeping {n_components}",
        model.n_kept,
        100.0 * model.variance_fraction[model.n_kept - 1],
    );
    let mut stability = Vec::new();
    match action {
        PcaAction::Fit { .. } => {
            for (j, (v, f)) in model.eigenvalues.iter().zip(&model.variance_fraction).enumerate() {
                println!("  PC{}  eigenvalue = {v:.4}  cumulative = {f:.4}", j + 1);
            }
        }
        PcaAction::Scores { .. } => {
            let scores = component_scores(&x, &model, n_components)?;
            let path = shared.out_dir.join("scores.csv");
            ensure_dir(&shared.out_dir)?;
            write_csv(&path, &scores)?;
            println!("wrote {}", path.display());
        }
        PcaAction::Stability { .. } => {
            for aligned in [true, false] {
                let table = pca_stability_with(
                    &x,
                    &config.sample_sizes,
                    config.n_iterations,
                    n_components,
                    aligned,
                    config.seed,
                    &options,
                )?;
                println!("{}:", if aligned { "aligned" } else { "unaligned" });
                for r in &table.rows {
                    println!("  N={} PC{}  cosine z = {}", r.sample_size, r.pc, show(r.cosine.z));
                }
                stability.push(table);
            }
        }
    }
    doc.pca = Some(PcaSection {
        spectrum,
        stability,
    });
    finish(doc, shared)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        crossblock::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn plot(report: &PathBuf, kinds: &[args::PlotArg], shared: &Shared) -> Result<()> {
    let text = std::fs::read_to_string(report).map_err(|e| crossblock::Error::Io {
        path: report.clone(),
        source: e,
    })?;
    let doc = ReportDocument::from_json(&text)?;
    for &kind in kinds {
        let path = emit_plot_data(&doc, kind.into(), &shared.out_dir)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let numerical = anyhow::Error::from(crossblock::Error::NotPositiveDefinite { eigenvalue: -1.0 });
        assert_eq!(exit_code(&numerical), 3);
        let io = anyhow::Error::from(crossblock::Error::EmptyFile { path: "a.csv".into() });
        assert_eq!(exit_code(&io), 2);
        let missing = crossblock::Error::Io {
            path: "a.csv".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(exit_code(&anyhow::Error::from(missing).context("loading")), 4);
        assert_eq!(exit_code(&anyhow::anyhow!(NotRun("cca".into()))), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), 2);
    }

    #[test]
    fn describe_skips_repeated_causes() {
        let e = anyhow::Error::from(crossblock::Error::Io {
            path: "a.csv".into(),
            source: std::io::Error::other("gone"),
        });
        assert_eq!(describe(&e), "a.csv: gone");
        assert_eq!(describe(&e.context("reading input")), "reading input: a.csv: gone");
    }
}
