use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use m3d::analysis::{mi_map_hard, pairwise_tests, subject_groups, write_mi_csv, write_tests_csv};
use m3d::config::PipelineConfig;
use m3d::data::{
    load_dataset, make_loso_splits, save_dataset_with_echo, synth_domain_shift, synth_subjects, DomainPair,
    FeatureDataset, FileFormat, SynthConfig,
};
use m3d::ensemble::write_similarity_csv;
use m3d::evaluation::{
    ablation_matrix, format_table, run_pair, write_predictions_csv, write_reports_json, write_summary_csv, Variant,
};
use m3d::export::{strip_echo, write_json};
use m3d::manifold::save_model;
use serde::Serialize;

use crate::{AnalyzeCommand, Command, ConvertArgs, LosoArgs, MiArgs, PipelineArgs, RunArgs, SynthArgs, TestsArgs};

/// A mistake in how the command was invoked: missing inputs, bad config.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<m3d::Error>(), Some(m3d::Error::Config(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("input file not found: {}", path.display())).into());
    }
    Ok(())
}

fn load(path: &Path) -> Result<FeatureDataset> {
    require_file(path)?;
    load_dataset(path, FileFormat::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path)?;
            PipelineConfig::load(path)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Convert(a) => convert(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Loso(a) => loso(a, vec![Variant::Full]),
        Command::Ablate(a) => loso(a, default_ablation()),
        Command::Analyze(AnalyzeCommand::Mi(a)) => analyze_mi(a),
        Command::Analyze(AnalyzeCommand::Tests(a)) => analyze_tests(a),
    }
}

fn convert(args: ConvertArgs) -> Result<()> {
    let ds = load(&args.input)?;
    let echo = serde_json::json!({ "command": "convert", "input": args.input }).to_string();
    save_dataset_with_echo(&ds, &args.output, FileFormat::from_path(&args.output), &echo)
        .with_context(|| format!("writing {}", args.output.display()))?;
    log::info!("wrote {} samples to {}", ds.num_samples(), args.output.display());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        n_per_class: args.n_per_class,
        class_count: args.classes,
        shift: args.shift,
        rotation: args.rotation,
        noise: args.noise,
        dim: args.dim,
        ..SynthConfig::default()
    };
    prepare_out(&args.out)?;
    let ext = if args.binary { "bin" } else { "csv" };
    let fmt = if args.binary { FileFormat::Binary } else { FileFormat::Csv };
    let echo = serde_json::json!({
        "command": "synth",
        "synth": cfg,
        "subjects": args.subjects,
        "sessions": args.sessions,
    })
    .to_string();
    let write = |ds: &FeatureDataset, name: &str| -> Result<()> {
        let path = args.out.join(format!("{name}.{ext}"));
        save_dataset_with_echo(ds, &path, fmt, &echo).with_context(|| format!("writing {}", path.display()))
    };
    match args.subjects {
        Some(subjects) => write(&synth_subjects(&cfg, subjects, args.sessions)?, "dataset")?,
        None => {
            let pair = synth_domain_shift(&cfg)?;
            write(&pair.source, "source")?;
            write(&pair.target, "target")?;
        }
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let source = load(&args.source)?;
    let target = load(&args.target)?;
    let pair = DomainPair::new(source, target)?;
    let out = &args.pipeline.out;
    prepare_out(out)?;
    let (report, outcome) = run_pair(&pair, &cfg, args.ablate)?;
    if let Some(err) = &report.folds[0].error {
        bail!("pipeline failed: {err}");
    }
    let reports = [report];
    write_outputs(out, &reports)?;
    let outcome = outcome.expect("successful folds keep their outcome");
    if args.save_model {
        match &outcome.manifold {
            Some(model) => save_model(model, &cfg.echo(), &out.join("model.bin"))?,
            None => log::warn!("variant {} has no manifold stage; no model written", args.ablate),
        }
    }
    if args.similarity {
        match &outcome.similarity {
            Some(s) => write_similarity_csv(s.as_ref(), &cfg.echo(), &out.join("similarity.csv"))?,
            None => log::warn!("consensus {} builds no similarity matrix", cfg.ensemble),
        }
    }
    print!("{}", format_table(&reports));
    Ok(())
}

fn default_ablation() -> Vec<Variant> {
    [
        "full",
        "manifold-only",
        "align-classify-only",
        "no-manifold",
        "no-ensemble",
        "fixed-mu-0",
        "fixed-mu-0.5",
        "fixed-mu-1",
        "pca-instead-of-tca",
        "ensemble-last",
        "ensemble-avg",
        "ensemble-vote",
        "ensemble-linkclue-cts-sl",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in variant names parse"))
    .collect()
}

fn loso(args: LosoArgs, default_variants: Vec<Variant>) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    if args.jobs == 0 {
        return Err(UsageError("--jobs must be at least 1".into()).into());
    }
    let ds = load(&args.data)?;
    let plan = make_loso_splits(&ds, args.protocol)?;
    let variants = args.variants.unwrap_or(default_variants);
    prepare_out(&args.pipeline.out)?;
    let reports = ablation_matrix(&ds, &plan, &cfg, &variants, args.jobs)?;
    write_outputs(&args.pipeline.out, &reports)?;
    print!("{}", format_table(&reports));
    if reports.iter().all(|r| r.completed == 0) {
        bail!("every fold failed; see report.json");
    }
    Ok(())
}

fn write_outputs(out: &Path, reports: &[m3d::evaluation::RunReport]) -> Result<()> {
    write_reports_json(reports, &out.join("report.json"))?;
    write_summary_csv(reports, &out.join("summary.csv"))?;
    write_predictions_csv(reports, &out.join("predictions.csv"))?;
    Ok(())
}

/// `(row, predicted)` pairs of one variant from a predictions file.
fn read_predictions(path: &Path, variant: Option<Variant>) -> Result<(Variant, Vec<(usize, usize)>)> {
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(strip_echo(&text).as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| UsageError(format!("{}: no `{name}` column", path.display())))
    };
    let (vc, rc, pc) = (col("variant")?, col("row")?, col("predicted")?);
    let mut chosen = variant;
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let v: Variant = rec[vc].parse()?;
        let chosen = *chosen.get_or_insert(v);
        if v != chosen {
            continue;
        }
        let parse = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .with_context(|| format!("{}: bad integer on data line {}", path.display(), line + 1))
        };
        rows.push((parse(rc)?, parse(pc)?));
    }
    match chosen {
        Some(v) if !rows.is_empty() => Ok((v, rows)),
        _ => Err(UsageError(format!("{}: no predictions for the requested variant", path.display())).into()),
    }
}

#[derive(Serialize)]
struct AnalysisEcho<'a> {
    command: &'a str,
    data: &'a PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<&'a PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<usize>,
}

fn analyze_mi(args: MiArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let (variant, preds) = read_predictions(&args.predictions, args.variant)?;
    if let Some(&(row, _)) = preds.iter().find(|(r, _)| *r >= ds.num_samples()) {
        return Err(UsageError(format!(
            "prediction row {row} out of range for {} ({} samples)",
            args.data.display(),
            ds.num_samples()
        ))
        .into());
    }
    let rows: Vec<usize> = preds.iter().map(|p| p.0).collect();
    let labels: Vec<usize> = preds.iter().map(|p| p.1).collect();
    let subset = ds.select(&rows)?;
    let mut map = mi_map_hard(subset.features(), &labels, ds.class_count(), args.k)?;
    if let Some(names) = ds.feature_names() {
        map.feature_names = names.to_vec();
    }
    prepare_out(&args.out)?;
    let echo = AnalysisEcho {
        command: "analyze mi",
        data: &args.data,
        predictions: Some(&args.predictions),
        variant: Some(variant.to_string()),
        k: Some(args.k),
        feature: None,
        class: None,
    };
    let echo_text = serde_json::to_string(&echo)?;
    write_mi_csv(&map, &echo_text, &args.out.join("mi.csv"))?;
    write_json(&args.out.join("mi.json"), &serde_json::json!({ "config": echo, "mi": map }))?;
    Ok(())
}

fn analyze_tests(args: TestsArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let groups = subject_groups(&ds, args.feature, args.class)?;
    let tests = pairwise_tests(&groups)?;
    prepare_out(&args.out)?;
    let echo = AnalysisEcho {
        command: "analyze tests",
        data: &args.data,
        predictions: None,
        variant: None,
        k: None,
        feature: args.feature,
        class: args.class,
    };
    write_tests_csv(&tests, &serde_json::to_string(&echo)?, &args.out.join("tests.csv"))?;
    write_json(&args.out.join("tests.json"), &serde_json::json!({ "config": echo, "tests": tests }))?;
    Ok(())
}
