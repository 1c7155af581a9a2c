use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use prunelens_core::corruption::{
    build_suite, export_archive, ingest_archive, CorruptedDataset, CorruptionType, VariantKey,
    DEFAULT_SUITE,
};
use prunelens_core::geometry::GeometrySnapshot;
use prunelens_core::nn::checkpoint::read_manifest;
use prunelens_core::nn::{
    load_checkpoint, save_checkpoint, train, ImageShape, LabeledDataset, Network, NetworkSpec,
    TrainConfig,
};
use prunelens_core::pruning::{
    apply_mask, biprop_train, prune_by_scores, prune_magnitude, prune_random, sparsity,
    taylor_importance, BipropConfig, Prunable, PruneMask, PruneScope, DEFAULT_PRUNE_GRID,
};
use prunelens_core::registry::{
    metric_difference_select, snapshot_suite, subset_delta, Combination, Metric, Predicate,
    PruneMethod, Registry, SeverityMode, SubsetSelection, CLEAN,
};
use prunelens_core::stats::random_angle_experiment;
use prunelens_core::synth::{gaussian_blobs, prototype_images, PrototypeConfig};
use serde::Serialize;
use serde_json::json;

use crate::server;

#[derive(Debug, Parser)]
#[command(name = "prunelens", version, about = "Train, prune and inspect small classifiers")]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RegistryArg {
    /// Registry root directory.
    #[arg(long, env = "PRUNELENS_REGISTRY")]
    registry: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Synth(SynthArgs),
    /// Train a network from a spec file.
    Train(TrainArgs),
    /// Prune a checkpoint into a new checkpoint.
    Prune(PruneArgs),
    /// Build a corruption suite and write it as an archive.
    Corrupt(CorruptArgs),
    /// Compute geometry snapshots and store them in the registry.
    Snapshot(SnapshotArgs),
    /// Accuracy of one combination, or the full evaluation table.
    Eval(EvalArgs),
    /// Metric/robustness correlations of a combination.
    Correlate(CorrelateArgs),
    /// Relative margin change of a combination, optionally against another.
    MarginShift(MarginShiftArgs),
    /// Angles between random vectors by dimension.
    RandAngle(RandAngleArgs),
    /// Create a subset, or select one from a metric difference.
    Subset(SubsetArgs),
    /// Write a snapshot as JSON or CSV.
    Export(ExportArgs),
    /// Serve the registry over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Blobs,
    Prototypes,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Image side length for prototypes.
    #[arg(long, default_value_t = 12)]
    side: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Template seed for prototypes; train and test splits must share it.
    #[arg(long, default_value_t = 7)]
    template_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// NetworkSpec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory to create.
    #[arg(long)]
    out: PathBuf,
    /// TrainConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Random,
    Magnitude,
    Taylor,
    Mpt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Global,
    PerLayer,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Single prune rate.
    #[arg(long, required_unless_present = "grid")]
    rate: Option<f64>,
    /// Prune at every rate of the default grid into `<out>/rate-<r>`.
    #[arg(long, conflicts_with = "rate")]
    grid: bool,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training data, needed by taylor and mpt.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "global")]
    scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the classifier layer (always on for mpt).
    #[arg(long)]
    all_layers: bool,
    /// Also write the mask container here.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated corruption types; defaults to the standard suite.
    #[arg(long, value_delimiter = ',')]
    types: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Archive directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SnapshotArgs {
    #[command(flatten)]
    registry: RegistryArg,
    #[arg(long)]
    combo: String,
    #[arg(long)]
    ckpt: PathBuf,
    /// Clean evaluation data.
    #[arg(long)]
    data: PathBuf,
    /// Corruption archive aligned with --data.
    #[arg(long)]
    archive: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    architecture: Option<String>,
    /// Id of the dataset the model was trained on.
    #[arg(long, default_value = "train")]
    trained_on: String,
    #[arg(long)]
    created_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Aggregate,
    PerSeverity,
}

impl From<ModeArg> for SeverityMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Aggregate => SeverityMode::Aggregate,
            ModeArg::PerSeverity => SeverityMode::PerSeverity,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    registry: RegistryArg,
    /// Combination to evaluate; omit for the full table.
    #[arg(long)]
    combo: Option<String>,
    /// `clean`, a corruption type or `<type>-s<k>`.
    #[arg(long, default_value = CLEAN)]
    suite: String,
    /// Recompute predictions on this clean dataset instead of reading snapshots.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Corruption archive for recomputation.
    #[arg(long)]
    archive: Option<PathBuf>,
    #[arg(long)]
    subset: Option<String>,
    #[arg(long, value_enum, default_value = "aggregate")]
    mode: ModeArg,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    #[command(flatten)]
    registry: RegistryArg,
    #[arg(long)]
    combo: String,
}

#[derive(Debug, Args)]
struct MarginShiftArgs {
    #[command(flatten)]
    registry: RegistryArg,
    #[arg(long = "ref")]
    reference: String,
    #[arg(long = "cmp")]
    compared: Option<String>,
}

#[derive(Debug, Args)]
struct RandAngleArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 8, 32, 128, 512])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    AngleTrue,
    Length,
    Margin,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::AngleTrue => Metric::AngleTrue,
            MetricArg::Length => Metric::Length,
            MetricArg::Margin => Metric::Margin,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PredicateArg {
    Increased,
    Decreased,
    Unchanged,
    AbsAtLeast,
}

#[derive(Debug, Args)]
struct SubsetArgs {
    #[command(flatten)]
    registry: RegistryArg,
    /// Id to store the subset under; omit to only print a selection.
    #[arg(long)]
    id: Option<String>,
    /// Explicit sample ids.
    #[arg(long, value_delimiter = ',', conflicts_with = "reference")]
    ids: Vec<u64>,
    #[arg(long, default_value = "")]
    note: String,
    #[arg(long = "ref", requires_all = ["compared", "class", "metric", "predicate"])]
    reference: Option<String>,
    #[arg(long = "cmp")]
    compared: Option<String>,
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, default_value = CLEAN)]
    dataset: String,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    predicate: Option<PredicateArg>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    registry: RegistryArg,
    #[arg(long)]
    combo: String,
    #[arg(long, default_value = CLEAN)]
    dataset: String,
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: ExportFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    registry: RegistryArg,
    #[arg(long, default_value = "127.0.0.1:8787")]
    bind: SocketAddr,
    /// Origin allowed to call the API from a browser; repeatable.
    #[arg(long = "allow-origin")]
    allow_origins: Vec<String>,
}

pub(crate) fn execute(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Synth(a) => synth(a, json),
        Command::Train(a) => train_cmd(a, json),
        Command::Prune(a) => prune(a, json),
        Command::Corrupt(a) => corrupt(a, json),
        Command::Snapshot(a) => snapshot(a, json),
        Command::Eval(a) => eval(a, json),
        Command::Correlate(a) => {
            let reg = Registry::open(&a.registry.registry)?;
            let r = reg.correlations(&a.combo)?;
            emit(json, &r, || {
                format!(
                    "{}: rc_angle {:.4}  rc_l2 {:.4}  rc_margin {:.4}  (n={})",
                    a.combo, r.rc_angle, r.rc_l2, r.rc_margin, r.n
                )
            })
        }
        Command::MarginShift(a) => {
            let reg = Registry::open(&a.registry.registry)?;
            match &a.compared {
                Some(cmp) => {
                    let c = reg.compare_margin_shift(&a.reference, cmp)?;
                    emit(json, &c, || {
                        format!(
                            "{} median {:.4} (acc {:.3})\n{} median {:.4} (acc {:.3})\naccuracy gap {:.3}; {} shifts less: {}",
                            a.reference, c.reference.median, c.reference.clean_accuracy,
                            cmp, c.compared.median, c.compared.clean_accuracy,
                            c.accuracy_gap, cmp, c.compared_shifts_less
                        )
                    })
                }
                None => {
                    let s = reg.margin_shift(&a.reference)?;
                    emit(json, &s, || {
                        format!(
                            "{}: median {:.4} mean {:.4} over {} pairs ({} excluded, {} trimmed)",
                            a.reference, s.median, s.mean, s.total_pairs, s.excluded, s.trimmed_count
                        )
                    })
                }
            }
        }
        Command::RandAngle(a) => {
            let r = random_angle_experiment(&a.dims, a.pairs, a.seed)?;
            emit(json, &r, || {
                r.dims
                    .iter()
                    .map(|d| format!("d={:<5} {:.2} ± {:.2}", d.dim, d.mean_angle_deg, d.std_angle_deg))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Subset(a) => subset(a, json),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{}", human());
    }
    Ok(())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn load_data(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn synth(a: SynthArgs, json: bool) -> Result<()> {
    let data = match a.kind {
        SynthKind::Blobs => gaussian_blobs(a.n, a.classes, 3.0, 0.6, a.seed),
        SynthKind::Prototypes => {
            let cfg = PrototypeConfig {
                classes: a.classes,
                shape: ImageShape::new(a.side, a.side, a.channels),
                template_seed: a.template_seed,
                ..PrototypeConfig::default()
            };
            prototype_images(a.n, &cfg, a.seed)
        }
    };
    data.save(&a.out)?;
    emit(
        json,
        &json!({"out": a.out, "samples": data.len(), "classes": data.num_classes(), "input_dim": data.input_dim()}),
        || format!("wrote {} samples to {}", data.len(), a.out.display()),
    )
}

fn train_cmd(a: TrainArgs, json: bool) -> Result<()> {
    let spec: NetworkSpec = serde_json::from_slice(
        &std::fs::read(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?,
    )
    .with_context(|| format!("parsing {}", a.spec.display()))?;
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let data = load_data(&a.data)?;
    let net = train(&Network::new(spec)?, &data, &cfg)?;
    save_checkpoint(&net, &a.out)?;
    let accuracy = net.accuracy(&data)?;
    emit(json, &json!({"out": a.out, "train_accuracy": accuracy, "config": cfg}), || {
        format!("trained to {:.4} train accuracy, checkpoint at {}", accuracy, a.out.display())
    })
}

fn prune(a: PruneArgs, json: bool) -> Result<()> {
    let net = load_checkpoint(&a.input)?;
    let data = match (&a.data, a.method) {
        (Some(p), _) => Some(load_data(p)?),
        (None, MethodArg::Taylor | MethodArg::Mpt) => bail!("--data is required for {:?} pruning", a.method),
        (None, _) => None,
    };
    let jobs: Vec<(f64, PathBuf)> = match a.rate {
        Some(r) => vec![(r, a.out.clone())],
        None => DEFAULT_PRUNE_GRID.iter().map(|&r| (r, a.out.join(format!("rate-{r:.2}")))).collect(),
    };
    let mut reports = Vec::new();
    for (rate, out) in jobs {
        let (pruned, mask) = prune_one(&a, &net, data.as_ref(), rate)?;
        save_checkpoint(&pruned, &out)?;
        if let Some(dir) = &a.mask_out {
            let dir = if a.grid { dir.join(format!("rate-{rate:.2}")) } else { dir.clone() };
            mask.save(pruned.spec(), &dir)?;
        }
        reports.push(json!({
            "rate": rate,
            "out": out,
            "sparsity": sparsity(&mask),
            "masked": mask.masked_count(),
            "prunable": mask.prunable_count(),
            "overall_sparsity": read_manifest(&out)?.sparsity(),
        }));
    }
    let human = || {
        reports
            .iter()
            .map(|r| format!("pruned {} of {} prunable weights into {}", r["masked"], r["prunable"], r["out"]))
            .collect::<Vec<_>>()
            .join("\n")
    };
    if a.grid {
        emit(json, &reports, human)
    } else {
        emit(json, &reports[0], human)
    }
}

fn prune_one(a: &PruneArgs, net: &Network, data: Option<&LabeledDataset>, rate: f64) -> Result<(Network, PruneMask)> {
    let scope = match a.scope {
        ScopeArg::Global => PruneScope::Global,
        ScopeArg::PerLayer => PruneScope::PerLayer,
    };
    let prunable = if a.all_layers { Prunable::All } else { Prunable::default() };
    let mask = match a.method {
        MethodArg::Random => prune_random(net, rate, a.seed, &prunable)?,
        MethodArg::Magnitude => prune_magnitude(net, rate, scope, &prunable)?,
        MethodArg::Taylor => {
            let scores = taylor_importance(net, data.expect("checked by caller"))?;
            prune_by_scores(&scores, rate, scope, &prunable)?
        }
        MethodArg::Mpt => {
            let cfg = BipropConfig {
                prune_rate: rate,
                epochs: a.epochs,
                learning_rate: a.lr,
                batch_size: a.batch_size,
                seed: a.seed,
                ..BipropConfig::default()
            };
            return Ok(biprop_train(net.spec(), data.expect("checked by caller"), &cfg)?);
        }
    };
    Ok((apply_mask(net, &mask)?, mask))
}

fn parse_types(names: &[String]) -> Result<Vec<CorruptionType>> {
    if names.is_empty() {
        return Ok(DEFAULT_SUITE.to_vec());
    }
    Ok(names.iter().map(|n| n.parse()).collect::<prunelens_core::Result<Vec<_>>>()?)
}

fn corrupt(a: CorruptArgs, json: bool) -> Result<()> {
    let data = load_data(&a.data)?;
    let types = parse_types(&a.types)?;
    let suite = build_suite(&data, &types, a.seed)?;
    let manifest = export_archive(&suite, &a.out)?;
    emit(
        json,
        &json!({"out": a.out, "types": manifest.types, "variants": suite.total_variants()}),
        || format!("wrote {} variants over {} types to {}", suite.total_variants(), manifest.types.len(), a.out.display()),
    )
}

fn load_archive(path: Option<&PathBuf>, clean: &LabeledDataset) -> Result<Option<CorruptedDataset>> {
    let Some(p) = path else { return Ok(None) };
    let suite = ingest_archive(p).with_context(|| format!("loading archive {}", p.display()))?;
    suite.check_aligned(clean)?;
    Ok(Some(suite))
}

fn snapshot(a: SnapshotArgs, json: bool) -> Result<()> {
    let reg = Registry::create(&a.registry.registry)?;
    let net = load_checkpoint(&a.ckpt)?;
    let clean = load_data(&a.data)?;
    let suite = load_archive(a.archive.as_ref(), &clean)?;
    let created_at = a.created_at.unwrap_or_else(now);
    let snaps = snapshot_suite(&net, &a.combo, &clean, suite.as_ref(), created_at)?;
    let datasets: Vec<String> = if reg.contains(&a.combo) {
        let existing: BTreeSet<String> =
            reg.manifest(&a.combo)?.snapshots.into_iter().map(|s| s.dataset_id).collect();
        let mut added = Vec::new();
        for s in snaps.iter().filter(|s| !existing.contains(&s.dataset_id)) {
            reg.add_snapshot(s)?;
            added.push(s.dataset_id.clone());
        }
        added
    } else {
        let method: PruneMethod = match &a.method {
            Some(m) => m.parse()?,
            None => bail!("--method is required when registering a new combination"),
        };
        let rate = a.rate.unwrap_or(0.0);
        let architecture = a.architecture.clone().unwrap_or_else(|| {
            let sizes: Vec<String> = net.spec().layer_sizes.iter().map(usize::to_string).collect();
            format!("mlp-{}", sizes.join("-"))
        });
        let combination = Combination {
            id: a.combo.clone(),
            architecture,
            method,
            prune_rate: rate,
            dataset_id: a.trained_on.clone(),
            checkpoint: String::new(),
            clean_accuracy: snaps[0].accuracy(),
        };
        reg.register(combination, &net, &snaps, created_at)?;
        snaps.iter().map(|s| s.dataset_id.clone()).collect()
    };
    emit(json, &json!({"combination": a.combo, "added": datasets}), || {
        format!("{}: stored {} snapshots", a.combo, datasets.len())
    })
}

#[derive(Debug, Serialize)]
struct EvalReport {
    combination: String,
    suite: String,
    correct: usize,
    total: usize,
    accuracy: f64,
    recomputed: bool,
}

fn matching_datasets(suite: &str, available: impl IntoIterator<Item = String>) -> Vec<String> {
    available
        .into_iter()
        .filter(|d| {
            d == suite
                || (suite != CLEAN && VariantKey::parse_dataset_id(d).is_some_and(|k| k.corruption == suite))
        })
        .collect()
}

fn eval(a: EvalArgs, json: bool) -> Result<()> {
    let reg = Registry::open(&a.registry.registry)?;
    let subset = a.subset.as_deref().map(|id| reg.load_subset(id)).transpose()?;
    let Some(combo) = &a.combo else {
        let mode = SeverityMode::from(a.mode);
        let full = reg.evaluation_table(None, mode)?;
        let out = match &subset {
            Some(s) => {
                let sub = reg.evaluation_table(Some(s), mode)?;
                let delta = subset_delta(&full, &sub)?;
                json!({"full": full, "subset": sub, "delta": delta})
            }
            None => json!({"full": full}),
        };
        return emit(json, &out, || {
            full.rows
                .iter()
                .map(|r| {
                    let label = match r.severity {
                        Some(s) => format!("{}-s{s}", r.corruption),
                        None => r.corruption.clone(),
                    };
                    let cells: Vec<String> = r
                        .methods
                        .iter()
                        .map(|m| format!("{} {:.3}", m.method, m.max_accuracy))
                        .collect();
                    format!("{label:<20} {}", cells.join("  "))
                })
                .collect::<Vec<_>>()
                .join("\n")
        });
    };
    let keep = |id: u64| subset.as_ref().is_none_or(|s| s.contains(id));
    let (mut correct, mut total) = (0, 0);
    let recomputed = a.data.is_some();
    if let Some(path) = &a.data {
        let net = reg.load_network(combo)?;
        let clean = load_data(path)?;
        let suite = load_archive(a.archive.as_ref(), &clean)?;
        let mut sets: Vec<(String, LabeledDataset)> = vec![(CLEAN.to_string(), clean)];
        if let Some(suite) = &suite {
            for key in suite.keys() {
                sets.push((key.dataset_id(), suite.dataset(key)?));
            }
        }
        let ids: Vec<String> = sets.iter().map(|(id, _)| id.clone()).collect();
        let wanted = matching_datasets(&a.suite, ids);
        if wanted.is_empty() {
            bail!("no data for suite '{}'", a.suite);
        }
        for (_, data) in sets.iter().filter(|(id, _)| wanted.contains(id)) {
            let pred = net.predict(data.inputs())?;
            for ((&p, &l), &sid) in pred.iter().zip(data.labels()).zip(data.sample_ids()) {
                if keep(sid) {
                    total += 1;
                    correct += usize::from(p == l);
                }
            }
        }
    } else {
        let manifest = reg.manifest(combo)?;
        let wanted = matching_datasets(&a.suite, manifest.snapshots.into_iter().map(|s| s.dataset_id));
        if wanted.is_empty() {
            bail!("combination '{combo}' has no snapshot for suite '{}'", a.suite);
        }
        for d in wanted {
            let snap = reg.load_snapshot(combo, &d)?;
            for s in snap.samples.iter().filter(|s| keep(s.sample_id)) {
                total += 1;
                correct += usize::from(s.correct);
            }
        }
    }
    if total == 0 {
        bail!("no samples evaluated");
    }
    let report = EvalReport {
        combination: combo.clone(),
        suite: a.suite.clone(),
        correct,
        total,
        accuracy: correct as f64 / total as f64,
        recomputed,
    };
    emit(json, &report, || {
        format!("{} on {}: {}/{} = {:.4}", combo, a.suite, correct, total, report.accuracy)
    })
}

fn subset(a: SubsetArgs, json: bool) -> Result<()> {
    let reg = Registry::open(&a.registry.registry)?;
    let (ids, selection) = match (&a.reference, &a.compared, a.class, a.metric, a.predicate) {
        (Some(r), Some(c), Some(class), Some(metric), Some(pred)) => {
            let predicate = match pred {
                PredicateArg::Increased => Predicate::Increased,
                PredicateArg::Decreased => Predicate::Decreased,
                PredicateArg::Unchanged => Predicate::Unchanged,
                PredicateArg::AbsAtLeast => match a.threshold {
                    Some(t) => Predicate::AbsAtLeast(t),
                    None => bail!("--threshold is required with abs-at-least"),
                },
            };
            let report = reg.trajectories(r, c, class, &a.dataset)?;
            let sel = metric_difference_select(&report.pairs, metric.into(), predicate);
            (sel.sample_ids.clone(), Some(sel))
        }
        _ if !a.ids.is_empty() => (a.ids.clone(), None),
        _ => bail!("give either --ids or --ref/--cmp/--class/--metric/--predicate"),
    };
    if let Some(w) = selection.as_ref().and_then(|s| s.warning.as_ref()) {
        eprintln!("warning: {w}");
    }
    let stored = match &a.id {
        Some(id) => {
            let s = SubsetSelection::new(id.clone(), ids.clone(), a.note.clone())?;
            reg.save_subset(&s)?;
            Some(s)
        }
        None => None,
    };
    emit(json, &json!({"selection": selection, "subset": stored, "sample_ids": ids}), || match &a.id {
        Some(id) => format!("stored subset '{id}' with {} samples", ids.len()),
        None => format!("{} samples: {:?}", ids.len(), ids),
    })
}

fn export(a: ExportArgs) -> Result<()> {
    let reg = Registry::open(&a.registry.registry)?;
    let mut snap: GeometrySnapshot = reg.load_snapshot(&a.combo, &a.dataset)?;
    if let Some(c) = a.class {
        snap.samples.retain(|s| s.true_label == c);
    }
    let bytes = match a.format {
        ExportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(&snap)?;
            v.push(b'\n');
            v
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec![
                "sample_id".to_string(),
                "true_label".into(),
                "predicted_label".into(),
                "correct".into(),
                "degenerate".into(),
                "length".into(),
                "margin".into(),
            ];
            header.extend((0..snap.class_count).map(|c| format!("angle_{c}")));
            w.write_record(&header)?;
            let num = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
            for s in &snap.samples {
                let mut row = vec![
                    s.sample_id.to_string(),
                    s.true_label.to_string(),
                    s.predicted_label.to_string(),
                    s.correct.to_string(),
                    s.degenerate.to_string(),
                    num(s.length),
                    num(s.margin),
                ];
                row.extend(s.angles.iter().map(|&v| num(v)));
                w.write_record(&row)?;
            }
            w.into_inner().context("flushing csv")?
        }
    };
    match &a.out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let reg = Registry::open(&a.registry.registry)?;
    let app = server::router(reg, &a.allow_origins)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .with_context(|| format!("binding {}", a.bind))?;
        eprintln!("serving {} on http://{}", a.registry.registry.display(), listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
