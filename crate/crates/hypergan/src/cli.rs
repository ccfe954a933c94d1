//! Command-line interface: train, evaluate, sample-negatives, generate,
//! score, synth, sweep, gradcheck.
//!
//! Every run writes exactly one `manifest.json` and keeps all artifacts
//! inside its `--out` directory. Exit codes: 0 success, 1 usage, 2 I/O,
//! 3 numerical, 4 threshold failure.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use crate::diagnostics::{
    fault_injection_check, full_loss_check, run_op_checks, CheckOutcome, ComposedLoss,
    GRAD_TOLERANCE,
};
use crate::encoder::IncidenceGroups;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::generator::{decode_membership, encode_positive, one_hot, sample_noise, select_topn};
use crate::hypergraph::{
    edges_to_text, parse_edge_list_text, parse_hypergraph, split_dataset, Hypergraph, SplitSet,
};
use crate::manifest::ManifestBuilder;
use crate::rng::named_stream;
use crate::sampler::{sample_many, Method, SizeDistribution};
use crate::synthetic::{generate_synthetic, SyntheticSpec};
use crate::training::{train, Checkpoint, EpochRecord, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "hypergan", version, about = "Adversarial hyperedge prediction toolkit")]
pub struct Cli {
    /// Flat key=value config file for training hyperparameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; all artifacts land here.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the sweep grid (>1 parallelizes cells).
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train on a dataset (or a synthetic spec) and keep the
    /// best-validation checkpoint.
    Train {
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Synthetic benchmark spec (alternative to --edges/--features).
        #[arg(long)]
        synth_spec: Option<PathBuf>,
        /// Freeze the AdaIN style affines at zero (unguided ablation).
        #[arg(long)]
        no_guidance: bool,
    },
    /// Score a split's positives against SNS/MNS/CNS negatives.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Which split section to evaluate: train, valid or test.
        #[arg(long, default_value = "test")]
        split_section: String,
    },
    /// Draw heuristic negative hyperedges and emit them in edge format.
    SampleNegatives {
        #[arg(long)]
        method: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Generate negatives with a trained model, guided by training
    /// positives.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Score candidate node sets with a trained model, one per line.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Write a synthetic benchmark dataset (edge/feature/label files).
    Synth {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Train and evaluate over a (k, p) grid; emits the surface CSV.
    Sweep {
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        synth_spec: Option<PathBuf>,
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        k_grid: String,
        #[arg(long, default_value = "1,2,3,4,5")]
        p_grid: String,
    },
    /// Finite-difference validation of every op and the composed losses.
    Gradcheck {
        /// Comma-separated op filter (default: everything).
        #[arg(long)]
        ops: Option<String>,
        /// Include the deliberately broken negative control.
        #[arg(long, hide = true)]
        fault: bool,
    },
}

pub fn run(cli: Cli) -> Result<i32> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Train { edges, features, synth_spec, no_guidance } => {
            cmd_train(&cli, edges, features, synth_spec, *no_guidance)
        }
        Command::Evaluate { checkpoint, edges, features, split, split_section } => {
            cmd_evaluate(&cli, checkpoint, edges, features, split, split_section)
        }
        Command::SampleNegatives { method, count, edges, features } => {
            cmd_sample_negatives(&cli, method, *count, edges, features)
        }
        Command::Generate { checkpoint, count, edges, features, split } => {
            cmd_generate(&cli, checkpoint, *count, edges, features, split)
        }
        Command::Score { checkpoint, candidates, edges, features, split } => {
            cmd_score(&cli, checkpoint, candidates, edges, features, split)
        }
        Command::Synth { spec } => cmd_synth(&cli, spec),
        Command::Sweep { edges, features, synth_spec, k_grid, p_grid } => {
            cmd_sweep(&cli, edges, features, synth_spec, k_grid, p_grid)
        }
        Command::Gradcheck { ops, fault } => cmd_gradcheck(&cli, ops, *fault),
    }
}

fn resolve_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Load the dataset from files, or realize a synthetic spec into the out
/// directory and load that. Returns the hypergraph plus the file paths the
/// manifest should hash.
fn load_dataset(
    out: &Path,
    edges: &Option<PathBuf>,
    features: &Option<PathBuf>,
    synth_spec: &Option<PathBuf>,
) -> Result<(Hypergraph, Vec<PathBuf>)> {
    match (edges, features, synth_spec) {
        (Some(e), Some(f), None) => {
            let h = parse_hypergraph(e, f)?;
            Ok((h, vec![e.clone(), f.clone()]))
        }
        (None, None, Some(spec_path)) => {
            let spec = SyntheticSpec::from_file(spec_path)?;
            let (h, labels) = generate_synthetic(&spec)?;
            let paths = write_synthetic_files(out, &h, &labels)?;
            Ok((h, paths))
        }
        _ => Err(Error::Config(
            "provide either --edges with --features, or --synth-spec".into(),
        )),
    }
}

fn write_synthetic_files(out: &Path, h: &Hypergraph, labels: &[usize]) -> Result<Vec<PathBuf>> {
    let edges_path = out.join("edges.txt");
    let features_path = out.join("features.txt");
    let labels_path = out.join("labels.txt");
    std::fs::write(&edges_path, edges_to_text(h.edges()))?;
    let mut feat_text = String::new();
    for i in 0..h.features().rows() {
        let row: Vec<String> = h.features().row(i).iter().map(|v| v.to_string()).collect();
        feat_text.push_str(&row.join(" "));
        feat_text.push('\n');
    }
    std::fs::write(&features_path, feat_text)?;
    let label_text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&labels_path, label_text)?;
    Ok(vec![edges_path, features_path, labels_path])
}

fn cmd_train(
    cli: &Cli,
    edges: &Option<PathBuf>,
    features: &Option<PathBuf>,
    synth_spec: &Option<PathBuf>,
    no_guidance: bool,
) -> Result<i32> {
    let mut config = resolve_config(cli)?;
    if no_guidance {
        config.guidance = false;
    }
    let (h, dataset_paths) = load_dataset(&cli.out, edges, features, synth_spec)?;

    let mut split_rng = named_stream(config.seed, "split");
    let splits = split_dataset(&h, &mut split_rng)?;
    let split_path = cli.out.join("split.txt");
    splits.write(&split_path)?;

    let outcome = train(&h, &splits, &config)?;

    let metrics_path = cli.out.join("metrics.csv");
    write_metrics_csv(&metrics_path, &outcome.history)?;
    let ckpt_path = cli.out.join("checkpoint.json");
    outcome.checkpoint.save(&ckpt_path)?;

    for record in &outcome.history {
        if record.val_avg_auroc.is_some() {
            println!(
                "epoch {}: loss_d={:.4} loss_g={:.4} loss_reg={:.4} theta={:.4} val_avg_auroc={:.4}",
                record.epoch,
                record.loss_d,
                record.loss_g,
                record.loss_reg,
                record.mean_theta,
                record.val_avg_auroc.unwrap()
            );
        }
    }
    if let Some(best) = &outcome.checkpoint.best {
        println!(
            "best epoch {} with validation avg AUROC {:.4}",
            best.epoch,
            best.report.avg_auroc.unwrap_or(f64::NAN)
        );
    }

    let mut manifest = ManifestBuilder::new("train", config.seed);
    manifest.config(config.to_kv());
    for p in &dataset_paths {
        manifest.dataset(p)?;
    }
    manifest.artifact(&split_path).artifact(&metrics_path).artifact(&ckpt_path);
    manifest.write(&cli.out)?;
    Ok(0)
}

fn write_metrics_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from(EpochRecord::csv_header());
    text.push('\n');
    for record in history {
        text.push_str(&record.csv_row());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn section<'a>(splits: &'a SplitSet, name: &str) -> Result<&'a [usize]> {
    match name {
        "train" => Ok(&splits.train),
        "valid" => Ok(&splits.valid),
        "test" => Ok(&splits.test),
        other => Err(Error::Config(format!(
            "unknown split section `{other}` (train|valid|test)"
        ))),
    }
}

fn cmd_evaluate(
    cli: &Cli,
    checkpoint: &Path,
    edges: &Path,
    features: &Path,
    split: &Path,
    split_section: &str,
) -> Result<i32> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let h = parse_hypergraph(edges, features)?;
    let splits = SplitSet::read(split)?;
    let positives = section(&splits, split_section)?;
    let model = ckpt.model();
    model.check_compatible(&h)?;
    let groups = IncidenceGroups::from_edges(&h, &splits.train);
    let seed = cli.seed.unwrap_or(ckpt.config.seed);

    let evaluation = evaluate(
        |sets| model.score_sets(&h, &groups, sets),
        &h,
        positives,
        seed,
        ckpt.epoch,
    )?;

    println!("{}", serde_json::to_string(&evaluation.report)?);
    println!("{}", EvalReport::csv_header());
    println!("{}", evaluation.report.csv_row());

    let report_path = cli.out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&evaluation.report)?)?;
    let mut manifest = ManifestBuilder::new("evaluate", seed);
    manifest.config(ckpt.config.to_kv());
    manifest.dataset(edges)?;
    manifest.dataset(features)?;
    manifest.dataset(split)?;
    manifest.artifact(&report_path);
    for (name, sets) in [
        ("sns", &evaluation.negatives.sns),
        ("mns", &evaluation.negatives.mns),
        ("cns", &evaluation.negatives.cns),
    ] {
        if let Some(sets) = sets {
            let path = cli.out.join(format!("negatives-{name}.txt"));
            std::fs::write(&path, edges_to_text(sets))?;
            manifest.artifact(&path);
        }
    }
    manifest.write(&cli.out)?;
    Ok(0)
}

fn cmd_sample_negatives(
    cli: &Cli,
    method: &str,
    count: usize,
    edges: &Path,
    features: &Path,
) -> Result<i32> {
    let method: Method = method.parse()?;
    let h = parse_hypergraph(edges, features)?;
    let seed = cli.seed.unwrap_or(7);
    let sizes = SizeDistribution::from_sizes(h.edges().iter().map(Vec::len), 2);
    let mut rng = named_stream(seed, "sampler");
    let sets = sample_many(&h, method, count, &sizes, &mut rng)?;
    let text = edges_to_text(&sets);
    print!("{text}");

    let samples_path = cli.out.join("samples.txt");
    std::fs::write(&samples_path, &text)?;
    let mut manifest = ManifestBuilder::new("sample-negatives", seed);
    manifest.config(vec![
        ("method".into(), method.to_string()),
        ("count".into(), count.to_string()),
    ]);
    manifest.dataset(edges)?;
    manifest.dataset(features)?;
    manifest.artifact(&samples_path);
    manifest.write(&cli.out)?;
    Ok(0)
}

fn cmd_generate(
    cli: &Cli,
    checkpoint: &Path,
    count: usize,
    edges: &Path,
    features: &Path,
    split: &Path,
) -> Result<i32> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let h = parse_hypergraph(edges, features)?;
    let splits = SplitSet::read(split)?;
    if splits.train.is_empty() {
        return Err(Error::Parameter("split has no training positives to guide generation".into()));
    }
    let model = ckpt.model();
    model.check_compatible(&h)?;
    let seed = cli.seed.unwrap_or(ckpt.config.seed);
    let sizes = SizeDistribution::from_training_edges(&h, &splits.train, 2);
    let mut size_rng = named_stream(seed, "sampler");
    let mut noise_rng = named_stream(seed, "noise");

    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(count);
    let mut memberships = String::new();
    for j in 0..count {
        // Guiding positives cycle through the training split in order.
        let guide = splits.train[j % splits.train.len()];
        let mut tape = crate::autodiff::Tape::new();
        let gen = model.params.generator.bind(&mut tape);
        let n = sizes.sample(&mut size_rng)?;
        let onehot = tape.leaf(one_hot(h.edge(guide), h.num_nodes()));
        let latent = encode_positive(&mut tape, &gen, onehot)?;
        let z = tape.leaf(sample_noise(model.dims.noise_dim, &mut noise_rng));
        let c = decode_membership(&mut tape, &gen, latent, z)?;
        let negative = select_topn(tape.data(c).as_slice(), n)?;
        let row: Vec<String> = tape.data(c).as_slice().iter().map(|v| v.to_string()).collect();
        memberships.push_str(&row.join(","));
        memberships.push('\n');
        sets.push(negative);
    }

    let text = edges_to_text(&sets);
    print!("{text}");
    let negatives_path = cli.out.join("negatives.txt");
    let memberships_path = cli.out.join("memberships.csv");
    std::fs::write(&negatives_path, &text)?;
    std::fs::write(&memberships_path, memberships)?;

    let mut manifest = ManifestBuilder::new("generate", seed);
    manifest.config(ckpt.config.to_kv());
    manifest.dataset(edges)?;
    manifest.dataset(features)?;
    manifest.dataset(split)?;
    manifest.artifact(&negatives_path);
    manifest.artifact(&memberships_path);
    manifest.write(&cli.out)?;
    Ok(0)
}

fn cmd_score(
    cli: &Cli,
    checkpoint: &Path,
    candidates: &Path,
    edges: &Path,
    features: &Path,
    split: &Path,
) -> Result<i32> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let h = parse_hypergraph(edges, features)?;
    let splits = SplitSet::read(split)?;
    let model = ckpt.model();
    model.check_compatible(&h)?;
    let text = std::fs::read_to_string(candidates).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", candidates.display())))
    })?;
    let sets = parse_edge_list_text(&text)?;
    let groups = IncidenceGroups::from_edges(&h, &splits.train);
    let scores = model.score_sets(&h, &groups, &sets)?;

    let mut lines = String::new();
    for s in &scores {
        lines.push_str(&s.to_string());
        lines.push('\n');
    }
    print!("{lines}");
    let scores_path = cli.out.join("scores.txt");
    std::fs::write(&scores_path, lines)?;

    let seed = cli.seed.unwrap_or(ckpt.config.seed);
    let mut manifest = ManifestBuilder::new("score", seed);
    manifest.config(ckpt.config.to_kv());
    manifest.dataset(edges)?;
    manifest.dataset(features)?;
    manifest.dataset(split)?;
    manifest.dataset(candidates)?;
    manifest.artifact(&scores_path);
    manifest.write(&cli.out)?;
    Ok(0)
}

fn cmd_synth(cli: &Cli, spec_path: &Path) -> Result<i32> {
    let spec = SyntheticSpec::from_file(spec_path)?;
    let (h, labels) = generate_synthetic(&spec)?;
    let paths = write_synthetic_files(&cli.out, &h, &labels)?;
    println!(
        "wrote {} nodes, {} hyperedges, {} communities to {}",
        h.num_nodes(),
        h.num_edges(),
        spec.num_communities,
        cli.out.display()
    );
    let mut manifest = ManifestBuilder::new("synth", spec.seed);
    manifest.config(spec.to_kv());
    manifest.dataset(spec_path)?;
    for p in &paths {
        manifest.artifact(p);
    }
    manifest.write(&cli.out)?;
    Ok(0)
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub k: f64,
    pub p: f64,
    pub avg_auroc: Option<f64>,
    pub error: Option<String>,
}

/// Train + evaluate one configuration per (k, p) grid cell. Failed cells
/// (invalid hyperparameters, numerical aborts) are recorded and the sweep
/// continues. With `workers > 1` cells run on a thread pool; results keep
/// grid order either way.
pub fn run_sweep_grid(
    h: &Hypergraph,
    splits: &SplitSet,
    base: &TrainConfig,
    ks: &[f64],
    ps: &[f64],
    workers: usize,
) -> Vec<SweepCell> {
    let cells: Vec<(f64, f64)> =
        ks.iter().flat_map(|&k| ps.iter().map(move |&p| (k, p))).collect();
    let results: Mutex<Vec<Option<SweepCell>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(cells.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= cells.len() {
                    break;
                }
                let (k, p) = cells[idx];
                let cell = run_sweep_cell(h, splits, base, k, p);
                results.lock().unwrap()[idx] = Some(cell);
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|c| c.expect("every sweep cell must run"))
        .collect()
}

fn run_sweep_cell(
    h: &Hypergraph,
    splits: &SplitSet,
    base: &TrainConfig,
    k: f64,
    p: f64,
) -> SweepCell {
    let config = TrainConfig { k, p, ..base.clone() };
    let attempt = || -> Result<Option<f64>> {
        config.validate()?;
        let outcome = train(h, splits, &config)?;
        let model = outcome.checkpoint.model();
        let groups = IncidenceGroups::from_edges(h, &splits.train);
        let evaluation = evaluate(
            |sets| model.score_sets(h, &groups, sets),
            h,
            &splits.test,
            config.seed,
            outcome.checkpoint.epoch,
        )?;
        Ok(evaluation.report.avg_auroc)
    };
    match attempt() {
        Ok(avg) => SweepCell { k, p, avg_auroc: avg, error: None },
        Err(err) => SweepCell { k, p, avg_auroc: None, error: Some(err.to_string()) },
    }
}

/// Mean avg-AUROC over cells with k >= 0.4 versus cells with k < 0.4.
pub fn sweep_band_means(cells: &[SweepCell]) -> (Option<f64>, Option<f64>) {
    let mean_of = |pred: &dyn Fn(&SweepCell) -> bool| -> Option<f64> {
        let vals: Vec<f64> =
            cells.iter().filter(|c| pred(c)).filter_map(|c| c.avg_auroc).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    (mean_of(&|c| c.k >= 0.4), mean_of(&|c| c.k < 0.4))
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut text = String::from("k,p,avg_auroc,error\n");
    for cell in cells {
        let auroc = cell.avg_auroc.map(|v| v.to_string()).unwrap_or_default();
        let error = match &cell.error {
            Some(e) => format!("\"{}\"", e.replace('"', "\"\"")),
            None => String::new(),
        };
        text.push_str(&format!("{},{},{auroc},{error}\n", cell.k, cell.p));
    }
    text
}

fn parse_grid(text: &str, name: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {name} grid value `{}`", tok.trim())))
        })
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    Ok(vals)
}

fn cmd_sweep(
    cli: &Cli,
    edges: &Option<PathBuf>,
    features: &Option<PathBuf>,
    synth_spec: &Option<PathBuf>,
    k_grid: &str,
    p_grid: &str,
) -> Result<i32> {
    let config = resolve_config(cli)?;
    let (h, dataset_paths) = load_dataset(&cli.out, edges, features, synth_spec)?;
    let ks = parse_grid(k_grid, "k")?;
    let ps = parse_grid(p_grid, "p")?;

    let mut split_rng = named_stream(config.seed, "split");
    let splits = split_dataset(&h, &mut split_rng)?;
    let split_path = cli.out.join("split.txt");
    splits.write(&split_path)?;

    let cells = run_sweep_grid(&h, &splits, &config, &ks, &ps, cli.workers);
    let csv = sweep_csv(&cells);
    let csv_path = cli.out.join("sweep.csv");
    std::fs::write(&csv_path, &csv)?;

    let (high, low) = sweep_band_means(&cells);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    let summary = format!(
        "cells: {} total, {} failed\nmean avg_auroc (k >= 0.4): {}\nmean avg_auroc (k < 0.4): {}\n",
        cells.len(),
        cells.iter().filter(|c| c.error.is_some()).count(),
        fmt(high),
        fmt(low)
    );
    print!("{summary}");
    let summary_path = cli.out.join("sweep-summary.txt");
    std::fs::write(&summary_path, summary)?;

    let mut manifest = ManifestBuilder::new("sweep", config.seed);
    let mut kv = config.to_kv();
    kv.push(("k_grid".into(), k_grid.to_string()));
    kv.push(("p_grid".into(), p_grid.to_string()));
    manifest.config(kv);
    for p in &dataset_paths {
        manifest.dataset(p)?;
    }
    manifest.artifact(&split_path).artifact(&csv_path).artifact(&summary_path);
    manifest.write(&cli.out)?;
    Ok(0)
}

fn cmd_gradcheck(cli: &Cli, ops: &Option<String>, fault: bool) -> Result<i32> {
    let seed = cli.seed.unwrap_or(42);
    let only: Vec<String> = ops
        .as_deref()
        .map(|s| s.split(',').map(|t| t.trim().to_string()).collect())
        .unwrap_or_default();

    let mut checks: Vec<CheckOutcome> = run_op_checks(seed, &only)?;
    if only.is_empty() {
        for which in [
            ComposedLoss::Discriminator,
            ComposedLoss::GeneratorWithPenalty,
            ComposedLoss::Total,
        ] {
            checks.push(CheckOutcome {
                name: which.label().to_string(),
                max_rel_err: full_loss_check(seed, which)?,
            });
        }
    }
    if fault {
        checks.push(fault_injection_check());
    }

    let mut all_pass = true;
    let mut lines = String::new();
    for check in &checks {
        let status = if check.passed() { "PASS" } else { "FAIL" };
        let line = format!(
            "{:<24} max_rel_err={:.3e}  {status}",
            check.name, check.max_rel_err
        );
        println!("{line}");
        lines.push_str(&line);
        lines.push('\n');
        all_pass &= check.passed();
    }
    println!(
        "gradcheck: {} of {} checks within {GRAD_TOLERANCE:.0e}",
        checks.iter().filter(|c| c.passed()).count(),
        checks.len()
    );
    let report_path = cli.out.join("gradcheck.txt");
    std::fs::write(&report_path, lines)?;
    let mut manifest = ManifestBuilder::new("gradcheck", seed);
    manifest.artifact(&report_path);
    manifest.write(&cli.out)?;
    Ok(if all_pass { 0 } else { 4 })
}
