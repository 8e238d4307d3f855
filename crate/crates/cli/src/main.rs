//! `mvscreen`: run the screen-exposure pipeline or any single stage of it.
//!
//! Exit codes: 0 success, 1 validation or input error, 2 caption provider failure.

mod config;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mvscreen_core::ingest;
use mvscreen_core::pipeline::{self, PipelineConfig, PipelineError, DESCRIPTIONS_FILE, GROUPS_FILE, VERDICTS_FILE};
use mvscreen_core::synth::{self, SynthConfig};
use mvscreen_core::{MultiViewGroup, SceneDescription, ScreenVerdict};

use crate::config::Overrides;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nembedding format: EMB1\nmanifest format: v1"
);

#[derive(Parser)]
#[command(name = "mvscreen", version, long_version = LONG_VERSION, about = "Multi-view screen exposure pipeline")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the manifest and embedding file against each other.
    IngestCheck,
    /// Build the similarity graph and select multi-view groups.
    SelectViews,
    /// Describe each selected group with the configured provider.
    Caption,
    /// Map descriptions to screen types.
    Identify,
    /// Score verdicts against manifest labels with k-fold splits.
    Evaluate,
    /// Write per-type CSV, PCA projection and graph summary.
    Report,
    /// Run every stage in order.
    Run,
    /// Write a synthetic manifest and embedding file with planted scenes.
    Synth {
        #[arg(long, default_value = "synthetic")]
        dir: std::path::PathBuf,
        #[arg(long, default_value_t = 20)]
        scenes_per_type: usize,
        #[arg(long, default_value_t = 0)]
        nonscreen_scenes: usize,
        #[arg(long = "synth-seed", default_value_t = 42)]
        synth_seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let provider = err.chain().any(|e| {
                e.downcast_ref::<PipelineError>()
                    .is_some_and(PipelineError::is_provider_failure)
            });
            ExitCode::from(if provider { 2 } else { 1 })
        }
    }
}

fn require_file(what: &str, path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Command::Synth {
        dir,
        scenes_per_type,
        nonscreen_scenes,
        synth_seed,
    } = &cli.command
    {
        return write_synthetic(dir, *scenes_per_type, *nonscreen_scenes, *synth_seed);
    }
    let cfg = cli.overrides.resolve()?;
    let out = cfg.output.as_path();
    match cli.command {
        Command::IngestCheck => {
            require_file("manifest", &cfg.manifest)?;
            require_file("embeddings", &cfg.embeddings)?;
            let ds = pipeline::load_dataset(&cfg.manifest, &cfg.embeddings)?;
            let participants: std::collections::BTreeSet<_> =
                ds.frames().iter().map(|f| f.participant_id.as_str()).collect();
            let labelled = ds.frames().iter().filter(|f| f.label.is_some()).count();
            println!(
                "ok: {} frames, {} participants, {} labelled, dim {}",
                ds.len(),
                participants.len(),
                labelled,
                ds.embeddings().dim()
            );
        }
        Command::SelectViews => {
            require_file("manifest", &cfg.manifest)?;
            require_file("embeddings", &cfg.embeddings)?;
            let ds = pipeline::load_dataset(&cfg.manifest, &cfg.embeddings)?;
            let (graph, groups) = pipeline::select_stage(&ds, &cfg.similarity, &cfg.selection, out)?;
            println!(
                "{} frames, {} edges, {} groups -> {}",
                graph.node_count(),
                graph.edges().len(),
                groups.len(),
                out.join(GROUPS_FILE).display()
            );
        }
        Command::Caption => {
            require_file("manifest", &cfg.manifest)?;
            if let Some(c) = &cfg.caption.captions {
                require_file("captions", c)?;
            }
            let frames = pipeline::load_manifest(&cfg.manifest)?;
            let groups: Vec<MultiViewGroup> = pipeline::read_stage(out, GROUPS_FILE)?;
            let d = pipeline::caption_stage(&groups, &frames, &cfg.caption, out)?;
            println!("{} descriptions -> {}", d.len(), out.join(DESCRIPTIONS_FILE).display());
        }
        Command::Identify => {
            let lexicon = pipeline::load_lexicon(cfg.lexicon.as_deref())?;
            let descriptions: Vec<SceneDescription> = pipeline::read_stage(out, DESCRIPTIONS_FILE)?;
            let v = pipeline::identify_stage(&descriptions, &lexicon, out)?;
            let screens = v.iter().filter(|v| !v.types.is_empty()).count();
            println!(
                "{} verdicts ({} with a screen) -> {}",
                v.len(),
                screens,
                out.join(VERDICTS_FILE).display()
            );
        }
        Command::Evaluate => {
            require_file("manifest", &cfg.manifest)?;
            let frames = pipeline::load_manifest(&cfg.manifest)?;
            let groups: Vec<MultiViewGroup> = pipeline::read_stage(out, GROUPS_FILE)?;
            let descriptions: Vec<SceneDescription> = pipeline::read_stage(out, DESCRIPTIONS_FILE)?;
            let verdicts: Vec<ScreenVerdict> = pipeline::read_stage(out, VERDICTS_FILE)?;
            let records = pipeline::eval_records(&groups, &frames, &descriptions, &verdicts)?;
            let summary = pipeline::evaluate_stage(&records, &cfg.eval, out)?;
            print_report(&summary.aggregate);
        }
        Command::Report => {
            require_file("manifest", &cfg.manifest)?;
            require_file("embeddings", &cfg.embeddings)?;
            let ds = pipeline::load_dataset(&cfg.manifest, &cfg.embeddings)?;
            pipeline::report_stage(&ds, out)?;
            println!("report written to {}", out.join(pipeline::REPORT_DIR).display());
        }
        Command::Run => {
            let summary = run(&cfg)?;
            print_report(&summary.aggregate);
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn run(cfg: &PipelineConfig) -> Result<pipeline::EvalSummary> {
    Ok(pipeline::run_pipeline(cfg)?)
}

fn print_report(r: &mvscreen_core::EvalReport) {
    let pct = |x: Option<f64>| x.map_or_else(|| "n/a".to_owned(), |v| format!("{:.1}%", 100.0 * v));
    println!("groups evaluated: {}", r.groups);
    if let Some(b) = r.bleu {
        println!("BLEU-1..4: {:.4} {:.4} {:.4} {:.4}", b[0], b[1], b[2], b[3]);
    }
    for (t, a) in &r.per_type_accuracy {
        println!("accuracy {t}: {}", pct(Some(*a)));
    }
    let m = &r.binary;
    println!(
        "binary: tp={} fp={} fn={} tn={} accuracy={} sensitivity={} precision={} specificity={}",
        m.matrix.tp,
        m.matrix.fp,
        m.matrix.fn_,
        m.matrix.tn,
        pct(m.accuracy),
        pct(m.sensitivity),
        pct(m.precision),
        pct(m.specificity)
    );
}

fn write_synthetic(dir: &Path, scenes_per_type: usize, nonscreen_scenes: usize, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        scenes_per_type,
        nonscreen_scenes,
        seed,
        ..SynthConfig::default()
    };
    let needed = (3 * scenes_per_type + nonscreen_scenes) * (cfg.views + 1)
        + (3 * scenes_per_type + nonscreen_scenes + cfg.participants) * cfg.fillers_between;
    let cfg = SynthConfig {
        dim: cfg.dim.max(needed),
        ..cfg
    };
    let data = synth::generate(&cfg)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    ingest::write_manifest(&dir.join("manifest.jsonl"), &data.frames)?;
    ingest::write_embeddings(&dir.join("embeddings.emb1"), &data.embeddings)?;
    println!(
        "{} frames, {} planted scenes -> {}",
        data.frames.len(),
        data.scenes.len(),
        dir.display()
    );
    Ok(())
}
