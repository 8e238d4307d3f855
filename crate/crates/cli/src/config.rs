//! Layered configuration: command-line flags over a TOML file over defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;

use mvscreen_core::pipeline::{PipelineConfig, ProviderChoice};

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Output directory shared by all stages.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON object of extra {phrase: type} keyword mappings.
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tau_low: Option<f64>,
    #[arg(long, global = true)]
    pub tau_high: Option<f64>,
    /// Time window in frame positions.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Frames per multi-view group.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_parser = parse_provider)]
    pub provider: Option<ProviderChoice>,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub captions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    #[arg(long, global = true)]
    pub attempts: Option<u32>,
    #[arg(long, global = true)]
    pub backoff_ms: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Add-one smoothing for BLEU-2..4.
    #[arg(long, global = true)]
    pub smoothing: bool,
}

fn parse_provider(s: &str) -> Result<ProviderChoice, String> {
    match s.to_ascii_lowercase().as_str() {
        "mock" => Ok(ProviderChoice::Mock),
        "file" => Ok(ProviderChoice::File),
        "remote" => Ok(ProviderChoice::Remote),
        _ => Err(format!("unknown provider {s:?} (expected mock, file or remote)")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifest: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    output: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    #[serde(default)]
    similarity: SimilaritySection,
    #[serde(default)]
    selection: SelectionSection,
    #[serde(default)]
    caption: CaptionSection,
    #[serde(default)]
    eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilaritySection {
    tau_low: Option<f64>,
    tau_high: Option<f64>,
    window_frames: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionSection {
    k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionSection {
    provider: Option<ProviderChoice>,
    endpoint: Option<String>,
    captions: Option<PathBuf>,
    cache: Option<PathBuf>,
    concurrency: Option<usize>,
    attempts: Option<u32>,
    backoff_ms: Option<u64>,
    timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    folds: Option<usize>,
    seed: Option<u64>,
    smoothing: Option<bool>,
}

fn rebase(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

impl Overrides {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let (file, base) = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let parsed: FileConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                (parsed, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let from_file = |p: Option<PathBuf>| p.map(|p| rebase(&base, p));

        let mut cfg = PipelineConfig::new(
            self.manifest
                .clone()
                .or(from_file(file.manifest))
                .unwrap_or_else(|| "manifest.jsonl".into()),
            self.embeddings
                .clone()
                .or(from_file(file.embeddings))
                .unwrap_or_else(|| "embeddings.emb1".into()),
            self.out
                .clone()
                .or(from_file(file.output))
                .unwrap_or_else(|| "out".into()),
        );
        cfg.lexicon = self.lexicon.clone().or(from_file(file.lexicon));

        let s = &mut cfg.similarity;
        s.tau_low = self.tau_low.or(file.similarity.tau_low).unwrap_or(s.tau_low);
        s.tau_high = self.tau_high.or(file.similarity.tau_high).unwrap_or(s.tau_high);
        s.window_frames = self.window.or(file.similarity.window_frames).unwrap_or(s.window_frames);
        cfg.selection.k = self.k.or(file.selection.k).unwrap_or(cfg.selection.k);

        let c = &mut cfg.caption;
        let fc = file.caption;
        c.provider = self.provider.or(fc.provider).unwrap_or(c.provider);
        c.endpoint = self.endpoint.clone().or(fc.endpoint);
        c.captions = self.captions.clone().or(from_file(fc.captions));
        c.cache = self.cache.clone().or(from_file(fc.cache));
        c.concurrency = self.concurrency.or(fc.concurrency).unwrap_or(c.concurrency);
        c.attempts = self.attempts.or(fc.attempts).unwrap_or(c.attempts);
        c.backoff_ms = self.backoff_ms.or(fc.backoff_ms).unwrap_or(c.backoff_ms);
        c.timeout_secs = fc.timeout_secs.unwrap_or(c.timeout_secs);

        let e = &mut cfg.eval;
        e.folds = self.folds.or(file.eval.folds).unwrap_or(e.folds);
        e.seed = self.seed.or(file.eval.seed).unwrap_or(e.seed);
        e.smoothing = self.smoothing || file.eval.smoothing.unwrap_or(e.smoothing);
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file_or_flags() {
        let cfg = Overrides::default().resolve().unwrap();
        assert_eq!(cfg.selection.k, 3);
        assert_eq!(cfg.similarity.tau_high, 0.70);
        assert_eq!(cfg.similarity.tau_low, 0.40);
        assert_eq!(cfg.similarity.window_frames, 12);
        assert_eq!(cfg.eval.folds, 4);
        assert_eq!(cfg.eval.seed, 42);
        assert_eq!(cfg.caption.provider, ProviderChoice::Mock);
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(
            &path,
            "manifest = \"data/m.jsonl\"\n[similarity]\ntau_high = 0.8\nwindow_frames = 6\n[selection]\nk = 4\n[caption]\nprovider = \"file\"\ncaptions = \"c.jsonl\"\n",
        )
        .unwrap();
        let o = Overrides {
            config: Some(path),
            k: Some(5),
            ..Default::default()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!(cfg.manifest, dir.path().join("data/m.jsonl"));
        assert_eq!(cfg.similarity.tau_high, 0.8);
        assert_eq!(cfg.similarity.tau_low, 0.40);
        assert_eq!(cfg.similarity.window_frames, 6);
        assert_eq!(cfg.selection.k, 5);
        assert_eq!(cfg.caption.provider, ProviderChoice::File);
        assert_eq!(cfg.caption.captions, Some(dir.path().join("c.jsonl")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[similarity]\ntau_hi = 0.8\n").unwrap();
        let o = Overrides {
            config: Some(path),
            ..Default::default()
        };
        assert!(o.resolve().is_err());
    }
}
