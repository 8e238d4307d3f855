//! Screen-exposure analysis over egocentric image sequences.
//!
//! The pipeline runs in stages, each of which reads and writes plain files so
//! that any suffix of it can be re-run:
//!
//! 1. [`ingest`] parses the frame manifest and the `EMB1` embedding file.
//! 2. [`similarity`] builds the band-filtered, time-windowed similarity graph.
//! 3. [`select`] greedily carves vertex-disjoint connected k-node groups out of it.
//! 4. [`caption`] obtains one scene description per group.
//! 5. [`identify`] maps description keywords to screen types.
//! 6. [`eval`] scores descriptions (BLEU) and verdicts (accuracy, confusion matrix).

pub mod caption;
pub mod eval;
pub mod identify;
pub mod ingest;
pub mod jsonl;
pub mod label;
pub mod pipeline;
pub mod projection;
pub mod select;
pub mod similarity;
pub mod synth;

pub use caption::{CaptionError, CaptionProvider, ProviderKind, SceneDescription};
pub use eval::{ConfusionMatrix2x2, EvalReport};
pub use identify::{Binary, KeywordLexicon, ScreenVerdict};
pub use ingest::{Dataset, EmbeddingMatrix, FrameRecord};
pub use label::{Label, ScreenType};
pub use select::{MultiViewGroup, SelectionConfig};
pub use similarity::{SimilarityConfig, SimilarityGraph};

/// Embedding interchange format tag written in the file magic.
pub const EMBEDDING_FORMAT: &str = "EMB1";
/// Manifest schema version.
pub const MANIFEST_VERSION: u32 = 1;
