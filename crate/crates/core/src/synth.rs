//! Synthetic datasets with planted multi-view scenes.
//!
//! Each planted scene contributes `views` consecutive frames whose embeddings
//! share a scene direction, `v_i = sqrt(s) u + sqrt(1 - s) w_i` with `u` and
//! the `w_i` orthonormal, so every within-scene pair has similarity `s`.
//! Filler frames between scenes get their own orthogonal directions and
//! therefore never connect. Small Gaussian noise is added to every vector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ingest::{EmbeddingMatrix, FrameRecord, IngestError};
use crate::label::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub participants: usize,
    pub scenes_per_type: usize,
    pub nonscreen_scenes: usize,
    pub views: usize,
    pub fillers_between: usize,
    pub dim: usize,
    pub within_similarity: f64,
    pub noise: f64,
    pub seed: u64,
    pub start_timestamp: i64,
    pub cadence_secs: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            participants: 4,
            scenes_per_type: 20,
            nonscreen_scenes: 0,
            views: 3,
            fillers_between: 2,
            dim: 512,
            within_similarity: 0.55,
            noise: 0.003,
            seed: 42,
            start_timestamp: 1_700_000_000,
            cadence_secs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedScene {
    pub participant_id: String,
    pub frame_ids: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub frames: Vec<FrameRecord>,
    pub embeddings: EmbeddingMatrix,
    pub scenes: Vec<PlantedScene>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Reference caption attached to frames of each label.
pub fn reference_caption(label: Label) -> &'static str {
    match label {
        Label::Tv => "A television is on the wall of the living room.",
        Label::Smartphone => "A child is holding a smartphone in their hand.",
        Label::Computer => "A person sits at a desk in front of a laptop.",
        Label::NonScreen => "A child plays with toys on the floor.",
    }
}

struct Basis {
    vectors: Vec<Vec<f64>>,
}

impl Basis {
    // Gram-Schmidt over Gaussian draws.
    fn random(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
        while vectors.len() < count {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            for b in &vectors {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                vectors.push(v);
            }
        }
        Basis { vectors }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    if cfg.participants == 0 || cfg.views < 2 {
        return Err(SynthError::InvalidConfig(
            "need participants >= 1 and views >= 2".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.within_similarity) {
        return Err(SynthError::InvalidConfig("within_similarity must lie in [0, 1)".into()));
    }
    let mut labels: Vec<Label> = [Label::Tv, Label::Smartphone, Label::Computer]
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, cfg.scenes_per_type))
        .chain(std::iter::repeat_n(Label::NonScreen, cfg.nonscreen_scenes))
        .collect();
    let n_scenes = labels.len();
    let n_fillers = (n_scenes + cfg.participants) * cfg.fillers_between;
    let needed = n_scenes * (cfg.views + 1) + n_fillers;
    if needed > cfg.dim {
        return Err(SynthError::InvalidConfig(format!(
            "{needed} orthogonal directions do not fit in dimension {}",
            cfg.dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    labels.shuffle(&mut rng);
    let basis = Basis::random(needed, cfg.dim, &mut rng);
    let mut directions = basis.vectors.into_iter();

    let a = cfg.within_similarity.sqrt();
    let b = (1.0 - cfg.within_similarity).sqrt();
    let mut frames = Vec::new();
    let mut vectors: Vec<(String, Vec<f64>)> = Vec::new();
    let mut scenes = Vec::new();
    let mut per_participant: Vec<Vec<Label>> = vec![Vec::new(); cfg.participants];
    for (i, l) in labels.into_iter().enumerate() {
        per_participant[i % cfg.participants].push(l);
    }

    for (p, scene_labels) in per_participant.into_iter().enumerate() {
        let mut t = Timeline {
            participant_id: format!("p{:02}", p + 1),
            seq: 0,
            cfg,
        };
        for scene in std::iter::once(None).chain(scene_labels.into_iter().map(Some)) {
            if let Some(label) = scene {
                let u = next_direction(&mut directions);
                let mut ids = Vec::with_capacity(cfg.views);
                for _ in 0..cfg.views {
                    let w = next_direction(&mut directions);
                    let v: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
                    let id = t.push(&mut frames, label);
                    vectors.push((id.clone(), v));
                    ids.push(id);
                }
                scenes.push(PlantedScene {
                    participant_id: t.participant_id.clone(),
                    frame_ids: ids,
                    label,
                });
            }
            for _ in 0..cfg.fillers_between {
                let id = t.push(&mut frames, Label::NonScreen);
                vectors.push((id, next_direction(&mut directions)));
            }
        }
    }

    let mut embeddings = EmbeddingMatrix::new(cfg.dim)?;
    for (id, v) in vectors {
        let noisy: Vec<f32> = v
            .iter()
            .map(|x| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (x + cfg.noise * e) as f32
            })
            .collect();
        embeddings.push(id, noisy)?;
    }
    Ok(SynthDataset {
        frames,
        embeddings,
        scenes,
    })
}

fn next_direction(it: &mut impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    it.next().expect("basis sized for every frame")
}

struct Timeline<'a> {
    participant_id: String,
    seq: usize,
    cfg: &'a SynthConfig,
}

impl Timeline<'_> {
    fn push(&mut self, frames: &mut Vec<FrameRecord>, label: Label) -> String {
        let id = format!("{}-f{:04}", self.participant_id, self.seq);
        let ts = self.cfg.start_timestamp + self.seq as i64 * self.cfg.cadence_secs;
        self.seq += 1;
        frames.push(
            FrameRecord::new(id.clone(), self.participant_id.clone(), ts, format!("images/{id}.jpg"))
                .with_label(label)
                .with_annotation(reference_caption(label)),
        );
        id
    }
}
