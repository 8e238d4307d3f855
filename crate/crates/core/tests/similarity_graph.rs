use mvscreen_core::ingest::{validate_dataset, EmbeddingMatrix, FrameRecord};
use mvscreen_core::similarity::{build_graph, cosine_similarity};
use mvscreen_core::{SimilarityConfig, SimilarityGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn random_dataset(seed: u64, n: usize, participants: usize, dim: usize) -> mvscreen_core::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    let mut emb = EmbeddingMatrix::new(dim).unwrap();
    for i in 0..n {
        let id = format!("f{i:03}");
        let p = format!("p{}", rng.random_range(0..participants));
        frames.push(FrameRecord::new(id.clone(), p, i as i64 * 5, format!("{id}.jpg")));
        // Positive components keep many pairs inside the default band.
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(0.01f32..1.0)).collect();
        emb.push(id, v).unwrap();
    }
    validate_dataset(frames, emb).unwrap()
}

#[test]
fn graph_matches_naive_pair_scan() {
    for seed in 0..20 {
        let ds = random_dataset(seed, 60, 3, 4);
        let cfg = SimilarityConfig {
            tau_low: 0.75,
            tau_high: 0.95,
            window_frames: 5,
        };
        let g = build_graph(&ds, &cfg).unwrap();
        let f = ds.frames();
        let mut want = Vec::new();
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                if f[i].participant_id != f[j].participant_id {
                    continue;
                }
                let between = (i..j).filter(|&x| f[x].participant_id == f[i].participant_id).count();
                let s = naive_cos(ds.vector(i), ds.vector(j));
                if between <= cfg.window_frames && (cfg.tau_low..=cfg.tau_high).contains(&s) {
                    want.push((i, j));
                }
            }
        }
        let got: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn graph_file_round_trip() {
    let ds = random_dataset(3, 40, 2, 8);
    let g = build_graph(&ds, &SimilarityConfig::default()).unwrap();
    let text = g.to_jsonl();
    let back = SimilarityGraph::from_jsonl(&text).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.to_jsonl(), text);
}

#[test]
fn invalid_thresholds_rejected() {
    let ds = random_dataset(1, 5, 1, 3);
    let cfg = SimilarityConfig {
        tau_low: 0.8,
        tau_high: 0.6,
        window_frames: 3,
    };
    assert!(build_graph(&ds, &cfg).is_err());
}

proptest! {
    #[test]
    fn cosine_symmetric_bounded_scale_invariant(
        v in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..32),
        s in 1e-3f64..1e3,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        if let (Ok(ab), Ok(ba)) = (cosine_similarity(&a, &b), cosine_similarity(&b, &a)) {
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
            let scaled: Vec<f64> = b.iter().map(|x| x * s).collect();
            prop_assert!((cosine_similarity(&a, &scaled).unwrap() - ab).abs() <= 1e-9);
        }
    }

    #[test]
    fn edges_bounded_by_window(seed in any::<u64>(), n in 1usize..80, window in 1usize..8, parts in 1usize..4) {
        let ds = random_dataset(seed, n, parts, 3);
        let cfg = SimilarityConfig { tau_low: 0.0, tau_high: 1.0, window_frames: window };
        let g = build_graph(&ds, &cfg).unwrap();
        prop_assert!(g.edges().len() <= n * window);
        for e in g.edges() {
            prop_assert!(e.i < e.j);
            prop_assert_eq!(&g.nodes()[e.i].participant_id, &g.nodes()[e.j].participant_id);
            prop_assert!(cfg.accepts(e.weight));
        }
    }
}
