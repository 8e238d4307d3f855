mod common;

use std::collections::BTreeSet;

use mvscreen_core::eval::{
    bleu_n, bleu_n_with, confusion, corpus_bleu, make_folds, per_type_accuracy, FoldItem, Smoothing,
};
use mvscreen_core::{Binary, Label, ScreenType};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "a", "tv", "on", "the", "wall", "child", "phone", "holds", "desk", "laptop",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..12).prop_map(|w| w.join(" "))
}

#[test]
fn confusion_matches_hand_tally() {
    use Binary::{NonScreen as N, Screen as S};
    // 20 groups: 7 tp, 3 fp, 4 fn, 6 tn, shuffled.
    let pairs = [
        (S, S),
        (N, N),
        (S, N),
        (N, S),
        (S, S),
        (N, N),
        (S, S),
        (N, S),
        (S, N),
        (N, N),
        (S, S),
        (N, N),
        (N, S),
        (S, S),
        (S, N),
        (N, N),
        (N, S),
        (S, S),
        (N, N),
        (S, S),
    ];
    let m = confusion(&pairs).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (7, 3, 4, 6));
    assert_eq!(m.accuracy(), Some(13.0 / 20.0));
    assert_eq!(m.sensitivity(), Some(7.0 / 11.0));
    assert_eq!(m.precision(), Some(7.0 / 10.0));
    assert_eq!(m.specificity(), Some(6.0 / 9.0));
}

#[test]
fn undefined_ratios_are_none() {
    let m = confusion(&[(Binary::NonScreen, Binary::NonScreen)]).unwrap();
    assert_eq!(m.precision(), None);
    assert_eq!(m.sensitivity(), None);
    assert_eq!(m.specificity(), Some(1.0));
}

#[test]
fn per_type_accuracy_by_actual_type() {
    let acc = per_type_accuracy(&[
        (Label::Tv, Label::Tv),
        (Label::Smartphone, Label::Tv),
        (Label::Computer, Label::Computer),
        (Label::Tv, Label::NonScreen),
    ]);
    assert_eq!(acc.get(&ScreenType::Tv), Some(&0.5));
    assert_eq!(acc.get(&ScreenType::Computer), Some(&1.0));
    assert_eq!(acc.get(&ScreenType::Smartphone), None);
}

#[test]
fn smoothing_rescues_zero_higher_orders() {
    assert_eq!(bleu_n("a b c d", &["a b x d"], 4).unwrap(), 0.0);
    let s = bleu_n_with("a b c d", &["a b x d"], 4, Smoothing::AddOne).unwrap();
    assert!((s - 0.5).abs() < 1e-12, "{s}");
}

#[test]
fn corpus_bleu_pools_counts() {
    let pairs = vec![
        ("a tv on the wall", vec!["a tv on the wall"]),
        ("a phone", vec!["a phone in hand"]),
    ];
    let b = corpus_bleu(&pairs, Smoothing::None).unwrap();
    // Pooled: c=7, r=9, unigram 7/7.
    assert!((b[0] - (1.0f64 - 9.0 / 7.0).exp()).abs() < 1e-12);
    assert!(corpus_bleu::<&str>(&[], Smoothing::None).is_err());
}

#[test]
fn empty_inputs_rejected() {
    assert!(bleu_n("", &["a"], 1).is_err());
    assert!(bleu_n("a", &[""], 1).is_err());
    assert!(bleu_n("a", &["a"], 5).is_err());
}

#[test]
fn folds_of_397_groups() {
    let items: Vec<FoldItem> = (0..397)
        .map(|i| FoldItem {
            group_id: format!("g{i:03}"),
            label: Some([Label::Tv, Label::Smartphone, Label::Computer, Label::NonScreen][i % 4]),
        })
        .collect();
    let folds = make_folds(&items, 4, 42).unwrap();
    let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    sizes.sort();
    assert_eq!(sizes, [99, 99, 99, 100]);
    assert_eq!(folds, make_folds(&items, 4, 42).unwrap());
    assert_ne!(folds, make_folds(&items, 4, 43).unwrap());
}

proptest! {
    #[test]
    fn bleu_agrees_with_oracle(c in sentence(), refs in prop::collection::vec(sentence(), 1..4), n in 1usize..=4) {
        let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
        let got = bleu_n(&c, &refs, n).unwrap();
        let want = common::oracle_bleu(&c, &refs, n);
        prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
        prop_assert!((0.0..=1.0).contains(&got));
        let identity = bleu_n(&c, &[c.as_str()], n).unwrap();
        let expected = if c.split(' ').count() >= n { 1.0 } else { 0.0 };
        prop_assert!((identity - expected).abs() < 1e-12);
    }

    #[test]
    fn folds_partition_and_balance(n in 2usize..200, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let items: Vec<FoldItem> = (0..n)
            .map(|i| FoldItem { group_id: format!("g{i:03}"), label: Some(if i % 3 == 0 { Label::Tv } else { Label::NonScreen }) })
            .collect();
        let folds = make_folds(&items, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let all: BTreeSet<&String> = folds.iter().flatten().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(folds.clone(), make_folds(&items, k, seed).unwrap());
    }
}
