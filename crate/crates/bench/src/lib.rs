//! Shared fixtures for the benchmarks.

use valb::corpus::{generate_synthetic, split_dataset, AnnotatedLog};
use valb::embed::build_vocabs;
use valb::tagger::{Emissions, Hyperparams, TaggerModel};
use valb::{SplitSpec, TagMode};

/// An untrained model with default hyperparameters over a synthetic corpus,
/// plus the corpus itself.
pub fn fixture() -> (TaggerModel, Vec<AnnotatedLog>) {
    let (logs, _) = generate_synthetic(7, 20, 200).expect("synthetic corpus");
    let (train, _, _) = split_dataset(&logs, &SplitSpec::standard(7)).expect("split");
    let (wv, cv) = build_vocabs(&train, 1).expect("vocabs");
    let model = TaggerModel::init(Hyperparams::default(), TagMode::Multiclass, wv, cv, None, 7).expect("model");
    (model, logs)
}

/// Deterministic pseudo-random emissions.
pub fn emissions(len: usize, n_tags: usize) -> Emissions<f32> {
    let data = (0..len * n_tags)
        .map(|i| ((i as f32 * 12.9898).sin() * 43758.547).fract())
        .collect();
    Emissions::new(len, n_tags, data)
}
