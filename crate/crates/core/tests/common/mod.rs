#![allow(dead_code)]

use pwpoly::data::{synth_generate, RegionRule, SynthData, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Noiseless piece-wise data cut along `x1`.
pub type SynthTrain = SynthData;

pub fn regions_along_x1(
    n: usize,
    n_regions: usize,
    degree: u32,
    terms: usize,
    samples: usize,
    seed: u64,
) -> SynthData {
    let spec = SynthSpec {
        n_features: n,
        n_true_polys: n_regions,
        degree,
        terms_per_poly: terms,
        region_rule: RegionRule::along_first_feature(n, n_regions),
        noise_std: 0.0,
        n_samples: samples,
        excursion_scale: 1.0,
    };
    synth_generate(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}
