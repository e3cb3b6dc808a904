use proptest::prelude::*;
use std::collections::BTreeSet;

use vqprobe_core::scene::{
    encode_ground_truth, sample_scene, Attribute, AttributeVocabulary, SamplerConfig,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ground_truth_round_trips(seed in any::<u64>(), id in 0u64..1000) {
        let vocab = AttributeVocabulary::default();
        let cfg = SamplerConfig { min_objects: 0, ..SamplerConfig::default() };
        let scene = sample_scene(id, seed, &cfg, &vocab).unwrap();
        let gt = encode_ground_truth(&scene);
        prop_assert_eq!(gt.validity.iter().filter(|v| **v).count(), scene.objects.len());
        let back = gt.decode(&scene.bounds);
        prop_assert_eq!(back.len(), scene.objects.len());
        for (a, b) in scene.objects.iter().zip(&back) {
            for attr in Attribute::ALL {
                prop_assert_eq!(a.attr(attr), b.attr(attr));
            }
            for k in 0..3 {
                prop_assert!((a.position[k] - b.position[k]).abs() < 1e-6);
            }
        }
        for (i, valid) in gt.validity.iter().enumerate() {
            if !valid {
                prop_assert!(gt.row(i).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn sampled_scenes_are_valid(seed in any::<u64>()) {
        let vocab = AttributeVocabulary::default();
        let cfg = SamplerConfig::default();
        let scene = sample_scene(0, seed, &cfg, &vocab).unwrap();
        prop_assert!(scene.validate().is_ok());
        prop_assert!((3..=10).contains(&scene.objects.len()));
        if let Some(sep) = scene.min_separation() {
            prop_assert!(sep >= cfg.min_separation);
        }
    }
}

#[test]
fn every_attribute_value_appears_in_1000_scenes() {
    let vocab = AttributeVocabulary::default();
    let cfg = SamplerConfig::default();
    let mut seen: BTreeSet<(usize, u8)> = BTreeSet::new();
    for i in 0..1000 {
        let scene = sample_scene(i, vqprobe_core::derive_seed(7, i), &cfg, &vocab).unwrap();
        for o in &scene.objects {
            for (k, a) in Attribute::ALL.into_iter().enumerate() {
                seen.insert((k, o.attr(a)));
            }
        }
    }
    let expected: usize = Attribute::ALL.iter().map(|a| a.cardinality()).sum();
    assert_eq!(seen.len(), expected);
}
