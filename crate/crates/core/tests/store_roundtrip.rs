use proptest::prelude::*;
use vqprobe_core::features::{read_store, write_store, EncoderGeometry};

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::from_bits(1)),
        Just(-f32::from_bits(0x007f_ffff)),
        Just(f32::MAX),
        Just(f32::MIN),
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_matrices_survive_bit_exact(
        n in 1usize..6,
        d in 1usize..6,
        count in 0usize..5,
        pool in prop::collection::vec(finite_f32(), 150),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.vqfs");
        let geometry = EncoderGeometry::objects(n, d);
        let records: Vec<(String, Vec<f32>)> = (0..count)
            .map(|r| (format!("img{r}"), (0..n * d).map(|k| pool[(r * n * d + k) % pool.len()]).collect()))
            .collect();
        write_store(&path, records.iter().map(|(i, v)| (i.as_str(), v.as_slice())), geometry, "test", "").unwrap();
        let store = read_store(&path).unwrap();
        prop_assert_eq!(store.geometry(), geometry);
        prop_assert_eq!(store.len(), count);
        for (id, v) in &records {
            let got = store.get(id).unwrap();
            prop_assert_eq!(
                got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
