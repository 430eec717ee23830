use std::fs;

use nalgebra::DMatrix;
use proptest::prelude::*;

use gpzsl::dataset::{
    load_dataset, save_dataset, synth_dataset, ClassSplit, Dataset, FeatureFormat, PreprocessConfig, SynthSpec,
};

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (3usize..6, 1usize..5, 1usize..4, 3usize..12).prop_flat_map(|(n_classes, n_feature, n_semantic, n)| {
        (
            // f32-representable so the binary format is exact too
            proptest::collection::vec(-1e3f32..1e3, n * n_feature),
            proptest::collection::vec(0..n_classes, n),
            proptest::collection::vec(-5.0f64..5.0, n_classes * n_semantic),
        )
            .prop_map(move |(f, labels, s)| {
                let features = DMatrix::from_row_iterator(n, n_feature, f.into_iter().map(f64::from));
                let semantics = DMatrix::from_row_slice(n_classes, n_semantic, &s);
                let split = ClassSplit::new(0..n_classes - 2, [n_classes - 2], [n_classes - 1]).unwrap();
                Dataset::new(features, labels, semantics, split).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_both_formats(ds in arb_dataset()) {
        for format in [FeatureFormat::Csv, FeatureFormat::Binary] {
            let dir = tempfile::tempdir().unwrap();
            save_dataset(dir.path(), &ds, format).unwrap();
            let back = load_dataset(dir.path(), &PreprocessConfig::disabled()).unwrap();
            prop_assert_eq!(&back, &ds);
        }
    }
}

#[test]
fn synth_is_byte_reproducible() {
    let spec = SynthSpec {
        n_feature: 8,
        min_per_class: 4,
        ..SynthSpec::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_dataset(a.path(), &synth_dataset(&spec).unwrap(), FeatureFormat::Csv).unwrap();
    save_dataset(b.path(), &synth_dataset(&spec).unwrap(), FeatureFormat::Csv).unwrap();
    for file in ["features.csv", "labels.csv", "attributes.csv", "split.csv"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn preprocessing_is_applied_on_load() {
    let split = ClassSplit::new([0], [1], [2]).unwrap();
    let ds = Dataset::new(
        DMatrix::from_row_slice(3, 2, &[14.0, 3.5, -2.0, 0.0, 7.0, 1.75]),
        vec![0, 1, 2],
        DMatrix::identity(3, 2),
        split,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds, FeatureFormat::Csv).unwrap();
    let back = load_dataset(dir.path(), &PreprocessConfig::default()).unwrap();
    assert_eq!(back.features.as_slice(), &[1.0, 0.0, 1.0, 0.5, 0.0, 0.25]);
}
