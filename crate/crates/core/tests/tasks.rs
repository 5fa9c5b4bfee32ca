use adelfl::engine::FederatedTask;
use adelfl::rng::{stream, Domain};
use adelfl::tasks::{
    make_synthetic_classification, partition_label_skew, read_idx, write_idx, MlpTask,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_round_trip(
        rows in 1u32..6,
        cols in 1u32..6,
        raw in prop::collection::vec((prop::collection::vec(any::<u8>(), 36), 0u8..10), 1..20),
        limit in prop::option::of(1usize..25),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let (img_path, lbl_path) = (dir.path().join("img"), dir.path().join("lbl"));
        let pixels = (rows * cols) as usize;
        let images: Vec<Vec<u8>> = raw.iter().map(|(px, _)| px[..pixels].to_vec()).collect();
        let labels: Vec<u8> = raw.iter().map(|(_, y)| *y).collect();
        write_idx(&img_path, &lbl_path, &images, rows, cols, &labels).unwrap();
        let ds = read_idx(&img_path, &lbl_path, limit).unwrap();
        let kept = limit.map_or(images.len(), |k| k.min(images.len()));
        prop_assert_eq!(ds.len(), kept);
        for i in 0..kept {
            prop_assert_eq!(ds.labels[i], labels[i] as usize);
            for (x, &b) in ds.samples[i].iter().zip(&images[i]) {
                prop_assert!((x - f64::from(b) / 255.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_is_a_balanced_cover(
        labels in prop::collection::vec(0usize..5, 1..200),
        users in 1usize..12,
        skew in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(users <= labels.len());
        let mut rng = stream(seed, Domain::Partition, 0, 0);
        let parts = partition_label_skew(&labels, users, skew, &mut rng).unwrap();
        prop_assert_eq!(parts.len(), users);
        let mut seen = vec![false; labels.len()];
        for part in &parts {
            for &i in part {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn too_many_users_is_an_error() {
    let mut rng = stream(0, Domain::Partition, 0, 0);
    assert!(partition_label_skew(&[0, 1, 2], 4, 0.0, &mut rng).is_err());
    assert!(partition_label_skew(&[0, 1, 2], 2, 1.5, &mut rng).is_err());
}

#[test]
fn mlp_learns_separable_blobs() {
    let mut rng = stream(8, Domain::Task, 0, 0);
    let mut train = make_synthetic_classification(300, 6, 3, 0.08, &mut rng).unwrap();
    train.partition = partition_label_skew(&train.labels, 1, 0.0, &mut rng).unwrap();
    let validation = train.clone();
    let task = MlpTask::new(vec![6, 16, 3], train, validation).unwrap();
    let mut model = task.init_model(&mut rng).unwrap();
    let all: Vec<usize> = (0..task.local_size(0)).collect();
    let before = task.batch_loss(0, &model, &all).unwrap();
    for _ in 0..300 {
        let grads = task.partial_gradient(0, &model, &all, 1).unwrap();
        for (l, g) in grads.iter().enumerate() {
            for (w, gi) in model.layer_mut(l + 1).iter_mut().zip(g) {
                *w -= 0.5 * gi;
            }
        }
    }
    assert!(task.batch_loss(0, &model, &all).unwrap() < 0.5 * before);
    assert!(task.accuracy(&model) > 0.9);
}
