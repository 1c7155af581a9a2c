use prunelens_core::corruption::{build_suite, per_sample_robustness, CorruptedDataset, CorruptionType};
use prunelens_core::geometry::GeometrySnapshot;
use prunelens_core::nn::{train, ImageShape, LabeledDataset, Network, NetworkSpec, TrainConfig};
use prunelens_core::pruning::{apply_mask, prune_magnitude, Prunable, PruneScope};
use prunelens_core::registry::{
    robustness_from_snapshots, snapshot_suite, Category, Combination, PruneMethod, Registry,
    SeverityMode, SubsetSelection, CLEAN,
};
use prunelens_core::synth::{prototype_images, PrototypeConfig};
use prunelens_core::Error;

struct Fixture {
    clean: LabeledDataset,
    suite: CorruptedDataset,
    dense: Network,
    pruned: Network,
}

fn fixture() -> Fixture {
    let cfg = PrototypeConfig { shape: ImageShape::new(6, 6, 1), classes: 4, ..PrototypeConfig::default() };
    let train_d = prototype_images(300, &cfg, 1);
    let clean = prototype_images(60, &cfg, 2);
    let suite = build_suite(&clean, &[CorruptionType::GaussianNoise, CorruptionType::Contrast], 3).unwrap();
    let dense = train(
        &Network::new(NetworkSpec::new(vec![36, 24, 4], 4)).unwrap(),
        &train_d,
        &TrainConfig { learning_rate: 0.1, epochs: 10, batch_size: 20, seed: 5 },
    )
    .unwrap();
    let mask = prune_magnitude(&dense, 0.7, PruneScope::Global, &Prunable::default()).unwrap();
    let pruned = apply_mask(&dense, &mask).unwrap();
    Fixture { clean, suite, dense, pruned }
}

fn combination(id: &str, method: PruneMethod, rate: f64, net: &Network, clean: &LabeledDataset) -> Combination {
    Combination {
        id: id.into(),
        architecture: "mlp-36-24-4".into(),
        method,
        prune_rate: rate,
        dataset_id: "train".into(),
        checkpoint: String::new(),
        clean_accuracy: net.accuracy(clean).unwrap(),
    }
}

fn populated(dir: &std::path::Path, f: &Fixture) -> Registry {
    let reg = Registry::create(dir).unwrap();
    for (id, method, rate, net) in [("dense", PruneMethod::None, 0.0, &f.dense), ("mag70", PruneMethod::Magnitude, 0.7, &f.pruned)] {
        let snaps = snapshot_suite(net, id, &f.clean, Some(&f.suite), 7).unwrap();
        reg.register(combination(id, method, rate, net, &f.clean), net, &snaps, 7).unwrap();
    }
    reg
}

#[test]
fn register_list_and_reload() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let reg = populated(dir.path(), &f);
    let ids: Vec<String> = reg.list().unwrap().into_iter().map(|c| c.id).collect();
    assert_eq!(ids, vec!["dense", "mag70"]);
    let dup = reg.register(combination("dense", PruneMethod::None, 0.0, &f.dense, &f.clean), &f.dense, &[], 0);
    assert!(matches!(dup, Err(Error::Duplicate(_))));

    let reg = Registry::open(dir.path()).unwrap();
    assert_eq!(reg.load_network("mag70").unwrap(), f.pruned);
    let snaps = reg.load_snapshots("dense").unwrap();
    assert_eq!(snaps.len(), 11);
    let expected = snapshot_suite(&f.dense, "dense", &f.clean, Some(&f.suite), 7).unwrap();
    for s in &expected {
        assert_eq!(&reg.load_snapshot("dense", &s.dataset_id).unwrap(), s);
    }
    assert_eq!(reg.corrupted_snapshots("dense").unwrap().len(), 10);
    assert!(matches!(reg.manifest("nope"), Err(Error::NotFound(_))));
    assert!(Registry::open(dir.path().join("missing")).is_err());
}

#[test]
fn tampering_is_detected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let reg = populated(dir.path(), &f);
    let path = dir.path().join("mag70").join(format!("snapshot-{CLEAN}.bin"));
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(reg.load_snapshot("mag70", CLEAN), Err(Error::HashMismatch { .. })));
    assert!(reg.load_snapshot("dense", CLEAN).is_ok());
}

#[test]
fn robustness_from_snapshots_matches_direct_count() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let reg = populated(dir.path(), &f);
    let mut direct = per_sample_robustness(&f.pruned, &f.suite).unwrap();
    let mut stored = reg.robustness("mag70").unwrap();
    direct.sort_by_key(|r| r.sample_id);
    stored.sort_by_key(|r| r.sample_id);
    assert_eq!(direct, stored);
    let snaps = reg.load_snapshots("mag70").unwrap();
    let clean = snaps.iter().find(|s| s.dataset_id == CLEAN).unwrap();
    let rest: Vec<&GeometrySnapshot> = snaps.iter().filter(|s| s.dataset_id != CLEAN).collect();
    let mut again = robustness_from_snapshots(clean, rest).unwrap();
    again.sort_by_key(|r| r.sample_id);
    assert_eq!(again, direct);
}

#[test]
fn trajectories_partition_the_class() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let reg = populated(dir.path(), &f);
    for class in 0..4 {
        let t = reg.trajectories("dense", "mag70", class, CLEAN).unwrap();
        let in_class = f.clean.labels().iter().filter(|&&l| l == class).count();
        assert_eq!(t.pairs.len(), in_class);
        assert_eq!(t.counts.values().sum::<usize>(), in_class);
        for p in &t.pairs {
            assert_eq!(p.category, Category::of(p.reference.correct, p.compared.correct));
        }
    }
    assert!(reg.trajectories("dense", "mag70", 4, CLEAN).is_err());
}

#[test]
fn subsets_validate_and_recount() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let reg = populated(dir.path(), &f);
    let ids = f.clean.sample_ids();
    let unknown = ids.iter().max().unwrap() + 1000;
    let bad = SubsetSelection::new("bad", [ids[0], unknown], "").unwrap();
    assert!(matches!(reg.save_subset(&bad), Err(Error::UnknownSample(id)) if id == unknown));

    let chosen: Vec<u64> = ids.iter().copied().step_by(3).collect();
    let subset = SubsetSelection::new("thirds", chosen.clone(), "every third").unwrap();
    reg.save_subset(&subset).unwrap();
    assert!(matches!(reg.save_subset(&subset), Err(Error::Duplicate(_))));
    assert_eq!(reg.list_subsets().unwrap(), vec!["thirds"]);
    let loaded = reg.load_subset("thirds").unwrap();
    assert_eq!(loaded, subset);

    let table = reg.evaluation_table(Some(&loaded), SeverityMode::PerSeverity).unwrap();
    let snap = reg.load_snapshot("mag70", "contrast-s4").unwrap();
    let correct = snap.samples.iter().filter(|s| loaded.contains(s.sample_id) && s.correct).count();
    let row = table.rows.iter().find(|r| r.corruption == "contrast" && r.severity == Some(4)).unwrap();
    let cell = row.methods.iter().flat_map(|m| &m.entries).find(|e| e.combination_id == "mag70").unwrap();
    assert_eq!(cell.correct, correct);
    assert_eq!(cell.total, chosen.len());
}

#[test]
fn add_snapshot_extends_a_combination() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let reg = Registry::create(dir.path()).unwrap();
    reg.register(combination("dense", PruneMethod::None, 0.0, &f.dense, &f.clean), &f.dense, &[], 0).unwrap();
    let snaps = snapshot_suite(&f.dense, "dense", &f.clean, None, 0).unwrap();
    reg.add_snapshot(&snaps[0]).unwrap();
    assert!(matches!(reg.add_snapshot(&snaps[0]), Err(Error::Duplicate(_))));
    assert_eq!(reg.manifest("dense").unwrap().snapshots.len(), 1);
    let other = snapshot_suite(&f.dense, "ghost", &f.clean, None, 0).unwrap();
    assert!(reg.add_snapshot(&other[0]).is_err());
}
