mod common;

use std::path::Path;

use fgl_core::graph::{
    self, balance_sample, load_dataset, load_nodes, load_relation, stratified_split,
};
use fgl_core::synthetic::{self, label_assortativity, RelationSpec, SyntheticSpec};
use fgl_core::Error;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn small_relation_loads() {
    let dir = tempfile::tempdir().unwrap();
    let nodes = write(dir.path(), "n.csv", "id,label,f0\n0,0,1\n1,1,2\n2,0,3\n");
    let edges = write(dir.path(), "e.csv", "src,dst\n0,1\n1,2\n");
    let dup = write(dir.path(), "d.csv", "0,1,2.0\n1,0,3.0\n");
    let d = load_dataset(&nodes, &[("e".into(), edges), ("d".into(), dup)]).unwrap();
    let e = d.relation("e").unwrap();
    assert_eq!(e.num_edges(), 2);
    assert!(e.edges().all(|(_, _, w)| w == 1.0));
    let d2 = d.relation("d").unwrap();
    assert_eq!(d2.edges().collect::<Vec<_>>(), vec![(0, 1, 5.0)]);
}

#[test]
fn load_errors_carry_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad_label = write(
        dir.path(),
        "a.csv",
        "id,label,f0\n0,0,1\n# comment\n1,2,0.5\n",
    );
    match load_nodes(&bad_label) {
        Err(Error::NonBinaryLabel { line, label, .. }) => {
            assert_eq!((line, label.as_str()), (4, "2"))
        }
        other => panic!("{other:?}"),
    }
    let bad_feature = write(dir.path(), "b.csv", "0,0,1\n1,1,x\n");
    match load_nodes(&bad_feature) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }

    let nodes =
        std::sync::Arc::new(load_nodes(&write(dir.path(), "n.csv", "0,0,1\n1,1,2\n")).unwrap());
    let dangling = write(dir.path(), "e.csv", "src,dst\n0,1\n1,7\n");
    match load_relation("e", &dangling, nodes.clone()) {
        Err(e @ Error::DanglingEndpoint { line: 3, id: 7, .. }) => {
            assert!(e.to_string().contains('7'))
        }
        other => panic!("{other:?}"),
    }
    let malformed = write(dir.path(), "m.csv", "0,1\n0\n");
    assert!(matches!(
        load_relation("m", &malformed, nodes.clone()),
        Err(Error::Parse { line: 2, .. })
    ));
    let negative = write(dir.path(), "w.csv", "0,1,-1\n");
    assert!(matches!(
        load_relation("w", &negative, nodes),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn synthetic_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        nodes: 150,
        ..SyntheticSpec::default()
    };
    let files = synthetic::generate_synthetic(&spec, 4, dir.path()).unwrap();
    let loaded = load_dataset(&files.nodes, &files.relations).unwrap();
    let direct = synthetic::generate(&spec, 4).unwrap();
    assert_eq!(loaded.nodes.labels(), direct.nodes.labels());
    assert_eq!(loaded.nodes.features(), direct.nodes.features());
    for (a, b) in loaded.relations.iter().zip(&direct.relations) {
        assert_eq!(a.relation(), b.relation());
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
    }
}

#[test]
fn generator_is_byte_deterministic() {
    let spec = SyntheticSpec {
        nodes: 200,
        ..SyntheticSpec::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = synthetic::generate_synthetic(&spec, 9, a.path()).unwrap();
    let fb = synthetic::generate_synthetic(&spec, 9, b.path()).unwrap();
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&fa.nodes), read(&fb.nodes));
    for ((_, pa), (_, pb)) in fa.relations.iter().zip(&fb.relations) {
        assert_eq!(read(pa), read(pb));
    }
    let other = synthetic::generate(&spec, 10).unwrap();
    assert_ne!(
        other.nodes.labels(),
        synthetic::generate(&spec, 9).unwrap().nodes.labels()
    );
}

fn spec_with(p_intra: f64, p_inter: f64) -> SyntheticSpec {
    SyntheticSpec {
        nodes: 1000,
        relations: (0..3)
            .map(|i| RelationSpec {
                name: format!("r{i}"),
                p_intra,
                p_inter,
            })
            .collect(),
        ..SyntheticSpec::default()
    }
}

#[test]
fn relations_are_assortative() {
    let d = synthetic::generate(&spec_with(0.05, 0.005), 0).unwrap();
    for g in &d.relations {
        assert!(label_assortativity(g) > 0.0, "{}", g.relation());
    }
    let flat = synthetic::generate(&spec_with(0.01, 0.01), 0).unwrap();
    for g in &flat.relations {
        assert!(label_assortativity(g).abs() < 0.05, "{}", g.relation());
    }
}

#[test]
fn sampling_and_split_examples() {
    let labels: Vec<u8> = (0..1100).map(|i| u8::from(i < 100)).collect();
    let s = balance_sample(&labels, 0.5, 2.0, 1).unwrap();
    let pos = s.iter().filter(|&&i| labels[i] == 1).count();
    assert_eq!((pos, s.len() - pos), (100, 200));
    assert_eq!(s, balance_sample(&labels, 0.5, 2.0, 1).unwrap());

    let labels: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
    let all = (0..10).collect();
    let split = stratified_split(&all, &labels, 0.6, 3).unwrap();
    assert_eq!((split.train.len(), split.test.len()), (6, 4));
    assert!(split.train.is_disjoint(&split.test));
}

#[test]
fn standardized_features_use_train_statistics() {
    let t = common::table(20, 3, 1);
    let order: Vec<usize> = (0..20).collect();
    let train = (0..10).collect();
    let x = graph::standardized_features(&t, &order, &train);
    for c in 0..3 {
        let col: Vec<f64> = (0..10).map(|r| x[[r, c]]).collect();
        let mean = col.iter().sum::<f64>() / 10.0;
        assert!(mean.abs() < 1e-12);
    }
}
