//! File formats survive a write/read cycle unchanged.

use std::io::BufReader;

use dpinn::interface::ConstraintTable;
use dpinn::mesh::{load_mesh, read_mesh, save_mesh, write_mesh};
use dpinn::model::{init_network, load_checkpoint, save_checkpoint, NetworkSpec};
use dpinn::presets;

#[test]
fn generated_meshes_roundtrip() {
    let meshes = [
        presets::block([0.5, -1.0], [2.0, 0.3], [7, 3]).unwrap(),
        presets::brick([0.0, 0.0, 1.0], [1.0, 2.0, 0.5], [2, 3, 4]).unwrap(),
    ];
    for mesh in &meshes {
        let mut buf = Vec::new();
        write_mesh(mesh, &mut buf).unwrap();
        assert_eq!(&read_mesh(buf.as_slice()).unwrap(), mesh);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.mesh");
    save_mesh(&meshes[1], &path).unwrap();
    assert_eq!(load_mesh(&path).unwrap(), meshes[1]);
}

#[test]
fn constraint_table_roundtrip() {
    let problem = presets::l_shape([1e6, -1e6], &presets::default_network(2, 1.0)).unwrap();
    let table = problem.constraints();
    assert!(!table.is_empty());
    let mut buf = Vec::new();
    table.write(&mut buf).unwrap();
    let meshes: Vec<_> = problem.subdomains().iter().map(|s| s.mesh.clone()).collect();
    let back = ConstraintTable::read(BufReader::new(buf.as_slice()), &meshes).unwrap();
    assert_eq!(&back, table);
}

#[test]
fn constraint_table_rejects_foreign_meshes() {
    let problem = presets::nonconforming_pair(1e6, &presets::default_network(2, 1.0)).unwrap();
    let mut buf = Vec::new();
    problem.constraints().write(&mut buf).unwrap();
    let wrong = vec![
        presets::block([0.0, 0.0], [1.0, 1.0], [2, 2]).unwrap(),
        presets::block([1.0, 0.0], [1.0, 1.0], [2, 2]).unwrap(),
    ];
    assert!(ConstraintTable::read(BufReader::new(buf.as_slice()), &wrong).is_err());
}

#[test]
fn checkpoint_roundtrip_and_spec_check() {
    let spec = NetworkSpec {
        width: 12,
        depth: 3,
        rff_count: 6,
        seed: 17,
        ..NetworkSpec::new(3)
    };
    let params = init_network(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&params, &path).unwrap();
    let back = load_checkpoint(&path, &spec).unwrap();
    assert_eq!(back.spec, params.spec);
    assert_eq!(back.frequencies, params.frequencies);
    assert_eq!(back.trainable, params.trainable);
    let manifest = std::fs::read_to_string(dir.path().join("net.ckpt.manifest")).unwrap();
    assert!(manifest.starts_with("format DPNN1\n"));
    assert!(manifest.contains("tensor block1.gamma 12"));

    let other = NetworkSpec { width: 13, ..spec };
    assert!(load_checkpoint(&path, &other).is_err());
    std::fs::write(&path, b"DPNN1 truncated").unwrap();
    assert!(load_checkpoint(&path, &spec).is_err());
}
