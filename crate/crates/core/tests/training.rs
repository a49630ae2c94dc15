//! Training loop: determinism, worker-count independence, schedule and
//! history bookkeeping.

use dpinn::model::NetworkSpec;
use dpinn::presets;
use dpinn::problem::Problem;
use dpinn::train::{evaluate, train, train_parallel, train_single, TrainConfig, TrainHistory};
use dpinn::Error;

fn small_net() -> NetworkSpec {
    NetworkSpec {
        width: 16,
        depth: 2,
        rff_count: 8,
        output_scale: 0.1,
        ..NetworkSpec::new(2)
    }
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 3,
        log_every: 0,
        ..Default::default()
    }
}

fn bits(h: &TrainHistory) -> Vec<[u64; 4]> {
    h.records
        .iter()
        .map(|r| {
            [
                r.loss.to_bits(),
                r.strain_energy.to_bits(),
                r.external_work.to_bits(),
                r.lr.to_bits(),
            ]
        })
        .collect()
}

fn pair() -> Problem {
    presets::nonconforming_pair(1e7, &small_net()).unwrap()
}

#[test]
fn reruns_are_bitwise_identical() {
    let p = pair();
    let (a, ha) = train_single(&p, &config(40)).unwrap();
    let (b, hb) = train_single(&p, &config(40)).unwrap();
    assert_eq!(bits(&ha), bits(&hb));
    assert!(a.iter().zip(&b).all(|(x, y)| x.trainable == y.trainable));
    assert_eq!(ha.records.len(), 40);
}

#[test]
fn one_worker_matches_single_path() {
    let p = pair();
    let (_, ha) = train_single(&p, &config(30)).unwrap();
    let (_, hb) = train_parallel(&p, &config(30)).unwrap();
    assert_eq!(bits(&ha), bits(&hb));
}

#[test]
fn two_workers_match_single_path() {
    let p = pair();
    let (a, ha) = train_single(&p, &config(60)).unwrap();
    let (b, hb) = train(
        &p,
        &TrainConfig {
            workers: 2,
            ..config(60)
        },
    )
    .unwrap();
    assert_eq!(bits(&ha), bits(&hb));
    assert!(a.iter().zip(&b).all(|(x, y)| x.trainable == y.trainable));
}

#[test]
fn shared_network_over_two_subdomains() {
    let p = presets::gap_pair(0.03, 3, 1e6, true, &small_net()).unwrap();
    let (nets, h) = train(&p, &config(20)).unwrap();
    assert_eq!(nets.len(), 1);
    assert_eq!(h.records.len(), 20);
    assert!(train(
        &p,
        &TrainConfig {
            workers: 2,
            ..config(5)
        }
    )
    .is_err());
}

#[test]
fn different_seeds_differ() {
    let p = pair();
    let (_, ha) = train(&p, &config(3)).unwrap();
    let (_, hb) = train(&p, &TrainConfig { seed: 4, ..config(3) }).unwrap();
    assert_ne!(bits(&ha), bits(&hb));
}

#[test]
fn zero_epochs_rejected() {
    assert!(matches!(train(&pair(), &config(0)), Err(Error::Validation(_))));
}

/// Default optimizer settings and seed on an 8 x 4 cantilever, with the
/// output scale set near the expected tip deflection (about 3 cm).
#[test]
fn loss_decreases_early_on_small_cantilever() {
    let p = presets::cantilever(8, 4, 1e6, &presets::default_network(2, 0.03)).unwrap();
    let cfg = TrainConfig {
        epochs: 111,
        log_every: 0,
        ..Default::default()
    };
    let (_, h) = train(&p, &cfg).unwrap();
    let losses = h.losses();
    let rises: Vec<usize> = (10..110)
        .filter(|&e| losses[e + 1] >= losses[e])
        .map(|e| e + 1)
        .collect();
    assert!(rises.is_empty(), "loss rose at epochs {rises:?}");
}

#[test]
fn evaluation_respects_constraints_and_boundary_values() {
    let p = pair();
    let (nets, _) = train(&p, &config(10)).unwrap();
    let field = evaluate(&nets, &p).unwrap();
    let parts = field.subdomain_fields(&p);
    assert_eq!(p.constraints().max_jump(&parts).unwrap(), 0.0);
    for &n in p.subdomains()[0].mesh.node_set("left").unwrap() {
        assert_eq!(parts[0].row(n).to_vec(), vec![0.0, 0.0]);
    }
}

#[test]
fn history_csv_layout() {
    let (_, h) = train(&pair(), &config(4)).unwrap();
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,loss,strain_energy,external_work,lr,wall_ms");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(lines[4].split(',').count(), 6);
}
