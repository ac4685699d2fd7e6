use std::collections::BTreeSet;

use fknockoff::simgen::{self, moralize, random_dag, Model, SimConfig, Truth};

/// Independent moral graph: undirected skeleton plus all pairs of parents
/// found by scanning every node's parent list.
fn pairing_oracle(p: usize, dag: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let mut out: BTreeSet<(usize, usize)> = dag.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    for child in 0..p {
        let parents: Vec<usize> = dag.iter().filter(|e| e.1 == child).map(|e| e.0).collect();
        for &a in &parents {
            for &b in &parents {
                if a < b {
                    out.insert((a, b));
                }
            }
        }
    }
    out
}

#[test]
fn moralization_matches_pairing_oracle() {
    for seed in 0..100 {
        let mut rng = simgen::rng_from(seed);
        let dag = random_dag(6, &mut rng).unwrap();
        let got: BTreeSet<_> = moralize(&dag).into_iter().collect();
        assert_eq!(got, pairing_oracle(6, &dag), "seed {seed}");
    }
}

#[test]
fn dag_edges_point_forward_and_cover_every_child() {
    for seed in 0..50 {
        let p = 5 + (seed as usize % 20);
        let dag = random_dag(p, &mut simgen::rng_from(seed)).unwrap();
        assert!(dag.iter().all(|&(a, b)| a < b));
        for child in 1..p {
            assert!(dag.iter().any(|e| e.1 == child), "child {child} has no parent");
        }
        let unique: BTreeSet<_> = dag.iter().collect();
        assert_eq!(unique.len(), dag.len());
        assert_eq!(dag.len(), p - 1 + p / 3);
    }
}

#[test]
fn small_textbook_graphs() {
    assert_eq!(moralize(&[(0, 1), (1, 2)]), vec![(0, 1), (1, 2)]);
    assert_eq!(moralize(&[(0, 2), (1, 2)]), vec![(0, 1), (0, 2), (1, 2)]);
}

#[test]
fn graph_data_is_reproducible_and_truth_is_moral() {
    let cfg = SimConfig::new(Model::Fggm, 30, 12, 5);
    let a = simgen::generate(&cfg, &mut simgen::rng_from(1)).unwrap();
    let b = simgen::generate(&cfg, &mut simgen::rng_from(1)).unwrap();
    assert_eq!(a.theta, b.theta);
    let Truth::Edges(edges) = &a.truth else {
        panic!("graph model must report edges");
    };
    assert_eq!(edges, &moralize(&a.dag));
    assert_eq!(a.theta.len(), 12);
    assert!(a.theta.iter().all(|t| t.nrows() == 30 && t.ncols() == simgen::FOURIER_SIZE));
}
