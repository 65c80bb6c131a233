use rand::Rng;

use phyloclust::likelihood::RegimeLabeling;
use phyloclust::mcmc::{enumerate_moves, reverse};
use phyloclust::rng;
use phyloclust::simulate::random_topology;
use phyloclust::substmodel::BranchRegime;
use phyloclust::tree::{patristic_distances, ClusterAssignment, Topology};

fn random_tree(n: usize, seed: u64) -> Topology {
    let mut r = rng::stream(seed, 0);
    let mut t = random_topology(n, &mut r).unwrap();
    for v in 0..t.n_nodes() {
        if v != t.root() {
            t.set_length(v, Some(r.random_range(0.0..0.2)));
        }
    }
    t
}

fn random_clade_partition(t: &Topology, seed: u64) -> ClusterAssignment {
    let mut r = rng::stream(seed, 1);
    let k = r.random_range(1..=t.n_tips());
    let labels: Vec<usize> = (0..t.n_tips()).map(|_| r.random_range(0..k)).collect();
    t.refine_to_clades(&labels)
}

/// Ancestors of `v` from itself up to the root, with the distance from `v`.
fn path_to_root(t: &Topology, mut v: usize) -> Vec<(usize, f64)> {
    let mut out = vec![(v, 0.0)];
    let mut d = 0.0;
    while let Some(p) = t.parent(v) {
        d += t.length(v).unwrap();
        out.push((p, d));
        v = p;
    }
    out
}

#[test]
fn patristic_distances_equal_path_sums() {
    for n in 2..=12 {
        for seed in 0..5 {
            let t = random_tree(n, 100 * n as u64 + seed);
            let d = patristic_distances(&t).unwrap();
            let tips: Vec<usize> = t.tip_labels().iter().map(|l| t.tip_id(l).unwrap()).collect();
            for (i, &a) in tips.iter().enumerate() {
                let up_a = path_to_root(&t, a);
                for (j, &b) in tips.iter().enumerate() {
                    let up_b = path_to_root(&t, b);
                    let brute = up_a
                        .iter()
                        .find_map(|&(x, da)| up_b.iter().find(|&&(y, _)| y == x).map(|&(_, db)| da + db))
                        .unwrap();
                    assert!((d.get(i, j) - brute).abs() < 1e-12, "n={n} ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn within_edges_are_those_inside_one_cluster() {
    for seed in 0..200 {
        let t = random_tree(2 + seed as usize % 10, seed);
        let c = random_clade_partition(&t, seed);
        let labels = RegimeLabeling::new(&t, &c).unwrap();
        for v in 0..t.n_nodes() {
            let Some(p) = t.parent(v) else { continue };
            let tips = t.clade(p);
            let first = c.labels()[tips[0]];
            let inside = tips.iter().all(|&x| c.labels()[x] == first);
            let expected = if inside { BranchRegime::Within } else { BranchRegime::Between };
            assert_eq!(labels.regime(v), Some(expected), "seed {seed}, node {v}");
        }
    }
}

#[test]
fn every_move_has_its_reverse() {
    for seed in 0..100 {
        let t = random_tree(2 + seed as usize % 9, seed);
        let c = random_clade_partition(&t, seed);
        for (m, next) in enumerate_moves(&t, &c).unwrap() {
            assert!(t.is_clade_partition(&next));
            let back = enumerate_moves(&t, &next).unwrap();
            let undo = reverse(m, &t);
            assert!(
                back.iter().any(|(b, prev)| *b == undo && *prev == c),
                "seed {seed}: {m:?} has no reverse"
            );
        }
    }
}

#[test]
fn nni_twice_is_identity() {
    for seed in 0..50 {
        let t = random_tree(4 + seed as usize % 6, seed);
        for v in t.internal_nodes().collect::<Vec<_>>() {
            for which in 0..2 {
                if let Ok(once) = t.nni(v, which) {
                    assert_ne!(once.clade_sets(), t.clade_sets());
                    assert_eq!(once.nni(v, which).unwrap().clade_sets(), t.clade_sets());
                }
            }
        }
    }
}
