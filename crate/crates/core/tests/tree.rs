use std::collections::BTreeSet;

use cp_regular::harris::ProcessParams;
use cp_regular::rng::{replica_seed, rng_from_seed};
use cp_regular::stats;
use cp_regular::tree::{
    boundary, free_branches, pioneers, simulate_tree, LazyTree, TreeAddress, TreeContact, TreeShape,
};
use proptest::prelude::*;
use rand::Rng;

/// Full-tree and severed processes driven by one set of Poisson marks: the
/// severed copy only uses marks inside the subtree {root} ∪ branch 0.
/// Returns `(|xi_t|, |eta_t|)` and fails if eta ever leaves xi.
fn coupled_run(d: usize, lambda: f64, t: f64, seed: u64) -> (usize, usize) {
    let mut tree = LazyTree::new(TreeShape::new(d, false).unwrap(), 1_000_000);
    let mut rng = rng_from_seed(seed);
    let mut xi: Vec<usize> = vec![LazyTree::ROOT];
    let mut in_xi = vec![true];
    let mut in_eta = vec![true];
    let mut now = 0.0;
    let rate = 1.0 + lambda * d as f64;
    let in_severed = |tree: &LazyTree, x: usize| x == LazyTree::ROOT || tree.address(x).0[0] == 0;
    while !xi.is_empty() {
        now += -(1.0 - rng.random::<f64>()).ln() / (rate * xi.len() as f64);
        if now > t {
            break;
        }
        let i = rng.random_range(0..xi.len());
        let x = xi[i];
        if rng.random::<f64>() * rate < 1.0 {
            xi.swap_remove(i);
            in_xi[x] = false;
            in_eta[x] = false;
        } else {
            let y = tree.neighbor(x, rng.random_range(0..d)).unwrap();
            if y >= in_xi.len() {
                in_xi.resize(y + 1, false);
                in_eta.resize(y + 1, false);
            }
            if !in_xi[y] {
                in_xi[y] = true;
                xi.push(y);
            }
            if in_eta[x] && in_severed(&tree, x) && in_severed(&tree, y) {
                in_eta[y] = true;
            }
        }
        for v in 0..in_eta.len() {
            assert!(!in_eta[v] || in_xi[v], "severed process left the full one");
        }
    }
    (xi.len(), in_eta.iter().filter(|&&b| b).count())
}

#[test]
fn severed_process_is_dominated() {
    let (lambda, t, reps) = (1.0, 3.0, 3000u64);
    let mut alive_full = 0;
    let mut alive_sev = 0;
    for r in 0..reps {
        let (a, b) = coupled_run(3, lambda, t, replica_seed(5, r));
        assert!(b <= a);
        alive_full += (a > 0) as usize;
        alive_sev += (b > 0) as usize;
    }
    // The coupled marginals match the stand-alone simulators.
    let p = ProcessParams::new(lambda).unwrap();
    let direct = |severed: bool| {
        (0..reps)
            .filter(|&r| simulate_tree(3, p, t, severed, replica_seed(9, r), &[], 1_000_000).unwrap().survived)
            .count()
    };
    let z_full = stats::two_proportion_z(alive_full, reps as usize, direct(false), reps as usize);
    let z_sev = stats::two_proportion_z(alive_sev, reps as usize, direct(true), reps as usize);
    assert!(z_full.abs() < 3.5 && z_sev.abs() < 3.5, "{z_full} {z_sev}");
}

#[test]
fn mean_size_below_yule_mean() {
    let (d, lambda, reps) = (3usize, 1.0, 4000u64);
    let p = ProcessParams::new(lambda).unwrap();
    let grid = [1.0, 2.0, 3.0, 4.0];
    let runs: Vec<_> = (0..reps)
        .map(|r| simulate_tree(d, p, 4.0, false, replica_seed(3, r), &grid, 1_000_000).unwrap())
        .collect();
    for (g, &t) in grid.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.samples[g].infected as f64).collect();
        let yule = (lambda * d as f64 * t).exp();
        assert!(stats::mean(&xs) <= yule + 3.0 * stats::std_error(&xs), "t={t}");
    }
}

fn connected_subset(d: usize, picks: &[usize]) -> BTreeSet<TreeAddress> {
    let shape = TreeShape::new(d, false).unwrap();
    let mut set = BTreeSet::from([TreeAddress::root()]);
    for &p in picks {
        let members: Vec<TreeAddress> = set.iter().cloned().collect();
        let a = &members[p % members.len()];
        let nbrs = shape.neighbors(a);
        set.insert(nbrs[(p / members.len()) % nbrs.len()].clone());
    }
    set
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn free_branches_lower_bound(d in 3usize..6, picks in prop::collection::vec(any::<usize>(), 0..25)) {
        let set = connected_subset(d, &picks);
        let shape = TreeShape::new(d, false).unwrap();
        let k = set.len();
        prop_assert!(free_branches(shape, &set) >= k * (d - 2));
        // For connected sets every boundary-crossing edge is a free branch.
        let crossing: usize = set
            .iter()
            .map(|a| shape.neighbors(a).iter().filter(|b| !set.contains(*b)).count())
            .sum();
        prop_assert_eq!(free_branches(shape, &set), crossing);
        prop_assert_eq!(crossing, k * (d - 2) + 2);
    }

    #[test]
    fn snapshot_invariants(seed in any::<u64>(), lambda in 0.3f64..2.0, t in 0.1f64..3.0, severed in any::<bool>()) {
        let shape = TreeShape::new(3, severed).unwrap();
        let mut tree = LazyTree::new(shape, 1_000_000);
        let mut proc = TreeContact::new(&tree, ProcessParams::new(lambda).unwrap());
        let mut rng = rng_from_seed(seed);
        while proc.step(&mut tree, &mut rng, t).unwrap() {}
        let s = proc.snapshot(&tree);
        prop_assert!(s.current.is_subset(&s.history));
        prop_assert!(s.history.contains(&TreeAddress::root()));
        for a in &s.history {
            if let Some(p) = a.parent() {
                prop_assert!(s.history.contains(&p), "history not connected");
            }
        }
        let pio = pioneers(&s);
        let expect: BTreeSet<_> = boundary(shape, &s.history).intersection(&s.current).cloned().collect();
        prop_assert_eq!(&pio.members, &expect);
        prop_assert_eq!(pio.members.len(), proc.pioneer_count());
        prop_assert_eq!(s.history.len(), proc.history_size());
        if severed {
            prop_assert!(s.history.iter().all(|a| a.0.first().is_none_or(|&c| c == 0)));
        }
    }
}
