use cp_regular::harris::{simulate, EventLog, FastContact, ProcessParams, SimOptions, Step};
use cp_regular::rng::{replica_seed, rng_from_seed};
use cp_regular::stats::ks_two_sample;
use cp_regular::{Multigraph, Network};
use proptest::prelude::*;

fn fast_counts(net: &Network, p: ProcessParams, t: f64, reps: u64, seed: u64) -> Vec<f64> {
    (0..reps)
        .map(|r| {
            let mut rng = rng_from_seed(replica_seed(seed, r));
            let mut e = FastContact::new(net, p, &[0]).unwrap();
            while let Step::Jump(_) = e.step(&mut rng, t) {}
            e.infected_count() as f64
        })
        .collect()
}

fn log_counts(net: &Network, p: ProcessParams, t: f64, reps: u64, seed: u64) -> Vec<f64> {
    (0..reps)
        .map(|r| {
            let log = EventLog::sample(net, p, t, replica_seed(seed, r)).unwrap();
            log.state_at(&[0], t).iter().filter(|&&b| b).count() as f64
        })
        .collect()
}

#[test]
fn fast_engine_matches_graphical_construction() {
    let graphs = [
        ("petersen-like", Multigraph::sample(10, 3, 11).unwrap().network().clone()),
        ("K4", Network::complete(4)),
        ("loops", Network::from_edges(3, &[(0, 0), (0, 1), (1, 2), (1, 2)]).unwrap()),
    ];
    for (name, net) in &graphs {
        for (i, t) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let p = ProcessParams::new(1.3).unwrap();
            let a = fast_counts(net, p, t, 100_000, 100 + i as u64);
            let b = log_counts(net, p, t, 100_000, 200 + i as u64);
            let ks = ks_two_sample(&a, &b);
            assert!(ks.p_value > 0.01, "{name} t={t}: {ks:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectories_are_deterministic(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let g = Multigraph::sample(50, 3, seed).unwrap();
        let p = ProcessParams::new(lambda).unwrap();
        let opts = SimOptions { grid: vec![0.0, 1.0, 2.5], record_jumps: true };
        let a = simulate(g.network(), &[0, 3], p, 5.0, seed ^ 7, &opts).unwrap();
        let b = simulate(g.network(), &[3, 0], p, 5.0, seed ^ 7, &opts).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn jumps_alternate_per_vertex(seed in any::<u64>(), lambda in 0.1f64..3.0) {
        let g = Multigraph::sample(20, 3, seed).unwrap();
        let p = ProcessParams::new(lambda).unwrap();
        let opts = SimOptions { grid: vec![], record_jumps: true };
        let tr = simulate(g.network(), &[0], p, 4.0, seed, &opts).unwrap();
        let mut state = vec![false; 20];
        state[0] = true;
        let mut last = 0.0;
        for j in &tr.jumps {
            prop_assert!(j.time >= last);
            last = j.time;
            prop_assert_ne!(state[j.vertex], j.infected);
            state[j.vertex] = j.infected;
        }
        prop_assert_eq!(state.iter().filter(|&&b| b).count(), tr.final_infected);
    }

    #[test]
    fn log_monotone_in_initial_set(seed in any::<u64>(), extra in prop::collection::vec(0usize..12, 0..5)) {
        let net = Multigraph::sample(12, 3, seed).unwrap().network().clone();
        let log = EventLog::sample(&net, ProcessParams::new(0.9).unwrap(), 2.0, seed).unwrap();
        let mut bigger = vec![0];
        bigger.extend(extra);
        for t in [0.25, 1.0, 2.0] {
            let small = log.state_at(&[0], t);
            let big = log.state_at(&bigger, t);
            prop_assert!(small.iter().zip(&big).all(|(s, b)| !s || *b));
        }
    }
}
