use cp_regular::harris::{record_reinfections, ProcessParams};
use cp_regular::oracle::{exact_extinction_expectation, exact_marginal, ContactChain};
use cp_regular::rng::replica_seed;
use cp_regular::{ExactChain, Multigraph, Network};
use proptest::prelude::*;

fn small_graph(kind: u8, n: usize, seed: u64) -> Network {
    match kind % 4 {
        0 => Network::path(n),
        1 => Network::cycle(n.max(3)),
        2 => Network::complete(n),
        _ => Multigraph::sample(2 * (n / 2).max(1), 3, seed).unwrap().network().clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn marginal_is_a_distribution(kind in any::<u8>(), n in 2usize..7, lambda in 0.0f64..3.0,
                                   t in 0.0f64..6.0, seed in any::<u64>()) {
        let net = small_graph(kind, n, seed);
        let m = exact_marginal(&net, lambda, t, &[0]).unwrap();
        let total: f64 = m.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
        prop_assert!(m.iter().all(|&p| p > -1e-12));
    }

    #[test]
    fn extinction_time_monotone_in_lambda(kind in any::<u8>(), n in 2usize..6, seed in any::<u64>()) {
        let net = small_graph(kind, n, seed);
        let mut last = 0.0;
        for i in 0..8 {
            let e = exact_extinction_expectation(&net, 0.25 * i as f64, &[0]).unwrap();
            prop_assert!(e >= last - 1e-9);
            last = e;
        }
    }

    #[test]
    fn extinction_time_is_the_integrated_survival(kind in any::<u8>(), n in 2usize..5, seed in any::<u64>()) {
        // E[tau] = int_0^inf P(tau > t) dt, by the trapezoid rule on a fine grid.
        let net = small_graph(kind, n, seed);
        let chain = ExactChain::new(&net, 0.7).unwrap();
        let e = chain.exact_extinction_expectation(&[0]).unwrap();
        let h = 0.02;
        let alive = |t: f64| 1.0 - chain.exact_marginal(t, &[0]).unwrap()[0];
        let mut integral = 0.0;
        let mut prev = alive(0.0);
        let mut t = 0.0;
        while prev > 1e-7 {
            t += h;
            let cur = alive(t);
            integral += 0.5 * h * (prev + cur);
            prev = cur;
        }
        prop_assert!((integral - e).abs() < 1e-3 * e.max(1.0), "{integral} vs {e}");
    }
}

#[test]
fn first_reinfection_law_on_k2() {
    let lambda = 1.5;
    let net = Network::path(2);
    let (p, mean) = ContactChain::<f64>::new(&net, lambda).unwrap().reinfection_first_passage(0).unwrap();
    let params = ProcessParams::new(lambda).unwrap();
    let reps = 40_000u64;
    let mut hits = Vec::new();
    for r in 0..reps {
        let rec = record_reinfections(&net, 0, params, f64::INFINITY, 1, replica_seed(3, r)).unwrap();
        if let Some(t) = rec.kth(1) {
            hits.push(t);
        }
    }
    let p_hat = hits.len() as f64 / reps as f64;
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    assert!((p_hat - p).abs() < 4.0 * se, "{p_hat} vs {p}");
    let m = cp_regular::stats::mean(&hits);
    let mse = cp_regular::stats::std_error(&hits);
    assert!((m - mean).abs() < 4.0 * mse, "{m} vs {mean}");
}

#[test]
fn rejects_large_graphs() {
    assert!(ExactChain::new(&Network::path(13), 1.0).is_err());
    assert!(ExactChain::with_limit(&Network::path(13), 1.0, 13).is_ok());
}
