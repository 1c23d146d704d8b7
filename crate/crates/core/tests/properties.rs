//! Randomized invariants of the model, metrics and data layer.

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use tmmsb::data::{
    holdout_split, ordered_adjacency, read_log, to_counts, top_senders, write_log, LogFormat,
};
use tmmsb::inference::align::{align_labels, alignment_costs, permutation_cost};
use tmmsb::inference::{fit, FitConfig};
use tmmsb::metrics::{bic, group_summaries_with, mean_rank, predicted_frequency_with, soft_bcubed};
use tmmsb::{receive_matrix, MembershipMatrix, Transaction, TransactionLog};

fn membership(m: usize, k: usize) -> impl Strategy<Value = MembershipMatrix> {
    prop::collection::vec(0.001f64..1.0, m * k).prop_map(move |raw| {
        let weights = Array2::from_shape_vec((m, k), raw).unwrap();
        MembershipMatrix::from_weights(&weights).unwrap()
    })
}

fn permutation(k: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..k).collect::<Vec<_>>()).prop_shuffle()
}

fn transaction_log(m: usize, max_n: usize) -> impl Strategy<Value = TransactionLog> {
    prop::collection::vec(
        (0..m, prop::collection::btree_set(0..m, 1..m.min(5))),
        1..max_n,
    )
    .prop_filter_map("sender among recipients", move |raw| {
        let ts: Vec<Transaction> = raw
            .into_iter()
            .filter_map(|(s, r): (usize, BTreeSet<usize>)| {
                let r: Vec<usize> = r.into_iter().filter(|&j| j != s).collect();
                Transaction::new(s, r).ok()
            })
            .collect();
        (!ts.is_empty()).then(|| TransactionLog::new(m, ts).unwrap())
    })
}

fn b_matrix(k: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.001f64..0.999, k * k)
        .prop_map(move |v| Array2::from_shape_vec((k, k), v).unwrap())
}

fn permute_square(b: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(b.dim(), |(r, c)| b[[perm[r], perm[c]]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bcubed_of_self_is_one(x in membership(9, 4)) {
        let s = soft_bcubed(&x, &x).unwrap();
        prop_assert!((s.precision - 1.0).abs() < 1e-12);
        prop_assert!((s.recall - 1.0).abs() < 1e-12);
        prop_assert!((s.f_measure - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bcubed_scores_are_in_unit_interval(a in membership(8, 3), b in membership(8, 5)) {
        let s = soft_bcubed(&a, &b).unwrap();
        for v in [s.precision, s.recall, s.f_measure] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bcubed_ignores_column_order(
        a in membership(7, 4),
        b in membership(7, 3),
        pa in permutation(4),
        pb in permutation(3),
    ) {
        let s = soft_bcubed(&a, &b).unwrap();
        let t = soft_bcubed(&a.permute_columns(&pa), &b.permute_columns(&pb)).unwrap();
        prop_assert!((s.precision - t.precision).abs() < 1e-12);
        prop_assert!((s.recall - t.recall).abs() < 1e-12);
    }

    #[test]
    fn rank_is_bounded(
        log in transaction_log(9, 30),
        raw in prop::collection::vec(0.0f64..1.0, 81),
    ) {
        let p = Array2::from_shape_vec((9, 9), raw).unwrap();
        let score = mean_rank(&p, &log).unwrap();
        let mean_recipients = log.total_recipients() as f64 / log.len() as f64;
        prop_assert!(score >= mean_recipients - 1e-12);
        prop_assert!(score <= 8.0);
    }

    #[test]
    fn raising_a_recipient_never_hurts(
        log in transaction_log(7, 10),
        raw in prop::collection::vec(0.0f64..1.0, 49),
        bump in 0.0f64..1.0,
    ) {
        let p = Array2::from_shape_vec((7, 7), raw).unwrap();
        let t = &log.transactions()[0];
        let single = TransactionLog::new(7, vec![t.clone()]).unwrap();
        let mut better = p.clone();
        let r = t.recipients()[0];
        better[[t.sender(), r]] += bump;
        prop_assert!(mean_rank(&better, &single).unwrap() <= mean_rank(&p, &single).unwrap());
    }

    #[test]
    fn receive_probabilities_ignore_labels(
        pi in membership(6, 3),
        b in b_matrix(3),
        perm in permutation(3),
    ) {
        let p = receive_matrix(&pi, &b);
        let q = receive_matrix(&pi.permute_columns(&perm), &permute_square(&b, &perm));
        for (x, y) in p.iter().zip(q.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn frequency_matrix_rows_and_labels(
        log in transaction_log(6, 20),
        pi in membership(6, 3),
        b in b_matrix(3),
        perm in permutation(3),
    ) {
        let f = predicted_frequency_with(&pi, &b, &log).unwrap();
        let g = predicted_frequency_with(
            &pi.permute_columns(&perm),
            &permute_square(&b, &perm),
            &log,
        )
        .unwrap();
        let sent = log.sent_counts();
        for i in 0..6 {
            let mut want = 0.0;
            for j in (0..6).filter(|&j| j != i) {
                let mut p = 0.0;
                for a in 0..3 {
                    for l in 0..3 {
                        p += pi.as_array()[[i, a]] * b[[a, l]] * pi.as_array()[[j, l]];
                    }
                }
                want += sent[i] as f64 * p;
            }
            prop_assert!((f.row(i).sum() - want).abs() < 1e-9);
            prop_assert_eq!(f[[i, i]], 0.0);
        }
        for (x, y) in f.iter().zip(g.iter()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn group_sizes_add_up(log in transaction_log(8, 20), pi in membership(8, 4), b in b_matrix(4)) {
        let s = group_summaries_with(&pi, &b, &log).unwrap();
        let expected: f64 = s.groups.iter().map(|g| g.expected_size).sum();
        let hard: usize = s.groups.iter().map(|g| g.hard_size).sum();
        prop_assert!((expected - 8.0).abs() < 1e-9);
        prop_assert_eq!(hard, 8);
    }

    #[test]
    fn bic_decreases_in_k(log_l in -1e5f64..0.0, y in 2usize..100_000) {
        for k in 1..10 {
            prop_assert!(bic(log_l, k + 1, y) < bic(log_l, k, y));
        }
    }

    #[test]
    fn log_round_trips(log in transaction_log(10, 40)) {
        for format in [LogFormat::Jsonl, LogFormat::Csv] {
            let mut buf = Vec::new();
            write_log(&log, &mut buf, format).unwrap();
            let back = read_log(buf.as_slice(), format).unwrap();
            prop_assert_eq!(back.num_nodes(), log.num_nodes());
            prop_assert_eq!(back.transactions(), log.transactions());
        }
    }

    #[test]
    fn count_total_is_recipient_total(log in transaction_log(7, 40)) {
        prop_assert_eq!(to_counts(&log).total(), log.total_recipients() as u64);
    }

    #[test]
    fn holdout_senders_are_top_ranked(log in transaction_log(8, 60), seed in any::<u64>()) {
        let top: BTreeSet<usize> = top_senders(&log, 3).into_iter().collect();
        let eligible = log
            .transactions()
            .iter()
            .filter(|t| top.contains(&t.sender()))
            .count();
        let n_test = eligible / 2;
        let (train, test) = holdout_split(&log, n_test, 3, seed).unwrap();
        prop_assert_eq!(test.len(), n_test);
        prop_assert_eq!(train.len() + test.len(), log.len());
        prop_assert!(test.transactions().iter().all(|t| top.contains(&t.sender())));
    }

    #[test]
    fn ordered_adjacency_is_a_permutation(
        log in transaction_log(6, 20),
        labels in prop::collection::vec(0usize..3, 6),
    ) {
        let counts = to_counts(&log);
        let pi = MembershipMatrix::one_hot(&labels, 3).unwrap();
        let ord = ordered_adjacency(&counts.counts, &pi).unwrap();
        prop_assert!(ord.groups.windows(2).all(|w| w[0] <= w[1]));
        for r in 0..6 {
            for c in 0..6 {
                prop_assert_eq!(ord.matrix[[r, c]], counts.counts[[ord.order[r], ord.order[c]]]);
            }
        }
    }

    #[test]
    fn alignment_is_the_best_permutation(reference in membership(10, 4), cand in membership(10, 4)) {
        let cost = alignment_costs(&reference, &cand).unwrap();
        let found = permutation_cost(&cost, &align_labels(&reference, &cand).unwrap());
        let mut best = f64::INFINITY;
        let mut p = [0usize, 1, 2, 3];
        loop {
            best = best.min(permutation_cost(&cost, &p));
            // Next permutation in lexicographic order.
            let Some(i) = (0..3).rev().find(|&i| p[i] < p[i + 1]) else { break };
            let j = (i + 1..4).rev().find(|&j| p[j] > p[i]).unwrap();
            p.swap(i, j);
            p[i + 1..].reverse();
        }
        prop_assert!((found - best).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fits_are_normalized_and_monotone(log in transaction_log(6, 25), k in 1usize..4, seed in 0u64..1000) {
        let config = FitConfig { k, seed, max_outer_iters: 15, ..FitConfig::default() };
        let model = fit(&log, &config).unwrap();
        for w in model.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
        for row in model.memberships.as_array().rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        prop_assert!(model.state.validate().is_ok());
        prop_assert!(model.b().iter().all(|&v| (1e-9..=1.0 - 1e-9).contains(&v)));
    }

    #[test]
    fn extrapolated_and_refined_fits_stay_monotone(log in transaction_log(7, 30), seed in 0u64..1000) {
        let config = FitConfig {
            k: 3,
            seed,
            extrapolate: true,
            refine_rounds: 2,
            max_outer_iters: 20,
            ..FitConfig::default()
        };
        let model = fit(&log, &config).unwrap();
        for w in model.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
    }
}
