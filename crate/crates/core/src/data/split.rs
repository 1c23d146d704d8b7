use rand::seq::index::sample;

use crate::error::{Result, TmmsbError};
use crate::model::TransactionLog;
use crate::simulate::seeded_rng;

/// Nodes ranked by messages sent (descending, ties by index), truncated to `top`.
pub fn top_senders(log: &TransactionLog, top: usize) -> Vec<usize> {
    let sent = log.sent_counts();
    let mut order: Vec<usize> = (0..log.num_nodes()).collect();
    order.sort_by(|&a, &b| sent[b].cmp(&sent[a]).then(a.cmp(&b)));
    order.truncate(top);
    order
}

/// Holds out `n_test` transactions drawn uniformly without replacement from
/// those sent by the `top_senders` most active nodes. Both halves keep the
/// original order and node indexing.
pub fn holdout_split(
    log: &TransactionLog,
    n_test: usize,
    top_senders_count: usize,
    seed: u64,
) -> Result<(TransactionLog, TransactionLog)> {
    let mut is_top = vec![false; log.num_nodes()];
    for s in top_senders(log, top_senders_count) {
        is_top[s] = true;
    }
    let eligible: Vec<usize> = log
        .transactions()
        .iter()
        .enumerate()
        .filter(|(_, t)| is_top[t.sender()])
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < n_test {
        return Err(TmmsbError::InsufficientData(format!(
            "{n_test} test messages requested but the top {top_senders_count} senders sent only {}",
            eligible.len()
        )));
    }
    let mut held = vec![false; log.len()];
    for pick in sample(&mut seeded_rng(seed), eligible.len(), n_test) {
        held[eligible[pick]] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (t, h) in log.transactions().iter().zip(held) {
        if h {
            test.push(t.clone());
        } else {
            train.push(t.clone());
        }
    }
    Ok((log.with_transactions(train), log.with_transactions(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Transaction;

    fn log() -> TransactionLog {
        let mut ts = Vec::new();
        for s in 0..5usize {
            for _ in 0..(s + 1) {
                ts.push(Transaction::new(s, [(s + 1) % 5]).unwrap());
            }
        }
        TransactionLog::new(5, ts).unwrap()
    }

    #[test]
    fn zero_test_messages() {
        let l = log();
        let (train, test) = holdout_split(&l, 0, 2, 1).unwrap();
        assert_eq!(train, l);
        assert!(test.is_empty());
    }

    #[test]
    fn test_senders_are_top_ranked() {
        let l = log();
        let (train, test) = holdout_split(&l, 6, 2, 9).unwrap();
        assert_eq!(train.len() + test.len(), l.len());
        assert!(test.transactions().iter().all(|t| t.sender() >= 3));
        assert!(holdout_split(&l, 10, 2, 9).is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let l = TransactionLog::new(
            3,
            vec![
                Transaction::new(2, [0]).unwrap(),
                Transaction::new(1, [0]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(top_senders(&l, 3), vec![1, 2, 0]);
    }
}
