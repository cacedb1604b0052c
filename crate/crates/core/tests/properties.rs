use std::collections::BTreeMap;
use std::io::Cursor;

use chrono::{NaiveDate, TimeDelta};
use num_bigint::BigUint;
use optimev_core::classifier::{ClassifiedTx, Involvement, Outcome, Purpose};
use optimev_core::detector::{extract_features, is_cyclic};
use optimev_core::ingest::{self, SwapEvent, SwapIndex, TransactionRecord, TxStatus};
use optimev_core::metrics::{self, DailyAccumulator};
use optimev_core::rank;
use optimev_core::similarity::{cosine, disassemble, ngram_vector};
use optimev_core::stats::{self, DesignMatrix};
use optimev_core::types::{Address, Chain, TxHash};
use proptest::prelude::*;

fn addr(n: u8) -> Address {
    let mut b = [0u8; 20];
    b[19] = n;
    Address(b)
}

fn hash(n: u16) -> TxHash {
    let mut b = [0u8; 32];
    b[30..].copy_from_slice(&n.to_be_bytes());
    TxHash(b)
}

prop_compose! {
    fn tx_record(n: u16)(
        from in 0u8..8,
        to in proptest::option::of(0u8..8),
        block in 1u64..1_000_000,
        day in 0i64..4,
        secs in 0i64..86_400,
        gas in 21_000u64..2_000_000,
        price in 1u64..500_000_000_000,
        calldata in proptest::collection::vec(any::<u8>(), 0..40),
        revert in any::<bool>(),
    ) -> TransactionRecord {
        TransactionRecord {
            hash: hash(n),
            from_addr: addr(from),
            to_addr: to.map(addr),
            block_number: block,
            timestamp: 1_710_201_600 + day * 86_400 + secs,
            gas_used: gas,
            gas_price: BigUint::from(price),
            calldata,
            status: if revert { TxStatus::Revert } else { TxStatus::Success },
            chain: Chain::Base,
        }
    }
}

fn txs(max: usize) -> impl Strategy<Value = Vec<TransactionRecord>> {
    (1..max).prop_flat_map(|n| (0..n as u16).map(tx_record).collect::<Vec<_>>())
}

fn classified_for(txs: &[TransactionRecord], labels: &[u8]) -> Vec<ClassifiedTx> {
    txs.iter()
        .zip(labels.iter().cycle())
        .map(|(t, l)| {
            let purpose = Purpose::ALL[(*l & 1) as usize];
            let involvement = Involvement::ALL[(*l as usize >> 1) % 3];
            let outcome = if involvement == Involvement::Trade { Outcome::Success } else { Outcome::ALL[(*l >> 3) as usize & 1] };
            ClassifiedTx { hash: t.hash, purpose, involvement, outcome }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transactions_round_trip(records in txs(30)) {
        let mut buf = Vec::new();
        ingest::write_transactions(&mut buf, &records).unwrap();
        let back = ingest::read_transactions(Cursor::new(buf), Chain::Base).unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn swap_index_ignores_line_order(
        rows in proptest::collection::vec((0u16..6, 0u8..5, 1u8..5, 1u64..1000, 1u64..1000), 1..30),
        seed in any::<u64>(),
    ) {
        let mut index = SwapIndex::new();
        for (i, (h, sold, off, a, b)) in rows.iter().enumerate() {
            index.entry(hash(*h)).or_default().push(SwapEvent {
                tx_hash: hash(*h),
                token_sold: addr(*sold),
                token_bought: addr((sold + off) % 5),
                amount_sold: BigUint::from(*a),
                amount_bought: BigUint::from(*b),
                evt_index: i as u64,
            });
        }
        let mut buf = Vec::new();
        ingest::write_swaps(&mut buf, &index).unwrap();
        let mut lines: Vec<&str> = std::str::from_utf8(&buf).unwrap().lines().collect();
        let mut state = seed;
        for i in (1..lines.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            lines.swap(i, (state >> 33) as usize % (i + 1));
        }
        let shuffled = lines.join("\n");
        prop_assert_eq!(ingest::read_swaps(Cursor::new(shuffled)).unwrap(), index);
    }

    #[test]
    fn extract_features_ignores_input_order(
        legs in proptest::collection::vec((0u8..4, 1u8..4, 1u64..100, 1u64..100), 1..6),
    ) {
        let events: Vec<SwapEvent> = legs
            .iter()
            .enumerate()
            .map(|(i, (s, off, a, b))| SwapEvent {
                tx_hash: TxHash::default(),
                token_sold: addr(*s),
                token_bought: addr((s + off) % 4),
                amount_sold: BigUint::from(*a),
                amount_bought: BigUint::from(*b),
                evt_index: i as u64 * 2,
            })
            .collect();
        let mut reversed = events.clone();
        reversed.reverse();
        let a = extract_features(&events).unwrap();
        let b = extract_features(&reversed).unwrap();
        prop_assert_eq!(is_cyclic(&a.0), is_cyclic(&b.0));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn accumulator_merge_commutes_and_adds(records in txs(40), labels in proptest::collection::vec(any::<u8>(), 1..8), split in 0usize..40) {
        let classified = classified_for(&records, &labels);
        let split = split.min(records.len());
        let mut whole = DailyAccumulator::default();
        let mut left = DailyAccumulator::default();
        let mut right = DailyAccumulator::default();
        for (i, (t, c)) in records.iter().zip(&classified).enumerate() {
            whole.add(t, c);
            if i < split { left.add(t, c) } else { right.add(t, c) }
        }
        let lr = left.clone().merge(right.clone());
        let rl = right.merge(left);
        prop_assert_eq!(&lr, &rl);
        prop_assert_eq!(&lr, &whole);

        let days = whole.finish();
        let gas: u128 = days.iter().map(|d| d.total().gas_used).sum();
        prop_assert_eq!(gas, records.iter().map(|t| t.gas_used as u128).sum::<u128>());
        for d in &days {
            let parts: u128 = d.triples.values().map(|s| s.gas_used).sum();
            prop_assert_eq!(parts, d.total().gas_used);
            let fees: BigUint = d.triples.values().map(|s| s.fees_paid.clone()).sum();
            prop_assert_eq!(fees, d.total().fees_paid);
        }
        prop_assert_eq!(metrics::aggregate_daily(&classified, &records).unwrap(), days);
    }

    #[test]
    fn cosine_symmetric_and_bounded(a in proptest::collection::vec(any::<u8>(), 0..200), b in proptest::collection::vec(any::<u8>(), 0..200), n in 1usize..7) {
        let va = ngram_vector(&disassemble(&a), n);
        let vb = ngram_vector(&disassemble(&b), n);
        let ab = cosine(&va, &vb);
        prop_assert_eq!(ab, cosine(&vb, &va));
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn ngram_chunk_count(code in proptest::collection::vec(any::<u8>(), 0..300), n in 1usize..8) {
        let seq = disassemble(&code);
        let v = ngram_vector(&seq, n);
        let expect = (seq.0.len() + 1).saturating_sub(n) as u64;
        prop_assert_eq!(v.total_chunks, expect);
        prop_assert_eq!(v.counts.values().sum::<u64>(), expect);
    }

    #[test]
    fn difference_then_cumsum_reconstructs(start in -1e6f64..1e6, steps in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
        let d0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let mut series = vec![(d0, start)];
        for (i, s) in steps.iter().enumerate() {
            series.push((d0 + TimeDelta::days(i as i64 + 1), series[i].1 + s));
        }
        let (diff, skipped) = stats::first_difference(&series, false).unwrap();
        prop_assert_eq!(skipped, 0);
        let mut acc = start;
        for ((d, v), (d2, orig)) in diff.iter().zip(&series[1..]) {
            acc += v;
            prop_assert_eq!(d, d2);
            prop_assert!((acc - orig).abs() <= 1e-6 * orig.abs().max(1.0));
        }
    }

    #[test]
    fn ols_scale_equivariance(
        rows in proptest::collection::vec((-10f64..10.0, -10f64..10.0, -1f64..1.0), 8..60),
        c in prop_oneof![-100f64..-0.01, 0.01f64..100.0],
    ) {
        let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.5 + 2.0 * r.0 - r.1 + r.2).collect();
        let x = DesignMatrix::with_intercept(vec![("a".into(), x1), ("b".into(), x2)]);
        let Ok(fit) = stats::ols_fit(&y, &x) else { return Ok(()) };
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let fit2 = stats::ols_fit(&scaled, &x).unwrap();
        for (b, b2) in fit.beta().iter().zip(fit2.beta()) {
            prop_assert!((b * c - b2).abs() <= 1e-8 * (b * c).abs().max(1.0));
        }
        prop_assert!((fit.r_squared - fit2.r_squared).abs() <= 1e-9);
    }

    #[test]
    fn histogram_percentile_matches_sorted(values in proptest::collection::vec(0u32..50, 1..100), p in 1u32..=100) {
        let mut sorted = values.clone();
        sorted.sort_unstable();
        let mut hist = BTreeMap::new();
        for v in &values {
            *hist.entry(*v).or_insert(0u64) += 1;
        }
        prop_assert_eq!(rank::percentile_histogram(&hist, p), rank::percentile_sorted(&sorted, p));
        // Smallest value whose cumulative share reaches p percent.
        let n = values.len() as u64;
        let oracle = sorted.iter().find(|v| values.iter().filter(|w| w <= v).count() as u64 * 100 >= p as u64 * n);
        prop_assert_eq!(rank::percentile_sorted(&sorted, p), oracle);
    }
}
