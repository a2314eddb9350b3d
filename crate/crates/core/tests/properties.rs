mod common;

use proptest::prelude::*;
use serde_json::{json, Value};

use sisim::exec::Execution;
use sisim::hpc::{LatencyTable, Target};
use sisim::kernel::{EventKind, EventPayload, Kernel};
use sisim::report::{emit_report, parse_report};
use sisim::scenario::parse;
use sisim::soc::simulate;

#[derive(Debug, Clone)]
struct Tag(usize);

impl EventPayload for Tag {
    fn kind(&self) -> EventKind {
        EventKind::TxnIssue
    }
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        "[a-z_]{0,12}".prop_map(Value::from),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::from),
            prop::collection::btree_map(
                prop::sample::select(vec![
                    "horizon", "seed", "masters", "name", "workload", "quotas", "subject", "limit",
                    "mode", "redundant_pairs", "watchdogs", "faults", "target", "at", "policy",
                    "interconnect", "observers", "injectors", "sequence", "explicit", "synthetic",
                ])
                .prop_map(String::from),
                inner,
                0..6
            )
            .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn small_scenario() -> impl Strategy<Value = Value> {
    (1usize..4, 0u64..400, any::<u64>(), prop::bool::ANY, 0u64..60).prop_map(|(n, horizon, seed, pair, limit)| {
        let mut masters: Vec<Value> = (0..n)
            .map(|i| json!({"name": format!("m{i}"), "workload": {"synthetic": {
                "period": 7 + 5 * i as u64, "jitter": 3, "op": "write", "size_bytes": 16, "burst": i % 2 == 0}}}))
            .collect();
        let mut doc = json!({"horizon": horizon, "seed": seed,
                             "quotas": [{"subject": "m0", "limit": limit, "mode": "suffered", "rearm": true}],
                             "observers": [{"name": "o", "capacity": 8}]});
        if pair {
            masters.push(json!({"name": "h"}));
            masters.push(json!({"name": "t"}));
            doc["redundant_pairs"] = json!([{"id": "p", "head": "h", "trail": "t", "threshold": 5,
                                              "stream": {"synthetic": {"length": 20, "store_rate_percent": 25}}}]);
        }
        doc["masters"] = json!(masters);
        doc
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kernel_processes_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 0..40), horizon in 0u64..60) {
        let mut k = Kernel::new();
        for (i, &t) in times.iter().enumerate() {
            k.schedule(t, Tag(i)).unwrap();
        }
        let mut seen = Vec::new();
        let end = k.run_until(horizon, |k, ev| {
            assert_eq!(k.now(), ev.at);
            seen.push((ev.at, ev.payload.0));
        }).unwrap();
        prop_assert_eq!(end, horizon);
        let mut expected: Vec<_> = times.iter().copied().enumerate().filter(|&(_, t)| t <= horizon).map(|(i, t)| (t, i)).collect();
        expected.sort();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn parse_never_panics_on_arbitrary_text(text in "\\PC{0,200}") {
        let _ = parse(&text);
    }

    #[test]
    fn parse_never_panics_on_arbitrary_json(doc in json_value()) {
        if let Err(sisim::scenario::ParseError::Invalid(errs)) = parse(&doc.to_string()) {
            prop_assert!(!errs.is_empty());
        }
    }

    #[test]
    fn canonical_report_is_a_fixed_point(doc in small_scenario()) {
        let cfg = parse(&doc.to_string()).unwrap();
        let text = emit_report(&sisim::run(&cfg));
        prop_assert_eq!(emit_report(&parse_report(&text).unwrap()), text);
    }

    #[test]
    fn reports_are_internally_consistent(doc in small_scenario()) {
        let cfg = parse(&doc.to_string()).unwrap();
        let out = simulate(&cfg);
        let m = &out.report.interference;
        let total: u64 = m.matrix.values().flat_map(|r| r.values()).sum();
        prop_assert_eq!(total, m.total_wait_cycles);
        prop_assert_eq!(m.caused.values().sum::<u64>(), total);
        prop_assert_eq!(m.suffered.values().sum::<u64>(), total);
        for (victim, row) in &m.matrix {
            prop_assert_eq!(row.values().sum::<u64>(), m.suffered[victim]);
            prop_assert_eq!(row.get(victim).copied().unwrap_or(0), 0);
        }
        let t = &out.report.transactions;
        prop_assert_eq!(t.issued, t.completed + t.dropped + t.in_flight);
        prop_assert!(out.report.final_cycle <= cfg.horizon);
        prop_assert!(out.trace.windows(2).all(|w| w[0].at <= w[1].at));
    }

    #[test]
    fn fault_free_pairs_never_mismatch(threshold in 1u64..40, poll in 1u64..6, rate in 0u64..80, len in 1u64..60, seed in any::<u64>()) {
        let doc = common::pair_doc(threshold, poll, rate, len, seed, 1, 500);
        let report = simulate(&common::config(&doc)).report;
        prop_assert!(report.pairs["p0"].mismatch.is_none());
        prop_assert!(report.interrupts.iter().all(|i| i.kind == "quota"));
    }

    #[test]
    fn service_latency_grows_with_size(a in 1u64..=64, b in 1u64..=64, burst in prop::bool::ANY) {
        let table = LatencyTable::default();
        let (lo, hi) = (a.min(b), a.max(b));
        let l = table.lookup(&Target::Memory, lo, burst).unwrap();
        let h = table.lookup(&Target::Memory, hi, burst).unwrap();
        prop_assert!(l <= h);
    }

    #[test]
    fn campaign_is_independent_of_execution(seed in any::<u64>(), count in 0usize..6) {
        let cfg = common::config(&common::pair_doc(6, 1, 30, 30, seed, 1, 600));
        let faults = sisim::fault::random_store_faults(0, count, 5, 0, 4, seed);
        prop_assert_eq!(
            sisim::fault::campaign(&cfg, &faults, Execution::Sequential),
            sisim::fault::campaign(&cfg, &faults, Execution::Parallel)
        );
    }
}
