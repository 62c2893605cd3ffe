use std::collections::BTreeMap;

use proptest::prelude::*;

use tiersense::energy::{CalibrationTargets, EnergyReport};
use tiersense::harness::{emit_report, run_experiment, ExperimentConfig, ReportFormat, TraceSource};
use tiersense::station::{Payload, RadioFrame};
use tiersense::store::{
    Camera, Entity, EntityKind, Person, PersonRoom, Room, SensorNode, SensorType, Store,
};
use tiersense::trace::{read_trace_from, write_trace_to};
use tiersense::{
    account, calibrate, generate_trace, run_node, Activity, EnergyParams, NodeConfig, NodeLog,
    Tier, Trace, TraceSpec,
};

fn small_spec() -> impl Strategy<Value = TraceSpec> {
    (0.2f64..2.0, 20.0f64..150.0, 0.0f64..0.5, 0u32..4).prop_map(|(dur, iv, act, falls)| TraceSpec {
        duration_min: dur,
        sample_interval_ms: iv,
        activity_fraction: act,
        fall_count: falls,
        ..TraceSpec::default()
    })
    .prop_filter("generator accepts the spec", |s| s.validate().is_ok())
}

fn log(duration_ms: u64, n_samples: u64, n_tx: u64) -> NodeLog {
    NodeLog {
        duration_ms,
        n_samples,
        n_tx_data: n_tx,
        n_tx_alarm: 0,
        decisions: None,
        config: NodeConfig::default(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_file_round_trip(spec in small_spec(), seed in any::<u64>()) {
        let t = generate_trace(&spec, seed).unwrap();
        let mut buf = Vec::new();
        write_trace_to(&t, &mut buf).unwrap();
        let back = read_trace_from(&buf[..]).unwrap();
        prop_assert_eq!(&back.samples, &t.samples);
    }

    #[test]
    fn trace_is_deterministic_and_in_band(spec in small_spec(), seed in any::<u64>()) {
        let a = generate_trace(&spec, seed).unwrap();
        prop_assert_eq!(&a, &generate_trace(&spec, seed).unwrap());
        for s in &a.samples {
            prop_assert!(spec.band(s.label).contains(s.magnitude_sq()), "{:?}", s);
        }
    }

    #[test]
    fn tier_volumes_are_monotone(spec in small_spec(), seed in any::<u64>(), t_move in 1.0f64..4.0, gap in 0.0f64..6.0) {
        let trace = generate_trace(&spec, seed).unwrap();
        let base = NodeConfig { t_move, t_fall: t_move + gap, ..NodeConfig::default() };
        let n = |tier| run_node(&trace, &NodeConfig { tier, ..base.clone() }).unwrap().n_tx();
        let (n1, n2, n3) = (n(Tier::Tier1), n(Tier::Tier2), n(Tier::Tier3));
        prop_assert!(n3 <= n2 && n2 <= n1, "{n1} {n2} {n3}");
    }

    #[test]
    fn tier2_transmits_exactly_above_threshold(spec in small_spec(), seed in any::<u64>()) {
        let trace = generate_trace(&spec, seed).unwrap();
        let cfg = NodeConfig::with_tier(Tier::Tier2);
        let log = tiersense::node::run_node_with(&trace, &cfg, None, true).unwrap();
        let sent: Vec<bool> = log.decisions.unwrap().iter().map(|d| d.is_transmission()).collect();
        let oracle: Vec<bool> = trace.samples.iter().map(|s| {
            s.ax * s.ax + s.ay * s.ay + s.az * s.az >= cfg.t_move
        }).collect();
        prop_assert_eq!(sent, oracle);
    }

    #[test]
    fn energy_is_additive(d1 in 1u64..10_000_000, s1 in 0u64..100_000, t1 in 0u64..100_000,
                          d2 in 1u64..10_000_000, s2 in 0u64..100_000, t2 in 0u64..100_000) {
        let p = EnergyParams::paper_calibrated();
        let a = account(&log(d1, s1, t1), &p).total_ws;
        let b = account(&log(d2, s2, t2), &p).total_ws;
        let ab = account(&log(d1 + d2, s1 + s2, t1 + t2), &p).total_ws;
        prop_assert!(rel(ab, a + b) < 1e-12);
    }

    #[test]
    fn energy_power_floor(d in 1u64..10_000_000, s in 0u64..100_000, t in 0u64..100_000) {
        let p = EnergyParams::paper_calibrated();
        prop_assert!(account(&log(d, s, t), &p).power_w >= p.floor_w() * (1.0 - 1e-12));
    }

    #[test]
    fn calibration_round_trip(p2 in 0.10f64..0.18, extra in 0.001f64..0.05, n1 in 300.0f64..2000.0,
                              frac in 0.0f64..0.5, share in 0.5f64..0.95, split in 0.0f64..=1.0) {
        let t = CalibrationTargets {
            p1_w: p2 + extra,
            p2_w: p2,
            n_tx1: n1,
            n_tx2: n1 * frac,
            comm_share: share,
            cpu_split: split,
        };
        // targets that would need a negative listening power are rejected
        let Ok(params) = calibrate(&t) else { return Ok(()); };
        let minute = |n_tx: f64| params.energy_ws(60.0, t.n_tx1, n_tx) / 60.0;
        prop_assert!(rel(minute(t.n_tx1), t.p1_w) < 1e-9);
        prop_assert!(rel(minute(t.n_tx2), t.p2_w) < 1e-9);
    }

    #[test]
    fn power_follows_tier_order(spec in small_spec(), seed in any::<u64>(), e_tx in 0.01f64..5.0) {
        let trace = generate_trace(&spec, seed).unwrap();
        let p = EnergyParams { e_tx_mws: e_tx, ..EnergyParams::paper_calibrated() };
        let w = |tier| account(&run_node(&trace, &NodeConfig::with_tier(tier)).unwrap(), &p).power_w;
        let (w1, w2, w3) = (w(Tier::Tier1), w(Tier::Tier2), w(Tier::Tier3));
        prop_assert!(w1 >= w2 && w2 >= w3, "{w1} {w2} {w3}");
    }

    #[test]
    fn frame_round_trip(addr in any::<u64>(), seq in any::<u32>(), t in any::<u64>(),
                        x in any::<f32>(), y in any::<f32>(), z in any::<f32>(),
                        code in any::<u16>(), alarm in any::<bool>()) {
        let payload = if alarm { Payload::Alarm { code } } else { Payload::Data { x, y, z } };
        let f = RadioFrame { node_address: addr, seq, t_ms: t, payload };
        let bytes = f.encode();
        let back = RadioFrame::parse(&bytes).unwrap();
        // compare bitwise so NaN payloads count as equal
        prop_assert_eq!(back.encode(), bytes);
        if !matches!(payload, Payload::Data { x, y, z } if x.is_nan() || y.is_nan() || z.is_nan()) {
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn accepted_bytes_reencode_identically(bytes in proptest::collection::vec(any::<u8>(), 0..40)) {
        if let Ok(f) = RadioFrame::parse(&bytes) {
            prop_assert_eq!(f.encode(), bytes);
        }
    }
}

#[test]
fn reference_profile_activity_fraction() {
    let spec = TraceSpec::reference();
    let t = generate_trace(&spec, 42).unwrap();
    let walk_lo = spec.band(Activity::Walk).lo;
    let active = t.samples.iter().filter(|s| s.magnitude_sq() >= walk_lo).count() as f64;
    let falls = t.samples.iter().filter(|s| s.label == Activity::Fall).count() as f64;
    let measured = active / t.len() as f64;
    let expected = spec.activity_fraction + falls / t.len() as f64;
    assert!((measured - expected).abs() <= 0.003, "{measured} vs {expected}");
}

#[test]
fn all_rest_trace_has_no_alarms() {
    let spec = TraceSpec {
        duration_min: 10.0,
        activity_fraction: 0.0,
        fall_count: 0,
        ..TraceSpec::default()
    };
    let t: Trace = generate_trace(&spec, 9).unwrap();
    for tier in [Tier::Tier2, Tier::Tier3] {
        assert_eq!(run_node(&t, &NodeConfig::with_tier(tier)).unwrap().n_tx(), 0);
    }
}

#[test]
fn calibrated_comm_share() {
    let p = EnergyParams::paper_calibrated();
    // five minutes at 746.8 transmissions per minute
    let l = log(300_000, 3734, 3734);
    let r: EnergyReport = account(&l, &p);
    let comm = (l.n_tx() as f64 * p.e_tx_mws + 300.0 * p.p_listen_mw) / 1000.0;
    assert!(rel(comm / r.total_ws, 0.8) < 1e-6, "{}", comm / r.total_ws);
}

#[derive(Debug, Clone)]
enum Op {
    Type,
    Person,
    Room,
    Link(u64, u64),
    Node(u64, Option<u64>),
    Camera(Option<u64>),
    Measure(u64, Vec<f64>, Option<u32>),
}

fn op() -> impl Strategy<Value = Op> {
    let id = 0u64..6;
    prop_oneof![
        Just(Op::Type),
        Just(Op::Person),
        Just(Op::Room),
        (id.clone(), id.clone()).prop_map(|(a, b)| Op::Link(a, b)),
        (id.clone(), proptest::option::of(id.clone())).prop_map(|(a, b)| Op::Node(a, b)),
        proptest::option::of(id.clone()).prop_map(Op::Camera),
        (
            id,
            proptest::collection::vec(-10.0f64..10.0, 0..4),
            proptest::option::of(0u32..5)
        )
            .prop_map(|(n, v, s)| Op::Measure(n, v, s)),
    ]
}

fn apply(store: &mut Store, op: &Op, k: usize) -> bool {
    let r = match op.clone() {
        Op::Type => store
            .upsert(Entity::SensorType(SensorType { id: 0, description: format!("type {k}") }))
            .map(|_| ()),
        Op::Person => store
            .upsert(Entity::Person(Person { id: 0, first_name: "A".into(), last_name: format!("P{k}") }))
            .map(|_| ()),
        Op::Room => store.upsert(Entity::Room(Room { id: 0, name: format!("room {k}") })).map(|_| ()),
        Op::Link(p, r) => store
            .upsert(Entity::PersonRoom(PersonRoom { id: 0, person_id: p, room_id: r }))
            .map(|_| ()),
        Op::Node(t, p) => store
            .upsert(Entity::SensorNode(SensorNode {
                id: 0,
                ieee_address: format!("{k:016x}"),
                name: "n".into(),
                type_id: t,
                person_id: p,
            }))
            .map(|_| ()),
        Op::Camera(r) => store
            .upsert(Entity::Camera(Camera {
                id: 0,
                name: format!("cam {k}"),
                ip: "10.0.0.1".into(),
                url: "http://10.0.0.1/".into(),
                room_id: r,
            }))
            .map(|_| ()),
        Op::Measure(n, v, s) => store.insert_measurement(n, k as u64, &v, k.is_multiple_of(2), s).map(|_| ()),
    };
    r.is_ok()
}

fn snapshot(store: &Store) -> BTreeMap<EntityKind, String> {
    EntityKind::ALL
        .into_iter()
        .map(|k| {
            let mut buf = Vec::new();
            store.dump_csv(k, &mut buf).unwrap();
            (k, String::from_utf8(buf).unwrap())
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_keeps_integrity(ops in proptest::collection::vec(op(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let mut shadow: BTreeMap<u64, Vec<(u64, Vec<f64>)>> = BTreeMap::new();
        for (k, op) in ops.iter().enumerate() {
            let before = snapshot(&store);
            let ok = apply(&mut store, op, k);
            if ok {
                if let Op::Measure(n, v, _) = op {
                    shadow.entry(*n).or_default().push((k as u64, v.clone()));
                }
            } else {
                prop_assert_eq!(before, snapshot(&store), "failed {:?} changed state", op);
            }
            prop_assert_eq!(store.check_integrity(), Ok(()));
        }
        for (node, expected) in &shadow {
            let got: Vec<(u64, Vec<f64>)> = store
                .query_measurements(*node, 0, u64::MAX, false)
                .unwrap()
                .into_iter()
                .map(|r| (r.measurement.timestamp, r.values))
                .collect();
            prop_assert_eq!(&got, expected);
        }
        let reopened = Store::open(dir.path()).unwrap();
        prop_assert_eq!(snapshot(&store), snapshot(&reopened));
    }
}

#[test]
fn report_is_byte_identical_across_invocations() {
    let cfg = ExperimentConfig {
        trace: TraceSource::Generated {
            profile: "custom".into(),
            spec: TraceSpec {
                duration_min: 3.0,
                activity_fraction: 0.05,
                fall_count: 2,
                ..TraceSpec::default()
            },
        },
        ..ExperimentConfig::reference(77)
    };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    for f in [ReportFormat::Table, ReportFormat::Csv] {
        assert_eq!(emit_report(&a, f), emit_report(&b, f));
    }
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn summary_rows_match_run_rows() {
    let cfg = ExperimentConfig {
        trace: TraceSource::Generated {
            profile: "custom".into(),
            spec: TraceSpec {
                duration_min: 2.0,
                activity_fraction: 0.1,
                fall_count: 1,
                ..TraceSpec::default()
            },
        },
        runs: 4,
        ..ExperimentConfig::reference(3)
    };
    let res = run_experiment(&cfg).unwrap();
    for (tier, s) in &res.summaries {
        let powers: Vec<f64> = res.rows(*tier).map(|r| r.energy.power_w).collect();
        let totals: Vec<f64> = res.rows(*tier).map(|r| r.energy.total_ws).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(rel(s.average.power_w, mean(&powers)) < 1e-9);
        assert!(rel(s.average.total_ws, mean(&totals)) < 1e-9);
        assert_eq!(s.max.power_w, powers.iter().cloned().fold(f64::MIN, f64::max));
        assert_eq!(s.min.power_w, powers.iter().cloned().fold(f64::MAX, f64::min));
    }
}
