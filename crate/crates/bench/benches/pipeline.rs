use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use tiersense::station::{forward, frame_for, provision_home, Ingestor, RadioFrame};
use tiersense::store::Store;
use tiersense::{account, run_node, EnergyParams, NodeConfig, Tier};
use tiersense_bench::fixture_trace;

fn node_tiers(c: &mut Criterion) {
    let trace = fixture_trace(10.0, 1);
    let mut g = c.benchmark_group("node_10min");
    for tier in [Tier::Tier1, Tier::Tier2, Tier::Tier3] {
        let cfg = NodeConfig::with_tier(tier);
        g.bench_function(tier.label(), |b| {
            b.iter(|| run_node(black_box(&trace), &cfg).unwrap())
        });
    }
    g.finish();
}

fn energy(c: &mut Criterion) {
    let trace = fixture_trace(10.0, 2);
    let log = run_node(&trace, &NodeConfig::default()).unwrap();
    let params = EnergyParams::paper_calibrated();
    c.bench_function("account", |b| b.iter(|| account(black_box(&log), &params)));
}

fn frame_codec(c: &mut Criterion) {
    let trace = fixture_trace(1.0, 3);
    let frames: Vec<RadioFrame> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            frame_for(7, i as u32, s.t_ms, &tiersense::Decision::TransmitData(*s)).unwrap()
        })
        .collect();
    c.bench_function("frame_roundtrip_1min", |b| {
        b.iter(|| {
            for f in &frames {
                let bytes = f.encode();
                black_box(RadioFrame::parse(&bytes).unwrap());
            }
        })
    });
}

fn ingest(c: &mut Criterion) {
    let trace = fixture_trace(1.0, 4);
    let lines: Vec<String> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let f = frame_for(7, i as u32, s.t_ms, &tiersense::Decision::TransmitData(*s)).unwrap();
            forward(&f).to_line()
        })
        .collect();
    c.bench_function("ingest_1min_in_memory", |b| {
        b.iter_batched(
            || {
                let mut store = Store::in_memory();
                provision_home(&mut store, 7).unwrap();
                Ingestor::new(store, 2.0)
            },
            |mut ing| {
                for l in &lines {
                    ing.handle_post(l).unwrap();
                }
                ing
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, node_tiers, energy, frame_codec, ingest);
criterion_main!(benches);
