//! Criterion micro-benchmarks: pass dispatch, switcher routing across
//! frame sizes, adaptor handoff in both copy modes.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sigflow::blocks::{add_busy_passthrough, add_collector, add_compute, add_tag_source};
use sigflow::{
    add_for_loop, CopyMode, ElemKind, ElemSpec, Graph, Pipeline, PipelinePlan, Sequence, StageSpec,
};

/// One pass of a three-task chain with zero-duration compute bodies:
/// measures the scheduler dispatch floor.
fn chain_pass(c: &mut Criterion) {
    let mut g = Graph::new();
    let spec = ElemSpec::new(ElemKind::Real32, 16);
    let c0 = add_compute(&mut g, "c0", Duration::ZERO, spec, false);
    let c1 = add_compute(&mut g, "c1", Duration::ZERO, spec, true);
    let c2 = add_compute(&mut g, "c2", Duration::ZERO, spec, true);
    g.bind(c1.input.unwrap(), c0.output.unwrap()).unwrap();
    g.bind(c2.input.unwrap(), c1.output.unwrap()).unwrap();
    let mut seq = Sequence::build(&mut g, &[c0.task], &[]).unwrap();
    seq.set_timing(false);

    c.bench_function("chain_pass_3_tasks", |b| {
        b.iter(|| seq.exec_passes(1).unwrap().passes)
    });
}

/// One full loop pass (10 iterations, head + 3-task body) across frame
/// sizes: routing cost should not depend on the element count.
fn loop_pass_by_frame_size(c: &mut Criterion) {
    let mut group = c.benchmark_group("loop_pass_10_iters");
    for elems in [1_000usize, 100_000] {
        let mut g = Graph::new();
        let lp = add_for_loop(&mut g, "loop", 10, ElemKind::Real32, elems);
        g.bind(lp.entry, lp.exit).unwrap();
        let spec = ElemSpec::new(ElemKind::Real32, elems);
        let c0 = add_compute(&mut g, "c0", Duration::ZERO, spec, true);
        let c1 = add_compute(&mut g, "c1", Duration::ZERO, spec, true);
        let c2 = add_compute(&mut g, "c2", Duration::ZERO, spec, true);
        g.bind(c0.input.unwrap(), lp.body_out).unwrap();
        g.bind(c1.input.unwrap(), c0.output.unwrap()).unwrap();
        g.bind(c2.input.unwrap(), c1.output.unwrap()).unwrap();
        g.bind(lp.body_return, c2.output.unwrap()).unwrap();
        let mut seq = Sequence::build(&mut g, &[lp.switcher.select], &[]).unwrap();
        seq.set_timing(false);

        group.bench_with_input(BenchmarkId::from_parameter(elems), &elems, |b, _| {
            b.iter(|| seq.exec_passes(1).unwrap().passes)
        });
    }
    group.finish();
}

/// 64 KiB frames through a three-stage pipeline, per copy mode. Reported
/// as throughput in frames.
fn adaptor_handoff(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline_64k_frames");
    group.throughput(Throughput::Elements(200));
    for (label, copy) in [
        ("deep_copy", CopyMode::DeepCopy),
        ("copyless", CopyMode::Copyless),
    ] {
        group.bench_function(label, |b| {
            b.iter_batched(
                || {
                    let elems = 16_384usize;
                    let mut g = Graph::new();
                    let src = add_tag_source(&mut g, "src", elems);
                    let work = add_busy_passthrough(
                        &mut g,
                        "work",
                        Duration::ZERO,
                        ElemKind::Int32,
                        elems,
                    );
                    g.bind(work.input.unwrap(), src.output.unwrap()).unwrap();
                    let sink = add_collector(&mut g, "sink", ElemKind::Int32, elems);
                    g.bind(sink.input.unwrap(), work.output.unwrap()).unwrap();
                    let plan = PipelinePlan::new(
                        src.task,
                        vec![
                            StageSpec::new(vec![src.task], vec![src.task]),
                            StageSpec::new(vec![work.task], vec![work.task]),
                            StageSpec::new(vec![sink.task], vec![sink.task]),
                        ],
                    )
                    .with_capacity(2)
                    .with_copy(copy);
                    Pipeline::build(g, &plan).unwrap()
                },
                |mut p| p.exec_frames(200).unwrap().sink_passes,
                criterion::BatchSize::PerIteration,
            )
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20).measurement_time(Duration::from_secs(3));
    targets = chain_pass, loop_pass_by_frame_size, adaptor_handoff
}
criterion_main!(benches);
