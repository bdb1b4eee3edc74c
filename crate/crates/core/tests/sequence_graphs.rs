//! Sequence analysis and execution semantics on the canonical graph
//! shapes: chains, multi-first/multi-last regions, loops, switches,
//! aborts.

mod common;

use std::time::Duration;

use common::{add_abort_on_parity, add_join_task};
use sigflow::blocks::{add_busy_passthrough, add_collector, add_tag_source, CollectorState};
use sigflow::{add_for_loop, BindError, BuildError, ElemKind, Graph, Sequence, SubSeqKind};

const N: usize = 4;

#[test]
fn simple_chain_schedules_in_binding_order() {
    let mut g = Graph::new();
    let t1 = add_tag_source(&mut g, "t1", N);
    let t2 = add_join_task(&mut g, "t2", 1, N);
    let t3 = add_join_task(&mut g, "t3", 1, N);
    let t4 = add_join_task(&mut g, "t4", 1, N);
    g.bind(t2.ins[0], t1.output.unwrap()).unwrap();
    g.bind(t3.ins[0], t2.out).unwrap();
    g.bind(t4.ins[0], t3.out).unwrap();

    let plan = Sequence::analyze(&g, &[t1.task], &[]).unwrap();
    assert_eq!(plan.schedule(), vec![t1.task, t2.task, t3.task, t4.task]);
    let nodes = plan.sub_sequences();
    assert_eq!(nodes.len(), 1);
    assert_eq!(nodes[0].kind, SubSeqKind::Plain);
    assert_eq!(nodes[0].tasks.len(), 4);
}

/// Region with two first tasks, two last tasks and bound tasks outside
/// it on both sides. Declaration order of the first tasks drives the
/// restart order, and last tasks stop the traversal even though their
/// outputs are bound.
#[test]
fn multi_first_multi_last_region() {
    let mut g = Graph::new();
    let x1 = add_tag_source(&mut g, "x1", N);
    let x2 = add_tag_source(&mut g, "x2", N);
    let t1 = add_join_task(&mut g, "t1", 1, N);
    let t2 = add_join_task(&mut g, "t2", 1, N);
    let t3 = add_join_task(&mut g, "t3", 1, N);
    let t4 = add_join_task(&mut g, "t4", 2, N);
    let t5 = add_join_task(&mut g, "t5", 1, N);
    let t6 = add_join_task(&mut g, "t6", 1, N);
    let x3 = add_join_task(&mut g, "x3", 1, N);
    let x4 = add_join_task(&mut g, "x4", 1, N);

    g.bind(t1.ins[0], x1.output.unwrap()).unwrap();
    g.bind(t3.ins[0], x2.output.unwrap()).unwrap();
    g.bind(t2.ins[0], t1.out).unwrap();
    g.bind(t4.ins[0], t2.out).unwrap();
    g.bind(t4.ins[1], t3.out).unwrap();
    g.bind(t5.ins[0], t4.out).unwrap();
    g.bind(t6.ins[0], t4.out).unwrap();
    g.bind(x3.ins[0], t5.out).unwrap();
    g.bind(x4.ins[0], t6.out).unwrap();

    let plan = Sequence::analyze(&g, &[t1.task, t3.task], &[t5.task, t6.task]).unwrap();
    assert_eq!(
        plan.schedule(),
        vec![t1.task, t2.task, t3.task, t4.task, t5.task, t6.task]
    );
    // the traversal stopped at the declared last tasks
    assert!(!plan.contains(x3.task));
    assert!(!plan.contains(x4.task));
    assert!(!plan.contains(x1.task));
}

#[test]
fn while_loop_decomposes_into_head_body_exit() {
    let mut g = Graph::new();
    let entry = add_tag_source(&mut g, "entry", N);
    let lp = add_for_loop(&mut g, "loop", 3, ElemKind::Int32, N);
    g.bind(lp.entry, entry.output.unwrap()).unwrap();
    let body = add_busy_passthrough(&mut g, "body", Duration::ZERO, ElemKind::Int32, N);
    g.bind(body.input.unwrap(), lp.body_out).unwrap();
    g.bind(lp.body_return, body.output.unwrap()).unwrap();
    let sink = add_collector(&mut g, "sink", ElemKind::Int32, N);
    g.bind(sink.input.unwrap(), lp.exit).unwrap();

    let mut seq = Sequence::build(&mut g, &[entry.task], &[]).unwrap();
    let nodes = seq.sub_sequences();
    assert_eq!(nodes.len(), 4, "{}", seq.describe());
    assert_eq!(nodes[0].kind, SubSeqKind::Plain);
    assert_eq!(nodes[0].tasks, vec![entry.task]);
    // loop head: select, iterate, commute
    assert_eq!(nodes[1].kind, SubSeqKind::Loop);
    assert_eq!(
        nodes[1].tasks,
        vec![lp.switcher.select, lp.control, lp.switcher.commute]
    );
    assert_eq!(nodes[1].successors, vec![Some(2), Some(3)]);
    // body loops back to the head
    assert_eq!(nodes[2].tasks, vec![body.task]);
    assert_eq!(nodes[2].successors, vec![Some(1)]);
    // exit ends the pass
    assert_eq!(nodes[3].tasks, vec![sink.task]);
    assert_eq!(nodes[3].successors, vec![None]);

    let report = seq.exec_passes(4).unwrap();
    assert_eq!(report.passes, 4);
    // per pass: head runs 4x (3 body + 1 exit), body 3x
    assert_eq!(report.task("loop.select").unwrap().exec_count, 16);
    assert_eq!(report.task("loop.commute").unwrap().exec_count, 16);
    assert_eq!(report.task("loop_ctl.iterate").unwrap().exec_count, 16);
    assert_eq!(report.task("body.work").unwrap().exec_count, 12);
    assert_eq!(report.task("entry.generate").unwrap().exec_count, 4);
    assert_eq!(report.task("sink.collect").unwrap().exec_count, 4);
}

/// An aborting mid-chain task restarts the pass at the first task: tasks
/// downstream of the abort never run in that pass and the stop condition
/// is not evaluated for it.
#[test]
fn abort_restarts_pass_at_first_task() {
    // abort on odd tags: the sink sees only even tags
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", N);
    let aborter = add_abort_on_parity(&mut g, "ab", 1, N);
    g.bind(aborter.ins[0], src.output.unwrap()).unwrap();
    let sink = add_collector(&mut g, "sink", ElemKind::Int32, N);
    g.bind(sink.input.unwrap(), aborter.out).unwrap();

    let mut seq = Sequence::build(&mut g, &[src.task], &[]).unwrap();
    seq.enable_exec_log(1024);
    let mut completed = 0u64;
    let report = seq
        .exec(|| {
            completed += 1;
            completed >= 5
        })
        .unwrap();
    assert_eq!(report.passes, 5);
    assert_eq!(report.aborted_passes, 4);
    assert_eq!(completed, 5, "stop evaluated once per completed pass");

    let sink_state = seq
        .module_state::<CollectorState>(sink.module)
        .expect("collector state");
    assert_eq!(sink_state.first_elems, vec![0, 2, 4, 6, 8]);

    // abort safety from the execution log: a pass that contains the
    // aborting task's failure never contains the sink afterwards
    let log = seq.exec_log();
    for (pass, tasks) in group_by_pass(&log) {
        let aborted = tasks.len() == 2;
        if aborted {
            assert_eq!(tasks, vec![src.task, aborter.task], "pass {pass}");
        } else {
            assert_eq!(
                tasks,
                vec![src.task, aborter.task, sink.task],
                "pass {pass}"
            );
        }
    }
}

/// Abort on even tags gives the exact two-to-one ratio between the first
/// task and the tasks downstream of the abort.
#[test]
fn abort_ratio_is_exact_for_even_parity() {
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", N);
    let aborter = add_abort_on_parity(&mut g, "ab", 0, N);
    g.bind(aborter.ins[0], src.output.unwrap()).unwrap();
    let sink = add_collector(&mut g, "sink", ElemKind::Int32, N);
    g.bind(sink.input.unwrap(), aborter.out).unwrap();

    let mut seq = Sequence::build(&mut g, &[src.task], &[]).unwrap();
    let report = seq.exec_passes(5).unwrap();
    let src_count = report.task("src.generate").unwrap().exec_count;
    let sink_count = report.task("sink.collect").unwrap().exec_count;
    assert_eq!(sink_count, 5);
    assert_eq!(src_count, 2 * sink_count);
}

#[test]
fn analysis_is_deterministic() {
    let build = || {
        let mut g = Graph::new();
        let src = add_tag_source(&mut g, "src", N);
        let lp = add_for_loop(&mut g, "loop", 5, ElemKind::Int32, N);
        g.bind(lp.entry, src.output.unwrap()).unwrap();
        let body = add_busy_passthrough(&mut g, "body", Duration::ZERO, ElemKind::Int32, N);
        g.bind(body.input.unwrap(), lp.body_out).unwrap();
        g.bind(lp.body_return, body.output.unwrap()).unwrap();
        let sink = add_collector(&mut g, "sink", ElemKind::Int32, N);
        g.bind(sink.input.unwrap(), lp.exit).unwrap();
        let dot = g.to_dot();
        let describe = Sequence::analyze(&g, &[src.task], &[]).unwrap().describe();
        (dot, describe)
    };
    let (dot_a, desc_a) = build();
    let (dot_b, desc_b) = build();
    assert_eq!(dot_a, dot_b);
    assert_eq!(desc_a, desc_b);
}

#[test]
fn task_input_order_is_declaration_order_not_binding_order() {
    let mut g = Graph::new();
    let a = add_tag_source(&mut g, "a", N);
    let b = add_tag_source(&mut g, "b", N);
    let join = add_join_task(&mut g, "join", 2, N);
    // bind the second declared input first
    g.bind(join.ins[1], b.output.unwrap()).unwrap();
    g.bind(join.ins[0], a.output.unwrap()).unwrap();
    assert_eq!(g.task_inputs(join.task), &join.ins[..]);
    assert_eq!(g.task_bind_order(join.task), &[1, 0]);
}

#[test]
fn standard_task_never_mutates_its_inputs() {
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", 64);
    let work = add_busy_passthrough(&mut g, "work", Duration::ZERO, ElemKind::Int32, 64);
    g.bind(work.input.unwrap(), src.output.unwrap()).unwrap();

    g.execute_task(src.task).unwrap();
    let before = g.peek_output(src.output.unwrap(), |f| f.checksum());
    g.execute_task(work.task).unwrap();
    let after = g.peek_output(src.output.unwrap(), |f| f.checksum());
    assert_eq!(before, after);
}

// ---- error paths ------------------------------------------------------------

#[test]
fn binding_rules() {
    let mut g = Graph::new();
    let a = add_tag_source(&mut g, "a", N);
    let b = add_tag_source(&mut g, "b", N);
    let c = add_join_task(&mut g, "c", 2, N);
    let d = add_join_task(&mut g, "d", 1, N);

    // first binding succeeds and is recorded in order
    g.bind(c.ins[0], a.output.unwrap()).unwrap();
    assert_eq!(g.socket_sinks(a.output.unwrap()), &[c.ins[0]]);

    // an input cannot be re-bound
    let err = g.bind(c.ins[0], b.output.unwrap()).unwrap_err();
    assert!(matches!(err, BindError::AlreadyBound { .. }));

    // an output fans out to multiple inputs, in binding order
    g.bind(d.ins[0], a.output.unwrap()).unwrap();
    assert_eq!(g.socket_sinks(a.output.unwrap()), &[c.ins[0], d.ins[0]]);

    // element specs must agree
    let short = add_join_task(&mut g, "short", 1, N + 1);
    let err = g.bind(short.ins[0], a.output.unwrap()).unwrap_err();
    assert!(matches!(err, BindError::TypeMismatch { .. }));

    // a task cannot feed itself
    let err = g.bind(c.ins[1], c.out).unwrap_err();
    assert!(matches!(err, BindError::SelfBind { .. }));

    g.verify_bindings().unwrap();
}

#[test]
fn dangling_input_is_rejected() {
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", N);
    let join = add_join_task(&mut g, "join", 2, N);
    g.bind(join.ins[0], src.output.unwrap()).unwrap();
    // join.ins[1] left unbound
    let err = Sequence::analyze(&g, &[src.task], &[]).unwrap_err();
    match err {
        BuildError::DanglingInput { name, input, .. } => {
            assert_eq!(name, "join.run");
            assert_eq!(input, 1);
        }
        other => panic!("expected DanglingInput, got {other:?}"),
    }
}

#[test]
fn cycle_without_select_is_rejected() {
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", N);
    let a = add_join_task(&mut g, "a", 2, N);
    let b = add_join_task(&mut g, "b", 1, N);
    g.bind(a.ins[0], src.output.unwrap()).unwrap();
    g.bind(b.ins[0], a.out).unwrap();
    g.bind(a.ins[1], b.out).unwrap();
    let err = Sequence::analyze(&g, &[src.task], &[]).unwrap_err();
    assert!(matches!(err, BuildError::Cycle { .. }), "got {err:?}");
}

#[test]
fn unreached_last_task_is_reported() {
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", N);
    let sink = add_collector(&mut g, "sink", ElemKind::Int32, N);
    g.bind(sink.input.unwrap(), src.output.unwrap()).unwrap();
    let stray = add_tag_source(&mut g, "stray", N);
    let err = Sequence::analyze(&g, &[src.task], &[stray.task]).unwrap_err();
    assert!(matches!(err, BuildError::Unreachable { .. }), "got {err:?}");
}

// ---- helpers ----------------------------------------------------------------

fn group_by_pass(log: &[(u64, sigflow::TaskId)]) -> Vec<(u64, Vec<sigflow::TaskId>)> {
    let mut out: Vec<(u64, Vec<sigflow::TaskId>)> = Vec::new();
    for (pass, task) in log {
        match out.last_mut() {
            Some((p, v)) if p == pass => v.push(*task),
            _ => out.push((*pass, vec![*task])),
        }
    }
    out
}

/// Nested for-loops: the inner control emits 12 times per pass (two
/// outer iterations of five body laps plus an exit each), the outer 3.
#[test]
fn nested_loop_control_counts() {
    let mut g = Graph::new();
    let outer = add_for_loop(&mut g, "outer", 2, ElemKind::Int32, N);
    let inner = add_for_loop(&mut g, "inner", 5, ElemKind::Int32, N);
    g.bind(outer.entry, outer.exit).unwrap();
    g.bind(inner.entry, outer.body_out).unwrap();
    let body = add_busy_passthrough(&mut g, "body", Duration::ZERO, ElemKind::Int32, N);
    g.bind(body.input.unwrap(), inner.body_out).unwrap();
    g.bind(inner.body_return, body.output.unwrap()).unwrap();
    g.bind(outer.body_return, inner.exit).unwrap();

    let mut seq = Sequence::build(&mut g, &[outer.switcher.select], &[]).unwrap();
    let passes = 7u64;
    let report = seq.exec_passes(passes).unwrap();
    assert_eq!(
        report.task("inner_ctl.iterate").unwrap().exec_count,
        12 * passes
    );
    assert_eq!(
        report.task("outer_ctl.iterate").unwrap().exec_count,
        3 * passes
    );
    assert_eq!(report.task("body.work").unwrap().exec_count, 10 * passes);
}

/// A one-iteration for-control emits body then exit within each pass.
#[test]
fn single_iteration_loop_runs_body_once_per_pass() {
    let mut g = Graph::new();
    let src = add_tag_source(&mut g, "src", N);
    let lp = add_for_loop(&mut g, "loop", 1, ElemKind::Int32, N);
    g.bind(lp.entry, src.output.unwrap()).unwrap();
    let body = add_busy_passthrough(&mut g, "body", Duration::ZERO, ElemKind::Int32, N);
    g.bind(body.input.unwrap(), lp.body_out).unwrap();
    g.bind(lp.body_return, body.output.unwrap()).unwrap();
    let sink = add_collector(&mut g, "sink", ElemKind::Int32, N);
    g.bind(sink.input.unwrap(), lp.exit).unwrap();

    let mut seq = Sequence::build(&mut g, &[src.task], &[]).unwrap();
    let report = seq.exec_passes(5).unwrap();
    assert_eq!(report.task("body.work").unwrap().exec_count, 5);
    assert_eq!(report.task("loop.select").unwrap().exec_count, 10);
    assert_eq!(report.task("sink.collect").unwrap().exec_count, 5);
}

/// Per pass, a switch runs exactly one of its exclusive paths.
#[test]
fn switch_paths_are_exclusive_per_pass() {
    use sigflow::{add_cyclic_control, ElemSpec, Switcher};
    let mut g = Graph::new();
    let (ctl, data_out, ctrl_out) =
        add_cyclic_control(&mut g, "cycle", 3, ElemSpec::new(ElemKind::Int32, N));
    let sw = Switcher::new(&mut g, "switch", 3, ElemKind::Int32, N);
    g.bind(sw.commute_data_in, data_out).unwrap();
    g.bind(sw.commute_ctrl_in, ctrl_out).unwrap();
    let mut path_tasks = Vec::new();
    for p in 0..3 {
        let t = add_busy_passthrough(&mut g, &format!("p{p}"), Duration::ZERO, ElemKind::Int32, N);
        g.bind(t.input.unwrap(), sw.commute_outs[p]).unwrap();
        g.bind(sw.select_ins[p], t.output.unwrap()).unwrap();
        path_tasks.push(t.task);
    }
    let mut seq = Sequence::build(&mut g, &[ctl], &[]).unwrap();
    seq.enable_exec_log(4096);
    seq.exec_passes(9).unwrap();

    for (pass, tasks) in group_by_pass(&seq.exec_log()) {
        let active: Vec<_> = tasks
            .iter()
            .filter(|t| path_tasks.contains(t))
            .collect();
        assert_eq!(active.len(), 1, "pass {pass}: paths {active:?}");
        // cyclic control: pass serial determines the path
        let expected = path_tasks[((pass - 1) % 3) as usize];
        assert_eq!(*active[0], expected, "pass {pass}");
    }
}
