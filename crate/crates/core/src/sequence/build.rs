//! Depth-first analysis of a bound task graph into a static schedule.
//!
//! The traversal starts from the first tasks in declaration order and
//! appends a task once all of its input sockets have been visited; select
//! tasks are the exception, appended when their highest-index input is
//! visited, which is what breaks loop-back cycles. Whenever a traversal
//! branch blocks (a task still waits on an unvisited input) the analysis
//! restarts from the next first task.
//!
//! The schedule is grouped into sub-sequences, the nodes of the execution
//! graph: a select task starts a new node (it is a merge point that
//! loop-backs re-enter), a commute task ends its node with one successor
//! arm per path.

use std::collections::BTreeMap;

use crate::error::BuildError;
use crate::frame::ElemSpec;
use crate::graph::{
    check_task, AdaptorRole, Graph, ModuleId, SocketId, TaskClass, TaskId, TaskKind,
};
use crate::state::Cloneability;
use crate::task::TaskBody;

/// Kind of a sub-sequence node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubSeqKind {
    Plain,
    Loop,
    Switch,
}

/// Public view of one execution-graph node.
#[derive(Clone, Debug)]
pub struct SubSequence {
    pub id: usize,
    pub tasks: Vec<TaskId>,
    pub kind: SubSeqKind,
    /// One entry per arm; `None` ends the pass. Plain nodes have exactly
    /// one arm, branch nodes one per path.
    pub successors: Vec<Option<usize>>,
}

#[derive(Clone)]
pub(crate) struct CompiledTask {
    pub id: TaskId,
    pub full_name: String,
    pub kind: TaskKind,
    pub class: TaskClass,
    pub module_slot: usize,
    pub input_sources: Vec<Option<SocketId>>,
    pub output_ids: Vec<SocketId>,
    pub body: Option<TaskBody>,
    pub adaptor: Option<(AdaptorRole, usize)>,
}

#[derive(Clone, Debug)]
pub(crate) struct PlanNode {
    /// Indices into `SequencePlan::tasks`.
    pub tasks: Vec<usize>,
    pub kind: SubSeqKind,
    pub branch: bool,
    pub succ: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BufferTemplate {
    pub socket: SocketId,
    pub spec: ElemSpec,
}

#[derive(Clone, Debug)]
pub(crate) struct ModuleSlot {
    pub id: ModuleId,
    pub name: String,
    pub cloneability: Cloneability,
}

/// The compiled, immutable schedule of a sequence. Shared between
/// replicas; all mutable execution state lives elsewhere.
pub struct SequencePlan {
    pub(crate) tasks: Vec<CompiledTask>,
    pub(crate) nodes: Vec<PlanNode>,
    pub(crate) entry: usize,
    pub(crate) socket_slots: usize,
    pub(crate) buffers: Vec<BufferTemplate>,
    pub(crate) modules: Vec<ModuleSlot>,
    pub(crate) first: Vec<TaskId>,
    pub(crate) last: Vec<TaskId>,
}

impl SequencePlan {
    pub fn first_tasks(&self) -> &[TaskId] {
        &self.first
    }

    pub fn last_tasks(&self) -> &[TaskId] {
        &self.last
    }

    pub fn schedule(&self) -> Vec<TaskId> {
        self.nodes
            .iter()
            .flat_map(|n| n.tasks.iter().map(|i| self.tasks[*i].id))
            .collect()
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.full_name.as_str()).collect()
    }

    pub fn sub_sequences(&self) -> Vec<SubSequence> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| SubSequence {
                id: i,
                tasks: n.tasks.iter().map(|t| self.tasks[*t].id).collect(),
                kind: n.kind,
                successors: n.succ.clone(),
            })
            .collect()
    }

    pub fn contains(&self, t: TaskId) -> bool {
        self.tasks.iter().any(|c| c.id == t)
    }

    /// Scheduled tasks in schedule order (the region of the graph this
    /// sequence owns).
    pub fn task_set(&self) -> Vec<TaskId> {
        self.schedule()
    }

    /// Deterministic text description of the execution graph; used by
    /// tests and docs.
    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "sequence: {} sub-sequences", self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let kind = match n.kind {
                SubSeqKind::Plain => "plain",
                SubSeqKind::Loop => "loop",
                SubSeqKind::Switch => "switch",
            };
            let tasks: Vec<&str> = n
                .tasks
                .iter()
                .map(|t| self.tasks[*t].full_name.as_str())
                .collect();
            let succ: Vec<String> = n
                .succ
                .iter()
                .map(|a| match a {
                    Some(x) => format!("SS{x}"),
                    None => "end".to_owned(),
                })
                .collect();
            let _ = writeln!(
                s,
                "  SS{} {} tasks=[{}] -> [{}]",
                i,
                kind,
                tasks.join(", "),
                succ.join(", ")
            );
        }
        s
    }
}

/// Tri-state successor while the node graph is under construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Succ {
    Unset,
    End,
    Node(usize),
}

struct BuildNode {
    tasks: Vec<TaskId>,
    branch: Option<Vec<Succ>>,
    succ: Succ,
    sealed: bool,
}

struct Analyzer<'g> {
    g: &'g Graph,
    last: Vec<TaskId>,
    /// When set, sources flagged here count as pre-visited instead of the
    /// out-of-region rule (pipeline membership analysis).
    external: Option<Vec<bool>>,
    scheduled: Vec<bool>,
    node_of: Vec<Option<usize>>,
    nodes: Vec<BuildNode>,
    current: Option<usize>,
    /// Select tasks waiting to be scheduled: feeder nodes recorded per
    /// input edge, resolved when the select finally joins the schedule.
    pending_feeders: BTreeMap<TaskId, Vec<usize>>,
    /// Commute arms waiting on a select that is not scheduled yet.
    pending_arms: BTreeMap<TaskId, Vec<(usize, usize)>>,
    /// Set while registering the sinks of one commute path: the next node
    /// opened becomes that arm's target.
    open_arm: Option<(usize, usize)>,
}

impl<'g> Analyzer<'g> {
    fn new(g: &'g Graph, last: &[TaskId], external: Option<Vec<bool>>) -> Self {
        Self {
            g,
            last: last.to_vec(),
            external,
            scheduled: vec![false; g.task_count()],
            node_of: vec![None; g.task_count()],
            nodes: Vec::new(),
            current: None,
            pending_feeders: BTreeMap::new(),
            pending_arms: BTreeMap::new(),
            open_arm: None,
        }
    }

    fn is_select(&self, t: TaskId) -> bool {
        self.g.task_kind(t) == TaskKind::Select
    }

    /// Has this input's source been visited (scheduled) or does it lie
    /// outside the region (external feeds count as pre-visited)?
    fn input_satisfied(&self, sock: SocketId, region: &[bool]) -> bool {
        match self.g.socket_source(sock) {
            None => false,
            Some(src) => {
                let owner = self.g.socket_task(src);
                if self.scheduled[owner.index()] {
                    return true;
                }
                match &self.external {
                    Some(ext) => ext[owner.index()],
                    None => !region[owner.index()],
                }
            }
        }
    }

    fn ready(&self, t: TaskId, region: &[bool]) -> bool {
        let inputs = self.g.task_inputs(t);
        if self.is_select(t) {
            match inputs.last() {
                Some(last) => self.input_satisfied(*last, region),
                None => true,
            }
        } else {
            inputs.iter().all(|s| self.input_satisfied(*s, region))
        }
    }

    fn open_node(&mut self) -> usize {
        self.nodes.push(BuildNode {
            tasks: Vec::new(),
            branch: None,
            succ: Succ::Unset,
            sealed: false,
        });
        let id = self.nodes.len() - 1;
        self.current = Some(id);
        if let Some((node, arm)) = self.open_arm.take() {
            self.set_arm(node, arm, Succ::Node(id));
        }
        id
    }

    fn seal_current(&mut self) {
        if let Some(c) = self.current.take() {
            self.nodes[c].sealed = true;
        }
    }

    fn set_arm(&mut self, node: usize, arm: usize, v: Succ) {
        let arms = self.nodes[node]
            .branch
            .as_mut()
            .expect("arm on non-branch node");
        arms[arm] = v;
    }

    fn set_node_succ(
        &mut self,
        node: usize,
        target: usize,
        from: TaskId,
    ) -> Result<(), BuildError> {
        match self.nodes[node].succ {
            Succ::Unset => {
                self.nodes[node].succ = Succ::Node(target);
                Ok(())
            }
            Succ::Node(t) if t == target => Ok(()),
            _ => Err(BuildError::UnresolvedPath {
                task: from,
                name: self.g.task_full_name(from),
                path: usize::MAX,
            }),
        }
    }

    /// Append a task to the schedule, maintaining node structure.
    fn append(&mut self, t: TaskId) {
        debug_assert!(!self.scheduled[t.index()]);
        if self.is_select(t) {
            // a select is a merge point: it leads a fresh node
            self.seal_current();
            let node = self.open_node();
            self.nodes[node].tasks.push(t);
            self.node_of[t.index()] = Some(node);
            self.scheduled[t.index()] = true;
            // resolve everyone who was waiting on this merge point
            if let Some(feeders) = self.pending_feeders.remove(&t) {
                for f in feeders {
                    self.nodes[f].succ = Succ::Node(node);
                }
            }
            if let Some(arms) = self.pending_arms.remove(&t) {
                for (bn, arm) in arms {
                    self.set_arm(bn, arm, Succ::Node(node));
                }
            }
        } else {
            if self.current.is_none() {
                self.open_node();
            }
            let node = self.current.unwrap();
            self.nodes[node].tasks.push(t);
            self.node_of[t.index()] = Some(node);
            self.scheduled[t.index()] = true;
            if self.g.task_kind(t) == TaskKind::Commute {
                let paths = self.g.task_outputs(t).len();
                self.nodes[node].branch = Some(vec![Succ::Unset; paths]);
                self.seal_current();
            }
        }
    }

    fn is_last(&self, t: TaskId) -> bool {
        self.last.contains(&t)
    }

    /// Schedule `t` and walk onward through its output bindings.
    fn visit(&mut self, t: TaskId, region: &[bool]) -> Result<(), BuildError> {
        self.append(t);
        // a declared last task with bound outputs ends the traversal here
        if self.is_last(t) {
            return Ok(());
        }
        if self.g.task_kind(t) == TaskKind::Commute {
            return self.walk_commute_paths(t, region);
        }
        self.walk_outputs(t, region)
    }

    fn walk_outputs(&mut self, t: TaskId, region: &[bool]) -> Result<(), BuildError> {
        for out in self.g.task_outputs(t).to_vec() {
            for sink in self.g.socket_sinks(out).to_vec() {
                let sink_task = self.g.socket_task(sink);
                if self.scheduled[sink_task.index()] {
                    if self.is_select(sink_task) {
                        // loop-back (or merge) edge into an existing select:
                        // the feeding node continues there once it is done
                        let from_node = self.node_of[t.index()].unwrap();
                        let target = self.node_of[sink_task.index()].unwrap();
                        self.set_node_succ(from_node, target, t)?;
                    }
                    continue;
                }
                if !region[sink_task.index()] {
                    continue;
                }
                if self.is_select(sink_task) && !self.ready(sink_task, region) {
                    // remember the feeder; resolved when the select joins
                    let from_node = self.node_of[t.index()].unwrap();
                    self.pending_feeders
                        .entry(sink_task)
                        .or_default()
                        .push(from_node);
                    continue;
                }
                if self.ready(sink_task, region) {
                    self.visit(sink_task, region)?;
                    if self.is_select(sink_task) {
                        let from_node = self.node_of[t.index()].unwrap();
                        let target = self.node_of[sink_task.index()].unwrap();
                        // the feeder that finally triggered the select
                        if from_node != target && self.nodes[from_node].succ == Succ::Unset {
                            self.nodes[from_node].succ = Succ::Node(target);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn walk_commute_paths(&mut self, com: TaskId, region: &[bool]) -> Result<(), BuildError> {
        let branch_node = self.node_of[com.index()].unwrap();
        let paired = self.g.task_entry(com).paired_select;
        let outputs = self.g.task_outputs(com).to_vec();
        for (path, out) in outputs.iter().enumerate() {
            let sinks = self.g.socket_sinks(*out).to_vec();
            if sinks.is_empty() {
                // unbound path: taking it ends the pass
                self.set_arm(branch_node, path, Succ::End);
                continue;
            }
            let mut opened = false;
            for sink in sinks {
                let sink_task = self.g.socket_task(sink);
                let own_pair = paired == Some(sink_task);
                if own_pair && self.scheduled[sink_task.index()] {
                    let sel_node = self.node_of[sink_task.index()].unwrap();
                    let entry_input = self.g.socket_index_in_task(sink)
                        == self.g.task_inputs(sink_task).len() - 1;
                    if entry_input {
                        // feeding the paired select's entry input from the
                        // exit path carries data into the *next* pass; the
                        // current pass ends here
                        self.set_arm(branch_node, path, Succ::End);
                    } else {
                        // empty loop body: re-enter the head
                        self.set_arm(branch_node, path, Succ::Node(sel_node));
                    }
                    continue;
                }
                if self.scheduled[sink_task.index()] {
                    // already part of the schedule (a foreign select): the
                    // path re-enters that node
                    if self.is_select(sink_task) {
                        let sel_node = self.node_of[sink_task.index()].unwrap();
                        self.set_arm(branch_node, path, Succ::Node(sel_node));
                    }
                    continue;
                }
                if !region[sink_task.index()] {
                    continue;
                }
                if !self.ready(sink_task, region) {
                    if self.is_select(sink_task) {
                        self.pending_arms
                            .entry(sink_task)
                            .or_default()
                            .push((branch_node, path));
                    }
                    continue;
                }
                if self.is_select(sink_task) {
                    // path leads straight into a schedulable merge point
                    self.visit(sink_task, region)?;
                    let sel_node = self.node_of[sink_task.index()].unwrap();
                    self.set_arm(branch_node, path, Succ::Node(sel_node));
                } else {
                    if !opened {
                        self.current = None;
                        self.open_arm = Some((branch_node, path));
                        opened = true;
                    }
                    self.visit(sink_task, region)?;
                }
            }
            if opened {
                // leaving a path: whatever node is still open belongs to
                // it and must not leak into the next path
                self.open_arm = None;
                self.seal_current();
            }
        }
        Ok(())
    }
}

/// Forward structural closure from the first tasks; last tasks are not
/// expanded and blocked tasks (another region's entry points) are never
/// entered. This is the candidate region used for readiness decisions
/// and error reporting (the actual region is what gets scheduled).
fn structural_region(
    g: &Graph,
    first: &[TaskId],
    last: &[TaskId],
    blocked: &[TaskId],
) -> Vec<bool> {
    let mut region = vec![false; g.task_count()];
    let mut stack: Vec<TaskId> = Vec::new();
    for f in first {
        if !region[f.index()] {
            region[f.index()] = true;
            stack.push(*f);
        }
    }
    while let Some(t) = stack.pop() {
        if last.contains(&t) {
            continue;
        }
        for out in g.task_outputs(t) {
            for sink in g.socket_sinks(*out) {
                let st = g.socket_task(*sink);
                if !region[st.index()] && !blocked.contains(&st) {
                    region[st.index()] = true;
                    stack.push(st);
                }
            }
        }
    }
    region
}

pub(crate) fn analyze(
    g: &Graph,
    first: &[TaskId],
    last: &[TaskId],
) -> Result<SequencePlan, BuildError> {
    analyze_scoped(g, first, last, &[], None, false)
}

/// Like [`analyze`], scoped for pipeline membership analysis: `blocked`
/// tasks (other stages' entry points) are never entered, sources flagged
/// in `external` (earlier stages, pre-pipeline feeds) count as visited,
/// and with `lenient` set, tasks the traversal cannot reach are left for
/// other stages instead of raising an error.
pub(crate) fn analyze_scoped(
    g: &Graph,
    first: &[TaskId],
    last: &[TaskId],
    blocked: &[TaskId],
    external: Option<Vec<bool>>,
    lenient: bool,
) -> Result<SequencePlan, BuildError> {
    if first.is_empty() {
        return Err(BuildError::EmptyFirstTasks);
    }
    for t in first.iter().chain(last.iter()) {
        check_task(g, *t)?;
    }
    let region = structural_region(g, first, last, blocked);

    let mut a = Analyzer::new(g, last, external);
    // blocked-traversal restart order is strictly the declaration order of
    // the first tasks
    for f in first.to_vec() {
        if !a.scheduled[f.index()] {
            a.visit(f, &region)?;
        }
    }
    a.seal_current();

    // ---- error analysis over the structural region -------------------------
    let missing: Vec<TaskId> = (0..g.task_count())
        .map(TaskId)
        .filter(|t| region[t.index()] && !a.scheduled[t.index()])
        .collect();
    if !missing.is_empty() && !lenient {
        // unbound inputs first: the most specific diagnosis
        for t in &missing {
            if g.task_kind(*t) == TaskKind::Select {
                continue;
            }
            for (i, s) in g.task_inputs(*t).iter().enumerate() {
                if g.socket_source(*s).is_none() {
                    return Err(BuildError::DanglingInput {
                        task: *t,
                        name: g.task_full_name(*t),
                        input: i,
                    });
                }
            }
        }
        // otherwise the blockage is a dependency cycle among the missing
        if let Some(cycle) = find_cycle(g, &missing, &a.scheduled, &region) {
            return Err(BuildError::Cycle {
                task_names: cycle.iter().map(|t| g.task_full_name(*t)).collect(),
            });
        }
        // selects with a dangling highest input fall through to here
        let t = missing[0];
        let idx = g.task_inputs(t).len().saturating_sub(1);
        return Err(BuildError::DanglingInput {
            task: t,
            name: g.task_full_name(t),
            input: idx,
        });
    }
    for l in last {
        if !a.scheduled[l.index()] {
            return Err(BuildError::Unreachable {
                task: *l,
                name: g.task_full_name(*l),
            });
        }
    }

    // dangling inputs on scheduled non-select tasks (bound-ness audit)
    for t in (0..g.task_count()).map(TaskId) {
        if !a.scheduled[t.index()] || g.task_kind(t) == TaskKind::Select {
            continue;
        }
        for (i, s) in g.task_inputs(t).iter().enumerate() {
            if g.socket_source(*s).is_none() {
                return Err(BuildError::DanglingInput {
                    task: t,
                    name: g.task_full_name(t),
                    input: i,
                });
            }
        }
    }

    finish_plan(g, a, first, last)
}

fn find_cycle(
    g: &Graph,
    missing: &[TaskId],
    scheduled: &[bool],
    region: &[bool],
) -> Option<Vec<TaskId>> {
    let in_missing = |t: TaskId| missing.contains(&t);
    // walk blocked-input sources until a task repeats
    let mut path: Vec<TaskId> = Vec::new();
    let mut cur = *missing.first()?;
    loop {
        if let Some(pos) = path.iter().position(|x| *x == cur) {
            return Some(path[pos..].to_vec());
        }
        path.push(cur);
        let next = g.task_inputs(cur).iter().find_map(|s| {
            let src = g.socket_source(*s)?;
            let owner = g.socket_task(src);
            (region[owner.index()] && !scheduled[owner.index()] && in_missing(owner))
                .then_some(owner)
        });
        match next {
            Some(n) => cur = n,
            None => return None,
        }
    }
}

fn finish_plan(
    g: &Graph,
    a: Analyzer<'_>,
    first: &[TaskId],
    last: &[TaskId],
) -> Result<SequencePlan, BuildError> {
    // compile tasks node by node, pushing adaptor-push tasks to the end of
    // their node so copy-less handle exchange cannot race in-stage readers
    let mut module_slots: Vec<ModuleSlot> = Vec::new();
    let mut slot_of: BTreeMap<ModuleId, usize> = BTreeMap::new();
    let mut tasks: Vec<CompiledTask> = Vec::new();
    let mut nodes: Vec<PlanNode> = Vec::new();

    for bn in &a.nodes {
        let mut ordered = bn.tasks.clone();
        ordered.sort_by_key(|t| matches!(g.task_entry(*t).adaptor, Some((AdaptorRole::Push, _))));
        let mut idxs = Vec::with_capacity(ordered.len());
        for t in ordered {
            let entry = g.task_entry(t);
            let slot = *slot_of.entry(entry.module).or_insert_with(|| {
                module_slots.push(ModuleSlot {
                    id: entry.module,
                    name: g.module_name(entry.module).to_owned(),
                    cloneability: g.module_cloneability(entry.module),
                });
                module_slots.len() - 1
            });
            tasks.push(CompiledTask {
                id: t,
                full_name: g.task_full_name(t),
                kind: entry.kind,
                class: entry.class,
                module_slot: slot,
                input_sources: entry.inputs.iter().map(|s| g.socket_source(*s)).collect(),
                output_ids: entry.outputs.clone(),
                body: entry.body.clone(),
                adaptor: entry.adaptor,
            });
            idxs.push(tasks.len() - 1);
        }
        let succ = match &bn.branch {
            Some(arms) => arms
                .iter()
                .map(|s| match s {
                    Succ::Node(n) => Some(*n),
                    Succ::End => None,
                    Succ::Unset => None,
                })
                .collect(),
            None => vec![match bn.succ {
                Succ::Node(n) => Some(n),
                _ => None,
            }],
        };
        nodes.push(PlanNode {
            tasks: idxs,
            kind: SubSeqKind::Plain,
            branch: bn.branch.is_some(),
            succ,
        });
    }

    // unresolved commute arms whose sockets were bound are real errors
    for (bi, bn) in a.nodes.iter().enumerate() {
        if let Some(arms) = &bn.branch {
            for (p, s) in arms.iter().enumerate() {
                if *s == Succ::Unset {
                    let com = *bn.tasks.last().unwrap();
                    if !g.socket_sinks(g.output(com, p)).is_empty() {
                        return Err(BuildError::UnresolvedPath {
                            task: com,
                            name: g.task_full_name(com),
                            path: p,
                        });
                    }
                    let _ = bi;
                }
            }
        }
    }

    // classify branch nodes: a branch that can reach itself is a loop head
    for i in 0..nodes.len() {
        if !nodes[i].branch {
            continue;
        }
        nodes[i].kind = if reaches(&nodes, i, i) {
            SubSeqKind::Loop
        } else {
            SubSeqKind::Switch
        };
    }

    // buffer templates: every output socket of a scheduled task, plus the
    // external source sockets feeding region inputs
    let mut buffers: Vec<BufferTemplate> = Vec::new();
    let mut seen = vec![false; g.socket_count()];
    for ct in &tasks {
        for out in &ct.output_ids {
            if !seen[out.index()] {
                seen[out.index()] = true;
                buffers.push(BufferTemplate {
                    socket: *out,
                    spec: g.socket_spec(*out),
                });
            }
        }
    }
    let scheduled_set: Vec<bool> = {
        let mut v = vec![false; g.task_count()];
        for ct in &tasks {
            v[ct.id.index()] = true;
        }
        v
    };
    for ct in &tasks {
        for src in ct.input_sources.iter().flatten() {
            let owner = g.socket_task(*src);
            if !scheduled_set[owner.index()] && !seen[src.index()] {
                seen[src.index()] = true;
                buffers.push(BufferTemplate {
                    socket: *src,
                    spec: g.socket_spec(*src),
                });
            }
        }
    }

    Ok(SequencePlan {
        tasks,
        nodes,
        entry: 0,
        socket_slots: g.socket_count(),
        buffers,
        modules: module_slots,
        first: first.to_vec(),
        last: last.to_vec(),
    })
}

fn reaches(nodes: &[PlanNode], from: usize, target: usize) -> bool {
    let mut seen = vec![false; nodes.len()];
    let mut stack: Vec<usize> = nodes[from].succ.iter().flatten().copied().collect();
    while let Some(n) = stack.pop() {
        if n == target {
            return true;
        }
        if seen[n] {
            continue;
        }
        seen[n] = true;
        stack.extend(nodes[n].succ.iter().flatten().copied());
    }
    false
}

impl std::fmt::Debug for SequencePlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}
