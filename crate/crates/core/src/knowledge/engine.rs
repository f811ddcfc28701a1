//! Exhaustive exploration of bounded schedules and initial states.
//!
//! The schedule tree is walked depth first, thread ids in increasing order,
//! so schedules are visited lexicographically. At every node we keep one
//! instance per initial state still distinguishable by the run so far.
//! Input streams are branched lazily: a stream position gets a value only
//! when some run consumes it, so unconsumed positions never multiply the
//! work. Scheduling a thread that cannot move in any instance is skipped,
//! since it leaves every configuration unchanged and the shorter schedule is
//! explored anyway.
//!
//! Execution is deterministic per schedule, so the existential "some
//! reachable configuration has an equivalent trace" reduces to a prefix
//! question about the visible trace of each instance's single run. Those
//! questions are answered at the leaves.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use crate::declass::{release, Declassifier};
use crate::equivalence::hatch_value;
use crate::error::{Error, Result};
use crate::lang::ast::{Command, StmtId};
use crate::lang::printer::command_str;
use crate::lang::term::{Scope, Term};
use crate::semantics::state::{Environment, Event, EventKind, GlobalState, LockMap, Memory, Trace};
use crate::semantics::step_in_place;
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::{Domain, ThreadId, Value};

use super::report::{InitialState, Stats, Witness, WitnessKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Event-occurrence security of every visible event.
    System,
    /// Delimited release and absence of secret branching, together.
    Release,
    /// Every thread's current annotation in every reachable configuration.
    Monitor,
}

#[derive(Default)]
pub(crate) struct Findings {
    pub violation: Option<Witness>,
    pub undetermined: Option<Witness>,
}

pub(crate) struct Outcome {
    pub main: Findings,
    /// Secret-branching findings (release mode only).
    pub branching: Findings,
    pub stats: Stats,
    /// Set when the exploration stopped because of the cap.
    pub exhausted: Option<String>,
}

/// Hatch values on every prefix of a stream, one row per hatch.
type Profile = Rc<Vec<Vec<Value>>>;

#[derive(Clone)]
struct Inst {
    root: u32,
    locals: Vec<Rc<Command>>,
    state: GlobalState,
    vis: Vec<u32>,
    vis_step: Vec<u16>,
    snaps: Vec<u64>,
}

/// Whether thread `tid` running `cmd` can take no step in `st`.
fn stuck(cmd: &Command, st: &GlobalState, tid: ThreadId) -> bool {
    match cmd.head() {
        Command::Stop => true,
        Command::Acquire { lock, .. } => !matches!(st.locks.get(*lock), Some(None)),
        Command::Release { lock, .. } => st.locks.get(*lock) != Some(Some(tid)),
        _ => false,
    }
}

/// Structural equality of local code, using the fact that every non-sequence
/// node is a node of the original program and so is identified by its id.
fn same_code(a: &Command, b: &Command) -> bool {
    match (a, b) {
        (Command::Seq(a1, a2), Command::Seq(b1, b2)) => same_code(a1, b1) && same_code(a2, b2),
        (Command::Stop, Command::Stop) => true,
        (Command::Seq(..), _) | (_, Command::Seq(..)) | (Command::Stop, _) | (_, Command::Stop) => false,
        _ => a.id() == b.id(),
    }
}

fn hash_ids(c: &Command, h: &mut impl Hasher) {
    match c {
        Command::Seq(a, b) => {
            1u8.hash(h);
            hash_ids(a, h);
            hash_ids(b, h);
        }
        Command::Stop => 2u8.hash(h),
        other => other.id().hash(h),
    }
}

pub(crate) struct Explorer<'a> {
    sys: &'a System,
    bounds: Bounds,
    k: Domain,
    alvl: Symbol,
    mode: Mode,
    declass: Option<&'a Declassifier<'a>>,
    levels: Vec<Symbol>,
    roots: Vec<Memory>,
    classes: Vec<u32>,
    events: HashMap<Event, u32>,
    event_list: Vec<Event>,
    shape: Vec<u32>,
    is_declass: Vec<bool>,
    code_hash: HashMap<StmtId, u64>,
    hatch_levels: Vec<(Symbol, Vec<Rc<Term>>)>,
    profiles: HashMap<(Symbol, Vec<Value>), Profile>,
    sched: Vec<ThreadId>,
    stats: Stats,
    main: Findings,
    branching: Findings,
    exhausted: Option<String>,
}

enum Flow {
    Go,
    Stop,
}

impl<'a> Explorer<'a> {
    pub fn new(
        sys: &'a System,
        bounds: Bounds,
        alvl: Symbol,
        mode: Mode,
        declass: Option<&'a Declassifier<'a>>,
        roots: Vec<Memory>,
    ) -> Explorer<'a> {
        let lat = &sys.policy.lattice;
        let levels = lat.levels().to_vec();
        // class of an initial memory: its attacker-visible projection
        let mut class_ids: HashMap<Vec<Value>, u32> = HashMap::new();
        let classes = roots
            .iter()
            .map(|m| {
                let key: Vec<Value> = if mode == Mode::Monitor {
                    Vec::new()
                } else {
                    m.slots
                        .iter()
                        .filter(|(x, _)| sys.policy.labels.visible(lat, *x, alvl))
                        .map(|(_, v)| *v)
                        .collect()
                };
                let n = class_ids.len() as u32;
                *class_ids.entry(key).or_insert(n)
            })
            .collect();
        let mut code_hash = HashMap::new();
        for t in &sys.program.threads {
            t.visit(&mut |c| {
                let mut h = DefaultHasher::new();
                command_str(c).hash(&mut h);
                code_hash.insert(c.id().unwrap(), h.finish());
            });
        }
        let mut hatch_levels: Vec<(Symbol, Vec<Rc<Term>>)> = Vec::new();
        for h in &sys.policy.hatches {
            if lat.leq(h.dst, alvl) && !lat.leq(h.src, alvl) {
                match hatch_levels.iter_mut().find(|(l, _)| *l == h.src) {
                    Some((_, hs)) => hs.push(h.expr.clone()),
                    None => hatch_levels.push((h.src, vec![h.expr.clone()])),
                }
            }
        }
        Explorer {
            sys,
            bounds,
            k: bounds.domain,
            alvl,
            mode,
            declass,
            levels,
            roots,
            classes,
            events: HashMap::new(),
            event_list: Vec::new(),
            shape: Vec::new(),
            is_declass: Vec::new(),
            code_hash,
            hatch_levels,
            profiles: HashMap::new(),
            sched: Vec::new(),
            stats: Stats::default(),
            main: Findings::default(),
            branching: Findings::default(),
            exhausted: None,
        }
    }

    pub fn run(mut self) -> Result<Outcome> {
        self.stats.initial_states = self.roots.len() as u64;
        let mut insts = Vec::with_capacity(self.roots.len());
        for (i, m) in self.roots.iter().enumerate() {
            let st = GlobalState {
                env: Environment::constant(&self.levels, 0),
                mem: m.clone(),
                locks: LockMap::free(&self.sys.program.locks),
                trace: Trace::default(),
            };
            insts.push(Inst {
                root: i as u32,
                locals: self.sys.program.threads.clone(),
                state: st,
                vis: Vec::new(),
                vis_step: Vec::new(),
                snaps: Vec::new(),
            });
        }
        if self.mode == Mode::Release {
            for i in insts.iter_mut() {
                let s = self.snapshot(i);
                i.snaps.push(s);
            }
        }
        if !insts.is_empty() {
            self.node(insts, 0)?;
        }
        Ok(Outcome {
            main: self.main,
            branching: self.branching,
            stats: self.stats,
            exhausted: self.exhausted,
        })
    }

    fn done(&self) -> bool {
        if self.exhausted.is_some() {
            return true;
        }
        match self.mode {
            Mode::Release => self.main.violation.is_some() && self.branching.violation.is_some(),
            _ => self.main.violation.is_some(),
        }
    }

    fn node(&mut self, insts: Vec<Inst>, depth: usize) -> Result<Flow> {
        self.stats.nodes += 1;
        if self.mode == Mode::Monitor {
            self.monitor(&insts, depth)?;
            if self.done() {
                return Ok(Flow::Stop);
            }
        }
        if depth == self.bounds.sched {
            self.leaf(&insts)?;
            return Ok(if self.done() { Flow::Stop } else { Flow::Go });
        }
        let mut moved = false;
        for t in 0..self.sys.thread_count() {
            let Some(children) = self.step_all(&insts, t, depth)? else {
                if self.done() {
                    return Ok(Flow::Stop);
                }
                continue;
            };
            moved = true;
            self.sched.push(t);
            let flow = self.node(children, depth + 1)?;
            self.sched.pop();
            if let Flow::Stop = flow {
                return Ok(Flow::Stop);
            }
        }
        if !moved {
            // every thread is finished or blocked in every instance
            self.leaf(&insts)?;
        }
        Ok(if self.done() { Flow::Stop } else { Flow::Go })
    }

    /// Schedules thread `t` in every instance. `None` when `t` cannot move
    /// anywhere (or the search must stop).
    fn step_all(&mut self, insts: &[Inst], t: ThreadId, depth: usize) -> Result<Option<Vec<Inst>>> {
        if insts.iter().all(|i| stuck(&i.locals[t], &i.state, t)) {
            return Ok(None);
        }
        let mut out = Vec::with_capacity(insts.len());
        for inst in insts {
            let cmd = inst.locals[t].clone();
            if stuck(&cmd, &inst.state, t) {
                let mut c = inst.clone();
                if self.mode == Mode::Release {
                    let s = *c.snaps.last().unwrap();
                    c.snaps.push(s);
                }
                out.push(c);
                continue;
            }
            match cmd.head() {
                Command::Input { level, .. } if inst.state.trace.input_count(*level) < self.bounds.prefix => {
                    for v in self.k.values() {
                        let mut c = inst.clone();
                        if let Some(s) = c.state.env.stream_mut(*level) {
                            s.prefix = vec![v];
                        }
                        self.advance(&mut c, t, &cmd, depth)?;
                        out.push(c);
                    }
                }
                head => {
                    if self.mode == Mode::System {
                        if let Some(d) = self.declass {
                            if let Some(r) = release(self.sys, head) {
                                if self.sys.policy.lattice.leq(r.dst, self.alvl) && !d.permits(head, &inst.state)? {
                                    let mut c = inst.clone();
                                    self.advance(&mut c, t, &cmd, depth)?;
                                    let e = c.state.trace.events().last().map(|e| e.to_string());
                                    let mut sched = self.sched.clone();
                                    sched.push(t);
                                    self.main.violation = Some(Witness {
                                        kind: WitnessKind::DeclassDenied,
                                        initial: self.initial_of(&c, None),
                                        other: None,
                                        schedule: sched,
                                        step: depth,
                                        event: e,
                                        explanation: format!(
                                            "thread {} declassifies `{}` from {} to {} but the predicate does not permit it",
                                            t,
                                            r.expr,
                                            r.src.map_or("an unlabeled level".to_string(), |s| s.to_string()),
                                            r.dst
                                        ),
                                    });
                                    return Ok(None);
                                }
                            }
                        }
                    }
                    let mut c = inst.clone();
                    self.advance(&mut c, t, &cmd, depth)?;
                    out.push(c);
                }
            }
            if self.exhausted.is_some() {
                return Ok(None);
            }
        }
        if self.mode != Mode::Release {
            out = self.merge(out);
        }
        Ok(Some(out))
    }

    fn advance(&mut self, c: &mut Inst, t: ThreadId, cmd: &Rc<Command>, depth: usize) -> Result<()> {
        self.stats.steps += 1;
        if self.stats.steps > self.bounds.cap {
            self.exhausted = Some(format!("more than {} steps explored", self.bounds.cap));
        }
        let before = c.state.trace.len();
        if let Some((next, _)) = step_in_place(self.sys, self.k, t, cmd, &mut c.state)? {
            c.locals[t] = next;
        }
        let after = c.state.trace.len();
        // traces only ever grow, by at most one event per step
        assert!(after == before || after == before + 1, "trace monotonicity violated");
        if after > before {
            let e = &c.state.trace.events()[before];
            if self.sys.policy.lattice.leq(e.level, self.alvl) {
                let id = self.intern(e);
                c.vis.push(id);
                c.vis_step.push(depth as u16);
            }
        }
        if self.mode == Mode::Release {
            let s = self.snapshot(c);
            c.snaps.push(s);
        }
        Ok(())
    }

    fn intern_raw(&mut self, e: &Event) -> u32 {
        if let Some(id) = self.events.get(e) {
            return *id;
        }
        let id = self.event_list.len() as u32;
        self.events.insert(e.clone(), id);
        self.event_list.push(e.clone());
        self.is_declass.push(e.kind == EventKind::Declass);
        self.shape.push(id);
        id
    }

    fn intern(&mut self, e: &Event) -> u32 {
        let id = self.intern_raw(e);
        // inputs on a visible channel take their value from the stream, which
        // equivalent states share; only the channel distinguishes them
        if e.kind == EventKind::Input {
            let s = self.intern_raw(&Event::input(e.level, -1));
            self.shape[id as usize] = s;
        }
        id
    }

    fn snapshot(&self, c: &Inst) -> u64 {
        let mut h = DefaultHasher::new();
        for l in &c.locals {
            for part in l.flatten() {
                self.code_hash[&part.id().unwrap()].hash(&mut h);
            }
            0xfeu8.hash(&mut h);
        }
        c.vis.len().hash(&mut h);
        for l in &self.levels {
            c.state.trace.input_count(*l).hash(&mut h);
        }
        h.finish()
    }

    /// Collapses instances with identical configurations and class.
    fn merge(&mut self, insts: Vec<Inst>) -> Vec<Inst> {
        let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
        let mut out: Vec<Inst> = Vec::with_capacity(insts.len());
        for inst in insts {
            let mut h = DefaultHasher::new();
            self.classes[inst.root as usize].hash(&mut h);
            inst.state.hash(&mut h);
            for l in &inst.locals {
                hash_ids(l, &mut h);
            }
            let key = h.finish();
            let bucket = seen.entry(key).or_default();
            let dup = bucket.iter().any(|&j| {
                let o = &out[j];
                self.classes[o.root as usize] == self.classes[inst.root as usize]
                    && o.state == inst.state
                    && o.locals.iter().zip(&inst.locals).all(|(a, b)| same_code(a, b))
            });
            if dup {
                self.stats.merged += 1;
            } else {
                bucket.push(out.len());
                out.push(inst);
            }
        }
        out
    }

    fn monitor(&mut self, insts: &[Inst], depth: usize) -> Result<()> {
        for inst in insts {
            let st = &inst.state;
            let sc = Scope::new(self.k, &self.sys.policy.tables)
                .with_mem(&st.mem)
                .with_locks(&st.locks)
                .with_trace(&st.trace);
            for (t, l) in inst.locals.iter().enumerate() {
                let Some(a) = l.entry_ann() else { continue };
                if !sc.holds(a)? {
                    let head = l.head();
                    self.main.violation = Some(Witness {
                        kind: WitnessKind::AnnotationFails,
                        initial: self.initial_of(inst, None),
                        other: None,
                        schedule: self.sched.clone(),
                        step: depth,
                        event: None,
                        explanation: format!(
                            "the annotation {{{}}} of thread {} before statement {} fails",
                            a,
                            t,
                            head.id().unwrap_or(0)
                        ),
                    });
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn leaf(&mut self, insts: &[Inst]) -> Result<()> {
        self.stats.schedules += 1;
        match self.mode {
            Mode::System => self.leaf_system(insts),
            Mode::Release => self.leaf_release(insts),
            Mode::Monitor => Ok(()),
        }
    }

    fn leaf_system(&mut self, insts: &[Inst]) -> Result<()> {
        let mut order: Vec<usize> = (0..insts.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&insts[a], &insts[b]);
            self.classes[x.root as usize]
                .cmp(&self.classes[y.root as usize])
                .then_with(|| x.vis.cmp(&y.vis))
                .then_with(|| x.root.cmp(&y.root))
        });
        for w in order.windows(2) {
            let (a, b) = (&insts[w[0]], &insts[w[1]]);
            if self.classes[a.root as usize] != self.classes[b.root as usize] {
                continue;
            }
            let j = a.vis.iter().zip(&b.vis).take_while(|(x, y)| x == y).count();
            if j == a.vis.len() && j == b.vis.len() {
                continue;
            }
            if j == a.vis.len() {
                // `a` stopped where `b` went on: `a` might still catch up
                if !self.is_declass[b.vis[j] as usize] && self.main.undetermined.is_none() {
                    let w = self.uncertainty_witness(b, a, j, WitnessKind::Undetermined);
                    self.main.undetermined = Some(w);
                }
                continue;
            }
            let (ea, eb) = (a.vis[j] as usize, b.vis[j] as usize);
            if self.shape[ea] == self.shape[eb] {
                continue;
            }
            let (x, y) = if !self.is_declass[ea] {
                (a, b)
            } else if !self.is_declass[eb] {
                (b, a)
            } else {
                continue;
            };
            let w = self.uncertainty_witness(x, y, j, WitnessKind::UncertaintyShrinks);
            self.main.violation = Some(w);
            return Ok(());
        }
        Ok(())
    }

    fn uncertainty_witness(&self, x: &Inst, y: &Inst, j: usize, kind: WitnessKind) -> Witness {
        let e = &self.event_list[x.vis[j] as usize];
        let explanation = match kind {
            WitnessKind::Undetermined => format!(
                "after {} visible events the run emits {} while an equivalent run emits nothing more within the schedule",
                j, e
            ),
            _ => {
                let other = y.vis.get(j).map(|o| self.event_list[*o as usize].to_string());
                format!(
                    "observing {} after {} visible events rules out an equivalent initial state whose run shows {} instead",
                    e,
                    j,
                    other.unwrap_or_else(|| "nothing".into())
                )
            }
        };
        Witness {
            kind,
            initial: self.initial_of(x, None),
            other: Some(self.initial_of(y, Some(x))),
            schedule: self.sched.clone(),
            step: x.vis_step[j] as usize,
            event: Some(e.to_string()),
            explanation,
        }
    }

    /// The first `prefix` inputs the instance consumed on `l`.
    fn assigned(&self, i: &Inst, l: Symbol) -> Vec<Value> {
        i.state.trace.inputs(l).take(self.bounds.prefix).collect()
    }

    /// A concrete initial state for the instance. With `like`, visible
    /// stream positions the instance never consumed are copied from `like`.
    fn initial_of(&self, i: &Inst, like: Option<&Inst>) -> InitialState {
        let lat = &self.sys.policy.lattice;
        let p = self.bounds.prefix;
        let streams = self
            .levels
            .iter()
            .map(|&l| {
                let mut vs = self.assigned(i, l);
                if let Some(o) = like {
                    if lat.leq(l, self.alvl) {
                        let theirs = self.assigned(o, l);
                        for (n, v) in theirs.iter().enumerate() {
                            if n < vs.len() {
                                vs[n] = *v;
                            } else {
                                vs.push(*v);
                            }
                        }
                    }
                }
                vs.resize(p, 0);
                (l, vs)
            })
            .collect();
        InitialState {
            mem: self.roots[i.root as usize].slots.clone(),
            streams,
        }
    }

    fn leaf_release(&mut self, insts: &[Inst]) -> Result<()> {
        let mut start = 0;
        while start < insts.len() {
            let root = insts[start].root;
            let mut end = start + 1;
            while end < insts.len() && insts[end].root == root {
                end += 1;
            }
            let group = &insts[start..end];
            start = end;
            let uniform_vis = group.iter().all(|i| i.vis == group[0].vis);
            let uniform_code = group.iter().all(|i| i.snaps == group[0].snaps);
            if uniform_vis && uniform_code {
                continue;
            }
            for (n, x) in group.iter().enumerate() {
                for y in &group[n + 1..] {
                    let diverge = x.vis != y.vis;
                    let code = x.snaps != y.snaps;
                    if !diverge && !code {
                        continue;
                    }
                    let Some((sx, sy)) = self.realize(x, y) else {
                        continue;
                    };
                    if diverge && self.main.violation.is_none() {
                        let m = x.vis.len().min(y.vis.len());
                        let j = x.vis.iter().zip(&y.vis).take_while(|(a, b)| a == b).count();
                        let (long, short) = if x.vis.len() >= y.vis.len() { (x, y) } else { (y, x) };
                        let (ls, ss) = if x.vis.len() >= y.vis.len() {
                            (sx.clone(), sy.clone())
                        } else {
                            (sy.clone(), sx.clone())
                        };
                        let kind = if j < m {
                            WitnessKind::TracesDiverge
                        } else {
                            WitnessKind::Undetermined
                        };
                        let e = self.event_list[long.vis[j] as usize].to_string();
                        let w = Witness {
                            kind,
                            initial: ls,
                            other: Some(ss),
                            schedule: self.sched.clone(),
                            step: long.vis_step[j] as usize,
                            event: Some(e.clone()),
                            explanation: if kind == WitnessKind::TracesDiverge {
                                format!(
                                    "states agreeing under the escape hatches produce different visible events at position {}: {} versus {}",
                                    j,
                                    e,
                                    self.event_list[short.vis[j] as usize]
                                )
                            } else {
                                format!(
                                    "one run emits {} after {} visible events; the agreeing run emits nothing more within the schedule",
                                    e, j
                                )
                            },
                        };
                        if kind == WitnessKind::TracesDiverge {
                            self.main.violation = Some(w);
                        } else if self.main.undetermined.is_none() {
                            self.main.undetermined = Some(w);
                        }
                    }
                    if code && self.branching.violation.is_none() {
                        let unmatched = |a: &Inst, b: &Inst| a.snaps.iter().position(|s| !b.snaps.contains(s));
                        let found = match unmatched(x, y) {
                            Some(k) => Some((k, sx.clone(), sy.clone())),
                            None => unmatched(y, x).map(|k| (k, sy.clone(), sx.clone())),
                        };
                        if let Some((k, a, b)) = found {
                            self.branching.violation = Some(Witness {
                                kind: WitnessKind::CodeDiverges,
                                initial: a,
                                other: Some(b),
                                schedule: self.sched.clone(),
                                step: k,
                                event: None,
                                explanation: format!(
                                    "after {} steps the first run is executing code (or has performed visible events or inputs) that the agreeing run never matches",
                                    k
                                ),
                            });
                        }
                    }
                    if self.done() {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// Completions of the two instances' partially assigned streams under
    /// which the initial states agree under the hatches, if any.
    fn realize(&mut self, x: &Inst, y: &Inst) -> Option<(InitialState, InitialState)> {
        let lat = &self.sys.policy.lattice;
        let p = self.bounds.prefix;
        let mut sx = Vec::new();
        let mut sy = Vec::new();
        for &l in &self.levels.clone() {
            let (a, b) = (self.assigned(x, l), self.assigned(y, l));
            if lat.leq(l, self.alvl) {
                let m = a.len().min(b.len());
                if a[..m] != b[..m] {
                    return None;
                }
                let mut full = if a.len() >= b.len() { a } else { b };
                full.resize(p, 0);
                sx.push((l, full.clone()));
                sy.push((l, full));
            } else if let Some(hs) = self.hatch_levels.iter().find(|(m, _)| *m == l).map(|(_, hs)| hs.clone()) {
                let pa = self.profiles(l, &a, &hs);
                let pb = self.profiles(l, &b, &hs);
                let shared = pa.iter().find(|v| pb.contains(v))?.clone();
                let pick = |a: &[Value], this: &mut Self| -> Vec<Value> {
                    this.completions(a)
                        .into_iter()
                        .find(|c| this.profile(c, &hs) == shared)
                        .expect("profile came from a completion")
                };
                sx.push((l, pick(&a, self)));
                sy.push((l, pick(&b, self)));
            } else {
                let (mut a, mut b) = (a, b);
                a.resize(p, 0);
                b.resize(p, 0);
                sx.push((l, a));
                sy.push((l, b));
            }
        }
        Some((
            InitialState {
                mem: self.roots[x.root as usize].slots.clone(),
                streams: sx,
            },
            InitialState {
                mem: self.roots[y.root as usize].slots.clone(),
                streams: sy,
            },
        ))
    }

    fn completions(&self, a: &[Value]) -> Vec<Vec<Value>> {
        let mut out = vec![a.to_vec()];
        for _ in a.len()..self.bounds.prefix {
            let mut next = Vec::new();
            for xs in &out {
                for v in self.k.values() {
                    let mut ys = xs.clone();
                    ys.push(v);
                    next.push(ys);
                }
            }
            out = next;
        }
        out
    }

    /// Hatch values on every prefix of the stream, up to the horizon.
    fn profile(&self, full: &[Value], hs: &[Rc<Term>]) -> Vec<Value> {
        let horizon = self.bounds.sched + self.bounds.prefix;
        let mut stream = full.to_vec();
        stream.resize(horizon.max(full.len()), 0);
        let mut out = Vec::new();
        for h in hs {
            for n in 0..=horizon {
                // evaluation errors make the hatch unusable; treat as a distinct value
                out.push(hatch_value(&self.sys.policy, self.k, h, &stream[..n]).unwrap_or(Value::MIN));
            }
        }
        out
    }

    fn profiles(&mut self, l: Symbol, a: &[Value], hs: &[Rc<Term>]) -> Profile {
        let key = (l, a.to_vec());
        if let Some(p) = self.profiles.get(&key) {
            return p.clone();
        }
        let mut ps: Vec<Vec<Value>> = self.completions(a).iter().map(|c| self.profile(c, hs)).collect();
        ps.sort();
        ps.dedup();
        let ps = Rc::new(ps);
        self.profiles.insert(key, ps.clone());
        ps
    }
}

/// Bounded initial memories in lexicographic order (first declared variable
/// most significant) satisfying `init` and, with `entry`, every thread's
/// first annotation.
pub fn initial_memories(sys: &System, bounds: &Bounds, entry: bool) -> Result<Vec<Memory>> {
    let vars = &sys.program.vars;
    let k = bounds.domain;
    let total = (k.size() as u64)
        .checked_pow(vars.len() as u32)
        .filter(|n| *n <= bounds.cap)
        .ok_or_else(|| Error::Bounds(format!("{}^{} initial memories exceed the cap", k.size(), vars.len())))?;
    let locks = LockMap::free(&sys.program.locks);
    let trace = Trace::default();
    let mut anns = Vec::new();
    if let Some(i) = &sys.program.init {
        anns.push(i.clone());
    }
    if entry {
        for t in &sys.program.threads {
            if let Some(a) = t.entry_ann() {
                anns.push(a.clone());
            }
        }
    }
    let mut out = Vec::new();
    let mut mem = Memory::zeroed(vars);
    for n in 0..total {
        let mut rest = n;
        for x in vars.iter().rev() {
            mem.set(*x, (rest % k.size() as u64) as Value);
            rest /= k.size() as u64;
        }
        let sc = Scope::new(k, &sys.policy.tables)
            .with_mem(&mem)
            .with_locks(&locks)
            .with_trace(&trace);
        let mut ok = true;
        for a in &anns {
            if !sc.holds(a)? {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(mem.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn same_code_ignores_allocation() {
        let p = parse_program("vars x; thread 0 { x := 1; x := 2; x := 3 }").unwrap();
        let t = p.threads[0].clone();
        let Command::Seq(a, rest) = &*t else { panic!() };
        let rebuilt = Rc::new(Command::Seq(a.clone(), rest.clone()));
        assert!(same_code(&t, &rebuilt));
        assert!(!same_code(&t, rest));
    }
}
