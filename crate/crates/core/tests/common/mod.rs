//! Random program generation shared by the integration tests.
//!
//! Programs range over two labeled variables `h: top` and `l: bot`, two
//! unlabeled variables `u` and `w` and one lock `m`. Every statement is
//! written with a `true` annotation; [`annotate`] replaces those with
//! inferred, stabilized ones.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dfc::lang::{parse_program, Term};
use dfc::policy::parse_policy;
use dfc::semantics::{run, Environment, Event, GlobalConfig, GlobalState, LockMap, Memory, Stream, Trace};
use dfc::system::{Bounds, System};
use dfc::verify::{infer_annotations, stabilize};
use dfc::{Domain, Symbol};

pub const POLICY: &str = "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }";

/// The same lattice with one escape hatch: the last top input may be released.
pub const HATCH_POLICY: &str =
    "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; } hatches { top -> bot: last(vs); }";

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub max_threads: usize,
    /// Upper bound on atomic statements over the whole program.
    pub max_stmts: usize,
    pub loops: bool,
    pub locks: bool,
    pub declass: bool,
    pub domain: i64,
}

impl Default for Shape {
    fn default() -> Shape {
        Shape {
            max_threads: 3,
            max_stmts: 12,
            loops: true,
            locks: true,
            declass: false,
            domain: 2,
        }
    }
}

const VARS: [&str; 4] = ["h", "l", "u", "w"];

struct Gen<'s> {
    rng: ChaCha8Rng,
    shape: &'s Shape,
    budget: usize,
}

impl Gen<'_> {
    fn atom(&mut self) -> String {
        if self.rng.gen_bool(0.3) {
            self.rng.gen_range(0..self.shape.domain).to_string()
        } else {
            VARS.choose(&mut self.rng).unwrap().to_string()
        }
    }

    fn expr(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 | 1 => self.atom(),
            2 => format!("{} + {}", self.atom(), self.atom()),
            _ => format!("{} = {}", self.atom(), self.atom()),
        }
    }

    fn cond(&mut self) -> String {
        let x = VARS.choose(&mut self.rng).unwrap();
        match self.rng.gen_range(0..3) {
            0 => x.to_string(),
            _ => format!("{} = {}", x, self.rng.gen_range(0..self.shape.domain)),
        }
    }

    fn level(&mut self) -> &'static str {
        if self.rng.gen_bool(0.5) {
            "bot"
        } else {
            "top"
        }
    }

    fn atomic(&mut self) -> String {
        self.budget -= 1;
        let x = VARS.choose(&mut self.rng).unwrap();
        let roll = self.rng.gen_range(0..100);
        if self.shape.declass && roll < 15 {
            return if self.rng.gen_bool(0.5) {
                "l :=^ h {true}".to_string()
            } else {
                "output^ bot h {true}".to_string()
            };
        }
        match roll {
            0..=49 => format!("{} := {} {{true}}", x, self.expr()),
            50..=64 => format!("input {} {} {{true}}", x, self.level()),
            _ => format!("output {} {} {{true}}", self.level(), self.expr()),
        }
    }

    fn block(&mut self, depth: usize, in_lock: bool) -> String {
        let n = self.rng.gen_range(1..=3).min(self.budget.max(1));
        let mut out = Vec::new();
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            out.push(self.statement(depth, in_lock));
        }
        if out.is_empty() {
            // a budget exhausted by a sibling still needs a body
            out.push("skip {true}".into());
        }
        out.join("; ")
    }

    fn statement(&mut self, depth: usize, in_lock: bool) -> String {
        let roll = self.rng.gen_range(0..100);
        if depth < 2 && self.budget >= 2 {
            if roll < 15 {
                self.budget -= 1;
                let c = self.cond();
                let t = self.block(depth + 1, in_lock);
                return if self.rng.gen_bool(0.7) {
                    let e = self.block(depth + 1, in_lock);
                    format!("if {} {{true}} then {} else {} fi", c, t, e)
                } else {
                    format!("if {} {{true}} then {} fi", c, t)
                };
            }
            if self.shape.loops && roll < 20 {
                self.budget -= 1;
                let c = self.cond();
                let b = self.block(depth + 1, in_lock);
                return format!("while {} {{true}} do {} od", c, b);
            }
            if self.shape.locks && !in_lock && roll < 30 && self.budget >= 3 {
                self.budget -= 2;
                let b = self.block(depth + 1, true);
                return format!("acquire m {{true}}; {}; release m {{true}}", b);
            }
        }
        self.atomic()
    }
}

/// Source text of a random program.
pub fn program(seed: u64, shape: &Shape) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        shape,
        budget: shape.max_stmts,
    };
    let threads = g.rng.gen_range(1..=shape.max_threads);
    let mut out = String::from("vars h l u w;\nlocks m;\n");
    for t in 0..threads {
        let per = (g.budget / (threads - t)).max(1);
        let keep = g.budget.saturating_sub(per);
        g.budget = per;
        let body = g.block(0, false);
        g.budget += keep;
        out.push_str(&format!("thread {} {{ {} }}\n", t, body));
    }
    out
}

pub fn system(src: &str, policy: &str) -> System {
    let prog = parse_program(src).unwrap_or_else(|e| panic!("{}\n{}", e, src));
    System::new(prog, parse_policy(policy).unwrap()).unwrap()
}

/// Replaces `true` annotations with inferred ones and weakens them until
/// every verification condition discharges.
pub fn annotate(sys: &System, bounds: &Bounds) -> System {
    let inf = infer_annotations(&sys.program);
    let probe = System::new(inf.program, sys.policy.clone()).unwrap();
    let (prog, _) = stabilize(&probe, bounds).unwrap();
    System::new(prog, sys.policy.clone()).unwrap()
}

/// A diamond lattice with one labeled variable per level, an unlabeled
/// `u` and two escape hatches.
pub const DIAMOND: &str = "lattice { levels bot a b top; bot <= a; bot <= b; a <= top; b <= top; } \
    labels { x: bot; y: a; z: b; s: top; } \
    hatches { top -> a: last(vs); b -> bot: len(vs); }";

pub const DIAMOND_VARS: [&str; 5] = ["x", "y", "z", "s", "u"];
pub const DIAMOND_LEVELS: [&str; 4] = ["bot", "a", "b", "top"];

/// A random state over [`DIAMOND`] from a two-value domain, so that
/// related states come up often.
pub fn random_state(rng: &mut ChaCha8Rng) -> GlobalState {
    let sym = Symbol::intern;
    let mut mem = Memory::zeroed(&DIAMOND_VARS.map(sym));
    for x in DIAMOND_VARS {
        mem.set(sym(x), rng.gen_range(0..2));
    }
    let mut env = Environment::constant(&DIAMOND_LEVELS.map(sym), 0);
    for (_, s) in env.streams.iter_mut() {
        let n = rng.gen_range(0..3);
        *s = Stream::new((0..n).map(|_| rng.gen_range(0..2)).collect(), 0);
    }
    let mut locks = LockMap::free(&[sym("m")]);
    locks.set(sym("m"), [None, Some(0), Some(1)][rng.gen_range(0..3)]);
    let mut trace = Trace::default();
    for _ in 0..rng.gen_range(0..4) {
        let lvl = sym(DIAMOND_LEVELS[rng.gen_range(0..4)]);
        let v = rng.gen_range(0..2);
        let e = if rng.gen_bool(0.5) { Term::konst(v) } else { Term::var(sym("x")) };
        trace.push(match rng.gen_range(0..3) {
            0 => Event::input(lvl, v),
            1 => Event::output(lvl, v, e),
            _ => Event::declass(lvl, v, e),
        });
    }
    GlobalState {
        env,
        mem,
        locks,
        trace,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `sched` twice from `st` and checks that both runs coincide and that
/// every step extends the trace by at most the event it reports.
pub fn check_run(sys: &System, k: Domain, st: &GlobalState, sched: &[usize]) -> Result<(), String> {
    let go = || run(sys, k, GlobalConfig::new(sys, st.clone(), sched.to_vec())).map_err(|e| e.to_string());
    let (a, ra) = go()?;
    let (b, rb) = go()?;
    if a.len() != sched.len() + 1 || ra.len() != sched.len() {
        return Err(format!("{} configurations for {} steps", a.len(), sched.len()));
    }
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        if x.state != y.state || x.locals != y.locals || ra.get(i) != rb.get(i) {
            return Err(format!("runs diverge at step {} under {:?}", i, sched));
        }
    }
    for (i, (w, r)) in a.windows(2).zip(&ra).enumerate() {
        let (before, after) = (&w[0].state.trace, &w[1].state.trace);
        let ok = before.is_prefix_of(after)
            && match &r.event {
                Some(e) => after.len() == before.len() + 1 && after.events().last() == Some(e),
                None => after == before,
            };
        if !ok {
            return Err(format!("trace does not grow monotonically at step {} under {:?}", i, sched));
        }
    }
    Ok(())
}
