//! `dfc`: command-line front end to the verifier.
//!
//! Exit codes: 0 when every requested verdict is secure or valid, 1 on a
//! violation, 2 when a bound was exhausted or a side condition could not be
//! decided, 3 on usage, parse or policy errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dfc::corpus;
use dfc::knowledge::{
    check_dr_embedding, check_release, check_system_security, monitor_annotations, SecurityReport,
};
use dfc::lang::{parse_program, print_program, Program};
use dfc::logic::{check_program, BisimMode, LogicOptions};
use dfc::pipeline::{run_pipeline_on, Outcome, PipelineOptions};
use dfc::policy::{parse_policy, Policy};
use dfc::semantics::{run, GlobalConfig, GlobalState, LockMap, Memory, Stream, Trace};
use dfc::system::{Bounds, System};
use dfc::verify::{generate, infer_annotations, print_vcs, stabilize, verify_annotations};
use dfc::Symbol;

#[derive(Parser)]
#[command(name = "dfc", version, about = "Information-flow verifier for annotated lock-based concurrent programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct Input {
    /// Program file.
    program: Option<PathBuf>,
    /// Policy file.
    policy: Option<PathBuf>,
    /// Use a bundled corpus entry, with its bounds, instead of files.
    #[arg(long, conflicts_with_all = ["program", "policy"])]
    corpus: Option<String>,
    /// Bound overrides: domain=K,prefix=P,sched=S,cap=C,history=H.
    #[arg(long)]
    bounds: Option<String>,
    /// File of key=value bound settings, one per line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Levels {
    /// Attacker level to check (repeatable).
    #[arg(long)]
    level: Vec<String>,
    /// Check every lattice level (the default).
    #[arg(long, conflicts_with = "level")]
    all_levels: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PropertyArg {
    SystemSecurity,
    DelimitedRelease,
    NoSecretBranching,
    Embedding,
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check syntax and print the program in canonical form.
    Parse {
        #[command(flatten)]
        input: Input,
    },
    /// Execute once under a schedule and show the steps.
    Run {
        #[command(flatten)]
        input: Input,
        /// Comma-separated thread ids; round robin over the sched bound by default.
        #[arg(long)]
        schedule: Option<String>,
        /// Initial value of a variable, `x=v` (repeatable).
        #[arg(long = "set")]
        set: Vec<String>,
        /// Input stream prefix of a level, `level=v1,v2,...` (repeatable).
        #[arg(long = "input")]
        inputs: Vec<String>,
        /// Print the final trace, one event per line.
        #[arg(long)]
        dump_trace: bool,
    },
    /// Fill in `true` annotations with inferred strongest postconditions.
    Infer {
        #[command(flatten)]
        input: Input,
        /// Afterwards drop conjuncts until every condition discharges.
        #[arg(long)]
        stabilize: bool,
        /// Write the annotated program here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate and discharge the Owicki-Gries verification conditions.
    VerifyAnnotations {
        #[command(flatten)]
        input: Input,
        /// Write the conditions to this file.
        #[arg(long)]
        emit_vcs: Option<PathBuf>,
        /// Check annotations along every bounded run instead.
        #[arg(long)]
        runtime_monitor: bool,
    },
    /// Check every thread in the security logic.
    Check {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        levels: Levels,
        /// Write the derivation trees to this file.
        #[arg(long)]
        derivation: Option<PathBuf>,
        /// Decide secret branches by bounded bisimulation instead of syntax.
        #[arg(long)]
        semantic_bisim: bool,
    },
    /// Run the bounded semantic checks.
    Oracle {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        levels: Levels,
        #[arg(long, value_enum, default_value = "all")]
        property: PropertyArg,
    },
    /// Annotate, verify, check and confirm with the oracle, stopping at the
    /// first failure.
    Pipeline {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        levels: Levels,
        /// Decide secret branches by bounded bisimulation instead of syntax.
        #[arg(long)]
        semantic_bisim: bool,
    },
    /// List the bundled corpus.
    Corpus {
        /// Print the program and policy of this entry.
        #[arg(long)]
        show: Option<String>,
    },
}

/// Parsed inputs and the bounds in force.
struct Loaded {
    program: Program,
    policy: Option<Policy>,
    bounds: Bounds,
}

impl Loaded {
    fn system(&self) -> Result<System> {
        let pol = self.policy.clone().ok_or_else(|| anyhow!("a policy file is required"))?;
        let sys = System::new(self.program.clone(), pol)?;
        sys.check_bounds(&self.bounds)?;
        Ok(sys)
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn load(input: &Input) -> Result<Loaded> {
    let (prog_src, pol_src, mut bounds) = match &input.corpus {
        Some(name) => {
            let e = corpus::get(name).ok_or_else(|| anyhow!("no corpus entry `{}`", name))?;
            (e.program_source()?.to_string(), Some(e.policy_source()?.to_string()), e.bounds())
        }
        None => {
            let p = input.program.as_ref().ok_or_else(|| anyhow!("a program file is required"))?;
            let pol = input.policy.as_ref().map(|p| read(p)).transpose()?;
            (read(p)?, pol, Bounds::default())
        }
    };
    if let Some(c) = &input.config {
        let text = read(c)?;
        let spec: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .collect();
        bounds.apply(&spec.join(","))?;
    }
    if let Some(b) = &input.bounds {
        bounds.apply(b)?;
    }
    let program = parse_program(&prog_src).context("program")?;
    let policy = pol_src.map(|s| parse_policy(&s)).transpose().context("policy")?;
    Ok(Loaded {
        program,
        policy,
        bounds,
    })
}

fn levels(sys: &System, l: &Levels) -> Result<Vec<Symbol>> {
    if l.all_levels || l.level.is_empty() {
        return Ok(sys.policy.lattice.levels().to_vec());
    }
    l.level
        .iter()
        .map(|n| {
            let s = Symbol::intern(n);
            if sys.policy.lattice.contains(s) {
                Ok(s)
            } else {
                Err(anyhow!("unknown level `{}`", n))
            }
        })
        .collect()
}

fn write_report(input: &Input, r: &impl Serialize) -> Result<()> {
    if let Some(p) = &input.report {
        let json = serde_json::to_string_pretty(r)?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn print_security(sys: &System, bounds: &Bounds, r: &SecurityReport) -> Result<()> {
    print!("{}", r);
    for w in &r.witnesses {
        let ok = w.replay(sys, bounds, r.level)?;
        println!("    replay: {}", if ok { "confirmed" } else { "NOT confirmed" });
    }
    Ok(())
}

fn parse_kv(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').ok_or_else(|| anyhow!("expected name=value, found `{}`", s))
}

fn initial_state(sys: &System, set: &[String], inputs: &[String]) -> Result<GlobalState> {
    let mut mem = Memory::zeroed(&sys.program.vars);
    for s in set {
        let (x, v) = parse_kv(s)?;
        let x = Symbol::intern(x.trim());
        if mem.get(x).is_none() {
            bail!("unknown variable `{}`", x);
        }
        mem.set(x, v.trim().parse().with_context(|| format!("value in `{}`", s))?);
    }
    let levels = sys.policy.lattice.levels().to_vec();
    let mut env = dfc::semantics::Environment::constant(&levels, 0);
    for s in inputs {
        let (l, vs) = parse_kv(s)?;
        let vs: Vec<i64> = vs
            .split(',')
            .map(|v| v.trim().parse().with_context(|| format!("values in `{}`", s)))
            .collect::<Result<_>>()?;
        let stream = env
            .stream_mut(Symbol::intern(l.trim()))
            .ok_or_else(|| anyhow!("unknown level `{}`", l))?;
        *stream = Stream::new(vs, 0);
    }
    Ok(GlobalState {
        env,
        mem,
        locks: LockMap::free(&sys.program.locks),
        trace: Trace::default(),
    })
}

fn cmd_run(input: &Input, schedule: &Option<String>, set: &[String], inputs: &[String], dump: bool) -> Result<Outcome> {
    let l = load(input)?;
    let sys = l.system()?;
    let n = sys.thread_count();
    let sched: Vec<usize> = match schedule {
        Some(s) => s
            .split(',')
            .map(|t| {
                let t: usize = t.trim().parse().with_context(|| format!("thread id `{}`", t))?;
                if t >= n {
                    bail!("thread {} does not exist", t);
                }
                Ok(t)
            })
            .collect::<Result<_>>()?,
        None => (0..l.bounds.sched).map(|i| i % n).collect(),
    };
    let st = initial_state(&sys, set, inputs)?;
    if let Some(init) = &sys.program.init {
        let sc = dfc::lang::term::Scope::new(l.bounds.domain, &sys.policy.tables).with_mem(&st.mem);
        if !sc.holds(init)? {
            eprintln!("warning: the initial state does not satisfy the precondition");
        }
    }
    let (cfgs, recs) = run(&sys, l.bounds.domain, GlobalConfig::new(&sys, st, sched))?;
    for (i, r) in recs.iter().enumerate() {
        let rule = r.rule.map_or_else(|| "idle".to_string(), |r| r.to_string());
        match &r.event {
            Some(e) => println!("{:>3}  thread {}  {:<8} {}", i, r.thread, rule, e),
            None => println!("{:>3}  thread {}  {}", i, r.thread, rule),
        }
    }
    let last = &cfgs.last().expect("runs start with the initial configuration").state;
    let mem: Vec<String> = last.mem.slots.iter().map(|(x, v)| format!("{}={}", x, v)).collect();
    println!("memory: {}", mem.join(" "));
    if dump {
        println!("trace:");
        for e in last.trace.events() {
            println!("  {}", e);
        }
    }
    write_report(input, &recs)?;
    Ok(Outcome::Pass)
}

fn cmd_oracle(input: &Input, lv: &Levels, property: PropertyArg) -> Result<Outcome> {
    let l = load(input)?;
    let sys = l.system()?;
    let b = &l.bounds;
    let want = |p: PropertyArg| property == p || property == PropertyArg::All;
    let valid = if want(PropertyArg::Embedding) {
        Some(verify_annotations(&sys, b)?.valid())
    } else {
        None
    };
    let mut reports = Vec::new();
    for alvl in levels(&sys, lv)? {
        if want(PropertyArg::SystemSecurity) {
            reports.push(check_system_security(&sys, b, alvl, sys.policy.declass_predicate())?);
        }
        if want(PropertyArg::DelimitedRelease) || want(PropertyArg::NoSecretBranching) {
            let (dr, nsb) = check_release(&sys, b, alvl)?;
            if want(PropertyArg::DelimitedRelease) {
                reports.push(dr);
            }
            if want(PropertyArg::NoSecretBranching) {
                reports.push(nsb);
            }
        }
        if let Some(v) = valid {
            reports.push(check_dr_embedding(&sys, b, alvl, v)?.report);
        }
    }
    let mut worst = Outcome::Pass;
    for r in &reports {
        print_security(&sys, b, r)?;
        worst = worst.max(Outcome::of_verdict(r.verdict));
    }
    write_report(input, &reports)?;
    Ok(worst)
}

fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.cmd {
        Cmd::Parse { input } => {
            let l = load(input)?;
            if l.policy.is_some() {
                l.system()?;
            }
            print!("{}", print_program(&l.program));
            Ok(Outcome::Pass)
        }
        Cmd::Run {
            input,
            schedule,
            set,
            inputs,
            dump_trace,
        } => cmd_run(input, schedule, set, inputs, *dump_trace),
        Cmd::Infer {
            input,
            stabilize: stab,
            output,
        } => {
            let l = load(input)?;
            let out = infer_annotations(&l.program);
            for n in &out.notices {
                eprintln!("note: {}", n);
            }
            let prog = if *stab {
                let sys = System::new(out.program, l.system()?.policy)?;
                let (p, dropped) = stabilize(&sys, &l.bounds)?;
                eprintln!("note: {} conjunct(s) dropped", dropped);
                p
            } else {
                out.program
            };
            let text = print_program(&prog);
            match output {
                Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", text),
            }
            Ok(Outcome::Pass)
        }
        Cmd::VerifyAnnotations {
            input,
            emit_vcs,
            runtime_monitor,
        } => {
            let l = load(input)?;
            let sys = l.system()?;
            if let Some(p) = emit_vcs {
                fs::write(p, print_vcs(&generate(&sys.program)))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            if *runtime_monitor {
                let r = monitor_annotations(&sys, &l.bounds)?;
                print_security(&sys, &l.bounds, &r)?;
                write_report(input, &r)?;
                return Ok(Outcome::of_verdict(r.verdict));
            }
            let r = verify_annotations(&sys, &l.bounds)?;
            print!("{}", r);
            write_report(input, &r)?;
            Ok(Outcome::of_vcs(&r))
        }
        Cmd::Check {
            input,
            levels: lv,
            derivation,
            semantic_bisim,
        } => {
            let l = load(input)?;
            let sys = l.system()?;
            let opts = LogicOptions {
                levels: levels(&sys, lv)?,
                bisim: if *semantic_bisim { BisimMode::Semantic } else { BisimMode::Syntactic },
                predicate: None,
            };
            let r = check_program(&sys, &l.bounds, &opts)?;
            print!("{}", r);
            if let Some(p) = derivation {
                fs::write(p, r.derivations()).with_context(|| format!("writing {}", p.display()))?;
            }
            write_report(input, &r)?;
            Ok(Outcome::of_logic(&r))
        }
        Cmd::Oracle {
            input,
            levels: lv,
            property,
        } => cmd_oracle(input, lv, *property),
        Cmd::Pipeline {
            input,
            levels: lv,
            semantic_bisim,
        } => {
            let l = load(input)?;
            let sys = l.system()?;
            let opts = PipelineOptions {
                levels: levels(&sys, lv)?,
                bisim: if *semantic_bisim { BisimMode::Semantic } else { BisimMode::Syntactic },
            };
            let r = run_pipeline_on(sys.program, sys.policy, &l.bounds, &opts)?;
            print!("{}", r);
            write_report(input, &r)?;
            Ok(r.outcome())
        }
        Cmd::Corpus { show } => {
            corpus::verify_integrity()?;
            match show {
                Some(name) => {
                    let e = corpus::get(name).ok_or_else(|| anyhow!("no corpus entry `{}`", name))?;
                    println!("// {}\n{}", e.program, e.program_source()?);
                    println!("// {}\n{}", e.policy, e.policy_source()?);
                }
                None => {
                    for e in corpus::entries() {
                        let kind = match e.kind {
                            corpus::Kind::Example => "example".to_string(),
                            corpus::Kind::Mutant(of) => format!("mutant of {}", of),
                        };
                        println!("{:<30} {:<28} {}", e.name, kind, e.bounds());
                    }
                }
            }
            Ok(Outcome::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(if cli.verbose { "info" } else { "warn" }));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match execute(&cli) {
        Ok(o) => ExitCode::from(o.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(3)
        }
    }
}
