//! The end-to-end workflow: parse, complete the annotations, verify them,
//! check every thread in the logic, and confirm with the bounded oracle.
//! Stops at the first stage that does not pass.

use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::knowledge::{check_release, check_system_security, SecurityReport, Verdict};
use crate::lang::ast::Program;
use crate::lang::parse_program;
use crate::logic::{check_program, BisimMode, LogicOptions, LogicReport};
use crate::policy::{parse_policy, Policy};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::verify::{infer_annotations, stabilize_within, verify_annotations, VcReport};

/// The verdict lattice shared by every subcommand: pass below undetermined
/// below fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Undetermined,
    Fail,
}

impl Outcome {
    /// Process exit code: 0 pass, 1 fail, 2 undetermined.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Undetermined => 2,
        }
    }

    pub fn of_verdict(v: Verdict) -> Outcome {
        match v {
            Verdict::Secure => Outcome::Pass,
            Verdict::Violation => Outcome::Fail,
            Verdict::BoundExhausted => Outcome::Undetermined,
        }
    }

    pub fn of_vcs(r: &VcReport) -> Outcome {
        if !r.failed.is_empty() {
            Outcome::Fail
        } else if !r.undischarged.is_empty() {
            Outcome::Undetermined
        } else {
            Outcome::Pass
        }
    }

    /// A rejection caused only by undetermined side conditions is
    /// undetermined rather than a failure.
    pub fn of_logic(r: &LogicReport) -> Outcome {
        use crate::logic::Status;
        let mut worst = Outcome::Pass;
        for l in &r.levels {
            for t in &l.threads {
                if let Some((_, p)) = t.derivation.first_failure() {
                    worst = worst.max(match p.status {
                        Status::Undetermined => Outcome::Undetermined,
                        _ => Outcome::Fail,
                    });
                }
            }
        }
        worst
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Outcome::Pass => "pass",
            Outcome::Undetermined => "undetermined",
            Outcome::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Parse,
    Annotate,
    VerifyAnnotations,
    Check,
    Oracle,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Stage::Parse => "parse",
            Stage::Annotate => "annotate",
            Stage::VerifyAnnotations => "verify-annotations",
            Stage::Check => "check",
            Stage::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageResult {
    pub stage: Stage,
    pub outcome: Outcome,
    pub summary: String,
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    /// Attacker levels; every lattice level when empty.
    pub levels: Vec<Symbol>,
    pub bisim: BisimMode,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageResult>,
    #[serde(skip)]
    pub program: Option<Program>,
    pub annotations: Option<VcReport>,
    pub logic: Option<LogicReport>,
    pub oracle: Vec<SecurityReport>,
}

impl PipelineReport {
    pub fn outcome(&self) -> Outcome {
        self.stages.iter().map(|s| s.outcome).max().unwrap_or(Outcome::Pass)
    }

    /// Whether every stage ran and passed.
    pub fn passed(&self) -> bool {
        self.stages.len() == 5 && self.outcome() == Outcome::Pass
    }

    fn push(&mut self, stage: Stage, outcome: Outcome, summary: String) -> bool {
        tracing::info!(%stage, %outcome, "{}", summary);
        self.stages.push(StageResult { stage, outcome, summary });
        outcome == Outcome::Pass
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            writeln!(f, "{}. {:<18} {:<12} {}", i + 1, s.stage, s.outcome, s.summary)?;
        }
        if let Some(last) = self.stages.last() {
            if last.outcome != Outcome::Pass {
                match last.stage {
                    Stage::VerifyAnnotations => {
                        if let Some(r) = &self.annotations {
                            write!(f, "{}", r)?;
                        }
                    }
                    Stage::Check => {
                        if let Some(r) = &self.logic {
                            for line in r.failures() {
                                writeln!(f, "  {}", line)?;
                            }
                        }
                    }
                    Stage::Oracle => {
                        for r in self.oracle.iter().filter(|r| !r.secure()) {
                            write!(f, "{}", r)?;
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Runs the workflow on program and policy sources. Parse and policy errors
/// are reported as `Err`.
pub fn run_pipeline(program: &str, policy: &str, bounds: &Bounds, opts: &PipelineOptions) -> Result<PipelineReport> {
    let prog = parse_program(program)?;
    let pol = parse_policy(policy)?;
    run_pipeline_on(prog, pol, bounds, opts)
}

pub fn run_pipeline_on(prog: Program, pol: Policy, bounds: &Bounds, opts: &PipelineOptions) -> Result<PipelineReport> {
    let mut rep = PipelineReport {
        stages: Vec::new(),
        program: None,
        annotations: None,
        logic: None,
        oracle: Vec::new(),
    };
    let sys = System::new(prog, pol)?;
    sys.check_bounds(bounds)?;
    rep.push(
        Stage::Parse,
        Outcome::Pass,
        format!(
            "{} threads, {} statements",
            sys.thread_count(),
            sys.program.statement_count()
        ),
    );

    // statements annotated `true` get their strongest postcondition, then
    // inferred facts that interference breaks are dropped again
    let inf = infer_annotations(&sys.program);
    let n = inf.inferred.len();
    let (sys, note) = if n == 0 {
        (sys, "every statement annotated by hand".to_string())
    } else {
        let probe = System::new(inf.program, sys.policy.clone())?;
        let (prog, dropped) = stabilize_within(&probe, bounds, Some(&inf.inferred))?;
        let note = format!("{} annotation(s) inferred, {} conjunct(s) dropped", n, dropped);
        (System::new(prog, sys.policy)?, note)
    };
    rep.push(Stage::Annotate, Outcome::Pass, note);
    rep.program = Some(sys.program.clone());

    let vcs = verify_annotations(&sys, bounds)?;
    let ok = rep.push(Stage::VerifyAnnotations, Outcome::of_vcs(&vcs), vcs.summary());
    rep.annotations = Some(vcs);
    if !ok {
        return Ok(rep);
    }

    let lopts = LogicOptions {
        levels: opts.levels.clone(),
        bisim: opts.bisim,
        predicate: None,
    };
    let logic = check_program(&sys, bounds, &lopts)?;
    let ok = rep.push(Stage::Check, Outcome::of_logic(&logic), logic.summary());
    rep.logic = Some(logic);
    if !ok {
        return Ok(rep);
    }

    let levels = if opts.levels.is_empty() {
        sys.policy.lattice.levels().to_vec()
    } else {
        opts.levels.clone()
    };
    let mut worst = Outcome::Pass;
    let mut parts = Vec::new();
    for &alvl in &levels {
        let sec = check_system_security(&sys, bounds, alvl, sys.policy.declass_predicate())?;
        worst = worst.max(Outcome::of_verdict(sec.verdict));
        parts.push(format!("{} at {}: {}", sec.property, alvl, sec.verdict));
        rep.oracle.push(sec);
        if !sys.policy.hatches.is_empty() {
            let (dr, nsb) = check_release(&sys, bounds, alvl)?;
            worst = worst.max(Outcome::of_verdict(dr.verdict));
            parts.push(format!("{} at {}: {}", dr.property, alvl, dr.verdict));
            rep.oracle.push(dr);
            rep.oracle.push(nsb);
        }
    }
    rep.push(Stage::Oracle, worst, parts.join(", "));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POL: &str = "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }";

    fn go(prog: &str) -> PipelineReport {
        run_pipeline(prog, POL, &Bounds::new(2, 1, 4), &PipelineOptions::default()).unwrap()
    }

    fn stages(r: &PipelineReport) -> Vec<(Stage, Outcome)> {
        r.stages.iter().map(|s| (s.stage, s.outcome)).collect()
    }

    #[test]
    fn outcomes_are_ordered_by_severity() {
        assert!(Outcome::Pass < Outcome::Undetermined && Outcome::Undetermined < Outcome::Fail);
        assert_eq!(
            [Outcome::Pass, Outcome::Fail, Outcome::Undetermined].map(Outcome::exit_code),
            [0, 1, 2]
        );
    }

    #[test]
    fn a_secure_program_passes_every_stage() {
        let r = go("vars h l u; thread 0 { input u bot; l := u; output bot l } thread 1 { h := 1 }");
        assert!(r.passed(), "{}", r);
        assert_eq!(r.stages.len(), 5);
        // every annotation was `true`, so all of them were inferred
        assert!(r.stages[1].summary.starts_with("4 annotation(s) inferred"), "{}", r);
        assert!(r.oracle.iter().all(|o| o.secure()));
    }

    #[test]
    fn the_pipeline_stops_at_the_first_failure() {
        let r = go("vars h l; thread 0 { l := h; output bot l }");
        use Outcome::*;
        use Stage::*;
        assert_eq!(
            stages(&r),
            vec![(Parse, Pass), (Annotate, Pass), (VerifyAnnotations, Pass), (Check, Fail)]
        );
        assert!(r.oracle.is_empty());
        assert_eq!(r.to_string().matches("logic rejected").count(), 1);
    }

    #[test]
    fn hand_written_annotations_are_verified_not_replaced() {
        let r = go("vars h l; thread 0 { l := 1 {l = 1}; output bot l }");
        assert_eq!(r.stages[2].stage, Stage::VerifyAnnotations);
        assert_eq!(r.outcome(), Outcome::Fail, "{}", r);
        assert_eq!(r.stages.len(), 3);
    }

    #[test]
    fn parse_errors_are_errors() {
        assert!(run_pipeline("thread 0 {", POL, &Bounds::new(2, 1, 1), &PipelineOptions::default()).is_err());
    }
}
