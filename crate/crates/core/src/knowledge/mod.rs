//! Bounded semantic checks of the security conditions: system security
//! (event-occurrence security of every event), delimited release, absence
//! of secret branching, the embedding implication and a runtime monitor for
//! annotations.

mod engine;
pub mod reference;
pub mod report;

pub use engine::initial_memories;
pub use report::{InitialState, Property, SecurityReport, Stats, Verdict, Witness, WitnessKind};

use engine::{Explorer, Findings, Mode};

use crate::declass::Declassifier;
use crate::error::{Error, Result};
use crate::policy::DeclassPredicate;
use crate::symbol::Symbol;
use crate::system::{Bounds, System};

fn bound_report(property: Property, level: Symbol, msg: String) -> SecurityReport {
    SecurityReport {
        property,
        level,
        verdict: Verdict::BoundExhausted,
        witnesses: Vec::new(),
        stats: Stats::default(),
        notice: Some(msg),
    }
}

fn report(property: Property, level: Symbol, f: Findings, stats: Stats, exhausted: &Option<String>) -> SecurityReport {
    let (verdict, witnesses, notice) = match (f.violation, f.undetermined, exhausted) {
        (Some(w), _, _) => (Verdict::Violation, vec![w], None),
        (None, _, Some(msg)) => (Verdict::BoundExhausted, Vec::new(), Some(msg.clone())),
        (None, Some(w), None) => (
            Verdict::BoundExhausted,
            vec![w],
            Some("a run ended before a matching event could appear".into()),
        ),
        (None, None, None) => (Verdict::Secure, Vec::new(), None),
    };
    SecurityReport {
        property,
        level,
        verdict,
        witnesses,
        stats,
        notice,
    }
}

/// Every event-producing step of every bounded run satisfies event
/// occurrence security under `pred`.
pub fn check_system_security(
    sys: &System,
    bounds: &Bounds,
    alvl: Symbol,
    pred: DeclassPredicate,
) -> Result<SecurityReport> {
    let p = Property::SystemSecurity;
    let roots = match initial_memories(sys, bounds, true) {
        Ok(r) => r,
        Err(Error::Bounds(m)) => return Ok(bound_report(p, alvl, m)),
        Err(e) => return Err(e),
    };
    let d = Declassifier::new(sys, *bounds, pred);
    let out = match Explorer::new(sys, *bounds, alvl, Mode::System, Some(&d), roots).run() {
        Ok(o) => o,
        Err(Error::Bounds(m)) => return Ok(bound_report(p, alvl, m)),
        Err(e) => return Err(e),
    };
    Ok(report(p, alvl, out.main, out.stats, &out.exhausted))
}

/// Delimited release and absence of secret branching, from one exploration.
pub fn check_release(sys: &System, bounds: &Bounds, alvl: Symbol) -> Result<(SecurityReport, SecurityReport)> {
    let (pd, pn) = (Property::DelimitedRelease, Property::NoSecretBranching);
    let lat = &sys.policy.lattice;
    if lat.levels().iter().all(|l| lat.leq(*l, alvl)) {
        // agreeing states are identical when every channel is visible
        let trivial = |p| SecurityReport {
            property: p,
            level: alvl,
            verdict: Verdict::Secure,
            witnesses: Vec::new(),
            stats: Stats::default(),
            notice: Some("every channel is visible, so agreeing states coincide".into()),
        };
        return Ok((trivial(pd), trivial(pn)));
    }
    let roots = match initial_memories(sys, bounds, true) {
        Ok(r) => r,
        Err(Error::Bounds(m)) => return Ok((bound_report(pd, alvl, m.clone()), bound_report(pn, alvl, m))),
        Err(e) => return Err(e),
    };
    let out = match Explorer::new(sys, *bounds, alvl, Mode::Release, None, roots).run() {
        Ok(o) => o,
        Err(Error::Bounds(m)) => return Ok((bound_report(pd, alvl, m.clone()), bound_report(pn, alvl, m))),
        Err(e) => return Err(e),
    };
    Ok((
        report(pd, alvl, out.main, out.stats, &out.exhausted),
        report(pn, alvl, out.branching, out.stats, &out.exhausted),
    ))
}

pub fn check_delimited_release(sys: &System, bounds: &Bounds, alvl: Symbol) -> Result<SecurityReport> {
    Ok(check_release(sys, bounds, alvl)?.0)
}

pub fn check_no_secret_branching(sys: &System, bounds: &Bounds, alvl: Symbol) -> Result<SecurityReport> {
    Ok(check_release(sys, bounds, alvl)?.1)
}

/// The outcome of checking the embedding implication on one instance.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EmbeddingReport {
    pub report: SecurityReport,
    /// Whether every premise held (so the conclusion was actually tested).
    pub antecedent: bool,
    pub premises: Vec<SecurityReport>,
    pub conclusion: Option<SecurityReport>,
}

/// If system security under the hatch encoding and absence of secret
/// branching both hold and the annotations are valid, delimited release
/// must hold. A failure of the implication is reported as a violation.
pub fn check_dr_embedding(
    sys: &System,
    bounds: &Bounds,
    alvl: Symbol,
    annotations_valid: bool,
) -> Result<EmbeddingReport> {
    let p = Property::Embedding;
    if sys.policy.hatches.is_empty() {
        return Ok(EmbeddingReport {
            report: SecurityReport {
                property: p,
                level: alvl,
                verdict: Verdict::Secure,
                witnesses: Vec::new(),
                stats: Stats::default(),
                notice: Some("skipped: the policy has no escape hatches (the predicate is not extensional)".into()),
            },
            antecedent: false,
            premises: Vec::new(),
            conclusion: None,
        });
    }
    let sec = check_system_security(sys, bounds, alvl, sys.policy.encoded())?;
    let (dr, nsb) = check_release(sys, bounds, alvl)?;
    let antecedent = annotations_valid && sec.secure() && nsb.secure();
    let (verdict, witnesses, notice) = if !antecedent {
        let why = if !annotations_valid {
            "annotations are not valid"
        } else if !sec.secure() {
            "system security does not hold"
        } else {
            "the program branches on secrets"
        };
        (Verdict::Secure, Vec::new(), Some(format!("holds vacuously: {}", why)))
    } else {
        match dr.verdict {
            Verdict::Secure => (Verdict::Secure, Vec::new(), None),
            Verdict::Violation => (
                Verdict::Violation,
                dr.witnesses.clone(),
                Some("premises hold but delimited release fails".into()),
            ),
            Verdict::BoundExhausted => (Verdict::BoundExhausted, dr.witnesses.clone(), dr.notice.clone()),
        }
    };
    let mut stats = sec.stats;
    stats.steps += dr.stats.steps;
    stats.nodes += dr.stats.nodes;
    stats.schedules += dr.stats.schedules;
    Ok(EmbeddingReport {
        report: SecurityReport {
            property: p,
            level: alvl,
            verdict,
            witnesses,
            stats,
            notice,
        },
        antecedent,
        premises: vec![sec, nsb],
        conclusion: Some(dr),
    })
}

/// Runs every bounded schedule from every initial state satisfying `init`
/// and checks that each thread's current annotation holds throughout.
pub fn monitor_annotations(sys: &System, bounds: &Bounds) -> Result<SecurityReport> {
    let p = Property::AnnotationMonitor;
    let level = sys.policy.lattice.bottom();
    let roots = match initial_memories(sys, bounds, false) {
        Ok(r) => r,
        Err(Error::Bounds(m)) => return Ok(bound_report(p, level, m)),
        Err(e) => return Err(e),
    };
    let out = match Explorer::new(sys, *bounds, level, Mode::Monitor, None, roots).run() {
        Ok(o) => o,
        Err(Error::Bounds(m)) => return Ok(bound_report(p, level, m)),
        Err(e) => return Err(e),
    };
    let mut f = out.main;
    f.undetermined = None;
    Ok(report(p, level, f, out.stats, &out.exhausted))
}
