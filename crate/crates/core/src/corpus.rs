//! The bundled example corpus: programs, policies, the bounds each is
//! checked under and the verdicts each is expected to produce.
//!
//! File contents are compiled in and checked against `corpus/SHA256SUMS`
//! on load.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lang::parse_program;
use crate::policy::parse_policy;
use crate::system::{Bounds, System};

macro_rules! files {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name)))),*]
    };
}

static FILES: &[(&str, &str)] = files![
    "fig1.prog",
    "fig1.pol",
    "fig1-with-toggle.prog",
    "fig1-swapped-modes.prog",
    "fig1-no-valid.prog",
    "fig1-no-ck.prog",
    "fig1-leak.prog",
    "confirmed-declass.prog",
    "confirmed-declass.pol",
    "confirmed-no-answer.prog",
    "running-average.prog",
    "running-average.pol",
    "running-average-extensional.prog",
    "running-average-extensional.pol",
    "avg-no-min.prog",
    "ghost-variable.prog",
    "ghost-variable.pol",
    "birthyear-occlusion.prog",
    "birthyear-occlusion.pol",
];

static SUMS: &str = include_str!("../corpus/SHA256SUMS");

/// Expected outcomes; `None` means the entry makes no claim.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expect {
    /// Annotations pass Owicki-Gries verification.
    pub valid: Option<bool>,
    /// The security logic accepts every thread at every level.
    pub accepted: Option<bool>,
    /// System security holds at every level under the policy's predicate.
    pub secure: Option<bool>,
    /// Delimited release holds at every level.
    pub release: Option<bool>,
    /// The program does not branch on secrets the hatches protect.
    pub no_secret_branching: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Example,
    /// An insecure variant of the named example.
    Mutant(&'static str),
}

#[derive(Clone, Copy, Debug)]
pub struct Entry {
    pub name: &'static str,
    pub program: &'static str,
    pub policy: &'static str,
    pub bounds: (i64, usize, usize),
    pub kind: Kind,
    pub expect: Expect,
}

impl Entry {
    pub fn bounds(&self) -> Bounds {
        let (k, p, s) = self.bounds;
        Bounds::new(k, p, s)
    }

    pub fn program_source(&self) -> Result<&'static str> {
        file(self.program)
    }

    pub fn policy_source(&self) -> Result<&'static str> {
        file(self.policy)
    }

    pub fn load(&self) -> Result<System> {
        let prog = parse_program(self.program_source()?)?;
        let pol = parse_policy(self.policy_source()?)?;
        System::new(prog, pol)
    }
}

const SECURE: Expect = Expect {
    valid: Some(true),
    accepted: Some(true),
    secure: Some(true),
    release: None,
    no_secret_branching: None,
};

const INSECURE: Expect = Expect {
    valid: Some(true),
    accepted: Some(false),
    secure: Some(false),
    release: None,
    no_secret_branching: None,
};

const FIG1: Expect = Expect {
    release: Some(true),
    no_secret_branching: Some(true),
    ..SECURE
};

static ENTRIES: &[Entry] = &[
    Entry {
        name: "fig1",
        program: "fig1.prog",
        policy: "fig1.pol",
        bounds: (3, 2, 14),
        kind: Kind::Example,
        expect: FIG1,
    },
    Entry {
        name: "fig1-with-toggle",
        program: "fig1-with-toggle.prog",
        policy: "fig1.pol",
        bounds: (3, 2, 14),
        kind: Kind::Example,
        expect: FIG1,
    },
    Entry {
        name: "confirmed-declass",
        program: "confirmed-declass.prog",
        policy: "confirmed-declass.pol",
        bounds: (3, 2, 14),
        kind: Kind::Example,
        expect: SECURE,
    },
    Entry {
        name: "running-average",
        program: "running-average.prog",
        policy: "running-average.pol",
        bounds: (3, 2, 14),
        kind: Kind::Example,
        expect: SECURE,
    },
    Entry {
        name: "running-average-extensional",
        program: "running-average-extensional.prog",
        policy: "running-average-extensional.pol",
        bounds: (3, 2, 14),
        kind: Kind::Example,
        expect: SECURE,
    },
    Entry {
        name: "ghost-variable",
        program: "ghost-variable.prog",
        policy: "ghost-variable.pol",
        bounds: (3, 2, 14),
        kind: Kind::Example,
        expect: SECURE,
    },
    Entry {
        name: "birthyear-occlusion",
        program: "birthyear-occlusion.prog",
        policy: "birthyear-occlusion.pol",
        bounds: (4, 3, 5),
        kind: Kind::Example,
        expect: Expect {
            valid: Some(true),
            accepted: Some(false),
            secure: Some(true),
            release: Some(false),
            no_secret_branching: Some(false),
        },
    },
    Entry {
        name: "fig1-swapped-modes",
        program: "fig1-swapped-modes.prog",
        policy: "fig1.pol",
        bounds: (3, 2, 14),
        kind: Kind::Mutant("fig1"),
        expect: INSECURE,
    },
    Entry {
        name: "fig1-no-valid",
        program: "fig1-no-valid.prog",
        policy: "fig1.pol",
        bounds: (3, 2, 14),
        kind: Kind::Mutant("fig1"),
        expect: INSECURE,
    },
    Entry {
        name: "fig1-no-ck",
        program: "fig1-no-ck.prog",
        policy: "fig1.pol",
        bounds: (3, 2, 14),
        kind: Kind::Mutant("fig1"),
        expect: INSECURE,
    },
    Entry {
        name: "fig1-leak",
        program: "fig1-leak.prog",
        policy: "fig1.pol",
        bounds: (3, 2, 14),
        kind: Kind::Mutant("fig1"),
        expect: INSECURE,
    },
    Entry {
        name: "confirmed-no-answer",
        program: "confirmed-no-answer.prog",
        policy: "confirmed-declass.pol",
        bounds: (3, 2, 14),
        kind: Kind::Mutant("confirmed-declass"),
        expect: INSECURE,
    },
    Entry {
        name: "avg-no-min",
        program: "avg-no-min.prog",
        policy: "running-average.pol",
        bounds: (3, 2, 14),
        kind: Kind::Mutant("running-average"),
        expect: INSECURE,
    },
];

pub fn entries() -> &'static [Entry] {
    ENTRIES
}

pub fn get(name: &str) -> Option<&'static Entry> {
    ENTRIES.iter().find(|e| e.name == name)
}

pub fn file_names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

/// The contents of a corpus file, after checking its digest.
pub fn file(name: &str) -> Result<&'static str> {
    let (_, body) = FILES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Corpus(format!("{} (no such file)", name)))?;
    let want = SUMS
        .lines()
        .filter_map(|l| l.split_once("  "))
        .find(|(_, n)| n.trim() == name)
        .map(|(h, _)| h.trim())
        .ok_or_else(|| Error::Corpus(format!("{} (no recorded digest)", name)))?;
    let got = hex::encode(Sha256::digest(body.as_bytes()));
    if got != want {
        return Err(Error::Corpus(name.to_string()));
    }
    Ok(body)
}

/// Checks every corpus file against its recorded digest.
pub fn verify_integrity() -> Result<()> {
    for (n, _) in FILES {
        file(n)?;
    }
    Ok(())
}
