//! Finite security lattices given by levels and an edge list.

use crate::error::{Error, Result};
use crate::symbol::Symbol;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    levels: Vec<Symbol>,
    /// Edges as written in the policy file, kept for printing.
    edges: Vec<(Symbol, Symbol)>,
    /// Reflexive-transitive closure, indexed `[a][b]` for `a <= b`.
    leq: Vec<Vec<bool>>,
    join: Vec<Vec<usize>>,
    bottom: usize,
}

impl Lattice {
    /// Builds a lattice from its levels and `a <= b` edges. Rejects unknown
    /// levels, cycles, pairs without a unique least upper bound, and orders
    /// without a least element.
    #[allow(clippy::needless_range_loop)]
    pub fn new(levels: Vec<Symbol>, edges: Vec<(Symbol, Symbol)>) -> Result<Lattice> {
        if levels.is_empty() {
            return Err(Error::Policy("the lattice has no levels".into()));
        }
        for (i, l) in levels.iter().enumerate() {
            if levels[..i].contains(l) {
                return Err(Error::Policy(format!("level `{}` declared twice", l)));
            }
        }
        let n = levels.len();
        let idx = |l: Symbol| {
            levels
                .iter()
                .position(|&m| m == l)
                .ok_or_else(|| Error::Policy(format!("unknown level `{}`", l)))
        };
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in &edges {
            leq[idx(a)?][idx(b)?] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return Err(Error::Policy(format!(
                        "levels `{}` and `{}` are ordered both ways",
                        levels[i], levels[j]
                    )));
                }
            }
        }
        let mut join = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let uppers: Vec<usize> = (0..n).filter(|&u| leq[a][u] && leq[b][u]).collect();
                let least: Vec<usize> = uppers
                    .iter()
                    .copied()
                    .filter(|&u| uppers.iter().all(|&w| leq[u][w]))
                    .collect();
                match least.as_slice() {
                    [u] => join[a][b] = *u,
                    _ => {
                        return Err(Error::Policy(format!(
                            "levels `{}` and `{}` have no least upper bound",
                            levels[a], levels[b]
                        )))
                    }
                }
            }
        }
        let bottom = (0..n)
            .find(|&b| (0..n).all(|j| leq[b][j]))
            .ok_or_else(|| Error::Policy("the lattice has no least level".into()))?;
        Ok(Lattice {
            levels,
            edges,
            leq,
            join,
            bottom,
        })
    }

    /// The two-point lattice `bot <= top`.
    pub fn two_point() -> Lattice {
        let (b, t) = (Symbol::intern("bot"), Symbol::intern("top"));
        Lattice::new(vec![b, t], vec![(b, t)]).expect("two-point lattice is valid")
    }

    pub fn levels(&self) -> &[Symbol] {
        &self.levels
    }

    pub fn edges(&self) -> &[(Symbol, Symbol)] {
        &self.edges
    }

    pub fn index(&self, l: Symbol) -> Option<usize> {
        self.levels.iter().position(|&m| m == l)
    }

    pub fn contains(&self, l: Symbol) -> bool {
        self.index(l).is_some()
    }

    /// `a <= b`. Unknown levels are never related.
    pub fn leq(&self, a: Symbol, b: Symbol) -> bool {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) => self.leq[i][j],
            _ => false,
        }
    }

    pub fn lub(&self, a: Symbol, b: Symbol) -> Option<Symbol> {
        Some(self.levels[self.join[self.index(a)?][self.index(b)?]])
    }

    pub fn bottom(&self) -> Symbol {
        self.levels[self.bottom]
    }

    /// Levels visible to an attacker at `alvl`.
    pub fn below(&self, alvl: Symbol) -> Vec<Symbol> {
        self.levels
            .iter()
            .copied()
            .filter(|&l| self.leq(l, alvl))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Symbol {
        Symbol::intern(x)
    }

    fn diamond() -> Lattice {
        Lattice::new(
            vec![s("L"), s("A"), s("B"), s("H")],
            vec![(s("L"), s("A")), (s("L"), s("B")), (s("A"), s("H")), (s("B"), s("H"))],
        )
        .unwrap()
    }

    #[test]
    fn two_point_order() {
        let l = Lattice::two_point();
        assert!(l.leq(s("bot"), s("top")));
        assert!(l.leq(s("top"), s("top")));
        assert!(!l.leq(s("top"), s("bot")));
        assert_eq!(l.lub(s("bot"), s("top")), Some(s("top")));
        assert_eq!(l.bottom(), s("bot"));
    }

    #[test]
    fn diamond_closure_and_join() {
        let d = diamond();
        assert!(!d.leq(s("A"), s("B")));
        assert!(d.leq(s("L"), s("H")));
        assert_eq!(d.lub(s("A"), s("B")), Some(s("H")));
        assert_eq!(d.lub(s("A"), s("A")), Some(s("A")));
    }

    #[test]
    fn rejects_non_semilattices() {
        // two incomparable maximal elements have no join
        let err = Lattice::new(vec![s("L"), s("A"), s("B")], vec![(s("L"), s("A")), (s("L"), s("B"))]);
        assert!(err.is_err());
        let cyc = Lattice::new(vec![s("A"), s("B")], vec![(s("A"), s("B")), (s("B"), s("A"))]);
        assert!(cyc.is_err());
        let unknown = Lattice::new(vec![s("A")], vec![(s("A"), s("Z"))]);
        assert!(unknown.is_err());
    }
}
