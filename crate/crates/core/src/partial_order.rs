//! Strict relations over items, the λ-cut partial order, level layering,
//! transitive reduction and DOT export.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparisons::{ComparisonDataset, ItemRegistry, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("relation is not a partial order ({0})")]
    NotPartialOrder(AxiomReport),
    #[error("relation contains a cycle through item {0}")]
    Cycle(usize),
    #[error("alpha must lie in (0.5, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("relation references item {index} but only {n} items exist")]
    OutOfRange { index: usize, n: usize },
}

/// Arbitrary set of ordered pairs `(i, j)` read as `i ≻ j`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    n: usize,
    precedes: BTreeSet<(usize, usize)>,
}

impl Relation {
    pub fn empty(n: usize) -> Self {
        Relation {
            n,
            precedes: BTreeSet::new(),
        }
    }

    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self, OrderError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut r = Relation::empty(n);
        for (i, j) in pairs {
            for index in [i, j] {
                if index >= n {
                    return Err(OrderError::OutOfRange { index, n });
                }
            }
            r.precedes.insert((i, j));
        }
        Ok(r)
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.precedes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precedes.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.precedes.contains(&(i, j))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.precedes.iter().copied()
    }

    /// Validates the partial-order axioms.
    pub fn into_partial_order(self) -> Result<PartialOrder, OrderError> {
        let report = check_axioms(&self);
        if report.all() {
            Ok(PartialOrder(self))
        } else {
            Err(OrderError::NotPartialOrder(report))
        }
    }

    fn adjacency(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.n]; self.n];
        for &(i, j) in &self.precedes {
            adj[i][j] = true;
        }
        adj
    }

    /// Smallest transitive relation containing this one (Warshall).
    pub fn transitive_closure(&self) -> Relation {
        let mut adj = self.adjacency();
        for k in 0..self.n {
            for i in 0..self.n {
                if adj[i][k] {
                    for j in 0..self.n {
                        if adj[k][j] {
                            adj[i][j] = true;
                        }
                    }
                }
            }
        }
        from_adjacency(&adj)
    }
}

fn from_adjacency(adj: &[Vec<bool>]) -> Relation {
    let n = adj.len();
    let precedes = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| adj[i][j]).map(move |j| (i, j)))
        .collect();
    Relation { n, precedes }
}

/// A relation known to be irreflexive, asymmetric and transitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialOrder(Relation);

impl PartialOrder {
    pub fn relation(&self) -> &Relation {
        &self.0
    }

    pub fn n_items(&self) -> usize {
        self.0.n
    }

    pub fn precedes(&self, i: usize, j: usize) -> bool {
        self.0.contains(i, j)
    }

    pub fn comparable(&self, i: usize, j: usize) -> bool {
        self.precedes(i, j) || self.precedes(j, i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hasse edges: pairs not implied through an intermediate item.
    pub fn transitive_reduction(&self) -> Relation {
        let n = self.0.n;
        let adj = self.0.adjacency();
        let mut red = adj.clone();
        for i in 0..n {
            for j in 0..n {
                if adj[i][j] && (0..n).any(|k| adj[i][k] && adj[k][j]) {
                    red[i][j] = false;
                }
            }
        }
        from_adjacency(&red)
    }
}

/// `i ≻ j` iff `s_i − s_j > λ`.
pub fn lambda_cut(scores: &[f64], lambda: f64) -> PartialOrder {
    let n = scores.len();
    let mut r = Relation::empty(n);
    for i in 0..n {
        for j in 0..n {
            if scores[i] - scores[j] > lambda {
                r.precedes.insert((i, j));
            }
        }
    }
    PartialOrder(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub irreflexive: bool,
    pub asymmetric: bool,
    pub transitive: bool,
}

impl AxiomReport {
    pub fn all(&self) -> bool {
        self.irreflexive && self.asymmetric && self.transitive
    }
}

impl std::fmt::Display for AxiomReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "irreflexive={} asymmetric={} transitive={}",
            self.irreflexive, self.asymmetric, self.transitive
        )
    }
}

pub fn check_axioms(r: &Relation) -> AxiomReport {
    let irreflexive = r.pairs().all(|(i, j)| i != j);
    let asymmetric = r.pairs().all(|(i, j)| !r.contains(j, i));
    let mut successors = vec![Vec::new(); r.n];
    for (i, j) in r.pairs() {
        successors[i].push(j);
    }
    let transitive = r
        .pairs()
        .all(|(i, j)| successors[j].iter().all(|&k| r.contains(i, k)));
    AxiomReport {
        irreflexive,
        asymmetric,
        transitive,
    }
}

/// Items grouped by longest-chain height; level 0 holds the maximal items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDecomposition {
    pub levels: Vec<Vec<usize>>,
}

impl LevelDecomposition {
    pub fn level_of(&self) -> Vec<usize> {
        let n = self.levels.iter().map(Vec::len).sum();
        let mut out = vec![0; n];
        for (k, group) in self.levels.iter().enumerate() {
            for &i in group {
                out[i] = k;
            }
        }
        out
    }

    pub fn named(&self, names: &ItemRegistry) -> Vec<Vec<String>> {
        self.levels
            .iter()
            .map(|g| g.iter().map(|&i| names.names()[i].clone()).collect())
            .collect()
    }
}

/// `level(i) = 1 + max{level(j) : j ≻ i}`, 0 for maximal items. Within a
/// level items are sorted by descending score, then index.
pub fn level_decomposition(p: &PartialOrder, scores: Option<&[f64]>) -> Result<LevelDecomposition, OrderError> {
    layer(p.relation(), scores)
}

fn layer(r: &Relation, scores: Option<&[f64]>) -> Result<LevelDecomposition, OrderError> {
    let n = r.n;
    // Kahn's algorithm.
    let mut indegree = vec![0usize; n];
    let mut succs = vec![Vec::new(); n];
    for (i, j) in r.pairs() {
        indegree[j] += 1;
        succs[i].push(j);
    }
    let mut level = vec![0usize; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop() {
        seen += 1;
        for &j in &succs[i] {
            level[j] = level[j].max(level[i] + 1);
            indegree[j] -= 1;
            if indegree[j] == 0 {
                queue.push(j);
            }
        }
    }
    if seen < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(OrderError::Cycle(stuck));
    }
    let depth = level.iter().copied().max().map_or(0, |d| d + 1);
    let mut levels = vec![Vec::new(); depth];
    for i in 0..n {
        levels[level[i]].push(i);
    }
    for group in &mut levels {
        group.sort_by(|&a, &b| {
            let by_score = match scores {
                Some(s) => s[b].total_cmp(&s[a]),
                None => std::cmp::Ordering::Equal,
            };
            by_score.then(a.cmp(&b))
        });
    }
    Ok(LevelDecomposition { levels })
}

/// Result of thresholding empirical win frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCut {
    pub relation: Relation,
    pub axioms: AxiomReport,
}

/// `i ≻ j` iff the empirical probability that `i` beats `j` is at least
/// `alpha`. Ties are left out of the denominator; pairs with no decisive
/// comparison get probability 0.5.
pub fn empirical_alpha_cut(d: &ComparisonDataset, alpha: f64) -> Result<AlphaCut, OrderError> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(OrderError::AlphaOutOfRange(alpha));
    }
    let n = d.n_items();
    let mut wins = vec![vec![0u64; n]; n];
    for c in d.comparisons() {
        let (i, j) = (c.left.0, c.right.0);
        match c.label {
            Label::LeftPreferred => wins[i][j] += 1,
            Label::RightPreferred => wins[j][i] += 1,
            Label::Tie => {}
        }
    }
    let mut r = Relation::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let decisive = wins[i][j] + wins[j][i];
            let p = if decisive == 0 {
                0.5
            } else {
                wins[i][j] as f64 / decisive as f64
            };
            if p >= alpha {
                r.precedes.insert((i, j));
            }
        }
    }
    let axioms = check_axioms(&r);
    Ok(AlphaCut { relation: r, axioms })
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT digraph of the Hasse diagram, one `rank=same` subgraph per level.
pub fn export_dot(p: &PartialOrder, levels: &LevelDecomposition, names: &ItemRegistry) -> String {
    let name = |i: usize| dot_id(&names.names()[i]);
    let mut out = String::new();
    out.push_str("digraph partial_order {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box];\n");
    for (k, group) in levels.levels.iter().enumerate() {
        let _ = write!(out, "  {{ rank=same; // level {k}\n   ");
        for &i in group {
            let _ = write!(out, " {};", name(i));
        }
        out.push_str("\n  }\n");
    }
    for (i, j) in p.transitive_reduction().pairs() {
        let _ = writeln!(out, "  {} -> {};", name(i), name(j));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(p: &PartialOrder) -> Vec<(usize, usize)> {
        p.relation().pairs().collect()
    }

    #[test]
    fn cut_example() {
        let p = lambda_cut(&[3.0, 1.0, 0.0], 1.5);
        assert_eq!(pairs(&p), vec![(0, 1), (0, 2)]);
        assert!(!p.comparable(1, 2));
    }

    #[test]
    fn cut_degenerate_cases() {
        assert!(lambda_cut(&[2.0; 4], 0.0).is_empty());
        let p = lambda_cut(&[4.0, 3.0, 2.0, 1.0], 0.0);
        assert_eq!(p.len(), 6);
        assert!(check_axioms(p.relation()).all());
    }

    #[test]
    fn axiom_counterexample() {
        let r = Relation::from_pairs(3, [(0, 1), (1, 2)]).unwrap();
        let rep = check_axioms(&r);
        assert!(rep.irreflexive && rep.asymmetric && !rep.transitive);
        assert!(r.into_partial_order().is_err());
        assert!(check_axioms(&Relation::empty(3)).all());
        let r = Relation::from_pairs(2, [(0, 1), (1, 0), (1, 1)]).unwrap();
        let rep = check_axioms(&r);
        assert!(!rep.irreflexive && !rep.asymmetric);
    }

    #[test]
    fn levels() {
        let p = Relation::from_pairs(3, [(0, 1), (0, 2)]).unwrap().into_partial_order().unwrap();
        assert_eq!(level_decomposition(&p, None).unwrap().levels, vec![vec![0], vec![1, 2]]);
        let p = Relation::empty(4).into_partial_order().unwrap();
        assert_eq!(level_decomposition(&p, None).unwrap().levels, vec![vec![0, 1, 2, 3]]);
        let p = Relation::from_pairs(3, [(0, 1), (1, 2), (0, 2)]).unwrap().into_partial_order().unwrap();
        assert_eq!(level_decomposition(&p, None).unwrap().levels, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn levels_sorted_by_score() {
        let p = Relation::empty(3).into_partial_order().unwrap();
        let lv = level_decomposition(&p, Some(&[0.1, 0.5, 0.5])).unwrap();
        assert_eq!(lv.levels, vec![vec![1, 2, 0]]);
    }

    #[test]
    fn cycle_is_reported() {
        let r = Relation::from_pairs(2, [(0, 1), (1, 0)]).unwrap();
        assert!(matches!(layer(&r, None), Err(OrderError::Cycle(_))));
    }

    #[test]
    fn alpha_cut_examples() {
        let mut triples = vec![(0, 1, 1); 8];
        triples.extend([(0, 1, -1); 2]);
        let d = ComparisonDataset::from_triples(2, &triples).unwrap();
        let cut = empirical_alpha_cut(&d, 0.7).unwrap();
        assert_eq!(cut.relation.pairs().collect::<Vec<_>>(), vec![(0, 1)]);
        assert!(empirical_alpha_cut(&d, 1.0).unwrap().relation.is_empty());

        let d = ComparisonDataset::from_triples(3, &[(0, 1, 0), (1, 0, 0), (1, 2, 1)]).unwrap();
        let cut = empirical_alpha_cut(&d, 0.7).unwrap();
        assert!(!cut.relation.contains(0, 1) && !cut.relation.contains(1, 0));
        assert!(cut.relation.contains(1, 2));

        assert!(empirical_alpha_cut(&d, 0.5).is_err());
        assert!(empirical_alpha_cut(&d, 1.01).is_err());
    }

    #[test]
    fn alpha_cut_can_be_intransitive() {
        // 0 beats 1, 1 beats 2, 2 beats 0: a cycle at α = 1.
        let d = ComparisonDataset::from_triples(3, &[(0, 1, 1), (1, 2, 1), (2, 0, 1)]).unwrap();
        let cut = empirical_alpha_cut(&d, 1.0).unwrap();
        assert!(!cut.axioms.transitive);
    }

    #[test]
    fn dot_examples() {
        let names = ItemRegistry::from_names(["a", "b", "c"]).unwrap();
        let p = lambda_cut(&[2.0, 1.0, 0.0], 0.5);
        let lv = level_decomposition(&p, None).unwrap();
        let dot = export_dot(&p, &lv, &names);
        let edges: Vec<&str> = dot.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(edges, vec!["  \"a\" -> \"b\";", "  \"b\" -> \"c\";"]);

        let p = Relation::empty(3).into_partial_order().unwrap();
        let lv = level_decomposition(&p, None).unwrap();
        let dot = export_dot(&p, &lv, &names);
        assert!(!dot.contains("->"));
        for n in ["\"a\"", "\"b\"", "\"c\""] {
            assert!(dot.contains(n));
        }

        let p = Relation::from_pairs(3, [(0, 1), (0, 2)]).unwrap().into_partial_order().unwrap();
        let lv = level_decomposition(&p, None).unwrap();
        let dot = export_dot(&p, &lv, &names);
        assert_eq!(dot.matches("\"a\" ->").count(), 2);
        assert!(dot.contains("rank=same"));
    }

    fn scores_and_lambda() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-10.0f64..10.0, 1..10), 0.0f64..6.0)
    }

    proptest! {
        #[test]
        fn cut_is_partial_order((s, lambda) in scores_and_lambda()) {
            prop_assert!(check_axioms(lambda_cut(&s, lambda).relation()).all());
        }

        #[test]
        fn raising_lambda_shrinks((s, lambda) in scores_and_lambda(), extra in 0.0f64..3.0) {
            let lo = lambda_cut(&s, lambda);
            let hi = lambda_cut(&s, lambda + extra);
            prop_assert!(hi.relation().pairs().all(|(i, j)| lo.precedes(i, j)));
        }

        #[test]
        fn levels_respect_order((s, lambda) in scores_and_lambda()) {
            let p = lambda_cut(&s, lambda);
            let lv = level_decomposition(&p, Some(&s)).unwrap();
            let level = lv.level_of();
            prop_assert_eq!(level.len(), s.len());
            for (i, j) in p.relation().pairs() {
                prop_assert!(level[i] < level[j]);
            }
        }

        #[test]
        fn reduction_then_closure_roundtrips((s, lambda) in scores_and_lambda()) {
            let p = lambda_cut(&s, lambda);
            prop_assert_eq!(&p.transitive_reduction().transitive_closure(), p.relation());
        }
    }
}
