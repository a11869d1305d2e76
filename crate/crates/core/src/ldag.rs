//! Labeled DAG view of a CStree.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::Result;
use crate::tree::CStree;

/// Assignment to the label coordinates of an edge; `None` is a wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Pattern(pub Vec<Option<usize>>);

impl Pattern {
    fn sort_key(&self) -> Vec<usize> {
        self.0.iter().map(|c| c.unwrap_or(usize::MAX)).collect()
    }

    /// Whether `outcome` (indexed like the coordinates) is a completion of the pattern.
    pub fn covers(&self, values: &[usize]) -> bool {
        self.0.iter().zip(values).all(|(c, &x)| c.is_none_or(|c| c == x))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |c: &Option<usize>| c.map_or_else(|| "*".to_string(), |x| x.to_string());
        if self.0.len() == 1 {
            return f.write_str(&cell(&self.0[0]));
        }
        let cells: Vec<String> = self.0.iter().map(cell).collect();
        write!(f, "({})", cells.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LdagEdge {
    pub source: usize,
    pub target: usize,
    /// `pa(target) \ {source}`, in order position.
    pub coords: Vec<usize>,
    /// Contexts of `coords` under which the edge vanishes.
    pub label: Vec<Pattern>,
}

impl LdagEdge {
    pub fn label_string(&self) -> String {
        self.label.iter().map(Pattern::to_string).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ldag {
    pub num_vars: usize,
    /// The tree's causal order; every edge points forward in it.
    pub order: Vec<usize>,
    /// Parents by variable, in order position.
    pub parents: Vec<Vec<usize>>,
    /// Sorted by target position, then source position.
    pub edges: Vec<LdagEdge>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

/// Builds the LDAG: the parents of a variable are the union of the context
/// variables of its stages, and the label on `j -> i` holds one pattern per
/// stage whose context omits `j`, with the context fixed and the remaining
/// parents wildcarded. Patterns that jointly cover every value of a
/// coordinate are merged into one wildcard pattern until none remain.
pub fn to_ldag(tree: &CStree) -> Ldag {
    let order = tree.order();
    let space = tree.space();
    let p = tree.num_vars();
    let mut parents = vec![Vec::new(); p];
    let mut edges = Vec::new();
    for level in 0..p {
        let target = order.var_at(level);
        let staging = tree.staging(level);
        let mut pa = staging.context_vars();
        pa.sort_by_key(|&v| order.position(v));
        for &source in &pa {
            let coords: Vec<usize> = pa.iter().copied().filter(|&v| v != source).collect();
            let patterns: BTreeSet<Vec<Option<usize>>> = staging
                .contexts()
                .filter(|c| !c.contains_var(source))
                .map(|c| coords.iter().map(|&v| c.get(v)).collect())
                .collect();
            let coord_cards: Vec<usize> = coords.iter().map(|&v| space.card(v)).collect();
            let mut label: Vec<Pattern> = merge_patterns(patterns, &coord_cards).into_iter().map(Pattern).collect();
            label.sort_by_key(Pattern::sort_key);
            edges.push(LdagEdge { source, target, coords, label });
        }
        parents[target] = pa;
    }
    Ldag { num_vars: p, order: order.as_slice().to_vec(), parents, edges, names: tree.names().map(<[String]>::to_vec) }
}

/// Repeatedly replaces groups of patterns that differ only at one concrete
/// coordinate and together take every value there by the wildcarded
/// pattern. Patterns absorbed into a merge are dropped; the rest are kept.
fn merge_patterns(mut current: BTreeSet<Vec<Option<usize>>>, cards: &[usize]) -> BTreeSet<Vec<Option<usize>>> {
    let mut kept = BTreeSet::new();
    while !current.is_empty() {
        let mut merged = BTreeSet::new();
        let mut used = BTreeSet::new();
        for pat in &current {
            for c in 0..cards.len() {
                if pat[c].is_none() {
                    continue;
                }
                let siblings: Vec<Vec<Option<usize>>> = (0..cards[c])
                    .map(|x| {
                        let mut s = pat.clone();
                        s[c] = Some(x);
                        s
                    })
                    .collect();
                if siblings.iter().all(|s| current.contains(s)) {
                    let mut m = pat.clone();
                    m[c] = None;
                    merged.insert(m);
                    used.extend(siblings);
                }
            }
        }
        kept.extend(current.iter().filter(|p| !used.contains(*p)).cloned());
        current = merged;
    }
    kept
}

impl Ldag {
    pub fn edge(&self, source: usize, target: usize) -> Option<&LdagEdge> {
        self.edges.iter().find(|e| e.source == source && e.target == target)
    }

    /// Display name of a node: its name, or its 1-based index.
    pub fn node_name(&self, v: usize) -> String {
        self.names.as_ref().map_or_else(|| (v + 1).to_string(), |n| n[v].clone())
    }

    pub fn to_dot(&self) -> String {
        let id = |v: usize| match &self.names {
            Some(n) => format!("{:?}", n[v]),
            None => (v + 1).to_string(),
        };
        let mut out = String::from("digraph ldag {\n");
        for &v in &self.order {
            writeln!(out, "  {};", id(v)).unwrap();
        }
        for e in &self.edges {
            if e.label.is_empty() {
                writeln!(out, "  {} -> {};", id(e.source), id(e.target)).unwrap();
            } else {
                writeln!(out, "  {} -> {} [label=\"{}\"];", id(e.source), id(e.target), e.label_string()).unwrap();
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }
}

/// DOT rendering of `ldag`, optionally overriding its node names.
pub fn export_dot(ldag: &Ldag, names: Option<&[String]>) -> String {
    match names {
        Some(n) => Ldag { names: Some(n.to_vec()), ..ldag.clone() }.to_dot(),
        None => ldag.to_dot(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{Context, Staging};
    use crate::space::{Order, StateSpace};
    use crate::tree::tests::four_var_tree;

    fn labels(l: &Ldag, s: usize, t: usize) -> String {
        l.edge(s, t).unwrap().label_string()
    }

    #[test]
    fn four_var_tree_ldag() {
        let l = to_ldag(&four_var_tree());
        let edges: Vec<(usize, usize)> = l.edges.iter().map(|e| (e.source, e.target)).collect();
        assert_eq!(edges, vec![(0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]);
        assert_eq!(labels(&l, 0, 2), "1");
        assert_eq!(labels(&l, 0, 3), "(0,1),(*,0)");
        assert_eq!(labels(&l, 1, 3), "(*,0)");
        assert_eq!(labels(&l, 1, 2), "");
        assert_eq!(labels(&l, 2, 3), "");
        let dot = l.to_dot();
        assert!(dot.contains("1 -> 4 [label=\"(0,1),(*,0)\"]"));
        assert!(dot.contains("2 -> 3;"));
        assert_eq!(dot, to_ldag(&four_var_tree()).to_dot());
    }

    #[test]
    fn merged_wildcards() {
        // Level 3 has (X0, X2) in {(1,1), (1,0), (0,1)} plus two singletons.
        let ctx = |v: &[(usize, usize)]| Context::new(v.to_vec()).unwrap();
        let level2 = Staging::new(2, vec![ctx(&[(1, 1)]), ctx(&[(0, 0), (1, 0)]), ctx(&[(0, 1), (1, 0)])]);
        let level3 = Staging::new(
            3,
            vec![
                ctx(&[(0, 1), (2, 1)]),
                ctx(&[(0, 1), (2, 0)]),
                ctx(&[(0, 0), (2, 1)]),
                ctx(&[(0, 0), (1, 1), (2, 0)]),
                ctx(&[(0, 0), (1, 0), (2, 0)]),
            ],
        );
        let tree =
            CStree::new(Order::identity(4), StateSpace::binary(4).unwrap(), vec![Staging::trivial(1), level2, level3])
                .unwrap();
        let l = to_ldag(&tree);
        assert_eq!(labels(&l, 1, 3), "(1,*),(*,1)");
    }

    #[test]
    fn merge_rules() {
        let set = |v: &[&[Option<usize>]]| v.iter().map(|p| p.to_vec()).collect::<BTreeSet<_>>();
        let all = set(&[&[Some(0), Some(0)], &[Some(0), Some(1)], &[Some(1), Some(0)], &[Some(1), Some(1)]]);
        assert_eq!(merge_patterns(all, &[2, 2]), set(&[&[None, None]]));
        let partial = set(&[&[Some(0)], &[Some(2)]]);
        assert_eq!(merge_patterns(partial.clone(), &[3]), partial);
    }

    #[test]
    fn independence_tree_has_no_edges() {
        let tree = CStree::independent(Order::identity(3), StateSpace::binary(3).unwrap()).unwrap();
        let l = to_ldag(&tree);
        assert!(l.edges.is_empty());
        assert_eq!(l.to_dot(), "digraph ldag {\n  1;\n  2;\n  3;\n}\n");
    }

    #[test]
    fn names_and_json() {
        let l = to_ldag(&four_var_tree());
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let dot = export_dot(&l, Some(&names));
        assert!(dot.contains("\"a\" -> \"d\" [label=\"(0,1),(*,0)\"]"));
        let json = l.to_json().unwrap();
        assert!(json.contains("\"coords\""));
        assert!(json.contains("null"));
    }
}
