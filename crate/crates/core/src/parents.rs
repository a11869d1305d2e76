//! Possible context-variable sets `K_i`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// For each variable, the variables allowed to appear in its stage contexts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PossibleParents {
    sets: Vec<Vec<usize>>,
}

impl PossibleParents {
    /// Every other variable is a possible parent.
    pub fn full(p: usize) -> Self {
        PossibleParents { sets: (0..p).map(|i| (0..p).filter(|&j| j != i).collect()).collect() }
    }

    pub fn new(sets: Vec<Vec<usize>>) -> Result<Self> {
        let p = sets.len();
        let sets = sets
            .into_iter()
            .enumerate()
            .map(|(i, mut k)| {
                k.sort_unstable();
                k.dedup();
                if k.contains(&i) {
                    return Err(Error::Parse(format!("variable {i} lists itself as a possible parent")));
                }
                if let Some(&j) = k.iter().find(|&&j| j >= p) {
                    return Err(Error::Parse(format!("possible parent {j} of variable {i} out of range")));
                }
                Ok(k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PossibleParents { sets })
    }

    /// `K_i` = undirected neighbours of `i` plus its directed parents.
    pub fn from_cpdag(p: usize, directed: &[(usize, usize)], undirected: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![Vec::new(); p];
        for &(a, b) in directed.iter().chain(undirected) {
            if a == b {
                return Err(Error::Parse(format!("self-loop on variable {a}")));
            }
            if a >= p || b >= p {
                return Err(Error::Parse(format!("edge ({a}, {b}) out of range for {p} variables")));
            }
        }
        for &(a, b) in directed {
            sets[b].push(a);
        }
        for &(a, b) in undirected {
            sets[a].push(b);
            sets[b].push(a);
        }
        Self::new(sets)
    }

    /// Reads either a possible-parents map `{"<i>": [j, ...]}` (absent
    /// variables default to all others) or a CPDAG `{"directed": [[a, b]],
    /// "undirected": [[a, b]]}`.
    pub fn from_json(text: &str, p: usize) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Cpdag {
            #[serde(default)]
            directed: Vec<(usize, usize)>,
            #[serde(default)]
            undirected: Vec<(usize, usize)>,
        }

        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj =
            value.as_object().ok_or_else(|| Error::Parse("possible-parents file must hold a JSON object".into()))?;
        if obj.contains_key("directed") || obj.contains_key("undirected") {
            let g: Cpdag = serde_json::from_value(value)?;
            return Self::from_cpdag(p, &g.directed, &g.undirected);
        }
        let map: BTreeMap<String, Vec<usize>> = serde_json::from_value(value)?;
        let mut sets: Vec<Vec<usize>> = Self::full(p).sets;
        for (key, list) in map {
            let i: usize = key.parse().map_err(|_| Error::Parse(format!("key {key:?} is not a variable index")))?;
            if i >= p {
                return Err(Error::Parse(format!("variable {i} out of range for {p} variables")));
            }
            sets[i] = list;
        }
        Self::new(sets)
    }

    pub fn load(path: impl AsRef<Path>, p: usize) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, p)
    }

    pub fn num_vars(&self) -> usize {
        self.sets.len()
    }

    /// `K_i`, sorted.
    pub fn of(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    /// Largest `|K_i|`.
    pub fn alpha(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }
}
