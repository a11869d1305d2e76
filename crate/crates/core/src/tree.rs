//! CStrees: an order plus one staging per level, optionally parameterized.
//!
//! Level `k` holds the outcomes of the first `k` ordered variables and its
//! staging governs the variable at order position `k`. Level 0 is the root: a
//! single stage with the empty context carrying the first variable's marginal.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::context::{Context, Staging};
use crate::error::{Error, Result};
use crate::space::{Order, StateSpace};

/// Levels at or below this many outcomes get a dense outcome-to-stage table.
pub const DEFAULT_LEVEL_SIZE_CAP: u64 = 1 << 20;

const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CStree {
    order: Order,
    space: StateSpace,
    stagings: Vec<Staging>,
    params: Option<Vec<Vec<Vec<f64>>>>,
    names: Option<Vec<String>>,
    labels: Option<Vec<Vec<String>>>,
}

impl CStree {
    /// Builds a tree from the stagings of levels `1..p`; the root level is implicit.
    pub fn new(order: Order, space: StateSpace, stagings: Vec<Staging>) -> Result<Self> {
        let p = space.num_vars();
        if order.len() != p {
            return Err(Error::InvalidOrder(format!("order has {} variables, state space has {p}", order.len())));
        }
        if stagings.len() + 1 != p {
            return Err(Error::Config(format!(
                "expected {} stagings for levels 1..{p}, got {}",
                p - 1,
                stagings.len()
            )));
        }
        let mut all = Vec::with_capacity(p);
        all.push(Staging::trivial(0));
        all.extend(stagings);
        Self::from_levels(order, space, all)
    }

    /// Builds a tree from all `p` level stagings, root included.
    pub fn from_levels(order: Order, space: StateSpace, stagings: Vec<Staging>) -> Result<Self> {
        let p = space.num_vars();
        if order.len() != p || stagings.len() != p {
            return Err(Error::Config(format!(
                "need an order and {p} level stagings, got {} and {}",
                order.len(),
                stagings.len()
            )));
        }
        for (level, s) in stagings.iter().enumerate() {
            if s.level != level {
                return Err(Error::CorruptStaging { level, reason: format!("staging is labelled level {}", s.level) });
            }
            s.validate(&order, &space)?;
        }
        Ok(CStree { order, space, stagings, params: None, names: None, labels: None })
    }

    /// The tree with every level in a single stage (full independence).
    pub fn independent(order: Order, space: StateSpace) -> Result<Self> {
        let p = space.num_vars();
        Self::from_levels(order, space, (0..p).map(Staging::trivial).collect())
    }

    pub fn order(&self) -> &Order {
        &self.order
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_vars(&self) -> usize {
        self.space.num_vars()
    }

    /// Staging of `level` (0 is the root).
    pub fn staging(&self, level: usize) -> &Staging {
        &self.stagings[level]
    }

    pub fn stagings(&self) -> &[Staging] {
        &self.stagings
    }

    /// Variable whose conditional distribution the staging of `level` governs.
    pub fn governed_var(&self, level: usize) -> usize {
        self.order.var_at(level)
    }

    /// Largest context size over all levels.
    pub fn max_context_size(&self) -> usize {
        self.stagings.iter().map(|s| s.max_context_size()).max().unwrap_or(0)
    }

    pub fn params(&self) -> Option<&[Vec<Vec<f64>>]> {
        self.params.as_deref()
    }

    /// Distribution of the governed variable in stage `stage` of `level`.
    pub fn stage_probs(&self, level: usize, stage: usize) -> Option<&[f64]> {
        self.params.as_ref().map(|p| p[level][stage].as_slice())
    }

    pub fn is_parameterized(&self) -> bool {
        self.params.is_some()
    }

    /// Attaches per-stage distributions, indexed `[level][stage][value]`.
    pub fn with_params(mut self, params: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if params.len() != self.num_vars() {
            return Err(Error::Config(format!("params cover {} of {} levels", params.len(), self.num_vars())));
        }
        for (level, per_level) in params.iter().enumerate() {
            let d = self.space.card(self.governed_var(level));
            if per_level.len() != self.stagings[level].len() {
                return Err(Error::Config(format!(
                    "level {level} has {} stages but {} distributions",
                    self.stagings[level].len(),
                    per_level.len()
                )));
            }
            for theta in per_level {
                validate_probs(theta, d).map_err(|e| Error::Config(format!("level {level}: {e}")))?;
            }
        }
        self.params = Some(params);
        Ok(self)
    }

    pub fn without_params(mut self) -> Self {
        self.params = None;
        self
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn with_names(mut self, names: Option<Vec<String>>) -> Result<Self> {
        if let Some(n) = &names {
            if n.len() != self.num_vars() {
                return Err(Error::Config(format!("{} names for {} variables", n.len(), self.num_vars())));
            }
        }
        self.names = names;
        Ok(self)
    }

    /// Category labels per variable, when the data used string labels.
    pub fn labels(&self) -> Option<&[Vec<String>]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<Vec<String>>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.num_vars() {
                return Err(Error::Config(format!("{} label lists for {} variables", l.len(), self.num_vars())));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Display name of a variable: its name if known, else its index.
    pub fn var_name(&self, v: usize) -> String {
        self.names.as_ref().map_or_else(|| v.to_string(), |n| n[v].clone())
    }

    /// Precomputes stage lookups for fast evaluation of many outcomes.
    pub fn locator(&self) -> StageLocator<'_> {
        StageLocator::new(self, DEFAULT_LEVEL_SIZE_CAP)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            order: self.order.as_slice().to_vec(),
            cards: self.space.cards().to_vec(),
            names: self.names.clone(),
            labels: self.labels.clone(),
            stagings: self
                .stagings
                .iter()
                .enumerate()
                .map(|(level, s)| {
                    s.stages()
                        .iter()
                        .enumerate()
                        .map(|(k, st)| StageDoc {
                            context: st.context.clone(),
                            probs: self.params.as_ref().map(|p| p[level][k].clone()),
                        })
                        .collect()
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        let space = StateSpace::new(doc.cards)?;
        let order = Order::new(doc.order)?;
        if doc.stagings.len() != space.num_vars() {
            return Err(Error::Parse(format!(
                "model lists {} levels for {} variables",
                doc.stagings.len(),
                space.num_vars()
            )));
        }
        let mut stagings = Vec::with_capacity(doc.stagings.len());
        let mut probs: Vec<Vec<(Context, Option<Vec<f64>>)>> = Vec::new();
        for (level, stages) in doc.stagings.into_iter().enumerate() {
            let pairs: Vec<(Context, Option<Vec<f64>>)> = stages.into_iter().map(|s| (s.context, s.probs)).collect();
            stagings.push(Staging::new(level, pairs.iter().map(|(c, _)| c.clone()).collect::<Vec<_>>()));
            probs.push(pairs);
        }
        let tree = CStree::from_levels(order, space, stagings)?.with_names(doc.names)?.with_labels(doc.labels)?;

        let given = probs.iter().flatten().filter(|(_, p)| p.is_some()).count();
        if given == 0 {
            return Ok(tree);
        }
        let total: usize = probs.iter().map(|l| l.len()).sum();
        if given != total {
            return Err(Error::Parse(format!("{given} of {total} stages carry probabilities")));
        }
        // Stages are stored canonically; realign the probabilities with them.
        let params = tree
            .stagings
            .iter()
            .zip(probs)
            .map(|(staging, mut pairs)| {
                staging
                    .contexts()
                    .map(|c| {
                        let k = pairs.iter().position(|(pc, _)| pc == c).expect("same context set");
                        pairs.swap_remove(k).1.expect("checked above")
                    })
                    .collect()
            })
            .collect();
        tree.with_params(params)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn validate_probs(theta: &[f64], d: usize) -> std::result::Result<(), String> {
    if theta.len() != d {
        return Err(format!("distribution of length {} for a variable with {d} categories", theta.len()));
    }
    if theta.iter().any(|&t| t.is_nan() || t < 0.0 || !t.is_finite()) {
        return Err(format!("distribution {theta:?} has a negative or non-finite entry"));
    }
    let sum: f64 = theta.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(format!("distribution {theta:?} sums to {sum}"));
    }
    Ok(())
}

/// Outcome-to-stage lookup per level.
pub struct StageLocator<'a> {
    tree: &'a CStree,
    dense: Vec<Option<Vec<u32>>>,
}

impl<'a> StageLocator<'a> {
    pub fn new(tree: &'a CStree, cap: u64) -> Self {
        let order = &tree.order;
        let space = &tree.space;
        let dense = tree
            .stagings
            .iter()
            .enumerate()
            .map(|(level, staging)| {
                let size =
                    order.predecessors(level).iter().try_fold(1u64, |acc, &v| acc.checked_mul(space.card(v) as u64))?;
                if size > cap {
                    return None;
                }
                let mut table = vec![u32::MAX; size as usize];
                for (k, stage) in staging.stages().iter().enumerate() {
                    for prefix in stage.members(order, space).expect("validated at construction") {
                        table[Self::prefix_index(order, space, &prefix)] = k as u32;
                    }
                }
                Some(table)
            })
            .collect();
        StageLocator { tree, dense }
    }

    fn prefix_index(order: &Order, space: &StateSpace, prefix: &[usize]) -> usize {
        prefix.iter().enumerate().fold(0usize, |acc, (k, &x)| acc * space.card(order.var_at(k)) + x)
    }

    /// Stage index at `level` for an outcome indexed by variable.
    pub fn locate(&self, level: usize, outcome_by_var: &[usize]) -> usize {
        match &self.dense[level] {
            Some(table) => {
                let order = &self.tree.order;
                let space = &self.tree.space;
                let idx = (0..level).fold(0usize, |acc, k| {
                    let v = order.var_at(k);
                    acc * space.card(v) + outcome_by_var[v]
                });
                table[idx] as usize
            }
            None => self.tree.stagings[level].stage_index_by_var(outcome_by_var).expect("staging is a partition"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    order: Vec<usize>,
    cards: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Vec<String>>>,
    stagings: Vec<Vec<StageDoc>>,
}

#[derive(Serialize, Deserialize)]
struct StageDoc {
    context: Context,
    probs: Option<Vec<f64>>,
}

/// Serialized as a JSON object `{"<var>": <value>}` with keys in numeric order.
impl Serialize for Context {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.len()))?;
        for &(v, x) in self.assignments() {
            map.serialize_entry(&v.to_string(), &x)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Context {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ContextVisitor;

        impl<'de> Visitor<'de> for ContextVisitor {
            type Value = Context;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "an object mapping variable indices to values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Context, A::Error> {
                let mut pairs = BTreeMap::new();
                while let Some((key, value)) = access.next_entry::<String, usize>()? {
                    let var: usize = key
                        .parse()
                        .map_err(|_| de::Error::custom(format!("context key {key:?} is not a variable index")))?;
                    if pairs.insert(var, value).is_some() {
                        return Err(de::Error::custom(format!("variable {var} assigned twice")));
                    }
                }
                Ok(Context::from_sorted(pairs.into_iter().collect()))
            }
        }

        deserializer.deserialize_map(ContextVisitor)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::context::tests::four_var_stagings;

    pub(crate) fn four_var_tree() -> CStree {
        CStree::from_levels(Order::identity(4), StateSpace::binary(4).unwrap(), four_var_stagings()).unwrap()
    }

    fn uniform_params(tree: &CStree) -> Vec<Vec<Vec<f64>>> {
        tree.stagings()
            .iter()
            .enumerate()
            .map(|(level, s)| {
                let d = tree.space().card(tree.governed_var(level));
                vec![vec![1.0 / d as f64; d]; s.len()]
            })
            .collect()
    }

    #[test]
    fn rejects_wrong_level_count() {
        let err = CStree::new(Order::identity(3), StateSpace::binary(3).unwrap(), vec![Staging::trivial(1)]);
        assert!(err.is_err());
    }

    #[test]
    fn param_validation() {
        let tree = four_var_tree();
        let mut params = uniform_params(&tree);
        assert!(tree.clone().with_params(params.clone()).is_ok());
        params[2][0] = vec![0.7, 0.4];
        assert!(tree.clone().with_params(params.clone()).is_err());
        params[2][0] = vec![1.0];
        assert!(tree.with_params(params).is_err());
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let tree = four_var_tree();
        let params = uniform_params(&tree);
        let tree = tree
            .with_params(params)
            .unwrap()
            .with_names(Some(["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect()));
        let tree = tree.unwrap();
        let text = tree.to_json().unwrap();
        let back = CStree::from_json(&text).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn context_keys_are_numeric_order() {
        let ctx = Context::new(vec![(10, 1), (2, 0)]).unwrap();
        assert_eq!(serde_json::to_string(&ctx).unwrap(), r#"{"2":0,"10":1}"#);
        let back: Context = serde_json::from_str(r#"{"10":1,"2":0}"#).unwrap();
        assert_eq!(back, ctx);
        assert!(serde_json::from_str::<Context>(r#"{"x":1}"#).is_err());
    }

    #[test]
    fn stage_order_in_file_does_not_matter() {
        let text = r#"{"order":[1,0],"cards":[2,2],"stagings":[
            [{"context":{},"probs":[0.5,0.5]}],
            [{"context":{"1":1},"probs":[0.9,0.1]},{"context":{"1":0},"probs":[0.2,0.8]}]]}"#;
        let tree = CStree::from_json(text).unwrap();
        assert_eq!(tree.staging(1).stages()[0].context, Context::single(1, 0));
        assert_eq!(tree.stage_probs(1, 0).unwrap(), &[0.2, 0.8]);
    }

    #[test]
    fn overlapping_file_stagings_are_rejected() {
        let text = r#"{"order":[0,1],"cards":[2,2],"stagings":[
            [{"context":{},"probs":null}],
            [{"context":{},"probs":null},{"context":{"0":0},"probs":null}]]}"#;
        assert!(CStree::from_json(text).is_err());
    }

    #[test]
    fn locator_agrees_with_scan() {
        let tree = four_var_tree();
        let dense = tree.locator();
        let sparse = StageLocator::new(&tree, 0);
        for bits in 0..16usize {
            let outcome: Vec<usize> = (0..4).map(|v| (bits >> (3 - v)) & 1).collect();
            for level in 0..4 {
                assert_eq!(dense.locate(level, &outcome), sparse.locate(level, &outcome));
            }
        }
    }
}
