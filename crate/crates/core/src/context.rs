//! Contexts, stages and stagings.
//!
//! A level `i` of a tree is the outcome space of the first `i` variables of
//! the governing order. A stage is the set of level outcomes agreeing with a
//! partial assignment (its context); a staging partitions a level into stages.
//! Stages are stored by context only and their members are generated on demand.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::space::{Order, StateSpace};

/// A partial assignment `x_S`, kept sorted by variable index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Context {
    assignments: Vec<(usize, usize)>,
}

impl Context {
    pub fn empty() -> Self {
        Context::default()
    }

    pub fn new(mut assignments: Vec<(usize, usize)>) -> Result<Self> {
        assignments.sort_unstable();
        if let Some(w) = assignments.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidContext(format!("variable {} assigned twice", w[0].0)));
        }
        Ok(Context { assignments })
    }

    /// Builds a context from pairs already known to be sorted with distinct variables.
    pub(crate) fn from_sorted(assignments: Vec<(usize, usize)>) -> Self {
        debug_assert!(assignments.windows(2).all(|w| w[0].0 < w[1].0));
        Context { assignments }
    }

    pub fn single(var: usize, value: usize) -> Self {
        Context { assignments: vec![(var, value)] }
    }

    pub fn pair(a: (usize, usize), b: (usize, usize)) -> Self {
        assert_ne!(a.0, b.0, "pair context needs two distinct variables");
        if a.0 < b.0 {
            Context { assignments: vec![a, b] }
        } else {
            Context { assignments: vec![b, a] }
        }
    }

    /// Checks every value against the cardinality of its variable.
    pub fn validate(&self, space: &StateSpace) -> Result<()> {
        for &(v, x) in &self.assignments {
            if v >= space.num_vars() {
                return Err(Error::InvalidContext(format!("variable {v} out of range")));
            }
            if x >= space.card(v) {
                return Err(Error::InvalidContext(format!(
                    "value {x} out of range for variable {v} with {} categories",
                    space.card(v)
                )));
            }
        }
        Ok(())
    }

    pub fn assignments(&self) -> &[(usize, usize)] {
        &self.assignments
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().map(|&(v, _)| v)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn get(&self, var: usize) -> Option<usize> {
        self.assignments.binary_search_by_key(&var, |&(v, _)| v).ok().map(|k| self.assignments[k].1)
    }

    pub fn contains_var(&self, var: usize) -> bool {
        self.get(var).is_some()
    }

    /// Whether a full or partial outcome indexed by variable agrees with this context.
    pub fn matches(&self, outcome_by_var: &[usize]) -> bool {
        self.assignments.iter().all(|&(v, x)| outcome_by_var[v] == x)
    }

    /// Two stages at one level are disjoint iff their contexts disagree on a shared variable.
    pub fn conflicts_with(&self, other: &Context) -> bool {
        let (mut a, mut b) = (self.assignments.iter().peekable(), other.assignments.iter().peekable());
        while let (Some(&&(va, xa)), Some(&&(vb, xb))) = (a.peek(), b.peek()) {
            match va.cmp(&vb) {
                Ordering::Less => {
                    a.next();
                }
                Ordering::Greater => {
                    b.next();
                }
                Ordering::Equal => {
                    if xa != xb {
                        return true;
                    }
                    a.next();
                    b.next();
                }
            }
        }
        false
    }
}

/// Canonical order: by size, then variable set, then values.
impl Ord for Context {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.vars().cmp(other.vars()))
            .then_with(|| self.assignments.iter().map(|a| a.1).cmp(other.assignments.iter().map(|a| a.1)))
    }
}

impl PartialOrd for Context {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, (v, x)) in self.assignments.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}={x}")?;
        }
        write!(f, "}}")
    }
}

/// A stage at a level, identified by its defining context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stage {
    pub context: Context,
    pub level: usize,
}

impl Stage {
    pub fn new(level: usize, context: Context) -> Self {
        Stage { context, level }
    }

    /// Checks that every context variable lies among the first `level` ordered variables.
    pub fn validate(&self, order: &Order, space: &StateSpace) -> Result<()> {
        self.context.validate(space)?;
        for v in self.context.vars() {
            if v >= order.len() || order.position(v) >= self.level {
                return Err(Error::InvalidStage(format!(
                    "context variable {v} of stage {} is not among the first {} ordered variables",
                    self.context, self.level
                )));
            }
        }
        Ok(())
    }

    /// Number of level outcomes in this stage, saturating at `u128::MAX`.
    pub fn size(&self, order: &Order, space: &StateSpace) -> u128 {
        order
            .predecessors(self.level)
            .iter()
            .filter(|&&v| !self.context.contains_var(v))
            .fold(1u128, |acc, &v| acc.saturating_mul(space.card(v) as u128))
    }

    /// Level outcomes (values in order-position order) agreeing with the context.
    pub fn members<'a>(&'a self, order: &'a Order, space: &'a StateSpace) -> Result<StageMembers<'a>> {
        self.validate(order, space)?;
        Ok(StageMembers::new(self, order, space))
    }
}

/// Odometer over the free coordinates of a stage.
pub struct StageMembers<'a> {
    cards: Vec<usize>,
    free: Vec<usize>,
    current: Option<Vec<usize>>,
    _stage: std::marker::PhantomData<&'a Stage>,
}

impl<'a> StageMembers<'a> {
    fn new(stage: &'a Stage, order: &'a Order, space: &'a StateSpace) -> Self {
        let level = stage.level;
        let mut start = vec![0; level];
        let mut free = Vec::new();
        let mut cards = Vec::with_capacity(level);
        for (k, &v) in order.predecessors(level).iter().enumerate() {
            cards.push(space.card(v));
            match stage.context.get(v) {
                Some(x) => start[k] = x,
                None => free.push(k),
            }
        }
        StageMembers { cards, free, current: Some(start), _stage: std::marker::PhantomData }
    }
}

impl Iterator for StageMembers<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        // Advance the last free coordinate fastest.
        let mut carried = true;
        for &k in self.free.iter().rev() {
            cur[k] += 1;
            if cur[k] < self.cards[k] {
                carried = false;
                break;
            }
            cur[k] = 0;
        }
        if carried {
            self.current = None;
        }
        Some(out)
    }
}

/// Members of `stage` at its level, as prefixes in order-position order.
pub fn stage_members<'a>(stage: &'a Stage, order: &'a Order, space: &'a StateSpace) -> Result<StageMembers<'a>> {
    stage.members(order, space)
}

/// A partition of a level into stages, kept in canonical stage order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Staging {
    pub level: usize,
    stages: Vec<Stage>,
}

impl Staging {
    pub fn new(level: usize, contexts: impl IntoIterator<Item = Context>) -> Self {
        let mut stages: Vec<Stage> = contexts.into_iter().map(|c| Stage::new(level, c)).collect();
        stages.sort_unstable();
        Staging { level, stages }
    }

    /// The single-stage staging with the empty context.
    pub fn trivial(level: usize) -> Self {
        Staging { level, stages: vec![Stage::new(level, Context::empty())] }
    }

    /// The staging whose stages are all outcomes of the level (every predecessor in context).
    pub fn saturated(level: usize, order: &Order, space: &StateSpace) -> Self {
        let full = Stage::new(level, Context::empty());
        let contexts = StageMembers::new(&full, order, space).map(|prefix| {
            let mut pairs: Vec<(usize, usize)> = order.predecessors(level).iter().copied().zip(prefix).collect();
            pairs.sort_unstable();
            Context::from_sorted(pairs)
        });
        Staging::new(level, contexts.collect::<Vec<_>>())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.stages.iter().map(|s| &s.context)
    }

    /// Largest context size over the stages (`ms` of the staging).
    pub fn max_context_size(&self) -> usize {
        self.stages.iter().map(|s| s.context.len()).max().unwrap_or(0)
    }

    /// Union of the context variables of all stages, sorted.
    pub fn context_vars(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self.contexts().flat_map(|c| c.vars()).collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Checks stage validity and the partition property.
    ///
    /// Stages are pairwise disjoint iff every pair of contexts conflicts, and a
    /// disjoint family covers the level iff its sizes add up to the level size.
    pub fn validate(&self, order: &Order, space: &StateSpace) -> Result<()> {
        let corrupt = |reason: String| Error::CorruptStaging { level: self.level, reason };
        if self.level >= order.len() {
            return Err(corrupt(format!("level exceeds the {} variables of the order", order.len())));
        }
        for s in &self.stages {
            if s.level != self.level {
                return Err(corrupt(format!("stage {} belongs to level {}", s.context, s.level)));
            }
            s.validate(order, space)?;
        }
        for (a, sa) in self.stages.iter().enumerate() {
            for sb in &self.stages[a + 1..] {
                if !sa.context.conflicts_with(&sb.context) {
                    return Err(corrupt(format!("stages {} and {} overlap", sa.context, sb.context)));
                }
            }
        }
        let total = self.stages.iter().fold(0u128, |acc, s| acc.saturating_add(s.size(order, space)));
        let level_size =
            order.predecessors(self.level).iter().fold(1u128, |acc, &v| acc.saturating_mul(space.card(v) as u128));
        if total != level_size {
            return Err(corrupt(format!("stages cover {total} of {level_size} level outcomes")));
        }
        Ok(())
    }

    /// Index of the stage containing an outcome given by variable (entries
    /// for variables outside the level are ignored).
    pub fn stage_index_by_var(&self, outcome_by_var: &[usize]) -> Option<usize> {
        self.stages.iter().position(|s| s.context.matches(outcome_by_var))
    }

    /// The unique stage containing `prefix` (values in order-position order).
    pub fn find_stage(&self, order: &Order, prefix: &[usize]) -> Result<&Stage> {
        if prefix.len() != self.level {
            return Err(Error::InvalidStage(format!(
                "prefix of length {} given for level {}",
                prefix.len(),
                self.level
            )));
        }
        let mut by_var = vec![0usize; order.len()];
        for (k, &x) in prefix.iter().enumerate() {
            by_var[order.var_at(k)] = x;
        }
        self.stage_index_by_var(&by_var).map(|k| &self.stages[k]).ok_or_else(|| Error::CorruptStaging {
            level: self.level,
            reason: format!("no stage contains outcome {prefix:?}"),
        })
    }
}

impl fmt::Display for Staging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.stages.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", s.context)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The four-variable binary tree with order 0,1,2,3 used throughout the
    /// tests.
    pub(crate) fn four_var_stagings() -> Vec<Staging> {
        vec![
            Staging::trivial(0),
            Staging::trivial(1),
            Staging::new(2, vec![Context::single(1, 1), Context::pair((0, 0), (1, 0)), Context::pair((0, 1), (1, 0))]),
            Staging::new(
                3,
                vec![
                    Context::single(2, 0),
                    Context::pair((1, 0), (2, 1)),
                    Context::new(vec![(0, 0), (1, 1), (2, 1)]).unwrap(),
                    Context::new(vec![(0, 1), (1, 1), (2, 1)]).unwrap(),
                ],
            ),
        ]
    }

    fn members_of(level: usize, ctx: Context) -> Vec<String> {
        let order = Order::identity(4);
        let space = StateSpace::binary(4).unwrap();
        let stage = Stage::new(level, ctx);
        stage.members(&order, &space).unwrap().map(|m| m.iter().map(|x| x.to_string()).collect()).collect()
    }

    #[test]
    fn empty_context_covers_level() {
        assert_eq!(members_of(2, Context::empty()), vec!["00", "01", "10", "11"]);
    }

    #[test]
    fn four_var_stage_members() {
        assert_eq!(members_of(3, Context::single(2, 0)), vec!["000", "010", "100", "110"]);
        assert_eq!(members_of(3, Context::pair((1, 0), (2, 1))), vec!["001", "101"]);
    }

    #[test]
    fn member_count_matches_free_product() {
        let order = Order::new(vec![2, 0, 1]).unwrap();
        let space = StateSpace::new(vec![2, 3, 4]).unwrap();
        let stage = Stage::new(3, Context::single(0, 1));
        assert_eq!(stage.members(&order, &space).unwrap().count(), 4 * 3);
        assert_eq!(stage.size(&order, &space), 12);
    }

    #[test]
    fn context_outside_level_is_rejected() {
        let order = Order::identity(4);
        let space = StateSpace::binary(4).unwrap();
        let stage = Stage::new(2, Context::single(3, 0));
        assert!(matches!(stage.members(&order, &space), Err(Error::InvalidStage(_))));
    }

    #[test]
    fn four_var_stagings_are_partitions() {
        let order = Order::identity(4);
        let space = StateSpace::binary(4).unwrap();
        for s in four_var_stagings() {
            s.validate(&order, &space).unwrap();
        }
    }

    #[test]
    fn find_stage_examples() {
        let order = Order::identity(4);
        let level3 = &four_var_stagings()[3];
        assert_eq!(level3.find_stage(&order, &[1, 1, 0]).unwrap().context, Context::single(2, 0));
        assert_eq!(
            level3.find_stage(&order, &[1, 1, 1]).unwrap().context,
            Context::new(vec![(0, 1), (1, 1), (2, 1)]).unwrap()
        );
        let trivial = Staging::trivial(2);
        assert!(trivial.find_stage(&order, &[0, 1]).unwrap().context.is_empty());
    }

    #[test]
    fn find_stage_reports_gaps() {
        let order = Order::identity(3);
        let broken = Staging::new(2, vec![Context::single(0, 0)]);
        assert!(matches!(broken.find_stage(&order, &[1, 0]), Err(Error::CorruptStaging { .. })));
        assert!(broken.validate(&order, &StateSpace::binary(3).unwrap()).is_err());
    }

    #[test]
    fn overlapping_stages_fail_validation() {
        let order = Order::identity(3);
        let space = StateSpace::binary(3).unwrap();
        let s = Staging::new(2, vec![Context::single(0, 0), Context::single(1, 0), Context::pair((0, 1), (1, 1))]);
        assert!(s.validate(&order, &space).is_err());
    }

    #[test]
    fn canonical_stage_order() {
        let s =
            Staging::new(2, vec![Context::pair((0, 1), (1, 0)), Context::single(1, 1), Context::pair((0, 0), (1, 0))]);
        let ctx: Vec<String> = s.contexts().map(|c| c.to_string()).collect();
        assert_eq!(ctx, vec!["{1=1}", "{0=0,1=0}", "{0=1,1=0}"]);
        let again =
            Staging::new(2, vec![Context::pair((0, 0), (1, 0)), Context::pair((0, 1), (1, 0)), Context::single(1, 1)]);
        assert_eq!(s, again);
        assert_eq!(s.to_string(), again.to_string());
    }

    #[test]
    fn saturated_staging() {
        let order = Order::new(vec![1, 0, 2]).unwrap();
        let space = StateSpace::new(vec![2, 3, 2]).unwrap();
        let s = Staging::saturated(2, &order, &space);
        assert_eq!(s.len(), 6);
        s.validate(&order, &space).unwrap();
        assert_eq!(s.max_context_size(), 2);
    }

    #[test]
    fn conflicts() {
        assert!(Context::single(0, 0).conflicts_with(&Context::pair((0, 1), (2, 0))));
        assert!(!Context::single(0, 0).conflicts_with(&Context::single(1, 0)));
        assert!(!Context::empty().conflicts_with(&Context::single(1, 0)));
    }
}
