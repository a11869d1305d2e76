//! Enumeration, counting and uniform sampling of sparse stagings.
//!
//! For a context-size bound `beta <= 2` and usable context variables `L`, every
//! admissible staging of a level falls into exactly one of four strata:
//!
//! 1. the trivial staging (one stage, empty context);
//! 2. `{S(x_j) : x_j}` for a single usable variable `j`;
//! 3. pure two-variable stagings: a pivot `k` and, for every value `x_k`, a
//!    second variable `j(x_k) != k` splitting that slice;
//! 4. blended stagings: a pivot `k` where a nonempty proper subset of its
//!    values is split by a second variable and the rest stay whole.
//!
//! Stratum 3 stagings whose second variable is constant are the "parent set"
//! stagings `{S(x_j x_k)}`; they are produced once, under the smaller pivot.
//! With `m = |L|` the strata have sizes `1`, `m`,
//! `C(m,2) + sum_k ((m-1)^d_k - (m-1))` and `sum_k (m^d_k - (m-1)^d_k - 1)`,
//! adding up to `1 - C(m,2) + sum_k m^d_k`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::context::{Context, Staging};
use crate::error::{Error, Result};
use crate::space::{Order, StateSpace};

/// Largest supported context-size bound.
pub const MAX_BETA: usize = 2;

pub(crate) fn check_beta(beta: usize) -> Result<()> {
    if beta > MAX_BETA {
        Err(Error::UnsupportedBound(beta))
    } else {
        Ok(())
    }
}

/// The set of stagings of one level with contexts drawn from `usable`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumSpec {
    pub level: usize,
    /// Usable context variables, sorted ascending.
    pub usable: Vec<usize>,
    /// Cardinalities of `usable`, parallel to it.
    pub usable_cards: Vec<usize>,
    pub beta: usize,
}

impl EnumSpec {
    /// Spec for `level`, with context variables restricted to `usable` (all
    /// assumed to precede the level in whatever order governs it).
    pub fn new(level: usize, usable: &[usize], space: &StateSpace, beta: usize) -> Result<Self> {
        check_beta(beta)?;
        let mut usable = usable.to_vec();
        usable.sort_unstable();
        usable.dedup();
        if usable.len() > level {
            return Err(Error::Config(format!("{} usable variables cannot precede level {level}", usable.len())));
        }
        if let Some(&v) = usable.iter().find(|&&v| v >= space.num_vars()) {
            return Err(Error::Config(format!("usable variable {v} out of range")));
        }
        let usable_cards = usable.iter().map(|&v| space.card(v)).collect();
        Ok(EnumSpec { level, usable, usable_cards, beta })
    }

    /// Level `position` of `order` with every predecessor usable.
    pub fn full(order: &Order, position: usize, space: &StateSpace, beta: usize) -> Result<Self> {
        Self::new(position, order.predecessors(position), space, beta)
    }

    /// Level `cards.len()` over variables `0..cards.len()` with the given cardinalities.
    pub fn from_cards(cards: &[usize], usable: Option<&[usize]>, beta: usize) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::Config("at least one cardinality is required".into()));
        }
        let space = StateSpace::new(cards.to_vec())?;
        let all: Vec<usize> = (0..cards.len()).collect();
        Self::new(cards.len(), usable.unwrap_or(&all), &space, beta)
    }

    pub fn num_usable(&self) -> usize {
        self.usable.len()
    }

    pub fn shapes(&self) -> ShapeIter {
        ShapeIter::new(self.usable_cards.clone(), self.beta)
    }

    /// Materializes a shape as a staging of this level.
    pub fn to_staging(&self, shape: &StagingShape) -> Staging {
        let var = |local: usize| self.usable[local];
        match shape {
            StagingShape::Trivial => Staging::trivial(self.level),
            StagingShape::Single(j) => Staging::new(
                self.level,
                (0..self.usable_cards[*j]).map(|x| Context::single(var(*j), x)).collect::<Vec<_>>(),
            ),
            StagingShape::Pivot { pivot, refine } => {
                let mut contexts = Vec::new();
                for (xk, r) in refine.iter().enumerate() {
                    match r {
                        None => contexts.push(Context::single(var(*pivot), xk)),
                        Some(j) => contexts.extend(
                            (0..self.usable_cards[*j]).map(|xj| Context::pair((var(*pivot), xk), (var(*j), xj))),
                        ),
                    }
                }
                Staging::new(self.level, contexts)
            }
        }
    }

    /// Per-stratum sizes, in stratum order.
    pub fn stratum_counts(&self) -> [BigUint; 4] {
        let m = self.num_usable();
        let zero = BigUint::zero();
        let one = BigUint::one();
        let s2 = if self.beta >= 1 { BigUint::from(m) } else { zero.clone() };
        if self.beta < 2 || m < 2 {
            return [one, s2, zero.clone(), zero];
        }
        let mb = BigUint::from(m);
        let m1 = BigUint::from(m - 1);
        let mut s3 = BigUint::from(m * (m - 1) / 2);
        let mut s4 = BigUint::zero();
        for &d in &self.usable_cards {
            let d = d as u32;
            let all_m1 = m1.pow(d);
            s3 += &all_m1 - &m1;
            s4 += mb.pow(d) - all_m1 - 1u32;
        }
        [one, s2, s3, s4]
    }
}

/// Compact description of an admissible staging in terms of local usable indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StagingShape {
    Trivial,
    Single(usize),
    /// `refine[x]` is the second variable splitting the pivot slice `x`, if any.
    Pivot {
        pivot: usize,
        refine: Vec<Option<usize>>,
    },
}

impl StagingShape {
    /// Number of stages in the staging.
    pub fn num_stages(&self, usable_cards: &[usize]) -> usize {
        match self {
            StagingShape::Trivial => 1,
            StagingShape::Single(j) => usable_cards[*j],
            StagingShape::Pivot { refine, .. } => refine.iter().map(|r| r.map_or(1, |j| usable_cards[j])).sum(),
        }
    }
}

#[derive(Debug, Clone)]
enum IterState {
    Trivial,
    Single(usize),
    Pure { pivot: usize, digits: Vec<usize>, fresh: bool },
    Blend { pivot: usize, digits: Vec<usize>, fresh: bool },
    Done,
}

/// Lazy iterator over the shapes of `S_{L,beta}` in canonical order.
#[derive(Debug, Clone)]
pub struct ShapeIter {
    cards: Vec<usize>,
    beta: usize,
    state: IterState,
}

/// Odometer step in base `base`; returns false once every combination was visited.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// The `digit`-th usable index other than `pivot`.
fn other(pivot: usize, digit: usize) -> usize {
    if digit < pivot {
        digit
    } else {
        digit + 1
    }
}

impl ShapeIter {
    fn new(cards: Vec<usize>, beta: usize) -> Self {
        ShapeIter { cards, beta, state: IterState::Trivial }
    }

    fn after_singles(&self) -> IterState {
        if self.beta >= 2 && self.cards.len() >= 2 {
            IterState::Pure { pivot: 0, digits: vec![0; self.cards[0]], fresh: true }
        } else {
            IterState::Done
        }
    }
}

impl Iterator for ShapeIter {
    type Item = StagingShape;

    fn next(&mut self) -> Option<StagingShape> {
        let m = self.cards.len();
        loop {
            match &mut self.state {
                IterState::Trivial => {
                    self.state = if self.beta >= 1 && m >= 1 { IterState::Single(0) } else { IterState::Done };
                    return Some(StagingShape::Trivial);
                }
                IterState::Single(j) => {
                    let j = *j;
                    self.state = if j + 1 < m { IterState::Single(j + 1) } else { self.after_singles() };
                    return Some(StagingShape::Single(j));
                }
                IterState::Pure { pivot, digits, fresh } => {
                    if !*fresh && !advance(digits, m - 1) {
                        let next = *pivot + 1;
                        self.state = if next < m {
                            IterState::Pure { pivot: next, digits: vec![0; self.cards[next]], fresh: true }
                        } else {
                            IterState::Blend { pivot: 0, digits: vec![0; self.cards[0]], fresh: true }
                        };
                        continue;
                    }
                    *fresh = false;
                    let k = *pivot;
                    let first = digits[0];
                    if digits.iter().all(|&d| d == first) && other(k, first) < k {
                        // Constant choice j < k: already produced under pivot j.
                        continue;
                    }
                    let refine = digits.iter().map(|&d| Some(other(k, d))).collect();
                    return Some(StagingShape::Pivot { pivot: k, refine });
                }
                IterState::Blend { pivot, digits, fresh } => {
                    if !*fresh && !advance(digits, m) {
                        let next = *pivot + 1;
                        self.state = if next < m {
                            IterState::Blend { pivot: next, digits: vec![0; self.cards[next]], fresh: true }
                        } else {
                            IterState::Done
                        };
                        continue;
                    }
                    *fresh = false;
                    // Digit 0 keeps the slice whole; 1.. pick a refining variable.
                    let whole = digits.iter().filter(|&&d| d == 0).count();
                    if whole == 0 || whole == digits.len() {
                        continue;
                    }
                    let k = *pivot;
                    let refine = digits.iter().map(|&d| (d > 0).then(|| other(k, d - 1))).collect();
                    return Some(StagingShape::Pivot { pivot: k, refine });
                }
                IterState::Done => return None,
            }
        }
    }
}

/// Every admissible staging exactly once, in canonical order.
pub fn enumerate_stagings(spec: &EnumSpec) -> impl Iterator<Item = Staging> + '_ {
    spec.shapes().map(move |shape| spec.to_staging(&shape))
}

/// Closed-form size of `S_{L,beta}`.
pub fn count_stagings(spec: &EnumSpec) -> Result<BigUint> {
    check_beta(spec.beta)?;
    Ok(spec.stratum_counts().into_iter().sum())
}

/// Number of trees with every level bounded by `beta`, for one order or summed over all orders.
pub fn count_cstrees(space: &StateSpace, beta: usize, fixed_order: Option<&Order>) -> Result<BigUint> {
    check_beta(beta)?;
    let p = space.num_vars();
    if let Some(order) = fixed_order {
        if order.len() != p {
            return Err(Error::InvalidOrder(format!("order has {} variables, space has {p}", order.len())));
        }
        let mut total = BigUint::one();
        for level in 1..p {
            total *= count_stagings(&EnumSpec::full(order, level, space, beta)?)?;
        }
        return Ok(total);
    }
    count_all_orders(space, beta)
}

/// Sum over orders of the product of level counts.
///
/// Level counts depend only on the multiset of cardinalities already placed,
/// so the sum is a dynamic program over multiplicity vectors: with `g(c)` the
/// total for placing a multiset `c`, the last placed variable has some
/// cardinality `d`, giving `g(c) = sum_d c_d * g(c - e_d) * Z(c - e_d)`.
fn count_all_orders(space: &StateSpace, beta: usize) -> Result<BigUint> {
    let mut distinct: Vec<usize> = space.cards().to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mult: Vec<usize> = distinct.iter().map(|d| space.cards().iter().filter(|&&c| c == *d).count()).collect();

    let level_count = |counts: &[usize]| -> BigUint {
        let cards: Vec<usize> = distinct.iter().zip(counts).flat_map(|(&d, &n)| std::iter::repeat_n(d, n)).collect();
        let m = cards.len();
        let spec = EnumSpec { level: m, usable: (0..m).collect(), usable_cards: cards, beta };
        spec.stratum_counts().into_iter().sum()
    };

    // Mixed-radix index over multiplicity vectors, processed by total size.
    let radix: Vec<usize> = mult.iter().map(|&n| n + 1).collect();
    let states: usize = radix.iter().product();
    let decode = |mut idx: usize| -> Vec<usize> {
        radix
            .iter()
            .map(|&r| {
                let c = idx % r;
                idx /= r;
                c
            })
            .collect()
    };
    let encode = |counts: &[usize]| -> usize { counts.iter().zip(&radix).rev().fold(0, |acc, (&c, &r)| acc * r + c) };
    let mut by_size: Vec<usize> = (0..states).collect();
    by_size.sort_by_key(|&i| decode(i).iter().sum::<usize>());

    let mut g = vec![BigUint::zero(); states];
    for idx in by_size {
        let counts = decode(idx);
        let size: usize = counts.iter().sum();
        if size == 0 {
            continue;
        }
        if size == 1 {
            g[idx] = BigUint::one();
            continue;
        }
        let mut acc = BigUint::zero();
        for t in 0..counts.len() {
            if counts[t] == 0 {
                continue;
            }
            let mut prev = counts.clone();
            prev[t] -= 1;
            let prev_idx = encode(&prev);
            acc += &g[prev_idx] * level_count(&prev) * BigUint::from(counts[t]);
        }
        g[idx] = acc;
    }
    Ok(g[encode(&mult)].clone())
}

/// Largest possible number of stages at a level: the product of the two
/// largest cardinalities among its variables (a single cardinality at level 1).
pub fn max_stage_count(level_cards: &[usize]) -> usize {
    let mut sorted = level_cards.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    match sorted.as_slice() {
        [] => 1,
        [d] => *d,
        [a, b, ..] => a * b,
    }
}

/// Draws a staging uniformly from `S_{L,beta}`.
pub fn sample_staging_uniform<R: Rng + ?Sized>(spec: &EnumSpec, rng: &mut R) -> Result<Staging> {
    Ok(spec.to_staging(&sample_shape_uniform(spec, rng)?))
}

/// Draws a shape uniformly: stratum by closed-form size, then uniformly within it.
pub fn sample_shape_uniform<R: Rng + ?Sized>(spec: &EnumSpec, rng: &mut R) -> Result<StagingShape> {
    check_beta(spec.beta)?;
    let counts = spec.stratum_counts();
    let total: BigUint = counts.iter().sum();
    let mut r = rng.gen_biguint_below(&total);
    let mut stratum = 0;
    while r >= counts[stratum] {
        r -= &counts[stratum];
        stratum += 1;
    }
    let m = spec.num_usable();
    let cards = &spec.usable_cards;
    let shape = match stratum {
        0 => StagingShape::Trivial,
        1 => StagingShape::Single(r.to_usize().expect("index below |L|")),
        2 => {
            let pairs = BigUint::from(m * (m - 1) / 2);
            if r < pairs {
                let (j, k) = unrank_pair(r.to_usize().expect("pair index fits"), m);
                StagingShape::Pivot { pivot: j, refine: vec![Some(k); cards[j]] }
            } else {
                r -= pairs;
                let m1 = BigUint::from(m - 1);
                let pivot = pick_block(&mut r, cards, |d| m1.pow(d as u32) - &m1);
                let refine = loop {
                    let f: Vec<usize> = (0..cards[pivot]).map(|_| rng.gen_range(0..m - 1)).collect();
                    if f.iter().any(|&d| d != f[0]) {
                        break f.into_iter().map(|d| Some(other(pivot, d))).collect();
                    }
                };
                StagingShape::Pivot { pivot, refine }
            }
        }
        _ => {
            let (mb, m1) = (BigUint::from(m), BigUint::from(m - 1));
            let pivot = pick_block(&mut r, cards, |d| mb.pow(d as u32) - m1.pow(d as u32) - 1u32);
            let refine = loop {
                let f: Vec<usize> = (0..cards[pivot]).map(|_| rng.gen_range(0..m)).collect();
                let whole = f.iter().filter(|&&d| d == 0).count();
                if whole > 0 && whole < f.len() {
                    break f.into_iter().map(|d| (d > 0).then(|| other(pivot, d - 1))).collect();
                }
            };
            StagingShape::Pivot { pivot, refine }
        }
    };
    Ok(shape)
}

/// Locates the block containing rank `r` when block `k` has size `size(cards[k])`.
fn pick_block(r: &mut BigUint, cards: &[usize], size: impl Fn(usize) -> BigUint) -> usize {
    for (k, &d) in cards.iter().enumerate() {
        let s = size(d);
        if *r < s {
            return k;
        }
        *r -= s;
    }
    unreachable!("rank exceeds stratum size")
}

fn unrank_pair(mut r: usize, m: usize) -> (usize, usize) {
    for j in 0..m {
        let row = m - 1 - j;
        if r < row {
            return (j, j + 1 + r);
        }
        r -= row;
    }
    unreachable!("pair rank out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn count(cards: &[usize], usable: Option<&[usize]>, beta: usize) -> (usize, u64) {
        let spec = EnumSpec::from_cards(cards, usable, beta).unwrap();
        let n = enumerate_stagings(&spec).count();
        (n, count_stagings(&spec).unwrap().to_u64().unwrap())
    }

    #[test]
    fn small_binary_counts() {
        assert_eq!(count(&[2], None, 2), (2, 2));
        assert_eq!(count(&[2, 2], None, 2), (8, 8));
        assert_eq!(count(&[2, 2, 2], None, 2), (25, 25));
        assert_eq!(count(&[2, 2, 2], Some(&[0]), 2), (2, 2));
        assert_eq!(count(&[2, 2, 2, 2], None, 2), (59, 59));
    }

    #[test]
    fn ternary_level_two() {
        assert_eq!(count(&[3, 3], None, 2), (16, 16));
    }

    #[test]
    fn low_bounds() {
        assert_eq!(count(&[2, 3, 4], None, 0), (1, 1));
        assert_eq!(count(&[2, 3, 4], None, 1), (4, 4));
        assert_eq!(count(&[2, 3, 4], Some(&[]), 2), (1, 1));
    }

    #[test]
    fn beta_three_is_rejected() {
        let err = EnumSpec::from_cards(&[2, 2], None, 3).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBound(3)));
        assert!(err.to_string().contains("open"));
    }

    #[test]
    fn enumerated_stagings_are_distinct_partitions() {
        let space = StateSpace::new(vec![2, 3, 4, 2]).unwrap();
        let order = Order::identity(4);
        let spec = EnumSpec::full(&order, 3, &space, 2).unwrap();
        let max = max_stage_count(&[2, 3, 4]);
        let mut seen = HashSet::new();
        for s in enumerate_stagings(&spec) {
            s.validate(&order, &space).unwrap();
            assert!(s.max_context_size() <= 2);
            assert!(s.len() <= max);
            assert!(seen.insert(s.to_string()));
        }
        assert_eq!(seen.len() as u64, count_stagings(&spec).unwrap().to_u64().unwrap());
    }

    #[test]
    fn shape_stage_counts_match_materialized() {
        let spec = EnumSpec::from_cards(&[2, 3, 4], None, 2).unwrap();
        for shape in spec.shapes() {
            assert_eq!(shape.num_stages(&spec.usable_cards), spec.to_staging(&shape).len());
        }
    }

    #[test]
    fn first_stagings_are_canonical() {
        let spec = EnumSpec::from_cards(&[2, 2], None, 2).unwrap();
        let all: Vec<String> = enumerate_stagings(&spec).map(|s| s.to_string()).collect();
        assert_eq!(all[0], "{}");
        assert_eq!(all[1], "{0=0} {0=1}");
        assert_eq!(all[2], "{1=0} {1=1}");
        assert_eq!(all[3], "{0=0,1=0} {0=0,1=1} {0=1,1=0} {0=1,1=1}");
    }

    #[test]
    fn tree_counts() {
        let space = StateSpace::binary(4).unwrap();
        let fixed = count_cstrees(&space, 2, Some(&Order::identity(4))).unwrap();
        assert_eq!(fixed, BigUint::from(400u32));
        assert_eq!(count_cstrees(&StateSpace::binary(1).unwrap(), 2, None).unwrap(), BigUint::one());
        // Equal cardinalities: every order gives the same product.
        assert_eq!(count_cstrees(&space, 2, None).unwrap(), BigUint::from(400u32 * 24));
    }

    #[test]
    fn all_order_count_matches_brute_force_mixed() {
        let space = StateSpace::new(vec![2, 3, 2, 4]).unwrap();
        let brute: BigUint = Order::all(4).iter().map(|o| count_cstrees(&space, 2, Some(o)).unwrap()).sum();
        assert_eq!(count_cstrees(&space, 2, None).unwrap(), brute);
    }

    #[test]
    fn max_stage_counts() {
        assert_eq!(max_stage_count(&[2, 2, 2, 2]), 4);
        assert_eq!(max_stage_count(&[2, 3, 4]), 12);
        assert_eq!(max_stage_count(&[5]), 5);
        let spec = EnumSpec::from_cards(&[2, 3, 4], None, 2).unwrap();
        let observed = enumerate_stagings(&spec).map(|s| s.len()).max().unwrap();
        assert_eq!(observed, 12);
    }

    #[test]
    fn sampling_stays_in_admissible_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = EnumSpec::from_cards(&[2, 2, 2], Some(&[0]), 2).unwrap();
        let admissible: HashSet<String> = enumerate_stagings(&spec).map(|s| s.to_string()).collect();
        for _ in 0..500 {
            let s = sample_staging_uniform(&spec, &mut rng).unwrap();
            assert!(admissible.contains(&s.to_string()));
        }
        let spec0 = EnumSpec::from_cards(&[2, 2, 2], None, 0).unwrap();
        for _ in 0..20 {
            assert_eq!(sample_staging_uniform(&spec0, &mut rng).unwrap(), Staging::trivial(3));
        }
    }
}
