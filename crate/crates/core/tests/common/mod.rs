//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use cstree::{CStree, Dataset, Order, Staging, StateSpace};

/// A context as sorted `(variable, value)` pairs.
pub type Ctx = Vec<(usize, usize)>;

/// A staging as a sorted set of contexts.
pub type Partition = BTreeSet<Ctx>;

pub fn staging_key(s: &Staging) -> Partition {
    s.contexts().map(|c| c.assignments().to_vec()).collect()
}

/// Every assignment to `vars` with the given cardinalities, last variable fastest.
pub fn assignments(vars: &[usize], cards: &[usize]) -> Vec<Ctx> {
    let mut out = vec![Vec::new()];
    for &v in vars {
        out = out
            .into_iter()
            .flat_map(|a: Ctx| {
                (0..cards[v]).map(move |x| {
                    let mut b = a.clone();
                    b.push((v, x));
                    b
                })
            })
            .collect();
    }
    out
}

fn subsets_up_to(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &it in items {
        let grown: Vec<Vec<usize>> =
            out.iter().filter(|s| s.len() < k).map(|s| [s.clone(), vec![it]].concat()).collect();
        out.extend(grown);
    }
    out
}

/// All partitions of the outcome space of variables `0..cards.len()` into
/// blocks that are each the set of outcomes agreeing with a context over at
/// most `beta` variables of `usable`, found by exact-cover search.
pub fn cube_partitions(cards: &[usize], usable: &[usize], beta: usize) -> BTreeSet<Partition> {
    let level: Vec<usize> = (0..cards.len()).collect();
    let outcomes = assignments(&level, cards);
    let mut candidates: Vec<(Ctx, Vec<usize>)> = Vec::new();
    for s in subsets_up_to(usable, beta) {
        let mut s = s;
        s.sort_unstable();
        for ctx in assignments(&s, cards) {
            let members = outcomes
                .iter()
                .enumerate()
                .filter(|(_, o)| ctx.iter().all(|&(v, x)| o[v].1 == x))
                .map(|(k, _)| k)
                .collect();
            candidates.push((ctx, members));
        }
    }
    let mut found = BTreeSet::new();
    let mut covered = vec![false; outcomes.len()];
    let mut chosen = Vec::new();
    cover(&candidates, &mut covered, &mut chosen, &mut found);
    found
}

fn cover(
    candidates: &[(Ctx, Vec<usize>)],
    covered: &mut Vec<bool>,
    chosen: &mut Vec<Ctx>,
    found: &mut BTreeSet<Partition>,
) {
    let Some(first) = covered.iter().position(|&c| !c) else {
        found.insert(chosen.iter().cloned().collect());
        return;
    };
    for (ctx, members) in candidates {
        if !members.contains(&first) || members.iter().any(|&m| covered[m]) {
            continue;
        }
        members.iter().for_each(|&m| covered[m] = true);
        chosen.push(ctx.clone());
        cover(candidates, covered, chosen, found);
        chosen.pop();
        members.iter().for_each(|&m| covered[m] = false);
    }
}

/// `log (a (a+1) ... (a+n-1))`.
pub fn log_rising(a: f64, n: u64) -> f64 {
    (0..n).map(|t| (a + t as f64).ln()).sum()
}

/// Dirichlet-multinomial evidence written with rising factorials.
pub fn log_evidence(alpha: &[f64], counts: &[u64]) -> f64 {
    let a: f64 = alpha.iter().sum();
    let n: u64 = counts.iter().sum();
    alpha.iter().zip(counts).map(|(&ak, &nk)| log_rising(ak, nk)).sum::<f64>() - log_rising(a, n)
}

/// `ess * |stage| / (|level| * d_i)` with the stage and level sizes counted
/// over the level variables `preceding`.
pub fn bdeu_path_alpha(cards: &[usize], target: usize, preceding: &[usize], ctx: &Ctx, ess: f64) -> f64 {
    let level: f64 = preceding.iter().map(|&v| cards[v] as f64).product();
    let stage: f64 = preceding.iter().filter(|v| !ctx.iter().any(|(c, _)| c == *v)).map(|&v| cards[v] as f64).product();
    ess * stage / (level * cards[target] as f64)
}

pub fn counts_in(data: &Dataset, target: usize, ctx: &Ctx) -> Vec<u64> {
    let mut n = vec![0u64; data.space().card(target)];
    for row in data.rows() {
        if ctx.iter().all(|&(v, x)| row[v] == x) {
            n[row[target]] += 1;
        }
    }
    n
}

/// `log P(data | staging)` for the variable at `level` of `order`, from raw rows.
pub fn log_stage_evidence(data: &Dataset, order: &Order, level: usize, part: &Partition, ess: f64) -> f64 {
    let cards = data.space().cards();
    let target = order.var_at(level);
    let preceding = order.predecessors(level);
    part.iter()
        .map(|ctx| {
            let a = bdeu_path_alpha(cards, target, preceding, ctx, ess);
            log_evidence(&vec![a; cards[target]], &counts_in(data, target, ctx))
        })
        .sum()
}

/// Partitions of level `level` of `order`, relabelled to real variable indices.
pub fn level_partitions(space: &StateSpace, order: &Order, level: usize, beta: usize) -> Vec<Partition> {
    let preceding = order.predecessors(level);
    let cards: Vec<usize> = preceding.iter().map(|&v| space.card(v)).collect();
    let local: Vec<usize> = (0..level).collect();
    cube_partitions(&cards, &local, beta)
        .into_iter()
        .map(|part| {
            part.into_iter()
                .map(|ctx| {
                    let mut c: Ctx = ctx.into_iter().map(|(k, x)| (preceding[k], x)).collect();
                    c.sort_unstable();
                    c
                })
                .collect()
        })
        .collect()
}

/// `log Sum_{s_1..s_p} prod_level P(x | s_level) / |S_level|` over every
/// combination of stagings, computed as a plain sum of products.
pub fn brute_force_log_order_score(data: &Dataset, order: &Order, beta: usize, ess: f64) -> f64 {
    let p = order.len();
    let per_level: Vec<Vec<f64>> = (0..p)
        .map(|level| {
            level_partitions(data.space(), order, level, beta)
                .iter()
                .map(|part| log_stage_evidence(data, order, level, part, ess))
                .collect()
        })
        .collect();
    let shift: f64 = per_level.iter().map(|l| l.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum();
    let mut total = 0.0;
    let mut idx = vec![0usize; p];
    loop {
        let log_prod: f64 = (0..p).map(|l| per_level[l][idx[l]] - (per_level[l].len() as f64).ln()).sum();
        total += (log_prod - shift).exp();
        let mut l = 0;
        loop {
            if l == p {
                return shift + total.ln();
            }
            idx[l] += 1;
            if idx[l] < per_level[l].len() {
                break;
            }
            idx[l] = 0;
            l += 1;
        }
    }
}

/// `P(x)` for every outcome (last variable fastest), by scanning stage contexts.
pub fn joint_table(tree: &CStree) -> Vec<f64> {
    let space = tree.space();
    let all: Vec<usize> = (0..space.num_vars()).collect();
    assignments(&all, space.cards())
        .iter()
        .map(|outcome| {
            let x: Vec<usize> = outcome.iter().map(|&(_, v)| v).collect();
            (0..tree.num_vars())
                .map(|level| {
                    let staging = tree.staging(level);
                    let k = staging
                        .contexts()
                        .position(|c| c.assignments().iter().all(|&(v, val)| x[v] == val))
                        .expect("stages cover the level");
                    tree.stage_probs(level, k).unwrap()[x[tree.governed_var(level)]]
                })
                .product()
        })
        .collect()
}

pub fn outcome_at(space: &StateSpace, mut index: usize) -> Vec<usize> {
    let mut x = vec![0; space.num_vars()];
    for v in (0..space.num_vars()).rev() {
        x[v] = index % space.card(v);
        index /= space.card(v);
    }
    x
}
