//! Order MCMC with the Gibbs relocation move.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::{try_map_range, Execution};
use crate::scoring::{log_order_score, ScoreTables};
use crate::space::Order;

pub const DEFAULT_ITERATIONS: usize = 5000;

/// Seeded generator for chain `stream` (stream 0 is the default single chain).
///
/// Each stream is an independent ChaCha8 keystream under the same key, so
/// chains with different stream ids never share random numbers.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InitOrder {
    #[default]
    Random,
    Given(Order),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub iterations: usize,
    /// Defaults to 20% of `iterations`.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    pub init: InitOrder,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { iterations: DEFAULT_ITERATIONS, burn_in: None, thin: 1, seed: 0, init: InitOrder::Random }
    }
}

impl ChainConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 5)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.iterations <= self.burn_in() {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations,
                self.burn_in()
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let InitOrder::Given(order) = &self.init {
            if order.len() != p {
                return Err(Error::InvalidOrder(format!("initial order has {} variables, expected {p}", order.len())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub iter: usize,
    pub order: Order,
    pub log_score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub samples: Vec<TraceSample>,
    /// `relocation_distances[d]`: moves that shifted a variable by `d` positions.
    pub relocation_distances: Vec<u64>,
}

impl ChainTrace {
    /// Writes `iter \t logscore \t order` per recorded sample.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.samples {
            writeln!(w, "{}\t{}\t{}", s.iter, s.log_score, s.order)?;
        }
        Ok(())
    }
}

/// The order with the highest recorded score; the first such sample wins ties.
pub fn map_order(trace: &ChainTrace) -> Result<&TraceSample> {
    let mut best: Option<&TraceSample> = None;
    for s in &trace.samples {
        if best.is_none_or(|b| s.log_score > b.log_score) {
            best = Some(s);
        }
    }
    best.ok_or(Error::EmptyTrace)
}

/// Mutable chain position with per-variable masks and local scores.
#[derive(Debug, Clone)]
pub struct ChainState<'t> {
    tables: &'t ScoreTables,
    perm: Vec<usize>,
    /// Mask over `K_v` of the variables preceding `v`.
    masks: Vec<u32>,
    terms: Vec<f64>,
    score: f64,
}

impl<'t> ChainState<'t> {
    pub fn new(order: &Order, tables: &'t ScoreTables) -> Self {
        let p = order.len();
        let perm = order.as_slice().to_vec();
        let mut masks = vec![0u32; p];
        for k in 0..p {
            let v = perm[k];
            masks[v] = tables.mask_of(v, &perm[..k]);
        }
        let terms: Vec<f64> = (0..p).map(|v| tables.los_mask(v, masks[v])).collect();
        let score = terms.iter().sum();
        ChainState { tables, perm, masks, terms, score }
    }

    pub fn order(&self) -> Order {
        Order::new(self.perm.clone()).expect("chain keeps a permutation")
    }

    pub fn log_score(&self) -> f64 {
        self.score
    }

    /// Scores of the orders obtained by moving the variable at position `k`
    /// to each position `0..p`, by adjacent swaps from the front.
    pub fn relocation_scores(&self, k: usize) -> Vec<f64> {
        let t = self.tables;
        let p = self.perm.len();
        let v = self.perm[k];
        let mut scores = Vec::with_capacity(p);
        // Move v to the front: every earlier u gains v as a predecessor.
        let mut s = self.score;
        let mut mask_v = self.masks[v];
        for &u in &self.perm[..k] {
            s += t.los_mask(u, self.masks[u] | t.bit(u, v)) - self.terms[u];
            mask_v &= !t.bit(v, u);
        }
        s += t.los_mask(v, mask_v) - self.terms[v];
        scores.push(s);
        // Sweep right past every other variable in turn.
        let mut cur_v = t.los_mask(v, mask_v);
        for &u in self.perm.iter().filter(|&&u| u != v) {
            let with_v = self.masks[u] | t.bit(u, v);
            let next_v_mask = mask_v | t.bit(v, u);
            let next_v = t.los_mask(v, next_v_mask);
            s += next_v - cur_v + t.los_mask(u, with_v & !t.bit(u, v)) - t.los_mask(u, with_v);
            mask_v = next_v_mask;
            cur_v = next_v;
            scores.push(s);
        }
        scores
    }

    /// Moves the variable at position `from` to position `to`.
    pub fn relocate(&mut self, from: usize, to: usize) {
        let t = self.tables;
        let v = self.perm.remove(from);
        self.perm.insert(to, v);
        let (lo, hi) = (from.min(to), from.max(to));
        for k in lo..=hi {
            let u = self.perm[k];
            if u == v {
                self.masks[v] = t.mask_of(v, &self.perm[..k]);
            } else if from < to {
                self.masks[u] &= !t.bit(u, v);
            } else {
                self.masks[u] |= t.bit(u, v);
            }
            self.terms[u] = t.los_mask(u, self.masks[u]);
        }
        self.score = self.terms.iter().sum();
    }

    /// One Gibbs relocation: returns `(from, to)`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (usize, usize) {
        let p = self.perm.len();
        if p == 1 {
            return (0, 0);
        }
        let from = rng.gen_range(0..p);
        let scores = self.relocation_scores(from);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let to = WeightedIndex::new(&weights).expect("max weight is 1").sample(rng);
        if to != from {
            self.relocate(from, to);
        }
        (from, to)
    }
}

/// One relocation move from `order`.
pub fn relocation_step<R: Rng + ?Sized>(order: &Order, tables: &ScoreTables, rng: &mut R) -> Order {
    let mut state = ChainState::new(order, tables);
    state.step(rng);
    state.order()
}

/// Runs one chain seeded from `config.seed` (stream 0).
pub fn run_chain(config: &ChainConfig, tables: &ScoreTables) -> Result<ChainTrace> {
    run_chain_with_rng(config, tables, &mut chain_rng(config.seed, 0))
}

pub fn run_chain_with_rng<R: Rng + ?Sized>(
    config: &ChainConfig,
    tables: &ScoreTables,
    rng: &mut R,
) -> Result<ChainTrace> {
    let p = tables.num_vars();
    config.validate(p)?;
    let init = match &config.init {
        InitOrder::Random => Order::random(p, rng),
        InitOrder::Given(order) => order.clone(),
    };
    let mut state = ChainState::new(&init, tables);
    let burn_in = config.burn_in();
    let mut trace = ChainTrace { samples: Vec::new(), relocation_distances: vec![0; p] };
    for iter in 1..=config.iterations {
        let (from, to) = state.step(rng);
        trace.relocation_distances[from.abs_diff(to)] += 1;
        if iter > burn_in && (iter - burn_in - 1).is_multiple_of(config.thin) {
            trace.samples.push(TraceSample { iter, order: state.order(), log_score: state.log_score() });
        }
    }
    Ok(trace)
}

/// Runs `chains` independent chains on streams `0..chains` of `config.seed`.
pub fn run_chains(
    config: &ChainConfig,
    tables: &ScoreTables,
    chains: usize,
    exec: Execution,
) -> Result<Vec<ChainTrace>> {
    try_map_range(exec, chains, |c| run_chain_with_rng(config, tables, &mut chain_rng(config.seed, c as u64)))
}

/// Recomputes the score of every `stride`-th sample and returns the largest absolute discrepancy.
pub fn max_score_drift(trace: &ChainTrace, tables: &ScoreTables, stride: usize) -> f64 {
    trace
        .samples
        .iter()
        .step_by(stride.max(1))
        .map(|s| (log_order_score(&s.order, tables) - s.log_score).abs())
        .fold(0.0, f64::max)
}
