//! Dirichlet-multinomial context evidences, staging scores and local ordering scores.

use std::io::Write;

use libm::lgamma;
use num_traits::ToPrimitive;

use crate::context::{Context, Staging};
use crate::error::{Error, Result};
use crate::par::{map_range, try_map_range, Execution};
use crate::parents::PossibleParents;
use crate::space::{Order, StateSpace};
use crate::staging_enum::{check_beta, count_stagings, EnumSpec, StagingShape};
use crate::suffstats::{compute_counts, ContextIndex, CountTable, Dataset};

/// Default cap on `|K_i|`; the los table of a variable has `2^|K_i|` entries.
pub const DEFAULT_MAX_POSSIBLE_PARENTS: usize = 16;

/// Hard limit on `|K_i|` imposed by the bitmask representation.
pub const MAX_POSSIBLE_PARENTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorScheme {
    /// `alpha_isk = ess / (d_i * prod_{k in S} d_k)`: the equivalent sample
    /// size spread evenly over the root-to-leaf paths of the level.
    #[default]
    BdeuPath,
    /// `alpha_isk = 1`.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub scheme: PriorScheme,
    pub ess: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { scheme: PriorScheme::BdeuPath, ess: 1.0 }
    }
}

impl PriorSpec {
    pub fn bdeu(ess: f64) -> Result<Self> {
        let prior = PriorSpec { scheme: PriorScheme::BdeuPath, ess };
        prior.validate()?;
        Ok(prior)
    }

    pub fn unit() -> Self {
        PriorSpec { scheme: PriorScheme::Unit, ess: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ess.is_finite() && self.ess > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("equivalent sample size must be positive, got {}", self.ess)))
        }
    }

    /// Per-category pseudo-count for variable `i` in a stage with context `context`.
    pub fn alpha(&self, space: &StateSpace, i: usize, context: &Context) -> f64 {
        match self.scheme {
            PriorScheme::Unit => 1.0,
            PriorScheme::BdeuPath => {
                let cells: f64 = context.vars().map(|v| space.card(v) as f64).product();
                self.ess / (space.card(i) as f64 * cells)
            }
        }
    }
}

/// `log Gamma(A)/Gamma(A + N) * prod_k Gamma(a + N_k)/Gamma(a)` with `A = a * counts.len()`.
pub fn log_dirichlet_multinomial(alpha: f64, counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let a_total = alpha * counts.len() as f64;
    let mut s = lgamma(a_total) - lgamma(a_total + total as f64);
    for &n in counts {
        if n > 0 {
            s += lgamma(alpha + n as f64) - lgamma(alpha);
        }
    }
    s
}

/// `log z_{i, x_S}` for the given counts `N_{i x_S k}`.
pub fn log_context_marginal_likelihood(
    space: &StateSpace,
    i: usize,
    context: &Context,
    counts: &[u64],
    prior: &PriorSpec,
) -> Result<f64> {
    if counts.len() != space.card(i) {
        return Err(Error::SpaceMismatch(format!(
            "{} counts for variable {i} with {} categories",
            counts.len(),
            space.card(i)
        )));
    }
    let z = log_dirichlet_multinomial(prior.alpha(space, i, context), counts);
    if z.is_finite() {
        Ok(z)
    } else {
        Err(Error::Numeric(format!("non-finite evidence for variable {i} in context {context}")))
    }
}

/// `Sum_s log z_{i, x_S}` over the stages of `staging`, counted directly from the data.
pub fn log_staging_evidence(data: &Dataset, i: usize, staging: &Staging, prior: &PriorSpec) -> Result<f64> {
    let mut s = 0.0;
    for ctx in staging.contexts() {
        s += log_context_marginal_likelihood(data.space(), i, ctx, &compute_counts(data, i, ctx), prior)?;
    }
    Ok(s)
}

/// Numerically stable streaming log-sum-exp.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSumExp {
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::default();
    xs.into_iter().for_each(|x| acc.add(x));
    acc.value()
}

/// How `los(i, L)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LosMethod {
    /// Log-sum-exp streamed over every admissible staging.
    #[default]
    Enumerate,
    /// Closed form: the blended and pure stagings of a pivot factor over its values.
    Factorized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub beta: usize,
    pub prior: PriorSpec,
    pub max_possible_parents: usize,
    pub method: LosMethod,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            beta: 2,
            prior: PriorSpec::default(),
            max_possible_parents: DEFAULT_MAX_POSSIBLE_PARENTS,
            method: LosMethod::Enumerate,
        }
    }
}

/// Per-variable evidences arranged for fast staging scores.
#[derive(Debug, Clone, PartialEq)]
struct VarEvidence {
    index: ContextIndex,
    /// `log z` by dense context index.
    logz: Vec<f64>,
    /// `[a][x][b]`: `Sum_{x_b} log z` over the pair contexts refining `a = x` by `b`.
    pair_sums: Vec<Vec<Vec<f64>>>,
}

impl VarEvidence {
    fn single(&self, a: usize, x: usize) -> f64 {
        self.logz[self.index.single(a, x)]
    }

    /// Sum of `log z` over a staging shape whose local indices are mapped to `K_i` by `local`.
    fn shape_score(&self, local: &[usize], shape: &StagingShape) -> f64 {
        match shape {
            StagingShape::Trivial => self.logz[0],
            StagingShape::Single(l) => {
                let a = local[*l];
                (0..self.index.cards()[a]).map(|x| self.single(a, x)).sum()
            }
            StagingShape::Pivot { pivot, refine } => {
                let a = local[*pivot];
                refine
                    .iter()
                    .enumerate()
                    .map(|(x, r)| match r {
                        None => self.single(a, x),
                        Some(j) => self.pair_sums[a][x][local[*j]],
                    })
                    .sum()
            }
        }
    }
}

/// Precomputed `log z_{i, x_S}` and `log los(i, L)` for every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTables {
    config: ScoreConfig,
    cards: Vec<usize>,
    vars: Vec<VarEvidence>,
    /// `los[i][mask]`, `mask` a bitset over the local indices of `K_i`.
    los: Vec<Vec<f64>>,
    /// `bits[i * p + u]`: the bit of `u` in masks of variable `i`, or 0 if `u` is not in `K_i`.
    bits: Vec<u32>,
}

impl ScoreTables {
    pub fn build(
        counts: &CountTable,
        space: &StateSpace,
        pp: &PossibleParents,
        config: ScoreConfig,
        exec: Execution,
    ) -> Result<Self> {
        check_beta(config.beta)?;
        config.prior.validate()?;
        let p = space.num_vars();
        if counts.num_vars() != p || pp.num_vars() != p {
            return Err(Error::SpaceMismatch("count table, possible parents and state space disagree".into()));
        }
        if counts.beta() < config.beta {
            return Err(Error::Config(format!(
                "count table built for beta = {}, scores need beta = {}",
                counts.beta(),
                config.beta
            )));
        }
        let cap = config.max_possible_parents.min(MAX_POSSIBLE_PARENTS);
        if let Some(i) = (0..p).find(|&i| pp.of(i).len() > cap) {
            return Err(Error::Resource(format!(
                "variable {i} has {} possible parents, above the cap of {cap}; local ordering scores need \
                 2^|K| table entries per variable, each summing over |S_(K,beta)| stagings (O(p * 2^|K| * \
                 |S_(K,beta)| * d^beta) time)",
                pp.of(i).len()
            )));
        }

        let vars = try_map_range(exec, p, |i| {
            let index = ContextIndex::new(pp.of(i), space, config.beta);
            let logz = index
                .contexts()
                .iter()
                .enumerate()
                .map(|(idx, ctx)| {
                    let c = counts.counts_at(i, idx);
                    log_context_marginal_likelihood(space, i, ctx, c, &config.prior)
                })
                .collect::<Result<Vec<f64>>>()?;
            let m = index.vars().len();
            let mut pair_sums = Vec::new();
            if config.beta >= 2 {
                pair_sums = (0..m)
                    .map(|a| {
                        (0..index.cards()[a])
                            .map(|x| {
                                (0..m)
                                    .map(|b| {
                                        if a == b {
                                            return f64::NEG_INFINITY;
                                        }
                                        (0..index.cards()[b]).map(|y| logz[index.pair(a, x, b, y)]).sum()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
            }
            Ok::<_, Error>(VarEvidence { index, logz, pair_sums })
        })?;

        let mut jobs = Vec::new();
        for (i, v) in vars.iter().enumerate() {
            jobs.extend((0..1u32 << v.index.vars().len()).map(|mask| (i, mask)));
        }
        let values = map_range(exec, jobs.len(), |k| {
            let (i, mask) = jobs[k];
            let local: Vec<usize> = (0..vars[i].index.vars().len()).filter(|b| mask >> b & 1 == 1).collect();
            local_order_score(&vars[i], &local, config.beta, config.method)
        });
        let mut los: Vec<Vec<f64>> = vars.iter().map(|v| Vec::with_capacity(1 << v.index.vars().len())).collect();
        for ((i, _), value) in jobs.iter().zip(values) {
            los[*i].push(value);
        }

        let mut bits = vec![0u32; p * p];
        for (i, v) in vars.iter().enumerate() {
            for (b, &u) in v.index.vars().iter().enumerate() {
                bits[i * p + u] = 1 << b;
            }
        }
        let tables = ScoreTables { config, cards: space.cards().to_vec(), vars, los, bits };
        if let Some((i, _)) = tables.los.iter().enumerate().find(|(_, l)| l.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric(format!("non-finite local ordering score for variable {i}")));
        }
        Ok(tables)
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    pub fn beta(&self) -> usize {
        self.config.beta
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.config.prior
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    /// `K_i`, sorted.
    pub fn possible_parents(&self, i: usize) -> &[usize] {
        self.vars[i].index.vars()
    }

    pub fn num_z_entries(&self, i: usize) -> usize {
        self.vars[i].logz.len()
    }

    pub fn num_los_entries(&self, i: usize) -> usize {
        self.los[i].len()
    }

    pub fn log_z(&self, i: usize, context: &Context) -> Option<f64> {
        self.vars[i].index.index_of(context).map(|idx| self.vars[i].logz[idx])
    }

    /// Mask bit of `u` for variable `i` (0 when `u` is not a possible parent).
    #[inline]
    pub fn bit(&self, i: usize, u: usize) -> u32 {
        self.bits[i * self.cards.len() + u]
    }

    pub fn mask_of(&self, i: usize, vars: &[usize]) -> u32 {
        vars.iter().fold(0, |m, &u| m | self.bit(i, u))
    }

    #[inline]
    pub fn los_mask(&self, i: usize, mask: u32) -> f64 {
        self.los[i][mask as usize]
    }

    /// `log los(i, K_i ∩ preceding)`.
    pub fn los(&self, i: usize, preceding: &[usize]) -> f64 {
        self.los_mask(i, self.mask_of(i, preceding))
    }

    /// `L = K_i ∩ preceding`, sorted.
    pub fn usable(&self, i: usize, preceding: &[usize]) -> Vec<usize> {
        let mut l: Vec<usize> = preceding.iter().copied().filter(|&u| self.bit(i, u) != 0).collect();
        l.sort_unstable();
        l
    }

    /// Enumeration spec for the stagings of variable `i` over `L = K_i ∩ preceding`.
    pub fn enum_spec(&self, i: usize, level: usize, preceding: &[usize]) -> EnumSpec {
        let usable = self.usable(i, preceding);
        let usable_cards = usable.iter().map(|&u| self.cards[u]).collect();
        EnumSpec { level, usable, usable_cards, beta: self.config.beta }
    }

    /// `Sum_s log z` for a staging given by shape over the usable set `usable` of variable `i`.
    pub fn shape_evidence(&self, i: usize, usable: &[usize], shape: &StagingShape) -> f64 {
        let v = &self.vars[i];
        let local: Vec<usize> = usable.iter().map(|&u| v.index.local(u).expect("usable var in K_i")).collect();
        v.shape_score(&local, shape)
    }

    /// Writes `i \t context \t logz` for every stored evidence.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, v) in self.vars.iter().enumerate() {
            for (ctx, z) in v.index.contexts().iter().zip(&v.logz) {
                writeln!(w, "{i}\t{ctx}\t{z}")?;
            }
        }
        Ok(())
    }
}

/// `log los(i, L)` from precomputed evidences; `local` lists `L` as indices into `K_i`.
fn local_order_score(v: &VarEvidence, local: &[usize], beta: usize, method: LosMethod) -> f64 {
    let cards: Vec<usize> = local.iter().map(|&a| v.index.cards()[a]).collect();
    let spec = EnumSpec { level: local.len(), usable: local.to_vec(), usable_cards: cards, beta };
    let log_count = count_stagings(&spec).expect("beta checked").to_f64().expect("finite").ln();
    let evidence = match method {
        LosMethod::Enumerate => {
            let mut acc = LogSumExp::default();
            for shape in spec.shapes() {
                acc.add(v.shape_score(local, &shape));
            }
            acc.value()
        }
        LosMethod::Factorized => factorized_evidence(v, local, beta),
    };
    evidence - log_count
}

/// `log Sum_s prod z` by factorizing over pivot values.
///
/// For pivot `a`, `prod_x (z(a=x) + Sum_{b != a} Z(a=x, b))` sums every map from
/// pivot values to "unrefined or refined by b": the single-variable staging,
/// the pure pair stagings and all blended ones. The pure pair staging on
/// `{a, b}` is reached from both pivots, so one copy per pair is removed.
fn factorized_evidence(v: &VarEvidence, local: &[usize], beta: usize) -> f64 {
    let mut big = LogSumExp::default();
    big.add(v.logz[0]);
    if beta == 0 {
        return big.value();
    }
    let cards = v.index.cards();
    if beta == 1 || local.len() < 2 {
        for &a in local {
            big.add((0..cards[a]).map(|x| v.single(a, x)).sum());
        }
        return big.value();
    }
    let mut pure = LogSumExp::default();
    for (ia, &a) in local.iter().enumerate() {
        let mut q = 0.0;
        for x in 0..cards[a] {
            let mut slice = LogSumExp::default();
            slice.add(v.single(a, x));
            for &b in local.iter().filter(|&&b| b != a) {
                slice.add(v.pair_sums[a][x][b]);
            }
            q += slice.value();
        }
        big.add(q);
        for &b in &local[ia + 1..] {
            pure.add((0..cards[a]).map(|x| v.pair_sums[a][x][b]).sum());
        }
    }
    let (big, pure) = (big.value(), pure.value());
    big + (-(pure - big).exp()).ln_1p()
}

/// `log Sum_s prod z / |S_(L,beta)|` for `staging` of variable `i` with usable set `usable`.
pub fn log_staging_score(tables: &ScoreTables, i: usize, usable: &[usize], staging: &Staging) -> Result<f64> {
    let mut s = 0.0;
    for ctx in staging.contexts() {
        s += tables
            .log_z(i, ctx)
            .ok_or_else(|| Error::MissingScore(format!("no evidence for variable {i} in context {ctx}")))?;
    }
    let spec = EnumSpec {
        level: usable.len(),
        usable: usable.to_vec(),
        usable_cards: usable.iter().map(|&u| tables.cards[u]).collect(),
        beta: tables.beta(),
    };
    Ok(s - count_stagings(&spec)?.to_f64().expect("finite").ln())
}

/// `log los(i, L)` computed on demand by streaming the stagings of `L`.
pub fn log_local_order_score(tables: &ScoreTables, i: usize, usable: &[usize]) -> Result<f64> {
    let v = &tables.vars[i];
    let local = usable
        .iter()
        .map(|&u| {
            v.index.local(u).ok_or_else(|| Error::MissingScore(format!("variable {u} is not a possible parent of {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(local_order_score(v, &local, tables.beta(), LosMethod::Enumerate))
}

/// `Sum_k log los(pi_k, K_{pi_k} ∩ {pi_1 .. pi_(k-1)})`, omitting the order-independent `log(1/p!)`.
pub fn log_order_score(order: &Order, tables: &ScoreTables) -> f64 {
    let p = order.len();
    (0..p).map(|k| tables.los(order.var_at(k), order.predecessors(k))).sum()
}

/// Builds counts and score tables in one go.
pub fn build_score_tables(
    data: &Dataset,
    pp: &PossibleParents,
    config: ScoreConfig,
    exec: Execution,
) -> Result<ScoreTables> {
    let counts = CountTable::build(data, pp, config.beta, exec)?;
    ScoreTables::build(&counts, data.space(), pp, config, exec)
}
