//! Parameter estimation, sampling, densities, exact KL and random trees.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};

use crate::context::Staging;
use crate::error::{Error, Result};
use crate::par::{map_range, Execution};
use crate::scoring::PriorSpec;
use crate::space::{Order, StateSpace};
use crate::staging_enum::{sample_staging_uniform, EnumSpec};
use crate::suffstats::{compute_counts, Dataset};
use crate::tree::{CStree, StageLocator};

/// Default cap on the joint outcome count for exhaustive KL.
pub const DEFAULT_KL_CAP: u64 = 1 << 25;

const KL_BLOCK: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Mle,
    Map,
}

/// `theta_k = N_k / N`, uniform when `N = 0`.
pub fn mle(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    counts.iter().map(|&n| n as f64 / total as f64).collect()
}

/// Dirichlet posterior mode with pseudo-count `alpha` per category; the
/// posterior mean when the mode is not interior.
pub fn map_estimate(counts: &[u64], alpha: f64) -> Vec<f64> {
    let d = counts.len() as f64;
    let post: Vec<f64> = counts.iter().map(|&n| n as f64 + alpha).collect();
    let total: f64 = post.iter().sum();
    if post.iter().all(|&a| a > 1.0) {
        post.iter().map(|a| (a - 1.0) / (total - d)).collect()
    } else {
        post.iter().map(|a| a / total).collect()
    }
}

/// Fits every stage distribution of `tree` to `data`.
pub fn estimate_parameters(
    tree: &CStree,
    data: &Dataset,
    mode: Estimator,
    prior: &PriorSpec,
    exec: Execution,
) -> Result<CStree> {
    if data.space() != tree.space() {
        return Err(Error::SpaceMismatch(format!(
            "data cardinalities {:?} differ from model cardinalities {:?}",
            data.space().cards(),
            tree.space().cards()
        )));
    }
    let params = map_range(exec, tree.num_vars(), |level| {
        let v = tree.governed_var(level);
        tree.staging(level)
            .contexts()
            .map(|ctx| {
                let counts = compute_counts(data, v, ctx);
                match mode {
                    Estimator::Mle => mle(&counts),
                    Estimator::Map => map_estimate(&counts, prior.alpha(tree.space(), v, ctx)),
                }
            })
            .collect()
    });
    tree.clone().with_params(params)
}

fn require_params(tree: &CStree) -> Result<&[Vec<Vec<f64>>]> {
    tree.params().ok_or_else(|| Error::Config("model has no parameters; estimate or generate them first".into()))
}

fn log_density_with(params: &[Vec<Vec<f64>>], tree: &CStree, locator: &StageLocator<'_>, x: &[usize]) -> f64 {
    let mut s = 0.0;
    for (level, per_level) in params.iter().enumerate() {
        let v = tree.governed_var(level);
        s += per_level[locator.locate(level, x)][x[v]].ln();
        if s == f64::NEG_INFINITY {
            break;
        }
    }
    s
}

/// `log P(x)` for an outcome indexed by variable; `-inf` off the support.
pub fn log_density(tree: &CStree, outcome: &[usize]) -> Result<f64> {
    let params = require_params(tree)?;
    let space = tree.space();
    if outcome.len() != space.num_vars() || outcome.iter().zip(space.cards()).any(|(&x, &d)| x >= d) {
        return Err(Error::InvalidContext(format!("outcome {outcome:?} does not lie in the state space")));
    }
    Ok(log_density_with(params, tree, &tree.locator(), outcome))
}

/// Draws `n` outcomes by forward sampling along the order.
pub fn sample<R: Rng + ?Sized>(tree: &CStree, n: usize, rng: &mut R) -> Result<Dataset> {
    let params = require_params(tree)?;
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let locator = tree.locator();
    let p = tree.num_vars();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = vec![0usize; p];
        for level in 0..p {
            let theta = &params[level][locator.locate(level, &x)];
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut value = theta.len() - 1;
            for (k, &t) in theta.iter().enumerate() {
                acc += t;
                if u < acc {
                    value = k;
                    break;
                }
            }
            while theta[value] == 0.0 && value > 0 {
                value -= 1;
            }
            x[tree.governed_var(level)] = value;
        }
        rows.push(x);
    }
    Ok(Dataset::from_rows(tree.space().clone(), &rows)?
        .with_names(tree.names().map(<[String]>::to_vec))
        .with_labels(tree.labels().map(<[Vec<String>]>::to_vec)))
}

/// Decodes outcome number `index` (last variable fastest).
fn decode(space: &StateSpace, mut index: u64, x: &mut [usize]) {
    for v in (0..space.num_vars()).rev() {
        let d = space.card(v) as u64;
        x[v] = (index % d) as usize;
        index /= d;
    }
}

fn advance(space: &StateSpace, x: &mut [usize]) {
    for v in (0..x.len()).rev() {
        x[v] += 1;
        if x[v] < space.card(v) {
            return;
        }
        x[v] = 0;
    }
}

/// `Sum_x P(x) (log P(x) - log Q(x))` by exhaustive enumeration.
pub fn kl_divergence(p: &CStree, q: &CStree, cap: u64, exec: Execution) -> Result<f64> {
    let space = p.space();
    if space != q.space() {
        return Err(Error::SpaceMismatch(format!(
            "cardinalities {:?} and {:?} differ",
            space.cards(),
            q.space().cards()
        )));
    }
    let (pp, qp) = (require_params(p)?, require_params(q)?);
    let total = match space.joint_size_u64() {
        Some(t) if t <= cap => t,
        _ => {
            return Err(Error::Resource(format!(
                "exhaustive KL needs {} outcomes, above the cap of {cap}",
                space.joint_size()
            )))
        }
    };
    let (pl, ql) = (p.locator(), q.locator());
    let blocks = total.div_ceil(KL_BLOCK) as usize;
    let parts = map_range(exec, blocks, |b| {
        let start = b as u64 * KL_BLOCK;
        let end = (start + KL_BLOCK).min(total);
        let mut x = vec![0usize; space.num_vars()];
        decode(space, start, &mut x);
        let mut s = 0.0;
        for _ in start..end {
            let lp = log_density_with(pp, p, &pl, &x);
            if lp > f64::NEG_INFINITY {
                let lq = log_density_with(qp, q, &ql, &x);
                if lq == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                s += lp.exp() * (lp - lq);
            }
            advance(space, &mut x);
        }
        s
    });
    Ok(parts.into_iter().sum::<f64>().max(0.0))
}

/// Whether to attach flat-Dirichlet stage distributions to a random tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomTheta {
    Dirichlet1,
    None,
}

/// A tree with a uniform order, a uniformly drawn admissible staging per
/// level and, optionally, flat-Dirichlet stage distributions.
pub fn random_cstree<R: Rng + ?Sized>(
    space: &StateSpace,
    beta: usize,
    rng: &mut R,
    theta: RandomTheta,
) -> Result<CStree> {
    let p = space.num_vars();
    let order = Order::random(p, rng);
    let stagings = (0..p)
        .map(|level| sample_staging_uniform(&EnumSpec::full(&order, level, space, beta)?, rng))
        .collect::<Result<Vec<Staging>>>()?;
    let tree = CStree::from_levels(order, space.clone(), stagings)?;
    match theta {
        RandomTheta::None => Ok(tree),
        RandomTheta::Dirichlet1 => {
            let params = (0..p)
                .map(|level| {
                    let d = space.card(tree.governed_var(level));
                    let dir = Dirichlet::new_with_size(1.0, d).expect("d >= 2");
                    (0..tree.staging(level).len()).map(|_| dir.sample(rng)).collect()
                })
                .collect();
            tree.with_params(params)
        }
    }
}
