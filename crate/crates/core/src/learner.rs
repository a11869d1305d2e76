//! The end-to-end learner: score tables, order MCMC, then exact per-level staging.

use std::path::Path;

use crate::context::Staging;
use crate::error::Result;
use crate::model_ops::{estimate_parameters, Estimator};
use crate::order_mcmc::{map_order, run_chain, ChainConfig, ChainTrace};
use crate::par::{map_range, Execution};
use crate::parents::PossibleParents;
use crate::scoring::{build_score_tables, ScoreConfig, ScoreTables};
use crate::space::Order;
use crate::suffstats::Dataset;
use crate::tree::CStree;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub score: ScoreConfig,
    pub chain: ChainConfig,
    pub estimator: Option<Estimator>,
    pub exec: Execution,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            score: ScoreConfig::default(),
            chain: ChainConfig::default(),
            estimator: Some(Estimator::Map),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub tree: CStree,
    pub order_score: f64,
    pub trace: ChainTrace,
}

/// Reads a CPDAG or possible-parents JSON file.
pub fn possible_parents_from_cpdag(path: impl AsRef<Path>, p: usize) -> Result<PossibleParents> {
    PossibleParents::load(path, p)
}

/// The staging of `level` (governing variable `var`, usable set `K_var ∩ preceding`)
/// with the largest evidence; the earliest in canonical order wins ties.
pub fn optimal_staging(tables: &ScoreTables, var: usize, level: usize, preceding: &[usize]) -> Staging {
    let spec = tables.enum_spec(var, level, preceding);
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    for shape in spec.shapes() {
        let s = tables.shape_evidence(var, &spec.usable, &shape);
        if best.is_none() || s > best_score {
            best_score = s;
            best = Some(shape);
        }
    }
    spec.to_staging(&best.expect("every level has the trivial staging"))
}

/// Per-level optimal stagings for a fixed order.
pub fn optimal_stagings(tables: &ScoreTables, order: &Order, exec: Execution) -> Vec<Staging> {
    map_range(exec, order.len(), |level| optimal_staging(tables, order.var_at(level), level, order.predecessors(level)))
}

pub fn learn(data: &Dataset, pp: &PossibleParents, config: &LearnConfig) -> Result<LearnOutput> {
    let tables = build_score_tables(data, pp, config.score, config.exec)?;
    let trace = run_chain(&config.chain, &tables)?;
    let best = map_order(&trace)?;
    let (order, order_score) = (best.order.clone(), best.log_score);
    let stagings = optimal_stagings(&tables, &order, config.exec);
    let mut tree = CStree::from_levels(order, data.space().clone(), stagings)?
        .with_names(data.names().map(<[String]>::to_vec))?
        .with_labels(data.labels().map(<[Vec<String>]>::to_vec))?;
    if let Some(mode) = config.estimator {
        tree = estimate_parameters(&tree, data, mode, &config.score.prior, config.exec)?;
    }
    Ok(LearnOutput { tree, order_score, trace })
}
