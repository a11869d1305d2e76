//! Learning sparse context-specific trees (CStrees) from categorical data.

pub mod context;
pub mod error;
pub mod ldag;
pub mod learner;
pub mod model_ops;
pub mod order_mcmc;
pub mod par;
pub mod parents;
pub mod scoring;
pub mod space;
pub mod staging_enum;
pub mod suffstats;
pub mod tree;

pub use context::{stage_members, Context, Stage, Staging};
pub use error::{Error, Result};
pub use ldag::{to_ldag, Ldag};
pub use learner::{learn, LearnConfig};
pub use model_ops::{estimate_parameters, kl_divergence, log_density, random_cstree, sample, Estimator};
pub use order_mcmc::{run_chain, ChainConfig, ChainTrace};
pub use par::Execution;
pub use parents::PossibleParents;
pub use scoring::{log_order_score, PriorScheme, PriorSpec, ScoreConfig, ScoreTables};
pub use space::{Order, StateSpace};
pub use suffstats::{load_csv, CountTable, CsvOptions, Dataset};
pub use tree::CStree;
