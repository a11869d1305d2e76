use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cstree::ldag::export_dot;
use cstree::model_ops::{RandomTheta, DEFAULT_KL_CAP};
use cstree::order_mcmc::{chain_rng, InitOrder};
use cstree::scoring::{build_score_tables, LosMethod, DEFAULT_MAX_POSSIBLE_PARENTS};
use cstree::staging_enum::{count_cstrees, count_stagings, enumerate_stagings, EnumSpec};
use cstree::suffstats::CardsRow;
use cstree::{
    kl_divergence, learn, load_csv, log_order_score, random_cstree, sample, to_ldag, CStree, ChainConfig, CsvOptions,
    Dataset, Error, Estimator, Execution, LearnConfig, Order, PossibleParents, PriorScheme, PriorSpec, ScoreConfig,
    StateSpace,
};

#[derive(Parser)]
#[command(name = "cstree", version, about = "Learn, sample and inspect context-specific trees (CStrees)")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run every parallel stage sequentially.
    #[arg(long, global = true)]
    sequential: bool,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a CStree from a CSV of categorical data.
    Learn(LearnArgs),
    /// Draw samples from a parameterized model.
    Sample(SampleArgs),
    /// Exact KL divergence between two parameterized models.
    Kl(KlArgs),
    /// Count or list the admissible stagings of one level.
    Enumerate(EnumerateArgs),
    /// Generate a random CStree.
    Generate(GenerateArgs),
    /// Convert a model to its labeled DAG.
    Ldag(LdagArgs),
    /// Score a variable order against data.
    Score(ScoreArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    BdeuPath,
    Unit,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Map,
    Mle,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum CardsRowArg {
    Auto,
    Present,
    Absent,
}

#[derive(Clone, Copy, ValueEnum)]
enum LosArg {
    Enumerate,
    Factorized,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file: header row of names, optional `#`-prefixed cardinality row, then data.
    #[arg(long)]
    data: PathBuf,

    #[arg(long, value_enum, default_value = "auto")]
    cards_row: CardsRowArg,
}

#[derive(Args)]
struct ScoreOpts {
    /// Context-size bound (0, 1 or 2).
    #[arg(long, default_value_t = 2)]
    beta: usize,

    /// Equivalent sample size of the bdeu-path prior.
    #[arg(long, default_value_t = 1.0)]
    ess: f64,

    #[arg(long, value_enum, default_value = "bdeu-path")]
    prior: PriorArg,

    /// JSON map of possible parents, or a CPDAG with `directed`/`undirected` edge lists.
    #[arg(long)]
    possible_parents: Option<PathBuf>,

    /// Cap on the number of possible parents of any variable.
    #[arg(long, default_value_t = DEFAULT_MAX_POSSIBLE_PARENTS)]
    max_possible_parents: usize,

    #[arg(long, value_enum, default_value = "enumerate")]
    los_method: LosArg,

    /// Write every context evidence as `i <TAB> context <TAB> logz`.
    #[arg(long)]
    dump_scores: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    score: ScoreOpts,

    #[arg(long, default_value_t = cstree::order_mcmc::DEFAULT_ITERATIONS)]
    iterations: usize,

    /// Default: 20% of the iterations.
    #[arg(long)]
    burn_in: Option<usize>,

    #[arg(long, default_value_t = 1)]
    thin: usize,

    #[arg(long)]
    seed: Option<u64>,

    /// Start the chain from this order (comma-separated variable indices).
    #[arg(long, value_delimiter = ',')]
    init_order: Option<Vec<usize>>,

    #[arg(long, value_enum, default_value = "map")]
    estimator: EstimatorArg,

    #[arg(long)]
    out: PathBuf,

    /// Write the recorded chain as `iter <TAB> logscore <TAB> order`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,

    #[arg(short = 'n', long = "n")]
    n: usize,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    p: PathBuf,

    #[arg(long)]
    q: PathBuf,

    /// Also print KL(q || p).
    #[arg(long)]
    both_directions: bool,

    /// Largest joint outcome count evaluated exhaustively.
    #[arg(long, default_value_t = DEFAULT_KL_CAP)]
    cap: u64,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Cardinalities of the variables preceding the level.
    #[arg(long, value_delimiter = ',', required = true)]
    cards: Vec<usize>,

    #[arg(long, default_value_t = 2)]
    beta: usize,

    /// Usable context variables (indices into --cards); default all.
    #[arg(long, value_delimiter = ',')]
    usable: Option<Vec<usize>>,

    #[arg(long)]
    count_only: bool,

    /// Count whole CStrees over variables with these cardinalities instead.
    #[arg(long, conflicts_with_all = ["usable", "count_only"])]
    trees: bool,

    /// With --trees: sum over all variable orders.
    #[arg(long, requires = "trees")]
    all_orders: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    cards: Vec<usize>,

    #[arg(long, default_value_t = 2)]
    beta: usize,

    #[arg(long)]
    seed: Option<u64>,

    /// Leave the stage distributions out.
    #[arg(long)]
    no_params: bool,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LdagArgs {
    #[arg(long)]
    model: PathBuf,

    /// DOT output file (printed to stdout when neither output is given).
    #[arg(long)]
    dot: Option<PathBuf>,

    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    score: ScoreOpts,

    /// Comma-separated variable order; every order is scored when omitted (p <= 8).
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
}

/// `println!` that reports write failures instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*)?
    };
}

fn is_broken_pipe(error: &anyhow::Error) -> bool {
    error.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn exit_code(error: &anyhow::Error) -> u8 {
    match error.downcast_ref::<Error>() {
        Some(e) if e.is_resource() => 3,
        Some(_) => 2,
        None => 1,
    }
}

/// Formats like C's `%.12g`.
fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let fixed = format!("{x:.*}", (11 - exp) as usize);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(anyhow!("file not found: {}", path.display()))
    }
}

fn load_model(path: &Path) -> Result<CStree> {
    require_file(path)?;
    Ok(CStree::load(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    require_file(&args.data)?;
    let options = CsvOptions {
        cards_row: match args.cards_row {
            CardsRowArg::Auto => CardsRow::Auto,
            CardsRowArg::Present => CardsRow::Present,
            CardsRowArg::Absent => CardsRow::Absent,
        },
        ..CsvOptions::default()
    };
    let (data, report) = load_csv(&args.data, &options)?;
    info!("loaded {} rows x {} variables ({} dropped)", data.num_rows(), data.num_vars(), report.dropped_rows);
    Ok(data)
}

fn score_config(opts: &ScoreOpts) -> Result<ScoreConfig> {
    let prior = PriorSpec {
        scheme: match opts.prior {
            PriorArg::BdeuPath => PriorScheme::BdeuPath,
            PriorArg::Unit => PriorScheme::Unit,
        },
        ess: opts.ess,
    };
    prior.validate()?;
    Ok(ScoreConfig {
        beta: opts.beta,
        prior,
        max_possible_parents: opts.max_possible_parents,
        method: match opts.los_method {
            LosArg::Enumerate => LosMethod::Enumerate,
            LosArg::Factorized => LosMethod::Factorized,
        },
    })
}

fn possible_parents(opts: &ScoreOpts, p: usize) -> Result<PossibleParents> {
    match &opts.possible_parents {
        Some(path) => {
            require_file(path)?;
            Ok(PossibleParents::load(path, p)?)
        }
        None => Ok(PossibleParents::full(p)),
    }
}

fn run_learn(args: LearnArgs, exec: Execution) -> Result<()> {
    let data = load_data(&args.data)?;
    let pp = possible_parents(&args.score, data.num_vars())?;
    let score = score_config(&args.score)?;
    let seed = seed_or_random(args.seed);
    let init = match args.init_order {
        Some(o) => InitOrder::Given(Order::new(o)?),
        None => InitOrder::Random,
    };
    let chain = ChainConfig { iterations: args.iterations, burn_in: args.burn_in, thin: args.thin, seed, init };
    let estimator = match args.estimator {
        EstimatorArg::Map => Some(Estimator::Map),
        EstimatorArg::Mle => Some(Estimator::Mle),
        EstimatorArg::None => None,
    };
    let config = LearnConfig { score, chain, estimator, exec };
    if let Some(path) = &args.score.dump_scores {
        let tables = build_score_tables(&data, &pp, score, exec)?;
        tables.write_dump(BufWriter::new(fs::File::create(path)?))?;
    }
    let start = Instant::now();
    let out = learn(&data, &pp, &config)?;
    info!("learned in {:.2?}", start.elapsed());
    out.tree.save(&args.out)?;
    if let Some(path) = &args.trace {
        out.trace.write_tsv(BufWriter::new(fs::File::create(path)?))?;
    }
    let stdout = io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "order\t{}", out.tree.order())?;
    writeln!(w, "log_score\t{}", num(out.order_score))?;
    Ok(())
}

fn run_sample(args: SampleArgs) -> Result<()> {
    let tree = load_model(&args.model)?;
    let seed = seed_or_random(args.seed);
    let data = sample(&tree, args.n, &mut chain_rng(seed, 0))?;
    data.write_csv(&args.out)?;
    Ok(())
}

fn run_kl(args: KlArgs, exec: Execution) -> Result<()> {
    let p = load_model(&args.p)?;
    let q = load_model(&args.q)?;
    let pq = kl_divergence(&p, &q, args.cap, exec)?;
    if args.both_directions {
        let qp = kl_divergence(&q, &p, args.cap, exec)?;
        outln!("KL(p||q)\t{}", num(pq));
        outln!("KL(q||p)\t{}", num(qp));
    } else {
        outln!("{}", num(pq));
    }
    Ok(())
}

fn run_enumerate(args: EnumerateArgs) -> Result<()> {
    if args.trees {
        let space = StateSpace::new(args.cards.clone())?;
        let order = Order::identity(space.num_vars());
        let n = count_cstrees(&space, args.beta, (!args.all_orders).then_some(&order))?;
        outln!("{n}");
        return Ok(());
    }
    let spec = EnumSpec::from_cards(&args.cards, args.usable.as_deref(), args.beta)?;
    if args.count_only {
        outln!("{}", count_stagings(&spec)?);
        return Ok(());
    }
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    for staging in enumerate_stagings(&spec) {
        writeln!(w, "{staging}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let space = StateSpace::new(args.cards)?;
    let seed = seed_or_random(args.seed);
    let theta = if args.no_params { RandomTheta::None } else { RandomTheta::Dirichlet1 };
    let tree = random_cstree(&space, args.beta, &mut chain_rng(seed, 0), theta)?;
    tree.save(&args.out)?;
    Ok(())
}

fn run_ldag(args: LdagArgs) -> Result<()> {
    let tree = load_model(&args.model)?;
    let ldag = to_ldag(&tree);
    let dot = export_dot(&ldag, None);
    if let Some(path) = &args.json {
        write_text(path, &ldag.to_json()?)?;
    }
    match &args.dot {
        Some(path) => write_text(path, &dot)?,
        None if args.json.is_none() => outln!("{}", dot.trim_end()),
        None => {}
    }
    Ok(())
}

fn run_score(args: ScoreArgs, exec: Execution) -> Result<()> {
    let data = load_data(&args.data)?;
    let p = data.num_vars();
    let pp = possible_parents(&args.score, p)?;
    let tables = build_score_tables(&data, &pp, score_config(&args.score)?, exec)?;
    if let Some(path) = &args.score.dump_scores {
        tables.write_dump(BufWriter::new(fs::File::create(path)?))?;
    }
    let orders = match args.order {
        Some(o) => vec![Order::new(o)?],
        None if p <= 8 => Order::all(p),
        None => {
            return Err(Error::Config(format!("pass --order; {p} variables are too many to score every order")).into())
        }
    };
    for order in orders {
        outln!("{order}\t{}", num(log_order_score(&order, &tables)));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Learn(a) => run_learn(a, exec),
        Command::Sample(a) => run_sample(a),
        Command::Kl(a) => run_kl(a, exec),
        Command::Enumerate(a) => run_enumerate(a),
        Command::Generate(a) => run_generate(a),
        Command::Ldag(a) => run_ldag(a),
        Command::Score(a) => run_score(a, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-1234.5), "-1234.5");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(-123456.7890123456), "-123456.789012");
        assert_eq!(num(1e-7), "1e-07");
        assert_eq!(num(123456789012345.0), "1.23456789012e+14");
        assert_eq!(num(0.0001), "0.0001");
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
