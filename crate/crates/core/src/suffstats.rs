//! Datasets and the sufficient statistics `N_isk`.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::context::Context;
use crate::error::{Error, Result};
use crate::par::{map_range, Execution};
use crate::parents::PossibleParents;
use crate::space::StateSpace;
use crate::staging_enum::check_beta;

/// Default cap on the number of stored count cells.
pub const DEFAULT_COUNT_CELL_CAP: usize = 1 << 27;

/// An `n x p` sample of category codes, stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    space: StateSpace,
    columns: Vec<Vec<u32>>,
    names: Option<Vec<String>>,
    labels: Option<Vec<Vec<String>>>,
}

impl Dataset {
    pub fn from_rows(space: StateSpace, rows: &[Vec<usize>]) -> Result<Self> {
        let p = space.num_vars();
        if rows.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!("row {r} has {} values, expected {p}", row.len())));
            }
            for (v, &x) in row.iter().enumerate() {
                if x >= space.card(v) {
                    return Err(Error::Data(format!(
                        "row {r}: value {x} out of range for variable {v} with {} categories",
                        space.card(v)
                    )));
                }
                columns[v].push(x as u32);
            }
        }
        Ok(Dataset { space, columns, names: None, labels: None })
    }

    pub fn with_names(mut self, names: Option<Vec<String>>) -> Self {
        self.names = names;
        self
    }

    pub fn with_labels(mut self, labels: Option<Vec<Vec<String>>>) -> Self {
        self.labels = labels;
        self
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn num_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, v: usize) -> &[u32] {
        &self.columns[v]
    }

    pub fn row(&self, r: usize) -> Vec<usize> {
        self.columns.iter().map(|c| c[r] as usize).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.num_rows()).map(|r| self.row(r))
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn labels(&self) -> Option<&[Vec<String>]> {
        self.labels.as_deref()
    }

    /// The same rows in a random order.
    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..self.num_rows()).collect();
        perm.shuffle(rng);
        let columns = self.columns.iter().map(|c| perm.iter().map(|&r| c[r]).collect()).collect();
        Dataset { columns, ..self.clone() }
    }

    /// Writes a header row of names, a `#`-prefixed cardinality row, then the data.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let names: Vec<String> = match &self.names {
            Some(n) => n.clone(),
            None => (0..self.num_vars()).map(|v| format!("X{v}")).collect(),
        };
        w.write_record(&names)?;
        let mut cards: Vec<String> = self.space.cards().iter().map(|d| d.to_string()).collect();
        cards[0].insert(0, '#');
        w.write_record(&cards)?;
        for r in 0..self.num_rows() {
            w.write_record(self.columns.iter().map(|c| c[r].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Whether the second CSV row declares cardinalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CardsRow {
    /// Present iff its first cell starts with `#`.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub cards_row: CardsRow,
    /// Cell values treated as missing (the row is dropped).
    pub missing: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { cards_row: CardsRow::Auto, missing: vec![String::new(), "NA".into(), "?".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_rows: usize,
    /// Variables whose inferred cardinality was raised to 2 because a single value was observed.
    pub constant_columns: Vec<usize>,
}

/// Reads a CSV of categorical data.
///
/// The first row names the variables. An optional second row declares the
/// cardinalities (first cell prefixed with `#` under [`CardsRow::Auto`]).
/// Columns whose cells all parse as non-negative integers are used as codes;
/// other columns are mapped to codes in order of first appearance. Rows with
/// a missing cell are dropped.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<(Dataset, LoadReport)> {
    let path = path.as_ref();
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut records = reader.records();
    let header = records.next().ok_or_else(|| Error::Parse(format!("{} is empty", path.display())))??;
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let p = names.len();
    if p == 0 || names.iter().all(String::is_empty) {
        return Err(Error::Parse("header row is empty".into()));
    }

    let mut raw: Vec<csv::StringRecord> = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != p {
            return Err(Error::Parse(format!("line {} has {} fields, header has {p}", k + 2, rec.len())));
        }
        raw.push(rec);
    }

    let mut declared: Option<Vec<usize>> = None;
    let has_cards = match options.cards_row {
        CardsRow::Present => true,
        CardsRow::Absent => false,
        CardsRow::Auto => raw.first().is_some_and(|r| r.get(0).is_some_and(|c| c.starts_with('#'))),
    };
    if has_cards {
        if raw.is_empty() {
            return Err(Error::Parse("missing cardinality row".into()));
        }
        let rec = raw.remove(0);
        let cards = rec
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let c = if k == 0 { c.trim_start_matches('#').trim() } else { c };
                c.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("cardinality {c:?} of column {k} is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        declared = Some(cards);
    }

    let is_missing = |c: &str| options.missing.iter().any(|m| m == c);
    let total = raw.len();
    let kept: Vec<&csv::StringRecord> = raw.iter().filter(|r| !r.iter().any(is_missing)).collect();
    let dropped = total - kept.len();
    if dropped > 0 {
        warn!("dropped {dropped} of {total} rows with missing values");
    }
    if kept.is_empty() {
        return Err(Error::Data("no complete data rows".into()));
    }

    let mut codes = vec![vec![0usize; p]; kept.len()];
    let mut labels: Vec<Option<Vec<String>>> = vec![None; p];
    for v in 0..p {
        let numeric: Option<Vec<usize>> = kept.iter().map(|r| r[v].parse::<usize>().ok()).collect();
        match numeric {
            Some(vals) => {
                for (row, x) in codes.iter_mut().zip(vals) {
                    row[v] = x;
                }
            }
            None => {
                let mut seen: HashMap<&str, usize> = HashMap::new();
                let mut order: Vec<String> = Vec::new();
                for (row, rec) in codes.iter_mut().zip(&kept) {
                    let cell = &rec[v];
                    let next = seen.len();
                    let code = *seen.entry(cell).or_insert_with(|| {
                        order.push(cell.to_string());
                        next
                    });
                    row[v] = code;
                }
                labels[v] = Some(order);
            }
        }
    }

    let mut constant_columns = Vec::new();
    let cards: Vec<usize> = match declared {
        Some(cards) => {
            for (v, &d) in cards.iter().enumerate() {
                if let Some(r) = codes.iter().position(|row| row[v] >= d) {
                    return Err(Error::Data(format!(
                        "value {} in column {:?} (data row {}) exceeds declared cardinality {d}",
                        codes[r][v],
                        names[v],
                        r + 1
                    )));
                }
            }
            cards
        }
        None => (0..p)
            .map(|v| {
                let observed = codes.iter().map(|row| row[v]).max().unwrap_or(0) + 1;
                let observed = labels[v].as_ref().map_or(observed, |l| l.len());
                if observed < 2 {
                    warn!("column {:?} is constant; assuming 2 categories", names[v]);
                    constant_columns.push(v);
                }
                observed.max(2)
            })
            .collect(),
    };
    let space = StateSpace::new(cards)?;
    let any_labels = labels.iter().any(Option::is_some);
    let labels = any_labels.then(|| {
        labels
            .into_iter()
            .enumerate()
            .map(|(v, l)| l.unwrap_or_else(|| (0..space.card(v)).map(|x| x.to_string()).collect()))
            .collect()
    });
    let data = Dataset::from_rows(space, &codes)?.with_names(Some(names)).with_labels(labels);
    Ok((data, LoadReport { dropped_rows: dropped, constant_columns }))
}

/// `N_ik` over rows agreeing with `context`, for `k = 0..d_i`.
pub fn compute_counts(data: &Dataset, target: usize, context: &Context) -> Vec<u64> {
    let mut counts = vec![0u64; data.space().card(target)];
    let target_col = data.column(target);
    'rows: for r in 0..data.num_rows() {
        for &(v, x) in context.assignments() {
            if data.column(v)[r] as usize != x {
                continue 'rows;
            }
        }
        counts[target_col[r] as usize] += 1;
    }
    counts
}

/// Dense numbering of the contexts `x_S` with `S` a subset of some variable
/// set `K` and `|S| <= beta`: the empty context, then single-variable
/// contexts, then pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextIndex {
    vars: Vec<usize>,
    cards: Vec<usize>,
    beta: usize,
    single_offset: Vec<usize>,
    pair_offset: Vec<usize>,
    len: usize,
}

impl ContextIndex {
    pub fn new(vars: &[usize], space: &StateSpace, beta: usize) -> Self {
        let vars = vars.to_vec();
        let cards: Vec<usize> = vars.iter().map(|&v| space.card(v)).collect();
        let m = vars.len();
        let mut len = 1;
        let mut single_offset = vec![usize::MAX; m];
        let mut pair_offset = vec![usize::MAX; m * m];
        if beta >= 1 {
            for a in 0..m {
                single_offset[a] = len;
                len += cards[a];
            }
        }
        if beta >= 2 {
            for a in 0..m {
                for b in a + 1..m {
                    pair_offset[a * m + b] = len;
                    len += cards[a] * cards[b];
                }
            }
        }
        ContextIndex { vars, cards, beta, single_offset, pair_offset, len }
    }

    /// Number of contexts.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    /// Local position of variable `v` within `K`.
    pub fn local(&self, v: usize) -> Option<usize> {
        self.vars.binary_search(&v).ok()
    }

    #[inline]
    pub fn single(&self, a: usize, x: usize) -> usize {
        self.single_offset[a] + x
    }

    /// Index of the pair context `(a = xa, b = xb)` for local indices `a != b`.
    #[inline]
    pub fn pair(&self, a: usize, xa: usize, b: usize, xb: usize) -> usize {
        let m = self.vars.len();
        if a < b {
            self.pair_offset[a * m + b] + xa * self.cards[b] + xb
        } else {
            self.pair_offset[b * m + a] + xb * self.cards[a] + xa
        }
    }

    pub fn index_of(&self, context: &Context) -> Option<usize> {
        let local = |v: usize| self.local(v);
        match context.assignments() {
            [] => Some(0),
            [(v, x)] if self.beta >= 1 => {
                let a = local(*v)?;
                (*x < self.cards[a]).then(|| self.single(a, *x))
            }
            [(v, x), (w, y)] if self.beta >= 2 => {
                let (a, b) = (local(*v)?, local(*w)?);
                (*x < self.cards[a] && *y < self.cards[b]).then(|| self.pair(a, *x, b, *y))
            }
            _ => None,
        }
    }

    /// All contexts in index order.
    pub fn contexts(&self) -> Vec<Context> {
        let m = self.vars.len();
        let mut out = Vec::with_capacity(self.len);
        out.push(Context::empty());
        if self.beta >= 1 {
            for a in 0..m {
                out.extend((0..self.cards[a]).map(|x| Context::single(self.vars[a], x)));
            }
        }
        if self.beta >= 2 {
            for a in 0..m {
                for b in a + 1..m {
                    for xa in 0..self.cards[a] {
                        for xb in 0..self.cards[b] {
                            out.push(Context::pair((self.vars[a], xa), (self.vars[b], xb)));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Counts `N_isk` for every variable `i` and every context over `K_i` of size at most `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    n: usize,
    beta: usize,
    cards: Vec<usize>,
    index: Vec<ContextIndex>,
    counts: Vec<Vec<u64>>,
}

/// Shape of the data pass for one `(i, S)` pair.
enum Job {
    Empty(usize),
    Single(usize, usize),
    Pair(usize, usize, usize),
}

impl CountTable {
    pub fn build(data: &Dataset, pp: &PossibleParents, beta: usize, exec: Execution) -> Result<Self> {
        Self::build_with_cap(data, pp, beta, exec, DEFAULT_COUNT_CELL_CAP)
    }

    pub fn build_with_cap(
        data: &Dataset,
        pp: &PossibleParents,
        beta: usize,
        exec: Execution,
        cell_cap: usize,
    ) -> Result<Self> {
        check_beta(beta)?;
        let space = data.space();
        let p = space.num_vars();
        if pp.num_vars() != p {
            return Err(Error::Config(format!("possible parents cover {} variables, data has {p}", pp.num_vars())));
        }
        let index: Vec<ContextIndex> = (0..p).map(|i| ContextIndex::new(pp.of(i), space, beta)).collect();
        let cells: usize = index.iter().enumerate().map(|(i, ix)| ix.len() * space.card(i)).sum();
        if cells > cell_cap {
            let d = space.cards().iter().max().copied().unwrap_or(2);
            return Err(Error::Resource(format!(
                "count table needs {cells} cells (about p * C(|K|, beta) * d^beta with p = {p}, |K| <= {}, \
                 beta = {beta}, d = {d}), above the cap of {cell_cap}; supply smaller possible-parent sets \
                 or lower beta",
                pp.alpha()
            )));
        }

        let mut jobs = Vec::new();
        for (i, ix) in index.iter().enumerate() {
            jobs.push(Job::Empty(i));
            let m = ix.vars().len();
            if beta >= 1 {
                jobs.extend((0..m).map(|a| Job::Single(i, a)));
            }
            if beta >= 2 {
                jobs.extend((0..m).flat_map(|a| (a + 1..m).map(move |b| Job::Pair(i, a, b))));
            }
        }

        let n = data.num_rows();
        let blocks = map_range(exec, jobs.len(), |k| {
            let (i, cells, key): (usize, usize, Box<dyn Fn(usize) -> usize>) = match jobs[k] {
                Job::Empty(i) => (i, 1, Box::new(|_| 0)),
                Job::Single(i, a) => {
                    let col = data.column(index[i].vars()[a]);
                    (i, index[i].cards()[a], Box::new(move |r| col[r] as usize))
                }
                Job::Pair(i, a, b) => {
                    let ix = &index[i];
                    let (ca, cb) = (data.column(ix.vars()[a]), data.column(ix.vars()[b]));
                    let db = ix.cards()[b];
                    (i, ix.cards()[a] * db, Box::new(move |r| ca[r] as usize * db + cb[r] as usize))
                }
            };
            let d = space.card(i);
            let target = data.column(i);
            let mut block = vec![0u64; cells * d];
            for r in 0..n {
                block[key(r) * d + target[r] as usize] += 1;
            }
            block
        });

        let mut counts: Vec<Vec<u64>> =
            index.iter().enumerate().map(|(i, ix)| Vec::with_capacity(ix.len() * space.card(i))).collect();
        for (job, block) in jobs.iter().zip(blocks) {
            let i = match *job {
                Job::Empty(i) | Job::Single(i, _) | Job::Pair(i, _, _) => i,
            };
            counts[i].extend(block);
        }
        Ok(CountTable { n, beta, cards: space.cards().to_vec(), index, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn context_index(&self, i: usize) -> &ContextIndex {
        &self.index[i]
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    /// Counts for the context with dense index `idx` of variable `i`.
    #[inline]
    pub fn counts_at(&self, i: usize, idx: usize) -> &[u64] {
        let d = self.cards[i];
        &self.counts[i][idx * d..(idx + 1) * d]
    }

    pub fn counts(&self, i: usize, context: &Context) -> Option<&[u64]> {
        self.index[i].index_of(context).map(|idx| self.counts_at(i, idx))
    }

    /// Number of stored `(i, x_S)` keys.
    pub fn num_keys(&self) -> usize {
        self.index.iter().map(ContextIndex::len).sum()
    }
}
