//! Items and labeled pairwise comparisons.
//!
//! A comparison `(left, right, label)` records one rater judgement: `+1` when
//! `left` was preferred, `-1` when `right` was preferred and `0` when the rater
//! abstained because the two items were too close to call.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV at row {row}: {msg}")]
    Malformed { row: usize, msg: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("self-comparison at row {0}")]
    SelfComparison(usize),
    #[error("label must be -1, 0, or 1 (row {row}, got `{value}`)")]
    BadLabel { row: usize, value: String },
    #[error("empty item name at row {0}")]
    EmptyName(usize),
    #[error("dataset has no comparisons")]
    Empty,
    #[error("item index {index} out of range for {n} items")]
    OutOfRange { index: usize, n: usize },
    #[error("comparison of item {0} with itself")]
    SelfPair(usize),
    #[error("duplicate item name `{0}`")]
    DuplicateName(String),
}

/// Dense 0-based item index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub usize);

impl ItemId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Outcome of a single comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// `y = -1`: the right item was preferred.
    RightPreferred,
    /// `y = 0`: abstention, the items are too close to judge.
    Tie,
    /// `y = +1`: the left item was preferred.
    LeftPreferred,
}

impl Label {
    pub fn value(self) -> i8 {
        match self {
            Label::RightPreferred => -1,
            Label::Tie => 0,
            Label::LeftPreferred => 1,
        }
    }

    pub fn from_value(y: i64) -> Option<Self> {
        match y {
            -1 => Some(Label::RightPreferred),
            0 => Some(Label::Tie),
            1 => Some(Label::LeftPreferred),
            _ => None,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "-1" => Some(Label::RightPreferred),
            "0" => Some(Label::Tie),
            "1" => Some(Label::LeftPreferred),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub left: ItemId,
    pub right: ItemId,
    pub label: Label,
}

impl Comparison {
    pub fn new(left: usize, right: usize, label: Label) -> Result<Self, DataError> {
        if left == right {
            return Err(DataError::SelfPair(left));
        }
        Ok(Comparison {
            left: ItemId(left),
            right: ItemId(right),
            label,
        })
    }
}

/// Bijection between external item names and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemRegistry {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut reg = Self::new();
        for name in names {
            let name = name.into();
            if reg.index.contains_key(&name) {
                return Err(DataError::DuplicateName(name));
            }
            reg.intern(&name);
        }
        Ok(reg)
    }

    /// Names `item0 .. item{n-1}`.
    pub fn anonymous(n: usize) -> Self {
        Self::from_names((0..n).map(|i| format!("item{i}"))).expect("generated names are unique")
    }

    /// Returns the id for `name`, assigning the next free index on first sight.
    pub fn intern(&mut self, name: &str) -> ItemId {
        if let Some(&i) = self.index.get(name) {
            return ItemId(i);
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        ItemId(i)
    }

    pub fn get(&self, name: &str) -> Option<ItemId> {
        self.index.get(name).copied().map(ItemId)
    }

    pub fn name(&self, id: ItemId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Immutable collection of comparisons over a fixed item set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonDataset {
    items: ItemRegistry,
    comparisons: Vec<Comparison>,
}

impl ComparisonDataset {
    pub fn new(items: ItemRegistry, comparisons: Vec<Comparison>) -> Result<Self, DataError> {
        if comparisons.is_empty() {
            return Err(DataError::Empty);
        }
        let n = items.len();
        for c in &comparisons {
            for id in [c.left, c.right] {
                if id.0 >= n {
                    return Err(DataError::OutOfRange { index: id.0, n });
                }
            }
            if c.left == c.right {
                return Err(DataError::SelfPair(c.left.0));
            }
        }
        Ok(ComparisonDataset { items, comparisons })
    }

    /// Dataset over anonymous items `item0..`.
    pub fn from_comparisons(n: usize, comparisons: Vec<Comparison>) -> Result<Self, DataError> {
        Self::new(ItemRegistry::anonymous(n), comparisons)
    }

    /// Convenience constructor from `(left, right, y)` triples.
    pub fn from_triples(n: usize, triples: &[(usize, usize, i64)]) -> Result<Self, DataError> {
        let comparisons = triples
            .iter()
            .enumerate()
            .map(|(row, &(i, j, y))| {
                let label = Label::from_value(y).ok_or_else(|| DataError::BadLabel {
                    row: row + 1,
                    value: y.to_string(),
                })?;
                Comparison::new(i, j, label)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_comparisons(n, comparisons)
    }

    /// Number of items `n`.
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of comparisons `N`.
    pub fn len(&self) -> usize {
        self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn items(&self) -> &ItemRegistry {
        &self.items
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.comparisons.iter().map(|c| c.label)
    }

    /// Same items, different comparisons (used by splitters and resampling).
    pub fn with_comparisons(&self, comparisons: Vec<Comparison>) -> Result<Self, DataError> {
        Self::new(self.items.clone(), comparisons)
    }

    /// Connected components of the comparison graph, each sorted by index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_items();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for c in &self.comparisons {
            let a = find(&mut parent, c.left.0);
            let b = find(&mut parent, c.right.0);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            let k = *slot.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[k].push(i);
        }
        groups
    }
}

/// Column names used when reading a comparison CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub left: String,
    pub right: String,
    pub label: String,
    /// Optional rater column; accepted and ignored.
    pub user: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            left: "left".into(),
            right: "right".into(),
            label: "label".into(),
            user: Some("user".into()),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ComparisonDataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Parses a comparison CSV. Item ids are assigned in order of first appearance.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<ComparisonDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Malformed { row: 0, msg: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(DataError::Empty);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
    };
    let (li, ri, yi) = (col(&schema.left)?, col(&schema.right)?, col(&schema.label)?);

    let mut items = ItemRegistry::new();
    let mut comparisons = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| DataError::Malformed { row, msg: e.to_string() })?;
        let field = |i: usize| {
            record.get(i).ok_or_else(|| DataError::Malformed {
                row,
                msg: format!("expected at least {} fields, found {}", i + 1, record.len()),
            })
        };
        let (left, right, label) = (field(li)?, field(ri)?, field(yi)?);
        if left.is_empty() || right.is_empty() {
            return Err(DataError::EmptyName(row));
        }
        let label = Label::parse(label).ok_or_else(|| DataError::BadLabel {
            row,
            value: label.to_owned(),
        })?;
        if left == right {
            return Err(DataError::SelfComparison(row));
        }
        let l = items.intern(left);
        let r = items.intern(right);
        comparisons.push(Comparison { left: l, right: r, label });
    }
    ComparisonDataset::new(items, comparisons)
}

/// Writes `left,right,label` rows using the registry names.
pub fn write_csv<W: Write>(d: &ComparisonDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    w.write_record(["left", "right", "label"]).map_err(io)?;
    for c in d.comparisons() {
        w.write_record([
            d.items().name(c.left),
            d.items().name(c.right),
            &c.label.value().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(d: &ComparisonDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv(d, std::io::BufWriter::new(file))
}

/// Sparse design row `x = e_right - e_left` as `[(left, -1), (right, +1)]`.
pub fn design_row(c: &Comparison, n: usize) -> Result<[(usize, f64); 2], DataError> {
    for id in [c.left, c.right] {
        if id.0 >= n {
            return Err(DataError::OutOfRange { index: id.0, n });
        }
    }
    Ok([(c.left.0, -1.0), (c.right.0, 1.0)])
}

/// Dense form of [`design_row`].
pub fn design_row_dense(c: &Comparison, n: usize) -> Result<Vec<f64>, DataError> {
    let mut x = vec![0.0; n];
    for (i, v) in design_row(c, n)? {
        x[i] = v;
    }
    Ok(x)
}

/// Per-class label counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub right_preferred: usize,
    pub ties: usize,
    pub left_preferred: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.right_preferred + self.ties + self.left_preferred
    }

    /// `(#y=-1, #y=0, #y=+1)`
    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.right_preferred, self.ties, self.left_preferred)
    }
}

pub fn label_counts(d: &ComparisonDataset) -> LabelCounts {
    d.labels().fold(LabelCounts::default(), |mut acc, y| {
        match y {
            Label::RightPreferred => acc.right_preferred += 1,
            Label::Tie => acc.ties += 1,
            Label::LeftPreferred => acc.left_preferred += 1,
        }
        acc
    })
}
