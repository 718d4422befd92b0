//! Rating files, item-document corpora and per-user train/test splits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, ItemId, Result, UserId};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `UserID::MovieID::Rating::Timestamp`
    MovielensDat,
    /// header-less `user,item,rating[,timestamp]`
    Csv,
}

impl RatingFormat {
    pub fn label(self) -> &'static str {
        match self {
            RatingFormat::MovielensDat => "movielens_dat",
            RatingFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" | "dat" => Ok(RatingFormat::MovielensDat),
            "csv" => Ok(RatingFormat::Csv),
            other => Err(Error::config(format!(
                "unknown rating format `{other}` (expected movielens_dat or csv)"
            ))),
        }
    }
}

/// Sparse user x item explicit ratings, indexed both ways.
///
/// Users and items are kept in ascending id order; `by_user[u]` is sorted by
/// item id and `by_item[i]` by user id. The dense index vectors mirror the
/// same adjacency with positions instead of ids for the similarity kernels.
#[derive(Debug, Clone, Default)]
pub struct RatingDataset {
    records: Vec<RatingRecord>,
    users: Vec<UserId>,
    items: Vec<ItemId>,
    by_user: Vec<Vec<(ItemId, f64)>>,
    by_item: Vec<Vec<(UserId, f64)>>,
    user_items: Vec<Vec<u32>>,
    item_users: Vec<Vec<u32>>,
    duplicates: usize,
}

impl RatingDataset {
    /// Builds the indexes. Later records win over earlier ones with the same
    /// (user, item) pair; the number of dropped records is kept in
    /// [`RatingDataset::duplicates`].
    pub fn from_records(records: impl IntoIterator<Item = RatingRecord>) -> Self {
        let mut latest: BTreeMap<(UserId, ItemId), RatingRecord> = BTreeMap::new();
        let mut duplicates = 0;
        for record in records {
            if latest.insert((record.user, record.item), record).is_some() {
                duplicates += 1;
            }
        }
        let records: Vec<RatingRecord> = latest.into_values().collect();

        let mut users: Vec<UserId> = records.iter().map(|r| r.user).collect();
        users.dedup();
        let mut items: Vec<ItemId> = records.iter().map(|r| r.item).collect();
        items.sort_unstable();
        items.dedup();

        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        let mut user_items = vec![Vec::new(); users.len()];
        let mut item_users = vec![Vec::new(); items.len()];

        let mut user_pos = 0;
        for r in &records {
            while users[user_pos] != r.user {
                user_pos += 1;
            }
            let item_pos = items.binary_search(&r.item).expect("item indexed");
            by_user[user_pos].push((r.item, r.rating));
            by_item[item_pos].push((r.user, r.rating));
            user_items[user_pos].push(item_pos as u32);
            item_users[item_pos].push(user_pos as u32);
        }

        RatingDataset {
            records,
            users,
            items,
            by_user,
            by_item,
            user_items,
            item_users,
            duplicates,
        }
    }

    /// All records, sorted by (user, item).
    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records dropped because a later line rated the same (user, item).
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn user_index(&self, user: UserId) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    pub fn item_index(&self, item: ItemId) -> Option<usize> {
        self.items.binary_search(&item).ok()
    }

    /// A user's (item, rating) pairs sorted by item, empty for unknown users.
    pub fn user_ratings(&self, user: UserId) -> &[(ItemId, f64)] {
        self.user_index(user)
            .map(|u| self.by_user[u].as_slice())
            .unwrap_or(&[])
    }

    /// An item's (user, rating) pairs sorted by user, empty for unknown items.
    pub fn item_ratings(&self, item: ItemId) -> &[(UserId, f64)] {
        self.item_index(item)
            .map(|i| self.by_item[i].as_slice())
            .unwrap_or(&[])
    }

    pub fn rating(&self, user: UserId, item: ItemId) -> Option<f64> {
        let ratings = self.user_ratings(user);
        ratings
            .binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|pos| ratings[pos].1)
    }

    pub(crate) fn ratings_at(&self, user_pos: usize) -> &[(ItemId, f64)] {
        &self.by_user[user_pos]
    }

    /// Item positions rated by the user at `user_pos`, ascending.
    pub(crate) fn item_positions(&self, user_pos: usize) -> &[u32] {
        &self.user_items[user_pos]
    }

    /// User positions that rated the item at `item_pos`, ascending.
    pub(crate) fn user_positions(&self, item_pos: usize) -> &[u32] {
        &self.item_users[item_pos]
    }

    /// Writes header-less `user,item,rating[,timestamp]` lines.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        for r in &self.records {
            match r.timestamp {
                Some(ts) => writeln!(sink, "{},{},{},{}", r.user, r.item, r.rating, ts)?,
                None => writeln!(sink, "{},{},{}", r.user, r.item, r.rating)?,
            }
        }
        sink.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parses a rating stream. Blank lines are ignored.
pub fn parse_ratings<R: Read>(source: R, format: RatingFormat) -> Result<RatingDataset> {
    let reader = BufReader::new(source);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::parse(line_no, "not valid UTF-8"),
            _ => Error::Stream(e),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        records.push(parse_line(line, line_no, format)?);
    }
    let dataset = RatingDataset::from_records(records);
    if dataset.duplicates() > 0 {
        warn!(
            "{} duplicate (user, item) ratings replaced by later lines",
            dataset.duplicates()
        );
    }
    Ok(dataset)
}

pub fn parse_ratings_file(path: &Path, format: RatingFormat) -> Result<RatingDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(file, format)
}

fn parse_line(line: &str, line_no: usize, format: RatingFormat) -> Result<RatingRecord> {
    let fields: Vec<&str> = match format {
        RatingFormat::MovielensDat => line.split("::").collect(),
        RatingFormat::Csv => line.split(',').collect(),
    };
    let timestamp_field = match (format, fields.len()) {
        (RatingFormat::MovielensDat, 4) => Some(fields[3]),
        (RatingFormat::Csv, 3) => None,
        (RatingFormat::Csv, 4) => Some(fields[3]),
        (_, n) => {
            return Err(Error::parse(
                line_no,
                format!("expected {} fields, found {n}", expected_fields(format)),
            ))
        }
    };

    let user = parse_id(fields[0], "user", line_no)?;
    let item = parse_id(fields[1], "item", line_no)?;
    let rating: f64 = fields[2]
        .trim()
        .parse()
        .ok()
        .filter(|r: &f64| r.is_finite())
        .ok_or_else(|| Error::parse(line_no, format!("non-numeric rating `{}`", fields[2])))?;
    if !(MIN_RATING..=MAX_RATING).contains(&rating) {
        return Err(Error::RatingRange {
            line: line_no,
            rating,
        });
    }
    let timestamp = timestamp_field
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|_| Error::parse(line_no, format!("bad timestamp `{t}`")))
        })
        .transpose()?;

    Ok(RatingRecord {
        user,
        item,
        rating,
        timestamp,
    })
}

fn expected_fields(format: RatingFormat) -> &'static str {
    match format {
        RatingFormat::MovielensDat => "4",
        RatingFormat::Csv => "3 or 4",
    }
}

fn parse_id(field: &str, what: &str, line_no: usize) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad {what} id `{field}`")))
}

/// Item documents (plot and genre text) keyed by item id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentCorpus {
    docs: BTreeMap<ItemId, String>,
    skipped: usize,
}

impl DocumentCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty text is not stored.
    pub fn insert(&mut self, item: ItemId, text: impl Into<String>) {
        let text = text.into();
        if text.trim().is_empty() {
            self.skipped += 1;
            return;
        }
        self.docs.insert(item, text);
    }

    pub fn get(&self, item: ItemId) -> Option<&str> {
        self.docs.get(&item).map(String::as_str)
    }

    /// Documents in ascending item order.
    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &str)> {
        self.docs.iter().map(|(&id, text)| (id, text.as_str()))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Entries ignored while loading (bad file names, empty text).
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Items rated in `ratings` that have no document here.
    pub fn undocumented_items(&self, ratings: &RatingDataset) -> Vec<ItemId> {
        ratings
            .items()
            .iter()
            .copied()
            .filter(|item| !self.docs.contains_key(item))
            .collect()
    }
}

impl FromIterator<(ItemId, String)> for DocumentCorpus {
    fn from_iter<I: IntoIterator<Item = (ItemId, String)>>(iter: I) -> Self {
        let mut corpus = DocumentCorpus::new();
        for (item, text) in iter {
            corpus.insert(item, text);
        }
        corpus
    }
}

/// Loads a corpus from a directory of `<item_id>.txt` files or from a TSV
/// file of `item_id<TAB>text` lines.
pub fn load_corpus(path: &Path) -> Result<DocumentCorpus> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        load_corpus_dir(path)
    } else {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        load_corpus_tsv(file)
    }
}

fn load_corpus_dir(dir: &Path) -> Result<DocumentCorpus> {
    let mut corpus = DocumentCorpus::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let Ok(item) = stem.parse::<ItemId>() else {
            warn!("skipping {}: file stem is not an item id", path.display());
            corpus.skipped += 1;
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        corpus.insert(item, text);
    }
    Ok(corpus)
}

pub fn load_corpus_tsv<R: Read>(source: R) -> Result<DocumentCorpus> {
    let mut corpus = DocumentCorpus::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "expected item_id<TAB>text"))?;
        let Ok(item) = id.trim().parse::<ItemId>() else {
            warn!("corpus line {line_no}: `{id}` is not an item id, skipped");
            corpus.skipped += 1;
            continue;
        };
        corpus.insert(item, text);
    }
    Ok(corpus)
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: RatingDataset,
    pub test: RatingDataset,
    pub seed: u64,
    pub fraction: f64,
}

/// Number of a user's ratings that go to train: `fraction * n` rounded half up.
pub fn train_share(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// Per-user random split. Each user's ratings are shuffled by a generator
/// seeded from `(seed, user)`, so a user's split does not depend on which
/// other users are present.
pub fn split_train_test(ds: &RatingDataset, fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut train = Vec::with_capacity(ds.len());
    let mut test = Vec::new();
    let records = ds.records();
    let mut start = 0;
    while start < records.len() {
        let user = records[start].user;
        let end = start + records[start..].partition_point(|r| r.user == user);
        let mut own: Vec<RatingRecord> = records[start..end].to_vec();
        own.shuffle(&mut user_rng(seed, user));
        let cut = train_share(fraction, own.len());
        test.extend_from_slice(&own[cut..]);
        own.truncate(cut);
        train.extend(own);
        start = end;
    }
    Ok(SplitPair {
        train: RatingDataset::from_records(train),
        test: RatingDataset::from_records(test),
        seed,
        fraction,
    })
}

fn user_rng(seed: u64, user: UserId) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&user.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// The columns of a dataset-shape table: users, items, max and mean ratings per user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSummary {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub max_ratings_per_user: usize,
    pub avg_ratings_per_user: f64,
}

impl DatasetSummary {
    pub fn of(ds: &RatingDataset) -> Self {
        let users = ds.num_users();
        DatasetSummary {
            users,
            items: ds.num_items(),
            ratings: ds.len(),
            max_ratings_per_user: ds.by_user.iter().map(Vec::len).max().unwrap_or(0),
            avg_ratings_per_user: if users == 0 {
                0.0
            } else {
                ds.len() as f64 / users as f64
            },
        }
    }
}
