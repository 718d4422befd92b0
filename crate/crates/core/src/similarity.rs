//! User-user and item-item similarity measures.
//!
//! * topic similarity: `exp(-(KL(p||q) + KL(q||p)))` between personas
//! * log-likelihood ratio (G²) over the 2x2 co-occurrence table of two
//!   preference sets, mapped to `[0, 1)` by `1 - 1 / (1 + G²)`
//! * Pearson correlation over co-rated items
//! * hybrid: topic similarity times LLR similarity
//!
//! The pairwise functions are the reference definitions. The
//! [`UserSimilarity`] implementations compute whole rows at once through the
//! inverted index and agree with them bit for bit.

use std::io::Write;

use crate::ingest::RatingDataset;
use crate::persona::{PersonaTable, UserPersona};
use crate::{Error, ItemId, Result, UserId};

/// Persona entries are floored here before taking logarithms.
pub const KL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub value: f64,
    pub defined: bool,
}

impl SimilarityScore {
    pub fn defined(value: f64) -> Self {
        SimilarityScore {
            value,
            defined: true,
        }
    }

    pub fn undefined() -> Self {
        SimilarityScore {
            value: 0.0,
            defined: false,
        }
    }

    /// The value when defined.
    pub fn get(self) -> Option<f64> {
        self.defined.then_some(self.value)
    }
}

/// Floors every entry at [`KL_FLOOR`] and renormalizes.
pub fn floor_distribution(p: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = p.iter().map(|&x| x.max(KL_FLOOR)).collect();
    let sum: f64 = floored.iter().sum();
    floored.into_iter().map(|x| x / sum).collect()
}

/// A floored distribution together with its logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDistribution {
    probs: Vec<f64>,
    logs: Vec<f64>,
}

impl PreparedDistribution {
    pub fn new(p: &[f64]) -> Self {
        let probs = floor_distribution(p);
        let logs = probs.iter().map(|x| x.ln()).collect();
        PreparedDistribution { probs, logs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `KL(p||q) + KL(q||p)`, written as `sum_i (p_i - q_i)(ln p_i - ln q_i)`.
    pub fn symmetric_kl(&self, other: &PreparedDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&self.logs)
            .zip(other.probs.iter().zip(&other.logs))
            .map(|((p, lp), (q, lq))| (p - q) * (lp - lq))
            .sum()
    }
}

/// Symmetric Kullback-Leibler divergence between two topic distributions,
/// after flooring both.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(PreparedDistribution::new(p).symmetric_kl(&PreparedDistribution::new(q)))
}

pub fn topic_similarity(u: &UserPersona, v: &UserPersona) -> SimilarityScore {
    if !u.is_defined() || !v.is_defined() {
        return SimilarityScore::undefined();
    }
    distribution_similarity(Some(&u.distribution), Some(&v.distribution))
}

fn distribution_similarity(p: Option<&[f64]>, q: Option<&[f64]>) -> SimilarityScore {
    match (p, q) {
        (Some(p), Some(q)) => match symmetric_kl(p, q) {
            Ok(kl) => SimilarityScore::defined((-kl).exp()),
            Err(_) => SimilarityScore::undefined(),
        },
        _ => SimilarityScore::undefined(),
    }
}

/// Pearson correlation of two rating vectors (each sorted by item) over
/// their co-rated items, centering on the co-rated means.
pub fn pearson_of(a: &[(ItemId, f64)], b: &[(ItemId, f64)]) -> SimilarityScore {
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                pairs.push((a[i].1, b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    if pairs.len() < 2 {
        return SimilarityScore::undefined();
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return SimilarityScore::undefined();
    }
    SimilarityScore::defined((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_similarity(u: UserId, v: UserId, train: &RatingDataset) -> SimilarityScore {
    pearson_of(train.user_ratings(u), train.user_ratings(v))
}

/// G² statistic of a 2x2 contingency table,
/// `2 * sum_cells k * ln(k * N / (row * col))` with `0 ln 0 = 0`,
/// clamped at zero. Each cell at its expected count contributes exactly 0.
pub fn log_likelihood_ratio(k11: u64, k12: u64, k21: u64, k22: u64) -> f64 {
    let [k11, k12, k21, k22] = canonical_table([k11, k12, k21, k22]);
    let n = k11 + k12 + k21 + k22;
    let rows = [k11 + k12, k21 + k22];
    let cols = [k11 + k21, k12 + k22];
    let cell = |k: u64, row: u64, col: u64| {
        if k == 0 {
            0.0
        } else {
            let k_f = k as f64;
            k_f * ((k_f * n as f64) / (row as f64 * col as f64)).ln()
        }
    };
    let g2 = 2.0
        * (cell(k11, rows[0], cols[0])
            + cell(k12, rows[0], cols[1])
            + cell(k21, rows[1], cols[0])
            + cell(k22, rows[1], cols[1]));
    g2.max(0.0)
}

/// The smallest of the eight row/column swaps and transposes of a 2x2
/// table. G² is invariant under all of them, so equal statistics come out
/// bitwise equal.
fn canonical_table(t: [u64; 4]) -> [u64; 4] {
    let [a, b, c, d] = t;
    [
        [a, b, c, d],
        [a, c, b, d],
        [b, a, d, c],
        [b, d, a, c],
        [c, a, d, b],
        [c, d, a, b],
        [d, b, c, a],
        [d, c, b, a],
    ]
    .into_iter()
    .min()
    .expect("non-empty")
}

/// LLR similarity of two sets of sizes `size_a` and `size_b` sharing
/// `overlap` elements in a universe of `universe` elements.
pub fn llr_from_counts(overlap: u64, size_a: u64, size_b: u64, universe: u64) -> f64 {
    let k12 = size_a - overlap;
    let k21 = size_b - overlap;
    let k22 = universe.saturating_sub(overlap + k12 + k21);
    let g2 = log_likelihood_ratio(overlap, k12, k21, k22);
    1.0 - 1.0 / (1.0 + g2)
}

fn sorted_overlap(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// LLR over the users' item sets; the universe is every item in `train`.
pub fn llr_similarity(u: UserId, v: UserId, train: &RatingDataset) -> SimilarityScore {
    let items = |user| {
        train
            .user_index(user)
            .map(|pos| train.item_positions(pos))
            .unwrap_or(&[])
    };
    let (a, b) = (items(u), items(v));
    SimilarityScore::defined(llr_from_counts(
        sorted_overlap(a, b),
        a.len() as u64,
        b.len() as u64,
        train.num_items() as u64,
    ))
}

/// LLR over the items' rater sets; the universe is every user in `train`.
pub fn item_llr_similarity(i: ItemId, j: ItemId, train: &RatingDataset) -> SimilarityScore {
    let raters = |item| {
        train
            .item_index(item)
            .map(|pos| train.user_positions(pos))
            .unwrap_or(&[])
    };
    let (a, b) = (raters(i), raters(j));
    SimilarityScore::defined(llr_from_counts(
        sorted_overlap(a, b),
        a.len() as u64,
        b.len() as u64,
        train.num_users() as u64,
    ))
}

/// Topic similarity times LLR similarity. When either persona is undefined
/// the LLR similarity is returned alone.
pub fn hybrid_similarity(
    u: UserId,
    v: UserId,
    personas: &PersonaTable,
    train: &RatingDataset,
) -> SimilarityScore {
    let llr = llr_similarity(u, v, train);
    match distribution_similarity(personas.get(u), personas.get(v)).get() {
        Some(topic) => SimilarityScore::defined(topic * llr.value),
        None => llr,
    }
}

/// A user-user similarity usable for neighborhood formation.
pub trait UserSimilarity: Sync {
    fn similarity(&self, u: UserId, v: UserId) -> SimilarityScore;

    /// Scores of `user` against the other users of the training set in
    /// ascending id order. Users whose score is undefined may be omitted.
    fn score_all(&self, user: UserId) -> Vec<(UserId, SimilarityScore)>;
}

fn pairwise_row<S: UserSimilarity + ?Sized>(
    sim: &S,
    user: UserId,
    train: &RatingDataset,
) -> Vec<(UserId, SimilarityScore)> {
    train
        .users()
        .iter()
        .filter(|&&v| v != user)
        .map(|&v| (v, sim.similarity(user, v)))
        .collect()
}

/// Number of co-rated items between `user_pos` and every user position.
fn co_rating_counts(train: &RatingDataset, user_pos: usize) -> Vec<u32> {
    let mut counts = vec![0u32; train.num_users()];
    for &item in train.item_positions(user_pos) {
        for &v in train.user_positions(item as usize) {
            counts[v as usize] += 1;
        }
    }
    counts
}

pub struct LlrSimilarity<'a> {
    train: &'a RatingDataset,
}

impl<'a> LlrSimilarity<'a> {
    pub fn new(train: &'a RatingDataset) -> Self {
        LlrSimilarity { train }
    }

    fn row_values(&self, user_pos: usize) -> Vec<f64> {
        let train = self.train;
        let counts = co_rating_counts(train, user_pos);
        let size_u = train.item_positions(user_pos).len() as u64;
        let universe = train.num_items() as u64;
        counts
            .iter()
            .enumerate()
            .map(|(v, &k11)| {
                llr_from_counts(
                    k11 as u64,
                    size_u,
                    train.item_positions(v).len() as u64,
                    universe,
                )
            })
            .collect()
    }
}

impl UserSimilarity for LlrSimilarity<'_> {
    fn similarity(&self, u: UserId, v: UserId) -> SimilarityScore {
        llr_similarity(u, v, self.train)
    }

    fn score_all(&self, user: UserId) -> Vec<(UserId, SimilarityScore)> {
        let Some(pos) = self.train.user_index(user) else {
            return pairwise_row(self, user, self.train);
        };
        let users = self.train.users();
        self.row_values(pos)
            .into_iter()
            .enumerate()
            .filter(|&(v, _)| v != pos)
            .map(|(v, s)| (users[v], SimilarityScore::defined(s)))
            .collect()
    }
}

pub struct PearsonSimilarity<'a> {
    train: &'a RatingDataset,
}

impl<'a> PearsonSimilarity<'a> {
    pub fn new(train: &'a RatingDataset) -> Self {
        PearsonSimilarity { train }
    }
}

impl UserSimilarity for PearsonSimilarity<'_> {
    fn similarity(&self, u: UserId, v: UserId) -> SimilarityScore {
        pearson_similarity(u, v, self.train)
    }

    /// Only users with at least two co-rated items can score.
    fn score_all(&self, user: UserId) -> Vec<(UserId, SimilarityScore)> {
        let Some(pos) = self.train.user_index(user) else {
            return Vec::new();
        };
        let own = self.train.ratings_at(pos);
        co_rating_counts(self.train, pos)
            .iter()
            .enumerate()
            .filter(|&(v, &k)| v != pos && k >= 2)
            .map(|(v, _)| {
                (
                    self.train.users()[v],
                    pearson_of(own, self.train.ratings_at(v)),
                )
            })
            .collect()
    }
}

/// Personas of the training users, floored and log-transformed once.
struct PreparedPersonas<'a> {
    personas: &'a PersonaTable,
    by_pos: Vec<Option<PreparedDistribution>>,
}

impl<'a> PreparedPersonas<'a> {
    fn new(personas: &'a PersonaTable, train: &RatingDataset) -> Self {
        let by_pos = train
            .users()
            .iter()
            .map(|&u| personas.get(u).map(PreparedDistribution::new))
            .collect();
        PreparedPersonas { personas, by_pos }
    }

    fn row(&self, pos: usize) -> Vec<Option<f64>> {
        match &self.by_pos[pos] {
            None => vec![None; self.by_pos.len()],
            Some(p) => self
                .by_pos
                .iter()
                .map(|q| q.as_ref().map(|q| (-p.symmetric_kl(q)).exp()))
                .collect(),
        }
    }
}

pub struct TopicSimilarity<'a> {
    train: &'a RatingDataset,
    prepared: PreparedPersonas<'a>,
}

impl<'a> TopicSimilarity<'a> {
    pub fn new(personas: &'a PersonaTable, train: &'a RatingDataset) -> Self {
        TopicSimilarity {
            train,
            prepared: PreparedPersonas::new(personas, train),
        }
    }
}

impl UserSimilarity for TopicSimilarity<'_> {
    fn similarity(&self, u: UserId, v: UserId) -> SimilarityScore {
        let personas = self.prepared.personas;
        distribution_similarity(personas.get(u), personas.get(v))
    }

    fn score_all(&self, user: UserId) -> Vec<(UserId, SimilarityScore)> {
        let Some(pos) = self.train.user_index(user) else {
            return pairwise_row(self, user, self.train);
        };
        let users = self.train.users();
        self.prepared
            .row(pos)
            .into_iter()
            .enumerate()
            .filter(|&(v, _)| v != pos)
            .map(|(v, s)| {
                let score = s.map_or_else(SimilarityScore::undefined, SimilarityScore::defined);
                (users[v], score)
            })
            .collect()
    }
}

pub struct HybridSimilarity<'a> {
    train: &'a RatingDataset,
    llr: LlrSimilarity<'a>,
    prepared: PreparedPersonas<'a>,
}

impl<'a> HybridSimilarity<'a> {
    pub fn new(personas: &'a PersonaTable, train: &'a RatingDataset) -> Self {
        HybridSimilarity {
            train,
            llr: LlrSimilarity::new(train),
            prepared: PreparedPersonas::new(personas, train),
        }
    }
}

impl UserSimilarity for HybridSimilarity<'_> {
    fn similarity(&self, u: UserId, v: UserId) -> SimilarityScore {
        hybrid_similarity(u, v, self.prepared.personas, self.train)
    }

    fn score_all(&self, user: UserId) -> Vec<(UserId, SimilarityScore)> {
        let Some(pos) = self.train.user_index(user) else {
            return pairwise_row(self, user, self.train);
        };
        let users = self.train.users();
        let topic = self.prepared.row(pos);
        self.llr
            .row_values(pos)
            .into_iter()
            .zip(topic)
            .enumerate()
            .filter(|&(v, _)| v != pos)
            .map(|(v, (llr, topic))| {
                let value = topic.map_or(llr, |t| t * llr);
                (users[v], SimilarityScore::defined(value))
            })
            .collect()
    }
}

/// Item co-occurrence counts (number of common raters) as sparse rows.
pub struct ItemCooccurrence {
    rows: Vec<Vec<(u32, u32)>>,
    degrees: Vec<u64>,
    num_users: u64,
}

impl ItemCooccurrence {
    pub fn build(train: &RatingDataset) -> Self {
        use rayon::prelude::*;
        let n = train.num_items();
        let rows = (0..n)
            .into_par_iter()
            .map_init(
                || vec![0u32; n],
                |scratch, i| {
                    let mut touched = Vec::new();
                    for &u in train.user_positions(i) {
                        for &j in train.item_positions(u as usize) {
                            if scratch[j as usize] == 0 {
                                touched.push(j);
                            }
                            scratch[j as usize] += 1;
                        }
                    }
                    touched.sort_unstable();
                    touched
                        .into_iter()
                        .map(|j| {
                            let c = std::mem::take(&mut scratch[j as usize]);
                            (j, c)
                        })
                        .collect()
                },
            )
            .collect();
        ItemCooccurrence {
            rows,
            degrees: (0..n)
                .map(|i| train.user_positions(i).len() as u64)
                .collect(),
            num_users: train.num_users() as u64,
        }
    }

    pub fn num_items(&self) -> usize {
        self.rows.len()
    }

    /// Non-zero co-occurrence counts of item position `i`, ascending.
    pub fn row(&self, i: usize) -> &[(u32, u32)] {
        &self.rows[i]
    }

    pub fn degree(&self, i: usize) -> u64 {
        self.degrees[i]
    }

    /// LLR similarity between item positions from a known overlap.
    pub fn llr(&self, overlap: u64, i: usize, j: usize) -> f64 {
        llr_from_counts(overlap, self.degrees[i], self.degrees[j], self.num_users)
    }
}

/// Writes `user_a,user_b,topic,llr,hybrid` for every unordered pair of
/// training users. Undefined topic similarities are left empty.
pub fn write_similarity_dump<W: Write>(
    train: &RatingDataset,
    personas: &PersonaTable,
    mut sink: W,
) -> Result<()> {
    let topic = TopicSimilarity::new(personas, train);
    let llr = LlrSimilarity::new(train);
    writeln!(sink, "user_a,user_b,topic,llr,hybrid")?;
    for &u in train.users() {
        let topic_row = topic.score_all(u);
        let llr_row = llr.score_all(u);
        for ((v, t), (_, l)) in topic_row.iter().zip(&llr_row) {
            if *v <= u {
                continue;
            }
            let hybrid = t.get().map_or(l.value, |t| t * l.value);
            match t.get() {
                Some(t) => writeln!(sink, "{u},{v},{t},{},{hybrid}", l.value)?,
                None => writeln!(sink, "{u},{v},,{},{hybrid}", l.value)?,
            }
        }
    }
    sink.flush()?;
    Ok(())
}
