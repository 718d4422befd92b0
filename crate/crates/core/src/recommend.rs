//! Top-K recommenders: the hybrid neighborhood algorithm, its topic-only
//! variant, and user-based / item-based CF baselines.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::ingest::{RatingDataset, MIN_RATING};
use crate::persona::PersonaTable;
use crate::similarity::{
    HybridSimilarity, ItemCooccurrence, LlrSimilarity, PearsonSimilarity, TopicSimilarity,
    UserSimilarity,
};
use crate::{Error, ItemId, Result, UserId};

pub const DEFAULT_NEIGHBORS: usize = 30;
/// Any rating counts as liking an item.
pub const DEFAULT_LIKE_THRESHOLD: f64 = MIN_RATING;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub user: UserId,
    /// Sorted by similarity descending, then user id ascending.
    pub neighbors: Vec<(UserId, f64)>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub item: ItemId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub user: UserId,
    /// Sorted by score descending, then item id ascending.
    pub items: Vec<Recommendation>,
}

impl RecommendationList {
    pub fn empty(user: UserId) -> Self {
        RecommendationList {
            user,
            items: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.iter().map(|r| r.item)
    }

    fn from_scored(user: UserId, mut scored: Vec<Recommendation>, k: usize) -> Self {
        scored.sort_by(|a, b| by_score_then_id(a.score, a.item, b.score, b.item));
        scored.truncate(k);
        RecommendationList {
            user,
            items: scored,
        }
    }
}

/// Mantissa bits dropped before scores are compared.
pub const RANK_DROPPED_BITS: u32 = 12;

/// `x` rounded to the nearest value with [`RANK_DROPPED_BITS`] fewer
/// mantissa bits. Scores that differ only by floating-point noise compare
/// equal and fall through to the id tie-break.
pub fn rank_key(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let half = 1u64 << (RANK_DROPPED_BITS - 1);
    let mask = !((1u64 << RANK_DROPPED_BITS) - 1);
    f64::from_bits((x.to_bits() + half) & mask)
}

fn by_score_then_id(sa: f64, ia: u64, sb: f64, ib: u64) -> Ordering {
    rank_key(sb).total_cmp(&rank_key(sa)).then(ia.cmp(&ib))
}

/// The `n` most similar other users. Users with an undefined or
/// non-positive similarity never enter the neighborhood.
pub fn build_neighborhood(
    user: UserId,
    sim: &dyn UserSimilarity,
    train: &RatingDataset,
    n: usize,
) -> NeighborSet {
    if train.user_index(user).is_none() || n == 0 {
        return NeighborSet {
            user,
            neighbors: Vec::new(),
        };
    }
    let mut scored: Vec<(UserId, f64)> = sim
        .score_all(user)
        .into_iter()
        .filter(|&(v, _)| v != user)
        .filter_map(|(v, s)| s.get().filter(|&x| x > 0.0).map(|x| (v, x)))
        .collect();
    scored.sort_by(|a, b| by_score_then_id(a.1, a.0, b.1, b.0));
    scored.truncate(n);
    NeighborSet {
        user,
        neighbors: scored,
    }
}

/// Ranks every item some neighbor liked by the share of the neighborhood
/// that liked it, skipping items the user already rated.
pub fn recommend_neighborhood(
    user: UserId,
    neighbors: &NeighborSet,
    train: &RatingDataset,
    k: usize,
    like_threshold: f64,
) -> RecommendationList {
    if neighbors.is_empty() || k == 0 {
        return RecommendationList::empty(user);
    }
    let mut likes = vec![0u32; train.num_items()];
    let mut touched = Vec::new();
    for &(v, _) in &neighbors.neighbors {
        let Some(pos) = train.user_index(v) else {
            continue;
        };
        for (&item_pos, &(_, rating)) in train.item_positions(pos).iter().zip(train.ratings_at(pos)) {
            if rating >= like_threshold {
                if likes[item_pos as usize] == 0 {
                    touched.push(item_pos);
                }
                likes[item_pos as usize] += 1;
            }
        }
    }
    let size = neighbors.len() as f64;
    let own = train.user_ratings(user);
    let scored = touched
        .into_iter()
        .map(|pos| (train.items()[pos as usize], likes[pos as usize]))
        .filter(|(item, _)| own.binary_search_by_key(item, |&(i, _)| i).is_err())
        .map(|(item, liked)| Recommendation {
            item,
            score: liked as f64 / size,
        })
        .collect();
    RecommendationList::from_scored(user, scored, k)
}

/// Rating-overlap measure for the user-based baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMeasure {
    Pearson,
    LogLikelihood,
}

/// Predicted rating `sum_v s(u,v) r_vi / sum_v |s(u,v)|` over the neighbors
/// that rated `i`.
pub fn predict_user_based(
    user: UserId,
    neighbors: &NeighborSet,
    train: &RatingDataset,
    k: usize,
) -> RecommendationList {
    if neighbors.is_empty() || k == 0 {
        return RecommendationList::empty(user);
    }
    let mut num = vec![0.0f64; train.num_items()];
    let mut den = vec![0.0f64; train.num_items()];
    let mut touched = Vec::new();
    for &(v, s) in &neighbors.neighbors {
        let Some(pos) = train.user_index(v) else {
            continue;
        };
        for (&item_pos, &(_, rating)) in train.item_positions(pos).iter().zip(train.ratings_at(pos)) {
            let i = item_pos as usize;
            if den[i] == 0.0 {
                touched.push(item_pos);
            }
            num[i] += s * rating;
            den[i] += s.abs();
        }
    }
    let own = train.user_ratings(user);
    let scored = touched
        .into_iter()
        .map(|pos| (train.items()[pos as usize], pos as usize))
        .filter(|(item, _)| own.binary_search_by_key(item, |&(i, _)| i).is_err())
        .filter(|&(_, i)| den[i] > 0.0)
        .map(|(item, i)| Recommendation {
            item,
            score: num[i] / den[i],
        })
        .collect();
    RecommendationList::from_scored(user, scored, k)
}

pub fn recommend_user_based(
    user: UserId,
    train: &RatingDataset,
    measure: OverlapMeasure,
    n: usize,
    k: usize,
) -> RecommendationList {
    UserBasedRecommender::new(train, measure, n).recommend(user, k)
}

pub fn recommend_item_based(user: UserId, train: &RatingDataset, k: usize) -> RecommendationList {
    ItemBasedRecommender::new(train).recommend(user, k)
}

pub fn recommend_hybrid(
    user: UserId,
    personas: &PersonaTable,
    train: &RatingDataset,
    n: usize,
    k: usize,
    like_threshold: f64,
) -> RecommendationList {
    let sim = HybridSimilarity::new(personas, train);
    let neighbors = build_neighborhood(user, &sim, train, n);
    recommend_neighborhood(user, &neighbors, train, k, like_threshold)
}

pub fn recommend_topic_only(
    user: UserId,
    personas: &PersonaTable,
    train: &RatingDataset,
    n: usize,
    k: usize,
    like_threshold: f64,
) -> RecommendationList {
    let sim = TopicSimilarity::new(personas, train);
    let neighbors = build_neighborhood(user, &sim, train, n);
    recommend_neighborhood(user, &neighbors, train, k, like_threshold)
}

/// Anything that can produce a top-K list for a user.
pub trait Recommender: Sync {
    fn recommend(&self, user: UserId, k: usize) -> RecommendationList;
}

/// Neighborhood formed under `S`, items ranked by neighborhood like share.
pub struct NeighborhoodRecommender<'a, S> {
    train: &'a RatingDataset,
    similarity: S,
    neighbors: usize,
    like_threshold: f64,
}

impl<'a, S: UserSimilarity> NeighborhoodRecommender<'a, S> {
    pub fn new(train: &'a RatingDataset, similarity: S, neighbors: usize, like_threshold: f64) -> Self {
        NeighborhoodRecommender {
            train,
            similarity,
            neighbors,
            like_threshold,
        }
    }
}

impl<S: UserSimilarity> Recommender for NeighborhoodRecommender<'_, S> {
    fn recommend(&self, user: UserId, k: usize) -> RecommendationList {
        let neighbors = build_neighborhood(user, &self.similarity, self.train, self.neighbors);
        recommend_neighborhood(user, &neighbors, self.train, k, self.like_threshold)
    }
}

pub struct UserBasedRecommender<'a> {
    train: &'a RatingDataset,
    similarity: Box<dyn UserSimilarity + 'a>,
    neighbors: usize,
}

impl<'a> UserBasedRecommender<'a> {
    pub fn new(train: &'a RatingDataset, measure: OverlapMeasure, neighbors: usize) -> Self {
        let similarity: Box<dyn UserSimilarity + 'a> = match measure {
            OverlapMeasure::Pearson => Box::new(PearsonSimilarity::new(train)),
            OverlapMeasure::LogLikelihood => Box::new(LlrSimilarity::new(train)),
        };
        UserBasedRecommender {
            train,
            similarity,
            neighbors,
        }
    }
}

impl Recommender for UserBasedRecommender<'_> {
    fn recommend(&self, user: UserId, k: usize) -> RecommendationList {
        let neighbors = build_neighborhood(user, self.similarity.as_ref(), self.train, self.neighbors);
        predict_user_based(user, &neighbors, self.train, k)
    }
}

/// Item-based CF with LLR item similarity:
/// `sum_j s(i,j) r_uj / sum_j |s(i,j)|` over the user's rated items `j`,
/// zero similarities skipped.
pub struct ItemBasedRecommender<'a> {
    train: &'a RatingDataset,
    cooccurrence: ItemCooccurrence,
}

impl<'a> ItemBasedRecommender<'a> {
    pub fn new(train: &'a RatingDataset) -> Self {
        ItemBasedRecommender {
            train,
            cooccurrence: ItemCooccurrence::build(train),
        }
    }
}

impl Recommender for ItemBasedRecommender<'_> {
    fn recommend(&self, user: UserId, k: usize) -> RecommendationList {
        let train = self.train;
        let Some(pos) = train.user_index(user) else {
            return RecommendationList::empty(user);
        };
        if k == 0 {
            return RecommendationList::empty(user);
        }
        let n_items = train.num_items();
        let rated = train.item_positions(pos);
        let mut is_rated = vec![false; n_items];
        for &j in rated {
            is_rated[j as usize] = true;
        }
        let candidates: Vec<usize> = (0..n_items).filter(|&i| !is_rated[i]).collect();
        if candidates.is_empty() {
            return RecommendationList::empty(user);
        }

        let mut overlap = vec![0u32; n_items];
        let mut num = vec![0.0f64; n_items];
        let mut den = vec![0.0f64; n_items];
        for (&j, &(_, rating)) in rated.iter().zip(train.ratings_at(pos)) {
            let j = j as usize;
            for &(i, c) in self.cooccurrence.row(j) {
                overlap[i as usize] = c;
            }
            for &i in &candidates {
                let s = self.cooccurrence.llr(overlap[i] as u64, i, j);
                if s != 0.0 {
                    num[i] += s * rating;
                    den[i] += s.abs();
                }
            }
            for &(i, _) in self.cooccurrence.row(j) {
                overlap[i as usize] = 0;
            }
        }

        let scored = candidates
            .into_iter()
            .filter(|&i| den[i] > 0.0)
            .map(|i| Recommendation {
                item: train.items()[i],
                score: num[i] / den[i],
            })
            .collect();
        RecommendationList::from_scored(user, scored, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Hybrid,
    TopicOnly,
    UbcfPearson,
    UbcfLlr,
    IbcfLlr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Hybrid,
        Algorithm::TopicOnly,
        Algorithm::UbcfPearson,
        Algorithm::UbcfLlr,
        Algorithm::IbcfLlr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Hybrid => "hybrid",
            Algorithm::TopicOnly => "topic_only",
            Algorithm::UbcfPearson => "ubcf_pearson",
            Algorithm::UbcfLlr => "ubcf_llr",
            Algorithm::IbcfLlr => "ibcf_llr",
        }
    }

    pub fn needs_personas(self) -> bool {
        matches!(self, Algorithm::Hybrid | Algorithm::TopicOnly)
    }

    /// Instantiates the recommender over `train`.
    pub fn build<'a>(
        self,
        train: &'a RatingDataset,
        personas: Option<&'a PersonaTable>,
        neighbors: usize,
        like_threshold: f64,
    ) -> Result<Box<dyn Recommender + 'a>> {
        let personas = || {
            personas.ok_or_else(|| Error::config(format!("{} requires user personas", self.label())))
        };
        Ok(match self {
            Algorithm::Hybrid => Box::new(NeighborhoodRecommender::new(
                train,
                HybridSimilarity::new(personas()?, train),
                neighbors,
                like_threshold,
            )),
            Algorithm::TopicOnly => Box::new(NeighborhoodRecommender::new(
                train,
                TopicSimilarity::new(personas()?, train),
                neighbors,
                like_threshold,
            )),
            Algorithm::UbcfPearson => {
                Box::new(UserBasedRecommender::new(train, OverlapMeasure::Pearson, neighbors))
            }
            Algorithm::UbcfLlr => Box::new(UserBasedRecommender::new(
                train,
                OverlapMeasure::LogLikelihood,
                neighbors,
            )),
            Algorithm::IbcfLlr => Box::new(ItemBasedRecommender::new(train)),
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s.trim())
            .ok_or_else(|| {
                let valid: Vec<&str> = Algorithm::ALL.iter().map(|a| a.label()).collect();
                Error::config(format!(
                    "unknown algorithm `{s}`; valid labels: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// `user_id,rank,item_id,score` lines, ranks starting at 1.
pub fn write_recommendations<'a, W: Write>(
    lists: impl IntoIterator<Item = &'a RecommendationList>,
    mut sink: W,
) -> Result<()> {
    writeln!(sink, "user_id,rank,item_id,score")?;
    for list in lists {
        for (rank, rec) in list.items.iter().enumerate() {
            writeln!(sink, "{},{},{},{:.6}", list.user, rank + 1, rec.item, rec.score)?;
        }
    }
    sink.flush()?;
    Ok(())
}
