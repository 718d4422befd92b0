//! Seeded generators for randomized instances and benchmarks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topiccf_core::ingest::{DocumentCorpus, RatingDataset, RatingRecord};
use topiccf_core::lda::ItemProfiles;

use super::oracle::Profiles;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn record(user: u64, item: u64, rating: f64) -> RatingRecord {
    RatingRecord { user, item, rating, timestamp: None }
}

pub fn dataset(rows: &[(u64, u64, f64)]) -> RatingDataset {
    RatingDataset::from_records(rows.iter().map(|&(u, i, r)| record(u, i, r)))
}

/// A small random instance: sparse ids, integer ratings, and topic profiles
/// for most items (some peaked enough to hit the KL floor).
pub struct Instance {
    pub records: Vec<RatingRecord>,
    pub profiles: Profiles,
    pub topics: usize,
}

impl Instance {
    pub fn dataset(&self) -> RatingDataset {
        RatingDataset::from_records(self.records.iter().copied())
    }

    pub fn item_profiles(&self) -> ItemProfiles {
        let mut p = ItemProfiles::new(self.topics);
        for (&item, theta) in &self.profiles {
            p.insert(item, theta.clone());
        }
        p
    }
}

pub fn random_instance(seed: u64, max_users: usize, max_items: usize) -> Instance {
    let mut rng = rng(seed);
    let n_users = rng.gen_range(2..=max_users);
    let n_items = rng.gen_range(2..=max_items);
    let topics = rng.gen_range(1..=4);
    let users: Vec<u64> = (0..n_users).map(|k| 3 * k as u64 + rng.gen_range(0..3)).collect();
    let items: Vec<u64> = (0..n_items).map(|k| 10 * k as u64 + rng.gen_range(0..10)).collect();
    let density: f64 = rng.gen_range(0.2..0.8);
    let mut records = Vec::new();
    for &u in &users {
        let mut any = false;
        for &i in &items {
            if rng.gen_bool(density) {
                records.push(record(u, i, rng.gen_range(1..=5) as f64));
                any = true;
            }
        }
        if !any {
            let &i = items.choose(&mut rng).unwrap();
            records.push(record(u, i, rng.gen_range(1..=5) as f64));
        }
    }
    records.shuffle(&mut rng);
    let mut profiles = BTreeMap::new();
    for &i in &items {
        if rng.gen_bool(0.15) {
            continue;
        }
        let mut theta: Vec<f64> = (0..topics).map(|_| rng.gen::<f64>() + 1e-3).collect();
        if rng.gen_bool(0.2) {
            let hot = rng.gen_range(0..topics);
            theta.iter_mut().enumerate().for_each(|(t, x)| *x = if t == hot { 1.0 } else { 0.0 });
        }
        let s: f64 = theta.iter().sum();
        profiles.insert(i, theta.into_iter().map(|x| x / s).collect());
    }
    Instance { records, profiles, topics }
}

/// Draws from Dirichlet(alpha, ..., alpha) via normalized gamma variates.
pub fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, k: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..k).map(|_| gamma(rng, alpha)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

/// Marsaglia-Tsang; shape < 1 boosted by `U^(1/shape)`.
fn gamma(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.gen();
        return gamma(rng, shape + 1.0) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u: f64 = rng.gen();
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Letters-only pseudo word so the tokenizer keeps it: topic `t`, index `w`.
pub fn word(t: usize, w: usize) -> String {
    let letters = |mut n: usize| {
        let mut s = String::new();
        for _ in 0..3 {
            s.push((b'a' + (n % 26) as u8) as char);
            n /= 26;
        }
        s
    };
    format!("w{}x{}", letters(t), letters(w))
}

/// `docs` documents of `len` tokens mixing `topics` topics with disjoint
/// `support`-word vocabularies. Returns the corpus, the true mixing weights
/// and the true per-document token counts per topic.
pub struct MixtureCorpus {
    pub corpus: DocumentCorpus,
    pub weights: Vec<Vec<f64>>,
    pub token_counts: Vec<Vec<usize>>,
}

pub fn mixture_corpus(seed: u64, docs: usize, len: usize, topics: usize, support: usize) -> MixtureCorpus {
    let mut rng = rng(seed);
    let mut corpus = DocumentCorpus::new();
    let mut weights = Vec::new();
    let mut token_counts = Vec::new();
    for d in 0..docs {
        let w = dirichlet(&mut rng, 1.0, topics);
        let mut counts = vec![0; topics];
        let mut text = Vec::with_capacity(len);
        for _ in 0..len {
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut t = topics - 1;
            for (k, &p) in w.iter().enumerate() {
                acc += p;
                if r < acc {
                    t = k;
                    break;
                }
            }
            counts[t] += 1;
            text.push(word(t, rng.gen_range(0..support)));
        }
        corpus.insert(d as u64, text.join(" "));
        weights.push(w);
        token_counts.push(counts);
    }
    MixtureCorpus { corpus, weights, token_counts }
}

/// Topic-pure documents: item `i` in cluster `c` gets `len` words drawn from
/// topic `c`'s vocabulary.
pub fn pure_documents(rng: &mut ChaCha8Rng, items: &[(u64, usize)], len: usize, support: usize) -> DocumentCorpus {
    let mut corpus = DocumentCorpus::new();
    for &(item, topic) in items {
        let text: Vec<String> = (0..len).map(|_| word(topic, rng.gen_range(0..support))).collect();
        corpus.insert(item, text.join(" "));
    }
    corpus
}

/// Ratings plus item documents for a clustered benchmark.
pub struct Benchmark {
    pub records: Vec<RatingRecord>,
    pub corpus: DocumentCorpus,
    /// Cluster of each user, by user id.
    pub user_cluster: BTreeMap<u64, usize>,
}

pub struct BenchmarkShape {
    pub clusters: usize,
    pub users: usize,
    pub items: usize,
    pub density: f64,
    /// Share of a user's draws taken from their own taste half.
    pub own_half: f64,
    /// Share taken from the other half of their cluster; the rest is uniform.
    pub other_half: f64,
    pub doc_len: usize,
    /// Share of document tokens drawn from a random topic.
    pub doc_noise: f64,
    /// Added to ratings of items in the user's own taste half, subtracted
    /// elsewhere.
    pub taste_bonus: f64,
    pub rating_noise: f64,
}

fn zipf_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if r < w {
            return k;
        }
        r -= w;
    }
    weights.len() - 1
}

/// Users fall into `clusters` equal clusters, each split into two taste
/// groups that favour different halves of the cluster's items. Within a
/// half, popularity is Zipf-like and popular items are rated higher. Item
/// documents are drawn from their cluster's topic.
pub fn clustered_benchmark(seed: u64, shape: &BenchmarkShape) -> Benchmark {
    let mut rng = rng(seed);
    let per_cluster = shape.items / shape.clusters;
    let half = per_cluster / 2;
    let zipf: Vec<f64> = (0..half).map(|r| 1.0 / (r as f64 + 1.0).powf(0.9)).collect();
    let item_id = |c: usize, h: usize, r: usize| (c * per_cluster + h * half + r + 1) as u64;
    let users_per_cluster = shape.users / shape.clusters;
    let ratings_per_user = (shape.items as f64 * shape.density).round() as usize;

    let mut records = Vec::new();
    let mut user_cluster = BTreeMap::new();
    for u in 0..shape.users {
        let user = u as u64 + 1;
        let c = u / users_per_cluster;
        let g = (u % users_per_cluster) % 2;
        user_cluster.insert(user, c);
        let n = rng.gen_range(ratings_per_user * 3 / 4..=ratings_per_user * 5 / 4);
        let mut seen = std::collections::BTreeSet::new();
        while seen.len() < n {
            let draw: f64 = rng.gen();
            let (item, rank, own) = if draw < shape.own_half {
                let r = zipf_pick(&mut rng, &zipf);
                (item_id(c, g, r), r, true)
            } else if draw < shape.own_half + shape.other_half {
                let r = zipf_pick(&mut rng, &zipf);
                (item_id(c, 1 - g, r), r, false)
            } else {
                let (oc, oh) = (rng.gen_range(0..shape.clusters), rng.gen_range(0..2));
                let r = rng.gen_range(0..half);
                (item_id(oc, oh, r), r, oc == c && oh == g)
            };
            if !seen.insert(item) {
                continue;
            }
            let quality = 4.0 - 2.0 * rank as f64 / half as f64;
            let taste = if own { shape.taste_bonus } else { -shape.taste_bonus };
            let rating = (quality + taste + normal(&mut rng) * shape.rating_noise).round().clamp(1.0, 5.0);
            records.push(record(user, item, rating));
        }
    }

    let support = 15;
    let mut corpus = DocumentCorpus::new();
    for c in 0..shape.clusters {
        for h in 0..2 {
            for r in 0..half {
                let text: Vec<String> = (0..shape.doc_len)
                    .map(|_| {
                        let t = if rng.gen_bool(shape.doc_noise) { rng.gen_range(0..shape.clusters) } else { c };
                        word(t, rng.gen_range(0..support))
                    })
                    .collect();
                corpus.insert(item_id(c, h, r), text.join(" "));
            }
        }
    }
    Benchmark { records, corpus, user_cluster }
}
