//! Brute-force reference implementations. Everything here works from the
//! raw rating triples with plain loops and shares no code with the library
//! beyond the record types.

use std::collections::{BTreeMap, BTreeSet};

use topiccf_core::ingest::RatingRecord;

pub type Profiles = BTreeMap<u64, Vec<f64>>;
pub type Personas = BTreeMap<u64, Option<Vec<f64>>>;

pub struct Naive {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
    pub ratings: BTreeMap<(u64, u64), f64>,
}

impl Naive {
    /// Later duplicates overwrite earlier ones.
    pub fn new(records: &[RatingRecord]) -> Self {
        let mut ratings = BTreeMap::new();
        for r in records {
            ratings.insert((r.user, r.item), r.rating);
        }
        let users: BTreeSet<u64> = ratings.keys().map(|k| k.0).collect();
        let items: BTreeSet<u64> = ratings.keys().map(|k| k.1).collect();
        Naive {
            users: users.into_iter().collect(),
            items: items.into_iter().collect(),
            ratings,
        }
    }

    pub fn rating(&self, u: u64, i: u64) -> Option<f64> {
        self.ratings.get(&(u, i)).copied()
    }

    pub fn items_of(&self, u: u64) -> Vec<u64> {
        self.items.iter().copied().filter(|&i| self.rating(u, i).is_some()).collect()
    }

    pub fn raters_of(&self, i: u64) -> Vec<u64> {
        self.users.iter().copied().filter(|&u| self.rating(u, i).is_some()).collect()
    }

    pub fn pearson(&self, u: u64, v: u64) -> Option<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &i in &self.items {
            if let (Some(x), Some(y)) = (self.rating(u, i), self.rating(v, i)) {
                xs.push(x);
                ys.push(y);
            }
        }
        if xs.len() < 2 {
            return None;
        }
        let n = xs.len() as f64;
        let mx: f64 = xs.iter().sum::<f64>() / n;
        let my: f64 = ys.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for k in 0..xs.len() {
            cov += (xs[k] - mx) * (ys[k] - my);
            vx += (xs[k] - mx).powi(2);
            vy += (ys[k] - my).powi(2);
        }
        if vx == 0.0 || vy == 0.0 {
            return None;
        }
        Some((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
    }

    pub fn llr(&self, u: u64, v: u64) -> f64 {
        let a = self.items_of(u);
        let b = self.items_of(v);
        set_llr(&a, &b, self.items.len())
    }

    pub fn item_llr(&self, i: u64, j: u64) -> f64 {
        let a = self.raters_of(i);
        let b = self.raters_of(j);
        set_llr(&a, &b, self.users.len())
    }

    pub fn persona(&self, u: u64, profiles: &Profiles, topics: usize) -> Option<Vec<f64>> {
        let mut total = 0.0;
        let mut acc = vec![0.0; topics];
        let mut any = false;
        for &i in &self.items {
            let (Some(r), Some(theta)) = (self.rating(u, i), profiles.get(&i)) else {
                continue;
            };
            any = true;
            total += r;
            for t in 0..topics {
                acc[t] += r * theta[t];
            }
        }
        any.then(|| acc.into_iter().map(|x| x / total).collect())
    }

    pub fn personas(&self, profiles: &Profiles, topics: usize) -> Personas {
        self.users.iter().map(|&u| (u, self.persona(u, profiles, topics))).collect()
    }
}

fn set_llr(a: &[u64], b: &[u64], universe: usize) -> f64 {
    let mut k11 = 0u64;
    for x in a {
        for y in b {
            if x == y {
                k11 += 1;
            }
        }
    }
    let k12 = a.len() as u64 - k11;
    let k21 = b.len() as u64 - k11;
    let k22 = universe as u64 - k11 - k12 - k21;
    // the entropy form leaves rounding residue at exact independence
    let g2 = if k11 * k22 == k12 * k21 {
        0.0
    } else {
        g2_entropy(k11, k12, k21, k22).max(0.0)
    };
    1.0 - 1.0 / (1.0 + g2)
}

fn x_log_x(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        x as f64 * (x as f64).ln()
    }
}

fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    x_log_x(total) - counts.iter().map(|&c| x_log_x(c)).sum::<f64>()
}

/// G² in Dunning's entropy form, as used by Mahout.
pub fn g2_entropy(k11: u64, k12: u64, k21: u64, k22: u64) -> f64 {
    let rows = entropy(&[k11 + k12, k21 + k22]);
    let cols = entropy(&[k11 + k21, k12 + k22]);
    let matrix = entropy(&[k11, k12, k21, k22]);
    2.0 * (rows + cols - matrix)
}

fn floored(p: &[f64]) -> Vec<f64> {
    let q: Vec<f64> = p.iter().map(|&x| if x < 1e-10 { 1e-10 } else { x }).collect();
    let s: f64 = q.iter().sum();
    q.into_iter().map(|x| x / s).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..p.len() {
        s += p[k] * (p[k] / q[k]).ln();
    }
    s
}

pub fn symmetric_kl(p: &[f64], q: &[f64]) -> f64 {
    let p = floored(p);
    let q = floored(q);
    kl(&p, &q) + kl(&q, &p)
}

pub fn topic(personas: &Personas, u: u64, v: u64) -> Option<f64> {
    match (personas.get(&u)?, personas.get(&v)?) {
        (Some(p), Some(q)) => Some((-symmetric_kl(p, q)).exp()),
        _ => None,
    }
}

pub fn hybrid(naive: &Naive, personas: &Personas, u: u64, v: u64) -> f64 {
    let llr = naive.llr(u, v);
    match topic(personas, u, v) {
        Some(t) => t * llr,
        None => llr,
    }
}

/// Round to 40 significant mantissa bits; scores closer than that are tied.
pub fn coarse(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let (mantissa, exponent) = frexp(x.abs());
    let scale = 2f64.powi(41);
    let rounded = (mantissa * scale + 0.5).floor() / scale;
    x.signum() * rounded * 2f64.powi(exponent)
}

/// `x = m * 2^e` with `m` in [0.5, 1).
fn frexp(x: f64) -> (f64, i32) {
    let mut e = x.log2().floor() as i32 + 1;
    let mut m = x / 2f64.powi(e);
    while m >= 1.0 {
        m /= 2.0;
        e += 1;
    }
    while m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    (m, e)
}

fn ranked<T: Copy>(mut scored: Vec<(T, u64, f64)>) -> Vec<(T, u64, f64)> {
    scored.sort_by(|a, b| coarse(b.2).partial_cmp(&coarse(a.2)).unwrap().then(a.1.cmp(&b.1)));
    scored
}

/// Top-`n` other users with a defined, positive similarity.
pub fn neighborhood(naive: &Naive, u: u64, n: usize, sim: impl Fn(u64, u64) -> Option<f64>) -> Vec<(u64, f64)> {
    if !naive.users.contains(&u) {
        return Vec::new();
    }
    let mut scored = Vec::new();
    for &v in &naive.users {
        if v == u {
            continue;
        }
        if let Some(s) = sim(u, v) {
            if s > 0.0 {
                scored.push(((), v, s));
            }
        }
    }
    ranked(scored).into_iter().take(n).map(|(_, v, s)| (v, s)).collect()
}

/// Share of the neighborhood that liked each unrated item.
pub fn neighborhood_list(naive: &Naive, u: u64, neighbors: &[(u64, f64)], k: usize, like: f64) -> Vec<u64> {
    if neighbors.is_empty() {
        return Vec::new();
    }
    let mut scored = Vec::new();
    for &i in &naive.items {
        if naive.rating(u, i).is_some() {
            continue;
        }
        let rated_by_neighbor = neighbors.iter().any(|&(v, _)| naive.rating(v, i).is_some());
        if !rated_by_neighbor {
            continue;
        }
        let liked = neighbors
            .iter()
            .filter(|&&(v, _)| naive.rating(v, i).is_some_and(|r| r >= like))
            .count();
        if liked > 0 {
            scored.push(((), i, liked as f64 / neighbors.len() as f64));
        }
    }
    ranked(scored).into_iter().take(k).map(|(_, i, _)| i).collect()
}

pub fn hybrid_list(naive: &Naive, personas: &Personas, u: u64, n: usize, k: usize, like: f64) -> Vec<u64> {
    let nb = neighborhood(naive, u, n, |a, b| Some(hybrid(naive, personas, a, b)));
    neighborhood_list(naive, u, &nb, k, like)
}

pub fn topic_only_list(naive: &Naive, personas: &Personas, u: u64, n: usize, k: usize, like: f64) -> Vec<u64> {
    let nb = neighborhood(naive, u, n, |a, b| topic(personas, a, b));
    neighborhood_list(naive, u, &nb, k, like)
}

/// Weighted average of neighbor ratings, summed in neighbor order.
pub fn user_based_list(naive: &Naive, u: u64, pearson: bool, n: usize, k: usize) -> Vec<u64> {
    let nb = if pearson {
        neighborhood(naive, u, n, |a, b| naive.pearson(a, b))
    } else {
        neighborhood(naive, u, n, |a, b| Some(naive.llr(a, b)))
    };
    let mut scored = Vec::new();
    for &i in &naive.items {
        if naive.rating(u, i).is_some() {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &(v, s) in &nb {
            if let Some(r) = naive.rating(v, i) {
                num += s * r;
                den += s.abs();
            }
        }
        if den > 0.0 {
            scored.push(((), i, num / den));
        }
    }
    ranked(scored).into_iter().take(k).map(|(_, i, _)| i).collect()
}

/// Weighted average of the user's own ratings over LLR-similar items.
pub fn item_based_list(naive: &Naive, u: u64, k: usize) -> Vec<u64> {
    if !naive.users.contains(&u) {
        return Vec::new();
    }
    let mut scored = Vec::new();
    for &i in &naive.items {
        if naive.rating(u, i).is_some() {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &j in &naive.items {
            let Some(r) = naive.rating(u, j) else { continue };
            let s = naive.item_llr(i, j);
            if s != 0.0 {
                num += s * r;
                den += s.abs();
            }
        }
        if den > 0.0 {
            scored.push(((), i, num / den));
        }
    }
    ranked(scored).into_iter().take(k).map(|(_, i, _)| i).collect()
}
