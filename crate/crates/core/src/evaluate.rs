//! Precision, recall and f-measure at K, averaged per user.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;

use crate::ingest::RatingDataset;
use crate::recommend::{Recommender, RecommendationList};
use crate::{ItemId, Result, UserId};

/// K = 5, 10, ..., 75.
pub fn default_ks() -> Vec<usize> {
    (1..=15).map(|i| i * 5).collect()
}

pub const DEFAULT_MAX_K: usize = 75;

/// Precision and recall of `recs` (already truncated to K). `None` when the
/// user has no relevant items.
pub fn precision_recall_at_k(recs: &[ItemId], relevant: &BTreeSet<ItemId>) -> Option<(f64, f64)> {
    if relevant.is_empty() {
        return None;
    }
    let hits = hit_count(recs, relevant);
    let precision = if recs.is_empty() {
        0.0
    } else {
        hits as f64 / recs.len() as f64
    };
    Some((precision, hits as f64 / relevant.len() as f64))
}

fn hit_count(recs: &[ItemId], relevant: &BTreeSet<ItemId>) -> usize {
    recs.iter().filter(|i| relevant.contains(i)).count()
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub users: usize,
    /// Evaluated users whose list was shorter than K. Their precision uses
    /// the actual list length as denominator.
    pub short_lists: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub algorithm: String,
    pub rows: Vec<EvalRow>,
}

/// One user at one K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub user: UserId,
    pub k: usize,
    pub list_len: usize,
    pub relevant: usize,
    pub hits: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub max_k: usize,
    /// Test ratings below this are not relevant; `None` counts every test item.
    pub relevance_threshold: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: default_ks(),
            max_k: DEFAULT_MAX_K,
            relevance_threshold: None,
        }
    }
}

/// The user's relevant test items.
pub fn relevant_items(test: &RatingDataset, user: UserId, threshold: Option<f64>) -> BTreeSet<ItemId> {
    test.user_ratings(user)
        .iter()
        .filter(|&&(_, r)| threshold.is_none_or(|t| r >= t))
        .map(|&(i, _)| i)
        .collect()
}

/// Per-user metrics for every K, users in ascending id order. Users
/// without relevant test items are skipped.
pub fn evaluate_users(
    recommender: &dyn Recommender,
    test: &RatingDataset,
    options: &EvalOptions,
) -> Vec<UserMetrics> {
    let mut ks = options.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    assert!(
        ks.last().is_none_or(|&k| k <= options.max_k),
        "max_k must cover every K"
    );
    let per_user: Vec<Vec<UserMetrics>> = test
        .users()
        .par_iter()
        .filter_map(|&user| {
            let relevant = relevant_items(test, user, options.relevance_threshold);
            if relevant.is_empty() {
                return None;
            }
            let list = recommender.recommend(user, options.max_k);
            Some(metrics_for(&list, &relevant, &ks))
        })
        .collect();
    per_user.into_iter().flatten().collect()
}

fn metrics_for(list: &RecommendationList, relevant: &BTreeSet<ItemId>, ks: &[usize]) -> Vec<UserMetrics> {
    let ids: Vec<ItemId> = list.item_ids().collect();
    ks.iter()
        .map(|&k| {
            let top = &ids[..k.min(ids.len())];
            let (precision, recall) =
                precision_recall_at_k(top, relevant).expect("relevant set is non-empty");
            UserMetrics {
                user: list.user,
                k,
                list_len: top.len(),
                relevant: relevant.len(),
                hits: hit_count(top, relevant),
                precision,
                recall,
                f_measure: f_measure(precision, recall),
            }
        })
        .collect()
}

/// Generates `max_k` recommendations once per user, truncates per K and
/// averages the per-user metrics (f-measure is averaged, not recomputed
/// from the averages).
pub fn evaluate_sweep(
    label: &str,
    recommender: &dyn Recommender,
    test: &RatingDataset,
    options: &EvalOptions,
) -> EvalReport {
    let details = evaluate_users(recommender, test, options);
    summarize(label, &details, options)
}

pub fn summarize(label: &str, details: &[UserMetrics], options: &EvalOptions) -> EvalReport {
    let mut ks = options.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let rows = ks
        .into_iter()
        .map(|k| {
            let (mut p, mut r, mut f, mut n, mut short) = (0.0, 0.0, 0.0, 0usize, 0usize);
            for m in details.iter().filter(|m| m.k == k) {
                p += m.precision;
                r += m.recall;
                f += m.f_measure;
                n += 1;
                if m.list_len < k {
                    short += 1;
                }
            }
            let avg = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
            EvalRow {
                k,
                precision: avg(p),
                recall: avg(r),
                f_measure: avg(f),
                users: n,
                short_lists: short,
            }
        })
        .collect();
    EvalReport {
        algorithm: label.to_owned(),
        rows,
    }
}

pub const REPORT_HEADER: &str = "algorithm,K,precision,recall,f_measure,users";

pub fn emit_report<W: Write>(report: &EvalReport, sink: W) -> Result<()> {
    emit_reports(std::slice::from_ref(report), sink)
}

/// Writes the reports in the given order, each with rows ascending in K.
pub fn emit_reports<W: Write>(reports: &[EvalReport], mut sink: W) -> Result<()> {
    writeln!(sink, "{REPORT_HEADER}")?;
    for report in reports {
        let mut rows = report.rows.clone();
        rows.sort_by_key(|r| r.k);
        for row in rows {
            writeln!(
                sink,
                "{},{},{:.6},{:.6},{:.6},{}",
                report.algorithm, row.k, row.precision, row.recall, row.f_measure, row.users
            )?;
        }
    }
    sink.flush()?;
    Ok(())
}

/// `user_id,K,precision,recall,f` for every evaluated user and K.
pub fn emit_user_details<W: Write>(details: &[UserMetrics], mut sink: W) -> Result<()> {
    writeln!(sink, "user_id,K,precision,recall,f")?;
    for m in details {
        writeln!(
            sink,
            "{},{},{:.6},{:.6},{:.6}",
            m.user, m.k, m.precision, m.recall, m.f_measure
        )?;
    }
    sink.flush()?;
    Ok(())
}
