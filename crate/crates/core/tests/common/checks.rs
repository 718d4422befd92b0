//! Library-vs-oracle comparisons over one randomized instance. Each returns
//! a description of every disagreement; empty means equivalent.

use rand::Rng;
use topiccf_core::persona::{build_all_personas, PersonaTable};
use topiccf_core::recommend::{
    recommend_hybrid, recommend_item_based, recommend_topic_only, recommend_user_based,
    OverlapMeasure, RecommendationList,
};
use topiccf_core::similarity::{
    self, HybridSimilarity, LlrSimilarity, PearsonSimilarity, SimilarityScore, TopicSimilarity,
    UserSimilarity,
};

use super::oracle::{self, Naive, Personas};
use super::synth::{self, Instance};

pub const TOLERANCE: f64 = 1e-9;

fn compare(out: &mut Vec<String>, what: &str, got: SimilarityScore, want: Option<f64>) {
    match (got.get(), want) {
        (None, None) => {}
        (Some(g), Some(w)) if (g - w).abs() <= TOLERANCE => {}
        (g, w) => out.push(format!("{what}: library {g:?}, oracle {w:?}")),
    }
}

pub fn persona_map(table: &PersonaTable) -> Personas {
    table.iter().map(|(u, p)| (u, p.map(<[f64]>::to_vec))).collect()
}

/// Scores from `score_all` must agree with the pairwise entry point.
fn check_score_all(out: &mut Vec<String>, name: &str, sim: &dyn UserSimilarity, users: &[u64]) {
    for &u in users {
        for (v, s) in sim.score_all(u) {
            let pairwise = sim.similarity(u, v);
            if s.get() != pairwise.get() {
                out.push(format!("{name} score_all({u}) vs similarity({u},{v}): {s:?} / {pairwise:?}"));
            }
        }
    }
}

pub fn similarity_mismatches(inst: &Instance) -> Vec<String> {
    let mut out = Vec::new();
    let train = inst.dataset();
    let naive = Naive::new(&inst.records);
    let table = build_all_personas(&train, &inst.item_profiles());
    let expected_personas = naive.personas(&inst.profiles, inst.topics);

    for (&u, want) in &expected_personas {
        match (table.get(u), want) {
            (None, None) => {}
            (Some(g), Some(w)) if g.iter().zip(w).all(|(a, b)| (a - b).abs() <= TOLERANCE) => {}
            (g, w) => out.push(format!("persona {u}: library {g:?}, oracle {w:?}")),
        }
    }
    let personas = persona_map(&table);

    let topic = TopicSimilarity::new(&table, &train);
    let hybrid = HybridSimilarity::new(&table, &train);
    let llr = LlrSimilarity::new(&train);
    let pearson = PearsonSimilarity::new(&train);
    for &u in &naive.users {
        for &v in &naive.users {
            let pair = format!("({u},{v})");
            compare(&mut out, &format!("pearson{pair}"), similarity::pearson_similarity(u, v, &train), naive.pearson(u, v));
            compare(&mut out, &format!("pearson trait{pair}"), pearson.similarity(u, v), naive.pearson(u, v));
            compare(&mut out, &format!("llr{pair}"), similarity::llr_similarity(u, v, &train), Some(naive.llr(u, v)));
            compare(&mut out, &format!("llr trait{pair}"), llr.similarity(u, v), Some(naive.llr(u, v)));
            compare(&mut out, &format!("topic{pair}"), topic.similarity(u, v), oracle::topic(&personas, u, v));
            let h = Some(oracle::hybrid(&naive, &personas, u, v));
            compare(&mut out, &format!("hybrid{pair}"), similarity::hybrid_similarity(u, v, &table, &train), h);
            compare(&mut out, &format!("hybrid trait{pair}"), hybrid.similarity(u, v), h);
            if let (Some(Some(p)), Some(Some(q))) = (personas.get(&u), personas.get(&v)) {
                let got = similarity::symmetric_kl(p, q).expect("same length");
                let want = oracle::symmetric_kl(p, q);
                if (got - want).abs() > TOLERANCE {
                    out.push(format!("symmetric_kl{pair}: library {got}, oracle {want}"));
                }
            }
        }
    }
    for &i in &naive.items {
        for &j in &naive.items {
            compare(
                &mut out,
                &format!("item llr({i},{j})"),
                similarity::item_llr_similarity(i, j, &train),
                Some(naive.item_llr(i, j)),
            );
        }
    }
    check_score_all(&mut out, "pearson", &pearson, &naive.users);
    check_score_all(&mut out, "llr", &llr, &naive.users);
    check_score_all(&mut out, "topic", &topic, &naive.users);
    check_score_all(&mut out, "hybrid", &hybrid, &naive.users);
    out
}

fn ids(list: RecommendationList) -> Vec<u64> {
    list.item_ids().collect()
}

fn compare_lists(out: &mut Vec<String>, what: String, got: Vec<u64>, want: Vec<u64>) {
    if got != want {
        out.push(format!("{what}: library {got:?}, oracle {want:?}"));
    }
}

/// Every user plus one unknown id, with N, K and the like threshold drawn
/// per user from `seed`.
pub fn recommender_mismatches(inst: &Instance, seed: u64) -> Vec<String> {
    let mut out = Vec::new();
    let mut rng = synth::rng(seed);
    let train = inst.dataset();
    let naive = Naive::new(&inst.records);
    let table = build_all_personas(&train, &inst.item_profiles());
    let personas = persona_map(&table);
    let mut users = naive.users.clone();
    users.push(u64::MAX);
    for u in users {
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        let like = [1.0, 3.0, 4.0][rng.gen_range(0..3)];
        let tag = |name: &str| format!("{name}(user {u}, N={n}, K={k}, like={like})");
        compare_lists(
            &mut out,
            tag("hybrid"),
            ids(recommend_hybrid(u, &table, &train, n, k, like)),
            oracle::hybrid_list(&naive, &personas, u, n, k, like),
        );
        compare_lists(
            &mut out,
            tag("topic_only"),
            ids(recommend_topic_only(u, &table, &train, n, k, like)),
            oracle::topic_only_list(&naive, &personas, u, n, k, like),
        );
        compare_lists(
            &mut out,
            tag("ubcf_pearson"),
            ids(recommend_user_based(u, &train, OverlapMeasure::Pearson, n, k)),
            oracle::user_based_list(&naive, u, true, n, k),
        );
        compare_lists(
            &mut out,
            tag("ubcf_llr"),
            ids(recommend_user_based(u, &train, OverlapMeasure::LogLikelihood, n, k)),
            oracle::user_based_list(&naive, u, false, n, k),
        );
        compare_lists(
            &mut out,
            tag("ibcf_llr"),
            ids(recommend_item_based(u, &train, k)),
            oracle::item_based_list(&naive, u, k),
        );
    }
    out
}
