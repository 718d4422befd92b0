//! Tokenization, vocabulary building and LDA by collapsed Gibbs sampling.
//!
//! The symmetric document-topic prior is given as a concentration sum:
//! each topic gets `alpha_sum / T`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::DocumentCorpus;
use crate::{Error, ItemId, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Entries of phi at or below this are left out of `phi.csv`.
pub const PHI_WRITE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn none() -> Self {
        Self::default()
    }

    /// The English list bundled with the crate.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords(iter.into_iter().map(Into::into).collect())
    }
}

/// Lowercases, splits on non-alphanumeric runs and drops tokens shorter than
/// three characters, pure numbers and stopwords.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|tok| tok.chars().count() >= 3)
        .filter(|tok| !tok.chars().all(char::is_numeric))
        .filter(|tok| !stopwords.contains(tok))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> &str {
        &self.tokens[index as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, index: u32) -> usize {
        self.doc_freq[index as usize]
    }
}

/// Documents as vocabulary indices, in ascending item order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodedCorpus {
    pub docs: Vec<Vec<u32>>,
    pub items: Vec<ItemId>,
}

impl EncodedCorpus {
    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

/// Tokenizes every document, keeps tokens seen in at least `min_df`
/// documents and encodes the corpus against the resulting vocabulary.
/// Tokens are indexed in lexicographic order. Documents that lose every
/// token are kept as empty sequences.
pub fn build_vocabulary(
    corpus: &DocumentCorpus,
    stopwords: &Stopwords,
    min_df: usize,
) -> Result<(Vocabulary, EncodedCorpus)> {
    if corpus.is_empty() {
        return Err(Error::config("document corpus is empty"));
    }
    let tokenized: Vec<(ItemId, Vec<String>)> = corpus
        .iter()
        .map(|(item, text)| (item, tokenize(text, stopwords)))
        .collect();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, tokens) in &tokenized {
        let distinct: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        for tok in distinct {
            *df.entry(tok).or_default() += 1;
        }
    }

    let mut vocab = Vocabulary::default();
    for (tok, count) in df {
        if count >= min_df.max(1) {
            vocab.index.insert(tok.to_owned(), vocab.tokens.len() as u32);
            vocab.tokens.push(tok.to_owned());
            vocab.doc_freq.push(count);
        }
    }
    if vocab.is_empty() {
        return Err(Error::config(
            "every document is empty after tokenization and document-frequency filtering",
        ));
    }

    let mut encoded = EncodedCorpus::default();
    for (item, tokens) in &tokenized {
        encoded.items.push(*item);
        encoded
            .docs
            .push(tokens.iter().filter_map(|t| vocab.index_of(t)).collect());
    }
    Ok((vocab, encoded))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub alpha_sum: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            num_topics: 50,
            alpha_sum: 50.0,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha_sum / self.num_topics as f64
    }

    fn validate(&self) -> Result<()> {
        if self.num_topics == 0 {
            return Err(Error::config("number of topics must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.alpha_sum > 0.0 && self.alpha_sum.is_finite()) {
            return Err(Error::config("alpha_sum must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta must be positive"));
        }
        Ok(())
    }
}

/// Trained model: point estimates from the final sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub num_topics: usize,
    pub alpha_sum: f64,
    pub beta: f64,
    pub seed: u64,
    pub vocabulary: Vec<String>,
    pub items: Vec<ItemId>,
    /// D x T, row-major.
    pub theta: Vec<f64>,
    /// T x V, row-major.
    pub phi: Vec<f64>,
    pub assignments: Vec<Vec<u32>>,
}

impl TopicModel {
    pub fn num_docs(&self) -> usize {
        self.items.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn theta_row(&self, doc: usize) -> &[f64] {
        &self.theta[doc * self.num_topics..(doc + 1) * self.num_topics]
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.phi[topic * v..(topic + 1) * v]
    }

    pub fn item_profiles(&self) -> ItemProfiles {
        let mut profiles = ItemProfiles::new(self.num_topics);
        for (d, &item) in self.items.iter().enumerate() {
            profiles.insert(item, self.theta_row(d).to_vec());
        }
        profiles
    }

    /// `theta.csv`: `item_id,p_0,...,p_{T-1}`.
    pub fn write_theta<W: Write>(&self, sink: W) -> Result<()> {
        self.item_profiles().write_csv(sink)
    }

    /// `phi.csv`: `topic,token,probability` for entries above
    /// [`PHI_WRITE_THRESHOLD`], smoothing parameters in a header comment.
    pub fn write_phi<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(
            sink,
            "# topics={} vocabulary={} alpha_sum={} beta={} seed={}",
            self.num_topics,
            self.vocab_size(),
            self.alpha_sum,
            self.beta,
            self.seed
        )?;
        for t in 0..self.num_topics {
            for (w, &p) in self.phi_row(t).iter().enumerate() {
                if p > PHI_WRITE_THRESHOLD {
                    writeln!(sink, "{t},{},{p}", self.vocabulary[w])?;
                }
            }
        }
        sink.flush()?;
        Ok(())
    }

    /// `topics.txt`: the top `n` words of every topic, one topic per line.
    pub fn write_topics<W: Write>(&self, mut sink: W, n: usize) -> Result<()> {
        for t in 0..self.num_topics {
            writeln!(sink, "T{t}\t{}", topic_top_words(self, t, n).join(" "))?;
        }
        sink.flush()?;
        Ok(())
    }
}

/// Collapsed Gibbs sampler state. Exposed so callers can observe the counts
/// between sweeps; [`train_lda`] drives it to completion.
pub struct GibbsSampler<'a> {
    corpus: &'a EncodedCorpus,
    config: LdaConfig,
    vocab: Vec<String>,
    rng: ChaCha8Rng,
    z: Vec<Vec<u32>>,
    // D x T
    doc_topic: Vec<u32>,
    // V x T, word-major so a token's topic counts are contiguous
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    sweeps: usize,
}

impl<'a> GibbsSampler<'a> {
    /// Assigns every token a topic uniformly at random.
    pub fn new(corpus: &'a EncodedCorpus, vocab: &Vocabulary, config: LdaConfig) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::config("vocabulary is empty"));
        }
        if corpus.docs.iter().all(Vec::is_empty) {
            return Err(Error::config("corpus has no non-empty document"));
        }
        let t = config.num_topics;
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut doc_topic = vec![0u32; corpus.docs.len() * t];
        let mut word_topic = vec![0u32; v * t];
        let mut topic_total = vec![0u32; t];
        let mut z = Vec::with_capacity(corpus.docs.len());
        for (d, doc) in corpus.docs.iter().enumerate() {
            let mut labels = Vec::with_capacity(doc.len());
            for &w in doc {
                if w as usize >= v {
                    return Err(Error::config(format!(
                        "token index {w} outside vocabulary of size {v}"
                    )));
                }
                let k = rng.gen_range(0..t);
                doc_topic[d * t + k] += 1;
                word_topic[w as usize * t + k] += 1;
                topic_total[k] += 1;
                labels.push(k as u32);
            }
            z.push(labels);
        }
        Ok(GibbsSampler {
            corpus,
            config,
            vocab: vocab.tokens().to_vec(),
            rng,
            z,
            doc_topic,
            word_topic,
            topic_total,
            sweeps: 0,
        })
    }

    /// One full pass over every token in document order.
    pub fn sweep(&mut self) {
        let t_count = self.config.num_topics;
        let alpha = self.config.alpha();
        let beta = self.config.beta;
        let v_beta = self.vocab.len() as f64 * beta;
        let mut cumulative = vec![0.0f64; t_count];

        for (d, doc) in self.corpus.docs.iter().enumerate() {
            let dt = &mut self.doc_topic[d * t_count..(d + 1) * t_count];
            for (pos, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let wt = &mut self.word_topic[w * t_count..(w + 1) * t_count];
                let old = self.z[d][pos] as usize;
                dt[old] -= 1;
                wt[old] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for k in 0..t_count {
                    total += (dt[k] as f64 + alpha) * (wt[k] as f64 + beta)
                        / (self.topic_total[k] as f64 + v_beta);
                    cumulative[k] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(t_count - 1);

                dt[new] += 1;
                wt[new] += 1;
                self.topic_total[new] += 1;
                self.z[d][pos] = new as u32;
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn doc_topic_count(&self, doc: usize, topic: usize) -> u32 {
        self.doc_topic[doc * self.config.num_topics + topic]
    }

    pub fn word_topic_count(&self, word: usize, topic: usize) -> u32 {
        self.word_topic[word * self.config.num_topics + topic]
    }

    pub fn topic_total(&self, topic: usize) -> u32 {
        self.topic_total[topic]
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    /// theta and phi estimated from the current counts.
    pub fn snapshot(&self) -> TopicModel {
        let t_count = self.config.num_topics;
        let v = self.vocab.len();
        let alpha = self.config.alpha();
        let beta = self.config.beta;
        let v_beta = v as f64 * beta;

        let mut theta = Vec::with_capacity(self.corpus.docs.len() * t_count);
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            if doc.is_empty() {
                theta.extend(std::iter::repeat_n(1.0 / t_count as f64, t_count));
                continue;
            }
            let denom = doc.len() as f64 + self.config.alpha_sum;
            for k in 0..t_count {
                theta.push((self.doc_topic[d * t_count + k] as f64 + alpha) / denom);
            }
        }

        let mut phi = Vec::with_capacity(t_count * v);
        for k in 0..t_count {
            let denom = self.topic_total[k] as f64 + v_beta;
            for w in 0..v {
                phi.push((self.word_topic[w * t_count + k] as f64 + beta) / denom);
            }
        }

        TopicModel {
            num_topics: t_count,
            alpha_sum: self.config.alpha_sum,
            beta,
            seed: self.config.seed,
            vocabulary: self.vocab.clone(),
            items: self.corpus.items.clone(),
            theta,
            phi,
            assignments: self.z.clone(),
        }
    }
}

pub fn train_lda(corpus: &EncodedCorpus, vocab: &Vocabulary, config: LdaConfig) -> Result<TopicModel> {
    train_lda_logged(corpus, vocab, config, 0, |_, _| {})
}

/// Like [`train_lda`], reporting the corpus log-likelihood after every
/// `log_every` sweeps (never when `log_every` is 0).
pub fn train_lda_logged(
    corpus: &EncodedCorpus,
    vocab: &Vocabulary,
    config: LdaConfig,
    log_every: usize,
    mut on_log: impl FnMut(usize, f64),
) -> Result<TopicModel> {
    let mut sampler = GibbsSampler::new(corpus, vocab, config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
        if log_every > 0 && sampler.sweeps() % log_every == 0 {
            on_log(
                sampler.sweeps(),
                corpus_log_likelihood(&sampler.snapshot(), corpus),
            );
        }
    }
    Ok(sampler.snapshot())
}

/// The `n` highest-probability words of a topic, ties to the lower index.
pub fn topic_top_words(model: &TopicModel, topic: usize, n: usize) -> Vec<String> {
    let row = model.phi_row(topic);
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(n)
        .map(|w| model.vocabulary[w].clone())
        .collect()
}

/// Sum over every token of `ln sum_t theta[d][t] * phi[t][w]`. Documents
/// are matched to theta rows by position.
pub fn corpus_log_likelihood(model: &TopicModel, corpus: &EncodedCorpus) -> f64 {
    let mut total = 0.0;
    for (d, doc) in corpus.docs.iter().enumerate() {
        let theta = model.theta_row(d);
        for &w in doc {
            let p: f64 = theta
                .iter()
                .enumerate()
                .map(|(t, &th)| th * model.phi_row(t)[w as usize])
                .sum();
            total += p.ln();
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemTopicProfile {
    pub item: ItemId,
    pub distribution: Vec<f64>,
}

/// Item id -> topic distribution (a theta row).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemProfiles {
    num_topics: usize,
    profiles: BTreeMap<ItemId, Vec<f64>>,
}

impl ItemProfiles {
    pub fn new(num_topics: usize) -> Self {
        ItemProfiles {
            num_topics,
            profiles: BTreeMap::new(),
        }
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn insert(&mut self, item: ItemId, distribution: Vec<f64>) {
        assert_eq!(distribution.len(), self.num_topics, "profile width");
        self.profiles.insert(item, distribution);
    }

    pub fn get(&self, item: ItemId) -> Option<&[f64]> {
        self.profiles.get(&item).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ItemTopicProfile> + '_ {
        self.profiles.iter().map(|(&item, d)| ItemTopicProfile {
            item,
            distribution: d.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        for (item, dist) in &self.profiles {
            write!(sink, "{item}")?;
            for p in dist {
                write!(sink, ",{p}")?;
            }
            writeln!(sink)?;
        }
        sink.flush()?;
        Ok(())
    }

    /// Reads `theta.csv`. Lines starting with `#` are comments.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut profiles: Option<ItemProfiles> = None;
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let item: ItemId = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::parse(line_no, "bad item id"))?;
            let dist = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| Error::parse(line_no, "non-numeric probability"))?;
            if dist.is_empty() {
                return Err(Error::parse(line_no, "row has no probabilities"));
            }
            let table = profiles.get_or_insert_with(|| ItemProfiles::new(dist.len()));
            if dist.len() != table.num_topics {
                return Err(Error::parse(
                    line_no,
                    format!("expected {} probabilities, found {}", table.num_topics, dist.len()),
                ));
            }
            table.profiles.insert(item, dist);
        }
        Ok(profiles.unwrap_or_default())
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}
