//! User personas: rating-weighted mixtures of the topic profiles of the
//! items a user rated.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::ingest::RatingDataset;
use crate::lda::ItemProfiles;
use crate::{Error, ItemId, Result, UserId};

#[derive(Debug, Clone, PartialEq)]
pub struct UserPersona {
    pub user: UserId,
    /// All zeros when no rated item had a profile.
    pub distribution: Vec<f64>,
    pub documented_item_count: usize,
}

impl UserPersona {
    pub fn is_defined(&self) -> bool {
        self.documented_item_count > 0
    }

    pub fn undefined(user: UserId, num_topics: usize) -> Self {
        UserPersona {
            user,
            distribution: vec![0.0; num_topics],
            documented_item_count: 0,
        }
    }
}

/// `sum_i (r_i / sum_j r_j) * theta_i` over the rated items that have a
/// profile. Undocumented items are left out of both sums.
pub fn build_persona(user: UserId, ratings: &[(ItemId, f64)], profiles: &ItemProfiles) -> UserPersona {
    let documented: Vec<(&[f64], f64)> = ratings
        .iter()
        .filter_map(|&(item, r)| profiles.get(item).map(|theta| (theta, r)))
        .collect();
    if documented.is_empty() {
        return UserPersona::undefined(user, profiles.num_topics());
    }
    let total: f64 = documented.iter().map(|&(_, r)| r).sum();
    let mut distribution = vec![0.0; profiles.num_topics()];
    for (theta, r) in &documented {
        let weight = r / total;
        for (acc, &p) in distribution.iter_mut().zip(theta.iter()) {
            *acc += weight * p;
        }
    }
    UserPersona {
        user,
        distribution,
        documented_item_count: documented.len(),
    }
}

/// One persona per user of `train`.
pub fn build_all_personas(train: &RatingDataset, profiles: &ItemProfiles) -> PersonaTable {
    let personas: Vec<UserPersona> = train
        .users()
        .par_iter()
        .map(|&user| build_persona(user, train.user_ratings(user), profiles))
        .collect();
    PersonaTable::from_personas(profiles.num_topics(), personas)
}

/// Topic distributions per user; `None` marks an undefined persona.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonaTable {
    num_topics: usize,
    entries: BTreeMap<UserId, Option<Vec<f64>>>,
}

impl PersonaTable {
    pub fn new(num_topics: usize) -> Self {
        PersonaTable {
            num_topics,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_personas(num_topics: usize, personas: impl IntoIterator<Item = UserPersona>) -> Self {
        let mut table = PersonaTable::new(num_topics);
        for p in personas {
            table.insert(p);
        }
        table
    }

    pub fn insert(&mut self, persona: UserPersona) {
        let entry = persona.is_defined().then_some(persona.distribution);
        self.entries.insert(persona.user, entry);
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    /// The user's distribution, `None` when undefined or unknown.
    pub fn get(&self, user: UserId) -> Option<&[f64]> {
        self.entries.get(&user).and_then(|e| e.as_deref())
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.entries.contains_key(&user)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn undefined_count(&self) -> usize {
        self.entries.values().filter(|e| e.is_none()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, Option<&[f64]>)> {
        self.entries.iter().map(|(&u, e)| (u, e.as_deref()))
    }

    /// `personas.csv`: `user_id,p_0,...,p_{T-1}` (zeros for undefined
    /// personas) and a `#undefined:<count>` trailer.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        let zeros = vec![0.0; self.num_topics];
        for (user, dist) in self.iter() {
            write!(sink, "{user}")?;
            for p in dist.unwrap_or(&zeros) {
                write!(sink, ",{p}")?;
            }
            writeln!(sink)?;
        }
        writeln!(sink, "#undefined:{}", self.undefined_count())?;
        sink.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut table: Option<PersonaTable> = None;
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let user: UserId = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::parse(line_no, "bad user id"))?;
            let dist = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| Error::parse(line_no, "non-numeric probability"))?;
            let t = table.get_or_insert_with(|| PersonaTable::new(dist.len()));
            if dist.len() != t.num_topics {
                return Err(Error::parse(
                    line_no,
                    format!("expected {} probabilities, found {}", t.num_topics, dist.len()),
                ));
            }
            let defined = dist.iter().any(|&p| p != 0.0);
            t.entries.insert(user, defined.then_some(dist));
        }
        Ok(table.unwrap_or_default())
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}
