use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::InteractionMatrix;

/// Pairs read from one split file, in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawPairs {
    pub pairs: Vec<(String, String)>,
    /// Lines that repeated an earlier pair.
    pub duplicates: usize,
    /// 1-based numbers of non-empty lines with fewer than two fields.
    pub malformed_lines: Vec<usize>,
}

impl RawPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn push(&mut self, seen: &mut HashSet<(String, String)>, user: &str, item: &str) {
        let pair = (user.to_owned(), item.to_owned());
        if seen.insert(pair.clone()) {
            self.pairs.push(pair);
        } else {
            self.duplicates += 1;
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `<user> <item> [ignored...]` lines.
pub fn parse_interactions(text: &str) -> RawPairs {
    let mut out = RawPairs::default();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        match (fields.next(), fields.next()) {
            (None, _) => {}
            (Some(u), Some(i)) => out.push(&mut seen, u, i),
            (Some(_), None) => out.malformed_lines.push(n + 1),
        }
    }
    out
}

/// Parses adjacency lines `<user> <item> <item> ...`. A user with no items
/// contributes nothing.
pub fn parse_adjacency(text: &str) -> RawPairs {
    let mut out = RawPairs::default();
    let mut seen = HashSet::new();
    for line in text.lines() {
        let mut fields = line.split_whitespace();
        if let Some(u) = fields.next() {
            for i in fields {
                out.push(&mut seen, u, i);
            }
        }
    }
    out
}

fn require_lines(path: &Path, pairs: RawPairs) -> Result<RawPairs> {
    if pairs.is_empty() {
        return Err(Error::NoValidLines { path: path.to_path_buf() });
    }
    Ok(pairs)
}

/// Reads a whitespace-separated pair file.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<RawPairs> {
    let path = path.as_ref();
    require_lines(path, parse_interactions(&read_text(path)?))
}

/// Reads an adjacency-list file (one user per line followed by its items).
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<RawPairs> {
    let path = path.as_ref();
    require_lines(path, parse_adjacency(&read_text(path)?))
}

/// Bijection between external ids and dense indices.
///
/// Ids are ordered numerically when every id parses as an integer and
/// lexicographically otherwise, so the mapping does not depend on input
/// order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Self {
        let mut external: Vec<String> = ids.into_iter().collect::<HashSet<_>>().into_iter().map(str::to_owned).collect();
        let numeric: Option<Vec<i128>> = external.iter().map(|s| s.parse::<i128>().ok()).collect();
        match numeric {
            Some(_) => external.sort_by_cached_key(|s| (s.parse::<i128>().unwrap(), s.clone())),
            None => external.sort(),
        }
        let index = external.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { external, index }
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, index: usize) -> Option<&str> {
        self.external.get(index).map(String::as_str)
    }

    pub fn externals(&self) -> &[String] {
        &self.external
    }
}

/// Train / validation / test matrices over one shared id space.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

impl DatasetBundle {
    /// Wraps already-indexed matrices, with ids `0..n` as external ids.
    pub fn from_matrices(
        name: impl Into<String>,
        train: InteractionMatrix,
        validation: InteractionMatrix,
        test: InteractionMatrix,
    ) -> Result<Self> {
        if train.shape() != validation.shape() || train.shape() != test.shape() {
            return Err(Error::DimensionMismatch(format!(
                "split shapes differ: {:?} {:?} {:?}",
                train.shape(),
                validation.shape(),
                test.shape()
            )));
        }
        let ids = |n: usize| {
            let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            IdMap::from_ids(names.iter().map(String::as_str))
        };
        Ok(Self {
            name: name.into(),
            user_ids: ids(train.num_users()),
            item_ids: ids(train.num_items()),
            train,
            validation,
            test,
        })
    }

    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    /// Mask used when ranking for the test split.
    pub fn train_and_validation(&self) -> Result<InteractionMatrix> {
        self.train.union(&self.validation)
    }
}

/// Builds the three matrices over the union of ids from all splits.
pub fn build_bundle(
    name: impl Into<String>,
    train: &RawPairs,
    validation: &RawPairs,
    test: &RawPairs,
) -> Result<DatasetBundle> {
    if train.is_empty() {
        return Err(Error::Empty("train split has no interactions".into()));
    }
    let all = || train.pairs.iter().chain(&validation.pairs).chain(&test.pairs);
    let user_ids = IdMap::from_ids(all().map(|(u, _)| u.as_str()));
    let item_ids = IdMap::from_ids(all().map(|(_, i)| i.as_str()));
    let build = |raw: &RawPairs| {
        let pairs = raw.pairs.iter().map(|(u, i)| (user_ids.index[u], item_ids.index[i]));
        let m = InteractionMatrix::from_pairs(user_ids.len(), item_ids.len(), pairs)?;
        m.check_invariants()?;
        Ok::<_, Error>(m)
    };
    Ok(DatasetBundle {
        name: name.into(),
        train: build(train)?,
        validation: build(validation)?,
        test: build(test)?,
        user_ids,
        item_ids,
    })
}
