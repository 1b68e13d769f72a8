//! Rating-log ingestion, implicit-feedback filtering and the temporal
//! train/probe split.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// One line of a rating log. User and item ids are opaque strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingEvent {
    pub user: String,
    pub item: String,
    pub rating: u8,
    pub timestamp: u64,
}

impl RatingEvent {
    pub fn new(
        user: impl Into<String>,
        item: impl Into<String>,
        rating: u8,
        timestamp: u64,
    ) -> Self {
        RatingEvent {
            user: user.into(),
            item: item.into(),
            rating,
            timestamp,
        }
    }
}

/// Field separator of a rating log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelimiterFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    #[default]
    Tab,
    /// `user::item::rating::timestamp`
    DoubleColon,
}

impl DelimiterFormat {
    fn separator(self) -> &'static str {
        match self {
            DelimiterFormat::Tab => "\t",
            DelimiterFormat::DoubleColon => "::",
        }
    }
}

/// Parses a line-oriented rating log.
///
/// Empty lines are ignored; any other line must carry exactly four fields
/// or the whole parse fails with the (one-based) line number.
pub fn parse_ratings<R: BufRead>(reader: R, format: DelimiterFormat) -> Result<Vec<RatingEvent>> {
    let sep = format.separator();
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(line_no, "empty user or item id"));
        }
        let rating: u8 = fields[2].parse().map_err(|_| {
            Error::parse(line_no, format!("rating {:?} is not an integer", fields[2]))
        })?;
        if !(1..=5).contains(&rating) {
            return Err(Error::parse(
                line_no,
                format!("rating {rating} outside 1..=5"),
            ));
        }
        let timestamp: u64 = fields[3].parse().map_err(|_| {
            Error::parse(
                line_no,
                format!("timestamp {:?} is not a non-negative integer", fields[3]),
            )
        })?;
        events.push(RatingEvent {
            user: fields[0].to_owned(),
            item: fields[1].to_owned(),
            rating,
            timestamp,
        });
    }
    Ok(events)
}

/// Writes events in the same text format [`parse_ratings`] reads.
pub fn write_ratings<W: Write>(
    mut out: W,
    events: &[RatingEvent],
    format: DelimiterFormat,
) -> Result<()> {
    let sep = format.separator();
    for e in events {
        writeln!(
            out,
            "{}{sep}{}{sep}{}{sep}{}",
            e.user, e.item, e.rating, e.timestamp
        )?;
    }
    Ok(())
}

/// Bidirectional map between external ids and dense internal indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next free one on first sight.
    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.external.len() as u32;
        self.external.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn external(&self, index: u32) -> &str {
        &self.external[index as usize]
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.external.iter().map(String::as_str)
    }

    /// Ids `"0"`, `"1"`, ... `"len-1"`.
    pub fn sequential(len: usize) -> Self {
        let mut map = IdMap::new();
        for i in 0..len {
            map.intern(&i.to_string());
        }
        map
    }

    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut map = IdMap::new();
        for id in ids {
            let id = id.as_ref();
            if map.get(id).is_some() {
                return Err(Error::Parameter(format!("duplicate id {id:?}")));
            }
            map.intern(id);
        }
        Ok(map)
    }
}

/// Sparse binary user-item adjacency with degree indexes.
///
/// Train and probe datasets produced by [`SplitDataset::prepare`] share their
/// id maps, so internal indices agree between them.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    users: Arc<IdMap>,
    items: Arc<IdMap>,
    user_items: Vec<Vec<u32>>,
    item_users: Vec<Vec<u32>>,
    user_degrees: Vec<u32>,
    item_degrees: Vec<u32>,
}

impl InteractionDataset {
    /// Builds the adjacency from internal `(user, item)` pairs; duplicates collapse.
    pub fn with_ids(
        users: Arc<IdMap>,
        items: Arc<IdMap>,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        let (m, n) = (users.len(), items.len());
        let mut user_items = vec![Vec::new(); m];
        for (u, i) in pairs {
            if u as usize >= m || i as usize >= n {
                return Err(Error::Parameter(format!(
                    "pair ({u}, {i}) outside a {m}x{n} adjacency"
                )));
            }
            user_items[u as usize].push(i);
        }
        let mut item_users = vec![Vec::new(); n];
        for (u, row) in user_items.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            for &i in row.iter() {
                item_users[i as usize].push(u as u32);
            }
        }
        let user_degrees = user_items.iter().map(|r| r.len() as u32).collect();
        let item_degrees = item_users.iter().map(|c| c.len() as u32).collect();
        Ok(InteractionDataset {
            users,
            items,
            user_items,
            item_users,
            user_degrees,
            item_degrees,
        })
    }

    /// Dataset with sequential external ids, mostly useful for tests.
    pub fn from_edges(
        m: usize,
        n: usize,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        Self::with_ids(
            Arc::new(IdMap::sequential(m)),
            Arc::new(IdMap::sequential(n)),
            pairs,
        )
    }

    /// Rebuilds a dataset over shared id maps from events whose ids are all known.
    pub fn from_events(
        users: Arc<IdMap>,
        items: Arc<IdMap>,
        events: &[RatingEvent],
    ) -> Result<Self> {
        let mut pairs = Vec::with_capacity(events.len());
        for e in events {
            let (Some(u), Some(i)) = (users.get(&e.user), items.get(&e.item)) else {
                return Err(Error::Parameter(format!(
                    "event ({}, {}) references an unknown id",
                    e.user, e.item
                )));
            };
            pairs.push((u, i));
        }
        Self::with_ids(users, items, pairs)
    }

    pub fn n_users(&self) -> usize {
        self.user_items.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_users.len()
    }

    pub fn nnz(&self) -> usize {
        self.user_items.iter().map(Vec::len).sum()
    }

    /// Items of user `u`, ascending.
    pub fn user_items(&self, u: usize) -> &[u32] {
        &self.user_items[u]
    }

    /// Users of item `i`, ascending.
    pub fn item_users(&self, i: usize) -> &[u32] {
        &self.item_users[i]
    }

    pub fn user_degrees(&self) -> &[u32] {
        &self.user_degrees
    }

    pub fn item_degrees(&self) -> &[u32] {
        &self.item_degrees
    }

    pub fn contains(&self, u: usize, i: u32) -> bool {
        self.user_items[u].binary_search(&i).is_ok()
    }

    pub fn users(&self) -> &Arc<IdMap> {
        &self.users
    }

    pub fn items(&self) -> &Arc<IdMap> {
        &self.items
    }

    /// Users with at least one interaction.
    pub fn active_users(&self) -> usize {
        self.user_degrees.iter().filter(|&&d| d > 0).count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u as u32, i)))
    }

    /// Re-derives both degree vectors and compares them with the stored ones.
    pub fn degrees_consistent(&self) -> bool {
        let rows_ok = self
            .user_items
            .iter()
            .zip(&self.user_degrees)
            .all(|(r, &d)| r.len() == d as usize);
        let mut cols = vec![0u32; self.n_items()];
        for (_, i) in self.pairs() {
            cols[i as usize] += 1;
        }
        rows_ok && cols == self.item_degrees
    }

    /// Writes the adjacency cache: header `m n nnz`, then one `i j` line per nonzero.
    pub fn write_adjacency<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.n_users(), self.n_items(), self.nnz())?;
        for (u, i) in self.pairs() {
            writeln!(out, "{u} {i}")?;
        }
        Ok(())
    }

    /// Reads an adjacency cache written by [`write_adjacency`](Self::write_adjacency).
    pub fn read_adjacency<R: BufRead>(
        reader: R,
        users: Arc<IdMap>,
        items: Arc<IdMap>,
    ) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(Error::parse(1, "missing header")),
        };
        let nums = parse_ints(&header, 3, 1)?;
        let (m, n, nnz) = (nums[0], nums[1], nums[2]);
        if m != users.len() as u64 || n != items.len() as u64 {
            return Err(Error::parse(
                1,
                format!(
                    "header {m}x{n} does not match id maps {}x{}",
                    users.len(),
                    items.len()
                ),
            ));
        }
        let mut pairs = Vec::with_capacity(nnz as usize);
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ij = parse_ints(&line, 2, idx + 1)?;
            pairs.push((ij[0] as u32, ij[1] as u32));
        }
        if pairs.len() as u64 != nnz {
            return Err(Error::parse(
                1,
                format!("header declares {nnz} pairs, found {}", pairs.len()),
            ));
        }
        Self::with_ids(users, items, pairs)
    }

    /// Serializes interactions as rating events (rating 5, timestamp 0), row by row.
    pub fn to_events(&self) -> Vec<RatingEvent> {
        self.pairs()
            .map(|(u, i)| RatingEvent::new(self.users.external(u), self.items.external(i), 5, 0))
            .collect()
    }
}

fn parse_ints(line: &str, expected: usize, line_no: usize) -> Result<Vec<u64>> {
    let nums = line
        .split_whitespace()
        .map(|f| f.parse::<u64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::parse(line_no, e.to_string()))?;
    if nums.len() != expected {
        return Err(Error::parse(
            line_no,
            format!("expected {expected} integers, found {}", nums.len()),
        ));
    }
    Ok(nums)
}

fn check_threshold(threshold: u8) -> Result<()> {
    if (1..=5).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "rating threshold {threshold} outside 1..=5"
        )))
    }
}

/// Binarizes events: an interaction exists iff some rating reaches `threshold`.
/// Indices follow first appearance among surviving events.
pub fn build_interactions(events: &[RatingEvent], threshold: u8) -> Result<InteractionDataset> {
    check_threshold(threshold)?;
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut pairs = Vec::new();
    for e in events.iter().filter(|e| e.rating >= threshold) {
        pairs.push((users.intern(&e.user), items.intern(&e.item)));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset { threshold });
    }
    InteractionDataset::with_ids(Arc::new(users), Arc::new(items), pairs)
}

/// Stable sort by timestamp, then the first `floor(ratio * count)` events train.
pub fn temporal_split(
    events: &[RatingEvent],
    ratio: f64,
) -> Result<(Vec<RatingEvent>, Vec<RatingEvent>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    if events.len() < 2 {
        return Err(Error::Split {
            count: events.len(),
        });
    }
    let mut sorted = events.to_vec();
    sorted.sort_by_key(|e| e.timestamp);
    // the epsilon keeps ratios like 0.29 * 100 from flooring to 28
    let cut = ((ratio * events.len() as f64) + 1e-9).floor() as usize;
    let probe = sorted.split_off(cut.min(events.len()));
    Ok((sorted, probe))
}

/// Train and probe adjacencies over shared id maps.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    pub probe: InteractionDataset,
}

impl SplitDataset {
    /// Filter by `threshold`, collapse duplicate pairs to their earliest event,
    /// then split the surviving interactions temporally.
    pub fn prepare(events: &[RatingEvent], threshold: u8, ratio: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let mut kept: Vec<RatingEvent> = Vec::new();
        let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
        for e in events.iter().filter(|e| e.rating >= threshold) {
            match seen.entry((e.user.as_str(), e.item.as_str())) {
                Entry::Occupied(slot) => {
                    let prev = &mut kept[*slot.get()];
                    if e.timestamp < prev.timestamp {
                        prev.timestamp = e.timestamp;
                    }
                }
                Entry::Vacant(slot) => {
                    slot.insert(kept.len());
                    kept.push(e.clone());
                }
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyDataset { threshold });
        }
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        for e in &kept {
            users.intern(&e.user);
            items.intern(&e.item);
        }
        let (users, items) = (Arc::new(users), Arc::new(items));
        let (train, probe) = temporal_split(&kept, ratio)?;
        Ok(SplitDataset {
            train: InteractionDataset::from_events(users.clone(), items.clone(), &train)?,
            probe: InteractionDataset::from_events(users, items, &probe)?,
        })
    }
}
