//! Rating data model: users, items, normalized ratings, and the indexes the
//! ranking algorithms iterate over.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

/// Dense user index. External string ids are interned at ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub usize);

/// Dense item index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub usize);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid rating bounds: lower {0} must be >= 1 and < upper {1}")]
    BadBounds(u32, u32),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: rating {value} outside [{lo}, {hi}]")]
    RatingOutOfRange {
        line: usize,
        value: i64,
        lo: u32,
        hi: u32,
    },
    #[error("rating value {0} outside ]0, 1]")]
    ValueOutOfRange(f64),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Original integer rating bounds; all internal values are divided by the
/// upper bound so the maximum rating maps to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingScale {
    pub r_bot: u32,
    pub r_top: u32,
}

impl RatingScale {
    pub fn new(r_bot: u32, r_top: u32) -> Result<Self, GraphError> {
        if r_bot < 1 || r_bot >= r_top {
            return Err(GraphError::BadBounds(r_bot, r_top));
        }
        Ok(Self { r_bot, r_top })
    }

    pub fn normalize(&self, raw: u32) -> f64 {
        f64::from(raw) / f64::from(self.r_top)
    }

    /// Raw grid value for a normalized rating produced by `normalize`.
    pub fn to_raw(&self, value: f64) -> u32 {
        (value * f64::from(self.r_top)).round() as u32
    }

    /// Normalized rating spread: 1 - r_bot/r_top.
    pub fn delta(&self) -> f64 {
        1.0 - f64::from(self.r_bot) / f64::from(self.r_top)
    }

    pub fn min_normalized(&self) -> f64 {
        self.normalize(self.r_bot)
    }

    /// Allowed raw grid value whose normalized form is nearest to `x`.
    /// Exact midpoints resolve to the lower grade.
    pub fn nearest_raw(&self, x: f64) -> u32 {
        let mut best = self.r_bot;
        let mut best_dist = (self.normalize(self.r_bot) - x).abs();
        for raw in self.r_bot + 1..=self.r_top {
            let d = (self.normalize(raw) - x).abs();
            if d < best_dist {
                best = raw;
                best_dist = d;
            }
        }
        best
    }
}

/// One rating held by a user, with its source timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub item: ItemId,
    pub value: f64,
    pub timestamp: i64,
}

/// Immutable user-item rating graph with per-user and per-item indexes.
#[derive(Debug, Clone)]
pub struct RatingGraph {
    scale: RatingScale,
    user_names: Vec<String>,
    item_names: Vec<String>,
    user_ids: HashMap<String, UserId>,
    item_ids: HashMap<String, ItemId>,
    by_user: Vec<Vec<Rating>>,
    by_item: Vec<Vec<(UserId, f64)>>,
    n_ratings: usize,
}

impl RatingGraph {
    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn n_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.n_ratings
    }

    pub fn user_name(&self, u: UserId) -> &str {
        &self.user_names[u.0]
    }

    pub fn item_name(&self, i: ItemId) -> &str {
        &self.item_names[i.0]
    }

    pub fn user_id(&self, name: &str) -> Option<UserId> {
        self.user_ids.get(name).copied()
    }

    pub fn item_id(&self, name: &str) -> Option<ItemId> {
        self.item_ids.get(name).copied()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.n_users()).map(UserId)
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        (0..self.n_items()).map(ItemId)
    }

    /// Ratings given by `u`, sorted by item index.
    pub fn ratings_of(&self, u: UserId) -> &[Rating] {
        &self.by_user[u.0]
    }

    /// Raters of `i` with their normalized ratings, sorted by user index.
    pub fn raters_of(&self, i: ItemId) -> &[(UserId, f64)] {
        &self.by_item[i.0]
    }

    pub fn rating(&self, u: UserId, i: ItemId) -> Option<f64> {
        self.by_user[u.0]
            .binary_search_by_key(&i, |r| r.item)
            .ok()
            .map(|k| self.by_user[u.0][k].value)
    }

    /// Parses a `user_id,item_id,rating,timestamp` CSV file. A first line whose
    /// rating column is not numeric is treated as a header; lines starting with
    /// `#` and blank lines are skipped. Duplicate (user, item) rows keep the
    /// latest timestamp, with later file position breaking ties.
    pub fn ingest(path: impl AsRef<Path>, r_bot: u32, r_top: u32) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        Self::ingest_reader(BufReader::new(file), r_bot, r_top)
    }

    pub fn ingest_reader(reader: impl BufRead, r_bot: u32, r_top: u32) -> Result<Self, GraphError> {
        let scale = RatingScale::new(r_bot, r_top)?;
        let mut builder = GraphBuilder::new(scale);
        let mut saw_data = false;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: format!("expected 4 comma-separated fields, found {}", fields.len()),
                });
            }
            let raw = match parse_integral(fields[2]) {
                Some(v) => v,
                None if !saw_data => continue, // header row
                None => {
                    return Err(GraphError::Parse {
                        line: lineno,
                        msg: format!("rating {:?} is not an integer", fields[2]),
                    })
                }
            };
            saw_data = true;
            if raw < i64::from(r_bot) || raw > i64::from(r_top) {
                return Err(GraphError::RatingOutOfRange {
                    line: lineno,
                    value: raw,
                    lo: r_bot,
                    hi: r_top,
                });
            }
            let timestamp: i64 = fields[3].parse().map_err(|_| GraphError::Parse {
                line: lineno,
                msg: format!("timestamp {:?} is not an integer", fields[3]),
            })?;
            let u = builder.user(fields[0]);
            let i = builder.item(fields[1]);
            builder.rate_raw(u, i, raw as u32, timestamp);
        }
        Ok(builder.finish())
    }

    /// Writes the graph in the ingest format with raw-scale ratings, rows
    /// sorted by user then item index.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "user_id,item_id,rating,timestamp")?;
        for u in self.users() {
            for r in self.ratings_of(u) {
                writeln!(
                    w,
                    "{},{},{},{}",
                    self.user_name(u),
                    self.item_name(r.item),
                    self.scale.to_raw(r.value),
                    r.timestamp
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn popularity(&self) -> ItemPopularity {
        let counts: Vec<usize> = self.by_item.iter().map(Vec::len).collect();
        let mut by_count: Vec<ItemId> = self.items().collect();
        by_count.sort_by(|a, b| {
            counts[b.0]
                .cmp(&counts[a.0])
                .then_with(|| self.item_name(*a).cmp(self.item_name(*b)))
        });
        ItemPopularity {
            total: self.n_ratings,
            counts,
            by_count,
        }
    }
}

impl PartialEq for RatingGraph {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale && canonical_rows(self) == canonical_rows(other)
    }
}

fn canonical_rows(g: &RatingGraph) -> Vec<(String, String, u64, i64)> {
    let mut rows: Vec<_> = g
        .users()
        .flat_map(|u| {
            g.ratings_of(u).iter().map(move |r| {
                (
                    g.user_name(u).to_owned(),
                    g.item_name(r.item).to_owned(),
                    r.value.to_bits(),
                    r.timestamp,
                )
            })
        })
        .collect();
    rows.sort();
    rows
}

fn parse_integral(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = s.parse().ok()?;
    (f.fract() == 0.0 && f.abs() < 1e15).then_some(f as i64)
}

/// Mutable accumulator for constructing a [`RatingGraph`].
#[derive(Debug)]
pub struct GraphBuilder {
    scale: RatingScale,
    user_names: Vec<String>,
    item_names: Vec<String>,
    user_ids: HashMap<String, UserId>,
    item_ids: HashMap<String, ItemId>,
    rows: Vec<(UserId, ItemId, f64, i64)>,
}

impl GraphBuilder {
    pub fn new(scale: RatingScale) -> Self {
        Self {
            scale,
            user_names: Vec::new(),
            item_names: Vec::new(),
            user_ids: HashMap::new(),
            item_ids: HashMap::new(),
            rows: Vec::new(),
        }
    }

    /// Seeds a builder with every user, item, and rating of an existing graph.
    pub fn from_graph(g: &RatingGraph) -> Self {
        let mut b = Self::new(g.scale);
        b.user_names = g.user_names.clone();
        b.item_names = g.item_names.clone();
        b.user_ids = g.user_ids.clone();
        b.item_ids = g.item_ids.clone();
        for u in g.users() {
            for r in g.ratings_of(u) {
                b.rows.push((u, r.item, r.value, r.timestamp));
            }
        }
        b
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    /// Interns a user name, returning its dense id.
    pub fn user(&mut self, name: &str) -> UserId {
        if let Some(&u) = self.user_ids.get(name) {
            return u;
        }
        let u = UserId(self.user_names.len());
        self.user_names.push(name.to_owned());
        self.user_ids.insert(name.to_owned(), u);
        u
    }

    pub fn item(&mut self, name: &str) -> ItemId {
        if let Some(&i) = self.item_ids.get(name) {
            return i;
        }
        let i = ItemId(self.item_names.len());
        self.item_names.push(name.to_owned());
        self.item_ids.insert(name.to_owned(), i);
        i
    }

    pub fn has_user(&self, name: &str) -> bool {
        self.user_ids.contains_key(name)
    }

    /// Records a raw-scale rating. Bounds are the caller's responsibility at
    /// this level; `ingest` validates them with line numbers.
    pub fn rate_raw(&mut self, u: UserId, i: ItemId, raw: u32, timestamp: i64) {
        let value = self.scale.normalize(raw);
        self.rows.push((u, i, value, timestamp));
    }

    /// Records an already-normalized rating in ]0, 1]. Bribed ratings land off
    /// the discrete grid, so no grid check is applied.
    pub fn rate_value(
        &mut self,
        u: UserId,
        i: ItemId,
        value: f64,
        timestamp: i64,
    ) -> Result<(), GraphError> {
        if !(value > 0.0 && value <= 1.0 + 1e-9) {
            return Err(GraphError::ValueOutOfRange(value));
        }
        self.rows.push((u, i, value.min(1.0), timestamp));
        Ok(())
    }

    pub fn finish(self) -> RatingGraph {
        let n_users = self.user_names.len();
        let n_items = self.item_names.len();
        // Latest timestamp wins per (user, item); later row position breaks ties.
        let mut latest: HashMap<(UserId, ItemId), (i64, usize)> = HashMap::new();
        for (pos, &(u, i, _, ts)) in self.rows.iter().enumerate() {
            match latest.get(&(u, i)) {
                Some(&(best_ts, _)) if best_ts > ts => {}
                _ => {
                    latest.insert((u, i), (ts, pos));
                }
            }
        }
        let mut by_user: Vec<Vec<Rating>> = vec![Vec::new(); n_users];
        let mut by_item: Vec<Vec<(UserId, f64)>> = vec![Vec::new(); n_items];
        let mut keep: Vec<usize> = latest.values().map(|&(_, pos)| pos).collect();
        keep.sort_unstable();
        for pos in keep {
            let (u, i, value, ts) = self.rows[pos];
            by_user[u.0].push(Rating {
                item: i,
                value,
                timestamp: ts,
            });
            by_item[i.0].push((u, value));
        }
        for ratings in &mut by_user {
            ratings.sort_by_key(|r| r.item);
        }
        for raters in &mut by_item {
            raters.sort_by_key(|&(u, _)| u);
        }
        let n_ratings = by_user.iter().map(Vec::len).sum();
        RatingGraph {
            scale: self.scale,
            user_names: self.user_names,
            item_names: self.item_names,
            user_ids: self.user_ids,
            item_ids: self.item_ids,
            by_user,
            by_item,
            n_ratings,
        }
    }
}

/// Per-item rating counts with a deterministic popularity order.
#[derive(Debug, Clone)]
pub struct ItemPopularity {
    counts: Vec<usize>,
    by_count: Vec<ItemId>,
    total: usize,
}

impl ItemPopularity {
    pub fn count(&self, i: ItemId) -> usize {
        self.counts[i.0]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Items by decreasing count; ties broken by lexicographic item name.
    pub fn ranked(&self) -> &[ItemId] {
        &self.by_count
    }

    pub fn most_voted(&self) -> Option<ItemId> {
        self.by_count.first().copied()
    }
}
