//! Check-in log parsing, inactivity filtering, session splitting and
//! leave-one-out splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category assigned to records from logs that carry none.
pub const UNKNOWN_CATEGORY: &str = "UNKNOWN";

const FOURSQUARE_TIME: &str = "%a %b %d %H:%M:%S %z %Y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Foursquare,
    Gowalla,
}

impl FromStr for LogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "foursquare" | "4sq" => Ok(LogFormat::Foursquare),
            "gowalla" => Ok(LogFormat::Gowalla),
            other => Err(Error::Config(format!(
                "unknown log format `{other}` (expected foursquare or gowalla)"
            ))),
        }
    }
}

impl fmt::Display for LogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogFormat::Foursquare => "foursquare",
            LogFormat::Gowalla => "gowalla",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: String,
    pub poi_id: String,
    pub category_id: String,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl CheckIn {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Data(format!(
                "coordinates ({}, {}) out of bounds",
                self.lat, self.lon
            )));
        }
        if self.timestamp < 0 {
            return Err(Error::Data(format!("negative timestamp {}", self.timestamp)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub checkins: Vec<CheckIn>,
    /// Lines that could not be parsed, skipped.
    pub malformed: usize,
}

/// Reads one check-in per well-formed line, in file order. Blank lines are
/// ignored; any other unparseable line is skipped and tallied.
pub fn parse_checkins(path: &Path, format: LogFormat) -> Result<ParseOutcome> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = ParseOutcome::default();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, format) {
            Ok(c) => out.checkins.push(c),
            Err(e) => {
                log::warn!("{}:{}: skipping malformed line: {e}", path.display(), lineno + 1);
                out.malformed += 1;
            }
        }
    }
    if out.malformed > 0 {
        log::warn!(
            "{}: {} malformed line(s) skipped",
            path.display(),
            out.malformed
        );
    }
    Ok(out)
}

pub fn parse_line(line: &str, format: LogFormat) -> Result<CheckIn> {
    let fields: Vec<&str> = line.split('\t').collect();
    let bad = |what: &str| Error::Data(format!("{what} in `{line}`"));
    let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| bad(what));
    let checkin = match format {
        LogFormat::Foursquare => {
            if fields.len() != 8 {
                return Err(bad(&format!("expected 8 fields, found {}", fields.len())));
            }
            let ts = DateTime::parse_from_str(fields[7].trim(), FOURSQUARE_TIME)
                .map_err(|_| bad("unparseable timestamp"))?;
            CheckIn {
                user_id: fields[0].to_string(),
                poi_id: fields[1].to_string(),
                category_id: fields[2].to_string(),
                timestamp: ts.timestamp(),
                lat: num(fields[4], "bad latitude")?,
                lon: num(fields[5], "bad longitude")?,
            }
        }
        LogFormat::Gowalla => {
            if fields.len() != 5 {
                return Err(bad(&format!("expected 5 fields, found {}", fields.len())));
            }
            let ts = parse_iso8601(fields[1].trim()).ok_or_else(|| bad("unparseable timestamp"))?;
            CheckIn {
                user_id: fields[0].to_string(),
                poi_id: fields[4].to_string(),
                category_id: UNKNOWN_CATEGORY.to_string(),
                timestamp: ts,
                lat: num(fields[2], "bad latitude")?,
                lon: num(fields[3], "bad longitude")?,
            }
        }
    };
    if checkin.user_id.is_empty() || checkin.poi_id.is_empty() {
        return Err(bad("empty identifier"));
    }
    checkin.validate()?;
    Ok(checkin)
}

fn parse_iso8601(s: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    let naive = s.strip_suffix('Z').unwrap_or(s);
    NaiveDateTime::parse_from_str(naive, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|n| n.and_utc().timestamp())
}

/// Writes check-ins in the given log format. Fields the log format carries
/// but [`CheckIn`] does not keep are filled with neutral values (category
/// name = category id, timezone offset 0).
pub fn write_checkins(path: &Path, format: LogFormat, checkins: &[CheckIn]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in checkins {
        let time = Utc
            .timestamp_opt(c.timestamp, 0)
            .single()
            .ok_or_else(|| Error::Data(format!("timestamp {} out of range", c.timestamp)))?;
        let line = match format {
            LogFormat::Foursquare => format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t0\t{}",
                c.user_id,
                c.poi_id,
                c.category_id,
                c.category_id,
                c.lat,
                c.lon,
                time.format("%a %b %d %H:%M:%S +0000 %Y")
            ),
            LogFormat::Gowalla => format!(
                "{}\t{}\t{}\t{}\t{}",
                c.user_id,
                time.format("%Y-%m-%dT%H:%M:%SZ"),
                c.lat,
                c.lon,
                c.poi_id
            ),
        };
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Drops users with fewer than `min_user_visits` records and POIs visited by
/// fewer than `min_poi_users` distinct users, repeating until neither rule
/// removes anything. Relative order of survivors is preserved.
pub fn filter_inactive(
    checkins: Vec<CheckIn>,
    min_user_visits: usize,
    min_poi_users: usize,
) -> Vec<CheckIn> {
    let mut current = checkins;
    loop {
        let mut user_visits: HashMap<&str, usize> = HashMap::new();
        let mut poi_users: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for c in &current {
            *user_visits.entry(&c.user_id).or_default() += 1;
            poi_users.entry(&c.poi_id).or_default().insert(&c.user_id);
        }
        let keep: Vec<bool> = current
            .iter()
            .map(|c| {
                user_visits[c.user_id.as_str()] >= min_user_visits
                    && poi_users[c.poi_id.as_str()].len() >= min_poi_users
            })
            .collect();
        if keep.iter().all(|&k| k) {
            return current;
        }
        current = current
            .into_iter()
            .zip(keep)
            .filter_map(|(c, k)| k.then_some(c))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub checkins: Vec<CheckIn>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.checkins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkins.is_empty()
    }

    pub fn poi_ids(&self) -> impl Iterator<Item = &str> {
        self.checkins.iter().map(|c| c.poi_id.as_str())
    }

    fn slice(&self, end: usize) -> Trajectory {
        Trajectory {
            user_id: self.user_id.clone(),
            checkins: self.checkins[..end].to_vec(),
        }
    }
}

/// Splits one user's check-ins wherever consecutive timestamps are more
/// than `gap_secs` apart. Input is stably sorted by timestamp first.
pub fn split_sessions(mut user_checkins: Vec<CheckIn>, gap_secs: i64) -> Vec<Trajectory> {
    user_checkins.sort_by_key(|c| c.timestamp);
    let mut sessions: Vec<Trajectory> = Vec::new();
    let mut prev: Option<i64> = None;
    for c in user_checkins {
        let split = prev.is_none_or(|p| c.timestamp - p > gap_secs);
        prev = Some(c.timestamp);
        if split {
            sessions.push(Trajectory {
                user_id: c.user_id.clone(),
                checkins: Vec::new(),
            });
        }
        sessions.last_mut().expect("session opened").checkins.push(c);
    }
    sessions
}

/// Keeps the most recent `max_len` check-ins.
pub fn truncate_recent(mut traj: Trajectory, max_len: usize) -> Trajectory {
    assert!(max_len >= 1, "maximum trajectory length must be at least 1");
    let excess = traj.checkins.len().saturating_sub(max_len);
    traj.checkins.drain(..excess);
    traj
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub prefix: Trajectory,
    pub target: CheckIn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeaveOneOut {
    Split {
        train: Trajectory,
        val: EvalPair,
        test: EvalPair,
    },
    /// Fewer than three check-ins: the trajectory is used for training only.
    TrainOnly(Trajectory),
}

pub fn leave_one_out(traj: Trajectory) -> LeaveOneOut {
    let n = traj.len();
    if n < 3 {
        return LeaveOneOut::TrainOnly(traj);
    }
    LeaveOneOut::Split {
        train: traj.slice(n - 2),
        val: EvalPair {
            prefix: traj.slice(n - 2),
            target: traj.checkins[n - 2].clone(),
        },
        test: EvalPair {
            prefix: traj.slice(n - 1),
            target: traj.checkins[n - 1].clone(),
        },
    }
}

/// Dense catalog index of a POI. Index order is ascending `poi_id` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoiIdx(pub u32);

impl PoiIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Dense category index. Index order is ascending `category_id` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryIdx(pub u32);

impl CategoryIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub category_id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pois: Vec<Poi>,
    by_id: HashMap<String, PoiIdx>,
    categories: Vec<String>,
    poi_category: Vec<CategoryIdx>,
}

impl Catalog {
    /// Builds a catalog from POI records; duplicates keep their first record.
    pub fn new(pois: impl IntoIterator<Item = Poi>) -> Result<Self> {
        let mut unique: BTreeMap<String, Poi> = BTreeMap::new();
        for p in pois {
            if !(-90.0..=90.0).contains(&p.lat) || !(-180.0..=180.0).contains(&p.lon) {
                return Err(Error::Data(format!(
                    "POI {} has out-of-bounds coordinates ({}, {})",
                    p.poi_id, p.lat, p.lon
                )));
            }
            unique.entry(p.poi_id.clone()).or_insert(p);
        }
        let pois: Vec<Poi> = unique.into_values().collect();
        let categories: Vec<String> = pois
            .iter()
            .map(|p| p.category_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cat_index: HashMap<&str, CategoryIdx> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), CategoryIdx(i as u32)))
            .collect();
        let poi_category = pois.iter().map(|p| cat_index[p.category_id.as_str()]).collect();
        let by_id = pois
            .iter()
            .enumerate()
            .map(|(i, p)| (p.poi_id.clone(), PoiIdx(i as u32)))
            .collect();
        Ok(Self {
            pois,
            by_id,
            categories,
            poi_category,
        })
    }

    /// One catalog entry per distinct POI, taking category and coordinates
    /// from its first check-in.
    pub fn from_checkins<'a>(checkins: impl IntoIterator<Item = &'a CheckIn>) -> Result<Self> {
        Self::new(checkins.into_iter().map(|c| Poi {
            poi_id: c.poi_id.clone(),
            category_id: c.category_id.clone(),
            lat: c.lat,
            lon: c.lon,
        }))
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn poi(&self, idx: PoiIdx) -> &Poi {
        &self.pois[idx.index()]
    }

    pub fn lookup(&self, poi_id: &str) -> Option<PoiIdx> {
        self.by_id.get(poi_id).copied()
    }

    pub fn resolve(&self, poi_id: &str) -> Result<PoiIdx> {
        self.lookup(poi_id)
            .ok_or_else(|| Error::Data(format!("POI `{poi_id}` is not in the catalog")))
    }

    pub fn category(&self, idx: PoiIdx) -> CategoryIdx {
        self.poi_category[idx.index()]
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn coords(&self, idx: PoiIdx) -> (f64, f64) {
        let p = &self.pois[idx.index()];
        (p.lat, p.lon)
    }

    pub fn indices(&self) -> impl Iterator<Item = PoiIdx> {
        (0..self.pois.len() as u32).map(PoiIdx)
    }

    pub fn sequence(&self, traj: &Trajectory) -> Result<Vec<PoiIdx>> {
        traj.poi_ids().map(|id| self.resolve(id)).collect()
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for p in &self.pois {
            writeln!(w, "{}\t{}\t{}\t{}", p.poi_id, p.category_id, p.lat, p.lon)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pois = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Data(format!("{}:{}: malformed catalog line", path.display(), n + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            pois.push(Poi {
                poi_id: f[0].to_string(),
                category_id: f[1].to_string(),
                lat: f[2].parse().map_err(|_| bad())?,
                lon: f[3].parse().map_err(|_| bad())?,
            });
        }
        Self::new(pois)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub min_user_visits: usize,
    pub min_poi_users: usize,
    pub gap_secs: i64,
    pub max_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_user_visits: 10,
            min_poi_users: 10,
            gap_secs: 24 * 3600,
            max_len: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub users: usize,
    pub pois: usize,
    pub checkins: usize,
    pub trajectories: usize,
}

impl CorpusStats {
    pub fn of_checkins(checkins: &[CheckIn]) -> Self {
        let users: BTreeSet<&str> = checkins.iter().map(|c| c.user_id.as_str()).collect();
        let pois: BTreeSet<&str> = checkins.iter().map(|c| c.poi_id.as_str()).collect();
        Self {
            users: users.len(),
            pois: pois.len(),
            checkins: checkins.len(),
            trajectories: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub catalog: Catalog,
    pub trajectories: Vec<Trajectory>,
    pub before: CorpusStats,
    pub after: CorpusStats,
}

/// Filter, then group by user (ascending user id), split into sessions and
/// keep the most recent `max_len` check-ins of each.
pub fn preprocess(checkins: Vec<CheckIn>, config: &PreprocessConfig) -> Result<Preprocessed> {
    if config.min_user_visits == 0 || config.min_poi_users == 0 || config.max_len == 0 {
        return Err(Error::Config("preprocessing thresholds must be at least 1".into()));
    }
    let before = CorpusStats::of_checkins(&checkins);
    let kept = filter_inactive(checkins, config.min_user_visits, config.min_poi_users);
    let catalog = Catalog::from_checkins(&kept)?;
    let mut after = CorpusStats::of_checkins(&kept);

    let mut by_user: BTreeMap<String, Vec<CheckIn>> = BTreeMap::new();
    for c in kept {
        by_user.entry(c.user_id.clone()).or_default().push(c);
    }
    let trajectories: Vec<Trajectory> = by_user
        .into_values()
        .flat_map(|cs| split_sessions(cs, config.gap_secs))
        .map(|t| truncate_recent(t, config.max_len))
        .collect();
    after.trajectories = trajectories.len();
    Ok(Preprocessed {
        catalog,
        trajectories,
        before,
        after,
    })
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    user: String,
    checkins: Vec<(String, i64)>,
}

/// One JSON record per line: `{"user": .., "checkins": [[poi_id, ts], ..]}`.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in trajectories {
        let rec = TrajectoryRecord {
            user: t.user_id.clone(),
            checkins: t
                .checkins
                .iter()
                .map(|c| (c.poi_id.clone(), c.timestamp))
                .collect(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads trajectories written by [`write_trajectories`], restoring category
/// and coordinates from the catalog.
pub fn read_trajectories(path: &Path, catalog: &Catalog) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let mut checkins = Vec::with_capacity(rec.checkins.len());
        for (poi_id, timestamp) in rec.checkins {
            let poi = catalog.poi(catalog.resolve(&poi_id)?);
            checkins.push(CheckIn {
                user_id: rec.user.clone(),
                category_id: poi.category_id.clone(),
                lat: poi.lat,
                lon: poi.lon,
                poi_id,
                timestamp,
            });
        }
        if checkins.is_empty() {
            return Err(Error::Data(format!("{}:{}: empty trajectory", path.display(), n + 1)));
        }
        out.push(Trajectory {
            user_id: rec.user,
            checkins,
        });
    }
    Ok(out)
}

/// A POI-index sequence with its next-visit target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub prefix: Vec<PoiIdx>,
    pub target: PoiIdx,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub catalog: Catalog,
    pub train: Vec<Trajectory>,
    pub val: Vec<EvalPair>,
    pub test: Vec<EvalPair>,
}

impl DatasetSplit {
    pub fn from_trajectories(catalog: Catalog, trajectories: Vec<Trajectory>) -> Self {
        let mut split = DatasetSplit {
            catalog,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for t in trajectories {
            match leave_one_out(t) {
                LeaveOneOut::Split { train, val, test } => {
                    split.train.push(train);
                    split.val.push(val);
                    split.test.push(test);
                }
                LeaveOneOut::TrainOnly(t) => split.train.push(t),
            }
        }
        split
    }

    /// Training POI sequences (train portions of every trajectory).
    pub fn train_sequences(&self) -> Result<Vec<Vec<PoiIdx>>> {
        self.train.iter().map(|t| self.catalog.sequence(t)).collect()
    }

    /// Supervised next-POI samples from the training portions. With
    /// `all_prefixes` every position after the first is a target; otherwise
    /// only the final transition of each trajectory.
    pub fn train_samples(&self, all_prefixes: bool) -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        for seq in self.train_sequences()? {
            if seq.len() < 2 {
                continue;
            }
            let first = if all_prefixes { 1 } else { seq.len() - 1 };
            for end in first..seq.len() {
                out.push(Sample {
                    prefix: seq[..end].to_vec(),
                    target: seq[end],
                });
            }
        }
        Ok(out)
    }

    pub fn eval_samples(&self, pairs: &[EvalPair]) -> Result<Vec<Sample>> {
        pairs
            .iter()
            .map(|p| {
                Ok(Sample {
                    prefix: self.catalog.sequence(&p.prefix)?,
                    target: self.catalog.resolve(&p.target.poi_id)?,
                })
            })
            .collect()
    }
}
