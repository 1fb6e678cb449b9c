//! Event-log ingestion, chronological splitting, interval batching and the
//! synthetic sequential-interaction-network generator.
//!
//! Event-log format: UTF-8 text, one header line, comma-separated columns
//! `user_id,item_id,timestamp[,state_label[,f1,...,fk]]`. Timestamps are
//! real-valued seconds; the state-label column is accepted and ignored.
//! Ids may be arbitrary tokens and are remapped to dense ranges in order of
//! first appearance after time-sorting; the mapping is retained on the
//! [`Dataset`].

use std::collections::HashMap;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no events")]
    NoEvents,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: expected {expected} columns, found {got}")]
    ColumnCount { line: usize, expected: usize, got: usize },
    #[error("invalid sizes: {0}")]
    InvalidSizes(&'static str),
    #[error("split fractions must be non-negative with a positive train share summing to 1")]
    InvalidFractions,
    #[error("dataset of {0} events is too small to split")]
    TooSmall(usize),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One timestamped user-item interaction, the atom of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEvent {
    pub user: u32,
    pub item: u32,
    pub t: f64,
    pub features: Vec<f64>,
}

/// A parsed, time-sorted interaction log with dense ids.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub events: Vec<InteractionEvent>,
    pub n_users: usize,
    pub n_items: usize,
    /// Width of per-event attribute vectors; zero for feature-less logs.
    pub feature_dim: usize,
    /// Dense id -> original token.
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Per-entity features; empty when the source provides none.
    pub user_features: Vec<Vec<f64>>,
    pub item_features: Vec<Vec<f64>>,
}

/// A contiguous time slice of a dataset's event sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBatch {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub range: Range<usize>,
}

impl IntervalBatch {
    pub fn events<'a>(&self, ds: &'a Dataset) -> &'a [InteractionEvent] {
        &ds.events[self.range.clone()]
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Parses an event log from a file path.
pub fn parse(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_str(&text)
}

/// Parses an event log from raw bytes (must be UTF-8).
pub fn parse_bytes(bytes: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| DataError::Malformed {
        line: 0,
        reason: format!("not valid UTF-8: {e}"),
    })?;
    parse_str(text)
}

/// Parses an event log from text. Rows out of time order are sorted with a
/// warning; malformed rows abort with their line number.
pub fn parse_str(text: &str) -> Result<Dataset> {
    struct RawRow {
        user: String,
        item: String,
        t: f64,
        features: Vec<f64>,
    }
    let mut rows: Vec<RawRow> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue; // header
        }
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            return Err(DataError::Malformed {
                line: line_no,
                reason: format!("expected at least 3 columns, found {}", cols.len()),
            });
        }
        match expected_cols {
            None => expected_cols = Some(cols.len()),
            Some(w) if w != cols.len() => {
                return Err(DataError::ColumnCount { line: line_no, expected: w, got: cols.len() })
            }
            _ => {}
        }
        let user = cols[0].trim();
        let item = cols[1].trim();
        if user.is_empty() || item.is_empty() {
            return Err(DataError::Malformed {
                line: line_no,
                reason: "empty id token".into(),
            });
        }
        let t: f64 = cols[2].trim().parse().map_err(|e| DataError::Malformed {
            line: line_no,
            reason: format!("bad timestamp: {e}"),
        })?;
        if !t.is_finite() || t < 0.0 {
            return Err(DataError::Malformed {
                line: line_no,
                reason: "timestamp must be finite and non-negative".into(),
            });
        }
        // Column 4 is the state label: accepted, ignored.
        let mut features = Vec::with_capacity(cols.len().saturating_sub(4));
        for col in cols.iter().skip(4) {
            let v: f64 = col.trim().parse().map_err(|e| DataError::Malformed {
                line: line_no,
                reason: format!("bad feature value: {e}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Malformed {
                    line: line_no,
                    reason: "non-finite feature value".into(),
                });
            }
            features.push(v);
        }
        rows.push(RawRow { user: user.to_string(), item: item.to_string(), t, features });
    }
    if rows.is_empty() {
        return Err(DataError::NoEvents);
    }
    if rows.windows(2).any(|w| w[0].t > w[1].t) {
        log::warn!("event log is not sorted by timestamp; sorting");
        rows.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    }

    let mut user_map: HashMap<String, u32> = HashMap::new();
    let mut item_map: HashMap<String, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let feature_dim = rows[0].features.len();
    let events = rows
        .into_iter()
        .map(|r| {
            let next_u = user_map.len() as u32;
            let user = *user_map.entry(r.user.clone()).or_insert_with(|| {
                user_ids.push(r.user);
                next_u
            });
            let next_i = item_map.len() as u32;
            let item = *item_map.entry(r.item.clone()).or_insert_with(|| {
                item_ids.push(r.item);
                next_i
            });
            InteractionEvent { user, item, t: r.t, features: r.features }
        })
        .collect::<Vec<_>>();
    Ok(Dataset {
        n_users: user_ids.len(),
        n_items: item_ids.len(),
        feature_dim,
        events,
        user_ids,
        item_ids,
        user_features: Vec::new(),
        item_features: Vec::new(),
    })
}

/// Serializes a dataset back to the documented event-log format.
pub fn write_string(ds: &Dataset) -> String {
    let mut out = String::from("user_id,item_id,timestamp,state_label");
    for k in 0..ds.feature_dim {
        out.push_str(&format!(",f{}", k + 1));
    }
    out.push('\n');
    for e in &ds.events {
        out.push_str(&format!(
            "{},{},{},0",
            ds.user_ids[e.user as usize], ds.item_ids[e.item as usize], e.t
        ));
        for f in &e.features {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
    }
    out
}

pub fn write(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_string(ds))?;
    Ok(())
}

/// Contiguous chronological train/valid/test slices by event count; every
/// train event precedes every test event.
pub fn chrono_split(ds: &Dataset, fractions: (f64, f64, f64)) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if a <= 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidFractions);
    }
    let n = ds.events.len();
    if n < 3 {
        return Err(DataError::TooSmall(n));
    }
    let n_train = (a * n as f64).floor() as usize;
    let n_valid = (b * n as f64).floor() as usize;
    let slice = |r: Range<usize>| Dataset { events: ds.events[r].to_vec(), ..clone_meta(ds) };
    Ok((
        slice(0..n_train),
        slice(n_train..n_train + n_valid),
        slice(n_train + n_valid..n),
    ))
}

fn clone_meta(ds: &Dataset) -> Dataset {
    Dataset {
        events: Vec::new(),
        n_users: ds.n_users,
        n_items: ds.n_items,
        feature_dim: ds.feature_dim,
        user_ids: ds.user_ids.clone(),
        item_ids: ds.item_ids.clone(),
        user_features: ds.user_features.clone(),
        item_features: ds.item_features.clone(),
    }
}

/// Partitions the event sequence into `n_intervals` equal-count batches; the
/// last batch absorbs the remainder. Concatenated batches reproduce the
/// dataset exactly.
pub fn interval_partition(ds: &Dataset, n_intervals: usize) -> Result<Vec<IntervalBatch>> {
    if n_intervals == 0 {
        return Err(DataError::InvalidSizes("n_intervals must be at least 1"));
    }
    let n = ds.events.len();
    if n == 0 {
        return Err(DataError::NoEvents);
    }
    let k = if n_intervals > n {
        log::warn!("{n_intervals} intervals requested for {n} events; using {n}");
        n
    } else {
        n_intervals
    };
    let base = n / k;
    let mut batches = Vec::with_capacity(k);
    let mut start = 0usize;
    for index in 0..k {
        let len = if index == k - 1 { n - start } else { base };
        let range = start..start + len;
        let t_start = ds.events[range.start].t;
        let t_end = if range.end < n { ds.events[range.end].t } else { ds.events[n - 1].t };
        batches.push(IntervalBatch { index, t_start, t_end, range });
        start += len;
    }
    Ok(batches)
}

/// Planted-cluster synthetic generator. Users and items are assigned to
/// clusters round-robin; each event pairs a uniform user with an item from
/// its own cluster with probability `1 − noise`, otherwise a uniform item.
/// Timestamps are uniform on `[0, n_events)` then sorted. Deterministic
/// given the seed.
pub fn synth_generate(
    n_users: usize,
    n_items: usize,
    n_clusters: usize,
    n_events: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_users == 0 || n_items == 0 || n_events == 0 {
        return Err(DataError::InvalidSizes("sizes must be positive"));
    }
    if n_clusters == 0 || n_clusters > n_users.min(n_items) {
        return Err(DataError::InvalidSizes(
            "n_clusters must lie in [1, min(n_users, n_items)]",
        ));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(DataError::InvalidSizes("noise must lie in [0, 1]"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let items_of_cluster: Vec<Vec<u32>> = (0..n_clusters)
        .map(|c| (0..n_items as u32).filter(|i| *i as usize % n_clusters == c).collect())
        .collect();
    let mut times: Vec<f64> = (0..n_events).map(|_| rng.random::<f64>() * n_events as f64).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let events = times
        .into_iter()
        .map(|t| {
            let user = rng.random_range(0..n_users as u32);
            let cluster = user as usize % n_clusters;
            let item = if rng.random::<f64>() < noise {
                rng.random_range(0..n_items as u32)
            } else {
                let pool = &items_of_cluster[cluster];
                pool[rng.random_range(0..pool.len())]
            };
            InteractionEvent { user, item, t, features: Vec::new() }
        })
        .collect();
    Ok(Dataset {
        events,
        n_users,
        n_items,
        feature_dim: 0,
        user_ids: (0..n_users).map(|u| u.to_string()).collect(),
        item_ids: (0..n_items).map(|i| i.to_string()).collect(),
        user_features: Vec::new(),
        item_features: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_well_formed() {
        let text = "user_id,item_id,timestamp,state_label,f1\n\
                    7,a,0.5,0,1.5\n\
                    9,b,1.0,0,-2.0\n\
                    7,a,2.5,1,0.25\n";
        let ds = parse_str(text).unwrap();
        assert_eq!(ds.events.len(), 3);
        assert_eq!(ds.n_users, 2);
        assert_eq!(ds.n_items, 2);
        assert_eq!(ds.feature_dim, 1);
        assert_eq!(ds.events[0].features, vec![1.5]);
        assert_eq!(ds.user_ids, vec!["7", "9"]);
    }

    #[test]
    fn parse_empty_is_error() {
        assert!(matches!(parse_str("user_id,item_id,timestamp\n"), Err(DataError::NoEvents)));
    }

    #[test]
    fn parse_sorts_shuffled_timestamps() {
        let text = "u,i,t\n1,1,5.0\n2,2,1.0\n3,3,3.0\n";
        let ds = parse_str(text).unwrap();
        let ts: Vec<f64> = ds.events.iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn parse_reports_bad_line() {
        let text = "u,i,t\n1,1,1.0\n1,oops\n";
        match parse_str(text) {
            Err(DataError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_ragged_features() {
        let text = "u,i,t,s,f1\n1,1,1.0,0,2.0\n2,2,2.0,0\n";
        assert!(matches!(parse_str(text), Err(DataError::ColumnCount { line: 3, .. })));
    }

    #[test]
    fn round_trip_is_semantically_identical() {
        let ds = synth_generate(5, 7, 2, 40, 0.3, 11).unwrap();
        let text = write_string(&ds);
        let back = parse_str(&text).unwrap();
        assert_eq!(back.events.len(), ds.events.len());
        for (a, b) in ds.events.iter().zip(&back.events) {
            assert_eq!(ds.user_ids[a.user as usize], back.user_ids[b.user as usize]);
            assert_eq!(ds.item_ids[a.item as usize], back.item_ids[b.item as usize]);
            assert_eq!(a.t, b.t);
            assert_eq!(a.features, b.features);
        }
    }

    #[test]
    fn chrono_split_counts() {
        let ds = synth_generate(4, 4, 2, 100, 0.5, 1).unwrap();
        let (tr, va, te) = chrono_split(&ds, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((tr.events.len(), va.events.len(), te.events.len()), (80, 10, 10));
        let t_max_train = tr.events.last().unwrap().t;
        assert!(te.events.iter().all(|e| e.t >= t_max_train));

        let ds10 = synth_generate(4, 4, 2, 10, 0.5, 1).unwrap();
        let (tr, va, te) = chrono_split(&ds10, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((tr.events.len(), va.events.len(), te.events.len()), (8, 1, 1));
    }

    #[test]
    fn chrono_split_all_train_permitted() {
        let ds = synth_generate(4, 4, 2, 10, 0.5, 1).unwrap();
        let (tr, va, te) = chrono_split(&ds, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(tr.events.len(), 10);
        assert!(va.events.is_empty() && te.events.is_empty());
    }

    #[test]
    fn chrono_split_too_small() {
        let ds = synth_generate(2, 2, 1, 2, 0.0, 1).unwrap();
        assert!(matches!(chrono_split(&ds, (0.8, 0.1, 0.1)), Err(DataError::TooSmall(2))));
    }

    #[test]
    fn interval_partition_remainder_rule() {
        let ds = synth_generate(3, 3, 1, 10, 0.0, 2).unwrap();
        let parts = interval_partition(&ds, 3).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![3, 3, 4]);
        // Concatenation reproduces the dataset.
        let mut covered = 0;
        for p in &parts {
            assert_eq!(p.range.start, covered);
            covered = p.range.end;
        }
        assert_eq!(covered, 10);
    }

    #[test]
    fn interval_partition_one_each() {
        let ds = synth_generate(3, 3, 1, 300, 0.0, 2).unwrap();
        let parts = interval_partition(&ds, 300).unwrap();
        assert_eq!(parts.len(), 300);
        assert!(parts.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn interval_partition_more_than_events() {
        let ds = synth_generate(3, 3, 1, 5, 0.0, 2).unwrap();
        let parts = interval_partition(&ds, 10).unwrap();
        assert_eq!(parts.len(), 5);
    }

    #[test]
    fn synth_deterministic() {
        let a = synth_generate(10, 10, 5, 200, 0.2, 42).unwrap();
        let b = synth_generate(10, 10, 5, 200, 0.2, 42).unwrap();
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn synth_zero_noise_is_intra_cluster() {
        let ds = synth_generate(10, 10, 5, 500, 0.0, 3).unwrap();
        for e in &ds.events {
            assert_eq!(e.user as usize % 5, e.item as usize % 5);
        }
    }

    #[test]
    fn synth_full_noise_is_uniform() {
        // Chi-squared against uniform item choice, 9 dof, p = 0.001 cutoff.
        let ds = synth_generate(10, 10, 5, 10_000, 1.0, 4).unwrap();
        let mut counts = [0usize; 10];
        for e in &ds.events {
            counts[e.item as usize] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn synth_rejects_bad_sizes() {
        assert!(synth_generate(2, 2, 3, 10, 0.0, 0).is_err());
        assert!(synth_generate(0, 2, 1, 10, 0.0, 0).is_err());
        assert!(synth_generate(2, 2, 1, 10, 1.5, 0).is_err());
    }
}
