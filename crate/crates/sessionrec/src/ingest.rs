//! Play-log ingestion: parsing, sessionization, implicit ratings, the
//! artist-tag join and the train/test session split.
//!
//! The play log is the Last.fm-360K layout: six TAB-separated columns
//! (user, ISO-8601 timestamp, artist MBID, artist name, track MBID, track
//! name), UTF-8, no header. Tag assignments come from a CSV with an
//! `artist_mbid` column and a `tags` column.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Read, Write};

use chrono::DateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{ArtistId, Catalog, ItemId, UserId};
use crate::{Error, Result};

/// Default session gap: two consecutive plays more than 15 minutes apart
/// belong to different sessions.
pub const DEFAULT_GAP_SECONDS: i64 = 900;

/// One play record: who played what, when.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlayEvent {
    pub user: UserId,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub artist: ArtistId,
    pub item: ItemId,
}

/// A maximal run of one user's plays with no gap above the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user: UserId,
    /// Ordinal of this session within the user's history, from 0.
    pub session_index: u32,
    /// Played tracks with their timestamps, in play order.
    pub items: Vec<(ItemId, i64)>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.iter().map(|&(i, _)| i)
    }
}

/// Parse statistics for a play log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub lines: u64,
    pub skipped: u64,
}

/// Result of [`parse_play_log`].
#[derive(Debug)]
pub struct ParsedLog {
    pub events: Vec<PlayEvent>,
    pub catalog: Catalog,
    pub stats: ParseStats,
}

/// Parse a Last.fm-360K style play log.
///
/// Events come back sorted by (user, timestamp). Malformed lines (wrong
/// column count, bad timestamp, missing keys) are counted and skipped.
/// MBID columns are preferred as keys; when one is empty the corresponding
/// name column stands in, which keeps real-world dumps with incomplete
/// MusicBrainz coverage usable.
pub fn parse_play_log<R: BufRead>(reader: R) -> Result<ParsedLog> {
    let mut catalog = Catalog::new();
    let mut events = Vec::new();
    let mut stats = ParseStats::default();

    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        stats.lines += 1;
        match parse_line(&line, &mut catalog) {
            Some(ev) => events.push(ev),
            None => stats.skipped += 1,
        }
    }
    if events.is_empty() {
        return Err(Error::EmptyInput);
    }
    events.sort_by(|a, b| (a.user, a.timestamp).cmp(&(b.user, b.timestamp)));
    Ok(ParsedLog {
        events,
        catalog,
        stats,
    })
}

fn parse_line(line: &str, catalog: &mut Catalog) -> Option<PlayEvent> {
    let mut cols = line.split('\t');
    let user = cols.next()?;
    let ts = cols.next()?;
    let artist_mbid = cols.next()?;
    let artist_name = cols.next()?;
    let track_mbid = cols.next()?;
    let track_name = cols.next()?;
    if cols.next().is_some() {
        return None; // more than 6 columns
    }
    if user.is_empty() {
        return None;
    }
    let timestamp = DateTime::parse_from_rfc3339(ts).ok()?.timestamp();
    if timestamp <= 0 {
        return None;
    }
    let artist_key = non_empty(artist_mbid).or_else(|| non_empty(artist_name))?;
    let track_key = non_empty(track_mbid).or_else(|| non_empty(track_name))?;

    let user = catalog.intern_user(user);
    let artist = catalog.intern_artist(artist_key);
    let item = catalog.intern_track(track_key, artist);
    Some(PlayEvent {
        user,
        timestamp,
        artist,
        item,
    })
}

fn non_empty(s: &str) -> Option<&str> {
    if s.trim().is_empty() {
        None
    } else {
        Some(s)
    }
}

/// Split each user's time-ordered events into sessions.
///
/// A gap strictly greater than `gap_seconds` starts a new session; a gap of
/// exactly `gap_seconds` does not. Concatenating a user's sessions
/// reproduces that user's event sequence exactly.
pub fn segment_sessions(events: &[PlayEvent], gap_seconds: i64) -> Result<Vec<Session>> {
    if gap_seconds <= 0 {
        return Err(Error::Invalid("gap_seconds must be positive".into()));
    }
    for w in events.windows(2) {
        if (w[1].user, w[1].timestamp) < (w[0].user, w[0].timestamp) {
            return Err(Error::UnsortedEvents);
        }
    }

    let mut sessions: Vec<Session> = Vec::new();
    let mut current: Option<Session> = None;
    let mut next_index: u32 = 0;

    for ev in events {
        let start_new = match &current {
            None => true,
            Some(s) => {
                if s.user != ev.user {
                    next_index = 0;
                    true
                } else {
                    let last_ts = s.items.last().expect("session non-empty").1;
                    ev.timestamp - last_ts > gap_seconds
                }
            }
        };
        if start_new {
            if let Some(done) = current.take() {
                sessions.push(done);
            }
            current = Some(Session {
                user: ev.user,
                session_index: next_index,
                items: Vec::new(),
            });
            next_index += 1;
        }
        current
            .as_mut()
            .expect("session exists")
            .items
            .push((ev.item, ev.timestamp));
    }
    if let Some(done) = current {
        sessions.push(done);
    }
    Ok(sessions)
}

/// Sparse user-by-item implicit rating matrix with play counts.
///
/// Ratings are derived from per-user play-frequency percentiles: for user
/// `u` and item `i`, `pct(u,i)` is the fraction of `u`'s distinct items `j`
/// with `count(u,j) <= count(u,i)` and the rating is `1 + 4 * pct`, so every
/// rating lies in (1, 5] and ties in play count get equal ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    n_items: usize,
    /// Per user, (item, rating) sorted by item id.
    by_user: Vec<Vec<(ItemId, f64)>>,
    /// Per user, (item, play count) sorted by item id.
    counts_by_user: Vec<Vec<(ItemId, u32)>>,
    user_means: Vec<f64>,
    global_mean: f64,
    item_rated: Vec<bool>,
}

impl RatingMatrix {
    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_ratings(&self) -> usize {
        self.by_user.iter().map(Vec::len).sum()
    }

    pub fn rating(&self, user: UserId, item: ItemId) -> Option<f64> {
        let row = self.by_user.get(user.index())?;
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|k| row[k].1)
    }

    pub fn play_count(&self, user: UserId, item: ItemId) -> Option<u32> {
        let row = self.counts_by_user.get(user.index())?;
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|k| row[k].1)
    }

    /// (item, rating) pairs of one user, sorted by item id.
    pub fn user_ratings(&self, user: UserId) -> &[(ItemId, f64)] {
        &self.by_user[user.index()]
    }

    /// Mean rating of a user; 0.0 for a user with no ratings.
    pub fn user_mean(&self, user: UserId) -> f64 {
        self.user_means[user.index()]
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Whether any user rated this item.
    pub fn item_rated(&self, item: ItemId) -> bool {
        self.item_rated[item.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, ItemId, f64)> + '_ {
        self.by_user.iter().enumerate().flat_map(|(u, row)| {
            row.iter()
                .map(move |&(item, rating)| (UserId(u as u32), item, rating))
        })
    }

    /// Per-item rating columns: for each item, (user, rating) sorted by
    /// user id. Used by similarity computations over item columns.
    pub fn item_columns(&self) -> Vec<Vec<(UserId, f64)>> {
        let mut columns = vec![Vec::new(); self.n_items];
        for (u, row) in self.by_user.iter().enumerate() {
            for &(item, rating) in row {
                columns[item.index()].push((UserId(u as u32), rating));
            }
        }
        columns
    }

    fn from_rows(n_items: usize, by_user: Vec<Vec<(ItemId, f64)>>, counts: Vec<Vec<(ItemId, u32)>>) -> Self {
        let user_means = by_user
            .iter()
            .map(|row| {
                if row.is_empty() {
                    0.0
                } else {
                    row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64
                }
            })
            .collect();
        let (mut sum, mut n) = (0.0, 0usize);
        let mut item_rated = vec![false; n_items];
        for row in &by_user {
            for &(item, rating) in row {
                sum += rating;
                n += 1;
                item_rated[item.index()] = true;
            }
        }
        RatingMatrix {
            n_items,
            by_user,
            counts_by_user: counts,
            user_means,
            global_mean: if n == 0 { 0.0 } else { sum / n as f64 },
            item_rated,
        }
    }
}

/// Derive the implicit rating matrix from play events.
pub fn derive_implicit_ratings(events: &[PlayEvent], catalog: &Catalog) -> RatingMatrix {
    derive_ratings_from_plays(events.iter().map(|e| (e.user, e.item)), catalog)
}

/// Derive the implicit rating matrix from the plays of the given sessions
/// (used to fit ratings on the training split only).
pub fn derive_ratings_from_sessions(sessions: &[Session], catalog: &Catalog) -> RatingMatrix {
    derive_ratings_from_plays(
        sessions
            .iter()
            .flat_map(|s| s.items.iter().map(move |&(i, _)| (s.user, i))),
        catalog,
    )
}

fn derive_ratings_from_plays(
    plays: impl Iterator<Item = (UserId, ItemId)>,
    catalog: &Catalog,
) -> RatingMatrix {
    let n_users = catalog.n_users();
    let n_items = catalog.n_items();

    let mut counts: Vec<HashMap<ItemId, u32>> = vec![HashMap::new(); n_users];
    for (user, item) in plays {
        *counts[user.index()].entry(item).or_insert(0) += 1;
    }

    let mut by_user = Vec::with_capacity(n_users);
    let mut counts_by_user = Vec::with_capacity(n_users);
    for user_counts in counts {
        let mut items: Vec<(ItemId, u32)> = user_counts.into_iter().collect();
        items.sort_unstable_by_key(|&(i, _)| i);
        let distinct = items.len() as f64;

        // Inclusive percentile: rank ties share the count of items at or
        // below their play count.
        let mut sorted_counts: Vec<u32> = items.iter().map(|&(_, c)| c).collect();
        sorted_counts.sort_unstable();
        let ratings = items
            .iter()
            .map(|&(item, c)| {
                let le = sorted_counts.partition_point(|&x| x <= c);
                (item, 1.0 + 4.0 * (le as f64 / distinct))
            })
            .collect();
        by_user.push(ratings);
        counts_by_user.push(items);
    }
    RatingMatrix::from_rows(n_items, by_user, counts_by_user)
}

/// One artist's raw (un-normalized) tag list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagAssignment {
    pub artist: ArtistId,
    pub raw_tags: Vec<String>,
}

/// Parse the artist-tag CSV (`artist_mbid,tags` with a header row).
///
/// Artists not present in the catalog are interned and retained; the join
/// decides what to do with them. Tag fields are split on `tag_sep`.
pub fn parse_tag_assignments<R: Read>(
    reader: R,
    tag_sep: char,
    catalog: &mut Catalog,
) -> Result<Vec<TagAssignment>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let artist_col = find("artist_mbid")
        .ok_or_else(|| Error::Format("tag csv: missing column `artist_mbid`".into()))?;
    let tags_col =
        find("tags").ok_or_else(|| Error::Format("tag csv: missing column `tags`".into()))?;

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let mbid = record.get(artist_col).unwrap_or("").trim();
        if mbid.is_empty() {
            continue;
        }
        let field = record.get(tags_col).unwrap_or("");
        let raw_tags = split_tags(field, tag_sep);
        let artist = catalog.intern_artist(mbid);
        out.push(TagAssignment { artist, raw_tags });
    }
    Ok(out)
}

fn split_tags(field: &str, sep: char) -> Vec<String> {
    field
        .split(sep)
        .map(|t| t.replace(['\t', '\n', '\r'], " "))
        .filter(|t| !t.trim().is_empty())
        .collect()
}

/// Every track inherits its artist's tag list; tracks whose artist has no
/// tags get an empty list. Indexed by dense item id.
pub fn join_item_tags(catalog: &Catalog, assignments: &[TagAssignment]) -> Vec<Vec<String>> {
    let mut by_artist: HashMap<ArtistId, Vec<String>> = HashMap::new();
    for a in assignments {
        by_artist
            .entry(a.artist)
            .or_default()
            .extend(a.raw_tags.iter().cloned());
    }
    (0..catalog.n_items())
        .map(|i| {
            by_artist
                .get(&catalog.artist_of(ItemId(i as u32)))
                .cloned()
                .unwrap_or_default()
        })
        .collect()
}

/// Split sessions per user into train and test.
///
/// Each user's sessions are shuffled with a seed-derived rng and split at
/// `floor(train_fraction * n)`, floored to at least one training session.
/// Users with a single session contribute it to train and nothing to test.
/// Output is sorted by (user, session_index) so the split is reproducible
/// byte-for-byte.
pub fn split_sessions(
    sessions: &[Session],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<Session>, Vec<Session>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let mut per_user: HashMap<UserId, Vec<usize>> = HashMap::new();
    for (k, s) in sessions.iter().enumerate() {
        per_user.entry(s.user).or_default().push(k);
    }
    let mut users: Vec<UserId> = per_user.keys().copied().collect();
    users.sort_unstable();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for user in users {
        let mut idx = per_user.remove(&user).expect("user present");
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (u64::from(user.0)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train_fraction).floor() as usize).max(1);
        for (pos, &k) in idx.iter().enumerate() {
            if pos < n_train {
                train.push(sessions[k].clone());
            } else {
                test.push(sessions[k].clone());
            }
        }
    }
    let key = |s: &Session| (s.user, s.session_index);
    train.sort_by_key(key);
    test.sort_by_key(key);
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Persistence

/// Write sessions as `user<TAB>session_index<TAB>track<TAB>timestamp` lines.
pub fn write_sessions<W: Write>(w: &mut W, sessions: &[Session], catalog: &Catalog) -> Result<()> {
    for s in sessions {
        let user = catalog.users.name(s.user.0);
        for &(item, ts) in &s.items {
            writeln!(
                w,
                "{user}\t{}\t{}\t{ts}",
                s.session_index,
                catalog.items.name(item.0)
            )?;
        }
    }
    Ok(())
}

/// Read sessions written by [`write_sessions`].
pub fn read_sessions<R: BufRead>(r: R, catalog: &Catalog) -> Result<Vec<Session>> {
    let mut sessions: Vec<Session> = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("sessions: bad line {line:?}")));
        }
        let user = catalog
            .users
            .get(cols[0])
            .map(UserId)
            .ok_or_else(|| Error::Format(format!("sessions: unknown user {:?}", cols[0])))?;
        let session_index: u32 = cols[1]
            .parse()
            .map_err(|_| Error::Format(format!("sessions: bad index {:?}", cols[1])))?;
        let item = catalog
            .items
            .get(cols[2])
            .map(ItemId)
            .ok_or_else(|| Error::Format(format!("sessions: unknown track {:?}", cols[2])))?;
        let ts: i64 = cols[3]
            .parse()
            .map_err(|_| Error::Format(format!("sessions: bad timestamp {:?}", cols[3])))?;

        match sessions.last_mut() {
            Some(s) if s.user == user && s.session_index == session_index => {
                s.items.push((item, ts));
            }
            _ => sessions.push(Session {
                user,
                session_index,
                items: vec![(item, ts)],
            }),
        }
    }
    Ok(sessions)
}

/// Write ratings as `user<TAB>item<TAB>rating<TAB>play_count` lines.
pub fn write_ratings<W: Write>(w: &mut W, ratings: &RatingMatrix, catalog: &Catalog) -> Result<()> {
    for u in 0..ratings.n_users() {
        let user = UserId(u as u32);
        for &(item, rating) in ratings.user_ratings(user) {
            let count = ratings.play_count(user, item).unwrap_or(0);
            writeln!(
                w,
                "{}\t{}\t{rating}\t{count}",
                catalog.users.name(user.0),
                catalog.items.name(item.0)
            )?;
        }
    }
    Ok(())
}

/// Read ratings written by [`write_ratings`].
pub fn read_ratings<R: BufRead>(r: R, catalog: &Catalog) -> Result<RatingMatrix> {
    let mut by_user: Vec<Vec<(ItemId, f64)>> = vec![Vec::new(); catalog.n_users()];
    let mut counts: Vec<Vec<(ItemId, u32)>> = vec![Vec::new(); catalog.n_users()];
    for line in r.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("ratings: bad line {line:?}")));
        }
        let user = catalog
            .users
            .get(cols[0])
            .ok_or_else(|| Error::Format(format!("ratings: unknown user {:?}", cols[0])))?;
        let item = catalog
            .items
            .get(cols[1])
            .map(ItemId)
            .ok_or_else(|| Error::Format(format!("ratings: unknown item {:?}", cols[1])))?;
        let rating: f64 = cols[2]
            .parse()
            .map_err(|_| Error::Format(format!("ratings: bad rating {:?}", cols[2])))?;
        let count: u32 = cols[3]
            .parse()
            .map_err(|_| Error::Format(format!("ratings: bad count {:?}", cols[3])))?;
        by_user[user as usize].push((item, rating));
        counts[user as usize].push((item, count));
    }
    for row in by_user.iter_mut() {
        row.sort_unstable_by_key(|&(i, _)| i);
    }
    for row in counts.iter_mut() {
        row.sort_unstable_by_key(|&(i, _)| i);
    }
    Ok(RatingMatrix::from_rows(catalog.n_items(), by_user, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn log_line(user: &str, ts: &str, artist: &str, track: &str) -> String {
        format!("{user}\t{ts}\t{artist}-mbid\t{artist}\t{track}-mbid\t{track}")
    }

    #[test]
    fn parses_one_valid_line() {
        let line = log_line("u1", "2009-05-04T23:08:57Z", "a1", "t1");
        let parsed = parse_play_log(Cursor::new(line)).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.stats.skipped, 0);
        let ev = parsed.events[0];
        assert_eq!(parsed.catalog.users.name(ev.user.0), "u1");
        assert_eq!(parsed.catalog.items.name(ev.item.0), "t1-mbid");
        assert_eq!(parsed.catalog.artists.name(ev.artist.0), "a1-mbid");
    }

    #[test]
    fn malformed_line_is_skipped_and_counted() {
        let good = log_line("u1", "2009-05-04T23:08:57Z", "a1", "t1");
        let bad = "u1\tnot-a-timestamp\ta\tb\tc\td";
        let parsed = parse_play_log(Cursor::new(format!("{good}\n{bad}"))).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.stats.skipped, 1);
    }

    #[test]
    fn missing_column_is_skipped() {
        let good = log_line("u1", "2009-05-04T23:08:57Z", "a1", "t1");
        let bad = "u1\t2009-05-04T23:08:57Z\ta\tb\tc"; // 5 columns
        let parsed = parse_play_log(Cursor::new(format!("{good}\n{bad}"))).unwrap();
        assert_eq!(parsed.stats.skipped, 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_play_log(Cursor::new("")),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn ten_line_fixture_groups_three_users() {
        // 10 lines, 3 users, deliberately out of order in the file.
        let mut lines = Vec::new();
        let stamps = [
            "2009-01-01T10:00:00Z",
            "2009-01-01T10:01:00Z",
            "2009-01-01T10:02:00Z",
            "2009-01-01T10:03:00Z",
        ];
        for (k, ts) in stamps.iter().enumerate() {
            lines.push(log_line("u2", ts, "a1", &format!("t{k}")));
        }
        for (k, ts) in stamps.iter().take(3).enumerate() {
            lines.push(log_line("u1", ts, "a2", &format!("s{k}")));
        }
        for (k, ts) in stamps.iter().take(3).enumerate() {
            lines.push(log_line("u3", ts, "a1", &format!("t{k}")));
        }
        let parsed = parse_play_log(Cursor::new(lines.join("\n"))).unwrap();
        assert_eq!(parsed.catalog.n_users(), 3);
        assert_eq!(parsed.events.len(), 10);
        // grouped per user, time-ordered inside each group
        for w in parsed.events.windows(2) {
            assert!((w[0].user, w[0].timestamp) <= (w[1].user, w[1].timestamp));
        }
    }

    #[test]
    fn mbid_fallback_to_name() {
        let line = "u1\t2009-05-04T23:08:57Z\t\tThe Artist\t\tThe Track";
        let parsed = parse_play_log(Cursor::new(line)).unwrap();
        assert_eq!(parsed.catalog.artists.name(0), "The Artist");
        assert_eq!(parsed.catalog.items.name(0), "The Track");
    }

    fn events_with_gaps(gaps: &[i64]) -> Vec<PlayEvent> {
        let mut ts = 1_000_000;
        let mut out = vec![PlayEvent {
            user: UserId(0),
            timestamp: ts,
            artist: ArtistId(0),
            item: ItemId(0),
        }];
        for (k, g) in gaps.iter().enumerate() {
            ts += g;
            out.push(PlayEvent {
                user: UserId(0),
                timestamp: ts,
                artist: ArtistId(0),
                item: ItemId(k as u32 + 1),
            });
        }
        out
    }

    #[test]
    fn gap_at_threshold_stays_in_session() {
        let events = events_with_gaps(&[60, 840]);
        let sessions = segment_sessions(&events, 900).unwrap();
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].len(), 3);
    }

    #[test]
    fn gap_above_threshold_splits() {
        let events = events_with_gaps(&[60, 901]);
        let sessions = segment_sessions(&events, 900).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].len(), 2);
        assert_eq!(sessions[1].len(), 1);
        assert_eq!(sessions[0].session_index, 0);
        assert_eq!(sessions[1].session_index, 1);
    }

    #[test]
    fn single_event_single_session() {
        let events = events_with_gaps(&[]);
        let sessions = segment_sessions(&events, 900).unwrap();
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].len(), 1);
    }

    #[test]
    fn unsorted_events_rejected() {
        let mut events = events_with_gaps(&[60]);
        events.swap(0, 1);
        assert!(matches!(
            segment_sessions(&events, 900),
            Err(Error::UnsortedEvents)
        ));
    }

    fn catalog_with(n_users: usize, n_items: usize) -> Catalog {
        let mut c = Catalog::new();
        for u in 0..n_users {
            c.intern_user(&format!("u{u}"));
        }
        let a = c.intern_artist("a");
        for i in 0..n_items {
            c.intern_track(&format!("t{i}"), a);
        }
        c
    }

    fn play(user: u32, item: u32, times: u32, base: &mut i64, out: &mut Vec<PlayEvent>) {
        for _ in 0..times {
            *base += 10;
            out.push(PlayEvent {
                user: UserId(user),
                timestamp: *base,
                artist: ArtistId(0),
                item: ItemId(item),
            });
        }
    }

    #[test]
    fn implicit_ratings_match_hand_enumeration() {
        // user 0 plays A(0) x5, B(1) x3, C(2) x1
        let mut events = Vec::new();
        let mut ts = 0;
        play(0, 0, 5, &mut ts, &mut events);
        play(0, 1, 3, &mut ts, &mut events);
        play(0, 2, 1, &mut ts, &mut events);
        let catalog = catalog_with(1, 3);
        let m = derive_implicit_ratings(&events, &catalog);
        assert!((m.rating(UserId(0), ItemId(0)).unwrap() - 5.0).abs() < 1e-12);
        assert!((m.rating(UserId(0), ItemId(1)).unwrap() - 11.0 / 3.0).abs() < 1e-12);
        assert!((m.rating(UserId(0), ItemId(2)).unwrap() - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.play_count(UserId(0), ItemId(0)), Some(5));
    }

    #[test]
    fn single_item_user_gets_rating_five() {
        let mut events = Vec::new();
        let mut ts = 0;
        play(0, 0, 3, &mut ts, &mut events);
        let catalog = catalog_with(1, 1);
        let m = derive_implicit_ratings(&events, &catalog);
        assert_eq!(m.rating(UserId(0), ItemId(0)), Some(5.0));
    }

    #[test]
    fn equal_counts_equal_ratings() {
        let mut events = Vec::new();
        let mut ts = 0;
        play(0, 0, 2, &mut ts, &mut events);
        play(0, 1, 2, &mut ts, &mut events);
        play(0, 2, 7, &mut ts, &mut events);
        let catalog = catalog_with(1, 3);
        let m = derive_implicit_ratings(&events, &catalog);
        assert_eq!(
            m.rating(UserId(0), ItemId(0)),
            m.rating(UserId(0), ItemId(1))
        );
    }

    #[test]
    fn tag_csv_parses_and_splits() {
        let csv = "artist_mbid,tags\nid1,folk;indie\nid2,\nid3,rock\n";
        let mut catalog = Catalog::new();
        let parsed = parse_tag_assignments(Cursor::new(csv), ';', &mut catalog).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0].raw_tags, vec!["folk", "indie"]);
        assert!(parsed[1].raw_tags.is_empty());
        assert_eq!(parsed[2].raw_tags, vec!["rock"]);
    }

    #[test]
    fn tag_csv_missing_column_errors() {
        let csv = "artist,labels\nid1,folk\n";
        let mut catalog = Catalog::new();
        assert!(matches!(
            parse_tag_assignments(Cursor::new(csv), ';', &mut catalog),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn join_inherits_artist_tags() {
        let mut catalog = Catalog::new();
        let a0 = catalog.intern_artist("a0");
        let a1 = catalog.intern_artist("a1");
        catalog.intern_track("t0", a0);
        catalog.intern_track("t1", a0);
        catalog.intern_track("t2", a1);
        catalog.intern_track("t3", a1);
        let assignments = vec![TagAssignment {
            artist: a0,
            raw_tags: vec!["folk".into(), "indie".into()],
        }];
        let tags = join_item_tags(&catalog, &assignments);
        assert_eq!(tags.len(), 4);
        assert_eq!(tags[0], tags[1]);
        assert_eq!(tags[0], vec!["folk", "indie"]);
        assert!(tags[2].is_empty() && tags[3].is_empty());
    }

    fn make_sessions(user: u32, n: usize) -> Vec<Session> {
        (0..n)
            .map(|k| Session {
                user: UserId(user),
                session_index: k as u32,
                items: vec![(ItemId(k as u32), 1000 + k as i64)],
            })
            .collect()
    }

    #[test]
    fn split_80_20() {
        let sessions = make_sessions(0, 10);
        let (train, test) = split_sessions(&sessions, 0.8, 7).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn single_session_user_goes_to_train() {
        let sessions = make_sessions(0, 1);
        let (train, test) = split_sessions(&sessions, 0.8, 7).unwrap();
        assert_eq!(train.len(), 1);
        assert!(test.is_empty());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let mut sessions = make_sessions(0, 7);
        sessions.extend(make_sessions(1, 5));
        let (tr1, te1) = split_sessions(&sessions, 0.8, 99).unwrap();
        let (tr2, te2) = split_sessions(&sessions, 0.8, 99).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let mut all: Vec<(UserId, u32)> = tr1
            .iter()
            .chain(te1.iter())
            .map(|s| (s.user, s.session_index))
            .collect();
        all.sort_unstable();
        let mut expect: Vec<(UserId, u32)> =
            sessions.iter().map(|s| (s.user, s.session_index)).collect();
        expect.sort_unstable();
        assert_eq!(all, expect);
    }

    #[test]
    fn sessions_roundtrip_through_text() {
        let line1 = log_line("u1", "2009-05-04T23:08:57Z", "a1", "t1");
        let line2 = log_line("u1", "2009-05-04T23:10:57Z", "a1", "t2");
        let parsed = parse_play_log(Cursor::new(format!("{line1}\n{line2}"))).unwrap();
        let sessions = segment_sessions(&parsed.events, 900).unwrap();
        let mut buf = Vec::new();
        write_sessions(&mut buf, &sessions, &parsed.catalog).unwrap();
        let back = read_sessions(Cursor::new(buf), &parsed.catalog).unwrap();
        assert_eq!(back, sessions);
    }

    #[test]
    fn ratings_roundtrip_through_text() {
        let mut events = Vec::new();
        let mut ts = 0;
        play(0, 0, 5, &mut ts, &mut events);
        play(0, 1, 3, &mut ts, &mut events);
        play(1, 1, 2, &mut ts, &mut events);
        let catalog = catalog_with(2, 2);
        let m = derive_implicit_ratings(&events, &catalog);
        let mut buf = Vec::new();
        write_ratings(&mut buf, &m, &catalog).unwrap();
        let back = read_ratings(Cursor::new(buf), &catalog).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn session_flattening_roundtrip() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n_users = rng.gen_range(1..4);
            let mut events = Vec::new();
            for u in 0..n_users {
                let mut ts: i64 = rng.gen_range(1..1_000_000);
                for _ in 0..rng.gen_range(1..30) {
                    events.push(PlayEvent {
                        user: UserId(u),
                        timestamp: ts,
                        artist: ArtistId(0),
                        item: ItemId(rng.gen_range(0..10)),
                    });
                    ts += rng.gen_range(0..2000);
                }
            }
            events.sort_by_key(|e| (e.user, e.timestamp));
            let sessions = segment_sessions(&events, 900).unwrap();
            // round-trip: flattening sessions reproduces the event stream
            let flat: Vec<(UserId, ItemId, i64)> = sessions
                .iter()
                .flat_map(|s| s.items.iter().map(|&(i, t)| (s.user, i, t)))
                .collect();
            let orig: Vec<(UserId, ItemId, i64)> =
                events.iter().map(|e| (e.user, e.item, e.timestamp)).collect();
            assert_eq!(flat, orig);
            // gap invariants
            for s in &sessions {
                for w in s.items.windows(2) {
                    assert!(w[1].1 - w[0].1 <= 900);
                }
            }
            for w in sessions.windows(2) {
                if w[0].user == w[1].user {
                    let boundary = w[1].items[0].1 - w[0].items.last().unwrap().1;
                    assert!(boundary > 900);
                }
            }
        }
    }

    #[test]
    fn ratings_bounds_and_monotonicity_fuzz() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let catalog = catalog_with(3, 8);
            let mut events = Vec::new();
            let mut ts = 0;
            for u in 0..3 {
                for i in 0..8 {
                    let n = rng.gen_range(0..5);
                    play(u, i, n, &mut ts, &mut events);
                }
            }
            if events.is_empty() {
                continue;
            }
            let m = derive_implicit_ratings(&events, &catalog);
            for u in 0..3 {
                let user = UserId(u);
                let mut pairs: Vec<(u32, f64)> = m
                    .user_ratings(user)
                    .iter()
                    .map(|&(i, r)| (m.play_count(user, i).unwrap(), r))
                    .collect();
                pairs.sort_by(|a, b| a.0.cmp(&b.0));
                for w in pairs.windows(2) {
                    assert!(w[0].1 <= w[1].1 + 1e-12);
                    if w[0].0 == w[1].0 {
                        assert_eq!(w[0].1, w[1].1);
                    }
                }
                for &(_, r) in &pairs {
                    assert!((1.0..=5.0).contains(&r));
                }
            }
        }
    }

    #[test]
    fn split_partitions_fuzzed_histories() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for round in 0..100 {
            let mut sessions = Vec::new();
            for u in 0..rng.gen_range(1..6) {
                sessions.extend(make_sessions(u, rng.gen_range(1..12)));
            }
            let (train, test) = split_sessions(&sessions, 0.8, round).unwrap();
            assert_eq!(train.len() + test.len(), sessions.len());
            let train_keys: HashSet<(UserId, u32)> =
                train.iter().map(|s| (s.user, s.session_index)).collect();
            assert_eq!(train_keys.len(), train.len());
            for s in &test {
                assert!(!train_keys.contains(&(s.user, s.session_index)));
            }
        }
    }
}
