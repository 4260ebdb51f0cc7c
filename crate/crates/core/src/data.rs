//! Rating ingestion, the internal text format, per-user splitting, and
//! MAE/RMSE evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict, RatingRow};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsDataset {
    pub name: String,
    pub n_users: usize,
    pub n_items: usize,
    pub rows: Vec<RatingRow>,
    pub rating_bounds: (f64, f64),
    /// Original user ids, indexed by dense user index.
    #[serde(default)]
    pub user_ids: Vec<String>,
    /// Original item ids, indexed by dense item index.
    #[serde(default)]
    pub item_ids: Vec<String>,
}

impl RatingsDataset {
    /// Builds a dataset from dense `(user, item, rating)` triples. Bounds are
    /// the observed min and max rating.
    pub fn from_triples(
        name: impl Into<String>,
        n_users: usize,
        n_items: usize,
        triples: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_users];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(u, i, r) in triples {
            if u >= n_users || i >= n_items {
                return Err(Error::Config(format!(
                    "triple ({u}, {i}) outside {n_users}x{n_items}"
                )));
            }
            per_user[u].push((i, r));
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let rows = per_user
            .into_iter()
            .map(RatingRow::from_unsorted)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if triples.is_empty() {
            lo = 0.0;
            hi = 0.0;
        }
        Ok(Self {
            name: name.into(),
            n_users,
            n_items,
            rows,
            rating_bounds: (lo, hi),
            user_ids: (0..n_users).map(|i| i.to_string()).collect(),
            item_ids: (0..n_items).map(|i| i.to_string()).collect(),
        })
    }

    pub fn n_ratings(&self) -> usize {
        self.rows.iter().map(RatingRow::len).sum()
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |(i, r)| (u, i, r)))
    }

    pub fn mean_rating(&self) -> f64 {
        let n = self.n_ratings();
        if n == 0 {
            return 0.0;
        }
        self.triples().map(|(_, _, r)| r).sum::<f64>() / n as f64
    }

    /// Largest `‖R_i‖` over users.
    pub fn max_row_norm(&self) -> f64 {
        self.rows.iter().map(RatingRow::norm).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.n_users {
            return Err(Error::Config(format!(
                "{} rows for {} users",
                self.rows.len(),
                self.n_users
            )));
        }
        let (lo, hi) = self.rating_bounds;
        for (u, row) in self.rows.iter().enumerate() {
            if let Some(max) = row.max_item() {
                if max >= self.n_items {
                    return Err(Error::Config(format!("user {u} rates item {max} >= {}", self.n_items)));
                }
            }
            if let Some(r) = row.ratings().iter().find(|r| !(lo..=hi).contains(*r)) {
                return Err(Error::Config(format!("user {u} rating {r} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Writes the internal format: a header `n m count lo hi` followed by one
    /// `user item rating` line per observation.
    pub fn write_internal(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        self.write_internal_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_internal_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let (lo, hi) = self.rating_bounds;
        writeln!(out, "{} {} {} {} {}", self.n_users, self.n_items, self.n_ratings(), lo, hi)?;
        for (u, i, r) in self.triples() {
            writeln!(out, "{u} {i} {r}")?;
        }
        Ok(())
    }

    pub fn read_internal(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_internal(&text, path, name)
    }

    fn parse_internal(text: &str, path: &Path, name: String) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::EmptyFile(path.to_path_buf()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(1, format!("expected header `n m count lo hi`, got `{header}`")));
        }
        let n: usize = fields[0].parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let m: usize = fields[1].parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let count: usize = fields[2].parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let lo: f64 = fields[3].parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let hi: f64 = fields[4].parse().map_err(|e| parse_err(1, format!("{e}")))?;

        let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut seen = 0;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(lineno, format!("expected `user item rating`, got `{line}`")));
            }
            let u: usize = f[0].parse().map_err(|e| parse_err(lineno, format!("user: {e}")))?;
            let i: usize = f[1].parse().map_err(|e| parse_err(lineno, format!("item: {e}")))?;
            let r: f64 = f[2].parse().map_err(|e| parse_err(lineno, format!("rating: {e}")))?;
            if u >= n || i >= m {
                return Err(parse_err(lineno, format!("({u}, {i}) outside {n}x{m}")));
            }
            per_user[u].push((i, r));
            seen += 1;
        }
        if seen != count {
            return Err(parse_err(1, format!("header declares {count} ratings, found {seen}")));
        }
        let rows = per_user
            .into_iter()
            .enumerate()
            .map(|(u, e)| RatingRow::from_unsorted(e).map_err(|err| parse_err(0, format!("user {u}: {err}"))))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            name,
            n_users: n,
            n_items: m,
            rows,
            rating_bounds: (lo, hi),
            user_ids: (0..n).map(|i| i.to_string()).collect(),
            item_ids: (0..m).map(|i| i.to_string()).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Writes `index original_id` lines for users and items next to `prefix`
    /// (`<prefix>.users`, `<prefix>.items`).
    pub fn write_id_maps(&self, prefix: &Path) -> Result<()> {
        for (ext, ids) in [("users", &self.user_ids), ("items", &self.item_ids)] {
            let mut out = BufWriter::new(fs::File::create(prefix.with_extension(ext))?);
            for (idx, id) in ids.iter().enumerate() {
                writeln!(out, "{idx} {id}")?;
            }
            out.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Tab,
    Comma,
    /// Any run of ASCII whitespace.
    Whitespace,
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" | "\\t" | "\t" => Ok(Delimiter::Tab),
            "comma" | "," => Ok(Delimiter::Comma),
            "whitespace" | "space" | " " => Ok(Delimiter::Whitespace),
            other => Err(Error::Config(format!("unknown delimiter `{other}`"))),
        }
    }
}

/// Column layout of a delimited rating file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub delimiter: Delimiter,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    #[serde(default)]
    pub skip_header: bool,
    /// Rows whose rating exceeds this value are dropped.
    #[serde(default)]
    pub max_rating: Option<f64>,
}

impl FormatSpec {
    /// `user item rating timestamp`, tab separated (MovieLens `u.data`).
    pub fn movielens_100k() -> Self {
        Self {
            delimiter: Delimiter::Tab,
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            skip_header: false,
            max_rating: None,
        }
    }

    pub fn whitespace() -> Self {
        Self {
            delimiter: Delimiter::Whitespace,
            ..Self::movielens_100k()
        }
    }
}

/// Dense re-indexing in sorted id order; ids that all parse as integers are
/// sorted numerically.
fn dense_ids(raw: &[String]) -> (BTreeMap<String, usize>, Vec<String>) {
    let mut uniq: Vec<String> = raw.to_vec();
    uniq.sort();
    uniq.dedup();
    if uniq.iter().all(|s| s.parse::<i64>().is_ok()) {
        uniq.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    let map = uniq.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (map, uniq)
}

/// Parses `user item rating` triples from a delimited text file and remaps
/// ids to dense 0-based indices.
pub fn load_tabular(path: &Path, format: &FormatSpec) -> Result<RatingsDataset> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_tabular(&text, path, name, format)
}

pub(crate) fn parse_tabular(text: &str, path: &Path, name: String, format: &FormatSpec) -> Result<RatingsDataset> {
    let needed = format.user_col.max(format.item_col).max(format.rating_col) + 1;
    let mut users = Vec::new();
    let mut items = Vec::new();
    let mut ratings = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 && format.skip_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields = format.delimiter.split(line);
        if fields.len() < needed {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("expected at least {needed} fields, got {}", fields.len()),
            });
        }
        let rating: f64 = fields[format.rating_col].parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("rating `{}`: {e}", fields[format.rating_col]),
        })?;
        if !rating.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: "non-finite rating".into(),
            });
        }
        if format.max_rating.is_some_and(|t| rating > t) {
            continue;
        }
        users.push(fields[format.user_col].to_string());
        items.push(fields[format.item_col].to_string());
        ratings.push(rating);
    }
    if ratings.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let (user_map, user_ids) = dense_ids(&users);
    let (item_map, item_ids) = dense_ids(&items);
    let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); user_ids.len()];
    for ((u, i), r) in users.iter().zip(&items).zip(&ratings) {
        per_user[user_map[u]].push((item_map[i], *r));
    }
    let rows = per_user
        .into_iter()
        .enumerate()
        .map(|(u, e)| {
            RatingRow::from_unsorted(e).map_err(|err| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("user `{}`: duplicate rating ({err})", user_ids[u]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lo = ratings.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RatingsDataset {
        name,
        n_users: user_ids.len(),
        n_items: item_ids.len(),
        rows,
        rating_bounds: (lo, hi),
        user_ids,
        item_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of each user's ratings held out, in `[0, 1)`.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Per-user random hold-out. Each user keeps at least one training rating;
/// users with no ratings at all are dropped from both halves.
pub fn split(data: &RatingsDataset, spec: &SplitSpec) -> Result<(RatingsDataset, RatingsDataset)> {
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must lie in [0, 1), got {}",
            spec.test_fraction
        )));
    }
    let mut train_rows = Vec::with_capacity(data.n_users);
    let mut test_rows = Vec::with_capacity(data.n_users);
    let mut kept_ids = Vec::with_capacity(data.n_users);
    for (u, row) in data.rows.iter().enumerate() {
        if row.is_empty() {
            log_dropped_user(&data.user_ids, u);
            continue;
        }
        let n = row.len();
        let n_test = ((spec.test_fraction * n as f64).round() as usize).min(n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(spec.seed, Stream::Split, u as u64));
        let mut is_test = vec![false; n];
        for &k in &order[..n_test] {
            is_test[k] = true;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (k, entry) in row.iter().enumerate() {
            if is_test[k] {
                test.push(entry);
            } else {
                train.push(entry);
            }
        }
        train_rows.push(RatingRow::new(train)?);
        test_rows.push(RatingRow::new(test)?);
        kept_ids.push(data.user_ids.get(u).cloned().unwrap_or_else(|| u.to_string()));
    }
    let make = |rows: Vec<RatingRow>, suffix: &str| RatingsDataset {
        name: format!("{}-{suffix}", data.name),
        n_users: rows.len(),
        n_items: data.n_items,
        rows,
        rating_bounds: data.rating_bounds,
        user_ids: kept_ids.clone(),
        item_ids: data.item_ids.clone(),
    };
    Ok((make(train_rows, "train"), make(test_rows, "test")))
}

fn log_dropped_user(ids: &[String], u: usize) {
    let id = ids.get(u).map(String::as_str).unwrap_or("?");
    eprintln!("split: dropping user {u} (id {id}) with no ratings");
}

/// Anything that can score a `(user, item)` pair.
pub trait RatingPredictor {
    fn predict(&self, user: usize, item: usize, bounds: Option<(f64, f64)>) -> f64;
}

/// Scores with the clients' user vectors against one shared item matrix.
pub struct SharedItemPredictor<'a> {
    pub user_vecs: &'a [Vec<f64>],
    pub item_mat: &'a crate::matrix::ItemMatrix,
}

impl RatingPredictor for SharedItemPredictor<'_> {
    fn predict(&self, user: usize, item: usize, bounds: Option<(f64, f64)>) -> f64 {
        predict(&self.user_vecs[user], self.item_mat.col(item), bounds).expect("latent dimensions agree")
    }
}

/// Constant prediction, for baselines.
pub struct ConstantPredictor(pub f64);

impl RatingPredictor for ConstantPredictor {
    fn predict(&self, _user: usize, _item: usize, bounds: Option<(f64, f64)>) -> f64 {
        match bounds {
            Some((lo, hi)) => self.0.clamp(lo, hi),
            None => self.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
}

/// MAE and RMSE over every test observation.
pub fn evaluate<P: RatingPredictor + ?Sized>(predictor: &P, test: &RatingsDataset, clip: bool) -> Result<Metrics> {
    let bounds = clip.then_some(test.rating_bounds);
    let (mut abs, mut sq, mut count) = (0.0, 0.0, 0usize);
    for (u, i, r) in test.triples() {
        let e = r - predictor.predict(u, i, bounds);
        abs += e.abs();
        sq += e * e;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyTestSet);
    }
    let metrics = Metrics {
        mae: abs / count as f64,
        rmse: (sq / count as f64).sqrt(),
    };
    debug_assert!(metrics.rmse.is_nan() || metrics.rmse + 1e-12 >= metrics.mae, "RMSE below MAE: {metrics:?}");
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn parse(text: &str, fmt: &FormatSpec) -> Result<RatingsDataset> {
        parse_tabular(text, &PathBuf::from("mem"), "mem".into(), fmt)
    }

    #[test]
    fn singleton_file() {
        let ds = parse("1 1 5.0\n", &FormatSpec::whitespace()).unwrap();
        assert_eq!((ds.n_users, ds.n_items, ds.n_ratings()), (1, 1, 1));
        assert_eq!(ds.rating_bounds, (5.0, 5.0));
    }

    #[test]
    fn value_filter_drops_rows() {
        let fmt = FormatSpec {
            delimiter: Delimiter::Comma,
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            skip_header: true,
            max_rating: Some(20.0),
        };
        let ds = parse("user,video,watch_ratio\n1,10,1.5\n1,11,25\n2,10,3.0\n", &fmt).unwrap();
        assert_eq!(ds.n_ratings(), 2);
        assert!(ds.triples().all(|(_, _, r)| r <= 20.0));
        assert_eq!(ds.n_items, 1);
    }

    #[test]
    fn ids_remapped_numerically() {
        let ds = parse("10 7 1\n9 100 2\n10 100 3\n", &FormatSpec::whitespace()).unwrap();
        assert_eq!(ds.user_ids, vec!["9", "10"]);
        assert_eq!(ds.item_ids, vec!["7", "100"]);
        assert_eq!(ds.rows[1].items(), &[0, 1]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("1 1 5\n1 2\n", &FormatSpec::whitespace()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("1 1 5\n1 2 x\n", &FormatSpec::whitespace()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_file_errors() {
        assert!(matches!(parse("", &FormatSpec::whitespace()), Err(Error::EmptyFile(_))));
        assert!(matches!(parse("\n\n", &FormatSpec::whitespace()), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn duplicate_rating_rejected() {
        assert!(parse("1 1 5\n1 1 4\n", &FormatSpec::whitespace()).is_err());
    }

    fn ten_ratings() -> RatingsDataset {
        let triples: Vec<_> = (0..10).map(|i| (0, i, 1.0 + (i % 5) as f64)).collect();
        RatingsDataset::from_triples("ten", 1, 10, &triples).unwrap()
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = ten_ratings();
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 42,
        };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(test.rows[0].len(), 2);
        assert_eq!(train.rows[0].len(), 8);
        let (_, again) = split(&ds, &spec).unwrap();
        assert_eq!(test.rows[0], again.rows[0]);
    }

    #[test]
    fn zero_fraction_keeps_everything() {
        let ds = ten_ratings();
        let (train, test) = split(&ds, &SplitSpec { test_fraction: 0.0, seed: 1 }).unwrap();
        assert_eq!(train.rows, ds.rows);
        assert_eq!(test.n_ratings(), 0);
    }

    #[test]
    fn split_keeps_one_training_rating() {
        let ds = RatingsDataset::from_triples("one", 1, 1, &[(0, 0, 3.0)]).unwrap();
        let (train, test) = split(&ds, &SplitSpec { test_fraction: 0.9, seed: 1 }).unwrap();
        assert_eq!(train.rows[0].len(), 1);
        assert_eq!(test.rows[0].len(), 0);
        assert!(split(&ds, &SplitSpec { test_fraction: 1.0, seed: 1 }).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let test = RatingsDataset::from_triples("t", 2, 1, &[(0, 0, 3.0), (1, 0, 5.0)]).unwrap();
        let m = evaluate(&ConstantPredictor(4.0), &test, false).unwrap();
        assert_eq!((m.mae, m.rmse), (1.0, 1.0));

        struct Oracle<'a>(&'a RatingsDataset);
        impl RatingPredictor for Oracle<'_> {
            fn predict(&self, u: usize, i: usize, _b: Option<(f64, f64)>) -> f64 {
                self.0.rows[u].iter().find(|&(j, _)| j == i).unwrap().1
            }
        }
        let m = evaluate(&Oracle(&test), &test, true).unwrap();
        assert_eq!((m.mae, m.rmse), (0.0, 0.0));

        let empty = RatingsDataset::from_triples("e", 1, 1, &[]).unwrap();
        assert!(matches!(evaluate(&ConstantPredictor(1.0), &empty, false), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn internal_format_round_trip() {
        let ds = RatingsDataset::from_triples("x", 3, 4, &[(0, 1, 0.1), (2, 3, 4.75), (1, 0, 1.0 / 3.0)]).unwrap();
        let mut buf = Vec::new();
        ds.write_internal_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("3 4 3 0.1 4.75\n"));
        let back = RatingsDataset::parse_internal(&text, Path::new("x"), "x".into()).unwrap();
        assert_eq!(back.rows, ds.rows);
        assert_eq!(back.rating_bounds, ds.rating_bounds);
    }

    #[test]
    fn internal_format_count_mismatch() {
        let err = RatingsDataset::parse_internal("2 2 3 1 5\n0 0 1\n", Path::new("x"), "x".into());
        assert!(err.is_err());
    }
}
