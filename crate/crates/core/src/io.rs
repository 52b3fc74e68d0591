//! Text formats and atomic file output.
//!
//! Datasets are one sample per line, `x_1,…,x_m|y_1,…,y_d`; the label part may
//! be omitted for decode inputs. Reviews use `review_id,x_1,…,x_m|y_1,…,y_d`
//! with a separate `review_id,aspect,rating` file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::BnbReport;
use crate::experiments::{Review, Sample};
use crate::losses::LossKind;
use crate::surrogate::ModelDump;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let io_err = |source| IoError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn fmt_row(out: &mut String, x: &[f64], y: Option<&[u8]>) {
    let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
    out.push_str(&xs.join(","));
    if let Some(y) = y {
        out.push('|');
        let ys: Vec<String> = y.iter().map(|v| v.to_string()).collect();
        out.push_str(&ys.join(","));
    }
    out.push('\n');
}

pub fn format_dataset(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        fmt_row(&mut out, &s.x, Some(&s.y));
    }
    out
}

/// A parsed dataset line: features and optional labels.
type Row = (Vec<f64>, Option<Vec<u8>>);

fn parse_row(line: &str) -> Result<Row, String> {
    let (xs, ys) = match line.split_once('|') {
        Some((a, b)) => (a, Some(b)),
        None => (line, None),
    };
    let x = xs
        .split(',')
        .map(|t| {
            let v: f64 = t.trim().parse().map_err(|_| format!("bad feature `{}`", t.trim()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite feature `{}`", t.trim()))
            }
        })
        .collect::<Result<Vec<f64>, String>>()?;
    let y = ys
        .map(|ys| {
            ys.split(',')
                .map(|t| match t.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(format!("label `{other}` is not 0 or 1")),
                })
                .collect::<Result<Vec<u8>, String>>()
        })
        .transpose()?;
    Ok((x, y))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses rows; `require_labels` rejects rows without a label part. All rows
/// must agree on feature and label width.
pub fn parse_rows(path: &Path, text: &str, require_labels: bool) -> Result<Vec<Row>, IoError> {
    let mut rows = Vec::new();
    for (line, l) in data_lines(text) {
        let parse_err = |message: String| IoError::Parse { path: path.to_path_buf(), line, message };
        let row = parse_row(l).map_err(parse_err)?;
        if require_labels && row.1.is_none() {
            return Err(parse_err("missing `|labels` part".into()));
        }
        if let Some((x0, y0)) = rows.first().map(|r: &Row| (r.0.len(), r.1.as_ref().map(Vec::len))) {
            if row.0.len() != x0 {
                return Err(parse_err(format!("expected {x0} features, found {}", row.0.len())));
            }
            if let (Some(a), Some(b)) = (y0, row.1.as_ref().map(Vec::len)) {
                if a != b {
                    return Err(parse_err(format!("expected {a} labels, found {b}")));
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::Format { path: path.to_path_buf(), message: "no samples".into() });
    }
    Ok(rows)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>, IoError> {
    let text = read_to_string(path)?;
    Ok(parse_rows(path, &text, true)?
        .into_iter()
        .map(|(x, y)| Sample { x, y: y.expect("labels required") })
        .collect())
}

/// Reviews as `review_id,features|labels` rows, one per sentence.
pub fn format_reviews(reviews: &[Review]) -> (String, String) {
    let mut sentences = String::from("# review_id,features|labels\n");
    let mut ratings = String::from("review_id,aspect,rating\n");
    for r in reviews {
        for s in &r.sentences {
            let _ = write!(sentences, "{},", r.id);
            fmt_row(&mut sentences, &s.x, Some(&s.y));
        }
        for (k, v) in r.ratings.iter().enumerate() {
            let _ = writeln!(ratings, "{},{k},{v}", r.id);
        }
    }
    (sentences, ratings)
}

pub fn read_reviews(sentences_path: &Path, ratings_path: &Path) -> Result<Vec<Review>, IoError> {
    let text = read_to_string(sentences_path)?;
    let mut by_id: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
    for (line, l) in data_lines(&text) {
        let parse_err = |message: String| IoError::Parse { path: sentences_path.to_path_buf(), line, message };
        let (id, rest) = l.split_once(',').ok_or_else(|| parse_err("missing review id".into()))?;
        let id: usize = id.trim().parse().map_err(|_| parse_err(format!("bad review id `{id}`")))?;
        let (x, y) = parse_row(rest).map_err(parse_err)?;
        let y = y.ok_or_else(|| parse_err("missing `|labels` part".into()))?;
        by_id.entry(id).or_default().push(Sample { x, y });
    }
    let text = read_to_string(ratings_path)?;
    let mut ratings: BTreeMap<usize, BTreeMap<usize, i8>> = BTreeMap::new();
    for (line, l) in data_lines(&text) {
        if line == 1 && l.starts_with("review_id") {
            continue;
        }
        let parse_err = |message: String| IoError::Parse { path: ratings_path.to_path_buf(), line, message };
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        let [id, aspect, rating] = fields[..] else {
            return Err(parse_err("expected review_id,aspect,rating".into()));
        };
        let id: usize = id.parse().map_err(|_| parse_err(format!("bad review id `{id}`")))?;
        let aspect: usize = aspect.parse().map_err(|_| parse_err(format!("bad aspect `{aspect}`")))?;
        let rating: i8 = match rating {
            "-1" => -1,
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(format!("rating `{other}` not in {{-1,0,1}}"))),
        };
        ratings.entry(id).or_default().insert(aspect, rating);
    }
    let mut out = Vec::new();
    for (id, sentences) in by_id {
        let fmt_err = |message: String| IoError::Format { path: ratings_path.to_path_buf(), message };
        let r = ratings.remove(&id).ok_or_else(|| fmt_err(format!("no ratings for review {id}")))?;
        let n = r.len();
        if r.keys().copied().ne(0..n) {
            return Err(fmt_err(format!("review {id}: aspects must be 0..{n}")));
        }
        out.push(Review { id, sentences, ratings: r.into_values().collect() });
    }
    if let Some(id) = ratings.keys().next() {
        return Err(IoError::Format {
            path: ratings_path.to_path_buf(),
            message: format!("ratings for review {id} without sentences"),
        });
    }
    Ok(out)
}

pub const PREDICTION_HEADER: &str = "labeling,objective,nodes_explored";

pub fn format_predictions(reports: &[BnbReport]) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{},{},{}", r.optimum.render(), r.objective_value, r.nodes_explored);
    }
    out
}

/// Model file: the surrogate plus the loss shape it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub loss: LossKind,
    pub d: usize,
    pub q: usize,
    pub model: ModelDump,
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model file serializes")
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })
    }
}
