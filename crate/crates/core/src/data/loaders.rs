use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Dataset, Interaction, Source};
use crate::error::{Error, Result};

pub const COAT_USERS: usize = 290;
pub const COAT_ITEMS: usize = 300;

/// What to do with a biased rating whose `(user, item)` also appears in the
/// uniform log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapPolicy {
    #[default]
    Keep,
    /// The uniform copy wins; the biased copy is dropped.
    DropBiased,
}

fn parse_err(source_name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_owned(),
        line,
        message: message.into(),
    }
}

fn parse_int(field: &str, source_name: &str, line: usize, what: &str) -> Result<i64> {
    field
        .trim()
        .parse::<i64>()
        .map_err(|_| parse_err(source_name, line, format!("bad {what} {field:?}")))
}

fn read_triples<R: Read>(reader: R, source_name: &str) -> Result<Vec<(i64, i64, i64)>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(
                source_name,
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let user = parse_int(fields[0], source_name, lineno, "user id")?;
        let item = parse_int(fields[1], source_name, lineno, "item id")?;
        let rating = parse_int(fields[2], source_name, lineno, "rating")?;
        if user < 1 || item < 1 {
            return Err(parse_err(source_name, lineno, "ids are 1-indexed"));
        }
        if !(1..=5).contains(&rating) {
            return Err(parse_err(source_name, lineno, format!("rating {rating} outside 1..=5")));
        }
        out.push((user, item, rating));
    }
    Ok(out)
}

/// Parses Yahoo!R3-style `user<TAB>item<TAB>rating` logs (1-indexed ids).
/// Ids are remapped to contiguous 0-based indices in ascending raw order
/// over both files.
pub fn parse_yahoo<B: Read, U: Read>(biased: B, uniform: U) -> Result<Dataset> {
    let biased = read_triples(biased, "biased")?;
    let uniform = read_triples(uniform, "uniform")?;
    let users: BTreeSet<i64> = biased.iter().chain(&uniform).map(|t| t.0).collect();
    let items: BTreeSet<i64> = biased.iter().chain(&uniform).map(|t| t.1).collect();
    let user_idx: HashMap<i64, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_idx: HashMap<i64, usize> = items.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut interactions = Vec::with_capacity(biased.len() + uniform.len());
    for (triples, source) in [(&biased, Source::Biased), (&uniform, Source::Uniform)] {
        for &(u, i, r) in triples {
            interactions.push(Interaction::new(user_idx[&u], item_idx[&i], r, source)?);
        }
    }
    Dataset::new(interactions, users.len(), items.len())
}

pub fn load_yahoo(biased_path: &Path, uniform_path: &Path) -> Result<Dataset> {
    parse_yahoo(
        std::fs::File::open(biased_path)?,
        std::fs::File::open(uniform_path)?,
    )
}

fn read_matrix<R: Read>(reader: R, source_name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<i64>>> {
    let mut out = Vec::with_capacity(rows);
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|f| parse_int(f, source_name, lineno, "cell"))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "{source_name}: row {lineno} has {} columns, expected {cols}",
                row.len()
            )));
        }
        if let Some(bad) = row.iter().find(|&&v| !(0..=5).contains(&v)) {
            return Err(parse_err(source_name, lineno, format!("cell value {bad} outside 0..=5")));
        }
        out.push(row);
    }
    if out.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "{source_name}: {} rows, expected {rows}",
            out.len()
        )));
    }
    Ok(out)
}

/// Parses Coat-style dense rating matrices (`0` = unobserved). The
/// self-selected matrix is the biased log, the random one the uniform log.
pub fn parse_coat<B: Read, U: Read>(
    biased_matrix: B,
    uniform_matrix: U,
    rows: usize,
    cols: usize,
    overlap: OverlapPolicy,
) -> Result<Dataset> {
    let biased = read_matrix(biased_matrix, "biased", rows, cols)?;
    let uniform = read_matrix(uniform_matrix, "uniform", rows, cols)?;
    let mut interactions = Vec::new();
    for (matrix, source) in [(&biased, Source::Biased), (&uniform, Source::Uniform)] {
        for (u, row) in matrix.iter().enumerate() {
            for (i, &r) in row.iter().enumerate() {
                if r == 0 {
                    continue;
                }
                if source == Source::Biased && overlap == OverlapPolicy::DropBiased && uniform[u][i] != 0 {
                    continue;
                }
                interactions.push(Interaction::new(u, i, r, source)?);
            }
        }
    }
    Dataset::new(interactions, rows, cols)
}

/// Loads the 290 x 300 Coat matrices. Biased cells that were also rated
/// in the uniform survey are dropped so every pair has one label.
pub fn load_coat(train_matrix_path: &Path, test_matrix_path: &Path) -> Result<Dataset> {
    parse_coat(
        std::fs::File::open(train_matrix_path)?,
        std::fs::File::open(test_matrix_path)?,
        COAT_USERS,
        COAT_ITEMS,
        OverlapPolicy::DropBiased,
    )
}

/// Canonical TSV: a `# n_users=U n_items=I` header, then one
/// `user<TAB>item<TAB>rating<TAB>source` line per interaction (0-based ids).
pub fn write_canonical<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    writeln!(w, "# n_users={} n_items={}", dataset.n_users(), dataset.n_items())?;
    for x in dataset.interactions() {
        writeln!(w, "{}\t{}\t{}\t{}", x.user, x.item, x.rating, x.source.as_str())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_canonical<R: Read>(reader: R, source_name: &str) -> Result<Dataset> {
    let mut dims: Option<(usize, usize)> = None;
    let mut interactions = Vec::new();
    let mut seen_users = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if let Some(header) = line.strip_prefix('#') {
            let mut users = None;
            let mut items = None;
            for kv in header.split_whitespace() {
                match kv.split_once('=') {
                    Some(("n_users", v)) => users = v.parse().ok(),
                    Some(("n_items", v)) => items = v.parse().ok(),
                    _ => {}
                }
            }
            if let (Some(u), Some(i)) = (users, items) {
                dims = Some((u, i));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(source_name, lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let user = parse_int(fields[0], source_name, lineno, "user id")?;
        let item = parse_int(fields[1], source_name, lineno, "item id")?;
        let rating = parse_int(fields[2], source_name, lineno, "rating")?;
        if user < 0 || item < 0 {
            return Err(parse_err(source_name, lineno, "negative id"));
        }
        let source = match fields[3] {
            "uniform" => Source::Uniform,
            "biased" => Source::Biased,
            other => return Err(parse_err(source_name, lineno, format!("unknown source {other:?}"))),
        };
        seen_users.insert(user);
        interactions.push(
            Interaction::new(user as usize, item as usize, rating, source)
                .map_err(|e| parse_err(source_name, lineno, e.to_string()))?,
        );
    }
    let (n_users, n_items) = dims.unwrap_or_else(|| {
        let u = interactions.iter().map(|x| x.user + 1).max().unwrap_or(0);
        let i = interactions.iter().map(|x| x.item + 1).max().unwrap_or(0);
        (u, i)
    });
    Dataset::new(interactions, n_users, n_items)
}
