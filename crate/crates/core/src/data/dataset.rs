use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{QAItem, QuestionType};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("test fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
}

fn validate(item: &QAItem) -> Result<(), String> {
    if item.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if item.answer.trim().is_empty() {
        return Err(format!("item `{}` has an empty answer", item.id));
    }
    match QuestionType::for_dataset(&item.dataset) {
        Some(expected) if expected != item.qtype => {
            Err(format!("item `{}`: dataset `{}` implies type {expected}, found {}", item.id, item.dataset, item.qtype))
        }
        _ => Ok(()),
    }
}

/// Parses JSONL items, one per line; blank lines are skipped.
pub fn parse_dataset(contents: &str) -> Result<Vec<QAItem>, DatasetError> {
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem =
            serde_json::from_str(line).map_err(|e| DatasetError::Invalid { line: line_no, message: e.to_string() })?;
        validate(&item).map_err(|message| DatasetError::Invalid { line: line_no, message })?;
        if !seen.insert(item.id.clone()) {
            return Err(DatasetError::DuplicateId { line: line_no, id: item.id });
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QAItem>, DatasetError> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn write_dataset<W: Write>(items: &[QAItem], mut out: W) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Seeded shuffle, then the first `round(n * test_fraction)` items go to test.
pub fn split(items: &[QAItem], test_fraction: f64, seed: u64) -> Result<(Vec<QAItem>, Vec<QAItem>), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (items.len() as f64 * test_fraction).round() as usize;
    let train = shuffled.split_off(n_test);
    Ok((train, shuffled))
}
