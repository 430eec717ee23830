//! Directory layout:
//!
//! ```text
//! features.csv    one row per sample
//! features.bin    optional, "ZSLF" + u32 rows + u32 cols + f32 values (LE); wins over csv
//! labels.csv      one class id per line
//! attributes.csv  one row per class id
//! split.csv       train_seen:<ids> / val_unseen:<ids> / test_unseen:<ids>
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{ClassSplit, Dataset, PreprocessConfig};
use crate::error::{Result, ZslError};

const FEATURES_CSV: &str = "features.csv";
const FEATURES_BIN: &str = "features.bin";
const LABELS_CSV: &str = "labels.csv";
const ATTRIBUTES_CSV: &str = "attributes.csv";
const SPLIT_CSV: &str = "split.csv";
const BIN_MAGIC: &[u8; 4] = b"ZSLF";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

pub fn load_dataset(dir: &Path, preprocess: &PreprocessConfig) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(ZslError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let bin_path = dir.join(FEATURES_BIN);
    let features = if bin_path.is_file() {
        read_features_bin(&bin_path)?
    } else {
        read_matrix_csv(&dir.join(FEATURES_CSV), FEATURES_CSV)?
    };
    let labels = read_labels(&dir.join(LABELS_CSV))?;
    let semantics = read_matrix_csv(&dir.join(ATTRIBUTES_CSV), ATTRIBUTES_CSV)?;
    let split = read_split(&dir.join(SPLIT_CSV))?;

    if labels.len() != features.nrows() {
        return Err(ZslError::DimensionMismatch(format!(
            "{LABELS_CSV} has {} rows but features have {}",
            labels.len(),
            features.nrows()
        )));
    }
    if let Some((i, &l)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l >= semantics.nrows())
    {
        return Err(ZslError::LabelOutOfRange {
            file: LABELS_CSV.into(),
            line: i + 1,
            label: l,
            n_classes: semantics.nrows(),
        });
    }
    let features = preprocess.apply(&features)?;
    Dataset::new(features, labels, semantics, split)
}

pub fn save_dataset(dir: &Path, ds: &Dataset, format: FeatureFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ZslError::io(dir, e))?;
    match format {
        FeatureFormat::Csv => write_file(&dir.join(FEATURES_CSV), &matrix_to_csv(&ds.features))?,
        FeatureFormat::Binary => {
            let path = dir.join(FEATURES_BIN);
            fs::write(&path, features_to_bin(&ds.features)).map_err(|e| ZslError::io(&path, e))?
        }
    }
    let labels: String = ds.labels.iter().map(|l| format!("{l}\n")).collect();
    write_file(&dir.join(LABELS_CSV), &labels)?;
    write_file(&dir.join(ATTRIBUTES_CSV), &matrix_to_csv(&ds.semantics))?;
    write_file(&dir.join(SPLIT_CSV), &split_to_text(&ds.split))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| ZslError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ZslError::io(path, e))
}

/// Non-empty lines with their 1-based line numbers, CR stripped.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_real(tok: &str, file: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| ZslError::Parse {
        file: file.into(),
        line,
        msg: format!("cannot parse {tok:?} as a real number"),
    })?;
    if !v.is_finite() {
        return Err(ZslError::NonFinite {
            file: file.into(),
            line,
        });
    }
    Ok(v)
}

pub(crate) fn read_matrix_csv(path: &Path, file: &str) -> Result<DMatrix<f64>> {
    let text = read_text(path)?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (line, row) in lines(&text) {
        let start = data.len();
        for tok in row.split(',') {
            data.push(parse_real(tok, file, line)?);
        }
        let width = data.len() - start;
        match ncols {
            None => ncols = Some(width),
            Some(c) if c != width => {
                return Err(ZslError::Parse {
                    file: file.into(),
                    line,
                    msg: format!("expected {c} columns, found {width}"),
                })
            }
            _ => {}
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols.unwrap_or(0), &data))
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    lines(&text)
        .map(|(line, tok)| {
            tok.parse::<usize>().map_err(|_| ZslError::Parse {
                file: LABELS_CSV.into(),
                line,
                msg: format!("cannot parse {tok:?} as a class id"),
            })
        })
        .collect()
}

fn read_split(path: &Path) -> Result<ClassSplit> {
    let text = read_text(path)?;
    let mut sets: [Option<Vec<usize>>; 3] = [None, None, None];
    for (line, row) in lines(&text) {
        let (key, ids) = row.split_once(':').ok_or_else(|| ZslError::Parse {
            file: SPLIT_CSV.into(),
            line,
            msg: "expected `<name>:<ids>`".into(),
        })?;
        let slot = match key.trim() {
            "train_seen" => 0,
            "val_unseen" => 1,
            "test_unseen" => 2,
            other => {
                return Err(ZslError::Parse {
                    file: SPLIT_CSV.into(),
                    line,
                    msg: format!("unknown split {other:?}"),
                })
            }
        };
        let parsed = ids
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>().map_err(|_| ZslError::Parse {
                    file: SPLIT_CSV.into(),
                    line,
                    msg: format!("cannot parse {t:?} as a class id"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sets[slot] = Some(parsed);
    }
    let [train, val, test] = sets;
    let missing = |name: &str| ZslError::Parse {
        file: SPLIT_CSV.into(),
        line: 0,
        msg: format!("missing {name} line"),
    };
    ClassSplit::new(
        train.ok_or_else(|| missing("train_seen"))?,
        val.ok_or_else(|| missing("val_unseen"))?,
        test.ok_or_else(|| missing("test_unseen"))?,
    )
}

fn read_features_bin(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| ZslError::io(path, e))?;
    let bad = |msg: &str| ZslError::Parse {
        file: FEATURES_BIN.into(),
        line: 0,
        msg: msg.into(),
    };
    if bytes.len() < 12 || &bytes[..4] != BIN_MAGIC {
        return Err(bad("missing ZSLF header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(bad(&format!(
            "expected {} value bytes for {rows}x{cols}, found {}",
            rows * cols * 4,
            body.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(ZslError::NonFinite {
                file: FEATURES_BIN.into(),
                line: k / cols.max(1) + 1,
            });
        }
        data.push(v);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn features_to_bin(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + m.len() * 4);
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for r in 0..m.nrows() {
        for v in m.row(r).iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub(crate) fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn split_to_text(split: &ClassSplit) -> String {
    let join = |s: &std::collections::BTreeSet<usize>| {
        s.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    };
    format!(
        "train_seen:{}\nval_unseen:{}\ntest_unseen:{}\n",
        join(&split.train_seen),
        join(&split.val_unseen),
        join(&split.test_unseen)
    )
}
