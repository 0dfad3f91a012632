//! Prediction files, group maps, and weight matrices.
//!
//! JSONL rows are objects with an integer `label` and `probs` and/or `logits`;
//! `probs` may be a bare number `p`, read as the binary output `[1 - p, p]`.
//! CSV files carry a header `p0,...,p{k-1},label`, `z0,...,z{k-1},label`,
//! or `p,label` for scalar binary outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::Value;

use crate::data::{Dataset, PredictionRecord, ProbabilityVector, INGEST_TOLERANCE};
use crate::distance::{validate_weight_matrix, DistanceSpec};
use crate::error::{Error, Result};
use crate::lens::{make_grouping, LensSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => Ok(Format::Jsonl),
            Some("csv") => Ok(Format::Csv),
            _ => Err(Error::Io {
                path: path.display().to_string(),
                message: "cannot infer format from extension (use .jsonl or .csv)".into(),
            }),
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Io {
                path: String::new(),
                message: format!("unknown format {s}"),
            }),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn at_line(path: &Path, line: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Record {
        path: path.display().to_string(),
        line,
        source: Box::new(e),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn load_predictions(path: &Path, format: Option<Format>) -> Result<Dataset> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let records = match format {
        Format::Jsonl => read_jsonl(path)?,
        Format::Csv => read_csv(path)?,
    };
    if records.is_empty() {
        return Err(parse_err(path, 0, "no records"));
    }
    let k = records[0].1.k();
    for (line, r) in &records {
        if r.k() != k {
            return Err(at_line(path, *line)(Error::InconsistentWidth {
                expected: k,
                found: r.k(),
            }));
        }
    }
    Dataset::new(records.into_iter().map(|(_, r)| r).collect())
}

fn record_from(probs: Option<Vec<f64>>, logits: Option<Vec<f64>>, label: usize) -> Result<PredictionRecord> {
    match (probs, logits) {
        (Some(p), Some(z)) => PredictionRecord::from_both(ProbabilityVector::new(p, INGEST_TOLERANCE)?, z, label),
        (Some(p), None) => PredictionRecord::from_probs(ProbabilityVector::new(p, INGEST_TOLERANCE)?, label),
        (None, Some(z)) => PredictionRecord::from_logits(z, label),
        (None, None) => Err(Error::MissingOutputs),
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, PredictionRecord)>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let label = v
            .get("label")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err(path, line_no, "missing integer `label`"))? as usize;
        let floats = |key: &str| -> Result<Option<Vec<f64>>> {
            match v.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::Number(n)) if key == "probs" => {
                    let p = n.as_f64().unwrap();
                    Ok(Some(vec![1.0 - p, p]))
                }
                Some(Value::Array(a)) => a
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .ok_or_else(|| parse_err(path, line_no, format!("non-numeric `{key}` entry")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some),
                Some(_) => Err(parse_err(path, line_no, format!("`{key}` must be an array"))),
            }
        };
        let rec = record_from(floats("probs")?, floats("logits")?, label).map_err(at_line(path, line_no))?;
        out.push((line_no, rec));
    }
    Ok(out)
}

enum CsvLayout {
    Probs,
    Logits,
    Scalar,
}

fn read_csv(path: &Path) -> Result<Vec<(usize, PredictionRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let (_, rest) = header
        .split_last()
        .filter(|(l, _)| l.as_str() == "label")
        .ok_or_else(|| parse_err(path, 1, "last header column must be `label`"))?;
    let layout = if rest == ["p"] {
        CsvLayout::Scalar
    } else if rest.len() >= 2 && rest.iter().enumerate().all(|(i, h)| *h == format!("p{i}")) {
        CsvLayout::Probs
    } else if rest.len() >= 2 && rest.iter().enumerate().all(|(i, h)| *h == format!("z{i}")) {
        CsvLayout::Logits
    } else {
        return Err(parse_err(
            path,
            1,
            "header must be p0..p{k-1},label or z0..z{k-1},label or p,label",
        ));
    };
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line_no = i + 2;
        let row = row.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if row.len() != header.len() {
            return Err(at_line(path, line_no)(Error::InconsistentWidth {
                expected: header.len() - 1,
                found: row.len().saturating_sub(1),
            }));
        }
        let nums = row
            .iter()
            .take(row.len() - 1)
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| parse_err(path, line_no, format!("bad number `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let label: usize = row[row.len() - 1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad label `{}`", &row[row.len() - 1])))?;
        let rec = match layout {
            CsvLayout::Scalar => record_from(Some(vec![1.0 - nums[0], nums[0]]), None, label),
            CsvLayout::Probs => record_from(Some(nums), None, label),
            CsvLayout::Logits => record_from(None, Some(nums), label),
        }
        .map_err(at_line(path, line_no))?;
        out.push((line_no, rec));
    }
    Ok(out)
}

/// Decimal with 17 significant digits; parses back to the same bits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_predictions(dataset: &Dataset, path: &Path, format: Option<Format>) -> Result<()> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let mut buf = String::new();
    match format {
        Format::Jsonl => {
            for r in dataset.records() {
                let mut obj = serde_json::Map::new();
                obj.insert("probs".into(), serde_json::to_value(r.probs().as_slice()).unwrap());
                if let Some(z) = r.logits() {
                    obj.insert("logits".into(), serde_json::to_value(z).unwrap());
                }
                obj.insert("label".into(), r.label().into());
                buf.push_str(&serde_json::to_string(&obj).unwrap());
                buf.push('\n');
            }
        }
        Format::Csv => {
            let cols: Vec<String> = (0..dataset.k()).map(|i| format!("p{i}")).collect();
            buf.push_str(&cols.join(","));
            buf.push_str(",label\n");
            for r in dataset.records() {
                for p in r.probs().as_slice() {
                    buf.push_str(&fmt17(*p));
                    buf.push(',');
                }
                buf.push_str(&r.label().to_string());
                buf.push('\n');
            }
        }
    }
    write_file(path, &buf)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| io_err(path, e))
}

fn numeric_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(|c| c.trim().to_string()).collect()))
        .collect())
}

/// Two-column CSV `class_index,group_index`; a non-numeric first row is a header.
pub fn load_group_map(path: &Path) -> Result<BTreeMap<usize, usize>> {
    let mut map = BTreeMap::new();
    for (idx, (line, cols)) in numeric_rows(path)?.into_iter().enumerate() {
        let parsed: Option<Vec<usize>> = cols.iter().map(|c| c.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => {
                if map.insert(v[0], v[1]).is_some() {
                    return Err(parse_err(path, line, format!("class {} mapped twice", v[0])));
                }
            }
            None if idx == 0 => continue,
            _ => return Err(parse_err(path, line, "expected `class_index,group_index`")),
        }
    }
    Ok(map)
}

/// Square matrix as CSV rows of numbers, no header.
pub fn load_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    numeric_rows(path)?
        .into_iter()
        .map(|(line, cols)| {
            cols.iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| parse_err(path, line, format!("bad number `{c}`")))
                })
                .collect()
        })
        .collect()
}

/// Parses a lens, loading `group:<path>` maps for a `k`-class dataset.
pub fn resolve_lens(text: &str, k: usize) -> Result<LensSpec> {
    let lens = match text.trim().strip_prefix("group:") {
        Some(p) => make_grouping(&load_group_map(Path::new(p))?, k)?,
        None => text.parse()?,
    };
    lens.validate(k)?;
    Ok(lens)
}

/// Parses a distance, loading `weighted:<path>` matrices.
pub fn resolve_distance(text: &str) -> Result<DistanceSpec> {
    match text.trim().strip_prefix("weighted:") {
        Some(p) => validate_weight_matrix(&load_matrix(Path::new(p))?),
        None => text.parse(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn jsonl_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.jsonl",
            "{\"probs\":[0.7,0.2,0.1],\"label\":0}\n\n{\"logits\":[0,0,0],\"label\":2}\n",
        );
        let d = load_predictions(&p, None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.k(), 3);
        let p = write(&dir, "b.jsonl", "{\"probs\":0.8,\"label\":1}\n");
        assert_eq!(load_predictions(&p, None).unwrap().records()[0].probs()[1], 0.8);
    }

    #[test]
    fn csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "p0,p1,label\n0.5,0.5,0\n");
        let d = load_predictions(&p, None).unwrap();
        assert_eq!(d.k(), 2);
        assert_eq!(d.labels(), vec![0]);
        let p = write(&dir, "z.csv", "z0,z1,z2,label\n1,2,3,2\n");
        assert!(load_predictions(&p, None).unwrap().records()[0].logits().is_some());
        let p = write(&dir, "s.csv", "p,label\n0.25,1\n");
        assert_eq!(load_predictions(&p, None).unwrap().records()[0].probs()[0], 0.75);
    }

    #[test]
    fn errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "bad.jsonl",
            "{\"probs\":[0.5,0.5],\"label\":0}\n{\"probs\":[0.9,0.3],\"label\":0}\n",
        );
        match load_predictions(&p, None) {
            Err(Error::Record { line: 2, source, .. }) => assert!(matches!(*source, Error::SumOutOfTolerance { .. })),
            other => panic!("{other:?}"),
        }
        let p = write(
            &dir,
            "w.jsonl",
            "{\"probs\":[0.5,0.5],\"label\":0}\n{\"probs\":[0.5,0.25,0.25],\"label\":0}\n",
        );
        assert!(matches!(load_predictions(&p, None), Err(Error::Record { line: 2, .. })));
        let p = write(&dir, "x.jsonl", "{\"probs\":[0.5,0.5]}\n");
        assert!(matches!(load_predictions(&p, None), Err(Error::Parse { line: 1, .. })));
        let p = write(&dir, "h.csv", "a,b,label\n0.5,0.5,0\n");
        assert!(matches!(load_predictions(&p, None), Err(Error::Parse { line: 1, .. })));
        let p = write(&dir, "r.csv", "p0,p1,label\n0.5,0.5,0\n0.9,0.3,1\n");
        assert!(matches!(load_predictions(&p, None), Err(Error::Record { line: 3, .. })));
    }

    #[test]
    fn ingestion_tolerance_renormalizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.jsonl", "{\"probs\":[0.5000004,0.4999999],\"label\":0}\n");
        let d = load_predictions(&p, None).unwrap();
        let s: f64 = d.records()[0].probs().as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn group_map_and_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let g = write(&dir, "g.csv", "class_index,group_index\n0,0\n1,0\n2,1\n");
        assert_eq!(
            resolve_lens(&format!("group:{}", g.display()), 3).unwrap(),
            LensSpec::Grouping(vec![vec![0, 1], vec![2]])
        );
        assert!(resolve_lens(&format!("group:{}", g.display()), 4).is_err());
        let m = write(&dir, "m.csv", "1,0\n0,2\n");
        assert!(matches!(
            resolve_distance(&format!("weighted:{}", m.display())).unwrap(),
            DistanceSpec::Weighted(_)
        ));
        let m = write(&dir, "bad.csv", "1,2\n2,1\n");
        assert!(matches!(
            resolve_distance(&format!("weighted:{}", m.display())),
            Err(Error::NonPsdMatrix { .. })
        ));
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(rows in prop::collection::vec((prop::collection::vec(0.001f64..1.0, 3), 0usize..3), 1..20), csv in any::<bool>()) {
            let records: Vec<PredictionRecord> = rows
                .iter()
                .map(|(raw, l)| {
                    let s: f64 = raw.iter().sum();
                    PredictionRecord::from_probs(ProbabilityVector::new(raw.iter().map(|v| v / s).collect(), 1e-9).unwrap(), *l).unwrap()
                })
                .collect();
            let d = Dataset::new(records).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join(if csv { "d.csv" } else { "d.jsonl" });
            write_predictions(&d, &path, None).unwrap();
            let back = load_predictions(&path, None).unwrap();
            prop_assert_eq!(back.labels(), d.labels());
            for (a, b) in back.records().iter().zip(d.records()) {
                for (x, y) in a.probs().as_slice().iter().zip(b.probs().as_slice()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
