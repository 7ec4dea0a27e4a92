//! Reading and writing streams, signatures and measures.
//!
//! CSV streams have one row per point and one column per channel. A header
//! row is optional; when present, a first column named `t` holds timestamps.
//! Without a header every column is a channel.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distribution::EmpiricalMeasure;
use crate::error::{Result, SigError};
use crate::stream::Stream;
use crate::tensor::{enumerate_words, TruncatedTensor};

fn parse_cell(cell: &str, row: usize) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| SigError::parse(format!("row {row}: {cell:?} is not a number")))
}

/// Parses CSV text into a stream.
pub fn stream_from_csv_str(text: &str) -> Result<Stream> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records().peekable();
    let mut time_column = false;
    if let Some(Ok(first)) = records.peek() {
        let is_header = first.iter().any(|c| c.parse::<f64>().is_err());
        if is_header {
            time_column = first.get(0).is_some_and(|c| c.eq_ignore_ascii_case("t"));
            records.next();
        }
    }
    let mut points = Vec::new();
    let mut times = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| SigError::parse(format!("malformed CSV: {e}")))?;
        let mut cells = rec.iter();
        if time_column {
            let t = cells.next().ok_or_else(|| SigError::parse(format!("row {row}: missing time")))?;
            times.push(parse_cell(t, row)?);
        }
        points.push(cells.map(|c| parse_cell(c, row)).collect::<Result<Vec<f64>>>()?);
    }
    if points.is_empty() {
        return Err(SigError::parse("CSV holds no data rows"));
    }
    let s = Stream::new(points).map_err(|e| match e {
        SigError::Dimension(m) => SigError::parse(format!("ragged CSV rows: {m}")),
        other => other,
    })?;
    if time_column {
        s.with_times(times)
    } else {
        Ok(s)
    }
}

pub fn read_stream_csv(path: &Path) -> Result<Stream> {
    let text = std::fs::read_to_string(path).map_err(|e| SigError::io(path, e))?;
    stream_from_csv_str(&text)
}

/// Renders a stream as CSV with a header row. Timestamps, when explicit,
/// go in a leading `t` column.
pub fn stream_to_csv_string(s: &Stream) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = Vec::new();
    if s.has_times() {
        header.push("t".to_string());
    }
    header.extend((1..=s.dim()).map(|i| format!("x{i}")));
    writer.write_record(&header).expect("in-memory write");
    for (i, p) in s.points().enumerate() {
        let mut row = Vec::with_capacity(p.len() + 1);
        if s.has_times() {
            row.push(s.time(i).to_string());
        }
        row.extend(p.iter().map(|x| x.to_string()));
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn write_stream_csv(path: &Path, s: &Stream) -> Result<()> {
    std::fs::write(path, stream_to_csv_string(s)).map_err(|e| SigError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct StreamDoc {
    d: usize,
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    times: Option<Vec<f64>>,
}

pub fn stream_to_json(s: &Stream) -> serde_json::Value {
    serde_json::to_value(StreamDoc {
        d: s.dim(),
        points: s.points().map(<[f64]>::to_vec).collect(),
        times: s.explicit_times().map(<[f64]>::to_vec),
    })
    .expect("stream serializes")
}

pub fn stream_from_json_str(text: &str) -> Result<Stream> {
    let doc: StreamDoc = serde_json::from_str(text).map_err(|e| SigError::parse(format!("stream JSON: {e}")))?;
    if doc.points.iter().any(|p| p.len() != doc.d) {
        return Err(SigError::dim(format!("points do not all have {} channels", doc.d)));
    }
    let s = Stream::new(doc.points)?;
    match doc.times {
        Some(t) => s.with_times(t),
        None => Ok(s),
    }
}

/// Reads a stream from `.json` or CSV (any other extension).
pub fn read_stream(path: &Path) -> Result<Stream> {
    let text = std::fs::read_to_string(path).map_err(|e| SigError::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        stream_from_json_str(&text)
    } else {
        stream_from_csv_str(&text)
    }
}

/// JSON document for a truncated tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub d: usize,
    pub depth: usize,
    pub keys: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl TensorDoc {
    pub fn new(t: &TruncatedTensor) -> Result<Self> {
        let keys = enumerate_words(t.dim(), t.depth())?.iter().map(|w| w.to_string()).collect();
        Ok(TensorDoc {
            d: t.dim(),
            depth: t.depth(),
            keys,
            coefficients: t.coefficients().to_vec(),
        })
    }

    pub fn into_tensor(self) -> Result<TruncatedTensor> {
        TruncatedTensor::from_coefficients(self.d, self.depth, self.coefficients)
    }
}

/// Loads every `*.csv` and `*.json` stream in `dir`, sorted by file name.
pub fn read_stream_dir(dir: &Path) -> Result<Vec<Stream>> {
    let entries = std::fs::read_dir(dir).map_err(|e| SigError::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| SigError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("csv") | Some("json")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(SigError::domain(format!("{} contains no stream files", dir.display())));
    }
    files.iter().map(|p| read_stream(p)).collect()
}

/// Reads a directory of streams as an empirical measure. An optional
/// `weights.txt` holds one positive weight per stream, in file-name order,
/// whitespace separated.
pub fn read_measure_dir(dir: &Path) -> Result<EmpiricalMeasure> {
    let streams = read_stream_dir(dir)?;
    let weights_path = dir.join("weights.txt");
    if weights_path.exists() {
        let text = std::fs::read_to_string(&weights_path).map_err(|e| SigError::io(&weights_path, e))?;
        let weights = text
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| SigError::parse(format!("bad weight {w:?}"))))
            .collect::<Result<Vec<_>>>()?;
        EmpiricalMeasure::with_weights(streams, weights)
    } else {
        EmpiricalMeasure::new(streams)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_without_header() {
        let s = stream_from_csv_str("2,-2\n5,-1\n").unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.point(1), &[5.0, -1.0]);
        assert!(!s.has_times());
    }

    #[test]
    fn csv_with_time_column() {
        let s = stream_from_csv_str("t,a,b\n0.5,1,2\n1.5,3,4\n").unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.explicit_times().unwrap(), &[0.5, 1.5]);
    }

    #[test]
    fn csv_header_without_time() {
        let s = stream_from_csv_str("a,b\n1,2\n").unwrap();
        assert_eq!(s.dim(), 2);
        assert!(!s.has_times());
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(stream_from_csv_str("1,x\n"), Err(SigError::Parse(_))));
        assert!(matches!(stream_from_csv_str(""), Err(SigError::Parse(_))));
        assert!(matches!(stream_from_csv_str("1,2\n3\n"), Err(SigError::Parse(_))));
        assert!(stream_from_csv_str("t,a\n1,0\n0,1\n").is_err());
    }

    #[test]
    fn csv_and_json_roundtrip_exactly() {
        let s = Stream::new(vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 7.0e12]])
            .unwrap()
            .with_times(vec![0.0, std::f64::consts::PI])
            .unwrap();
        let back = stream_from_csv_str(&stream_to_csv_string(&s)).unwrap();
        assert_eq!(back, s);
        let json = stream_to_json(&s).to_string();
        assert_eq!(stream_from_json_str(&json).unwrap(), s);
    }

    #[test]
    fn tensor_doc_roundtrip() {
        let t = TruncatedTensor::from_vector(2, 0.0, &[0.5, -1.0]).exp().unwrap();
        let doc = TensorDoc::new(&t).unwrap();
        assert_eq!(doc.keys[0], "()");
        assert_eq!(doc.keys.len(), 7);
        assert_eq!(doc.clone().into_tensor().unwrap(), t);
    }

    #[test]
    fn measure_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.csv"), "0\n2\n").unwrap();
        std::fs::write(dir.path().join("a.csv"), "0\n1\n").unwrap();
        let mu = read_measure_dir(dir.path()).unwrap();
        assert_eq!(mu.streams()[0].point(1), &[1.0]);
        std::fs::write(dir.path().join("weights.txt"), "1 3").unwrap();
        let mu = read_measure_dir(dir.path()).unwrap();
        assert!((mu.weights()[1] - 0.75).abs() < 1e-15);
        assert!(read_measure_dir(&dir.path().join("missing")).is_err());
    }
}
