//! The sample CSV format: `place_id,timestamp,metric_id,value`, UTF-8, LF.

use std::io::{Read, Write};

use thiserror::Error;

use crate::model::Sample;
use crate::time::Timestamp;

pub const HEADER: [&str; 4] = ["place_id", "timestamp", "metric_id", "value"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(line: u64, message: impl Into<String>) -> CsvError {
    CsvError::Malformed { line, message: message.into() }
}

/// Reads every row of a sample CSV. The header must match exactly.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<Sample>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut first = true;
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            match e.into_kind() {
                csv::ErrorKind::Io(io) => CsvError::Io(io),
                csv::ErrorKind::UnequalLengths { len, .. } => malformed(line, format!("expected 4 fields, found {len}")),
                other => malformed(line, format!("{other:?}")),
            }
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if first {
            first = false;
            if record.iter().collect::<Vec<_>>() != HEADER {
                return Err(malformed(line, format!("expected header {}", HEADER.join(","))));
            }
            continue;
        }
        if record.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", record.len())));
        }
        let t: Timestamp = record[1].parse().map_err(|e: crate::time::TimestampParseError| malformed(line, e.to_string()))?;
        let value: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| malformed(line, format!("invalid value {:?}", &record[3])))?;
        if !value.is_finite() {
            return Err(malformed(line, format!("value {:?} is not finite", &record[3])));
        }
        if record[0].is_empty() || record[2].is_empty() {
            return Err(malformed(line, "empty place_id or metric_id"));
        }
        out.push(Sample { place_id: record[0].to_string(), t, metric_id: record[2].to_string(), value });
    }
    if first {
        return Err(malformed(1, "missing header"));
    }
    Ok(out)
}

/// Writes samples in the given order, header first.
pub fn write_samples<'a, W: Write>(writer: W, samples: impl IntoIterator<Item = &'a Sample>) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    w.write_record(HEADER).map_err(to_io)?;
    for s in samples {
        w.write_record([s.place_id.as_str(), &s.t.to_iso(), s.metric_id.as_str(), &s.value.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}
