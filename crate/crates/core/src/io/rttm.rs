//! RTTM `SPEAKER` records, one per segment:
//!
//! ```text
//! SPEAKER <file> 1 <onset> <duration> <NA> <NA> <label> <NA> <NA>
//! ```
//!
//! Onset and duration are written with three decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::diarize::{Diarization, Segment};
use crate::error::{Error, Result};

pub fn format_rttm(d: &Diarization) -> String {
    let mut out = String::new();
    for s in d.segments() {
        writeln!(
            out,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            d.utterance_id, s.onset, s.duration, s.label
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_rttm<W: Write>(d: &Diarization, mut sink: W) -> Result<()> {
    sink.write_all(format_rttm(d).as_bytes())?;
    Ok(())
}

pub fn write_rttm_file(path: impl AsRef<Path>, d: &Diarization) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_rttm(d)).map_err(|e| Error::from(e).in_file(path))
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<(String, Segment)>> {
    let err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() != 10 {
        return Err(err(format!("expected 10 fields, found {}", fields.len())));
    }
    if fields[0] != "SPEAKER" {
        return Err(err(format!("unsupported record type `{}`", fields[0])));
    }
    let num = |i: usize, what: &str| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(format!("bad {what} `{}`", fields[i])))
    };
    let onset = num(3, "onset")?;
    let duration = num(4, "duration")?;
    if duration < 0.0 {
        return Err(err(format!("negative duration {duration}")));
    }
    if onset < 0.0 {
        return Err(err(format!("negative onset {onset}")));
    }
    if duration == 0.0 {
        return Ok(None);
    }
    let seg = Segment::new(onset, duration, fields[7]).map_err(|e| err(e.to_string()))?;
    Ok(Some((fields[1].to_string(), seg)))
}

/// Parses every record, grouped by file id.
pub fn read_rttm_all<R: BufRead>(source: R) -> Result<BTreeMap<String, Diarization>> {
    let mut by_file: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim_start().starts_with('#') {
            continue;
        }
        if let Some((file, seg)) = parse_line(&line, i + 1)? {
            by_file.entry(file).or_default().push(seg);
        }
    }
    Ok(by_file
        .into_iter()
        .map(|(id, segs)| (id.clone(), Diarization::new(id, segs)))
        .collect())
}

/// Parses a single-utterance RTTM. Zero-duration records are dropped; an
/// empty source yields an empty diarization with an empty id.
pub fn read_rttm<R: BufRead>(source: R) -> Result<Diarization> {
    let all = read_rttm_all(source)?;
    if all.len() > 1 {
        return Err(Error::Format(format!(
            "expected one file id, found {}: {:?}",
            all.len(),
            all.keys().collect::<Vec<_>>()
        )));
    }
    Ok(all.into_values().next().unwrap_or_default())
}

pub fn read_rttm_file(path: impl AsRef<Path>) -> Result<Diarization> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_rttm(std::io::BufReader::new(f)).map_err(|e| e.in_file(path))
}
