//! Reading-record CSV ingestion.
//!
//! Required columns: word, condition, rt_ms, ig_nats, log_freq, length,
//! surprisal_nats. Optional: contextual_entropy_nats, subject. Lines starting
//! with `#` are comments. Errors name the offending column and file line.

use std::path::Path;

use readinfo::glyphs::Condition;
use readinfo::reading_sim::ReadingRecord;

use crate::error::CliError;

pub const REQUIRED: [&str; 7] = ["word", "condition", "rt_ms", "ig_nats", "log_freq", "length", "surprisal_nats"];

pub fn read_records(path: &Path) -> Result<Vec<ReadingRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_records(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_records(text: &str) -> Result<Vec<ReadingRecord>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 7];
    for (i, name) in REQUIRED.iter().enumerate() {
        idx[i] = col(name).ok_or_else(|| {
            // the reader sits just past the header line
            let line = rdr.position().line().saturating_sub(1).max(1);
            CliError::Data(format!("line {line} (header): missing required column {name}"))
        })?;
    }
    let ctx = col("contextual_entropy_nats");
    let subject = col("subject");

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str, CliError> {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| CliError::Data(format!("line {line}, column {name}: missing value")))
        };
        let num = |i: usize, name: &str| -> Result<f64, CliError> {
            let s = field(i, name)?;
            let v: f64 = s
                .parse()
                .map_err(|_| CliError::Data(format!("line {line}, column {name}: cannot parse {s:?} as a number")))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("line {line}, column {name}: value {s:?} is not finite")));
            }
            Ok(v)
        };
        let word = field(idx[0], "word")?;
        if word.is_empty() {
            return Err(CliError::Data(format!("line {line}, column word: empty")));
        }
        let cond_s = field(idx[1], "condition")?;
        let condition: Condition = cond_s
            .parse()
            .map_err(|_| CliError::Data(format!("line {line}, column condition: unknown condition {cond_s:?}")))?;
        let len_s = field(idx[5], "length")?;
        let length: usize = len_s
            .parse()
            .map_err(|_| CliError::Data(format!("line {line}, column length: cannot parse {len_s:?} as a count")))?;
        let contextual = match ctx {
            Some(i) if !field(i, "contextual_entropy_nats")?.is_empty() => Some(num(i, "contextual_entropy_nats")?),
            _ => None,
        };
        let subj = match subject {
            Some(i) => Some(field(i, "subject")?.to_string()).filter(|s| !s.is_empty()),
            None => None,
        };
        out.push(ReadingRecord {
            word: word.to_string(),
            condition,
            rt_ms: num(idx[2], "rt_ms")?,
            ig_nats: num(idx[3], "ig_nats")?,
            log_freq: num(idx[4], "log_freq")?,
            length,
            surprisal_nats: num(idx[6], "surprisal_nats")?,
            contextual_entropy_nats: contextual,
            subject: subj,
        });
    }
    if out.is_empty() {
        return Err(CliError::Data("no records".into()));
    }
    Ok(out)
}
