use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime};
use thiserror::Error;

use crate::log_model::{build_log, LogError, QueryRecord, RecordError, SearchLog};

/// Header row written by [`write_log`] and skipped by [`parse_tsv`].
pub const HEADER: &str = "AnonID\tQuery\tQueryTime\tItemRank\tClickURL";

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: expected 5 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: unparseable timestamp {value:?}")]
    Timestamp { line: usize, value: String },
    #[error("line {line}: empty query field")]
    EmptyQuery { line: usize },
    #[error("line {line}: invalid item rank {value:?}")]
    Rank { line: usize, value: String },
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: RecordError },
    #[error("timestamp {0} cannot be written as a calendar date")]
    UnrepresentableTimestamp(i64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_timestamp(value: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(value, TIME_FORMAT).ok().map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> Option<String> {
    DateTime::from_timestamp(ts, 0).map(|t| t.format(TIME_FORMAT).to_string())
}

/// Parses a 5-column AnonID/Query/QueryTime/ItemRank/ClickURL stream.
///
/// Rows are streamed line by line; an optional header is skipped and blank
/// lines are ignored. Empty rank and url fields give a no-click record.
pub fn parse_tsv<R: BufRead>(reader: R) -> Result<SearchLog, IngestError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 && fields[0].eq_ignore_ascii_case("AnonID") {
            continue;
        }
        if fields.len() != 5 {
            return Err(IngestError::ColumnCount { line: line_no, found: fields.len() });
        }
        if fields[1].trim().is_empty() {
            return Err(IngestError::EmptyQuery { line: line_no });
        }
        let timestamp = parse_timestamp(fields[2])
            .ok_or_else(|| IngestError::Timestamp { line: line_no, value: fields[2].to_string() })?;
        let rank = match fields[3] {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| IngestError::Rank { line: line_no, value: s.to_string() })?),
        };
        let url = (!fields[4].is_empty()).then(|| fields[4].to_string());
        let record = QueryRecord::new(fields[0], fields[1], timestamp, url, rank)
            .map_err(|reason| IngestError::Record { line: line_no, reason })?;
        records.push(record);
    }
    // records were validated individually above
    build_log(records).map_err(|e| match e {
        LogError::InvalidRecord { index, reason } => IngestError::Record { line: index + 1, reason },
        LogError::UnknownUser(_) => unreachable!("build_log never looks up users"),
    })
}

pub fn parse_tsv_str(text: &str) -> Result<SearchLog, IngestError> {
    parse_tsv(text.as_bytes())
}

/// Writes the header and one row per record, users in id order.
pub fn write_log<W: Write>(log: &SearchLog, mut sink: W) -> Result<(), IngestError> {
    writeln!(sink, "{HEADER}")?;
    for r in log.records() {
        let time = format_timestamp(r.timestamp).ok_or(IngestError::UnrepresentableTimestamp(r.timestamp))?;
        let rank = r.rank.map(|k| k.to_string()).unwrap_or_default();
        writeln!(sink, "{}\t{}\t{}\t{}\t{}", r.user_id, r.query, time, rank, r.clicked_url.as_deref().unwrap_or(""))?;
    }
    sink.flush()?;
    Ok(())
}

pub fn write_log_string(log: &SearchLog) -> Result<String, IngestError> {
    let mut buf = Vec::new();
    write_log(log, &mut buf)?;
    Ok(String::from_utf8(buf).expect("log fields are UTF-8"))
}
