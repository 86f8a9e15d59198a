//! Reading and writing AOL-style TSV logs, and seeded synthetic logs.

mod synthetic;
mod tsv;

pub use synthetic::{generate_synthetic, harmonic_number, query_token, SyntheticParams};
pub use tsv::{
    format_timestamp, parse_timestamp, parse_tsv, parse_tsv_str, write_log, write_log_string, IngestError, HEADER,
};
