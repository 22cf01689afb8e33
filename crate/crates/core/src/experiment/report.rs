use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Writes `rows` as CSV with a leading `config_hash` column.
pub fn write_csv<T: Serialize>(path: &Path, config_hash: &str, rows: &[T]) -> Result<()> {
    let mut plain = csv::Writer::from_writer(Vec::new());
    for row in rows {
        plain.serialize(row)?;
    }
    let plain = plain.into_inner().map_err(|e| e.into_error())?;
    let mut out = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        out.write_record(["config_hash"])?;
    } else {
        let mut reader = csv::Reader::from_reader(plain.as_slice());
        out.write_record(std::iter::once("config_hash").chain(reader.headers()?.iter()))?;
        for record in reader.records() {
            out.write_record(std::iter::once(config_hash).chain(record?.iter()))?;
        }
    }
    fs::write(path, out.into_inner().map_err(|e| e.into_error())?)?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    result: &'a T,
}

/// Writes a pretty-printed JSON summary. Non-finite numbers become `null`.
pub fn write_json<T: Serialize>(path: &Path, command: &str, config_hash: &str, seed: u64, result: &T) -> Result<()> {
    let summary = Summary {
        schema_version: REPORT_SCHEMA_VERSION,
        command,
        config_hash,
        seed,
        result,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
