//! JSON table files. Every numeric field is an integer so files are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Number;

use crate::delta::{DeltaTable, PwlSegment, TableMetadata};
use crate::error::{LnsError, Result};
use crate::format::{LnsFormat, TableFingerprint};

#[derive(Serialize)]
struct TableFileOut<'a> {
    format: TableFingerprint,
    plus: &'a [PwlSegment],
    minus: &'a [PwlSegment],
    metadata: &'a TableMetadata,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFileIn {
    format: TableFingerprint,
    plus: Vec<SegmentIn>,
    minus: Vec<SegmentIn>,
    #[serde(default)]
    metadata: TableMetadata,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentIn {
    bin_start: Number,
    slope_sign: Number,
    slope_exponent: Number,
    offset: Number,
}

fn integer(n: &Number, what: &str) -> Result<i32> {
    n.as_i64()
        .and_then(|v| i32::try_from(v).ok())
        .ok_or_else(|| LnsError::TableInvariant(format!("{what} {n} is not on the integer grid")))
}

impl SegmentIn {
    fn into_segment(self) -> Result<PwlSegment> {
        let sign = integer(&self.slope_sign, "slope sign")?;
        Ok(PwlSegment {
            bin_start: integer(&self.bin_start, "bin start")?,
            slope_sign: i8::try_from(sign)
                .map_err(|_| LnsError::TableInvariant(format!("slope sign {sign}")))?,
            slope_exponent: integer(&self.slope_exponent, "slope exponent")?,
            offset: integer(&self.offset, "offset")?,
        })
    }
}

pub fn table_to_json(table: &DeltaTable) -> String {
    let out = TableFileOut {
        format: table.fingerprint(),
        plus: table.plus().segments(),
        minus: table.minus().segments(),
        metadata: &table.metadata,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("table serializes");
    s.push('\n');
    s
}

pub fn table_from_json(text: &str) -> Result<DeltaTable> {
    let file: TableFileIn =
        serde_json::from_str(text).map_err(|e| LnsError::MalformedTable(e.to_string()))?;
    let fp = file.format;
    let fmt = LnsFormat::new(fp.total_bits, fp.fractional_bits)
        .and_then(|f| f.with_d_max(fp.d_max))
        .map_err(|e| LnsError::TableInvariant(format!("fingerprint {fp}: {e}")))?;
    let plus = file
        .plus
        .into_iter()
        .map(SegmentIn::into_segment)
        .collect::<Result<Vec<_>>>()?;
    let minus = file
        .minus
        .into_iter()
        .map(SegmentIn::into_segment)
        .collect::<Result<Vec<_>>>()?;
    DeltaTable::new(&fmt, plus, minus, file.metadata)
}

pub fn save_table(table: &DeltaTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, table_to_json(table))?;
    Ok(())
}

/// Loads and validates a table file.
pub fn load_table(path: impl AsRef<Path>) -> Result<DeltaTable> {
    table_from_json(&fs::read_to_string(path)?)
}

/// Loads a table and checks it was built for `fmt`.
pub fn load_table_for(path: impl AsRef<Path>, fmt: &LnsFormat) -> Result<DeltaTable> {
    let t = load_table(path)?;
    t.check_format(fmt)?;
    Ok(t)
}
