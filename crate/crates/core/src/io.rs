//! Partition files (JSON) and point sets (CSV).
//!
//! Partition file layout:
//!
//! ```json
//! { "domain": {"lower": [0, 0], "upper": [1, 1]},
//!   "strata": [ {"type": "box", "lower": [0, 0], "sides": [0.5, 1]},
//!               {"type": "prism", "anchor": [0.5, 0], "b": 0.5, "orientation": "lower"} ] }
//! ```
//!
//! Point CSV layout: header `x1,…,xd,stratum`, one row per point, with the
//! stratum column holding an index or `iid`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Partition;
use crate::sampling::{PointSet, Provenance};

/// Probe points used when loading partition files.
pub const LOAD_PROBES: usize = 20_000;
pub const LOAD_SEED: u64 = 0x5eed;

pub fn parse_partition(json: &str) -> Result<Partition> {
    let partition: Partition = serde_json::from_str(json)?;
    partition.check_shapes()?;
    partition.ensure_valid(LOAD_PROBES, LOAD_SEED)?;
    Ok(partition)
}

/// Reads and validates a partition file.
pub fn load_partition(path: &Path) -> Result<Partition> {
    parse_partition(&std::fs::read_to_string(path)?)
}

pub fn partition_to_json(partition: &Partition) -> Result<String> {
    Ok(serde_json::to_string_pretty(partition)?)
}

pub fn write_points_csv<W: Write>(points: &PointSet, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=points.dim()).map(|k| format!("x{k}")).collect();
    header.push("stratum".into());
    writer.write_record(&header).map_err(csv_error)?;
    for (p, provenance) in points.points().zip(points.provenance()) {
        let mut record: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        record.push(match provenance {
            Provenance::Stratum(i) => i.to_string(),
            Provenance::Iid => "iid".to_string(),
        });
        writer.write_record(&record).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Parses the point CSV format. A trailing `stratum` column is optional.
pub fn read_points_csv<R: Read>(input: R) -> Result<PointSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let has_stratum = headers.iter().next_back() == Some("stratum");
    let dim = headers.len() - usize::from(has_stratum);
    if dim == 0 {
        return Err(Error::Parse("point file has no coordinate columns".into()));
    }

    let mut rows = Vec::new();
    let mut provenance = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .take(dim)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {line}: `{f}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        provenance.push(match record.get(dim) {
            Some("iid") | None => Provenance::Iid,
            Some(tag) => Provenance::Stratum(
                tag.parse()
                    .map_err(|e| Error::Parse(format!("line {line}: stratum `{tag}`: {e}")))?,
            ),
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse("point file has no points".into()));
    }
    PointSet::from_rows(rows, provenance, 0)
}
