use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::anatomy::FilterDecision;
use crate::error::{Error, Result};

/// Per-case evaluation record.
///
/// An HD95 of `f64::INFINITY` (exactly one mask empty) is written as `null`
/// in JSON and `inf` in CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    pub dice: f64,
    #[serde(serialize_with = "ser_hd95", deserialize_with = "de_hd95")]
    pub hd95_mm: f64,
    pub boundary_dice: f64,
    pub components_before: usize,
    pub components_after: usize,
    pub decisions: Vec<FilterDecision>,
}

fn ser_hd95<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_hd95<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Report(format!("{other:?}")),
    }
}

/// Writes reports as a JSON array or as CSV with one row per case, where
/// decisions are flattened to their count.
pub fn write_report(reports: &[CaseReport], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, reports).map_err(|e| Error::Report(e.to_string()))?;
            w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
            w.write_record([
                "case_id",
                "dice",
                "hd95_mm",
                "boundary_dice",
                "components_before",
                "components_after",
                "decisions",
            ])
            .map_err(|e| csv_err(path, e))?;
            for r in reports {
                let hd = if r.hd95_mm.is_finite() { r.hd95_mm.to_string() } else { "inf".to_string() };
                w.write_record([
                    r.case_id.clone(),
                    r.dice.to_string(),
                    hd,
                    r.boundary_dice.to_string(),
                    r.components_before.to_string(),
                    r.components_after.to_string(),
                    r.decisions.len().to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<Vec<CaseReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Report(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::{DecisionReason, Verdict};

    fn sample(id: &str, hd: f64) -> CaseReport {
        CaseReport {
            case_id: id.to_string(),
            dice: 0.812_345_678_901_234_5,
            hd95_mm: hd,
            boundary_dice: 0.5,
            components_before: 3,
            components_after: 1,
            decisions: vec![
                FilterDecision { label: 1, verdict: Verdict::Kept, reason: DecisionReason::PassedOverlap },
                FilterDecision { label: 2, verdict: Verdict::Discarded, reason: DecisionReason::BelowMinVoxels },
            ],
        }
    }

    #[test]
    fn empty_json_is_brackets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_report(&[], &p, ReportFormat::Json).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().trim(), "[]");
    }

    #[test]
    fn json_round_trip_including_infinite_hd95() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let reports = vec![sample("a", 3.25), sample("b", f64::INFINITY)];
        write_report(&reports, &p, ReportFormat::Json).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"hd95_mm\": null"));
        assert!(text.contains("\"reason\": \"BelowMinVoxels\""));
        assert_eq!(read_report_json(&p).unwrap(), reports);
    }

    #[test]
    fn csv_one_row_per_case() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_report(&[sample("case,1", f64::INFINITY)], &p, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "case_id,dice,hd95_mm,boundary_dice,components_before,components_after,decisions");
        assert!(lines[1].starts_with("\"case,1\","));
        assert!(lines[1].ends_with(",inf,0.5,3,1,2"));
    }

    #[test]
    fn unwritable_report() {
        let err = write_report(&[], "/no/such/dir/r.json", ReportFormat::Json).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        let err = write_report(&[], "/no/such/dir/r.csv", ReportFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
