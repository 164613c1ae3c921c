//! On-disk layout of a run:
//!
//! ```text
//! <dir>/observations.csv   tool,repetition,static_enabled,pair_id,detected
//! <dir>/taint.csv          one row per pair
//! <dir>/timing.csv         taint-analysis wall time per app (informational)
//! <dir>/summary.json       config, evaluated pairs, skipped pairs
//! <dir>/traces/<pair>.json every execution trace of the pair
//! <dir>/flows/<pair>.json  S1, S2 and S3 of the pair
//! <dir>/report.<ext>       rendered report in the configured format
//! ```
//!
//! Everything except `timing.csv` is a pure function of the dataset and the
//! configuration.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::{render_report, Report};
use super::{ExperimentConfig, ExperimentResult, Observation};
use crate::ir::SkippedPair;

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const TAINT_FILE: &str = "taint.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config: ExperimentConfig,
    /// Pairs that were evaluated, in order.
    pub pairs: Vec<String>,
    pub skipped: Vec<SkippedPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintRow {
    pub pair_id: String,
    /// Distinct (source, sink) pairs of the benign version.
    pub benign_flows: usize,
    pub malign_flows: usize,
    /// `source->sink` entries of S3, separated by `;`.
    pub new_pairs: String,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredResults {
    pub summary: RunSummary,
    pub observations: Vec<Observation>,
    pub taint: Vec<TaintRow>,
}

impl StoredResults {
    pub fn from_experiment(result: &ExperimentResult, run_id: &str) -> StoredResults {
        let taint = result
            .taint_verdicts()
            .map(|v| TaintRow {
                pair_id: v.pair_id.clone(),
                benign_flows: v.s1.pairs().len(),
                malign_flows: v.s2.pairs().len(),
                new_pairs: v.s3.iter().map(|(s, k)| format!("{s}->{k}")).collect::<Vec<_>>().join(";"),
                detected: v.detected,
            })
            .collect();
        StoredResults {
            summary: RunSummary {
                run_id: run_id.to_owned(),
                config: result.config.clone(),
                pairs: result.outcomes.iter().map(|o| o.pair_id.clone()).collect(),
                skipped: result.skipped.clone(),
            },
            observations: result.observations().cloned().collect(),
            taint,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ResultsError + '_ {
    move |source| ResultsError::Io { path: path.to_path_buf(), source }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ResultsError> {
    let csv_err = |source| ResultsError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ResultsError> {
    let csv_err = |source| ResultsError::Csv { path: path.to_path_buf(), source };
    csv::Reader::from_path(path).map_err(csv_err)?.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ResultsError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| ResultsError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Write every artifact of `result` into `dir`, creating it if needed.
/// Returns the path of the rendered report.
pub fn write_results(dir: &Path, result: &ExperimentResult, run_id: &str) -> Result<PathBuf, ResultsError> {
    for sub in [dir.to_path_buf(), dir.join("traces"), dir.join("flows")] {
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
    }
    let stored = StoredResults::from_experiment(result, run_id);
    write_csv(&dir.join(OBSERVATIONS_FILE), &stored.observations)?;
    write_csv(&dir.join(TAINT_FILE), &stored.taint)?;
    let timings: Vec<_> = result.outcomes.iter().flat_map(|o| o.timings.iter()).collect();
    write_csv(&dir.join(TIMING_FILE), &timings)?;
    write_json(&dir.join(SUMMARY_FILE), &stored.summary)?;
    for o in &result.outcomes {
        write_json(&dir.join("traces").join(format!("{}.json", o.pair_id)), &o.traces)?;
        write_json(&dir.join("flows").join(format!("{}.json", o.pair_id)), &o.taint)?;
    }
    let format = result.config.output_format;
    let report_path = dir.join(format!("report.{}", format.extension()));
    let text = render_report(&Report::from_stored(&stored), format);
    fs::write(&report_path, text).map_err(io_err(&report_path))?;
    Ok(report_path)
}

pub fn read_results(dir: &Path) -> Result<StoredResults, ResultsError> {
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let summary =
        serde_json::from_str(&text).map_err(|source| ResultsError::Json { path: summary_path.clone(), source })?;
    Ok(StoredResults {
        summary,
        observations: read_csv(&dir.join(OBSERVATIONS_FILE))?,
        taint: read_csv(&dir.join(TAINT_FILE))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::SensitiveCatalog;
    use crate::explore::StrategyKind;
    use crate::ir::{parse_app, AppPair};

    #[test]
    fn results_round_trip() {
        let app = |id: &str, body: &str| parse_app(&format!("app {id}\nentry m\nmethod m()\n{body}end\n"), None).unwrap();
        let pairs = vec![AppPair {
            pair_id: "p0".into(),
            benign: app("b", ""),
            malign: app("m", "  x = api getDeviceId()\n  api sendSMS(x)\n"),
        }];
        let catalog = SensitiveCatalog::parse("getDeviceId source\nsendSMS sink\n").unwrap();
        let config = ExperimentConfig { tools: vec![StrategyKind::Random], ..Default::default() };
        let result = super::super::run_experiment(&pairs, &catalog, &config).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let report = write_results(dir.path(), &result, "r1").unwrap();
        assert!(report.ends_with("report.md"));
        assert!(dir.path().join("traces/p0.json").is_file());
        assert!(dir.path().join("flows/p0.json").is_file());

        let stored = read_results(dir.path()).unwrap();
        assert_eq!(stored, StoredResults::from_experiment(&result, "r1"));
        assert_eq!(stored.taint[0].new_pairs, "getDeviceId->sendSMS");
        let header = fs::read_to_string(dir.path().join(OBSERVATIONS_FILE)).unwrap();
        assert!(header.starts_with("tool,repetition,static_enabled,pair_id,detected\n"));
    }
}
