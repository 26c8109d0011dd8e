//! Run records: a per-run CSV curve plus a `key=value` summary.
//!
//! `report.csv` columns: `iteration,psnr,loss,lr,wall_ms`. One row per
//! evaluation, then a row whose `iteration` is `final` carrying the final
//! held-out PSNR, the last loss and learning rate, and the total wall time.
//! `run.txt` holds the model and training configuration, the seed and the
//! divergence flag.

use std::path::Path;

use radlog_core::train::RunReport;

use crate::config::{format_kv, model_to_kv, train_to_kv};
use crate::fsutil::write_atomic;
use crate::Result;

pub const REPORT_COLUMNS: [&str; 5] = ["iteration", "psnr", "loss", "lr", "wall_ms"];

pub fn report_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS)?;
    for e in &report.evals {
        w.write_record([
            e.iteration.to_string(),
            e.psnr.to_string(),
            e.loss.to_string(),
            e.lr.to_string(),
            e.wall_ms.to_string(),
        ])?;
    }
    let last = report.evals.last();
    w.write_record([
        "final".to_string(),
        report.final_psnr.to_string(),
        last.map_or(String::new(), |e| e.loss.to_string()),
        last.map_or(String::new(), |e| e.lr.to_string()),
        report.wall_ms.to_string(),
    ])?;
    let bytes = w.into_inner().map_err(|e| crate::LabError::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn run_summary(report: &RunReport) -> String {
    let mut kv = model_to_kv(&report.model);
    kv.extend(train_to_kv(&report.train));
    kv.push(("diverged".into(), report.diverged.to_string()));
    kv.push((
        "diverged_at".into(),
        report.diverged_at.map_or("none".into(), |s| s.to_string()),
    ));
    kv.push(("final_psnr".into(), report.final_psnr.to_string()));
    format_kv(&kv)
}

/// Writes `report.csv` and `run.txt` into `dir`.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    crate::fsutil::create_dir(dir)?;
    write_atomic(&dir.join("report.csv"), report_csv(report)?.as_bytes())?;
    write_atomic(&dir.join("run.txt"), run_summary(report).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use radlog_core::field::ModelConfig;
    use radlog_core::train::{EvalRecord, TrainConfig};

    fn sample() -> RunReport {
        RunReport {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            seed: 3,
            evals: vec![
                EvalRecord {
                    iteration: 10,
                    psnr: 12.5,
                    loss: 0.25,
                    lr: 0.01,
                    wall_ms: 0.0,
                },
                EvalRecord {
                    iteration: 20,
                    psnr: 14.0,
                    loss: 0.125,
                    lr: 0.005,
                    wall_ms: 0.0,
                },
            ],
            diverged: false,
            diverged_at: None,
            final_psnr: 14.0,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn csv_schema() {
        let text = report_csv(&sample()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,psnr,loss,lr,wall_ms");
        assert_eq!(lines[1], "10,12.5,0.25,0.01,0");
        assert_eq!(lines[3], "final,14,0.125,0.005,0");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn summary_records_divergence() {
        let mut r = sample();
        r.diverged = true;
        r.diverged_at = Some(17);
        let s = run_summary(&r);
        assert!(s.contains("diverged=true\n"));
        assert!(s.contains("diverged_at=17\n"));
        assert!(s.contains("representation_space=truelog\n"));
    }
}
