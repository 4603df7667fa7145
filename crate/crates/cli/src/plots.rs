//! Plot-data emission: plain CSVs any plotting tool can pick up.

use crate::io::{save_accuracy_trajectory_csv, save_weight_histogram_csv};
use anyhow::Result;
use std::path::Path;
use wdistill_core::pipeline::DistillReport;

/// Emit `trajectory_<scheme>.csv` for the primary scheme and its unit
/// baseline, plus `weights_hist.csv` for the primary scheme's unlabeled
/// weights.
pub fn export_report(report: &DistillReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    save_accuracy_trajectory_csv(
        &report.primary.trajectory,
        &out.join(format!("trajectory_{}.csv", report.primary.scheme.name())),
    )?;
    if report.primary.scheme != report.unit_baseline.scheme {
        save_accuracy_trajectory_csv(
            &report.unit_baseline.trajectory,
            &out.join(format!(
                "trajectory_{}.csv",
                report.unit_baseline.scheme.name()
            )),
        )?;
    }
    save_weight_histogram_csv(
        &report.primary.unlabeled_weights,
        &out.join("weights_hist.csv"),
    )?;
    Ok(())
}
