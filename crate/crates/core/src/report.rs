//! Deterministic output files: measurement CSV, limit CSV, plot-data CSV,
//! and JSON reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, TansecError};
use crate::recovery::RecoveryReport;

fn io_err(e: std::io::Error) -> TansecError {
    TansecError::Io(e)
}

fn mode_label(report: &RecoveryReport) -> &'static str {
    match report.mode {
        crate::recovery::RecoveryMode::Sections => "section",
        crate::recovery::RecoveryMode::CapVolume | crate::recovery::RecoveryMode::CapIntrinsic => {
            "cap"
        }
    }
}

/// Measurement table: one row per (flat, epsilon).
pub fn write_measurements_csv(path: &Path, report: &RecoveryReport) -> Result<()> {
    let d = report
        .samples
        .first()
        .map(|s| s.direction.len())
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str("flat_id");
    for i in 0..d {
        out.push_str(&format!(",u{i}"));
    }
    out.push_str(",mode,k,epsilon,value,stderr\n");
    let mode = mode_label(report);
    let k = report.functional.k;
    for s in &report.samples {
        for m in &s.measurements {
            out.push_str(&format!("{}", s.flat_id));
            for c in &s.direction {
                out.push_str(&format!(",{c:.17e}"));
            }
            out.push_str(&format!(
                ",{mode},{k},{:.17e},{:.17e},{:.17e}\n",
                m.epsilon, m.value, m.stderr
            ));
        }
    }
    fs::write(path, out).map_err(io_err)
}

/// Limit table: one row per flat.
pub fn write_limits_csv(path: &Path, report: &RecoveryReport) -> Result<()> {
    let mut out = String::from("flat_id,L,stderr,residual,c_hat\n");
    for s in &report.samples {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            s.flat_id, s.limit_value, s.limit_stderr, s.residual, s.c_hat
        ));
    }
    fs::write(path, out).map_err(io_err)
}

/// Plot data: normalized value g/eps^alpha against eps, per flat.
pub fn write_plot_data_csv(path: &Path, report: &RecoveryReport) -> Result<()> {
    let mut out = String::from("flat_id,epsilon,normalized_value\n");
    for s in &report.samples {
        for m in &s.measurements {
            out.push_str(&format!("{},{:.17e},{:.17e}\n", s.flat_id, m.epsilon, m.value));
        }
    }
    fs::write(path, out).map_err(io_err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| TansecError::Config(format!("serialization failed: {e}")))?;
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(text.as_bytes()).map_err(io_err)?;
    f.write_all(b"\n").map_err(io_err)
}

/// Write the full set of recovery outputs into `dir`.
pub fn write_recovery_outputs(dir: &Path, report: &RecoveryReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err)?;
    write_measurements_csv(&dir.join("measurements.csv"), report)?;
    write_limits_csv(&dir.join("limits.csv"), report)?;
    write_plot_data_csv(&dir.join("plot_data.csv"), report)?;
    write_json(&dir.join("report.json"), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{PerturbationFamily, RadialBody, Speed};
    use crate::estimator::EpsilonGrid;
    use crate::flats::{tangent_flats, SubspacePencil};
    use crate::measures::FunctionalDescriptor;
    use crate::recovery::{recover_field, RecoveryMode};
    use crate::sample::SampleParams;

    fn small_report() -> RecoveryReport {
        let family = PerturbationFamily::new(
            RadialBody::ball(2, 1.0).unwrap(),
            Speed::Constant(0.5),
        )
        .unwrap();
        let flats = tangent_flats(family.base(), 1, &SubspacePencil::full(2), 4).unwrap();
        recover_field(
            &family,
            &flats,
            RecoveryMode::Sections,
            &FunctionalDescriptor::intrinsic(1),
            &EpsilonGrid::default(),
            &SampleParams { rays: 64, ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn outputs_are_bit_identical_across_runs() {
        let report = small_report();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        write_recovery_outputs(&a, &report).unwrap();
        let report2 = small_report();
        write_recovery_outputs(&b, &report2).unwrap();
        for f in ["measurements.csv", "limits.csv", "plot_data.csv", "report.json"] {
            let x = fs::read(a.join(f)).unwrap();
            let y = fs::read(b.join(f)).unwrap();
            assert_eq!(x, y, "{f} differs between identical runs");
        }
    }

    #[test]
    fn csv_headers_match_schema() {
        let report = small_report();
        let dir = tempfile::tempdir().unwrap();
        write_recovery_outputs(dir.path(), &report).unwrap();
        let meas = fs::read_to_string(dir.path().join("measurements.csv")).unwrap();
        assert!(meas.starts_with("flat_id,u0,u1,mode,k,epsilon,value,stderr\n"));
        let lims = fs::read_to_string(dir.path().join("limits.csv")).unwrap();
        assert!(lims.starts_with("flat_id,L,stderr,residual,c_hat\n"));
        assert_eq!(lims.lines().count(), 1 + report.samples.len());
    }
}
