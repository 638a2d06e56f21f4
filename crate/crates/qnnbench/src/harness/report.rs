//! Tables and plot-data emission from the record store.
//!
//! `records_to_csv` / `parse_records_csv` round-trip the full record set
//! (coordinates travel as one canonical JSON column); the per-figure CSVs are
//! derived x/y/series files for external plotting.

use super::{HarnessError, ResultRecord, Scenario};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Serialize records to CSV with full fidelity.
pub fn records_to_csv(records: &[ResultRecord]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config_hash",
        "revision",
        "scenario",
        "metric",
        "value",
        "coords",
        "wall_ms",
        "seed",
    ])
    .map_err(|e| HarnessError::Store(e.to_string()))?;
    for r in records {
        w.write_record([
            r.config_hash.clone(),
            r.revision.clone(),
            r.scenario.name().to_string(),
            r.metric.clone(),
            format!("{:?}", r.value),
            serde_json::to_string(&r.coords).expect("coords serialize"),
            r.wall_ms.to_string(),
            r.seed.to_string(),
        ])
        .map_err(|e| HarnessError::Store(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Store(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf8"))
}

fn scenario_from_name(name: &str) -> Result<Scenario, HarnessError> {
    Ok(match name {
        "clean" => Scenario::Clean,
        "adversarial" => Scenario::Adversarial,
        "quantum_noise" => Scenario::QuantumNoise,
        "lipschitz_trajectory" => Scenario::LipschitzTrajectory,
        "generalization" => Scenario::Generalization,
        "loss_landscape" => Scenario::LossLandscape,
        other => return Err(HarnessError::Store(format!("unknown scenario {other}"))),
    })
}

/// Parse the output of [`records_to_csv`].
pub fn parse_records_csv(text: &str) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| HarnessError::Store(e.to_string()))?;
        out.push(ResultRecord {
            config_hash: row[0].to_string(),
            revision: row[1].to_string(),
            scenario: scenario_from_name(&row[2])?,
            metric: row[3].to_string(),
            value: row[4]
                .parse()
                .map_err(|e| HarnessError::Store(format!("bad value: {e}")))?,
            coords: serde_json::from_str(&row[5])
                .map_err(|e| HarnessError::Store(format!("bad coords: {e}")))?,
            wall_ms: row[6]
                .parse()
                .map_err(|e| HarnessError::Store(format!("bad wall_ms: {e}")))?,
            seed: row[7]
                .parse()
                .map_err(|e| HarnessError::Store(format!("bad seed: {e}")))?,
        });
    }
    Ok(out)
}

fn coord_str(r: &ResultRecord, key: &str) -> String {
    r.coords
        .get(key)
        .map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .unwrap_or_default()
}

/// Render summary tables for the metrics a scenario family produces:
/// accuracy/loss per model, Lipschitz bounds, and the per-epsilon
/// attack table (success rate and fidelity).
pub fn render_tables(records: &[ResultRecord]) -> Result<String, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let mut out = String::new();

    let accuracy: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.metric == "accuracy" || r.metric == "loss")
        .collect();
    if !accuracy.is_empty() {
        let mut rows: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for r in accuracy {
            let key = format!(
                "{} ({})",
                coord_str(r, "model").to_uppercase(),
                coord_str(r, "dataset")
            );
            let entry = rows.entry(key).or_default();
            match r.metric.as_str() {
                "accuracy" => entry.0 = Some(r.value),
                _ => entry.1 = Some(r.value),
            }
        }
        writeln!(out, "clean performance").unwrap();
        writeln!(out, "{:<24} {:>12} {:>10}", "model", "accuracy(%)", "loss").unwrap();
        for (k, (acc, loss)) in rows {
            writeln!(
                out,
                "{:<24} {:>12.1} {:>10.3}",
                k,
                acc.map(|a| a * 100.0).unwrap_or(f64::NAN),
                loss.unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        writeln!(out).unwrap();
    }

    let lipschitz: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.metric.starts_with("lipschitz"))
        .collect();
    if !lipschitz.is_empty() {
        writeln!(out, "lipschitz bounds").unwrap();
        writeln!(
            out,
            "{:<10} {:>8} {:>6} {:>14} {:>12}",
            "model", "epoch", "norm", "empirical", "analytic"
        )
        .unwrap();
        for r in &lipschitz {
            if r.metric == "lipschitz_empirical" {
                writeln!(
                    out,
                    "{:<10} {:>8} {:>6} {:>14.4} {:>12}",
                    coord_str(r, "model"),
                    coord_str(r, "epoch"),
                    coord_str(r, "norm"),
                    r.value,
                    ""
                )
                .unwrap();
            } else {
                writeln!(
                    out,
                    "{:<10} {:>8} {:>6} {:>14} {:>12.4}",
                    coord_str(r, "model"),
                    "",
                    "",
                    "",
                    r.value
                )
                .unwrap();
            }
        }
        writeln!(out).unwrap();
    }

    let adv: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.scenario == Scenario::Adversarial)
        .collect();
    if !adv.is_empty() {
        // Rows are (model, method, eps); columns ASR and fidelity.
        let mut rows: BTreeMap<(String, String, String), (Option<f64>, Option<f64>)> =
            BTreeMap::new();
        for r in &adv {
            let key = (
                coord_str(r, "model"),
                coord_str(r, "method"),
                coord_str(r, "eps"),
            );
            let entry = rows.entry(key).or_default();
            match r.metric.as_str() {
                "asr" => entry.0 = Some(r.value),
                "fidelity" => entry.1 = Some(r.value),
                _ => {}
            }
        }
        writeln!(out, "adversarial robustness").unwrap();
        writeln!(
            out,
            "{:<8} {:<8} {:>6} {:>10} {:>10}",
            "model", "method", "eps", "asr(%)", "fidelity"
        )
        .unwrap();
        for ((model, method, eps), (asr, fid)) in rows {
            writeln!(
                out,
                "{:<8} {:<8} {:>6} {:>10.1} {:>10.3}",
                model,
                method,
                eps,
                asr.map(|a| a * 100.0).unwrap_or(f64::NAN),
                fid.unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        writeln!(out).unwrap();
    }
    Ok(out)
}

/// Emit per-figure CSVs (x, y, series columns) next to the record store.
pub fn emit_figure_csvs(records: &[ResultRecord], out_dir: &Path) -> Result<Vec<String>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut written = Vec::new();
    let mut write_csv = |name: &str, header: &str, rows: Vec<String>| -> Result<(), HarnessError> {
        if rows.is_empty() {
            return Ok(());
        }
        let path = out_dir.join(name);
        let mut body = String::from(header);
        body.push('\n');
        for r in rows {
            body.push_str(&r);
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        written.push(name.to_string());
        Ok(())
    };

    write_csv(
        "fig_attack_asr.csv",
        "x,y,series",
        records
            .iter()
            .filter(|r| r.metric == "asr")
            .map(|r| {
                format!(
                    "{},{},{}-{}",
                    coord_str(r, "eps"),
                    r.value,
                    coord_str(r, "model"),
                    coord_str(r, "method")
                )
            })
            .collect(),
    )?;
    write_csv(
        "fig_fidelity.csv",
        "x,y,series",
        records
            .iter()
            .filter(|r| r.metric == "fidelity")
            .map(|r| {
                format!(
                    "{},{},{}",
                    coord_str(r, "eps"),
                    r.value,
                    coord_str(r, "model")
                )
            })
            .collect(),
    )?;
    write_csv(
        "fig_training.csv",
        "x,y,series",
        records
            .iter()
            .filter(|r| {
                matches!(
                    r.metric.as_str(),
                    "train_loss" | "test_loss" | "train_acc" | "test_acc"
                )
            })
            .map(|r| {
                format!(
                    "{},{},{}-{}",
                    coord_str(r, "epoch"),
                    r.value,
                    coord_str(r, "model"),
                    r.metric
                )
            })
            .collect(),
    )?;
    write_csv(
        "fig_generalization.csv",
        "x,y,series",
        records
            .iter()
            .filter(|r| {
                matches!(
                    r.metric.as_str(),
                    "gap" | "bound_params" | "bound_gates"
                )
            })
            .map(|r| {
                format!(
                    "{},{},{}-{}",
                    coord_str(r, "size"),
                    r.value,
                    coord_str(r, "model"),
                    r.metric
                )
            })
            .collect(),
    )?;
    write_csv(
        "fig_lipschitz_epochs.csv",
        "x,y,series",
        records
            .iter()
            .filter(|r| r.metric == "lipschitz_empirical")
            .map(|r| {
                format!(
                    "{},{},{}-{}",
                    coord_str(r, "epoch"),
                    r.value,
                    coord_str(r, "model"),
                    coord_str(r, "norm")
                )
            })
            .collect(),
    )?;
    write_csv(
        "fig_noise.csv",
        "x,y,series",
        records
            .iter()
            .filter(|r| r.metric == "noisy_accuracy")
            .map(|r| {
                format!(
                    "{},{},{}-{}-shots{}",
                    coord_str(r, "p"),
                    r.value,
                    coord_str(r, "model"),
                    coord_str(r, "channel"),
                    coord_str(r, "shots")
                )
            })
            .collect(),
    )?;
    write_csv(
        "fig_landscape.csv",
        "x,y,z",
        records
            .iter()
            .filter(|r| r.scenario == Scenario::LossLandscape && r.metric == "loss")
            .map(|r| format!("{},{},{}", coord_str(r, "u"), coord_str(r, "v"), r.value))
            .collect(),
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::coords;
    use serde_json::json;

    fn rec(metric: &str, value: f64, scenario: Scenario) -> ResultRecord {
        ResultRecord {
            config_hash: "c0ffee".into(),
            revision: "r1".into(),
            scenario,
            metric: metric.into(),
            value,
            coords: coords(&[
                ("model", json!("qcnn")),
                ("eps", json!(0.1)),
                ("method", json!("apgd")),
            ]),
            wall_ms: 12,
            seed: 3,
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let records = vec![
            rec("asr", 0.684, Scenario::Adversarial),
            rec("fidelity", 0.73, Scenario::Adversarial),
            rec("accuracy", 0.973123456789012345, Scenario::Clean),
        ];
        let text = records_to_csv(&records).unwrap();
        let parsed = parse_records_csv(&text).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn single_record_renders_single_row() {
        let records = vec![rec("accuracy", 0.9, Scenario::Clean)];
        let table = render_tables(&records).unwrap();
        assert!(table.contains("QCNN"));
        assert_eq!(
            table.lines().filter(|l| l.contains("QCNN")).count(),
            1
        );
    }

    #[test]
    fn adversarial_table_has_model_eps_rows() {
        let records = vec![
            rec("asr", 0.684, Scenario::Adversarial),
            rec("fidelity", 0.73, Scenario::Adversarial),
        ];
        let table = render_tables(&records).unwrap();
        assert!(table.contains("adversarial robustness"));
        assert!(table.contains("qcnn"));
        assert!(table.contains("68.4"));
        assert!(table.contains("0.730"));
    }

    #[test]
    fn no_records_is_an_error() {
        assert!(render_tables(&[]).is_err());
    }
}
