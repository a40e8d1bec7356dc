//! Run reports: the versioned JSON schema, CSV projections, multi-run
//! aggregation, and the SVG task-wise curve chart.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::objectives::LossBreakdown;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Summary of one task's optimization, embedded in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: usize,
    pub best_val_accuracy: f64,
    pub epochs_used: usize,
    pub final_loss: LossBreakdown,
}

/// Everything a single run reports. `accuracy` is lower-triangular:
/// row k (0-based k-1) holds test accuracy on tasks 1..=k measured after
/// task k. Timing is deliberately absent — reports are byte-reproducible
/// from (config, seed, data); wall-clock lives in the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub mode: String,
    pub seed: u64,
    pub order_id: String,
    pub task_names: Vec<String>,
    pub n_tasks: usize,
    pub accuracy: Vec<Vec<f64>>,
    pub taskwise_curve: Vec<f64>,
    pub final_average: f64,
    pub forgetting: Vec<f64>,
    pub task_results: Vec<TaskSummary>,
}

/// Serialize with a trailing newline; struct field order is fixed, so the
/// bytes are a pure function of the contents.
pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let report: RunReport = serde_json::from_reader(std::fs::File::open(path)?)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: report.schema_version,
            expected: REPORT_SCHEMA_VERSION,
        });
    }
    Ok(report)
}

/// Long-format CSV projection of the report's numeric fields. Values are
/// printed with Rust's shortest-roundtrip float formatting, so the rows are
/// a lossless projection of the JSON fields they mirror.
pub fn write_run_csv(report: &RunReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "kind,after_task,eval_task,value")?;
    for (k, row) in report.accuracy.iter().enumerate() {
        for (j, acc) in row.iter().enumerate() {
            writeln!(file, "accuracy,{},{},{}", k + 1, j + 1, acc)?;
        }
    }
    for (k, v) in report.taskwise_curve.iter().enumerate() {
        writeln!(file, "taskwise_curve,{},,{}", k + 1, v)?;
    }
    for (j, v) in report.forgetting.iter().enumerate() {
        writeln!(file, "forgetting,,{},{}", j + 1, v)?;
    }
    writeln!(file, "final_average,,,{}", report.final_average)?;
    Ok(())
}

/// Mean statistics for one (mode, order) group of seeded runs.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub mode: String,
    pub order_id: String,
    pub seeds: Vec<u64>,
    pub final_averages: Vec<f64>,
    pub mean_final_average: f64,
    pub mean_curve: Vec<f64>,
}

/// A significance comparison between two modes on matched (seed, order) runs.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub mode_a: String,
    pub mode_b: String,
    pub order_id: String,
    pub n_pairs: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<Comparison>,
}

/// Group reports by (mode, order), average over seeds, and run paired
/// t-tests of every mode against every other on matched (seed, order) pairs.
/// Mixed schema versions are rejected at read time; mixed task counts within
/// a group are an error here.
pub fn aggregate(reports: &[RunReport]) -> Result<Aggregate> {
    let mut by_group: BTreeMap<(String, String), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: r.schema_version,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        by_group
            .entry((r.mode.clone(), r.order_id.clone()))
            .or_default()
            .push(r);
    }
    let mut groups = Vec::new();
    for ((mode, order_id), mut members) in by_group.clone() {
        members.sort_by_key(|r| r.seed);
        let n_tasks = members[0].n_tasks;
        if members.iter().any(|r| r.n_tasks != n_tasks) {
            return Err(Error::IncompleteReport(format!(
                "group ({mode}, {order_id}) mixes task counts"
            )));
        }
        let final_averages: Vec<f64> = members.iter().map(|r| r.final_average).collect();
        let mean_final_average =
            final_averages.iter().sum::<f64>() / final_averages.len() as f64;
        let mean_curve: Vec<f64> = (0..n_tasks)
            .map(|k| {
                members.iter().map(|r| r.taskwise_curve[k]).sum::<f64>() / members.len() as f64
            })
            .collect();
        groups.push(GroupSummary {
            mode,
            order_id,
            seeds: members.iter().map(|r| r.seed).collect(),
            final_averages,
            mean_final_average,
            mean_curve,
        });
    }

    // Pairwise mode comparisons within each order, matched by seed.
    let mut comparisons = Vec::new();
    let orders: std::collections::BTreeSet<String> =
        by_group.keys().map(|(_, o)| o.clone()).collect();
    for order in orders {
        let modes: Vec<String> = by_group
            .keys()
            .filter(|(_, o)| *o == order)
            .map(|(m, _)| m.clone())
            .collect();
        for i in 0..modes.len() {
            for j in i + 1..modes.len() {
                let a_runs = &by_group[&(modes[i].clone(), order.clone())];
                let b_runs = &by_group[&(modes[j].clone(), order.clone())];
                let mut pairs: Vec<(f64, f64)> = Vec::new();
                for a in a_runs {
                    if let Some(b) = b_runs.iter().find(|b| b.seed == a.seed) {
                        pairs.push((a.final_average, b.final_average));
                    }
                }
                if pairs.len() >= 2 {
                    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                    let outcome = eval::paired_t_test(&xs, &ys)?;
                    let mean_difference =
                        pairs.iter().map(|p| p.0 - p.1).sum::<f64>() / pairs.len() as f64;
                    comparisons.push(Comparison {
                        mode_a: modes[i].clone(),
                        mode_b: modes[j].clone(),
                        order_id: order.clone(),
                        n_pairs: pairs.len(),
                        mean_difference,
                        t: outcome.t,
                        df: outcome.df,
                        significant: outcome.significant,
                    });
                }
            }
        }
    }
    Ok(Aggregate {
        groups,
        comparisons,
    })
}

fn fmt_t(t: f64) -> String {
    if t.is_infinite() {
        if t > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{t}")
    }
}

/// Aggregate CSV: one section of group means, one of pairwise tests.
pub fn write_summary_csv(aggregate: &Aggregate, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "row,mode,order_id,n_seeds,mean_final_average,per_seed_final_averages"
    )?;
    for g in &aggregate.groups {
        let per_seed = g
            .final_averages
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            file,
            "group,{},{},{},{},{}",
            g.mode,
            g.order_id,
            g.seeds.len(),
            g.mean_final_average,
            per_seed
        )?;
    }
    writeln!(file)?;
    writeln!(
        file,
        "row,mode_a,mode_b,order_id,n_pairs,mean_difference,t,df,significant"
    )?;
    for c in &aggregate.comparisons {
        writeln!(
            file,
            "ttest,{},{},{},{},{},{},{},{}",
            c.mode_a,
            c.mode_b,
            c.order_id,
            c.n_pairs,
            c.mean_difference,
            fmt_t(c.t),
            c.df,
            c.significant
        )?;
    }
    Ok(())
}

/// Static SVG line chart of task-wise curves, one polyline per labeled
/// series. Accuracies are expected in [0, 1].
pub fn write_curves_svg(series: &[(String, Vec<f64>)], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let width = 640.0;
    let height = 420.0;
    let margin = 50.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let n = series
        .iter()
        .map(|(_, v)| v.len())
        .max()
        .unwrap_or(0)
        .max(2);

    let colors = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
    ];
    let x_at = |k: usize| margin + plot_w * (k as f64) / ((n - 1) as f64);
    let y_at = |acc: f64| margin + plot_h * (1.0 - acc.clamp(0.0, 1.0));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{margin}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - margin,
        width - margin,
        height - margin
    ));
    svg.push_str(&format!(
        "  <line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - margin
    ));
    for tick in 0..=10 {
        let acc = tick as f64 / 10.0;
        let y = y_at(acc);
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.1}</text>\n",
            margin - 6.0,
            y + 3.0,
            acc
        ));
    }
    for k in 0..n {
        let x = x_at(k);
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            x,
            height - margin + 16.0,
            k + 1
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">tasks completed</text>\n",
        width / 2.0,
        height - 8.0
    ));
    for (i, (label, values)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{},{}", x_at(k), y_at(*v)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let ly = margin + 16.0 * i as f64;
        svg.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            width - margin - 150.0,
            ly - 9.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\">{label}</text>\n",
            width - margin - 135.0,
            ly
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_report(mode: &str, seed: u64, finals: &[f64]) -> RunReport {
        let n = finals.len();
        let mut accuracy = Vec::new();
        for k in 1..=n {
            accuracy.push(finals[..k].to_vec());
        }
        let taskwise_curve = accuracy
            .iter()
            .map(|row: &Vec<f64>| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: "h".into(),
            mode: mode.into(),
            seed,
            order_id: "conflict5".into(),
            task_names: (0..n).map(|i| format!("t{i}")).collect(),
            n_tasks: n,
            accuracy: accuracy.clone(),
            taskwise_curve,
            final_average: finals.iter().sum::<f64>() / n as f64,
            forgetting: vec![0.0; n],
            task_results: Vec::new(),
        }
    }

    #[test]
    fn report_roundtrips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = toy_report("infocomp", 3, &[0.9123456789012345, 0.7]);
        write_report(&report, &path).unwrap();
        let loaded = read_report(&path).unwrap();
        assert_eq!(loaded.final_average.to_bits(), report.final_average.to_bits());
        for (a, b) in loaded.accuracy.iter().flatten().zip(report.accuracy.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn schema_version_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let mut report = toy_report("infocomp", 3, &[0.9]);
        report.schema_version = 99;
        write_report(&report, &path).unwrap();
        assert!(matches!(
            read_report(&path),
            Err(Error::SchemaVersion { found: 99, .. })
        ));
    }

    #[test]
    fn csv_is_lossless_for_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let value = 0.123456789012345678;
        let report = toy_report("infocomp", 0, &[value]);
        write_run_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let line = text
            .lines()
            .find(|l| l.starts_with("accuracy,1,1,"))
            .unwrap();
        let parsed: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(parsed.to_bits(), value.to_bits());
    }

    #[test]
    fn aggregate_means_and_ttests() {
        let reports = vec![
            toy_report("infocomp", 1, &[0.9, 0.9]),
            toy_report("infocomp", 2, &[0.8, 0.8]),
            toy_report("shared_prompt", 1, &[0.6, 0.6]),
            toy_report("shared_prompt", 2, &[0.5, 0.5]),
        ];
        let agg = aggregate(&reports).unwrap();
        assert_eq!(agg.groups.len(), 2);
        let info = agg
            .groups
            .iter()
            .find(|g| g.mode == "infocomp")
            .unwrap();
        let expect = (0.9 + 0.8) / 2.0;
        assert!((info.mean_final_average - expect).abs() < 1e-15);
        assert_eq!(agg.comparisons.len(), 1);
        let cmp = &agg.comparisons[0];
        assert_eq!(cmp.n_pairs, 2);
        // difference is exactly 0.3 both pairs -> zero variance sentinel
        assert!(cmp.t.is_infinite());
        assert!(cmp.significant);
    }

    #[test]
    fn aggregate_rejects_mixed_schema() {
        let mut bad = toy_report("infocomp", 1, &[0.9]);
        bad.schema_version = 2;
        assert!(aggregate(&[bad]).is_err());
    }

    #[test]
    fn svg_contains_each_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.svg");
        write_curves_svg(
            &[
                ("infocomp".into(), vec![0.9, 0.85, 0.8]),
                ("shared_prompt".into(), vec![0.9, 0.6, 0.5]),
            ],
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("<svg"));
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(text.contains("infocomp"));
    }
}
