//! Metrics over run reports: final average accuracy, task-wise curves,
//! forgetting, and the paired t-test.

use crate::error::{Error, Result};
use crate::report::RunReport;

/// Mean test accuracy over all tasks at the final boundary.
pub fn average_accuracy(report: &RunReport) -> Result<f64> {
    let n = report.n_tasks;
    let last = report
        .accuracy
        .last()
        .ok_or_else(|| Error::IncompleteReport("no boundary evaluations".into()))?;
    if report.accuracy.len() != n || last.len() != n {
        return Err(Error::IncompleteReport(format!(
            "expected a full {n}-row lower-triangular matrix"
        )));
    }
    Ok(last.iter().sum::<f64>() / n as f64)
}

/// After each boundary k, the mean accuracy over tasks 1..=k.
pub fn taskwise_curve(report: &RunReport) -> Result<Vec<(usize, f64)>> {
    if report.accuracy.len() != report.n_tasks {
        return Err(Error::IncompleteReport(
            "boundary evaluations missing".into(),
        ));
    }
    Ok(report
        .accuracy
        .iter()
        .enumerate()
        .map(|(i, row)| (i + 1, row.iter().sum::<f64>() / row.len() as f64))
        .collect())
}

/// Per-task forgetting: peak accuracy over boundaries minus final accuracy.
/// Non-negative by construction of the max.
pub fn forgetting(report: &RunReport) -> Result<Vec<f64>> {
    let n = report.n_tasks;
    if report.accuracy.len() != n {
        return Err(Error::IncompleteReport(
            "boundary evaluations missing".into(),
        ));
    }
    let last = &report.accuracy[n - 1];
    Ok((0..n)
        .map(|j| {
            let peak = report.accuracy[j..]
                .iter()
                .map(|row| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            peak - last[j]
        })
        .collect())
}

/// Paired t-test outcome at the 0.05 two-sided level.
#[derive(Debug, Clone, Copy)]
pub struct TTestOutcome {
    /// May be infinite: the zero-variance, nonzero-mean sentinel.
    pub t: f64,
    pub df: usize,
    pub significant: bool,
}

/// Two-sided critical values of Student's t at alpha = 0.05, df 1..=30.
const T_CRIT_05: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

fn critical_value(df: usize) -> f64 {
    if df == 0 {
        f64::INFINITY
    } else if df <= 30 {
        T_CRIT_05[df - 1]
    } else {
        // normal approximation past the embedded table
        1.959_963_985
    }
}

/// Paired t-test on matched samples: t = mean(d) / (sd(d) / sqrt(n)) with
/// sample standard deviation on d = a - b. Zero variance degenerates to
/// t = 0 (not significant) for zero mean difference, and to an infinite-t
/// sentinel (significant) otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestOutcome> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Config(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let df = n - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTestOutcome {
                t: 0.0,
                df,
                significant: false,
            }
        } else {
            TTestOutcome {
                t: if mean > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                df,
                significant: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TTestOutcome {
        t,
        df,
        significant: t.abs() > critical_value(df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{RunReport, REPORT_SCHEMA_VERSION};

    fn report_with(accuracy: Vec<Vec<f64>>) -> RunReport {
        let n = accuracy.len();
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: "x".into(),
            mode: "infocomp".into(),
            seed: 0,
            order_id: "o".into(),
            task_names: (0..n).map(|i| format!("t{i}")).collect(),
            n_tasks: n,
            accuracy,
            taskwise_curve: Vec::new(),
            final_average: 0.0,
            forgetting: Vec::new(),
            task_results: Vec::new(),
        }
    }

    #[test]
    fn average_accuracy_arithmetic() {
        let r = report_with(vec![vec![1.0], vec![0.8, 0.6]]);
        assert!((average_accuracy(&r).unwrap() - 0.7).abs() < 1e-15);

        let perfect = report_with(vec![vec![1.0], vec![1.0, 1.0]]);
        assert_eq!(average_accuracy(&perfect).unwrap(), 1.0);
    }

    #[test]
    fn average_accuracy_rejects_missing_rows() {
        let mut r = report_with(vec![vec![1.0]]);
        r.n_tasks = 2;
        assert!(average_accuracy(&r).is_err());
    }

    #[test]
    fn curve_singleton_and_flat() {
        let r = report_with(vec![vec![0.9]]);
        assert_eq!(taskwise_curve(&r).unwrap(), vec![(1, 0.9)]);

        let flat = report_with(vec![vec![0.5], vec![0.5, 0.5], vec![0.5, 0.5, 0.5]]);
        for (_, v) in taskwise_curve(&flat).unwrap() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn curve_final_point_equals_average_accuracy() {
        let r = report_with(vec![vec![0.9], vec![0.7, 0.8], vec![0.6, 0.7, 0.95]]);
        let curve = taskwise_curve(&r).unwrap();
        let avg = average_accuracy(&r).unwrap();
        assert!((curve.last().unwrap().1 - avg).abs() < 1e-15);
    }

    #[test]
    fn forgetting_constant_column_is_zero() {
        let r = report_with(vec![vec![0.9], vec![0.9, 0.8], vec![0.9, 0.8, 0.7]]);
        let f = forgetting(&r).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn forgetting_peak_minus_final() {
        let r = report_with(vec![vec![0.9], vec![0.7, 0.9], vec![0.6, 0.9, 0.9]]);
        let f = forgetting(&r).unwrap();
        assert!((f[0] - 0.3).abs() < 1e-15);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn t_test_identical_samples() {
        let out = paired_t_test(&[0.5, 0.6, 0.7], &[0.5, 0.6, 0.7]).unwrap();
        assert_eq!(out.t, 0.0);
        assert!(!out.significant);
    }

    #[test]
    fn t_test_zero_variance_nonzero_mean_sentinel() {
        let out = paired_t_test(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(out.t.is_infinite() && out.t > 0.0);
        assert!(out.significant);
        assert_eq!(out.df, 3);
    }

    #[test]
    fn t_test_matches_hand_computation() {
        // d = [1.2, 0.8, 1.0, 1.1, 0.9]: mean 1.0, sd ~= 0.1581, t ~= 14.14
        let a = [1.2, 0.8, 1.0, 1.1, 0.9];
        let b = [0.0; 5];
        let out = paired_t_test(&a, &b).unwrap();
        assert_eq!(out.df, 4);
        assert!((out.t - 14.142135623730951).abs() < 1e-3, "t = {}", out.t);
        assert!(out.significant);
    }

    #[test]
    fn t_test_insignificant_small_difference() {
        let a = [0.5, 0.52, 0.48, 0.51];
        let b = [0.5, 0.5, 0.5, 0.5];
        let out = paired_t_test(&a, &b).unwrap();
        assert!(!out.significant, "t = {}", out.t);
    }

    #[test]
    fn t_test_rejects_bad_input() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }
}
