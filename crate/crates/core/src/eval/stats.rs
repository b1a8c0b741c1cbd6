use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub r2: f64,
    pub sse: f64,
    pub n_eval: usize,
}

/// Coefficient of determination against the mean of `y_true`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<Score> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Validation(format!(
            "r2 needs equal lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::Validation("r2 needs at least two samples".into()));
    }
    let n = y_true.len();
    let mean = y_true.iter().sum::<f64>() / n as f64;
    let sst: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedR2);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(Score {
        r2: 1.0 - sse / sst,
        sse,
        n_eval: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub dof: usize,
    pub mean_difference: f64,
    pub ci95: (f64, f64),
}

/// Two-sided paired Student's t-test on the differences `a - b`.
///
/// Degenerate cases follow fixed conventions: when every difference is
/// zero the result is `t = 0, p = 1`; when the differences are all equal
/// but nonzero, `t` is infinite and `p = 0`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Validation("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let dof = n - 1;

    if se == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        return Ok(TTestResult {
            t_statistic: t,
            p_value: p,
            dof,
            mean_difference: mean,
            ci95: (mean, mean),
        });
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::Validation(e.to_string()))?;
    let t = mean / se;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    let q = dist.inverse_cdf(0.975);
    Ok(TTestResult {
        t_statistic: t,
        p_value: p,
        dof,
        mean_difference: mean,
        ci95: (mean - q * se, mean + q * se),
    })
}

/// Mean rank of each model over datasets. `table[d][m]` is model `m`'s score
/// on dataset `d`; higher scores rank better (rank 1), and tied scores share
/// the mean of the ranks they span.
pub fn friedman_rank(table: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = table.first() else {
        return Err(Error::MissingEntries);
    };
    let m = first.len();
    if m == 0 || table.iter().any(|row| row.len() != m || row.iter().any(|v| v.is_nan())) {
        return Err(Error::MissingEntries);
    }
    let mut totals = vec![0.0; m];
    for row in table {
        for (t, r) in totals.iter_mut().zip(rank_descending(row)) {
            *t += r;
        }
    }
    Ok(totals.into_iter().map(|t| t / table.len() as f64).collect())
}

fn rank_descending(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        // Positions i..=j hold ranks i+1..=j+1.
        let shared = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn r2_cases() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(r2(&y, &y).unwrap().r2, 1.0);
        assert_eq!(r2(&y, &[1.0, 1.0, 1.0]).unwrap().r2, 0.0);
        assert_eq!(r2(&y, &[0.0, 1.0, 1.0]).unwrap().r2, 0.5);
        assert!(matches!(r2(&[3.0, 3.0], &[3.0, 3.0]), Err(Error::UndefinedR2)));
    }

    #[test]
    fn r2_affine_invariance() {
        let y = [0.3, 1.7, -0.4, 2.2, 0.9];
        let p = [0.1, 1.5, 0.0, 2.0, 1.3];
        let f = |v: &[f64]| v.iter().map(|x| 3.5 * x - 7.0).collect::<Vec<_>>();
        assert_abs_diff_eq!(r2(&y, &p).unwrap().r2, r2(&f(&y), &f(&p)).unwrap().r2, epsilon = 1e-12);
    }

    #[test]
    fn ttest_reference() {
        let d = [0.5, -0.2, 0.3, 0.1, 0.4];
        let r = paired_ttest(&d, &[0.0; 5]).unwrap();
        assert_abs_diff_eq!(r.t_statistic, 1.772810520855837, epsilon = 1e-9);
        assert_abs_diff_eq!(r.p_value, 0.15094405366901748, epsilon = 1e-9);
        assert_abs_diff_eq!(r.ci95.0, -0.12454777651513432, epsilon = 1e-9);
        assert_abs_diff_eq!(r.ci95.1, 0.5645477765151343, epsilon = 1e-9);
        assert_eq!(r.dof, 4);
    }

    #[test]
    fn ttest_degenerate_cases() {
        let a = [0.2, 0.4, 0.6];
        let r = paired_ttest(&a, &a).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));
        let r = paired_ttest(&[2.0; 4], &[1.0; 4]).unwrap();
        assert!(r.p_value < 1e-12 && r.t_statistic.is_infinite());
    }

    #[test]
    fn ttest_antisymmetry() {
        let a = [0.9, 0.8, 0.75, 0.6];
        let b = [0.85, 0.82, 0.7, 0.5];
        let (x, y) = (paired_ttest(&a, &b).unwrap(), paired_ttest(&b, &a).unwrap());
        assert_eq!(x.t_statistic, -y.t_statistic);
        assert_eq!(x.p_value, y.p_value);
    }

    #[test]
    fn friedman_cases() {
        assert_eq!(friedman_rank(&[vec![0.9, 0.5], vec![0.8, 0.1]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(friedman_rank(&[vec![0.7, 0.7]]).unwrap(), vec![1.5, 1.5]);
        let r = friedman_rank(&[vec![0.1, 0.5, 0.5, 0.9]]).unwrap();
        assert_eq!(r, vec![4.0, 2.5, 2.5, 1.0]);
        assert!(matches!(friedman_rank(&[vec![0.1, 0.2], vec![0.3]]), Err(Error::MissingEntries)));
        assert!(matches!(friedman_rank(&[vec![0.1, f64::NAN]]), Err(Error::MissingEntries)));
    }
}
