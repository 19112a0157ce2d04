//! Confidence-interval overlap: fit the same logistic regression on both
//! tables by iteratively reweighted least squares, build 95% Wald intervals
//! per coefficient, and average the symmetric overlap fraction.

use super::{EvalColumn, EvalTable};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

const MAX_ITER: usize = 100;
const COEF_TOL: f64 = 1e-8;
const Z_95: f64 = 1.959963984540054;
const SE_LIMIT: f64 = 1e6;

struct FittedCoef {
    lo: f64,
    hi: f64,
    ok: bool,
}

struct Design {
    x: Array2<f64>,
    y: Array1<f64>,
}

/// Design matrix: intercept, continuous predictors as-is, categorical
/// predictors one-hot with the first original-table category dropped.
/// Category levels and the outcome coding come from the original table so
/// both fits share a basis; unseen synthetic levels map to the baseline.
fn build_design(
    table: &EvalTable,
    outcome: &str,
    predictors: &[String],
    outcome_levels: &(String, String),
    predictor_levels: &[(String, Vec<String>)],
) -> Result<Design> {
    let n = table.n_rows;
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for name in predictors {
        match table.column(name)? {
            EvalColumn::Num(vals) => cols.push(vals.clone()),
            EvalColumn::Cat(labels) => {
                let levels = &predictor_levels
                    .iter()
                    .find(|(p, _)| p == name)
                    .expect("levels collected for every categorical predictor")
                    .1;
                for level in levels.iter().skip(1) {
                    cols.push(labels.iter().map(|l| f64::from(l == level)).collect());
                }
            }
        }
    }
    let y_labels = match table.column(outcome)? {
        EvalColumn::Cat(labels) => labels,
        EvalColumn::Num(_) => {
            return Err(Error::Schema(format!(
                "outcome '{outcome}' must be categorical"
            )))
        }
    };
    let mut y = Array1::zeros(n);
    for (i, l) in y_labels.iter().enumerate() {
        if *l == outcome_levels.1 {
            y[i] = 1.0;
        } else if *l != outcome_levels.0 {
            return Err(Error::Data(format!(
                "outcome label '{l}' outside the original binary coding"
            )));
        }
    }
    let p = cols.len();
    let mut x = Array2::zeros((n, p));
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(Design { x, y })
}

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let p = a.nrows();
    let mut l = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let p = l.nrows();
    let mut y = Array1::zeros(p);
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = Array1::zeros(p);
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Diagonal of the inverse of the matrix whose Cholesky factor is `l`.
fn chol_inverse_diag(l: &Array2<f64>) -> Vec<f64> {
    let p = l.nrows();
    (0..p)
        .map(|j| {
            let mut e = Array1::zeros(p);
            e[j] = 1.0;
            let col = chol_solve(l, &e);
            col[j]
        })
        .collect()
}

fn irls_fit(design: &Design) -> Option<(Array1<f64>, Vec<f64>)> {
    let (n, p) = design.x.dim();
    let mut beta = Array1::zeros(p);
    let mut final_l: Option<Array2<f64>> = None;
    for _ in 0..MAX_ITER {
        let eta = design.x.dot(&beta);
        let mu = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.mapv(|m| (m * (1.0 - m)).max(1e-10));
        // X^T W X and X^T W z with z = eta + (y - mu)/w
        let mut xtwx = Array2::zeros((p, p));
        let mut xtwz = Array1::zeros(p);
        for i in 0..n {
            let zi = eta[i] + (design.y[i] - mu[i]) / w[i];
            let wi = w[i];
            for a in 0..p {
                let xa = design.x[(i, a)];
                xtwz[a] += wi * xa * zi;
                for b in a..p {
                    xtwx[(a, b)] += wi * xa * design.x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let l = cholesky(&xtwx)?;
        let new_beta = chol_solve(&l, &xtwz);
        let delta = (&new_beta - &beta).mapv(f64::abs).iter().cloned().fold(0.0, f64::max);
        beta = new_beta;
        final_l = Some(l);
        if !beta.iter().all(|b| b.is_finite()) {
            return None;
        }
        if delta < COEF_TOL {
            break;
        }
    }
    let l = final_l?;
    let se: Vec<f64> = chol_inverse_diag(&l).iter().map(|&v| v.max(0.0).sqrt()).collect();
    Some((beta, se))
}

fn intervals(design: &Design) -> Option<Vec<FittedCoef>> {
    let (beta, se) = irls_fit(design)?;
    Some(
        beta.iter()
            .zip(&se)
            .map(|(&b, &s)| FittedCoef {
                lo: b - Z_95 * s,
                hi: b + Z_95 * s,
                ok: b.is_finite() && s.is_finite() && s < SE_LIMIT && b.abs() < SE_LIMIT,
            })
            .collect(),
    )
}

/// Mean per-coefficient confidence-interval overlap
/// `J = (overlap/len_orig + overlap/len_syn) / 2`, floored at zero.
/// Coefficients flagged by separation or non-convergence in either fit are
/// excluded; if every coefficient is excluded this is an error.
pub fn cio(
    original: &EvalTable,
    synthetic: &EvalTable,
    outcome: &str,
    predictors: &[String],
) -> Result<f64> {
    if predictors.is_empty() {
        return Err(Error::Usage("cio requires at least one predictor".into()));
    }
    // outcome coding and categorical predictor levels from the original
    let outcome_levels = match original.column(outcome)? {
        EvalColumn::Cat(labels) => {
            let mut seen = Vec::new();
            for l in labels {
                if !seen.contains(l) {
                    seen.push(l.clone());
                }
            }
            if seen.len() != 2 {
                return Err(Error::Data(format!(
                    "outcome '{outcome}' has {} levels, need exactly 2",
                    seen.len()
                )));
            }
            (seen[0].clone(), seen[1].clone())
        }
        EvalColumn::Num(_) => {
            return Err(Error::Schema(format!(
                "outcome '{outcome}' must be categorical"
            )))
        }
    };
    let mut predictor_levels = Vec::new();
    for name in predictors {
        if let EvalColumn::Cat(labels) = original.column(name)? {
            let mut seen = Vec::new();
            for l in labels {
                if !seen.contains(l) {
                    seen.push(l.clone());
                }
            }
            predictor_levels.push((name.clone(), seen));
        }
    }

    let d_orig = build_design(original, outcome, predictors, &outcome_levels, &predictor_levels)?;
    let d_syn = build_design(synthetic, outcome, predictors, &outcome_levels, &predictor_levels)?;

    let c_orig = intervals(&d_orig);
    let c_syn = intervals(&d_syn);
    let (c_orig, c_syn) = match (c_orig, c_syn) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Numeric("logistic fit failed on one table".into())),
    };

    let mut total = 0.0;
    let mut used = 0usize;
    for (a, b) in c_orig.iter().zip(&c_syn) {
        if !a.ok || !b.ok {
            continue;
        }
        let overlap = (a.hi.min(b.hi) - a.lo.max(b.lo)).max(0.0);
        let len_a = a.hi - a.lo;
        let len_b = b.hi - b.lo;
        if len_a <= 0.0 || len_b <= 0.0 {
            continue;
        }
        total += 0.5 * (overlap / len_a + overlap / len_b);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numeric(
            "all coefficients excluded by separation or non-convergence".into(),
        ));
    }
    Ok(total / used as f64)
}

/// Overlap of two explicit intervals, as used per coefficient.
pub fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let overlap = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let la = a.1 - a.0;
    let lb = b.1 - b.0;
    if la <= 0.0 || lb <= 0.0 {
        return 0.0;
    }
    (0.5 * (overlap / la + overlap / lb)).max(0.0)
}
