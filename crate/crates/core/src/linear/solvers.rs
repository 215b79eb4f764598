use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::hashing::HashedFeatureVector;
use crate::scalar::Real;

/// Design matrix restricted to the hash buckets that actually occur.
pub(crate) struct CompactDesign<T> {
    pub rows: Vec<Vec<(u32, T)>>,
    /// compact column -> hash bucket
    pub columns: Vec<u32>,
}

impl<T: Real> CompactDesign<T> {
    pub fn new(xs: &[HashedFeatureVector<T>]) -> Self {
        let mut index: HashMap<u32, u32> = HashMap::new();
        let mut columns = Vec::new();
        let rows = xs
            .iter()
            .map(|x| {
                x.entries()
                    .iter()
                    .map(|&(i, v)| {
                        let c = *index.entry(i).or_insert_with(|| {
                            columns.push(i);
                            (columns.len() - 1) as u32
                        });
                        (c, v)
                    })
                    .collect()
            })
            .collect();
        CompactDesign { rows, columns }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Scatters compact weights into a dense vector of length `dimension`.
    pub fn expand(&self, compact: &[T], dimension: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dimension];
        for (&bucket, &w) in self.columns.iter().zip(compact) {
            out[bucket as usize] = w;
        }
        out
    }
}

#[inline]
fn row_dot<T: Real>(row: &[(u32, T)], w: &[T]) -> T {
    row.iter()
        .map(|&(c, v)| v * w[c as usize])
        .fold(T::zero(), |a, b| a + b)
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x * y)
        .fold(T::zero(), |s, v| s + v)
}

pub(crate) struct Solution<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `||y - Xw - b||^2 + alpha ||w||^2` (intercept unpenalized) by conjugate
/// gradients on the normal equations.
pub(crate) fn ridge<T: Real>(
    design: &CompactDesign<T>,
    y: &[T],
    alpha: T,
    fit_intercept: bool,
    tol: T,
    max_iter: usize,
) -> Solution<T> {
    let d = design.n_cols();
    // last coordinate is the intercept
    let n_var = d + 1;
    let apply = |p: &[T], out: &mut [T]| {
        out.iter_mut().for_each(|o| *o = T::zero());
        let pb = if fit_intercept { p[d] } else { T::zero() };
        for row in &design.rows {
            let xp = row_dot(row, p) + pb;
            for &(c, v) in row {
                out[c as usize] = out[c as usize] + v * xp;
            }
            if fit_intercept {
                out[d] = out[d] + xp;
            }
        }
        for j in 0..d {
            out[j] = out[j] + alpha * p[j];
        }
    };

    let mut rhs = vec![T::zero(); n_var];
    for (row, &yi) in design.rows.iter().zip(y) {
        for &(c, v) in row {
            rhs[c as usize] = rhs[c as usize] + v * yi;
        }
        if fit_intercept {
            rhs[d] = rhs[d] + yi;
        }
    }

    let mut x = vec![T::zero(); n_var];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n_var];
    let mut rs = dot(&r, &r);
    let threshold = tol * dot(&rhs, &rhs).sqrt();
    let mut iterations = 0;
    let mut converged = rs.sqrt() <= threshold;
    while !converged && iterations < max_iter {
        iterations += 1;
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            break;
        }
        let step = rs / pap;
        for k in 0..n_var {
            x[k] = x[k] + step * p[k];
            r[k] = r[k] - step * ap[k];
        }
        let rs_new = dot(&r, &r);
        converged = rs_new.sqrt() <= threshold;
        let beta = rs_new / rs;
        for k in 0..n_var {
            p[k] = r[k] + beta * p[k];
        }
        rs = rs_new;
    }
    let bias = x.pop().unwrap_or_else(T::zero);
    Solution {
        weights: x,
        bias,
        iterations,
        converged,
    }
}

/// Dual coordinate descent for the L2-regularized squared-hinge SVM. The intercept is
/// an extra feature of constant value 1 and is regularized like every other weight.
pub(crate) fn svm_squared_hinge<T: Real>(
    design: &CompactDesign<T>,
    y: &[T],
    c: T,
    fit_intercept: bool,
    tol: T,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> Solution<T> {
    let n = design.rows.len();
    let d = design.n_cols();
    let diag = T::one() / (T::of(2.0) * c);
    let bias_feature = if fit_intercept { T::one() } else { T::zero() };
    let qd: Vec<T> = design
        .rows
        .iter()
        .map(|row| {
            row.iter().map(|e| e.1 * e.1).fold(T::zero(), |a, b| a + b)
                + bias_feature * bias_feature
                + diag
        })
        .collect();

    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut alpha = vec![T::zero(); n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut iterations = 0;
    let mut converged = false;
    let tiny = T::of(1e-12);

    while iterations < max_iter {
        iterations += 1;
        order.shuffle(rng);
        let mut pg_max = T::neg_infinity();
        let mut pg_min = T::infinity();
        for &i in &order {
            let row = &design.rows[i];
            let yi = y[i];
            let g = yi * (row_dot(row, &w) + b * bias_feature) - T::one() + diag * alpha[i];
            let pg = if alpha[i] == T::zero() {
                g.min(T::zero())
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > tiny {
                let old = alpha[i];
                alpha[i] = (alpha[i] - g / qd[i]).max(T::zero());
                let delta = (alpha[i] - old) * yi;
                for &(c, v) in row {
                    w[c as usize] = w[c as usize] + delta * v;
                }
                b = b + delta * bias_feature;
            }
        }
        if pg_max - pg_min <= tol {
            converged = true;
            break;
        }
    }
    Solution {
        weights: w,
        bias: b,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn design(rows: &[&[(u32, f64)]]) -> CompactDesign<f64> {
        let xs: Vec<_> = rows
            .iter()
            .map(|r| HashedFeatureVector::from_pairs(16, r.to_vec()))
            .collect();
        CompactDesign::new(&xs)
    }

    /// Closed form for a single feature plus intercept, solved by hand.
    #[test]
    fn ridge_matches_two_by_two_normal_equations() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [-1.0, -1.0, 1.0, 1.0];
        let rows: Vec<Vec<(u32, f64)>> = xs.iter().map(|&x| vec![(5, x)]).collect();
        let rows_ref: Vec<&[(u32, f64)]> = rows.iter().map(|r| r.as_slice()).collect();
        let d = design(&rows_ref);
        let alpha = 1.0;
        let sol = ridge(&d, &ys, alpha, true, 1e-12, 100);
        // [sum x^2 + a, sum x; sum x, n] [w; b] = [sum xy; sum y]
        let (sxx, sx, n, sxy, sy) = (30.0 + alpha, 10.0, 4.0, 4.0, 0.0);
        let det = sxx * n - sx * sx;
        let w = (sxy * n - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        assert!(sol.converged);
        assert!((sol.weights[0] - w).abs() < 1e-10);
        assert!((sol.bias - b).abs() < 1e-10);
    }

    #[test]
    fn svm_separates_simple_data() {
        let d = design(&[
            &[(1, 1.0)],
            &[(1, 1.0), (2, 1.0)],
            &[(3, 1.0)],
            &[(3, 1.0), (2, 1.0)],
        ]);
        let y = [1.0, 1.0, -1.0, -1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = svm_squared_hinge(&d, &y, 1.0, true, 1e-6, 1000, &mut rng);
        assert!(sol.converged);
        for (row, &yi) in d.rows.iter().zip(&y) {
            assert!(yi * (row_dot(row, &sol.weights) + sol.bias) > 0.0);
        }
    }
}
