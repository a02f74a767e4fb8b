//! Independent oracles and synthetic data shared by the integration suites.
//!
//! Nothing here calls into the decomposition, ANOVA or clustering code it is
//! used to check.

#![allow(dead_code)]

use expca_core::{ExpressionMatrix, ReferencePolicy, StudyDesign};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |_| normal(rng))
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigenvalues of a symmetric matrix by the classical two-sided Jacobi
/// method, largest first. Works on a flat row-major copy.
pub fn symmetric_eigenvalues(input: &Array2<f64>) -> Vec<f64> {
    let n = input.nrows();
    let mut a: Vec<f64> = input.iter().copied().collect();
    for _ in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = a[i * n + j] * a[i * n + j];
                if i == j {
                    diag += v;
                } else {
                    off += v;
                }
            }
        }
        if off <= 1e-32 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values from the eigenvalues of the smaller Gram matrix.
pub fn gram_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let gram = if a.nrows() <= a.ncols() {
        a.dot(&a.t())
    } else {
        a.t().dot(a)
    };
    symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap((col, k), (pivot, k));
            }
            b.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = a[(row, col)] / a[(col, col)];
            for k in col..n {
                a[(row, k)] -= f * a[(col, k)];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[(row, k)] * x[k]).sum();
        x[row] = (b[row] - s) / a[(row, row)];
    }
    x
}

fn residual_ss(design: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let beta = solve(design.t().dot(design), design.t().dot(y));
    let fitted = design.dot(&beta);
    (y - &fitted).iter().map(|r| r * r).sum()
}

/// F and p for the group effect after probes, by fitting the reduced
/// (intercept + probes) and full (+ groups) dummy-coded models through
/// their normal equations. The p-value comes from statrs.
pub fn anova_oracle(values: &Array2<f64>, group_of_column: &[usize]) -> (f64, f64) {
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};
    let (p, n) = values.dim();
    let g = group_of_column.iter().max().unwrap() + 1;
    let rows = p * n;
    let y = Array1::from_iter(
        (0..p)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| values[(i, j)]),
    );
    let reduced_cols = 1 + (p - 1);
    let full_cols = reduced_cols + (g - 1);
    let mut full = Array2::<f64>::zeros((rows, full_cols));
    for i in 0..p {
        for (j, &gj) in group_of_column.iter().enumerate() {
            let r = i * n + j;
            full[(r, 0)] = 1.0;
            if i > 0 {
                full[(r, i)] = 1.0;
            }
            if gj > 0 {
                full[(r, reduced_cols + gj - 1)] = 1.0;
            }
        }
    }
    let reduced = full.slice(ndarray::s![.., ..reduced_cols]).to_owned();
    let rss_reduced = residual_ss(&reduced, &y);
    let rss_full = residual_ss(&full, &y);
    let df1 = (g - 1) as f64;
    let df2 = (rows - full_cols) as f64;
    let f = ((rss_reduced - rss_full) / df1) / (rss_full / df2);
    let p_value = FisherSnedecor::new(df1, df2).unwrap().sf(f);
    (f, p_value)
}

fn within_ss(points: &Array2<f64>, members: &[usize]) -> f64 {
    let m = points.ncols();
    let k = members.len() as f64;
    let mut centroid = vec![0.0; m];
    for &i in members {
        for (c, x) in centroid.iter_mut().zip(points.row(i)) {
            *c += x / k;
        }
    }
    members
        .iter()
        .map(|&i| {
            points
                .row(i)
                .iter()
                .zip(&centroid)
                .map(|(x, c)| (x - c).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Ward agglomeration recomputing every candidate merge cost from scratch as
/// SSE(A ∪ B) − SSE(A) − SSE(B). Returns (leaves of A, leaves of B, cost)
/// per step with A holding the smaller cluster id.
pub fn ward_oracle(points: &Array2<f64>) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let n = points.nrows();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..(n - 1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in (x + 1)..clusters.len() {
                let (ia, a) = &clusters[x];
                let (ib, b) = &clusters[y];
                let mut union = a.clone();
                union.extend(b);
                let cost = within_ss(points, &union) - within_ss(points, a) - within_ss(points, b);
                let (lo, hi) = ((*ia).min(*ib), (*ia).max(*ib));
                let better = match best {
                    None => true,
                    Some((bc, blo, bhi, _, _)) => cost < bc || (cost == bc && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((cost, lo, hi, x, y));
                }
            }
        }
        let (cost, lo, _, x, y) = best.unwrap();
        let (a, b) = if clusters[x].0 == lo {
            (clusters[x].1.clone(), clusters[y].1.clone())
        } else {
            (clusters[y].1.clone(), clusters[x].1.clone())
        };
        let mut union = a.clone();
        union.extend(&b);
        union.sort_unstable();
        clusters.remove(y);
        clusters.remove(x);
        clusters.push((n + step, union));
        let (mut a, mut b) = (a, b);
        a.sort_unstable();
        b.sort_unstable();
        out.push((a, b, cost));
    }
    out
}

/// Replicated observations around per-group mean profiles plus Gaussian noise.
/// Observations are named `<group>_r<k>`.
pub fn grouped_data<R: Rng>(
    rng: &mut R,
    groups: &[(String, Vec<f64>)],
    replicates: usize,
    noise_sd: f64,
) -> (ExpressionMatrix, StudyDesign) {
    let m = groups[0].1.len();
    let mut obs = Vec::new();
    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    for (g, profile) in groups {
        for r in 0..replicates {
            let id = format!("{g}_r{r}");
            rows.extend(profile.iter().map(|mu| mu + noise_sd * normal(rng)));
            pairs.push((id.clone(), g.clone()));
            obs.push(id);
        }
    }
    let vars: Vec<String> = (0..m).map(|j| format!("v{j}")).collect();
    let values = Array2::from_shape_vec((obs.len(), m), rows).unwrap();
    let matrix = ExpressionMatrix::from_values(obs, vars, values).unwrap();
    let design = StudyDesign::new(pairs, ReferencePolicy::GlobalMean).unwrap();
    (matrix, design)
}

/// Exchangeable variables: variable j responds to group level `levels[g]`
/// through its own loading a_j ~ N(0, 1).
pub fn exchangeable_groups<R: Rng>(rng: &mut R, levels: &[f64], m: usize) -> Vec<(String, Vec<f64>)> {
    let loadings: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    levels
        .iter()
        .enumerate()
        .map(|(g, &level)| (format!("G{g}"), loadings.iter().map(|a| level * a).collect()))
        .collect()
}

/// SD of the group-level signal around its mean, over groups and variables.
pub fn signal_sd(groups: &[(String, Vec<f64>)]) -> f64 {
    let all: Vec<f64> = groups.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt()
}
