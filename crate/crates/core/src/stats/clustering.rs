//! Agglomerative Ward clustering of observations (Lance–Williams update).

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

use crate::data::{CenteredMatrix, VariableSet};
use crate::error::{ExpcaError, Result};
use crate::format;

/// One agglomeration step. Leaves are numbered `0..n`; the cluster created by
/// step `s` gets id `n + s`. `a < b` always.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Increase of the total within-cluster sum of squares caused by the merge.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaf_labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaves under cluster `id`, sorted.
    pub fn leaves(&self, id: usize) -> Vec<usize> {
        let n = self.leaf_labels.len();
        if id < n {
            return vec![id];
        }
        let m = &self.merges[id - n];
        let mut out = self.leaves(m.a);
        out.extend(self.leaves(m.b));
        out.sort_unstable();
        out
    }

    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let n = self.leaf_labels.len();
        for (i, label) in self.leaf_labels.iter().enumerate() {
            let _ = writeln!(out, "# leaf {i}\t{label}");
        }
        out.push_str("step\tcluster_a\tcluster_b\theight\tsize\tnew_cluster\n");
        for (s, m) in self.merges.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s + 1,
                m.a,
                m.b,
                format::float(m.height),
                m.size,
                n + s
            );
        }
        out
    }
}

/// Ward clustering of the centered observations, optionally on a variable subset.
pub fn ward_cluster(centered: &CenteredMatrix, variable_filter: Option<&VariableSet>) -> Result<Dendrogram> {
    let cols: Vec<usize> = (0..centered.n_variables())
        .filter(|&j| variable_filter.is_none_or(|f| f.contains(&centered.variable_ids()[j])))
        .collect();
    if cols.is_empty() {
        return Err(ExpcaError::Degenerate("variable filter leaves no variables".into()));
    }
    let x = centered.values();
    let points = Array2::from_shape_fn((centered.n_observations(), cols.len()), |(i, c)| x[(i, cols[c])]);
    ward_linkage(points.view(), centered.observation_ids().to_vec())
}

/// Ward linkage on the rows of `points`. The pair with the smallest merge cost
/// wins; equal costs go to the smallest `(a, b)` cluster ids.
pub fn ward_linkage(points: ArrayView2<'_, f64>, labels: Vec<String>) -> Result<Dendrogram> {
    let n = points.nrows();
    if n < 2 {
        return Err(ExpcaError::InvalidArgument(format!(
            "clustering needs at least two observations, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(ExpcaError::Dimension("one label per point required".into()));
    }

    // d holds 2·(merge cost), the Lance–Williams Ward recurrence on squared
    // Euclidean distances.
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &points.row(i) - &points.row(j);
            let sq = diff.dot(&diff);
            d[(i, j)] = sq;
            d[(j, i)] = sq;
        }
    }
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..(n - 1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                let (lo, hi) = (id[i].min(id[j]), id[i].max(id[j]));
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => d[(i, j)] < bd || (d[(i, j)] == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d[(i, j)], lo, hi, i, j));
                }
            }
        }
        let (dij, lo, hi, i, j) = best.expect("at least two active clusters");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let nk = size[k] as f64;
            let updated = ((ni + nk) * d[(i, k)] + (nj + nk) * d[(j, k)] - nk * dij) / (ni + nj + nk);
            d[(i, k)] = updated;
            d[(k, i)] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        id[i] = n + step;
        merges.push(Merge {
            a: lo,
            b: hi,
            height: dij / 2.0,
            size: size[i],
        });
    }
    Ok(Dendrogram {
        leaf_labels: labels,
        merges,
    })
}
