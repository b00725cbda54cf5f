//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Columns are pre-ordered by reverse Cuthill-McKee on the pattern of
//! `A + A^T`, with dense rows/columns (bordering, frequency columns) pushed
//! to the end so they only contribute a dense trailing row/column of fill.

use std::collections::VecDeque;

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_RTOL: f64 = 1e-14;
const UNSET: usize = usize::MAX;

/// Reusable factorization `A Q = P^T L U`.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    /// Column permutation: step k eliminates original column `col_perm[k]`.
    col_perm: Vec<usize>,
    /// Original row chosen as pivot at step k.
    pivot_row: Vec<usize>,
    /// Inverse of `pivot_row`.
    row_step: Vec<usize>,
    /// Strictly lower part of L, column k, keyed by original row.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Strictly upper part of U, column k, keyed by step.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
}

fn ordering(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let dense_limit = 16 + (10.0 * (n as f64).sqrt()) as usize;
    let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_limit).collect();
    let degree: Vec<usize> = adj
        .iter()
        .map(|l| l.iter().filter(|&&j| !dense[j]).count())
        .collect();

    let mut visited = dense.clone();
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &mut Vec<bool>, out: &mut Vec<usize>| {
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            out.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    };
    let mut by_degree: Vec<usize> = (0..n).filter(|&i| !dense[i]).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // One pseudo-peripheral refinement: restart from the last node of a trial sweep.
        let mut trial_visited = visited.clone();
        let mut trial = Vec::new();
        bfs(seed, &mut trial_visited, &mut trial);
        let start = *trial.last().unwrap();
        let mut comp = Vec::new();
        bfs(start, &mut visited, &mut comp);
        comp.reverse();
        order.extend(comp);
    }
    order.extend((0..n).filter(|&i| dense[i]));
    order
}

/// Factors a square sparse matrix.
pub fn factor(a: &SparseMatrix) -> Result<Factorization> {
    a.check_square()?;
    let n = a.nrows();
    let scale = a.max_row_norm();
    let col_perm = ordering(a);
    let csc = a.transpose();

    let mut pivot_row = vec![UNSET; n];
    let mut row_step = vec![UNSET; n];
    let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut u_diag = Vec::with_capacity(n);

    let mut x = vec![0.0; n];
    let mut touched = vec![false; n];
    let mut pattern: Vec<usize> = Vec::new();
    let mut mark = vec![UNSET; n];
    let mut post: Vec<usize> = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for k in 0..n {
        let col = col_perm[k];
        let (rows, vals) = csc.row(col);
        pattern.clear();
        post.clear();
        for (&i, &v) in rows.iter().zip(vals) {
            x[i] += v;
            if !touched[i] {
                touched[i] = true;
                pattern.push(i);
            }
        }
        // Reach of the column pattern through the graph of L (DFS postorder).
        for &i0 in rows {
            let s0 = row_step[i0];
            if s0 == UNSET || mark[s0] == k {
                continue;
            }
            mark[s0] = k;
            stack.push((s0, 0));
            while let Some(&(s, mut next)) = stack.last() {
                let lc = &l_cols[s];
                let mut child = None;
                while next < lc.len() {
                    let t = row_step[lc[next].0];
                    next += 1;
                    if t != UNSET && mark[t] != k {
                        child = Some(t);
                        break;
                    }
                }
                let top = stack.len() - 1;
                stack[top].1 = next;
                if let Some(t) = child {
                    mark[t] = k;
                    stack.push((t, 0));
                } else {
                    post.push(s);
                    stack.pop();
                }
            }
        }
        // Sparse triangular solve in topological order.
        for &s in post.iter().rev() {
            let xs = x[pivot_row[s]];
            if xs == 0.0 {
                continue;
            }
            for &(r, l) in &l_cols[s] {
                if !touched[r] {
                    touched[r] = true;
                    pattern.push(r);
                }
                x[r] -= l * xs;
            }
        }
        let mut ucol = Vec::new();
        let mut best = UNSET;
        let mut best_abs = 0.0;
        for &i in &pattern {
            let s = row_step[i];
            if s != UNSET {
                if x[i] != 0.0 {
                    ucol.push((s, x[i]));
                }
            } else if x[i].abs() > best_abs {
                best_abs = x[i].abs();
                best = i;
            }
        }
        if best == UNSET || best_abs <= SINGULAR_RTOL * scale {
            return Err(Error::SingularMatrix { pivot: k, magnitude: best_abs });
        }
        if row_step[col] == UNSET && touched[col] && x[col].abs() >= PIVOT_THRESHOLD * best_abs {
            best = col;
        }
        let piv = x[best];
        let mut lcol = Vec::new();
        for &i in &pattern {
            if row_step[i] == UNSET && i != best && x[i] != 0.0 {
                lcol.push((i, x[i] / piv));
            }
        }
        for &i in &pattern {
            x[i] = 0.0;
            touched[i] = false;
        }
        pivot_row[k] = best;
        row_step[best] = k;
        l_cols.push(lcol);
        u_cols.push(ucol);
        u_diag.push(piv);
    }

    Ok(Factorization { n, col_perm, pivot_row, row_step, l_cols, u_cols, u_diag })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries (L strict + U strict + diagonal).
    pub fn fill(&self) -> usize {
        self.l_cols.iter().map(Vec::len).sum::<usize>()
            + self.u_cols.iter().map(Vec::len).sum::<usize>()
            + self.n
    }

    /// Solves `A x = b`, or `A^T x = b` when `transpose` is set.
    pub fn solve(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        Ok(if transpose { self.solve_t(b) } else { self.solve_n(b) })
    }

    fn solve_n(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut w = b.to_vec();
        let mut y = vec![0.0; n];
        for k in 0..n {
            let yk = w[self.pivot_row[k]];
            y[k] = yk;
            if yk != 0.0 {
                for &(r, l) in &self.l_cols[k] {
                    w[r] -= l * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let zk = y[k] / self.u_diag[k];
            y[k] = zk;
            if zk != 0.0 {
                for &(s, u) in &self.u_cols[k] {
                    y[s] -= u * zk;
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.col_perm[k]] = y[k];
        }
        x
    }

    fn solve_t(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut w: Vec<f64> = (0..n).map(|k| b[self.col_perm[k]]).collect();
        for k in 0..n {
            let mut acc = w[k];
            for &(s, u) in &self.u_cols[k] {
                acc -= u * w[s];
            }
            w[k] = acc / self.u_diag[k];
        }
        for k in (0..n).rev() {
            let mut acc = w[k];
            for &(r, l) in &self.l_cols[k] {
                acc -= l * w[self.row_step[r]];
            }
            w[k] = acc;
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.pivot_row[k]] = w[k];
        }
        x
    }
}
