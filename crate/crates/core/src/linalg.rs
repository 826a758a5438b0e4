//! Compressed sparse row matrices and the iterative solvers used by the
//! pressure, flux-correction and reference systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Build the matrix. Structural entries are kept even when their summed
    /// value is zero, so `nnz` reflects the sparsity pattern.
    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (0..self.nrows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= rel_tol * scale))
    }

    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.apply(x);
        norm2_diff(&ax, b)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Incomplete Cholesky factor with zero fill, stored as the lower triangle
/// (including the diagonal) in CSR layout.
#[derive(Debug, Clone)]
pub struct IncompleteCholesky {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl IncompleteCholesky {
    pub fn new(a: &CsrMatrix) -> Self {
        let diag = a.diagonal();
        let mut shift = 0.0;
        loop {
            if let Some(f) = Self::try_factor(a, &diag, shift) {
                if shift > 0.0 {
                    log::debug!("IC(0) needed diagonal shift {shift:.1e}");
                }
                return f;
            }
            shift = if shift == 0.0 { 1e-3 } else { shift * 4.0 };
        }
    }

    fn try_factor(a: &CsrMatrix, diag: &[f64], shift: f64) -> Option<Self> {
        let n = a.nrows;
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut diag_pos = vec![0usize; n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    col_idx.push(j);
                    values.push(if j == i { v + shift * diag[i].abs() } else { v });
                    if j == i {
                        diag_pos[i] = col_idx.len() - 1;
                    }
                }
            }
            row_ptr[i + 1] = col_idx.len();
            if col_idx.last() != Some(&i) {
                return None;
            }
        }
        // Row-oriented IC(0): L[i][j] = (A[i][j] - sum_{k<j} L[i][k] L[j][k]) / L[j][j]
        // restricted to the pattern of A. Rows of L with columns < i are final.
        let mut work = vec![0.0f64; n];
        let mut mark = vec![usize::MAX; n];
        for i in 0..n {
            let (rs, re) = (row_ptr[i], row_ptr[i + 1]);
            for k in rs..re {
                work[col_idx[k]] = values[k];
                mark[col_idx[k]] = i;
            }
            let mut d = work[i];
            for k in rs..diag_pos[i] {
                let j = col_idx[k];
                let mut s = work[j];
                for kk in row_ptr[j]..diag_pos[j] {
                    let m = col_idx[kk];
                    if mark[m] == i {
                        s -= work[m] * values[kk];
                    }
                }
                let lij = s / values[diag_pos[j]];
                work[j] = lij;
                d -= lij * lij;
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            work[i] = d.sqrt();
            for k in rs..re {
                values[k] = work[col_idx[k]];
            }
        }
        Some(IncompleteCholesky {
            n,
            row_ptr,
            col_idx,
            values,
            diag_pos,
        })
    }

    /// Solve `L L^T z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for i in 0..self.n {
            let mut s = z[i];
            for k in self.row_ptr[i]..self.diag_pos[i] {
                s -= self.values[k] * z[self.col_idx[k]];
            }
            z[i] = s / self.values[self.diag_pos[i]];
        }
        for i in (0..self.n).rev() {
            z[i] /= self.values[self.diag_pos[i]];
            let zi = z[i];
            for k in self.row_ptr[i]..self.diag_pos[i] {
                z[self.col_idx[k]] -= self.values[k] * zi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradients for SPD systems, with the stopping test
/// applied to the true residual `||b - A x|| / ||b||`.
pub struct Pcg<'a> {
    a: &'a CsrMatrix,
    precond: IncompleteCholesky,
}

impl<'a> Pcg<'a> {
    pub fn new(a: &'a CsrMatrix) -> Self {
        Pcg {
            a,
            precond: IncompleteCholesky::new(a),
        }
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64], opts: SolverOptions) -> Result<SolveStats> {
        let n = self.a.nrows;
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats {
                iterations: 0,
                rel_residual: 0.0,
            });
        }
        let mut total_iter = 0;
        // Restart loop guards against drift between recursive and true residual.
        for _restart in 0..8 {
            let mut r = vec![0.0; n];
            self.a.mul_vec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            let rel = norm2(&r) / bnorm;
            if rel <= opts.rel_tol {
                return Ok(SolveStats {
                    iterations: total_iter,
                    rel_residual: rel,
                });
            }
            let mut z = vec![0.0; n];
            self.precond.apply(&r, &mut z);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            let mut ap = vec![0.0; n];
            let target = 0.5 * opts.rel_tol * bnorm;
            while total_iter < opts.max_iter {
                total_iter += 1;
                self.a.mul_vec(&p, &mut ap);
                let pap = dot(&p, &ap);
                if pap <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                if norm2(&r) <= target {
                    break;
                }
                self.precond.apply(&r, &mut z);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
            if total_iter >= opts.max_iter {
                break;
            }
        }
        let rel = self.a.residual_norm(x, b) / bnorm;
        if rel <= opts.rel_tol {
            Ok(SolveStats {
                iterations: total_iter,
                rel_residual: rel,
            })
        } else {
            Err(Error::Numerical {
                message: format!("conjugate gradients did not converge in {total_iter} iterations"),
                residual: rel,
            })
        }
    }
}

pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let mut x = vec![0.0; b.len()];
    let stats = Pcg::new(a).solve(b, &mut x, opts)?;
    Ok((x, stats))
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular systems.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: SolverOptions) -> Result<SolveStats> {
    let n = a.nrows;
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = a.apply(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        a.mul_vec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= opts.rel_tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let rel = a.residual_norm(x, b) / bnorm;
            return Ok(SolveStats {
                iterations: it,
                rel_residual: rel,
            });
        }
        for i in 0..n {
            zz[i] = dinv[i] * s[i];
        }
        a.mul_vec(&zz, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= opts.rel_tol * bnorm {
            let rel = a.residual_norm(x, b) / bnorm;
            if rel <= opts.rel_tol * 10.0 {
                return Ok(SolveStats {
                    iterations: it,
                    rel_residual: rel,
                });
            }
        }
    }
    let rel = a.residual_norm(x, b) / bnorm;
    Err(Error::Numerical {
        message: "BiCGSTAB did not converge".into(),
        residual: rel,
    })
}

/// Estimate the spectral condition number of an SPD matrix by power iteration
/// on `A` and inverse power iteration (PCG solves) for the smallest eigenvalue.
pub fn estimate_condition(a: &CsrMatrix) -> Result<f64> {
    let n = a.nrows;
    if n == 0 {
        return Ok(1.0);
    }
    let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 101) as f64 / 101.0).collect();
    let normalize = |v: &mut Vec<f64>| {
        let nv = norm2(v);
        v.iter_mut().for_each(|x| *x /= nv);
    };

    let mut v = start.clone();
    normalize(&mut v);
    let mut lambda_max = 0.0;
    for _ in 0..500 {
        let w = a.apply(&v);
        let rq = dot(&v, &w);
        let mut w = w;
        normalize(&mut w);
        v = w;
        if (rq - lambda_max).abs() <= 1e-9 * rq.abs() {
            lambda_max = rq;
            break;
        }
        lambda_max = rq;
    }

    // The estimate only needs a few digits, so the inner solves stop early.
    let pcg = Pcg::new(a);
    let opts = SolverOptions {
        rel_tol: 1e-8,
        max_iter: 50_000,
    };
    let mut v = start;
    normalize(&mut v);
    let mut mu = 0.0;
    for _ in 0..200 {
        let mut w = vec![0.0; n];
        pcg.solve(&v, &mut w, opts)?;
        let rq = dot(&v, &w); // approximates 1 / lambda_min
        normalize(&mut w);
        v = w;
        if (rq - mu).abs() <= 1e-7 * rq.abs() {
            mu = rq;
            break;
        }
        mu = rq;
    }
    Ok(lambda_max * mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 0, -1.0);
        let m = t.build();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn pcg_solves_laplacian() {
        let a = laplace_1d(200);
        let b = vec![1.0; 200];
        let (x, stats) = solve_spd(&a, &b, SolverOptions::default()).unwrap();
        assert!(stats.rel_residual <= 1e-10);
        // exact: x_i = (i+1)(n-i)/2
        for (i, xi) in x.iter().enumerate() {
            let exact = (i + 1) as f64 * (200 - i) as f64 / 2.0;
            assert!((xi - exact).abs() < 1e-6 * exact);
        }
    }

    #[test]
    fn bicgstab_nonsymmetric() {
        let mut t = TripletBuilder::new(3, 3);
        for (i, j, v) in [(0, 0, 4.0), (0, 1, -1.0), (1, 1, 3.0), (1, 2, -2.0), (2, 0, -1.0), (2, 2, 5.0)] {
            t.push(i, j, v);
        }
        let a = t.build();
        let b = vec![1.0, 2.0, 3.0];
        let mut x = vec![0.0; 3];
        bicgstab(&a, &b, &mut x, SolverOptions::default()).unwrap();
        assert!(a.residual_norm(&x, &b) < 1e-9);
    }

    #[test]
    fn condition_identity_and_diag() {
        assert!((estimate_condition(&CsrMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-9);
        let c = estimate_condition(&CsrMatrix::from_diagonal(&[1.0, 10.0])).unwrap();
        assert!((c - 10.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn condition_1d_laplacian() {
        let n = 50;
        let c = estimate_condition(&laplace_1d(n)).unwrap();
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let exact = (1.0 - (n as f64 * h).cos()) / (1.0 - h.cos());
        assert!((c / exact - 1.0).abs() < 0.05, "{c} vs {exact}");
    }
}
