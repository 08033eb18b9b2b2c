//! Direct banded LU with partial pivoting and a Jacobi-preconditioned
//! conjugate-gradient solver.
//!
//! The coupled velocity–pressure system assembles into a narrow band when
//! unknowns are ordered by axial column, so a LAPACK-style band factorization
//! is both simpler and faster here than a general sparse solver. Partial
//! pivoting is required: continuity rows have zero diagonal.

#[derive(Debug, thiserror::Error)]
pub enum LinSolveError {
    #[error("singular system: no usable pivot at column {0}")]
    Singular(usize),
    #[error("entry ({row}, {col}) outside the declared bandwidth")]
    OutOfBand { row: usize, col: usize },
    #[error(
        "conjugate gradient stalled at relative residual {residual:.3e} after {iters} iterations"
    )]
    CgNoConvergence { residual: f64, iters: usize },
}

/// General band matrix in LAPACK `dgbtrf` storage: column-major with
/// `2*kl + ku + 1` stored diagonals per column, the extra `kl` rows holding
/// fill generated by row interchanges.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    /// Column-major: entry (i, j) lives at `data[j * ldab + (kl + ku + i - j)]`.
    data: Vec<f64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
            pivots: vec![0; n],
            factored: false,
        }
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let (i, j) = (row as isize, col as isize);
        let off = self.kl as isize + self.ku as isize + i - j;
        if off < self.kl as isize || off >= self.ldab as isize {
            return None;
        }
        Some(col * self.ldab + off as usize)
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) -> Result<(), LinSolveError> {
        debug_assert!(!self.factored);
        match self.slot(row, col) {
            Some(k) => {
                self.data[k] += value;
                Ok(())
            }
            None => Err(LinSolveError::OutOfBand { row, col }),
        }
    }

    /// In-place LU factorization with partial pivoting (dgbtrf).
    pub fn factor(&mut self) -> Result<(), LinSolveError> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let d = &mut self.data;
        for j in 0..n {
            let pivot_reach = kl.min(n - 1 - j);
            // Find the largest pivot in column j among rows j..=j+kl.
            let mut p = 0;
            let mut pmax = 0.0_f64;
            for i in 0..=pivot_reach {
                let v = d[j * ldab + kl + ku + i].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 {
                return Err(LinSolveError::Singular(j));
            }
            self.pivots[j] = j + p;
            let fill_reach = (ku + kl).min(n - 1 - j);
            if p != 0 {
                // Swap rows j and j+p across columns j..=j+ku+kl.
                for c in 0..=fill_reach {
                    let col = j + c;
                    let a = col * ldab + kl + ku + j - col;
                    d.swap(a, a + p);
                }
            }
            let piv = d[j * ldab + kl + ku];
            for i in 1..=pivot_reach {
                let k = j * ldab + kl + ku + i;
                let m = d[k] / piv;
                d[k] = m;
                if m != 0.0 {
                    for c in 1..=fill_reach {
                        let col = j + c;
                        let base = col * ldab + kl + ku + j - col;
                        let upd = d[base] * m;
                        d[base + i] -= upd;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves A x = b using the stored factorization; `b` is overwritten.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "factor() must run before solve()");
        assert_eq!(b.len(), self.n);
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let d = &self.data;
        // Forward: apply interchanges and L.
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let reach = kl.min(n - 1 - j);
                for i in 1..=reach {
                    b[j + i] -= d[j * ldab + kl + ku + i] * bj;
                }
            }
        }
        // Backward: U x = y.
        for j in (0..n).rev() {
            let reach = (ku + kl).min(n - 1 - j);
            let mut acc = b[j];
            for c in 1..=reach {
                let col = j + c;
                acc -= d[col * ldab + kl + ku + j - col] * b[col];
            }
            b[j] = acc / d[j * ldab + kl + ku];
        }
    }
}

/// Sparse symmetric operator for the conjugate-gradient solver: a diagonal
/// plus compressed off-diagonal links.
pub struct SymOperator {
    pub n: usize,
    pub diag: Vec<f64>,
    /// CSR-style adjacency: for unknown i, links in `cols/vals[row_ptr[i]..row_ptr[i+1]]`.
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SymOperator {
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = self.diag[i] * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }
}

pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on a symmetric positive-definite
/// operator. `x` carries the warm start and receives the solution.
pub fn pcg(
    op: &SymOperator,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iters: usize,
    scratch: &mut CgScratch,
) -> Result<CgStats, LinSolveError> {
    let n = op.n;
    scratch.resize(n);
    let (r, z, p, ap) = scratch.parts();

    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    op.apply(x, ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut rz = 0.0;
    for i in 0..n {
        z[i] = r[i] / op.diag[i];
        rz += r[i] * z[i];
        p[i] = z[i];
    }
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res / b_norm <= rel_tol {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: res / b_norm,
        });
    }
    for iter in 1..=max_iters {
        op.apply(p, ap);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(LinSolveError::CgNoConvergence {
                residual: res / b_norm,
                iters: iter,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res / b_norm <= rel_tol {
            return Ok(CgStats {
                iterations: iter,
                relative_residual: res / b_norm,
            });
        }
        let mut rz_new = 0.0;
        for i in 0..n {
            z[i] = r[i] / op.diag[i];
            rz_new += r[i] * z[i];
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinSolveError::CgNoConvergence {
        residual: res / b_norm,
        iters: max_iters,
    })
}

/// Reusable CG work arrays, kept across time steps.
#[derive(Default)]
pub struct CgScratch {
    buf: Vec<f64>,
    n: usize,
}

impl CgScratch {
    fn resize(&mut self, n: usize) {
        if self.n != n {
            self.buf = vec![0.0; 4 * n];
            self.n = n;
        }
    }
    fn parts(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let n = self.n;
        let (a, rest) = self.buf.split_at_mut(n);
        let (b, rest) = rest.split_at_mut(n);
        let (c, d) = rest.split_at_mut(n);
        (a, b, c, d)
    }
}
