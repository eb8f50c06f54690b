//! Sparse `L·D·Lᵀ` factorization for complex-symmetric matrices.
//!
//! Up-looking elimination-tree algorithm (symbolic pass, then numeric rows)
//! with a caller-supplied fill-reducing permutation. No pivoting: the FDFD
//! operators factored here are complex symmetric with absorbing boundaries,
//! and a vanishing or non-finite pivot is reported as a numerical failure.
//! `Aᵀ = A`, so the same factor solves transposed and conjugate systems.

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

const NONE: usize = usize::MAX;

/// Symmetric matrix in compressed rows holding both triangles.
#[derive(Clone, Debug)]
pub struct SymmetricCsr<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Cplx<T>>,
}

impl<T: Real> SymmetricCsr<T> {
    pub fn matvec(&self, x: &[Cplx<T>]) -> Vec<Cplx<T>> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .fold(Cplx::new(T::zero(), T::zero()), |acc, p| acc + self.vals[p] * x[self.cols[p]])
            })
            .collect()
    }
}

/// Factor `P·A·Pᵀ = L·D·Lᵀ`, `L` unit lower triangular stored by columns.
#[derive(Clone, Debug)]
pub struct LdlFactor<T> {
    n: usize,
    order: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<Cplx<T>>,
    d: Vec<Cplx<T>>,
}

impl<T: Real> LdlFactor<T> {
    /// Factors `a` eliminating rows in `order` (`order[new] = old`).
    pub fn factor(a: &SymmetricCsr<T>, order: &[usize]) -> Result<Self> {
        let n = a.n;
        if order.len() != n {
            return Err(Error::Argument(format!("ordering length {} != matrix size {n}", order.len())));
        }
        if n > u32::MAX as usize {
            return Err(Error::Argument("matrix too large for 32-bit row indices".into()));
        }
        let iperm = super::ordering::invert(order);

        // Symbolic: elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let old = order[k];
            for p in a.row_ptr[old]..a.row_ptr[old + 1] {
                let mut i = iperm[a.cols[p]];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let nnz = lp[n];

        // Numeric.
        let zero = Cplx::new(T::zero(), T::zero());
        let mut li = vec![0u32; nnz];
        let mut lx = vec![zero; nnz];
        let mut d = vec![zero; n];
        let mut y = vec![zero; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|c| *c = 0);
        flag.iter_mut().for_each(|f| *f = NONE);

        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let old = order[k];
            for p in a.row_ptr[old]..a.row_ptr[old + 1] {
                let mut i = iperm[a.cols[p]];
                if i > k {
                    continue;
                }
                y[i] += a.vals[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = zero;
            while top < n {
                let i = pattern[top];
                top += 1;
                let yi = y[i];
                y[i] = zero;
                let start = lp[i];
                let end = start + lnz[i];
                for p in start..end {
                    let r = li[p] as usize;
                    y[r] -= lx[p] * yi;
                }
                let lki = yi / d[i];
                dk -= lki * yi;
                li[end] = k as u32;
                lx[end] = lki;
                lnz[i] += 1;
            }
            if !(dk.norm_sqr() > T::zero()) || !dk.re.is_finite() || !dk.im.is_finite() {
                return Err(Error::Numerical(format!("zero or non-finite pivot at elimination step {k} of {n}")));
            }
            d[k] = dk;
        }
        Ok(Self { n, order: order.to_vec(), lp, li, lx, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored off-diagonal entries of `L`.
    pub fn nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let mut x: Vec<Cplx<T>> = self.order.iter().map(|&o| b[o]).collect();
        for j in 0..self.n {
            let xj = x[j];
            if xj.re == T::zero() && xj.im == T::zero() {
                continue;
            }
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p] as usize;
                x[r] -= self.lx[p] * xj;
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= *dj;
        }
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * x[self.li[p] as usize];
            }
            x[j] = acc;
        }
        let mut out = vec![Cplx::new(T::zero(), T::zero()); self.n];
        for (k, &o) in self.order.iter().enumerate() {
            out[o] = x[k];
        }
        out
    }
}
