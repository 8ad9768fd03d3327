//! The sparse difference operator mapping calcium to spikes and the
//! tridiagonal systems built from it.
//!
//! The operator M is the T×T lower-bidiagonal matrix with 1 on the diagonal
//! and −γ on the subdiagonal (row 0 carries only the diagonal entry), so
//! (MC)_0 = C_0 and (MC)_t = C_t − γ C_{t−1}. It inverts the calcium
//! recursion, and Mᵀ·diag(w)·M is tridiagonal, which keeps every Newton
//! step O(T).

use crate::error::{Error, Result};

/// The bidiagonal difference operator, stored as its two defining scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffOperator {
    gamma: f64,
    len: usize,
}

impl DiffOperator {
    pub fn new(gamma: f64, len: usize) -> Self {
        debug_assert!(gamma.is_finite());
        debug_assert!(len >= 1);
        Self { gamma, len }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Applies M: out_0 = c_0, out_t = c_t − γ c_{t−1}.
    ///
    /// Nonnegativity of the result is not enforced here; keeping the iterate
    /// inside the feasible region is the solver's job.
    pub fn apply(&self, calcium: &[f64]) -> Result<Vec<f64>> {
        self.check_len(calcium)?;
        let mut out = Vec::with_capacity(self.len);
        let mut prev = 0.0;
        for &c in calcium {
            out.push(c - self.gamma * prev);
            prev = c;
        }
        Ok(out)
    }

    /// Applies Mᵀ: out_t = v_t − γ v_{t+1} for t < T−1, out_{T−1} = v_{T−1}.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let mut out = Vec::with_capacity(self.len);
        for t in 0..self.len {
            let next = if t + 1 < self.len {
                self.gamma * v[t + 1]
            } else {
                0.0
            };
            out.push(v[t] - next);
        }
        Ok(out)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len {
            return Err(Error::SizeMismatch {
                expected: self.len,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

/// Assembles diag_add·I + Mᵀ·diag(weights)·M as a tridiagonal matrix.
///
/// The weights must be strictly positive and finite; a violation means the
/// iterate has left the feasible interior.
pub fn assemble_hessian(op: &DiffOperator, weights: &[f64], diag_add: f64) -> Result<Tridiag> {
    if weights.len() != op.len() {
        return Err(Error::SizeMismatch {
            expected: op.len(),
            actual: weights.len(),
        });
    }
    if !(diag_add >= 0.0 && diag_add.is_finite()) {
        return Err(Error::Domain(format!(
            "diagonal shift must be nonnegative and finite, got {diag_add}"
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Infeasible(format!(
            "weight {} at index {i} is not strictly positive",
            weights[i]
        )));
    }
    let n = op.len();
    let gamma = op.gamma();
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n {
        // column t of M carries 1 in row t and −γ in row t+1
        let mut d = diag_add + weights[t];
        if t + 1 < n {
            d += gamma * gamma * weights[t + 1];
            off.push(-gamma * weights[t + 1]);
        }
        diag.push(d);
    }
    Tridiag::new(off.clone(), diag, off)
}

/// A square tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiag {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::Degenerate("empty system".into()));
        }
        if lower.len() != n - 1 {
            return Err(Error::SizeMismatch {
                expected: n - 1,
                actual: lower.len(),
            });
        }
        if upper.len() != n - 1 {
            return Err(Error::SizeMismatch {
                expected: n - 1,
                actual: upper.len(),
            });
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Matrix-vector product, mostly useful for residual checks.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if x.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: x.len(),
            });
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Solves the system by sequential tridiagonal elimination in O(T).
    ///
    /// No pivoting: the systems built by `assemble_hessian` are symmetric
    /// positive definite. A zero pivot is reported as a singular system.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: rhs.len(),
            });
        }
        let mut upper = vec![0.0; n.saturating_sub(1)];
        let mut x = vec![0.0; n];

        let mut piv = self.diag[0];
        if piv == 0.0 {
            return Err(Error::Singular { row: 0 });
        }
        if n > 1 {
            upper[0] = self.upper[0] / piv;
        }
        x[0] = rhs[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i - 1] * upper[i - 1];
            if piv == 0.0 {
                return Err(Error::Singular { row: i });
            }
            if i + 1 < n {
                upper[i] = self.upper[i] / piv;
            }
            x[i] = (rhs[i] - self.lower[i - 1] * x[i - 1]) / piv;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= upper[i] * x[i + 1];
        }
        Ok(x)
    }
}
