//! Small dense kernels used on the hot path of the recursive estimators.
//!
//! Matrices are row-major `&[f64]` of size `k * k`. Nothing here allocates
//! except the scratch owned by [`CholeskyWorkspace`].

/// Reciprocal-condition floor below which a cross-product matrix is treated
/// as singular.
pub const RCOND_FLOOR: f64 = 1e-12;

/// Scratch buffers for solving `G θ = b` with `G` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct CholeskyWorkspace {
    k: usize,
    factor: Vec<f64>,
    scale: Vec<f64>,
    rhs: Vec<f64>,
}

impl CholeskyWorkspace {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            factor: vec![0.0; k * k],
            scale: vec![0.0; k],
            rhs: vec![0.0; k],
        }
    }

    /// Solves `gram · out = cross` after Jacobi equilibration.
    ///
    /// Returns `false` when the equilibrated matrix has a Cholesky pivot below
    /// [`RCOND_FLOOR`] (the pivots bound the smallest eigenvalue from above, and
    /// the equilibrated largest eigenvalue is at most `k`).
    pub fn solve(&mut self, gram: &[f64], cross: &[f64], out: &mut [f64]) -> bool {
        let k = self.k;
        debug_assert_eq!(gram.len(), k * k);
        for i in 0..k {
            let d = gram[i * k + i];
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            self.scale[i] = 1.0 / d.sqrt();
        }
        for i in 0..k {
            for j in 0..=i {
                self.factor[i * k + j] = gram[i * k + j] * self.scale[i] * self.scale[j];
            }
        }
        // In-place lower Cholesky.
        for j in 0..k {
            let mut diag = self.factor[j * k + j];
            for p in 0..j {
                diag -= self.factor[j * k + p] * self.factor[j * k + p];
            }
            if !(diag > RCOND_FLOOR) {
                return false;
            }
            let ljj = diag.sqrt();
            self.factor[j * k + j] = ljj;
            for i in (j + 1)..k {
                let mut v = self.factor[i * k + j];
                for p in 0..j {
                    v -= self.factor[i * k + p] * self.factor[j * k + p];
                }
                self.factor[i * k + j] = v / ljj;
            }
        }
        for i in 0..k {
            let mut v = cross[i] * self.scale[i];
            for p in 0..i {
                v -= self.factor[i * k + p] * self.rhs[p];
            }
            self.rhs[i] = v / self.factor[i * k + i];
        }
        for i in (0..k).rev() {
            let mut v = self.rhs[i];
            for p in (i + 1)..k {
                v -= self.factor[p * k + i] * self.rhs[p];
            }
            self.rhs[i] = v / self.factor[i * k + i];
        }
        for i in 0..k {
            out[i] = self.rhs[i] * self.scale[i];
        }
        true
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
