//! Symmetric tridiagonal matrices: products, direct solves and the Sturm
//! sequence used for eigenvalue bisection.

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1), "off-diagonal length");
        SymTridiag { diag, off }
    }

    /// `tridiag(off, diag, off)` with constant entries.
    pub fn constant(n: usize, diag: f64, off: f64) -> Self {
        SymTridiag::new(vec![diag; n], vec![off; n.saturating_sub(1)])
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// Leading principal submatrix of order `k`.
    pub fn leading(&self, k: usize) -> SymTridiag {
        SymTridiag::new(self.diag[..k].to_vec(), self.off[..k.saturating_sub(1)].to_vec())
    }

    /// Solves `T x = b` in place by Thomas elimination. Returns `false` when a
    /// zero pivot is met.
    pub fn solve_in_place(&self, b: &mut [f64], work: &mut [f64]) -> bool {
        thomas(&self.diag, &self.off, b, work)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        sturm_count(&self.diag, &self.off, x)
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        let pad = f64::EPSILON * (lo.abs().max(hi.abs()) + 1e-300);
        lo -= pad;
        hi += pad;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if hi - lo <= 1e-15 * lo.abs().max(hi.abs()) {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalue(0)
    }
}

/// Thomas algorithm for a symmetric tridiagonal system; `b` is overwritten by
/// the solution, `work` needs the same length.
pub fn thomas(diag: &[f64], off: &[f64], b: &mut [f64], work: &mut [f64]) -> bool {
    let n = diag.len();
    if n == 0 {
        return true;
    }
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return false;
    }
    b[0] /= piv;
    for i in 1..n {
        work[i] = off[i - 1] / piv;
        piv = diag[i] - off[i - 1] * work[i];
        if piv == 0.0 || !piv.is_finite() {
            return false;
        }
        b[i] = (b[i] - off[i - 1] * b[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        b[i] -= work[i + 1] * b[i + 1];
    }
    true
}

fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let coupling = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] / q };
        q = diag[i] - x - coupling;
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs() + f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_by_one() {
        let t = SymTridiag::new(vec![3.5], vec![]);
        assert_eq!(t.min_eigenvalue(), 3.5);
    }

    #[test]
    fn laplacian_min_eigenvalue() {
        for n in [2usize, 5, 17, 100] {
            let t = SymTridiag::constant(n, 2.0, -1.0);
            let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert_relative_eq!(t.min_eigenvalue(), exact, max_relative = 1e-12);
            let top = 2.0 - 2.0 * (n as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert_relative_eq!(t.eigenvalue(n - 1), top, max_relative = 1e-12);
        }
        let t5 = SymTridiag::constant(5, 2.0, -1.0);
        assert!((t5.min_eigenvalue() - 0.2679491924311227).abs() < 1e-13);
    }

    #[test]
    fn thomas_solves() {
        let t = SymTridiag::new(vec![4.0, 5.0, 6.0, 7.0], vec![1.0, -2.0, 0.5]);
        let x = [1.0, -2.0, 3.0, 0.25];
        let mut b = vec![0.0; 4];
        t.matvec(&x, &mut b);
        let mut w = vec![0.0; 4];
        assert!(t.solve_in_place(&mut b, &mut w));
        for (a, e) in b.iter().zip(x) {
            assert!((a - e).abs() < 1e-14);
        }
    }
}
