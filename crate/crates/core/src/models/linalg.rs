//! Small dense solvers for normal equations.

use ndarray::{Array1, Array2};

/// In-place Cholesky factorization of a symmetric matrix. Returns `false`
/// when a pivot is not safely positive.
fn cholesky(a: &mut Array2<f64>) -> bool {
    let p = a.nrows();
    let scale = (0..p).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > 1e-13 * scale) {
            return false;
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..p {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / d;
        }
    }
    true
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let p = l.nrows();
    let mut z = b.clone();
    for i in 0..p {
        let mut v = z[i];
        for k in 0..i {
            v -= l[[i, k]] * z[k];
        }
        z[i] = v / l[[i, i]];
    }
    for i in (0..p).rev() {
        let mut v = z[i];
        for k in i + 1..p {
            v -= l[[k, i]] * z[k];
        }
        z[i] = v / l[[i, i]];
    }
    z
}

/// Solution of a symmetric positive semi-definite system.
#[derive(Debug, Clone)]
pub(crate) struct SpdSolution {
    pub x: Array1<f64>,
    /// Ridge added to the diagonal (0 when the system was well posed).
    pub jitter: f64,
}

/// Solves `a x = b`. Singular systems get a diagonal ridge starting at
/// 1e-10 and growing by 10x until the factorization succeeds.
pub(crate) fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> SpdSolution {
    let p = a.nrows();
    if p == 0 {
        return SpdSolution { x: Array1::zeros(0), jitter: 0.0 };
    }
    let mut jitter = 0.0;
    loop {
        let mut l = a.clone();
        for i in 0..p {
            l[[i, i]] += jitter;
        }
        if cholesky(&mut l) {
            return SpdSolution { x: cholesky_solve(&l, b), jitter };
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e6 {
            // Only reachable with non-finite input, which callers reject.
            return SpdSolution { x: Array1::zeros(p), jitter };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_well_posed_system() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![1.0, 2.0];
        let s = solve_spd(&a, &b);
        assert_eq!(s.jitter, 0.0);
        let r = a.dot(&s.x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn singular_system_gets_jitter() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![2.0, 2.0];
        let s = solve_spd(&a, &b);
        assert!(s.jitter >= 1e-10);
        assert!((s.x[0] + s.x[1] - 2.0).abs() < 1e-6);
    }
}
