//! Shared numeric primitives: stable logistic functions, Gauss-Legendre
//! quadrature, eigenvalue helpers and quadratic-form norms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Logistic sigmoid, computed through `exp(-|z|)` so that
/// `sigmoid(z) + sigmoid(-z) == 1.0` holds exactly in floating point.
pub fn sigmoid(z: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z.abs()).exp());
    if z >= 0.0 {
        p
    } else {
        1.0 - p
    }
}

/// Derivative of the sigmoid, `σ'(z) = σ(z)(1 - σ(z))`. Even in `z`.
/// Computed as `q/(1+q)²` with `q = exp(-|z|)`, which stays accurate far
/// into the tails where the product form cancels to zero.
pub fn sigmoid_derivative(z: f64) -> f64 {
    let q = (-z.abs()).exp();
    q / ((1.0 + q) * (1.0 + q))
}

/// `log(1 + exp(z))` with the standard overflow/underflow branches at |z| > 30.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// `log σ(z) = -softplus(-z)`, safe for logits of any magnitude.
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[0, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre recurrence; for the
/// orders used here (n <= 65) they are accurate to machine precision.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root of P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] to [0, 1]; roots come in +/- pairs.
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// All eigenvalues of a symmetric matrix (symmetrized before decomposition
/// to shed rounding asymmetry).
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().cloned().collect()
}

/// Quadratic-form norm `sqrt(v' M v)` for symmetric PSD `M`.
pub fn quadratic_norm(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (v.dot(&(m * v))).max(0.0).sqrt()
}

/// Norm `sqrt(v' M^{-1} v)` via Cholesky solve. Returns `None` when `M` is
/// not positive definite (and `v` is nonzero; the zero vector has norm 0
/// regardless of `M`).
pub fn inverse_quadratic_norm(v: &DVector<f64>, m: &DMatrix<f64>) -> Option<f64> {
    if v.iter().all(|&c| c == 0.0) {
        return Some(0.0);
    }
    let chol = cholesky(m)?;
    let solved = chol.solve(v);
    Some(v.dot(&solved).max(0.0).sqrt())
}

/// Cholesky factorization of the symmetrized input.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    Cholesky::new(sym)
}

/// Ordinary least-squares line fit; returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a line fit");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Mean and standard error of a sample.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 1);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}
