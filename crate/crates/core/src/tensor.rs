//! Dense numerics for the three modules.
//!
//! Matrices are row-major with one row per output node, so a layer with
//! `R` nodes fed by `n` inputs is an `R x n` matrix. Vectors are plain
//! `Vec<f64>`; everything runs in 64-bit floats.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before any log.
pub const PROB_FLOOR: f64 = 1e-12;

pub type Vector = Vec<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AcdcError::dim("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(AcdcError::dim("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `W x`
    pub fn matvec(&self, x: &[f64]) -> Vector {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| dot(self.row(r), x))
            .collect()
    }

    /// `W^T y`
    pub fn t_matvec(&self, y: &[f64]) -> Vector {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `W += scale * a b^T` where `a` spans rows and `b` spans columns.
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, &bc) in row.iter_mut().zip(b) {
                *w += s * bc;
            }
        }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(AcdcError::dim("Matrix::push_row", self.cols, row.len()));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn remove_row(&mut self, r: usize) {
        assert!(r < self.rows, "row {r} out of range for {} rows", self.rows);
        self.data.drain(r * self.cols..(r + 1) * self.cols);
        self.rows -= 1;
    }

    /// Appends one all-zero column.
    pub fn push_zero_col(&mut self) {
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.push(0.0);
        }
        self.data = data;
        self.cols = cols;
    }

    pub fn remove_col(&mut self, c: usize) {
        assert!(c < self.cols, "column {c} out of range for {} cols", self.cols);
        let cols = self.cols - 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend_from_slice(&row[..c]);
            data.extend_from_slice(&row[c + 1..]);
        }
        self.data = data;
        self.cols = cols;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W x + b`, checking every dimension.
pub fn affine(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vector> {
    if x.len() != w.cols() {
        return Err(AcdcError::dim("affine (input)", w.cols(), x.len()));
    }
    if b.len() != w.rows() {
        return Err(AcdcError::dim("affine (bias)", w.rows(), b.len()));
    }
    Ok(affine_unchecked(x, w, b))
}

#[inline]
pub(crate) fn affine_unchecked(x: &[f64], w: &Matrix, b: &[f64]) -> Vector {
    let mut z = w.matvec(x);
    for (zi, bi) in z.iter_mut().zip(b) {
        *zi += bi;
    }
    z
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vector {
    x.iter().copied().map(sigmoid_scalar).collect()
}

pub fn softmax(x: &[f64]) -> Vector {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean squared error over a sigmoid output map.
    Mse,
    /// Binary cross-entropy over a sigmoid output map.
    BinaryLog,
    /// Categorical cross-entropy over a softmax output map.
    MulticlassLog,
}

/// Loss value and its gradient with respect to the pre-activation of the
/// output map paired with `kind` (sigmoid for `Mse` and `BinaryLog`,
/// softmax for `MulticlassLog`).
pub fn loss(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<(f64, Vector)> {
    if pred.len() != target.len() {
        return Err(AcdcError::dim("loss", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(AcdcError::Precondition("loss on empty vector".into()));
    }
    match kind {
        LossKind::Mse => {
            let n = pred.len() as f64;
            let mut total = 0.0;
            let grad = pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    let d = p - t;
                    total += d * d;
                    2.0 / n * d * p * (1.0 - p)
                })
                .collect();
            Ok((total / n, grad))
        }
        LossKind::BinaryLog => {
            check_probabilities("binary-log", pred)?;
            let mut total = 0.0;
            let grad = pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                    total -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
                    p - t
                })
                .collect();
            Ok((total, grad))
        }
        LossKind::MulticlassLog => {
            check_probabilities("multiclass-log", pred)?;
            let sum: f64 = pred.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(AcdcError::NumericGuard {
                    op: "multiclass-log",
                    detail: format!("probabilities sum to {sum}"),
                });
            }
            let mut total = 0.0;
            let grad = pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    if t != 0.0 {
                        total -= t * p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln();
                    }
                    p - t
                })
                .collect();
            Ok((total, grad))
        }
    }
}

fn check_probabilities(op: &'static str, pred: &[f64]) -> Result<()> {
    match pred.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(AcdcError::NumericGuard {
            op,
            detail: format!("probability {p} outside [0, 1]"),
        }),
        None => Ok(()),
    }
}

/// Glorot-uniform `fan_out x fan_in` matrix with bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_sample<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    assert!(fan_in >= 1 && fan_out >= 1, "xavier_sample needs positive fans");
    let data = xavier_row(fan_in * fan_out, fan_in, fan_out, rng);
    Matrix {
        rows: fan_out,
        cols: fan_in,
        data,
    }
}

/// `len` Glorot-uniform draws for a layer with the given fans.
pub fn xavier_row<R: Rng + ?Sized>(len: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Vector {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// `v <- momentum * v - lr * g; p <- p + v`
pub fn sgd_momentum_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(AcdcError::dim("sgd_momentum_step (grads)", params.len(), grads.len()));
    }
    if velocity.len() != params.len() {
        return Err(AcdcError::dim(
            "sgd_momentum_step (velocity)",
            params.len(),
            velocity.len(),
        ));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
    Ok(())
}

/// Central-difference gradient of `f` at `params`. Test oracle only.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], eps: f64) -> Vector
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0);
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `||a - b|| / max(||a|| + ||b||, tiny)`; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na + nb;
    if denom < 1e-300 {
        0.0
    } else {
        diff / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_zero_identity_and_hand_values() {
        let x = [1.0, 2.0];
        let z = affine(&x, &Matrix::zeros(3, 2), &[0.0; 3]).unwrap();
        assert_eq!(z, vec![0.0; 3]);

        let z = affine(&x, &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(z, vec![1.0, 2.0]);

        let w = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(affine(&x, &w, &[0.5]).unwrap(), vec![3.5]);
    }

    #[test]
    fn affine_rejects_mismatch() {
        let w = Matrix::zeros(2, 3);
        assert!(matches!(
            affine(&[1.0, 2.0], &w, &[0.0, 0.0]),
            Err(AcdcError::Dimension { .. })
        ));
        assert!(affine(&[1.0, 2.0, 3.0], &w, &[0.0]).is_err());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let big = sigmoid_scalar(40.0);
        assert!(big <= 1.0 && big > 0.999_999);
        assert!(sigmoid_scalar(-800.0) >= 0.0);
        // 1 / (1 + e^-0.6237)
        assert_abs_diff_eq!(sigmoid_scalar(0.6237), 0.6511, epsilon = 5e-5);
    }

    #[test]
    fn loss_hand_values() {
        let (l, g) = loss(LossKind::Mse, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);

        let (l, _) = loss(LossKind::MulticlassLog, &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-11);

        let (l, g) = loss(LossKind::BinaryLog, &[0.5], &[1.0]).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(g, vec![-0.5]);
    }

    #[test]
    fn log_losses_guard_bad_probabilities() {
        assert!(matches!(
            loss(LossKind::BinaryLog, &[1.5], &[1.0]),
            Err(AcdcError::NumericGuard { .. })
        ));
        assert!(loss(LossKind::BinaryLog, &[f64::NAN], &[1.0]).is_err());
        assert!(loss(LossKind::MulticlassLog, &[0.5, 0.6], &[1.0, 0.0]).is_err());
        // exact 0 and 1 survive thanks to clamping
        let (l, _) = loss(LossKind::BinaryLog, &[0.0], &[1.0]).unwrap();
        assert!(l.is_finite() && l > 27.0);
    }

    /// Each loss composed with its output map, differentiated numerically
    /// with respect to the pre-activation.
    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 1 + trial % 5;
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();

            let t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let (_, g) = loss(LossKind::Mse, &sigmoid(&z), &t).unwrap();
            let fd = finite_diff_grad(|zz| loss(LossKind::Mse, &sigmoid(zz), &t).unwrap().0, &z, 1e-6);
            assert!(relative_error(&g, &fd) < 1e-4, "mse trial {trial}");

            let tb: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>() as u8)).collect();
            let (_, g) = loss(LossKind::BinaryLog, &sigmoid(&z), &tb).unwrap();
            let fd = finite_diff_grad(
                |zz| loss(LossKind::BinaryLog, &sigmoid(zz), &tb).unwrap().0,
                &z,
                1e-6,
            );
            assert!(relative_error(&g, &fd) < 1e-4, "binary trial {trial}");

            let mut tm = vec![0.0; n];
            tm[rng.random_range(0..n)] = 1.0;
            let (_, g) = loss(LossKind::MulticlassLog, &softmax(&z), &tm).unwrap();
            let fd = finite_diff_grad(
                |zz| loss(LossKind::MulticlassLog, &softmax(zz), &tm).unwrap().0,
                &z,
                1e-6,
            );
            assert!(relative_error(&g, &fd) < 1e-4, "multiclass trial {trial}");
        }
    }

    #[test]
    fn xavier_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = xavier_sample(3, 3, &mut rng);
        assert_eq!(m.shape(), (3, 3));
        assert!(m.data().iter().all(|v| v.abs() <= 1.0));

        let a = xavier_sample(7, 4, &mut ChaCha8Rng::seed_from_u64(99));
        let b = xavier_sample(7, 4, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn xavier_variance_matches_glorot() {
        let (fan_in, fan_out) = (20, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = xavier_row(100_000, fan_in, fan_out, &mut rng);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        let expected = 2.0 / (fan_in + fan_out) as f64;
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn sgd_momentum_cases() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0, 0.0];
        sgd_momentum_step(&mut p, &[0.0, 0.0], &mut v, 0.01, 0.95).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![1.0];
        let mut v = vec![0.0];
        sgd_momentum_step(&mut p, &[2.0], &mut v, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.8, epsilon = 1e-15);

        let mut p = vec![0.0];
        let mut v = vec![0.0];
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.01, 0.95).unwrap();
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.01, 0.95).unwrap();
        assert_abs_diff_eq!(p[0], -0.0295, epsilon = 1e-15);

        assert!(sgd_momentum_step(&mut p, &[1.0, 2.0], &mut v, 0.01, 0.95).is_err());
    }

    #[test]
    fn finite_diff_on_closed_forms() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5);
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-6);
        let g = finite_diff_grad(|p| 2.0 * p[0] - 5.0 * p[1] + 1.0, &[0.3, -4.0], 0.5);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], -5.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_structural_edits() {
        let mut m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        m.push_zero_col();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.row(1), &[3.0, 4.0, 0.0]);
        m.push_row(&[5.0, 6.0, 7.0]).unwrap();
        m.remove_col(0);
        assert_eq!(m.data(), &[2.0, 0.0, 4.0, 0.0, 6.0, 7.0]);
        m.remove_row(1);
        assert_eq!(m.data(), &[2.0, 0.0, 6.0, 7.0]);
        assert_eq!(m.t_matvec(&[1.0, 1.0]), vec![8.0, 7.0]);
    }
}
