//! Self-evolving hidden layers: streaming input moments, probit-approximated
//! expected outputs, bias/variance tracking, and the SPC-style grow/prune
//! conditions together with the structural edits they trigger.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::net::{ModuleKind, Params};
use crate::tensor::{affine_unchecked, sigmoid, xavier_row, Matrix, Vector};

/// Floor applied to stored minimum standard deviations.
pub const SIGMA_MIN_FLOOR: f64 = 1e-12;

/// Cumulative per-feature moments of every input fed to a module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputMoments {
    mean: Vector,
    m2: Vector,
    raw_second: Vector,
    count: u64,
}

impl InputMoments {
    pub fn new(dim: usize) -> Self {
        InputMoments {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            raw_second: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Mean of `x^2`, per feature.
    pub fn raw_second(&self) -> &[f64] {
        &self.raw_second
    }

    /// Population variance, per feature.
    pub fn variance(&self) -> Vector {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|m| (m / n).max(0.0)).collect()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(AcdcError::dim("InputMoments::update", self.dim(), x.len()));
        }
        self.count += 1;
        let n = self.count as f64;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
            self.raw_second[i] += (x[i] * x[i] - self.raw_second[i]) / n;
        }
        Ok(())
    }
}

/// `mu / sqrt(1 + pi * var / 8)`, elementwise.
pub fn probit_rescale(mean: &[f64], var: &[f64]) -> Vector {
    mean.iter()
        .zip(var)
        .map(|(m, v)| m / (1.0 + PI * v / 8.0).sqrt())
        .collect()
}

/// Expected module output `E[y]` and the second-moment estimate `E[y^2]`.
///
/// The mean input is rescaled by the probit factor before entering the
/// encoder and then pushed deterministically through the module. `E[y^2]`
/// reuses the same path with the per-feature mean of `x^2` in place of the
/// mean.
pub fn expected_output(
    kind: ModuleKind,
    moments: &InputMoments,
    params: &Params,
) -> Result<(Vector, Vector)> {
    if moments.count() == 0 {
        return Err(AcdcError::Precondition(
            "expected_output needs at least one observed sample".into(),
        ));
    }
    let var = moments.variance();
    let first = probit_rescale(moments.mean(), &var);
    let second = probit_rescale(moments.raw_second(), &var);
    Ok((params.propagate(kind, &first), params.propagate(kind, &second)))
}

/// Squared bias and variance averaged over output dimensions.
///
/// Per-output variance estimates are clamped at zero.
pub fn bias_variance(expected: &[f64], expected_sq: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    if expected.len() != target.len() {
        return Err(AcdcError::dim("bias_variance (target)", expected.len(), target.len()));
    }
    if expected_sq.len() != expected.len() {
        return Err(AcdcError::dim(
            "bias_variance (second moment)",
            expected.len(),
            expected_sq.len(),
        ));
    }
    let n = expected.len() as f64;
    let bias = expected
        .iter()
        .zip(target)
        .map(|(e, y)| (e - y).powi(2))
        .sum::<f64>()
        / n;
    let var = expected
        .iter()
        .zip(expected_sq)
        .map(|(e, e2)| (e2 - e * e).max(0.0))
        .sum::<f64>()
        / n;
    Ok((bias, var))
}

/// Shape of the threshold scalars as a function of the current bias or variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// `a1 * (-x) + a2`
    Linear,
    /// `a1 * exp(-x) + a2`
    #[default]
    Exponential,
}

impl ThresholdRule {
    pub fn apply(self, x: f64, alpha1: f64, alpha2: f64) -> f64 {
        match self {
            ThresholdRule::Linear => alpha1 * (-x) + alpha2,
            ThresholdRule::Exponential => alpha1 * (-x).exp() + alpha2,
        }
    }
}

/// `(beta, lambda) = (a1(-bias) + a2, 2(a1(-var) + a2))`.
pub fn spc_thresholds(bias: f64, var: f64, alpha1: f64, alpha2: f64) -> (f64, f64) {
    spc_thresholds_with(ThresholdRule::Linear, bias, var, alpha1, alpha2)
}

pub fn spc_thresholds_with(
    rule: ThresholdRule,
    bias: f64,
    var: f64,
    alpha1: f64,
    alpha2: f64,
) -> (f64, f64) {
    (
        rule.apply(bias, alpha1, alpha2),
        2.0 * rule.apply(var, alpha1, alpha2),
    )
}

/// Scalar Welford accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinTracker {
    pub mean: f64,
    pub std: f64,
}

impl MinTracker {
    fn at(stat: &RunningStat) -> Self {
        MinTracker {
            mean: stat.mean(),
            std: stat.std().max(SIGMA_MIN_FLOOR),
        }
    }

    fn track(&mut self, stat: &RunningStat) {
        self.mean = self.mean.min(stat.mean());
        // a floored std means the tracker has not yet seen a spread
        self.std = if self.std <= SIGMA_MIN_FLOOR {
            stat.std().max(SIGMA_MIN_FLOOR)
        } else {
            self.std.min(stat.std()).max(SIGMA_MIN_FLOOR)
        };
    }
}

/// Running bias/variance statistics with their minimum trackers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpcStats {
    bias: RunningStat,
    var: RunningStat,
    bias_min: Option<MinTracker>,
    var_min: Option<MinTracker>,
}

/// Outcome of one SPC evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpcDecision {
    pub grow: bool,
    pub prune: bool,
}

impl SpcStats {
    pub fn count(&self) -> u64 {
        self.bias.count()
    }

    pub fn bias(&self) -> &RunningStat {
        &self.bias
    }

    pub fn var(&self) -> &RunningStat {
        &self.var
    }

    pub fn bias_min(&self) -> Option<MinTracker> {
        self.bias_min
    }

    pub fn var_min(&self) -> Option<MinTracker> {
        self.var_min
    }

    /// Folds one (bias, variance) observation into the running statistics
    /// and min trackers.
    pub fn push(&mut self, bias: f64, var: f64) {
        self.bias.push(bias);
        self.var.push(var);
        match &mut self.bias_min {
            Some(m) => m.track(&self.bias),
            None => self.bias_min = Some(MinTracker::at(&self.bias)),
        }
        match &mut self.var_min {
            Some(m) => m.track(&self.var),
            None => self.var_min = Some(MinTracker::at(&self.var)),
        }
    }

    pub fn reset_bias_min(&mut self) {
        self.bias_min = Some(MinTracker::at(&self.bias));
    }

    pub fn reset_var_min(&mut self) {
        self.var_min = Some(MinTracker::at(&self.var));
    }

    /// Evaluates both conditions, re-initializing the min trackers of every
    /// condition that fired.
    pub fn evaluate(&mut self, beta: f64, lambda: f64) -> SpcDecision {
        let decision = SpcDecision {
            grow: should_grow(self, beta),
            prune: should_prune(self, lambda),
        };
        if decision.grow {
            self.reset_bias_min();
        }
        if decision.prune {
            self.reset_var_min();
        }
        decision
    }
}

/// `mu_bias + sigma_bias >= mu_bias_min + beta * sigma_bias_min`
pub fn should_grow(stats: &SpcStats, beta: f64) -> bool {
    match stats.bias_min {
        Some(min) => stats.bias.mean() + stats.bias.std() >= min.mean + beta * min.std,
        None => false,
    }
}

/// `mu_var + sigma_var >= mu_var_min + lambda * sigma_var_min`
pub fn should_prune(stats: &SpcStats, lambda: f64) -> bool {
    match stats.var_min {
        Some(min) => stats.var.mean() + stats.var.std() >= min.mean + lambda * min.std,
        None => false,
    }
}

/// Mutable view of one evolving hidden layer: its incoming weights and
/// biases plus every matrix that consumes its output column-wise.
pub struct LayerMut<'a> {
    pub incoming: &'a mut Matrix,
    pub bias: &'a mut Vector,
    pub downstream: Vec<&'a mut Matrix>,
}

impl LayerMut<'_> {
    pub fn width(&self) -> usize {
        self.incoming.rows()
    }

    fn check(&self) -> Result<()> {
        let r = self.width();
        if self.bias.len() != r {
            return Err(AcdcError::dim("evolving layer (bias)", r, self.bias.len()));
        }
        for d in &self.downstream {
            if d.cols() != r {
                return Err(AcdcError::dim("evolving layer (downstream)", r, d.cols()));
            }
        }
        Ok(())
    }
}

/// Appends one Xavier-initialized node: a new incoming row and bias entry,
/// a zero column in every downstream matrix, and zero momentum for all of it.
pub fn grow_node<R: Rng + ?Sized>(layer: LayerMut<'_>, velocity: LayerMut<'_>, rng: &mut R) -> Result<()> {
    layer.check()?;
    velocity.check()?;
    let fan_in = layer.incoming.cols();
    let fan_out = layer.width() + 1;
    let mut draws = xavier_row(fan_in + 1, fan_in, fan_out, rng);
    let bias = draws.pop().expect("fan_in + 1 draws");

    layer.incoming.push_row(&draws)?;
    layer.bias.push(bias);
    for d in layer.downstream {
        d.push_zero_col();
    }

    velocity.incoming.push_row(&vec![0.0; fan_in])?;
    velocity.bias.push(0.0);
    for d in velocity.downstream {
        d.push_zero_col();
    }
    Ok(())
}

/// Removes hidden node `node` from the layer and its momentum mirror.
pub fn remove_node(layer: LayerMut<'_>, velocity: LayerMut<'_>, node: usize) -> Result<()> {
    layer.check()?;
    velocity.check()?;
    if node >= layer.width() {
        return Err(AcdcError::Precondition(format!(
            "node {node} out of range for width {}",
            layer.width()
        )));
    }
    for view in [layer, velocity] {
        view.incoming.remove_row(node);
        view.bias.remove(node);
        for d in view.downstream {
            d.remove_col(node);
        }
    }
    Ok(())
}

/// Probit-rescaled expected activation of every node of a sigmoid layer.
pub fn expected_activations(incoming: &Matrix, bias: &[f64], mean: &[f64], var: &[f64]) -> Vector {
    let z = probit_rescale(mean, var);
    sigmoid(&affine_unchecked(&z, incoming, bias))
}

/// Index of the smallest value; the lowest index wins ties.
pub fn weakest(activations: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in activations.iter().enumerate() {
        match best {
            Some((_, b)) if a >= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

/// Prunes the node with the smallest expected activation. Returns the
/// removed index, or `None` when the layer is down to its last node.
pub fn prune_weakest(
    layer: LayerMut<'_>,
    velocity: LayerMut<'_>,
    input_mean: &[f64],
    input_var: &[f64],
) -> Result<Option<usize>> {
    if layer.width() <= 1 {
        return Ok(None);
    }
    if input_mean.len() != layer.incoming.cols() {
        return Err(AcdcError::dim(
            "prune_weakest (input moments)",
            layer.incoming.cols(),
            input_mean.len(),
        ));
    }
    let acts = expected_activations(layer.incoming, layer.bias, input_mean, input_var);
    let node = weakest(&acts).expect("width >= 2");
    remove_node(layer, velocity, node)?;
    Ok(Some(node))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn moments_single_and_pair() {
        let mut m = InputMoments::new(1);
        m.update(&[4.0]).unwrap();
        assert_eq!(m.mean(), &[4.0]);
        assert_eq!(m.variance(), vec![0.0]);

        let mut m = InputMoments::new(1);
        m.update(&[1.0]).unwrap();
        m.update(&[3.0]).unwrap();
        assert_eq!(m.mean(), &[2.0]);
        assert_eq!(m.variance(), vec![1.0]);
        assert_eq!(m.raw_second(), &[5.0]);
        assert!(m.update(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn moments_of_standard_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut m = InputMoments::new(1);
        for _ in 0..10_000 {
            let x: f64 = StandardNormal.sample(&mut rng);
            m.update(&[x]).unwrap();
        }
        assert!(m.mean()[0].abs() < 0.05);
        assert!((m.variance()[0] - 1.0).abs() < 0.05);
    }

    #[test]
    fn probit_scalar_matches_monte_carlo() {
        // E[sigmoid(x)] for x ~ N(1, 4)
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 1_000_000;
        let mc = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                crate::tensor::sigmoid_scalar(1.0 + 2.0 * z)
            })
            .sum::<f64>()
            / n as f64;
        let w = Matrix::identity(1);
        let approx = expected_activations(&w, &[0.0], &[1.0], &[4.0])[0];
        assert_abs_diff_eq!(probit_rescale(&[1.0], &[4.0])[0], 0.6237, epsilon = 1e-4);
        assert_abs_diff_eq!(approx, 0.651, epsilon = 1e-3);
        assert!((approx - mc).abs() < 0.01, "probit {approx} vs mc {mc}");
    }

    #[test]
    fn bias_variance_hand_values() {
        assert_eq!(bias_variance(&[0.3], &[0.09], &[0.3]).unwrap(), (0.0, 0.0));
        let (b, v) = bias_variance(&[0.5], &[0.3], &[1.0]).unwrap();
        assert_abs_diff_eq!(b, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.05, epsilon = 1e-15);
        assert!(bias_variance(&[0.5], &[0.3, 0.1], &[1.0]).is_err());
    }

    #[test]
    fn thresholds_hand_values() {
        assert_eq!(spc_thresholds(0.0, 0.0, 1.25, 0.75), (0.75, 1.5));
        let (beta, _) = spc_thresholds(0.2, 0.0, 1.25, 0.75);
        assert_abs_diff_eq!(beta, 0.5, epsilon = 1e-15);
        for rule in [ThresholdRule::Linear, ThresholdRule::Exponential] {
            for &(b, v) in &[(0.0, 0.3), (0.7, 0.01), (0.1, 0.1)] {
                let (_, lambda) = spc_thresholds_with(rule, b, v, 1.25, 0.75);
                let (beta_of_var, _) = spc_thresholds_with(rule, v, b, 1.25, 0.75);
                assert_eq!(lambda, 2.0 * beta_of_var);
            }
        }
        let (beta, lambda) = spc_thresholds_with(ThresholdRule::Exponential, 0.0, 0.0, 1.25, 0.75);
        assert_eq!((beta, lambda), (2.0, 4.0));
    }

    fn stats_with(mu: f64, sigma: f64, mu_min: f64, sigma_min: f64) -> SpcStats {
        let mut s = SpcStats::default();
        // two points reproduce a chosen population mean/std
        s.push(mu - sigma, mu - sigma);
        s.push(mu + sigma, mu + sigma);
        let tracker = MinTracker {
            mean: mu_min,
            std: sigma_min,
        };
        s.bias_min = Some(tracker);
        s.var_min = Some(tracker);
        s
    }

    #[test]
    fn grow_and_prune_conditions() {
        let s = stats_with(0.5, 0.2, 0.3, 0.1);
        assert!(should_grow(&s, 0.75));
        assert!(should_prune(&s, 1.5));

        // running == min with beta = 1 sits exactly on the boundary
        let s = stats_with(0.5, 0.2, 0.5, 0.2);
        assert!(should_grow(&s, 1.0));
        assert!(!should_grow(&s, 1.5));
        assert!(!should_grow(&SpcStats::default(), 0.0));
    }

    #[test]
    fn evaluate_resets_fired_trackers_only() {
        let mut s = stats_with(0.5, 0.2, 0.3, 0.1);
        let d = s.evaluate(0.75, 100.0);
        assert!(d.grow && !d.prune);
        let bm = s.bias_min().unwrap();
        assert_eq!(bm.mean, s.bias().mean());
        assert_eq!(bm.std, s.bias().std());
        assert_eq!(s.var_min().unwrap().mean, 0.3);
    }

    #[test]
    fn min_trackers_stay_below_running_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = SpcStats::default();
        for _ in 0..2000 {
            s.push(rng.random::<f64>(), rng.random::<f64>() * 0.1);
            let bm = s.bias_min().unwrap();
            let vm = s.var_min().unwrap();
            assert!(bm.mean <= s.bias().mean());
            assert!(bm.std <= s.bias().std().max(SIGMA_MIN_FLOOR));
            assert!(vm.mean <= s.var().mean());
            assert!(vm.std <= s.var().std().max(SIGMA_MIN_FLOOR));
            s.evaluate(2.0, 4.0);
        }
    }

    fn toy_layer() -> (Matrix, Vector, Matrix) {
        let incoming = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let bias = vec![0.0, 0.1, 0.2];
        let down = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        (incoming, bias, down)
    }

    #[test]
    fn grow_adds_one_node_with_zero_column() {
        let (mut w, mut b, mut d) = toy_layer();
        let (mut vw, mut vb, mut vd) = (Matrix::zeros(3, 2), vec![0.0; 3], Matrix::zeros(1, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        grow_node(
            LayerMut { incoming: &mut w, bias: &mut b, downstream: vec![&mut d] },
            LayerMut { incoming: &mut vw, bias: &mut vb, downstream: vec![&mut vd] },
            &mut rng,
        )
        .unwrap();
        assert_eq!(w.shape(), (4, 2));
        assert_eq!(b.len(), 4);
        assert_eq!(d.shape(), (1, 4));
        assert_eq!(d.get(0, 3), 0.0);
        assert_eq!(vw.shape(), (4, 2));
        assert_eq!(vd.shape(), (1, 4));
        let bound = (6.0f64 / 6.0).sqrt();
        assert!(w.row(3).iter().all(|v| v.abs() <= bound));

        // same seed, same node
        let (mut w2, mut b2, mut d2) = toy_layer();
        let (mut vw2, mut vb2, mut vd2) = (Matrix::zeros(3, 2), vec![0.0; 3], Matrix::zeros(1, 3));
        grow_node(
            LayerMut { incoming: &mut w2, bias: &mut b2, downstream: vec![&mut d2] },
            LayerMut { incoming: &mut vw2, bias: &mut vb2, downstream: vec![&mut vd2] },
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(w, w2);
        assert_eq!(b, b2);
    }

    #[test]
    fn weakest_picks_argmin_with_low_index_ties() {
        assert_eq!(weakest(&[0.9, 0.2]), Some(1));
        assert_eq!(weakest(&[0.4, 0.4, 0.7]), Some(0));
        assert_eq!(weakest(&[]), None);
    }

    #[test]
    fn prune_skips_last_node_and_removes_weakest() {
        let (mut w, mut b, mut d) = toy_layer();
        let (mut vw, mut vb, mut vd) = (Matrix::zeros(3, 2), vec![0.0; 3], Matrix::zeros(1, 3));
        // node 0 sees a strongly negative input -> lowest activation
        let removed = prune_weakest(
            LayerMut { incoming: &mut w, bias: &mut b, downstream: vec![&mut d] },
            LayerMut { incoming: &mut vw, bias: &mut vb, downstream: vec![&mut vd] },
            &[-5.0, 1.0],
            &[0.0, 0.0],
        )
        .unwrap();
        assert_eq!(removed, Some(0));
        assert_eq!(w.shape(), (2, 2));
        assert_eq!(d.row(0), &[2.0, 3.0]);
        assert_eq!(b, vec![0.1, 0.2]);

        let mut w1 = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let mut b1 = vec![0.0];
        let mut vw1 = Matrix::zeros(1, 2);
        let mut vb1 = vec![0.0];
        let removed = prune_weakest(
            LayerMut { incoming: &mut w1, bias: &mut b1, downstream: vec![] },
            LayerMut { incoming: &mut vw1, bias: &mut vb1, downstream: vec![] },
            &[0.0, 0.0],
            &[0.0, 0.0],
        )
        .unwrap();
        assert_eq!(removed, None);
        assert_eq!(w1.rows(), 1);
    }
}
