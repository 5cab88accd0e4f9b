//! The three-headed model: a tied-weight denoising autoencoder (DAE) that
//! produces the shared latent space, a domain classifier (DAA) trained
//! through a gradient-reversal boundary, and the class discriminator (DISC).

mod grad;
mod params;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::evolving::{
    self, bias_variance, expected_output, spc_thresholds_with, InputMoments, LayerMut, SpcStats,
    ThresholdRule,
};
use crate::tensor::{sgd_momentum_step, Vector};

pub use grad::{head_grad, reconstruction_grad, GRADIENT_REVERSAL};
pub use params::{Autoencoder, Head, HeadKind, ModuleKind, ParamId, Params};

/// Switches for the four ablation studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Off = study A: no domain classifier, no adversarial signal.
    pub daa_enabled: bool,
    /// Off = study B: widths never change.
    pub evolution_enabled: bool,
    /// On = study C: the encoder starts with one node instead of `ceil(u/2)`.
    pub dae_starts_single_node: bool,
    /// Off = study D: DAA growth no longer forces DISC growth.
    pub daa_signals_disc: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            daa_enabled: true,
            evolution_enabled: true,
            dae_starts_single_node: false,
            daa_signals_disc: true,
        }
    }
}

impl AblationFlags {
    /// Short label: `full`, or the letters of the active ablations.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if !self.daa_enabled {
            s.push('A');
        }
        if !self.evolution_enabled {
            s.push('B');
        }
        if self.dae_starts_single_node {
            s.push('C');
        }
        if !self.daa_signals_disc {
            s.push('D');
        }
        if s.is_empty() {
            "full".into()
        } else {
            s
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub noise_fraction: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub threshold_rule: ThresholdRule,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            learning_rate: 0.01,
            momentum: 0.95,
            noise_fraction: 0.10,
            alpha1: 1.25,
            alpha2: 0.75,
            threshold_rule: ThresholdRule::default(),
        }
    }
}

/// Streaming state driving one module's structural evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleStats {
    pub moments: InputMoments,
    pub spc: SpcStats,
}

impl ModuleStats {
    fn new(dim: usize) -> Self {
        ModuleStats {
            moments: InputMoments::new(dim),
            spc: SpcStats::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub dae: usize,
    pub daa: usize,
    pub disc: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Change {
    Grew,
    Pruned,
}

/// What one module's assessment computed and decided.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub bias: f64,
    pub var: f64,
    pub beta: f64,
    pub lambda: f64,
    pub grow_fired: bool,
    pub prune_fired: bool,
    pub change: Option<Change>,
}

/// Result of one adaptation step; `None` for modules that were not assessed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub dae: Option<Assessment>,
    pub daa: Option<Assessment>,
    pub disc: Option<Assessment>,
    /// DISC grew because DAA did.
    pub disc_forced: bool,
}

impl AdaptReport {
    pub fn change(&self, kind: ModuleKind) -> Option<Change> {
        let a = match kind {
            ModuleKind::Dae => self.dae,
            ModuleKind::Daa => self.daa,
            ModuleKind::Disc => self.disc,
        };
        a.and_then(|a| a.change)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub dae: f64,
    pub daa: f64,
    pub disc: f64,
}

impl Losses {
    pub fn total(&self) -> f64 {
        self.dae + self.daa + self.disc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcdcModel {
    feature_dim: usize,
    classes: usize,
    pub flags: AblationFlags,
    pub hyper: Hyper,
    params: Params,
    velocity: Params,
    dae_stats: ModuleStats,
    daa_stats: ModuleStats,
    disc_stats: ModuleStats,
    rng: ChaCha8Rng,
}

impl AcdcModel {
    pub fn new(
        feature_dim: usize,
        classes: usize,
        flags: AblationFlags,
        hyper: Hyper,
        seed: u64,
    ) -> Result<Self> {
        if feature_dim < 2 {
            return Err(AcdcError::Config(format!("feature dimension {feature_dim} < 2")));
        }
        if classes < 2 {
            return Err(AcdcError::Config(format!("class count {classes} < 2")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dae_width = if flags.dae_starts_single_node {
            1
        } else {
            feature_dim.div_ceil(2)
        };
        let params = Params::init(feature_dim, classes, dae_width, &mut rng);
        let velocity = params.zeros_like();
        Ok(AcdcModel {
            feature_dim,
            classes,
            flags,
            hyper,
            params,
            velocity,
            dae_stats: ModuleStats::new(feature_dim),
            daa_stats: ModuleStats::new(feature_dim),
            disc_stats: ModuleStats::new(feature_dim),
            rng,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Direct parameter access for tests and tooling. Shapes must stay consistent.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn velocity(&self) -> &Params {
        &self.velocity
    }

    pub fn stats(&self, kind: ModuleKind) -> &ModuleStats {
        match kind {
            ModuleKind::Dae => &self.dae_stats,
            ModuleKind::Daa => &self.daa_stats,
            ModuleKind::Disc => &self.disc_stats,
        }
    }

    pub fn widths(&self) -> Widths {
        Widths {
            dae: self.params.dae.weight.rows(),
            daa: self.params.daa.width(),
            disc: self.params.disc.width(),
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.params.fingerprint()
    }

    pub fn encode(&self, x: &[f64]) -> Vector {
        self.params.encode(x)
    }

    pub fn decode(&self, h: &[f64]) -> Vector {
        self.params.decode(h)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(AcdcError::dim("model input", self.feature_dim, x.len()));
        }
        Ok(())
    }

    fn one_hot(&self, label: usize) -> Result<Vector> {
        if label >= self.classes {
            return Err(AcdcError::Precondition(format!(
                "label {label} outside [0, {})",
                self.classes
            )));
        }
        let mut y = vec![0.0; self.classes];
        y[label] = 1.0;
        Ok(y)
    }

    fn step(&mut self, grads: &Params, ids: &[ParamId]) -> Result<()> {
        for &id in ids {
            sgd_momentum_step(
                self.params.tensor_mut(id),
                grads.tensor(id),
                self.velocity.tensor_mut(id),
                self.hyper.learning_rate,
                self.hyper.momentum,
            )?;
        }
        Ok(())
    }

    /// Clean reconstruction step `x -> x` on the autoencoder only.
    pub fn greedy_pretrain_step(&mut self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let (l, grads) = reconstruction_grad(&self.params, &[(x, x)])?;
        self.step(&grads, &ParamId::DAE)?;
        Ok(l)
    }

    /// Zeroes exactly `round(frac * u)` uniformly chosen coordinates.
    pub fn mask_noise(&mut self, x: &[f64], frac: f64) -> Vector {
        mask_noise(x, frac, &mut self.rng)
    }

    /// Cross-domain denoising step: clean pre-training on both inputs, then
    /// one step on `noisy(x_s) -> x_t` plus `noisy(x_t) -> x_s`.
    /// Returns the cross reconstruction loss at the point of the step.
    pub fn dae_learn(&mut self, x_s: &[f64], x_t: &[f64]) -> Result<f64> {
        self.check_input(x_s)?;
        self.check_input(x_t)?;
        self.greedy_pretrain_step(x_s)?;
        self.greedy_pretrain_step(x_t)?;
        let frac = self.hyper.noise_fraction;
        let noisy_s = self.mask_noise(x_s, frac);
        let noisy_t = self.mask_noise(x_t, frac);
        let (l, grads) = reconstruction_grad(&self.params, &[(&noisy_s, x_t), (&noisy_t, x_s)])?;
        self.step(&grads, &ParamId::DAE)?;
        Ok(l)
    }

    /// Domain classifier step: source towards 0, target towards 1, with the
    /// encoder moving against the classifier. Zero when DAA is disabled.
    pub fn daa_learn(&mut self, x_s: &[f64], x_t: &[f64]) -> Result<f64> {
        if !self.flags.daa_enabled {
            return Ok(0.0);
        }
        self.check_input(x_s)?;
        self.check_input(x_t)?;
        let (l, grads) = head_grad(
            &self.params,
            HeadKind::Daa,
            &[(x_s, &[0.0]), (x_t, &[1.0])],
            GRADIENT_REVERSAL,
        )?;
        self.step(&grads, &ParamId::DAA)?;
        self.step(&grads, &ParamId::ENCODER)?;
        Ok(l)
    }

    /// Trains only the domain classifier, leaving the encoder untouched.
    pub fn daa_fit_frozen(&mut self, x_s: &[f64], x_t: &[f64]) -> Result<f64> {
        self.check_input(x_s)?;
        self.check_input(x_t)?;
        let (l, grads) = head_grad(&self.params, HeadKind::Daa, &[(x_s, &[0.0]), (x_t, &[1.0])], 0.0)?;
        self.step(&grads, &ParamId::DAA)?;
        Ok(l)
    }

    /// Class discriminator step on a labeled source sample; updates the
    /// discriminator and the shared encoder.
    pub fn disc_learn(&mut self, x_s: &[f64], label: usize) -> Result<f64> {
        self.check_input(x_s)?;
        let y = self.one_hot(label)?;
        let (l, grads) = head_grad(&self.params, HeadKind::Disc, &[(x_s, &y)], 1.0)?;
        self.step(&grads, &ParamId::DISC)?;
        self.step(&grads, &ParamId::ENCODER)?;
        Ok(l)
    }

    /// DAE, DAA, DISC in that order.
    pub fn learn_step(&mut self, x_s: &[f64], label: usize, x_t: &[f64]) -> Result<Losses> {
        let dae = self.dae_learn(x_s, x_t)?;
        let daa = self.daa_learn(x_s, x_t)?;
        let disc = self.disc_learn(x_s, label)?;
        Ok(Losses { dae, daa, disc })
    }

    /// Step for a window with no target samples: clean reconstruction and
    /// the discriminator only.
    pub fn learn_source_only(&mut self, x_s: &[f64], label: usize) -> Result<Losses> {
        let dae = self.greedy_pretrain_step(x_s)?;
        let disc = self.disc_learn(x_s, label)?;
        Ok(Losses { dae, daa: 0.0, disc })
    }

    /// Class prediction for one sample: `(argmax, probabilities)`.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vector)> {
        self.check_input(x)?;
        let probs = self.params.propagate(ModuleKind::Disc, x);
        let class = argmax(&probs);
        Ok((class, probs))
    }

    /// DAA probability that `x` comes from the target domain.
    pub fn domain_score(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.params.propagate(ModuleKind::Daa, x)[0])
    }

    /// Empirical H-divergence `2 |1 - (err_S + err_T)|` with the current
    /// domain classifier as the hypothesis.
    pub fn empirical_h_divergence(&self, source: &[&[f64]], target: &[&[f64]]) -> Result<f64> {
        if source.is_empty() || target.is_empty() {
            return Err(AcdcError::Precondition(
                "H-divergence needs non-empty source and target windows".into(),
            ));
        }
        let mut miss_s = 0usize;
        for x in source {
            if self.domain_score(x)? >= 0.5 {
                miss_s += 1;
            }
        }
        let mut miss_t = 0usize;
        for x in target {
            if self.domain_score(x)? < 0.5 {
                miss_t += 1;
            }
        }
        let err_s = miss_s as f64 / source.len() as f64;
        let err_t = miss_t as f64 / target.len() as f64;
        Ok(h_divergence_from_errors(err_s, err_t))
    }

    /// Drift detection and structural adaptation for one source/target pair.
    pub fn adapt_step(&mut self, x_s: &[f64], label: usize, x_t: &[f64]) -> Result<AdaptReport> {
        self.check_input(x_s)?;
        self.check_input(x_t)?;
        let y_s = self.one_hot(label)?;
        let mut report = AdaptReport::default();
        if !self.flags.evolution_enabled {
            return Ok(report);
        }

        report.dae = Some(self.assess(ModuleKind::Dae, &[(x_s, x_t), (x_t, x_s)], false)?);
        if self.flags.daa_enabled {
            report.daa = Some(self.assess(ModuleKind::Daa, &[(x_s, &[0.0]), (x_t, &[1.0])], false)?);
        }
        let forced = self.flags.daa_signals_disc
            && report.daa.is_some_and(|a| a.change == Some(Change::Grew));
        let disc = self.assess(ModuleKind::Disc, &[(x_s, &y_s)], forced)?;
        report.disc_forced = forced && !disc.grow_fired;
        report.disc = Some(disc);
        Ok(report)
    }

    fn assess(&mut self, kind: ModuleKind, items: &[(&[f64], &[f64])], force_grow: bool) -> Result<Assessment> {
        let stats = match kind {
            ModuleKind::Dae => &mut self.dae_stats,
            ModuleKind::Daa => &mut self.daa_stats,
            ModuleKind::Disc => &mut self.disc_stats,
        };
        for (x, _) in items {
            stats.moments.update(x)?;
        }
        let (ey, ey2) = expected_output(kind, &stats.moments, &self.params)?;
        let (mut bias, mut var) = (0.0, 0.0);
        for (_, target) in items {
            let (b, v) = bias_variance(&ey, &ey2, target)?;
            bias += b;
            var += v;
        }
        bias /= items.len() as f64;
        var /= items.len() as f64;

        let h = &self.hyper;
        let (beta, lambda) = spc_thresholds_with(h.threshold_rule, bias, var, h.alpha1, h.alpha2);
        stats.spc.push(bias, var);
        let decision = stats.spc.evaluate(beta, lambda);

        let change = if decision.grow || force_grow {
            self.grow(kind)?;
            Some(Change::Grew)
        } else if decision.prune && self.prune(kind)? {
            Some(Change::Pruned)
        } else {
            None
        };
        Ok(Assessment {
            bias,
            var,
            beta,
            lambda,
            grow_fired: decision.grow,
            prune_fired: decision.prune,
            change,
        })
    }

    /// Adds one node to the evolving layer of `kind`.
    pub fn grow(&mut self, kind: ModuleKind) -> Result<()> {
        let (layer, vel) = layer_views(&mut self.params, &mut self.velocity, kind);
        evolving::grow_node(layer, vel, &mut self.rng)
    }

    /// Removes the weakest node of `kind`'s evolving layer; `false` when
    /// only one node is left.
    pub fn prune(&mut self, kind: ModuleKind) -> Result<bool> {
        let (mean, var) = self.layer_input_moments(kind)?;
        let (layer, vel) = layer_views(&mut self.params, &mut self.velocity, kind);
        Ok(evolving::prune_weakest(layer, vel, &mean, &var)?.is_some())
    }

    /// Removes a specific node. Refuses to remove the last one.
    pub fn remove_node(&mut self, kind: ModuleKind, node: usize) -> Result<bool> {
        let (layer, vel) = layer_views(&mut self.params, &mut self.velocity, kind);
        if layer.width() <= 1 {
            return Ok(false);
        }
        evolving::remove_node(layer, vel, node)?;
        Ok(true)
    }

    /// Mean and variance of the input seen by `kind`'s evolving layer. The
    /// encoder reads raw features; the heads read the probit-expected
    /// encoder activation, treated as noiseless.
    fn layer_input_moments(&self, kind: ModuleKind) -> Result<(Vector, Vector)> {
        let m = &self.stats(kind).moments;
        if m.count() == 0 {
            return Err(AcdcError::Precondition(format!(
                "no samples observed by {} before pruning",
                kind.name()
            )));
        }
        let var = m.variance();
        match kind {
            ModuleKind::Dae => Ok((m.mean().to_vec(), var)),
            ModuleKind::Daa | ModuleKind::Disc => {
                let z = evolving::probit_rescale(m.mean(), &var);
                let h = self.params.encode(&z);
                let zeros = vec![0.0; h.len()];
                Ok((h, zeros))
            }
        }
    }
}

fn layer_views<'a>(
    params: &'a mut Params,
    velocity: &'a mut Params,
    kind: ModuleKind,
) -> (LayerMut<'a>, LayerMut<'a>) {
    fn view(p: &mut Params, kind: ModuleKind) -> LayerMut<'_> {
        match kind {
            ModuleKind::Dae => LayerMut {
                incoming: &mut p.dae.weight,
                bias: &mut p.dae.enc_bias,
                downstream: vec![&mut p.daa.hidden, &mut p.disc.hidden],
            },
            ModuleKind::Daa => LayerMut {
                incoming: &mut p.daa.hidden,
                bias: &mut p.daa.hidden_bias,
                downstream: vec![&mut p.daa.out],
            },
            ModuleKind::Disc => LayerMut {
                incoming: &mut p.disc.hidden,
                bias: &mut p.disc.hidden_bias,
                downstream: vec![&mut p.disc.out],
            },
        }
    }
    (view(params, kind), view(velocity, kind))
}

/// `2 |1 - (err_S + err_T)|`; the absolute value makes the hypothesis class
/// symmetric under label flipping.
pub fn h_divergence_from_errors(err_s: f64, err_t: f64) -> f64 {
    2.0 * (1.0 - (err_s + err_t)).abs()
}

/// Zeroes exactly `round(frac * len)` distinct, uniformly chosen coordinates.
pub fn mask_noise<R: Rng + ?Sized>(x: &[f64], frac: f64, rng: &mut R) -> Vector {
    assert!((0.0..1.0).contains(&frac), "noise fraction {frac} outside [0, 1)");
    let mut out = x.to_vec();
    let k = (frac * x.len() as f64).round() as usize;
    if k > 0 {
        for i in index::sample(rng, x.len(), k) {
            out[i] = 0.0;
        }
    }
    out
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}
