//! Losses and their analytic gradients for the three objectives.

use crate::error::Result;
use crate::tensor::{loss, LossKind, Vector};

use super::params::{HeadKind, Params};

/// Gradient multiplier applied where a head's error signal enters the
/// encoder. `-1.0` is the gradient reversal used by the domain classifier.
pub const GRADIENT_REVERSAL: f64 = -1.0;

/// Summed reconstruction loss over `(input, target)` pairs and its gradient
/// with respect to the autoencoder parameters (tied weights included).
pub fn reconstruction_grad(params: &Params, pairs: &[(&[f64], &[f64])]) -> Result<(f64, Params)> {
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let w = &params.dae.weight;
    for &(input, target) in pairs {
        let h = params.encode(input);
        let recon = params.decode(&h);
        let (l, delta_out) = loss(LossKind::Mse, &recon, target)?;
        total += l;

        let g = &mut grads.dae;
        for (gb, d) in g.dec_bias.iter_mut().zip(&delta_out) {
            *gb += d;
        }
        // decoder path through W^T
        g.weight.add_outer(1.0, &h, &delta_out);
        let delta_h = backprop_sigmoid(&w.matvec(&delta_out), &h);
        for (gb, d) in g.enc_bias.iter_mut().zip(&delta_h) {
            *gb += d;
        }
        g.weight.add_outer(1.0, &delta_h, input);
    }
    Ok((total, grads))
}

/// Summed head loss over `(input, target)` samples and its gradient.
///
/// The encoder receives the head's error signal multiplied by
/// `encoder_scale`; pass [`GRADIENT_REVERSAL`] for the adversarial head.
pub fn head_grad(
    params: &Params,
    kind: HeadKind,
    samples: &[(&[f64], &[f64])],
    encoder_scale: f64,
) -> Result<(f64, Params)> {
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let head = params.head(kind);
    let loss_kind = match kind {
        HeadKind::Daa => LossKind::BinaryLog,
        HeadKind::Disc => LossKind::MulticlassLog,
    };
    for &(input, target) in samples {
        let h = params.encode(input);
        let g = head.hidden_activation(&h);
        let out = params.head_output(kind, &h);
        let (l, delta_out) = loss(loss_kind, &out, target)?;
        total += l;

        let gh = match kind {
            HeadKind::Daa => &mut grads.daa,
            HeadKind::Disc => &mut grads.disc,
        };
        gh.out.add_outer(1.0, &delta_out, &g);
        for (gb, d) in gh.out_bias.iter_mut().zip(&delta_out) {
            *gb += d;
        }
        let delta_g = backprop_sigmoid(&head.out.t_matvec(&delta_out), &g);
        gh.hidden.add_outer(1.0, &delta_g, &h);
        for (gb, d) in gh.hidden_bias.iter_mut().zip(&delta_g) {
            *gb += d;
        }

        if encoder_scale != 0.0 {
            let delta_h: Vector = backprop_sigmoid(&head.hidden.t_matvec(&delta_g), &h)
                .into_iter()
                .map(|d| d * encoder_scale)
                .collect();
            grads.dae.weight.add_outer(1.0, &delta_h, input);
            for (gb, d) in grads.dae.enc_bias.iter_mut().zip(&delta_h) {
                *gb += d;
            }
        }
    }
    Ok((total, grads))
}

#[inline]
fn backprop_sigmoid(upstream: &[f64], activation: &[f64]) -> Vector {
    upstream
        .iter()
        .zip(activation)
        .map(|(u, a)| u * a * (1.0 - a))
        .collect()
}
