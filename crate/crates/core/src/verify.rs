//! Self-checks shared by the test suites and the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::evolving::probit_rescale;
use crate::net::{head_grad, reconstruction_grad, AcdcModel, HeadKind, ModuleKind, ParamId, Params, GRADIENT_REVERSAL};
use crate::tensor::{finite_diff_grad, relative_error};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const PROBIT_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn below(name: String, value: f64, tolerance: f64) -> Self {
        CheckOutcome {
            name,
            value,
            tolerance,
            passed: value < tolerance,
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (tol {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// A model with random sizes (`u <= 8`, widths `<= 6`, `m <= 4`) and
/// randomly perturbed parameters.
pub fn random_model(seed: u64) -> Result<AcdcModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = rng.random_range(2..=8);
    let m = rng.random_range(2..=4);
    let mut model = AcdcModel::new(u, m, Default::default(), Default::default(), seed)?;
    for _ in 0..rng.random_range(0..=3) {
        model.grow(ModuleKind::Daa)?;
    }
    for _ in 0..rng.random_range(0..=4) {
        model.grow(ModuleKind::Disc)?;
    }
    while model.widths().dae < 6 && rng.random::<bool>() {
        model.grow(ModuleKind::Dae)?;
    }
    for id in ParamId::ALL {
        for v in model.params_mut().tensor_mut(id) {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    Ok(model)
}

/// Relative error between analytic and central-difference gradients of
/// the three losses, over every parameter, for one random configuration.
pub fn gradient_errors(seed: u64) -> Result<[f64; 3]> {
    let model = random_model(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9));
    let u = model.feature_dim();
    let m = model.classes();
    let xs: Vec<f64> = (0..u).map(|_| rng.random_range(-1.5..1.5)).collect();
    let xt: Vec<f64> = (0..u).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut y = vec![0.0; m];
    y[rng.random_range(0..m)] = 1.0;

    let ids = ParamId::ALL;
    let base = model.params();
    let flat = base.flatten(&ids);
    let numeric = |f: &dyn Fn(&Params) -> Result<f64>| -> Result<Vec<f64>> {
        let mut err = None;
        let g = finite_diff_grad(
            |v| {
                let mut p = base.clone();
                p.assign_flat(&ids, v);
                f(&p).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    f64::NAN
                })
            },
            &flat,
            1e-6,
        );
        err.map_or(Ok(g), Err)
    };

    let dae_pairs: [(&[f64], &[f64]); 2] = [(&xs, &xt), (&xt, &xs)];
    let daa_items: [(&[f64], &[f64]); 2] = [(&xs, &[0.0]), (&xt, &[1.0])];
    let disc_items: [(&[f64], &[f64]); 1] = [(&xs, &y)];

    let g = reconstruction_grad(base, &dae_pairs)?.1.flatten(&ids);
    let dae = relative_error(&g, &numeric(&|p| Ok(reconstruction_grad(p, &dae_pairs)?.0))?);
    let g = head_grad(base, HeadKind::Daa, &daa_items, 1.0)?.1.flatten(&ids);
    let daa = relative_error(&g, &numeric(&|p| Ok(head_grad(p, HeadKind::Daa, &daa_items, 1.0)?.0))?);
    let g = head_grad(base, HeadKind::Disc, &disc_items, 1.0)?.1.flatten(&ids);
    let disc = relative_error(&g, &numeric(&|p| Ok(head_grad(p, HeadKind::Disc, &disc_items, 1.0)?.0))?);
    Ok([dae, daa, disc])
}

/// Largest `|reversed + plain|` over the encoder gradient, plus whether the
/// head's own gradient is untouched by the reversal.
pub fn reversal_defect(seed: u64) -> Result<(f64, bool)> {
    let model = random_model(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ab);
    let u = model.feature_dim();
    let xs: Vec<f64> = (0..u).map(|_| rng.random_range(-1.5..1.5)).collect();
    let xt: Vec<f64> = (0..u).map(|_| rng.random_range(-1.5..1.5)).collect();
    let items: [(&[f64], &[f64]); 2] = [(&xs, &[0.0]), (&xt, &[1.0])];
    let (_, plain) = head_grad(model.params(), HeadKind::Daa, &items, 1.0)?;
    let (_, rev) = head_grad(model.params(), HeadKind::Daa, &items, GRADIENT_REVERSAL)?;
    let defect = ParamId::ENCODER
        .iter()
        .flat_map(|&id| plain.tensor(id).iter().zip(rev.tensor(id)).map(|(a, b)| (a + b).abs()))
        .fold(0.0, f64::max);
    let head_same = ParamId::DAA.iter().all(|&id| plain.tensor(id) == rev.tensor(id));
    Ok((defect, head_same))
}

/// Largest absolute gap between the probit expected output of a random
/// autoencoder and a Monte-Carlo average of its forward pass, for inputs
/// `x ~ N(mu, diag(sigma^2))`.
pub fn probit_gap(seed: u64, draws: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = rng.random_range(2..=8);
    let model = AcdcModel::new(u, 2, Default::default(), Default::default(), seed)?;
    let mu: Vec<f64> = (0..u).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sd: Vec<f64> = (0..u).map(|_| rng.random_range(0.1..1.0)).collect();

    let mut sum = vec![0.0; u];
    for _ in 0..draws {
        let x: Vec<f64> = mu
            .iter()
            .zip(&sd)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + s * z
            })
            .collect();
        for (acc, y) in sum.iter_mut().zip(model.params().propagate(ModuleKind::Dae, &x)) {
            *acc += y;
        }
    }
    let var: Vec<f64> = sd.iter().map(|s| s * s).collect();
    let expected = model.params().propagate(ModuleKind::Dae, &probit_rescale(&mu, &var));
    Ok(expected
        .iter()
        .zip(&sum)
        .map(|(e, s)| (e - s / draws as f64).abs())
        .fold(0.0, f64::max))
}

/// Every check the `gradcheck` command runs.
pub fn full_suite(configs: u64, probit_nets: u64, draws: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for seed in 0..configs {
        let [dae, daa, disc] = gradient_errors(seed)?;
        out.push(CheckOutcome::below(format!("grad dae #{seed}"), dae, GRAD_TOLERANCE));
        out.push(CheckOutcome::below(format!("grad daa #{seed}"), daa, GRAD_TOLERANCE));
        out.push(CheckOutcome::below(format!("grad disc #{seed}"), disc, GRAD_TOLERANCE));
    }
    for seed in 0..configs {
        let (defect, head_same) = reversal_defect(seed)?;
        let mut c = CheckOutcome::below(format!("reversal #{seed}"), defect, f64::EPSILON);
        c.passed &= head_same;
        out.push(c);
    }
    for seed in 0..probit_nets {
        out.push(CheckOutcome::below(
            format!("probit #{seed}"),
            probit_gap(seed, draws)?,
            PROBIT_TOLERANCE,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let out = full_suite(3, 2, 20_000).unwrap();
        assert_eq!(out.len(), 3 * 3 + 3 + 2);
        for c in &out {
            assert!(c.passed, "{c}");
        }
    }
}
