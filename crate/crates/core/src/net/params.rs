use std::hash::{DefaultHasher, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{affine_unchecked, sigmoid, softmax, xavier_sample, Matrix, Vector};

/// The three modules that share the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModuleKind {
    Dae,
    Daa,
    Disc,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; 3] = [ModuleKind::Dae, ModuleKind::Daa, ModuleKind::Disc];

    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::Dae => "dae",
            ModuleKind::Daa => "daa",
            ModuleKind::Disc => "disc",
        }
    }
}

/// The two classifier heads sitting on top of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Daa,
    Disc,
}

/// Tied-weight autoencoder. `weight` is `R_dae x u`; the decoder uses its transpose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub weight: Matrix,
    pub enc_bias: Vector,
    pub dec_bias: Vector,
}

/// One sigmoid hidden layer over the encoder output plus an output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Matrix,
    pub hidden_bias: Vector,
    pub out: Matrix,
    pub out_bias: Vector,
}

impl Head {
    fn new<R: Rng + ?Sized>(input: usize, width: usize, outputs: usize, rng: &mut R) -> Self {
        Head {
            hidden: xavier_sample(input, width, rng),
            hidden_bias: vec![0.0; width],
            out: xavier_sample(width, outputs, rng),
            out_bias: vec![0.0; outputs],
        }
    }

    pub fn width(&self) -> usize {
        self.hidden.rows()
    }

    pub fn hidden_activation(&self, h: &[f64]) -> Vector {
        sigmoid(&affine_unchecked(h, &self.hidden, &self.hidden_bias))
    }

    pub fn logits(&self, g: &[f64]) -> Vector {
        affine_unchecked(g, &self.out, &self.out_bias)
    }

    fn zeros_like(&self) -> Self {
        Head {
            hidden: Matrix::zeros(self.hidden.rows(), self.hidden.cols()),
            hidden_bias: vec![0.0; self.hidden_bias.len()],
            out: Matrix::zeros(self.out.rows(), self.out.cols()),
            out_bias: vec![0.0; self.out_bias.len()],
        }
    }
}

/// Identifies one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamId {
    DaeWeight,
    DaeEncBias,
    DaeDecBias,
    DaaHidden,
    DaaHiddenBias,
    DaaOut,
    DaaOutBias,
    DiscHidden,
    DiscHiddenBias,
    DiscOut,
    DiscOutBias,
}

impl ParamId {
    pub const ALL: [ParamId; 11] = [
        ParamId::DaeWeight,
        ParamId::DaeEncBias,
        ParamId::DaeDecBias,
        ParamId::DaaHidden,
        ParamId::DaaHiddenBias,
        ParamId::DaaOut,
        ParamId::DaaOutBias,
        ParamId::DiscHidden,
        ParamId::DiscHiddenBias,
        ParamId::DiscOut,
        ParamId::DiscOutBias,
    ];
    /// Parameters touched by the reconstruction objective.
    pub const DAE: [ParamId; 3] = [ParamId::DaeWeight, ParamId::DaeEncBias, ParamId::DaeDecBias];
    /// The encoder half shared by both heads.
    pub const ENCODER: [ParamId; 2] = [ParamId::DaeWeight, ParamId::DaeEncBias];
    pub const DAA: [ParamId; 4] = [
        ParamId::DaaHidden,
        ParamId::DaaHiddenBias,
        ParamId::DaaOut,
        ParamId::DaaOutBias,
    ];
    pub const DISC: [ParamId; 4] = [
        ParamId::DiscHidden,
        ParamId::DiscHiddenBias,
        ParamId::DiscOut,
        ParamId::DiscOutBias,
    ];
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub dae: Autoencoder,
    pub daa: Head,
    pub disc: Head,
}

impl Params {
    /// Xavier weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        feature_dim: usize,
        classes: usize,
        dae_width: usize,
        rng: &mut R,
    ) -> Self {
        let dae = Autoencoder {
            weight: xavier_sample(feature_dim, dae_width, rng),
            enc_bias: vec![0.0; dae_width],
            dec_bias: vec![0.0; feature_dim],
        };
        let daa = Head::new(dae_width, 1, 1, rng);
        let disc = Head::new(dae_width, 1, classes, rng);
        Params { dae, daa, disc }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            dae: Autoencoder {
                weight: Matrix::zeros(self.dae.weight.rows(), self.dae.weight.cols()),
                enc_bias: vec![0.0; self.dae.enc_bias.len()],
                dec_bias: vec![0.0; self.dae.dec_bias.len()],
            },
            daa: self.daa.zeros_like(),
            disc: self.disc.zeros_like(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.dae.weight.cols()
    }

    pub fn classes(&self) -> usize {
        self.disc.out.rows()
    }

    pub fn head(&self, kind: HeadKind) -> &Head {
        match kind {
            HeadKind::Daa => &self.daa,
            HeadKind::Disc => &self.disc,
        }
    }

    pub fn tensor(&self, id: ParamId) -> &[f64] {
        match id {
            ParamId::DaeWeight => self.dae.weight.data(),
            ParamId::DaeEncBias => &self.dae.enc_bias,
            ParamId::DaeDecBias => &self.dae.dec_bias,
            ParamId::DaaHidden => self.daa.hidden.data(),
            ParamId::DaaHiddenBias => &self.daa.hidden_bias,
            ParamId::DaaOut => self.daa.out.data(),
            ParamId::DaaOutBias => &self.daa.out_bias,
            ParamId::DiscHidden => self.disc.hidden.data(),
            ParamId::DiscHiddenBias => &self.disc.hidden_bias,
            ParamId::DiscOut => self.disc.out.data(),
            ParamId::DiscOutBias => &self.disc.out_bias,
        }
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut [f64] {
        match id {
            ParamId::DaeWeight => self.dae.weight.data_mut(),
            ParamId::DaeEncBias => &mut self.dae.enc_bias,
            ParamId::DaeDecBias => &mut self.dae.dec_bias,
            ParamId::DaaHidden => self.daa.hidden.data_mut(),
            ParamId::DaaHiddenBias => &mut self.daa.hidden_bias,
            ParamId::DaaOut => self.daa.out.data_mut(),
            ParamId::DaaOutBias => &mut self.daa.out_bias,
            ParamId::DiscHidden => self.disc.hidden.data_mut(),
            ParamId::DiscHiddenBias => &mut self.disc.hidden_bias,
            ParamId::DiscOut => self.disc.out.data_mut(),
            ParamId::DiscOutBias => &mut self.disc.out_bias,
        }
    }

    /// Concatenation of the listed tensors.
    pub fn flatten(&self, ids: &[ParamId]) -> Vector {
        ids.iter().flat_map(|&id| self.tensor(id).iter().copied()).collect()
    }

    /// Inverse of [`Params::flatten`] for the same id list.
    pub fn assign_flat(&mut self, ids: &[ParamId], flat: &[f64]) {
        let mut offset = 0;
        for &id in ids {
            let t = self.tensor_mut(id);
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn encode(&self, x: &[f64]) -> Vector {
        sigmoid(&affine_unchecked(x, &self.dae.weight, &self.dae.enc_bias))
    }

    pub fn decode(&self, h: &[f64]) -> Vector {
        let mut z = self.dae.weight.t_matvec(h);
        for (zi, b) in z.iter_mut().zip(&self.dae.dec_bias) {
            *zi += b;
        }
        sigmoid(&z)
    }

    /// Output of a head for encoder activations `h`: the sigmoid domain
    /// score for DAA, the softmax class distribution for DISC.
    pub fn head_output(&self, kind: HeadKind, h: &[f64]) -> Vector {
        let head = self.head(kind);
        let logits = head.logits(&head.hidden_activation(h));
        match kind {
            HeadKind::Daa => sigmoid(&logits),
            HeadKind::Disc => softmax(&logits),
        }
    }

    /// Deterministic forward pass of one module on input `x`.
    pub fn propagate(&self, kind: ModuleKind, x: &[f64]) -> Vector {
        let h = self.encode(x);
        match kind {
            ModuleKind::Dae => self.decode(&h),
            ModuleKind::Daa => self.head_output(HeadKind::Daa, &h),
            ModuleKind::Disc => self.head_output(HeadKind::Disc, &h),
        }
    }

    /// Every matrix product in the forward passes is well formed.
    pub fn shapes_consistent(&self) -> bool {
        let u = self.dae.weight.cols();
        let r = self.dae.weight.rows();
        let head_ok = |h: &Head, outputs: Option<usize>| {
            h.hidden.cols() == r
                && h.hidden_bias.len() == h.hidden.rows()
                && h.out.cols() == h.hidden.rows()
                && h.out_bias.len() == h.out.rows()
                && outputs.is_none_or(|o| h.out.rows() == o)
                && h.hidden.rows() >= 1
        };
        r >= 1
            && self.dae.enc_bias.len() == r
            && self.dae.dec_bias.len() == u
            && head_ok(&self.daa, Some(1))
            && head_ok(&self.disc, None)
    }

    /// Hash over shapes and exact bit patterns of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for id in ParamId::ALL {
            let t = self.tensor(id);
            h.write_usize(t.len());
            for v in t {
                h.write_u64(v.to_bits());
            }
        }
        for m in [&self.dae.weight, &self.daa.hidden, &self.daa.out, &self.disc.hidden, &self.disc.out] {
            h.write_usize(m.rows());
            h.write_usize(m.cols());
        }
        h.finish()
    }
}
