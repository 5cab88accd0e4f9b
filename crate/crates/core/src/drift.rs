//! Synthetic benchmarks: scaling-hyperplane drift schedules and a two-domain
//! Gaussian generator with covariate shift.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::stream::{Domain, Sample};
use crate::tensor::{sigmoid_scalar, Vector};

/// Abrupt concept changes at evenly spaced sample indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSchedule {
    pub u: usize,
    pub z: usize,
    /// First index of concepts `2..=z`; strictly increasing.
    pub boundaries: Vec<u64>,
    /// One vector per concept. `vectors[0]` is never applied: the first
    /// concept passes samples through unchanged.
    pub vectors: Vec<Vector>,
    pub seed: u64,
}

/// `z` concepts over a stream of `len` samples. Concepts after the first
/// get a drift vector drawn uniformly from `[0, 2)^u`.
pub fn make_schedule(u: usize, z: usize, len: u64, seed: u64) -> Result<DriftSchedule> {
    if z == 0 {
        return Err(AcdcError::Config("drift schedule needs at least one concept".into()));
    }
    if (z as u64) > len.max(1) {
        return Err(AcdcError::Config(format!("{z} concepts do not fit in {len} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = vec![vec![1.0; u]];
    for _ in 1..z {
        vectors.push((0..u).map(|_| rng.random_range(0.0..2.0)).collect());
    }
    let boundaries = (1..z as u64).map(|k| k * len / z as u64).collect();
    Ok(DriftSchedule {
        u,
        z,
        boundaries,
        vectors,
        seed,
    })
}

impl DriftSchedule {
    /// Zero-based concept active at stream position `index`.
    pub fn concept(&self, index: u64) -> usize {
        self.boundaries.partition_point(|&b| b <= index)
    }
}

/// `d_z * x / ||x||` for concepts after the first; identity otherwise.
pub fn apply_drift(x: &[f64], schedule: &DriftSchedule, index: u64) -> Vector {
    let c = schedule.concept(index);
    if c == 0 {
        return x.to_vec();
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter()
        .zip(&schedule.vectors[c])
        .map(|(xi, d)| d * xi / norm)
        .collect()
}

/// Applies a schedule to every sample of a stream, keyed by `Sample::index`.
pub fn drift_stream(samples: &mut [Sample], schedule: &DriftSchedule) {
    for s in samples {
        s.features = apply_drift(&s.features, schedule, s.index);
    }
}

/// Two Gaussian-mixture domains sharing one labeling mechanism.
///
/// Class `k` is drawn from `N(mu_k, noise^2 I)` with means placed at random
/// on a sphere of radius `separation`. Target samples are drawn the same way
/// and then rotated by `rotation` radians in consecutive coordinate planes
/// and translated by a random vector of norm `translation`. With `squash`
/// every coordinate finally passes through a logistic map so features live
/// in `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub u: usize,
    pub m: usize,
    pub n_source: u64,
    pub n_target: u64,
    pub separation: f64,
    pub noise: f64,
    pub rotation: f64,
    pub translation: f64,
    pub squash: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            u: 10,
            m: 3,
            n_source: 20_000,
            n_target: 8_000,
            separation: 2.0,
            noise: 1.0,
            rotation: 0.6,
            translation: 1.5,
            squash: true,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.u < 2 || self.m < 2 {
            return Err(AcdcError::Config(format!("need u >= 2 and m >= 2, got u={} m={}", self.u, self.m)));
        }
        if !(self.noise > 0.0 && self.separation.is_finite() && self.rotation.is_finite() && self.translation.is_finite()) {
            return Err(AcdcError::Config("synthetic spec has a non-positive noise or non-finite shift".into()));
        }
        Ok(())
    }

    /// Deterministic class means and the target shift.
    pub fn geometry(&self) -> (Vec<Vector>, Vector) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_6e0e);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut on_sphere = |radius: f64| -> Vector {
            let v: Vector = (0..self.u).map(|_| std.sample(&mut rng)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|a| a * radius / n).collect()
        };
        let means = (0..self.m).map(|_| on_sphere(self.separation)).collect();
        let shift = on_sphere(self.translation);
        (means, shift)
    }

    /// The target transform applied to an unshifted point.
    pub fn shift_point(&self, x: &mut [f64], translation: &[f64]) {
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        for pair in x.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = c * a - s * b;
            pair[1] = s * a + c * b;
        }
        for (xi, t) in x.iter_mut().zip(translation) {
            *xi += t;
        }
    }
}

/// Generates `(source, target)`. Target labels are kept for scoring only.
pub fn synth_streams(spec: &SynthSpec) -> Result<(Vec<Sample>, Vec<Sample>)> {
    spec.validate()?;
    let (means, translation) = spec.geometry();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| AcdcError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let draw = |n: u64, domain: Domain, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        let mut labels: Vec<usize> = (0..n as usize).map(|i| i % spec.m).collect();
        labels.shuffle(rng);
        labels
            .into_iter()
            .enumerate()
            .map(|(i, y)| {
                let mut x: Vector = means[y].iter().map(|mu| mu + noise.sample(rng)).collect();
                if domain == Domain::Target {
                    spec.shift_point(&mut x, &translation);
                }
                if spec.squash {
                    x.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
                }
                Sample {
                    features: x,
                    label: Some(y),
                    domain,
                    index: i as u64,
                }
            })
            .collect()
    };
    let source = draw(spec.n_source, Domain::Source, &mut rng);
    let target = draw(spec.n_target, Domain::Target, &mut rng);
    Ok((source, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_concept_is_identity() {
        let s = make_schedule(3, 1, 100, 7).unwrap();
        assert!(s.boundaries.is_empty());
        let x = vec![3.0, -1.0, 0.5];
        assert_eq!(apply_drift(&x, &s, 99), x);
    }

    #[test]
    fn scaling_formula() {
        let mut s = make_schedule(2, 2, 10, 0).unwrap();
        s.vectors[1] = vec![1.0, 1.0];
        assert_eq!(apply_drift(&[2.0, 0.0], &s, 5), vec![1.0, 0.0]);
        assert_eq!(apply_drift(&[2.0, 0.0], &s, 4), vec![2.0, 0.0]);
        assert_eq!(apply_drift(&[0.0, 0.0], &s, 7), vec![0.0, 0.0]);
    }

    #[test]
    fn vectors_in_range_and_seeded() {
        let a = make_schedule(50, 7, 7000, 3).unwrap();
        let b = make_schedule(50, 7, 7000, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vectors.len(), 7);
        assert!(a.vectors[1..].iter().flatten().all(|&d| (0.0..2.0).contains(&d)));
        assert!(a.boundaries.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a.vectors[1], make_schedule(50, 7, 7000, 4).unwrap().vectors[1]);
    }

    #[test]
    fn five_and_seven_are_asynchronous() {
        let s5 = make_schedule(2, 5, 35_000, 0).unwrap();
        let s7 = make_schedule(2, 7, 35_000, 0).unwrap();
        assert!(s5.boundaries.iter().all(|b| !s7.boundaries.contains(b)));
        assert_eq!(s5.concept(0), 0);
        assert_eq!(s5.concept(34_999), 4);
        assert_eq!(s7.concept(5_000), 1);
    }

    #[test]
    fn zero_concepts_rejected() {
        assert!(make_schedule(2, 0, 10, 0).is_err());
    }

    #[test]
    fn balanced_and_deterministic() {
        let spec = SynthSpec {
            n_source: 301,
            n_target: 100,
            ..Default::default()
        };
        let (s, t) = synth_streams(&spec).unwrap();
        assert_eq!((s.len(), t.len()), (301, 100));
        let mut counts = [0usize; 3];
        s.iter().for_each(|x| counts[x.label.unwrap()] += 1);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        assert_eq!(synth_streams(&spec).unwrap().0, s);
        assert!(s.iter().flat_map(|x| &x.features).all(|v| *v > 0.0 && *v < 1.0));
        assert!(t.iter().all(|x| x.domain == Domain::Target));
    }
}
