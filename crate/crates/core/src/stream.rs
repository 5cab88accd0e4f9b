//! Prequential test-then-train loop over an interleaved source/target pair
//! of streams.
//!
//! Each window of `N_m` samples is first scored with the current model,
//! then paired and permuted, then used for `epochs` passes of training.
//! Structural adaptation only happens during the first pass. A window is
//! dropped once processed.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::net::{AcdcModel, Change, Losses, ModuleKind, Widths};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Always present on source samples. On target samples it is only
    /// used to score predictions and never reaches the model.
    pub label: Option<usize>,
    pub domain: Domain,
    /// Position within its own stream.
    pub index: u64,
}

pub type SampleIter<'a> = Box<dyn Iterator<Item = Result<Sample>> + 'a>;

/// Arrival bookkeeping for two streams of known length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputState {
    pub total_source: u64,
    pub total_target: u64,
    pub received_source: u64,
    pub received_target: u64,
}

impl ThroughputState {
    pub fn new(total_source: u64, total_target: u64) -> Self {
        ThroughputState {
            total_source,
            total_target,
            received_source: 0,
            received_target: 0,
        }
    }

    pub fn remaining_source(&self) -> u64 {
        self.total_source - self.received_source
    }

    pub fn remaining_target(&self) -> u64 {
        self.total_target - self.received_target
    }

    pub fn exhausted(&self) -> bool {
        self.remaining_source() == 0 && self.remaining_target() == 0
    }

    /// `(n_S - received_S) / (n_S + n_T - received_S - received_T)`, or
    /// `None` once both streams are exhausted.
    pub fn source_probability(&self) -> Option<f64> {
        let rs = self.remaining_source();
        let total = rs + self.remaining_target();
        (total > 0).then(|| rs as f64 / total as f64)
    }

    pub fn record(&mut self, domain: Domain) {
        match domain {
            Domain::Source => {
                assert!(self.received_source < self.total_source, "source stream over-read");
                self.received_source += 1;
            }
            Domain::Target => {
                assert!(self.received_target < self.total_target, "target stream over-read");
                self.received_target += 1;
            }
        }
    }
}

/// Picks the stream the next sample arrives from; `None` at end of stream.
pub fn next_sample_domain<R: Rng + ?Sized>(state: &ThroughputState, rng: &mut R) -> Option<Domain> {
    let p = state.source_probability()?;
    Some(if state.remaining_target() == 0 {
        Domain::Source
    } else if state.remaining_source() == 0 {
        Domain::Target
    } else if rng.random::<f64>() < p {
        Domain::Source
    } else {
        Domain::Target
    })
}

/// One processing batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowPair {
    pub source: Vec<Sample>,
    pub target: Vec<Sample>,
    /// `(source position, target position)`; empty until paired.
    pub pairs: Vec<(usize, usize)>,
}

impl WindowPair {
    pub fn len(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws up to `size` samples across both streams. Returns `None` once
/// both are exhausted.
pub fn fill_window<'a, R: Rng + ?Sized>(
    source: &mut SampleIter<'a>,
    target: &mut SampleIter<'a>,
    state: &mut ThroughputState,
    size: usize,
    rng: &mut R,
) -> Result<Option<WindowPair>> {
    let mut window = WindowPair::default();
    while window.len() < size {
        let Some(domain) = next_sample_domain(state, rng) else {
            break;
        };
        let iter = match domain {
            Domain::Source => &mut *source,
            Domain::Target => &mut *target,
        };
        let sample = iter.next().transpose()?.ok_or_else(|| {
            AcdcError::Precondition(format!(
                "{domain:?} stream ended before its declared length ({state:?})"
            ))
        })?;
        if sample.domain != domain {
            return Err(AcdcError::Precondition(format!(
                "sample {} tagged {:?} arrived on the {domain:?} stream",
                sample.index, sample.domain
            )));
        }
        state.record(domain);
        match domain {
            Domain::Source => window.source.push(sample),
            Domain::Target => window.target.push(sample),
        }
    }
    Ok((!window.is_empty()).then_some(window))
}

/// Aligns two windows of possibly different lengths.
///
/// The longer side (source on ties) keeps its arrival order; the shorter
/// side is tiled with independent seeded permutations of itself and cut to
/// length. Returns `(source position, target position)` pairs.
pub fn pair_permute<R: Rng + ?Sized>(source_len: usize, target_len: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if source_len == 0 || target_len == 0 {
        return Vec::new();
    }
    let (long, short) = (source_len.max(target_len), source_len.min(target_len));
    let mut cycled = Vec::with_capacity(long + short);
    while cycled.len() < long {
        let mut perm: Vec<usize> = (0..short).collect();
        perm.shuffle(rng);
        cycled.extend(perm);
    }
    cycled.truncate(long);
    if source_len >= target_len {
        cycled.into_iter().enumerate().collect()
    } else {
        cycled.into_iter().enumerate().map(|(t, s)| (s, t)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Samples per window, `N_m`.
    pub window_size: usize,
    /// Internal epochs per window, `kappa`.
    pub epochs: usize,
    /// Keep per-sample target predictions in each record.
    pub record_predictions: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window_size: 1000,
            epochs: 1,
            record_predictions: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(AcdcError::Config(format!("window size {} < 2", self.window_size)));
        }
        if self.epochs < 1 {
            return Err(AcdcError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub grow_dae: u32,
    pub prune_dae: u32,
    pub grow_daa: u32,
    pub prune_daa: u32,
    pub grow_disc: u32,
    pub prune_disc: u32,
}

impl EventCounts {
    fn record(&mut self, kind: ModuleKind, change: Change) {
        let slot = match (kind, change) {
            (ModuleKind::Dae, Change::Grew) => &mut self.grow_dae,
            (ModuleKind::Dae, Change::Pruned) => &mut self.prune_dae,
            (ModuleKind::Daa, Change::Grew) => &mut self.grow_daa,
            (ModuleKind::Daa, Change::Pruned) => &mut self.prune_daa,
            (ModuleKind::Disc, Change::Grew) => &mut self.grow_disc,
            (ModuleKind::Disc, Change::Pruned) => &mut self.prune_disc,
        };
        *slot += 1;
    }

    pub fn grows(&self) -> u32 {
        self.grow_dae + self.grow_daa + self.grow_disc
    }

    pub fn prunes(&self) -> u32 {
        self.prune_dae + self.prune_daa + self.prune_disc
    }
}

/// Everything measured for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub source_count: usize,
    pub target_count: usize,
    pub target_accuracy: Option<f64>,
    pub cumulative_target_accuracy: Option<f64>,
    pub source_accuracy: Option<f64>,
    /// Mean per-pair losses over every learning pass of the window.
    pub losses: Losses,
    pub widths: Widths,
    pub events: EventCounts,
    pub h_divergence: Option<f64>,
    pub trained: bool,
    pub wall_ms: f64,
    pub fingerprint_at_predict: u64,
    pub fingerprint_at_end: u64,
    pub predictions: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub rows: Vec<WindowRecord>,
}

impl MetricsTrace {
    pub fn last(&self) -> Option<&WindowRecord> {
        self.rows.last()
    }
}

/// Resumable loop state, independent of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub throughput: ThroughputState,
    pub rng: ChaCha8Rng,
    pub windows_done: usize,
    pub target_correct: u64,
    pub target_scored: u64,
}

impl EngineState {
    pub fn new(total_source: u64, total_target: u64, seed: u64) -> Self {
        EngineState {
            throughput: ThroughputState::new(total_source, total_target),
            rng: ChaCha8Rng::seed_from_u64(seed),
            windows_done: 0,
            target_correct: 0,
            target_scored: 0,
        }
    }
}

/// Pre-training scores of a window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowScores {
    pub predictions: Vec<usize>,
    pub target_accuracy: Option<f64>,
    pub source_accuracy: Option<f64>,
    pub h_divergence: Option<f64>,
    pub fingerprint: u64,
}

/// Scores a window without touching the model.
pub fn score_window(model: &AcdcModel, window: &WindowPair) -> Result<WindowScores> {
    let mut predictions = Vec::with_capacity(window.target.len());
    let (mut t_hit, mut t_lab) = (0usize, 0usize);
    for s in &window.target {
        let (class, _) = model.predict(&s.features)?;
        predictions.push(class);
        if let Some(label) = s.label {
            t_lab += 1;
            t_hit += usize::from(label == class);
        }
    }
    let mut s_hit = 0usize;
    for s in &window.source {
        let (class, _) = model.predict(&s.features)?;
        s_hit += usize::from(s.label == Some(class));
    }
    let ratio = |hit: usize, n: usize| (n > 0).then(|| hit as f64 / n as f64);
    let h_divergence = if window.source.is_empty() || window.target.is_empty() {
        None
    } else {
        let src: Vec<&[f64]> = window.source.iter().map(|s| s.features.as_slice()).collect();
        let tgt: Vec<&[f64]> = window.target.iter().map(|s| s.features.as_slice()).collect();
        Some(model.empirical_h_divergence(&src, &tgt)?)
    };
    Ok(WindowScores {
        predictions,
        target_accuracy: ratio(t_hit, t_lab),
        source_accuracy: ratio(s_hit, window.source.len()),
        h_divergence,
        fingerprint: model.fingerprint(),
    })
}

/// Outcome of the training half of a window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrainSummary {
    pub losses: Losses,
    pub events: EventCounts,
    pub trained: bool,
}

/// Pairs the window and runs `epochs` passes; adaptation only in the first.
pub fn train_window<R: Rng + ?Sized>(
    model: &mut AcdcModel,
    window: &mut WindowPair,
    epochs: usize,
    rng: &mut R,
) -> Result<TrainSummary> {
    window.pairs = pair_permute(window.source.len(), window.target.len(), rng);
    let mut summary = TrainSummary::default();
    if window.source.is_empty() {
        return Ok(summary);
    }
    let mut steps = 0usize;
    if window.target.is_empty() {
        for _ in 0..epochs {
            for s in &window.source {
                let label = source_label(s)?;
                add_losses(&mut summary.losses, model.learn_source_only(&s.features, label)?);
                steps += 1;
            }
        }
        finish_losses(&mut summary, steps);
        return Ok(summary);
    }
    for epoch in 0..epochs {
        for &(si, ti) in &window.pairs {
            let s = &window.source[si];
            let t = &window.target[ti];
            let label = source_label(s)?;
            if epoch == 0 {
                let report = model.adapt_step(&s.features, label, &t.features)?;
                for kind in ModuleKind::ALL {
                    if let Some(change) = report.change(kind) {
                        summary.events.record(kind, change);
                    }
                }
            }
            add_losses(&mut summary.losses, model.learn_step(&s.features, label, &t.features)?);
            steps += 1;
        }
    }
    finish_losses(&mut summary, steps);
    Ok(summary)
}

fn source_label(s: &Sample) -> Result<usize> {
    s.label
        .ok_or_else(|| AcdcError::Precondition(format!("source sample {} has no label", s.index)))
}

fn add_losses(acc: &mut Losses, l: Losses) {
    acc.dae += l.dae;
    acc.daa += l.daa;
    acc.disc += l.disc;
}

fn finish_losses(summary: &mut TrainSummary, steps: usize) {
    let n = steps as f64;
    summary.losses.dae /= n;
    summary.losses.daa /= n;
    summary.losses.disc /= n;
    summary.trained = true;
}

/// A model plus the loop state that feeds it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Engine {
    pub config: EngineConfig,
    pub model: AcdcModel,
    pub state: EngineState,
}

impl Engine {
    pub fn new(model: AcdcModel, config: EngineConfig, state: EngineState) -> Result<Self> {
        config.validate()?;
        Ok(Engine { config, model, state })
    }

    pub fn finished(&self) -> bool {
        self.state.throughput.exhausted()
    }

    /// Processes one window; `None` when both streams are exhausted.
    pub fn step<'a>(&mut self, source: &mut SampleIter<'a>, target: &mut SampleIter<'a>) -> Result<Option<WindowRecord>> {
        let index = self.state.windows_done;
        self.step_inner(source, target)
            .map_err(|e| AcdcError::Window {
                window: index,
                source: Box::new(e),
            })
    }

    fn step_inner<'a>(&mut self, source: &mut SampleIter<'a>, target: &mut SampleIter<'a>) -> Result<Option<WindowRecord>> {
        let started = Instant::now();
        let state = &mut self.state;
        let Some(mut window) = fill_window(
            source,
            target,
            &mut state.throughput,
            self.config.window_size,
            &mut state.rng,
        )?
        else {
            return Ok(None);
        };

        let scores = score_window(&self.model, &window)?;
        if let Some(acc) = scores.target_accuracy {
            let labeled = window.target.iter().filter(|s| s.label.is_some()).count() as u64;
            state.target_scored += labeled;
            state.target_correct += (acc * labeled as f64).round() as u64;
        }

        let summary = train_window(&mut self.model, &mut window, self.config.epochs, &mut state.rng)?;

        let record = WindowRecord {
            window: state.windows_done,
            source_count: window.source.len(),
            target_count: window.target.len(),
            target_accuracy: scores.target_accuracy,
            cumulative_target_accuracy: (state.target_scored > 0)
                .then(|| state.target_correct as f64 / state.target_scored as f64),
            source_accuracy: scores.source_accuracy,
            losses: summary.losses,
            widths: self.model.widths(),
            events: summary.events,
            h_divergence: scores.h_divergence,
            trained: summary.trained,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            fingerprint_at_predict: scores.fingerprint,
            fingerprint_at_end: self.model.fingerprint(),
            predictions: if self.config.record_predictions {
                scores.predictions
            } else {
                Vec::new()
            },
        };
        state.windows_done += 1;
        Ok(Some(record))
    }

    /// Runs to the end of both streams, handing every record to `sink`.
    pub fn run_with<'a, F>(&mut self, source: &mut SampleIter<'a>, target: &mut SampleIter<'a>, mut sink: F) -> Result<()>
    where
        F: FnMut(&WindowRecord) -> Result<()>,
    {
        while let Some(record) = self.step(source, target)? {
            sink(&record)?;
        }
        Ok(())
    }
}

/// Runs the whole prequential protocol from a fresh loop state.
pub fn prequential_run<'a>(
    model: AcdcModel,
    mut source: SampleIter<'a>,
    mut target: SampleIter<'a>,
    totals: (u64, u64),
    config: EngineConfig,
    stream_seed: u64,
) -> Result<(AcdcModel, MetricsTrace)> {
    let state = EngineState::new(totals.0, totals.1, stream_seed);
    let mut engine = Engine::new(model, config, state)?;
    let mut trace = MetricsTrace::default();
    engine.run_with(&mut source, &mut target, |r| {
        trace.rows.push(r.clone());
        Ok(())
    })?;
    Ok((engine.model, trace))
}

/// Boxes an in-memory sample list as a stream.
pub fn iter_samples<'a>(samples: &'a [Sample]) -> SampleIter<'a> {
    Box::new(samples.iter().cloned().map(Ok))
}

/// Boxes an owned sample list as a stream.
pub fn into_stream(samples: Vec<Sample>) -> SampleIter<'static> {
    Box::new(samples.into_iter().map(Ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn samples(domain: Domain, n: usize, u: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                features: vec![i as f64 / n as f64; u],
                label: Some(i % 2),
                domain,
                index: i as u64,
            })
            .collect()
    }

    #[test]
    fn source_probability_from_remaining_counts() {
        let st = ThroughputState::new(70_000, 9_298);
        assert!((st.source_probability().unwrap() - 70_000.0 / 79_298.0).abs() < 1e-15);
        assert!((st.source_probability().unwrap() - 0.8827).abs() < 5e-5);

        let mut st = ThroughputState::new(3, 1);
        st.record(Domain::Target);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            assert_eq!(next_sample_domain(&st, &mut rng), Some(Domain::Source));
            st.record(Domain::Source);
        }
        assert_eq!(next_sample_domain(&st, &mut rng), None);
    }

    #[test]
    fn pairing_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pair_permute(3, 3, &mut rng);
        let s: BTreeSet<_> = p.iter().map(|x| x.0).collect();
        let t: BTreeSet<_> = p.iter().map(|x| x.1).collect();
        assert_eq!((s.len(), t.len()), (3, 3));

        let p = pair_permute(3, 2, &mut rng);
        assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        let t: BTreeSet<_> = p.iter().map(|x| x.1).collect();
        assert_eq!(t, BTreeSet::from([0, 1]));

        let p = pair_permute(1, 5, &mut rng);
        assert_eq!(p, (0..5).map(|t| (0, t)).collect::<Vec<_>>());
        assert!(pair_permute(0, 4, &mut rng).is_empty());
    }

    #[test]
    fn fill_window_sizes_and_tail() {
        let src = samples(Domain::Source, 300, 2);
        let tgt = samples(Domain::Target, 137, 2);
        let mut s = iter_samples(&src);
        let mut t = iter_samples(&tgt);
        let mut st = ThroughputState::new(300, 137);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sizes = Vec::new();
        while let Some(w) = fill_window(&mut s, &mut t, &mut st, 100, &mut rng).unwrap() {
            sizes.push(w.len());
        }
        assert_eq!(sizes, vec![100, 100, 100, 100, 37]);
        assert!(st.exhausted());
    }

    #[test]
    fn fill_window_detects_short_streams() {
        let src = samples(Domain::Source, 5, 2);
        let mut s = iter_samples(&src);
        let mut t = iter_samples(&[]);
        let mut st = ThroughputState::new(10, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(fill_window(&mut s, &mut t, &mut st, 100, &mut rng).is_err());
    }

    #[test]
    fn one_sided_windows() {
        let model = AcdcModel::new(2, 2, Default::default(), Default::default(), 0).unwrap();
        let src = samples(Domain::Source, 40, 2);
        let (model, trace) = prequential_run(
            model,
            iter_samples(&src),
            iter_samples(&[]),
            (40, 0),
            EngineConfig { window_size: 10, ..Default::default() },
            0,
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 4);
        assert!(trace.rows.iter().all(|r| r.trained && r.target_accuracy.is_none()));
        assert!(trace.rows.iter().all(|r| r.source_accuracy.is_some() && r.losses.daa == 0.0));
        assert!(trace.rows.iter().all(|r| r.events.grows() + r.events.prunes() == 0));
        assert_eq!(trace.rows[3].fingerprint_at_end, model.fingerprint());
        assert_ne!(trace.rows[0].fingerprint_at_predict, trace.rows[0].fingerprint_at_end);

        let model = AcdcModel::new(2, 2, Default::default(), Default::default(), 0).unwrap();
        let tgt = samples(Domain::Target, 25, 2);
        let (_, trace) = prequential_run(
            model,
            iter_samples(&[]),
            iter_samples(&tgt),
            (0, 25),
            EngineConfig { window_size: 10, ..Default::default() },
            0,
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 3);
        assert!(trace.rows.iter().all(|r| r.target_accuracy.is_some() && !r.trained));
    }
}
