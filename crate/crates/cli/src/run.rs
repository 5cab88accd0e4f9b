use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use acdc::config::RunConfig;
use acdc::drift::{apply_drift, make_schedule, DriftSchedule};
use acdc::evolving::ThresholdRule;
use acdc::io::{
    load_stream, read_engine_checkpoint, read_manifest, skip_samples, write_checkpoint, write_engine_checkpoint,
    write_manifest, DatasetManifest, MetricsWriter,
};
use acdc::net::AcdcModel;
use acdc::stream::{Domain, Engine, EngineState, SampleIter, WindowRecord};
use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};

use crate::{ensure_dir, Failure};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    Linear,
    Exponential,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue the interrupted run stored in this directory.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    noise_fraction: Option<f64>,
    #[arg(long, value_enum)]
    threshold_rule: Option<RuleArg>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    stream_seed: Option<u64>,
    #[arg(long)]
    drift_seed: Option<u64>,
    #[arg(long)]
    source_concepts: Option<usize>,
    #[arg(long)]
    target_concepts: Option<usize>,
    /// Ablation A: drop the domain classifier.
    #[arg(long)]
    no_daa: bool,
    /// Ablation B: freeze all widths.
    #[arg(long)]
    no_evolution: bool,
    /// Ablation C: start the encoder with a single node.
    #[arg(long)]
    single_node_dae: bool,
    /// Ablation D: DAA growth no longer forces DISC growth.
    #[arg(long)]
    no_daa_signal: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Stop after this many windows, leaving a resumable checkpoint.
    #[arg(long)]
    max_windows: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> acdc::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        over!(name, window_size, epochs, learning_rate, momentum, alpha1, alpha2, noise_fraction);
        over!(model_seed, stream_seed, drift_seed, source_concepts, target_concepts, checkpoint_every);
        if let Some(p) = &self.source {
            c.source_manifest = Some(p.clone());
        }
        if let Some(p) = &self.target {
            c.target_manifest = Some(p.clone());
        }
        if let Some(p) = &self.out {
            c.output_dir = Some(p.clone());
        }
        if let Some(r) = self.threshold_rule {
            c.threshold_rule = match r {
                RuleArg::Linear => ThresholdRule::Linear,
                RuleArg::Exponential => ThresholdRule::Exponential,
            };
        }
        c.no_daa |= self.no_daa;
        c.no_evolution |= self.no_evolution;
        c.single_node_dae |= self.single_node_dae;
        c.no_daa_signal |= self.no_daa_signal;
        c.validate()?;
        Ok(c)
    }
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }
    fn timing(&self) -> PathBuf {
        self.root.join("timing.csv")
    }
    fn engine(&self) -> PathBuf {
        self.root.join("engine.ckpt")
    }
    fn model(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }
    fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
    fn manifest(&self, domain: Domain) -> PathBuf {
        self.root.join(match domain {
            Domain::Source => "source.toml",
            Domain::Target => "target.toml",
        })
    }
    fn schedule(&self, domain: Domain) -> PathBuf {
        self.root.join(match domain {
            Domain::Source => "source_schedule.json",
            Domain::Target => "target_schedule.json",
        })
    }
}

fn manifests(c: &RunConfig) -> Result<(DatasetManifest, DatasetManifest), Failure> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| Failure::Usage(anyhow!("no {what} manifest given (--{what} or {what}_manifest)")))
    };
    let s = read_manifest(&need(&c.source_manifest, "source")?)?;
    let t = read_manifest(&need(&c.target_manifest, "target")?)?;
    if s.role != Domain::Source || t.role != Domain::Target {
        return Err(Failure::Usage(anyhow!(
            "manifest roles are {:?}/{:?}, expected source/target",
            s.role,
            t.role
        )));
    }
    if s.feature_dim != t.feature_dim || s.classes != t.classes {
        return Err(Failure::Usage(anyhow!(
            "source (u={}, m={}) and target (u={}, m={}) disagree",
            s.feature_dim,
            s.classes,
            t.feature_dim,
            t.classes
        )));
    }
    Ok((s, t))
}

fn schedules(c: &RunConfig, s: &DatasetManifest, t: &DatasetManifest) -> acdc::Result<[Option<DriftSchedule>; 2]> {
    let make = |z: usize, m: &DatasetManifest, seed: u64| -> acdc::Result<Option<DriftSchedule>> {
        if z <= 1 {
            return Ok(None);
        }
        make_schedule(m.feature_dim, z, m.samples, seed).map(Some)
    };
    Ok([
        make(c.source_concepts, s, c.drift_seed)?,
        make(c.target_concepts, t, c.drift_seed.wrapping_add(1))?,
    ])
}

fn open(m: &DatasetManifest, schedule: Option<DriftSchedule>, skip: u64) -> acdc::Result<SampleIter<'static>> {
    let stream = load_stream(m)?;
    let stream: SampleIter<'static> = match schedule {
        None => stream,
        Some(sch) => Box::new(stream.map(move |r| {
            r.map(|mut s| {
                s.features = apply_drift(&s.features, &sch, s.index);
                s
            })
        })),
    };
    skip_samples(stream, skip)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let (config, dir, mut engine, resumed) = match &args.resume {
        Some(root) => {
            let dir = RunDir { root: root.clone() };
            let config = RunConfig::load(&dir.config())?;
            let engine = read_engine_checkpoint(&dir.engine())?;
            (config, dir, engine, true)
        }
        None => {
            let config = args.resolve()?;
            let root = config
                .output_dir
                .clone()
                .ok_or_else(|| Failure::Usage(anyhow!("no output directory (--out or output_dir)")))?;
            let dir = RunDir { root };
            let (s, t) = manifests(&config)?;
            let model = AcdcModel::new(s.feature_dim, s.classes, config.flags(), config.hyper(), config.model_seed)?;
            let state = EngineState::new(s.samples, t.samples, config.stream_seed);
            let engine = Engine::new(model, config.engine(), state)?;
            (config, dir, engine, false)
        }
    };
    ensure_dir(&dir.root)?;
    let (src_m, tgt_m) = manifests(&config)?;
    let [src_sched, tgt_sched] = schedules(&config, &src_m, &tgt_m)?;

    if !resumed {
        let mut saved = config.clone();
        saved.source_manifest = Some("source.toml".into());
        saved.target_manifest = Some("target.toml".into());
        saved.output_dir = None;
        let abs = |m: &DatasetManifest, domain: Domain| -> acdc::Result<()> {
            let mut m = m.clone();
            m.path = std::path::absolute(&m.path).unwrap_or(m.path);
            write_manifest(&m, &dir.manifest(domain))
        };
        abs(&src_m, Domain::Source)?;
        abs(&tgt_m, Domain::Target)?;
        fs::write(dir.config(), saved.to_toml()?).context("writing config.toml")?;
        for (sched, domain) in [(&src_sched, Domain::Source), (&tgt_sched, Domain::Target)] {
            if let Some(s) = sched {
                write_json(s, &dir.schedule(domain))?;
            }
        }
    }

    let tp = &engine.state.throughput;
    let mut source = open(&src_m, src_sched, tp.received_source)?;
    let mut target = open(&tgt_m, tgt_sched, tp.received_target)?;
    let mut writer = if resumed {
        MetricsWriter::resume(&dir.metrics(), Some(&dir.timing()), engine.state.windows_done)?
    } else {
        MetricsWriter::create(&dir.metrics(), Some(&dir.timing()))?
    };

    let mut last: Option<WindowRecord> = None;
    let mut processed = 0usize;
    loop {
        if args.max_windows.is_some_and(|m| processed >= m) {
            break;
        }
        let Some(record) = engine.step(&mut source, &mut target)? else {
            break;
        };
        writer.append(&record)?;
        processed += 1;
        if config.checkpoint_every > 0 && engine.state.windows_done % config.checkpoint_every == 0 {
            writer.flush()?;
            write_engine_checkpoint(&engine, &dir.engine())?;
        }
        last = Some(record);
    }
    writer.finish()?;
    write_engine_checkpoint(&engine, &dir.engine())?;
    if !engine.finished() {
        println!(
            "stopped after window {}; resume with --resume {}",
            engine.state.windows_done,
            dir.root.display()
        );
        return Ok(());
    }
    write_checkpoint(&engine.model, &dir.model())?;

    let widths = engine.model.widths();
    let cumulative = match engine.state.target_scored {
        0 => "n/a".to_string(),
        n => format!("{:.4}", engine.state.target_correct as f64 / n as f64),
    };
    let summary = format!(
        "run: {}\nablation: {}\nwindows: {}\nsamples: {} source, {} target\n\
         final cumulative target accuracy: {}\nfinal source accuracy: {}\n\
         final widths: dae={} daa={} disc={}\ntotal time: {:.2} s\n",
        config.name,
        config.flags().label(),
        engine.state.windows_done,
        engine.state.throughput.received_source,
        engine.state.throughput.received_target,
        cumulative,
        last.as_ref()
            .and_then(|r| r.source_accuracy)
            .map_or("n/a".into(), |a| format!("{a:.4}")),
        widths.dae,
        widths.daa,
        widths.disc,
        started.elapsed().as_secs_f64(),
    );
    fs::write(dir.summary(), &summary).context("writing summary.txt")?;
    print!("{summary}");
    Ok(())
}
