use std::fs;
use std::path::PathBuf;

use acdc::drift::{drift_stream, make_schedule, synth_streams, SynthSpec};
use acdc::io::{write_manifest, write_samples, DatasetManifest, Format};
use acdc::stream::{Domain, Sample};
use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};

use crate::{ensure_dir, Failure};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for data files and manifests.
    #[arg(long)]
    out: PathBuf,
    /// TOML generator spec; flags below override its values.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    u: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_source: Option<u64>,
    #[arg(long)]
    n_target: Option<u64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    rotation: Option<f64>,
    #[arg(long)]
    translation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    source_concepts: usize,
    #[arg(long, default_value_t = 7)]
    target_concepts: usize,
    #[arg(long, default_value_t = 0)]
    drift_seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Write target labels (used for scoring only).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    target_labels: bool,
}

pub fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| Failure::Usage(anyhow!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { spec.$f = v; } )* };
    }
    over!(u, m, n_source, n_target, separation, noise, rotation, translation, seed);
    spec.validate()?;
    if args.source_concepts == 0 || args.target_concepts == 0 {
        return Err(Failure::Usage(anyhow!("concept counts must be at least 1")));
    }

    let (mut source, mut target) = synth_streams(&spec)?;
    let s_sched = make_schedule(spec.u, args.source_concepts, spec.n_source, args.drift_seed)?;
    let t_sched = make_schedule(spec.u, args.target_concepts, spec.n_target, args.drift_seed.wrapping_add(1))?;
    drift_stream(&mut source, &s_sched);
    drift_stream(&mut target, &t_sched);

    ensure_dir(&args.out)?;
    let (format, ext) = match args.format {
        FormatArg::Csv => (Format::Csv, "csv"),
        FormatArg::Binary => (Format::Binary, "bin"),
    };
    let write = |samples: &[Sample], domain: Domain, labeled: bool| -> Result<(), Failure> {
        let stem = match domain {
            Domain::Source => "source",
            Domain::Target => "target",
        };
        let file = format!("{stem}.{ext}");
        write_samples(samples, &args.out.join(&file), format, labeled, spec.m)?;
        let manifest = DatasetManifest {
            name: format!("synth-{stem}"),
            role: domain,
            feature_dim: spec.u,
            classes: spec.m,
            path: file.into(),
            format,
            labeled,
            samples: samples.len() as u64,
        };
        write_manifest(&manifest, &args.out.join(format!("{stem}.toml")))?;
        Ok(())
    };
    write(&source, Domain::Source, true)?;
    write(&target, Domain::Target, args.target_labels)?;

    let spec_text = toml::to_string(&spec).context("serializing spec")?;
    fs::write(args.out.join("synth.toml"), spec_text).context("writing synth.toml")?;
    let schedules = serde_json::to_string_pretty(&[&s_sched, &t_sched]).context("serializing schedules")?;
    fs::write(args.out.join("schedules.json"), schedules).context("writing schedules.json")?;
    println!(
        "wrote {} source and {} target samples to {}",
        source.len(),
        target.len(),
        args.out.display()
    );
    Ok(())
}
