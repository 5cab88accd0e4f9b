use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use acdc::config::RunConfig;
use acdc::io::read_metrics;
use anyhow::anyhow;
use clap::Args;

use crate::Failure;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files or run directories containing `metrics.csv`.
    traces: Vec<PathBuf>,
}

#[derive(Debug, Default)]
struct Group {
    accuracy: Vec<f64>,
    widths: Vec<[f64; 3]>,
    windows: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Experiment name: the run config's name with its ablation label, or the
/// parent directory when no config sits next to the trace.
fn experiment(metrics: &Path) -> String {
    let dir = metrics.parent().unwrap_or(Path::new("."));
    match RunConfig::load(&dir.join("config.toml")) {
        Ok(c) => format!("{} [{}]", c.name, c.flags().label()),
        Err(_) => dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
    }
}

pub fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    if args.traces.is_empty() {
        return Err(Failure::Usage(anyhow!("no input: pass at least one metrics file or run directory")));
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for p in &args.traces {
        let path = if p.is_dir() { p.join("metrics.csv") } else { p.clone() };
        let rows = read_metrics(&path)?;
        let Some(last) = rows.last() else {
            return Err(Failure::Runtime(anyhow!("{}: trace has no windows", path.display())));
        };
        let acc = rows
            .iter()
            .rev()
            .find_map(|r| r.cumulative_target_acc)
            .ok_or_else(|| Failure::Runtime(anyhow!("{}: no scored target windows", path.display())))?;
        let g = groups.entry(experiment(&path)).or_default();
        g.accuracy.push(acc);
        g.widths.push([last.r_dae as f64, last.r_daa as f64, last.r_disc as f64]);
        g.windows.push(rows.len() as f64);
    }
    println!(
        "{:<32} {:>5} {:>18} {:>8} {:>8} {:>8} {:>8}",
        "experiment", "runs", "target acc (%)", "R_dae", "R_daa", "R_disc", "windows"
    );
    for (name, g) in &groups {
        let (m, s) = mean_std(&g.accuracy);
        let col = |i: usize| mean_std(&g.widths.iter().map(|w| w[i]).collect::<Vec<_>>()).0;
        println!(
            "{:<32} {:>5} {:>18} {:>8.1} {:>8.1} {:>8.1} {:>8.0}",
            name,
            g.accuracy.len(),
            format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s),
            col(0),
            col(1),
            col(2),
            mean_std(&g.windows).0
        );
    }
    Ok(())
}
