//! Feature files, manifests, metrics CSV and checkpoints.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::net::AcdcModel;
use crate::stream::{Domain, Engine, Sample, SampleIter, WindowRecord};

pub const BINARY_MAGIC: &[u8; 8] = b"ACDCBIN1";
pub const METRICS_VERSION_LINE: &str = "# acdc-metrics v1";
pub const METRICS_HEADER: [&str; 19] = [
    "window",
    "source_count",
    "target_count",
    "target_acc",
    "cumulative_target_acc",
    "source_acc",
    "loss_dae",
    "loss_daa",
    "loss_disc",
    "r_dae",
    "r_daa",
    "r_disc",
    "grow_dae",
    "prune_dae",
    "grow_daa",
    "prune_daa",
    "grow_disc",
    "prune_disc",
    "h_divergence",
];
pub const TIMING_HEADER: [&str; 2] = ["window", "wall_ms"];
const CHECKPOINT_MAGIC: &str = "ACDC-CHECKPOINT v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Binary,
}

/// Describes one feature file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub role: Domain,
    pub feature_dim: usize,
    pub classes: usize,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
    /// Rows carry a trailing class id. Required for source files; on target
    /// files the labels are only used for scoring.
    pub labeled: bool,
    pub samples: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.classes < 2 {
            return Err(AcdcError::Config(format!(
                "manifest {}: need feature_dim >= 1 and classes >= 2",
                self.name
            )));
        }
        if self.role == Domain::Source && !self.labeled {
            return Err(AcdcError::Config(format!("manifest {}: source data must be labeled", self.name)));
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| AcdcError::io(path, e))?;
    let mut m: DatasetManifest =
        toml::from_str(&text).map_err(|e| AcdcError::Config(format!("{}: {e}", path.display())))?;
    if m.path.is_relative() {
        if let Some(dir) = path.parent() {
            m.path = dir.join(&m.path);
        }
    }
    m.validate()?;
    Ok(m)
}

/// Writes `manifest` as TOML. The data path is stored as given.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| AcdcError::Config(e.to_string()))?;
    fs::write(path, text).map_err(|e| AcdcError::io(path, e))
}

/// Opens the file a manifest points at as a single-pass sample stream.
pub fn load_stream(manifest: &DatasetManifest) -> Result<SampleIter<'static>> {
    manifest.validate()?;
    match manifest.format {
        Format::Csv => csv_stream(manifest),
        Format::Binary => binary_stream(manifest),
    }
}

/// Reads a whole stream and checks the declared sample count.
pub fn read_all(manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    let samples = load_stream(manifest)?.collect::<Result<Vec<_>>>()?;
    if samples.len() as u64 != manifest.samples {
        return Err(AcdcError::Config(format!(
            "manifest {} declares {} samples, file has {}",
            manifest.name,
            manifest.samples,
            samples.len()
        )));
    }
    Ok(samples)
}

fn csv_stream(manifest: &DatasetManifest) -> Result<SampleIter<'static>> {
    let path = manifest.path.clone();
    let reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(&path)
        .map_err(|e| csv_error(&path, e))?;
    let m = manifest.clone();
    let mut index = 0u64;
    Ok(Box::new(reader.into_records().map(move |rec| {
        let rec = rec.map_err(|e| csv_error(&path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = |message: String| AcdcError::Parse {
            path: path.clone(),
            line,
            message,
        };
        let expected = m.feature_dim + usize::from(m.labeled);
        if rec.len() != expected {
            return Err(parse_err(format!("expected {expected} columns, found {}", rec.len())));
        }
        let features = rec
            .iter()
            .take(m.feature_dim)
            .map(|f| {
                let v: f64 = f.trim().parse().map_err(|_| parse_err(format!("bad number {f:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(format!("non-finite value {f:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = if m.labeled {
            let f = rec[m.feature_dim].trim();
            let y: usize = f.parse().map_err(|_| parse_err(format!("bad label {f:?}")))?;
            if y >= m.classes {
                return Err(parse_err(format!("label {y} outside 0..{}", m.classes)));
            }
            Some(y)
        } else {
            None
        };
        let s = Sample {
            features,
            label,
            domain: m.role,
            index,
        };
        index += 1;
        Ok(s)
    })))
}

fn csv_error(path: &Path, e: csv::Error) -> AcdcError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AcdcError::io(path, io),
        other => AcdcError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

struct BinaryReader {
    path: PathBuf,
    reader: BufReader<File>,
    manifest: DatasetManifest,
    remaining: u64,
    index: u64,
}

impl BinaryReader {
    fn read_record(&mut self) -> Result<Sample> {
        let u = self.manifest.feature_dim;
        let mut buf = vec![0u8; 8 * u + if self.manifest.labeled { 4 } else { 0 }];
        self.reader.read_exact(&mut buf).map_err(|e| AcdcError::Parse {
            path: self.path.clone(),
            line: self.index + 1,
            message: format!("truncated record: {e}"),
        })?;
        let features = buf[..8 * u]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let label = if self.manifest.labeled {
            let y = u32::from_le_bytes(buf[8 * u..].try_into().expect("4-byte label")) as usize;
            if y >= self.manifest.classes {
                return Err(AcdcError::Parse {
                    path: self.path.clone(),
                    line: self.index + 1,
                    message: format!("label {y} outside 0..{}", self.manifest.classes),
                });
            }
            Some(y)
        } else {
            None
        };
        let s = Sample {
            features,
            label,
            domain: self.manifest.role,
            index: self.index,
        };
        self.index += 1;
        Ok(s)
    }
}

impl Iterator for BinaryReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = self.read_record();
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }
}

fn binary_stream(manifest: &DatasetManifest) -> Result<SampleIter<'static>> {
    let path = manifest.path.clone();
    let file = File::open(&path).map_err(|e| AcdcError::io(&path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; 8 + 4 + 4 + 1 + 8];
    reader.read_exact(&mut header).map_err(|e| AcdcError::io(&path, e))?;
    let bad = |message: String| AcdcError::Parse {
        path: path.clone(),
        line: 0,
        message,
    };
    if &header[..8] != BINARY_MAGIC {
        return Err(bad("not a packed feature file".into()));
    }
    let u = u32::from_le_bytes(header[8..12].try_into().expect("u32")) as usize;
    let m = u32::from_le_bytes(header[12..16].try_into().expect("u32")) as usize;
    let labeled = header[16] != 0;
    let n = u64::from_le_bytes(header[17..25].try_into().expect("u64"));
    if u != manifest.feature_dim || m != manifest.classes || labeled != manifest.labeled {
        return Err(bad(format!(
            "header (u={u}, m={m}, labeled={labeled}) disagrees with manifest {}",
            manifest.name
        )));
    }
    Ok(Box::new(BinaryReader {
        path,
        reader,
        manifest: manifest.clone(),
        remaining: n,
        index: 0,
    }))
}

/// Writes samples in the given format. Labels are written when `labeled`.
pub fn write_samples(samples: &[Sample], path: &Path, format: Format, labeled: bool, classes: usize) -> Result<()> {
    let u = samples.first().map_or(0, |s| s.features.len());
    if let Some(bad) = samples.iter().find(|s| s.features.len() != u) {
        return Err(AcdcError::dim("write_samples", u, bad.features.len()));
    }
    if labeled && samples.iter().any(|s| s.label.is_none()) {
        return Err(AcdcError::Precondition("labeled output requested for unlabeled samples".into()));
    }
    let file = File::create(path).map_err(|e| AcdcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| AcdcError::io(path, e);
    match format {
        Format::Csv => {
            let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            for s in samples {
                let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
                if labeled {
                    row.push(s.label.expect("checked above").to_string());
                }
                cw.write_record(&row).map_err(|e| csv_error(path, e))?;
            }
            cw.flush().map_err(io)?;
        }
        Format::Binary => {
            w.write_all(BINARY_MAGIC).map_err(io)?;
            w.write_all(&(u as u32).to_le_bytes()).map_err(io)?;
            w.write_all(&(classes as u32).to_le_bytes()).map_err(io)?;
            w.write_all(&[u8::from(labeled)]).map_err(io)?;
            w.write_all(&(samples.len() as u64).to_le_bytes()).map_err(io)?;
            for s in samples {
                for v in &s.features {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
                if labeled {
                    w.write_all(&(s.label.expect("checked above") as u32).to_le_bytes()).map_err(io)?;
                }
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The metrics row for a record, in [`METRICS_HEADER`] order.
pub fn metrics_fields(r: &WindowRecord) -> Vec<String> {
    let e = &r.events;
    vec![
        r.window.to_string(),
        r.source_count.to_string(),
        r.target_count.to_string(),
        opt(r.target_accuracy),
        opt(r.cumulative_target_accuracy),
        opt(r.source_accuracy),
        r.losses.dae.to_string(),
        r.losses.daa.to_string(),
        r.losses.disc.to_string(),
        r.widths.dae.to_string(),
        r.widths.daa.to_string(),
        r.widths.disc.to_string(),
        e.grow_dae.to_string(),
        e.prune_dae.to_string(),
        e.grow_daa.to_string(),
        e.prune_daa.to_string(),
        e.grow_disc.to_string(),
        e.prune_disc.to_string(),
        opt(r.h_divergence),
    ]
}

/// Append-only metrics CSV. Wall-clock times go to a separate file so the
/// metrics themselves are reproducible byte for byte.
pub struct MetricsWriter {
    path: PathBuf,
    metrics: csv::Writer<File>,
    timing: Option<(PathBuf, csv::Writer<File>)>,
    last_window: Option<usize>,
}

impl MetricsWriter {
    pub fn create(path: &Path, timing_path: Option<&Path>) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| AcdcError::io(path, e))?;
        writeln!(file, "{METRICS_VERSION_LINE}").map_err(|e| AcdcError::io(path, e))?;
        let mut metrics = csv::Writer::from_writer(file);
        metrics.write_record(METRICS_HEADER).map_err(|e| csv_error(path, e))?;
        let timing = match timing_path {
            Some(tp) => {
                let mut w = csv::Writer::from_path(tp).map_err(|e| csv_error(tp, e))?;
                w.write_record(TIMING_HEADER).map_err(|e| csv_error(tp, e))?;
                Some((tp.to_path_buf(), w))
            }
            None => None,
        };
        Ok(MetricsWriter {
            path: path.to_path_buf(),
            metrics,
            timing,
            last_window: None,
        })
    }

    /// Reopens files written by an interrupted run, keeping only the rows
    /// of the first `windows_done` windows.
    pub fn resume(path: &Path, timing_path: Option<&Path>, windows_done: usize) -> Result<Self> {
        let metrics = truncate_and_append(path, 2 + windows_done)?;
        let timing = match timing_path {
            Some(tp) => Some((tp.to_path_buf(), truncate_and_append(tp, 1 + windows_done)?)),
            None => None,
        };
        Ok(MetricsWriter {
            path: path.to_path_buf(),
            metrics,
            timing,
            last_window: windows_done.checked_sub(1),
        })
    }

    pub fn append(&mut self, r: &WindowRecord) -> Result<()> {
        if self.last_window.is_some_and(|w| r.window <= w) {
            return Err(AcdcError::Precondition(format!(
                "metrics rows must be appended in window order ({} after {:?})",
                r.window, self.last_window
            )));
        }
        self.metrics
            .write_record(metrics_fields(r))
            .map_err(|e| csv_error(&self.path, e))?;
        if let Some((tp, w)) = &mut self.timing {
            w.write_record([r.window.to_string(), format!("{:.3}", r.wall_ms)])
                .map_err(|e| csv_error(tp, e))?;
        }
        self.last_window = Some(r.window);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush().map_err(|e| AcdcError::io(&self.path, e))?;
        if let Some((tp, w)) = &mut self.timing {
            w.flush().map_err(|e| AcdcError::io(tp.as_path(), e))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.metrics.flush().map_err(|e| AcdcError::io(&self.path, e))?;
        if let Some((tp, w)) = &mut self.timing {
            w.flush().map_err(|e| AcdcError::io(tp.as_path(), e))?;
        }
        Ok(())
    }
}

fn truncate_and_append(path: &Path, keep_lines: usize) -> Result<csv::Writer<File>> {
    let text = fs::read_to_string(path).map_err(|e| AcdcError::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < keep_lines {
        return Err(AcdcError::Parse {
            path: path.to_path_buf(),
            line: lines.len() as u64,
            message: format!("expected at least {keep_lines} lines to resume from"),
        });
    }
    let mut kept = lines[..keep_lines].join("\n");
    kept.push('\n');
    fs::write(path, kept).map_err(|e| AcdcError::io(path, e))?;
    let file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| AcdcError::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

pub fn write_metrics(rows: &[WindowRecord], path: &Path, timing_path: Option<&Path>) -> Result<()> {
    let mut w = MetricsWriter::create(path, timing_path)?;
    for r in rows {
        w.append(r)?;
    }
    w.finish()
}

/// One parsed metrics row; blank optional fields read as `None`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub window: usize,
    pub source_count: usize,
    pub target_count: usize,
    pub target_acc: Option<f64>,
    pub cumulative_target_acc: Option<f64>,
    pub source_acc: Option<f64>,
    pub loss_dae: f64,
    pub loss_daa: f64,
    pub loss_disc: f64,
    pub r_dae: usize,
    pub r_daa: usize,
    pub r_disc: usize,
    pub grow_dae: u32,
    pub prune_dae: u32,
    pub grow_daa: u32,
    pub prune_daa: u32,
    pub grow_disc: u32,
    pub prune_disc: u32,
    pub h_divergence: Option<f64>,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| AcdcError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| AcdcError::io(path, e))?;
    if first.trim_end() != METRICS_VERSION_LINE {
        return Err(AcdcError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected {METRICS_VERSION_LINE:?}"),
        });
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if !header.iter().eq(METRICS_HEADER) {
        return Err(AcdcError::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: "unexpected metrics header".into(),
        });
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() + 1);
                AcdcError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                }
            })
        })
        .collect()
}

fn write_checkpoint_of<T: Serialize>(kind: &str, value: &T, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let io = |e| AcdcError::io(path, e);
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
        writeln!(w, "{CHECKPOINT_MAGIC} {kind}").map_err(io)?;
        serde_json::to_writer(&mut w, value).map_err(|e| AcdcError::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        w.flush().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

fn read_checkpoint_of<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| AcdcError::io(path, e))?);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| AcdcError::io(path, e))?;
    let expected = format!("{CHECKPOINT_MAGIC} {kind}");
    if first.trim_end() != expected {
        return Err(AcdcError::Checkpoint {
            path: path.to_path_buf(),
            message: format!("expected header {expected:?}, found {:?}", first.trim_end()),
        });
    }
    serde_json::from_reader(reader).map_err(|e| AcdcError::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Saves a model including its RNG and drift statistics.
pub fn write_checkpoint(model: &AcdcModel, path: &Path) -> Result<()> {
    write_checkpoint_of("model", model, path)
}

pub fn read_checkpoint(path: &Path) -> Result<AcdcModel> {
    let model: AcdcModel = read_checkpoint_of("model", path)?;
    if !model.params().shapes_consistent() {
        return Err(AcdcError::Checkpoint {
            path: path.to_path_buf(),
            message: "inconsistent parameter shapes".into(),
        });
    }
    Ok(model)
}

/// Saves a model together with the stream position, for resuming a run.
pub fn write_engine_checkpoint(engine: &Engine, path: &Path) -> Result<()> {
    write_checkpoint_of("engine", engine, path)
}

pub fn read_engine_checkpoint(path: &Path) -> Result<Engine> {
    let engine: Engine = read_checkpoint_of("engine", path)?;
    engine.config.validate()?;
    if !engine.model.params().shapes_consistent() {
        return Err(AcdcError::Checkpoint {
            path: path.to_path_buf(),
            message: "inconsistent parameter shapes".into(),
        });
    }
    Ok(engine)
}

/// Drops the first `n` samples of a stream, surfacing read errors.
pub fn skip_samples<'a>(mut stream: SampleIter<'a>, n: u64) -> Result<SampleIter<'a>> {
    for i in 0..n {
        match stream.next() {
            Some(r) => {
                r?;
            }
            None => {
                return Err(AcdcError::Precondition(format!(
                    "stream ended after {i} samples while skipping {n}"
                )))
            }
        }
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{synth_streams, SynthSpec};

    fn manifest(dir: &Path, file: &str, format: Format, labeled: bool, n: u64) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            role: Domain::Source,
            feature_dim: 2,
            classes: 3,
            path: dir.join(file),
            format,
            labeled,
            samples: n,
        }
    }

    #[test]
    fn csv_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "0.1,0.2,0\n# note\n1,2,2\n-3e-1,4,1\n").unwrap();
        let s = read_all(&manifest(dir.path(), "a.csv", Format::Csv, true, 3)).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].features, vec![0.1, 0.2]);
        assert_eq!(s[2].features, vec![-0.3, 4.0]);
        assert_eq!(s.iter().map(|x| x.label.unwrap()).collect::<Vec<_>>(), vec![0, 2, 1]);
        assert_eq!(s[2].index, 2);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "0.1,0.2,0\n0.3,0.4\n").unwrap();
        let err = read_all(&manifest(dir.path(), "a.csv", Format::Csv, true, 2)).unwrap_err();
        assert!(matches!(err, AcdcError::Parse { line: 2, .. }), "{err}");

        fs::write(dir.path().join("b.csv"), "0.1,x,0\n").unwrap();
        let err = read_all(&manifest(dir.path(), "b.csv", Format::Csv, true, 1)).unwrap_err();
        assert!(matches!(err, AcdcError::Parse { line: 1, .. }), "{err}");

        fs::write(dir.path().join("c.csv"), "0.1,0.2,7\n").unwrap();
        assert!(read_all(&manifest(dir.path(), "c.csv", Format::Csv, true, 1)).is_err());

        let mut unlabeled_source = manifest(dir.path(), "a.csv", Format::Csv, false, 2);
        assert!(load_stream(&unlabeled_source).is_err());
        unlabeled_source.role = Domain::Target;
        assert!(load_stream(&unlabeled_source).is_ok());
    }

    #[test]
    fn round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            u: 2,
            n_source: 50,
            n_target: 1,
            ..Default::default()
        };
        let (src, _) = synth_streams(&spec).unwrap();
        for (format, file) in [(Format::Csv, "s.csv"), (Format::Binary, "s.bin")] {
            let m = manifest(dir.path(), file, format, true, 50);
            write_samples(&src, &m.path, format, true, 3).unwrap();
            assert_eq!(read_all(&m).unwrap(), src, "{format:?}");
        }
    }

    #[test]
    fn manifest_paths_resolve_relative() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), "a.csv", Format::Csv, true, 3);
        m.path = PathBuf::from("a.csv");
        let mp = dir.path().join("a.toml");
        write_manifest(&m, &mp).unwrap();
        let back = read_manifest(&mp).unwrap();
        assert_eq!(back.path, dir.path().join("a.csv"));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&[], &p, None).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, format!("{METRICS_VERSION_LINE}\n{}\n", METRICS_HEADER.join(",")));
        assert!(read_metrics(&p).unwrap().is_empty());
    }

    #[test]
    fn model_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = AcdcModel::new(4, 3, Default::default(), Default::default(), 9).unwrap();
        for i in 0..50 {
            let x = [0.1 * (i % 7) as f64, 0.3, 0.9, 0.2];
            let y = [0.5, 0.05 * (i % 11) as f64, 0.1, 0.7];
            model.adapt_step(&x, i % 3, &y).unwrap();
            model.learn_step(&x, i % 3, &y).unwrap();
        }
        let p = dir.path().join("model.ckpt");
        write_checkpoint(&model, &p).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.fingerprint(), model.fingerprint());

        fs::write(&p, "garbage\n{}").unwrap();
        assert!(matches!(read_checkpoint(&p), Err(AcdcError::Checkpoint { .. })));
    }
}
