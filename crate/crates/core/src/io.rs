//! On-disk formats: spectral cubes, label maps, metrics reports and
//! class-map images.
//!
//! A cube file is a short structured-text header followed by the raw payload:
//!
//! ```text
//! FEATCUBE 1
//! width 256
//! height 256
//! bands 103
//! dtype f64le
//! order bsq-row-major-x-fastest
//! end
//! <width*height*bands little-endian f64, band-sequential, pixel-row order>
//! ```
//!
//! The payload is band-sequential (all pixels of band 0, then band 1, ...)
//! so single bands stream without seeking through the others. Floats are
//! written bit-exactly; `read(write(cube))` reproduces the cube byte for
//! byte. Label maps use the same scheme with a `u32le` payload. Metrics
//! reports are plain text with round-trippable floats plus the confusion
//! matrix block.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use ndarray::Array2;

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;

const CUBE_MAGIC: &str = "FEATCUBE";
const LABELS_MAGIC: &str = "FEATLABELS";
const REPORT_MAGIC: &str = "FEATREPORT";
const FORMAT_VERSION: u32 = 1;
const ORDER_TAG: &str = "bsq-row-major-x-fastest";

/// Class-map palette (class 1 first); class 0 renders black.
pub const CLASS_PALETTE: [[u8; 3]; 15] = [
    [0x80, 0x00, 0x00],
    [0x9A, 0x63, 0x24],
    [0x80, 0x80, 0x00],
    [0x46, 0x99, 0x90],
    [0x00, 0x00, 0x75],
    [0xE6, 0x19, 0x4B],
    [0xF5, 0x82, 0x31],
    [0xFF, 0xE1, 0x19],
    [0xBF, 0xEF, 0x45],
    [0x3C, 0xB4, 0x4B],
    [0x42, 0xD4, 0xF4],
    [0x43, 0x63, 0xD8],
    [0x91, 0x1E, 0xB4],
    [0xF0, 0x32, 0xE6],
    [0xA9, 0xA9, 0xA9],
];

fn io_err(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {}", path.display(), what))
}

// ---------------------------------------------------------------------------
// Header plumbing
// ---------------------------------------------------------------------------

struct Header {
    fields: Vec<(String, String)>,
}

impl Header {
    fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn usize_field(&self, path: &Path, key: &str) -> Result<usize> {
        self.get(key)
            .ok_or_else(|| io_err(path, format!("missing header field '{}'", key)))?
            .parse()
            .map_err(|_| io_err(path, format!("invalid header field '{}'", key)))
    }
}

fn read_header<R: BufRead>(reader: &mut R, path: &Path, magic: &str) -> Result<Header> {
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| io_err(path, e))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(io_err(path, format!("bad magic, expected {}", magic)));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| io_err(path, "missing format version"))?;
    if version != FORMAT_VERSION {
        return Err(io_err(path, format!("unsupported format version {}", version)));
    }
    let mut fields = Vec::new();
    loop {
        let mut line = String::new();
        let read = reader.read_line(&mut line).map_err(|e| io_err(path, e))?;
        if read == 0 {
            return Err(io_err(path, "truncated header (no 'end')"));
        }
        let line = line.trim_end_matches('\n');
        if line == "end" {
            break;
        }
        match line.split_once(' ') {
            Some((k, v)) => fields.push((k.to_string(), v.to_string())),
            None => return Err(io_err(path, format!("malformed header line '{}'", line))),
        }
    }
    Ok(Header { fields })
}

// ---------------------------------------------------------------------------
// Spectral cubes
// ---------------------------------------------------------------------------

pub fn write_cube(path: &Path, cube: &SpectralCube) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "{} {}\nwidth {}\nheight {}\nbands {}\ndtype f64le\norder {}\n",
        CUBE_MAGIC,
        FORMAT_VERSION,
        cube.width(),
        cube.height(),
        cube.bands(),
        ORDER_TAG,
    );
    w.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
    if let Some(labels) = cube.band_labels() {
        if labels.iter().all(|l| !l.contains(',') && !l.contains('\n')) {
            writeln!(w, "labels {}", labels.join(",")).map_err(|e| io_err(path, e))?;
        }
    }
    w.write_all(b"end\n").map_err(|e| io_err(path, e))?;
    // Band-sequential payload in pixel-row order.
    for b in 0..cube.bands() {
        for p in 0..cube.n_pixels() {
            w.write_all(&cube.data()[[p, b]].to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path, CUBE_MAGIC)?;
    let width = header.usize_field(path, "width")?;
    let height = header.usize_field(path, "height")?;
    let bands = header.usize_field(path, "bands")?;
    if header.get("dtype") != Some("f64le") {
        return Err(io_err(path, "unsupported dtype"));
    }
    if header.get("order") != Some(ORDER_TAG) {
        return Err(io_err(path, "unsupported payload order"));
    }
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bands))
        .ok_or_else(|| io_err(path, "dimension overflow"))?;
    let mut payload = vec![0u8; n * 8];
    r.read_exact(&mut payload)
        .map_err(|_| io_err(path, "payload shorter than header dimensions"))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(io_err(path, "payload longer than header dimensions"));
    }
    let mut data = Array2::zeros((width * height, bands));
    for b in 0..bands {
        for p in 0..width * height {
            let off = (b * width * height + p) * 8;
            data[[p, b]] = f64::from_le_bytes(payload[off..off + 8].try_into().expect("8 bytes"));
        }
    }
    let cube = SpectralCube::new(data, width, height)?;
    match header.get("labels") {
        Some(joined) => cube.with_band_labels(joined.split(',').map(str::to_string).collect()),
        None => Ok(cube),
    }
}

// ---------------------------------------------------------------------------
// Label maps
// ---------------------------------------------------------------------------

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write!(
        w,
        "{} {}\nwidth {}\nheight {}\nclasses {}\ndtype u32le\nend\n",
        LABELS_MAGIC,
        FORMAT_VERSION,
        labels.width(),
        labels.height(),
        labels.num_classes(),
    )
    .map_err(|e| io_err(path, e))?;
    for &v in labels.labels() {
        w.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path, LABELS_MAGIC)?;
    let width = header.usize_field(path, "width")?;
    let height = header.usize_field(path, "height")?;
    let classes = header.usize_field(path, "classes")?;
    if header.get("dtype") != Some("u32le") {
        return Err(io_err(path, "unsupported dtype"));
    }
    let mut payload = vec![0u8; width * height * 4];
    r.read_exact(&mut payload)
        .map_err(|_| io_err(path, "payload shorter than header dimensions"))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(io_err(path, "payload longer than header dimensions"));
    }
    let labels: Vec<u32> = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let map = LabelMap::new(labels, width, height)?;
    if map.num_classes() as usize != classes {
        return Err(io_err(path, "class count does not match payload"));
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// Metrics reports
// ---------------------------------------------------------------------------

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", REPORT_MAGIC, FORMAT_VERSION));
    out.push_str(&format!("classes {}\n", report.n_classes));
    out.push_str(&format!("n_trials {}\n", report.n_trials));
    out.push_str(&format!("overall_accuracy {}\n", report.overall_accuracy));
    out.push_str(&format!("average_accuracy {}\n", report.average_accuracy));
    out.push_str(&format!("kappa {}\n", report.kappa));
    out.push_str(&format!("kappa_degenerate {}\n", report.kappa_degenerate));
    out.push_str(&format!("oa_mean {}\noa_std {}\n", report.oa_mean, report.oa_std));
    out.push_str(&format!("aa_mean {}\naa_std {}\n", report.aa_mean, report.aa_std));
    out.push_str(&format!("kappa_mean {}\nkappa_std {}\n", report.kappa_mean, report.kappa_std));
    let pcs: Vec<String> = report.per_class_accuracy.iter().map(|v| v.to_string()).collect();
    out.push_str(&format!("per_class_accuracy {}\n", pcs.join(" ")));
    out.push_str("confusion\n");
    for i in 0..report.n_classes {
        let row: Vec<String> =
            (0..report.n_classes).map(|j| report.confusion[[i, j]].to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
    w.write_all(out.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Parses a report and re-verifies the metric identities against the stored
/// confusion matrix.
pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| io_err(path, "empty report"))?;
    if first != format!("{} {}", REPORT_MAGIC, FORMAT_VERSION) {
        return Err(io_err(path, "bad report magic"));
    }
    let mut classes = None;
    let mut n_trials = None;
    let mut scalars: Vec<(String, f64)> = Vec::new();
    let mut flags: Vec<(String, bool)> = Vec::new();
    let mut per_class = Vec::new();
    let mut confusion_rows: Vec<Vec<u64>> = Vec::new();
    let mut in_confusion = false;
    for line in lines {
        if line == "end" {
            break;
        }
        if in_confusion {
            let row: std::result::Result<Vec<u64>, _> =
                line.split_whitespace().map(str::parse).collect();
            confusion_rows
                .push(row.map_err(|_| io_err(path, format!("bad confusion row '{}'", line)))?);
            continue;
        }
        if line == "confusion" {
            in_confusion = true;
            continue;
        }
        let (key, value) =
            line.split_once(' ').ok_or_else(|| io_err(path, format!("bad line '{}'", line)))?;
        match key {
            "classes" => {
                classes =
                    Some(value.parse().map_err(|_| io_err(path, "bad class count"))?)
            }
            "n_trials" => {
                n_trials =
                    Some(value.parse().map_err(|_| io_err(path, "bad trial count"))?)
            }
            "kappa_degenerate" => flags.push((
                key.to_string(),
                value.parse().map_err(|_| io_err(path, "bad flag"))?,
            )),
            "per_class_accuracy" => {
                let vals: std::result::Result<Vec<f64>, _> =
                    value.split_whitespace().map(str::parse).collect();
                per_class = vals.map_err(|_| io_err(path, "bad per-class accuracies"))?;
            }
            _ => scalars.push((
                key.to_string(),
                value.parse().map_err(|_| io_err(path, format!("bad value for '{}'", key)))?,
            )),
        }
    }
    let l: usize = classes.ok_or_else(|| io_err(path, "missing class count"))?;
    if confusion_rows.len() != l || confusion_rows.iter().any(|r| r.len() != l) {
        return Err(io_err(path, "confusion matrix shape mismatch"));
    }
    let mut confusion = Array2::<u64>::zeros((l, l));
    for (i, row) in confusion_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            confusion[[i, j]] = v;
        }
    }
    let scalar = |key: &str| -> Result<f64> {
        scalars
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| io_err(path, format!("missing field '{}'", key)))
    };
    let report = MetricsReport {
        n_classes: l,
        confusion,
        per_class_accuracy: per_class,
        overall_accuracy: scalar("overall_accuracy")?,
        average_accuracy: scalar("average_accuracy")?,
        kappa: scalar("kappa")?,
        kappa_degenerate: flags
            .iter()
            .find(|(k, _)| k == "kappa_degenerate")
            .map(|(_, v)| *v)
            .unwrap_or(false),
        n_trials: n_trials.ok_or_else(|| io_err(path, "missing trial count"))?,
        oa_mean: scalar("oa_mean")?,
        oa_std: scalar("oa_std")?,
        aa_mean: scalar("aa_mean")?,
        aa_std: scalar("aa_std")?,
        kappa_mean: scalar("kappa_mean")?,
        kappa_std: scalar("kappa_std")?,
    };
    report.verify_identities()?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Class maps
// ---------------------------------------------------------------------------

/// Renders a label map as an RGB PNG using the fixed class palette
/// (cycled for more than 15 classes); unlabeled pixels are black.
pub fn write_classmap_png(path: &Path, labels: &LabelMap) -> Result<()> {
    let (w, h) = (labels.width(), labels.height());
    let mut buf = vec![0u8; w * h * 3];
    for (p, &lab) in labels.labels().iter().enumerate() {
        let rgb = if lab == 0 {
            [0u8, 0, 0]
        } else {
            CLASS_PALETTE[(lab as usize - 1) % CLASS_PALETTE.len()]
        };
        buf[p * 3..p * 3 + 3].copy_from_slice(&rgb);
    }
    image::save_buffer(path, &buf, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| io_err(path, e))
}
