//! On-disk formats: scene coordinate maps, poses, intrinsics, correspondences,
//! dataset directories and CSV reports.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use sha2::{Digest, Sha256};

use crate::encoding::SceneCoordinateMap;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::geometry::{Intrinsics, Pose};
pub use crate::oracle::Correspondence;
use crate::training::{EpochLog, TrainSample};

pub const SCM_MAGIC: &[u8; 4] = b"SCM1";
pub const MANIFEST_NAME: &str = "manifest.txt";
/// Tolerance on `RᵀR = I` and `det R = 1` when reading pose files.
pub const POSE_FILE_TOL: f64 = 1e-6;
pub const SCM_EXT: &str = "scm";
pub const POSE_EXT: &str = "pose";
pub const INTRINSICS_EXT: &str = "intrinsics";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `SCM1`, `u32` h and w, `h·w·3` f32 coordinates, `h·w` mask bytes; all little-endian.
pub fn scm_to_bytes(scm: &SceneCoordinateMap) -> Vec<u8> {
    let n = scm.h * scm.w;
    let mut out = Vec::with_capacity(12 + 13 * n);
    out.extend_from_slice(SCM_MAGIC);
    out.extend_from_slice(&(scm.h as u32).to_le_bytes());
    out.extend_from_slice(&(scm.w as u32).to_le_bytes());
    for &c in &scm.coords {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    out.extend(scm.mask.iter().map(|&m| m as u8));
    out
}

pub fn scm_from_bytes(bytes: &[u8], label: &str) -> Result<SceneCoordinateMap> {
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile(label.to_string()));
    }
    if &bytes[..4] != SCM_MAGIC {
        return Err(Error::BadMagic(label.to_string()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let n = h
        .checked_mul(w)
        .ok_or_else(|| Error::Parse(format!("{label}: grid size overflows")))?;
    let expected = 12 + 13 * n;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile(label.to_string()));
    }
    if bytes.len() > expected {
        return Err(Error::Parse(format!("{label}: {} trailing bytes", bytes.len() - expected)));
    }
    let coords: Vec<f64> = bytes[12..12 + 12 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let mut mask = Vec::with_capacity(n);
    for &b in &bytes[12 + 12 * n..] {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            _ => return Err(Error::Parse(format!("{label}: mask byte {b}"))),
        }
    }
    for i in 0..n {
        if mask[i] && coords[3 * i..3 * i + 3].iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteValue(format!("{label}: cell {i}")));
        }
    }
    Ok(SceneCoordinateMap { h, w, coords, mask })
}

pub fn write_scm(path: &Path, scm: &SceneCoordinateMap) -> Result<()> {
    write_bytes(path, &scm_to_bytes(scm))
}

pub fn read_scm(path: &Path) -> Result<SceneCoordinateMap> {
    scm_from_bytes(&read_bytes(path)?, &path.display().to_string())
}

fn parse_numbers(text: &str, expected: usize, label: &str) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("{label}: bad number {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Parse(format!("{label}: expected {expected} numbers, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(label.to_string()));
    }
    Ok(values)
}

/// Four rows of the homogeneous camera-to-scene matrix, 16 decimals each.
pub fn pose_to_text(pose: &Pose) -> String {
    let m = pose.to_matrix4();
    let mut s = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| format!("{:.16e}", m[4 * r + c])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn pose_from_text(text: &str, label: &str) -> Result<Pose> {
    let v = parse_numbers(text, 16, label)?;
    if v[12..16] != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::Parse(format!("{label}: last row must be 0 0 0 1")));
    }
    let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let pose = Pose::new(rotation, Vector3::new(v[3], v[7], v[11]));
    if !pose.is_valid(POSE_FILE_TOL) {
        return Err(Error::NotARotation);
    }
    Ok(pose)
}

pub fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    write_bytes(path, pose_to_text(pose).as_bytes())
}

pub fn read_pose(path: &Path) -> Result<Pose> {
    pose_from_text(&read_text(path)?, &path.display().to_string())
}

/// `fx fy cx cy` on one line.
pub fn intrinsics_to_text(k: &Intrinsics) -> String {
    format!("{:.16e} {:.16e} {:.16e} {:.16e}\n", k.fx, k.fy, k.cx, k.cy)
}

pub fn intrinsics_from_text(text: &str, label: &str) -> Result<Intrinsics> {
    let v = parse_numbers(text, 4, label)?;
    Intrinsics::new(v[0], v[1], v[2], v[3])
}

pub fn write_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    write_bytes(path, intrinsics_to_text(k).as_bytes())
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    intrinsics_from_text(&read_text(path)?, &path.display().to_string())
}

/// One `u v x y z` line per record.
pub fn correspondences_to_text(corr: &[Correspondence]) -> String {
    corr.iter()
        .map(|c| {
            format!(
                "{} {} {} {} {}\n",
                c.uv.0, c.uv.1, c.point.x, c.point.y, c.point.z
            )
        })
        .collect()
}

pub fn correspondences_from_text(text: &str) -> Result<Vec<Correspondence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v = parse_numbers(l, 5, &format!("correspondence line {}", i + 1))?;
            Ok(Correspondence {
                uv: (v[0], v[1]),
                point: Vector3::new(v[2], v[3], v[4]),
            })
        })
        .collect()
}

/// Writes `name.scm`, `name.pose` and `name.intrinsics` into `dir`.
pub fn write_sample(dir: &Path, name: &str, sample: &TrainSample) -> Result<()> {
    write_scm(&dir.join(format!("{name}.{SCM_EXT}")), &sample.scm)?;
    write_pose(&dir.join(format!("{name}.{POSE_EXT}")), &sample.gt)?;
    write_intrinsics(&dir.join(format!("{name}.{INTRINSICS_EXT}")), &sample.k)
}

pub fn read_sample(dir: &Path, name: &str) -> Result<TrainSample> {
    Ok(TrainSample {
        scm: read_scm(&dir.join(format!("{name}.{SCM_EXT}")))?,
        gt: read_pose(&dir.join(format!("{name}.{POSE_EXT}")))?,
        k: read_intrinsics(&dir.join(format!("{name}.{INTRINSICS_EXT}")))?,
    })
}

/// Frames of one split, sorted by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub names: Vec<String>,
    pub samples: Vec<TrainSample>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Partitions frames into `(train, validation)` by [`is_validation_frame`].
    pub fn train_val(&self) -> (Vec<TrainSample>, Vec<TrainSample>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (n, s) in self.names.iter().zip(&self.samples) {
            if is_validation_frame(n) {
                val.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        (train, val)
    }
}

/// Every frame in `root/split`, in lexicographic name order.
pub fn read_split(root: &Path, split: &str) -> Result<Split> {
    let dir = root.join(split);
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let path: PathBuf = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(SCM_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::Parse(format!("{}: no .{SCM_EXT} files", dir.display())));
    }
    let samples = names.iter().map(|n| read_sample(&dir, n)).collect::<Result<_>>()?;
    Ok(Split { names, samples })
}

/// Roughly one frame in ten, chosen by a hash of its name.
pub fn is_validation_frame(name: &str) -> bool {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) % 10 == 0
}

/// Shortest round-trip decimal, widened to at least nine significant digits.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let shortest = format!("{x:e}");
    let mantissa = shortest.split('e').next().unwrap_or("");
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    if digits >= 9 {
        shortest
    } else {
        format!("{x:.8e}")
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes a header and rows of pre-formatted fields.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(|e| csv_error(path, e)))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub const METRICS_HEADER: [&str; 5] = ["epoch", "split", "loss", "median_trans_m", "median_rot_deg"];
pub const FRAMES_HEADER: [&str; 3] = ["frame", "trans_m", "rot_deg"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "frames",
    "median_trans_m",
    "median_rot_deg",
    "acc_5cm_5deg",
    "acc_10cm_5deg",
    "acc_50cm_5deg",
];

pub fn write_metrics_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.split.clone(),
                format_float(e.loss),
                format_float(e.median_trans_m),
                format_float(e.median_rot_deg),
            ]
        })
        .collect();
    write_csv(path, &METRICS_HEADER, &rows)
}

/// Summary row in [`SUMMARY_HEADER`] order.
pub fn summary_row(report: &EvalReport) -> Vec<String> {
    let mut row = vec![
        report.errors.len().to_string(),
        format_float(report.median_trans),
        format_float(report.median_rot),
    ];
    row.extend(report.accuracies.iter().map(|a| format_float(a.fraction)));
    row
}

/// Per-frame errors to `path` and the one-row summary to `<stem>_summary.csv`.
pub fn write_report(path: &Path, names: &[String], report: &EvalReport) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(&report.errors)
        .map(|(n, e)| vec![n.clone(), format_float(e.trans_err), format_float(e.rot_err)])
        .collect();
    write_csv(path, &FRAMES_HEADER, &rows)?;
    let summary = summary_path(path);
    write_csv(&summary, &SUMMARY_HEADER, &[summary_row(report)])?;
    Ok(summary)
}

pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}_summary.csv"))
}
