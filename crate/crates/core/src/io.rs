//! TUM trajectory files and the JSON/CSV artifacts written by the pipeline.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::candidates::{CandidateSet, EvalReport};
use crate::error::{Error, Result};
use crate::overlap::Cluster;
use crate::Pose;

/// Allowed deviation of a quaternion's norm from one.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

/// One line of a TUM file, kept as written so saving reproduces it exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TumRecord {
    pub timestamp: f64,
    pub translation: [f64; 3],
    /// `qx qy qz qw`.
    pub quaternion: [f64; 4],
}

impl TumRecord {
    pub fn from_pose(timestamp: f64, pose: &Pose) -> Self {
        let q = pose.quaternion();
        TumRecord {
            timestamp,
            translation: pose.translation.into(),
            quaternion: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn pose(&self) -> Pose {
        let [x, y, z, w] = self.quaternion;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Pose::from_quaternion(&q, Vector3::from(self.translation))
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Parses TUM text: `timestamp tx ty tz qx qy qz qw` per line, `#` comments.
pub fn parse_tum(text: &str, source: &str) -> Result<Vec<TumRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad number {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", vals.len())));
        }
        let quaternion = [vals[4], vals[5], vals[6], vals[7]];
        let norm = quaternion.iter().map(|q| q * q).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(err(format!("quaternion norm {norm} is not unit")));
        }
        out.push(TumRecord {
            timestamp: vals[0],
            translation: [vals[1], vals[2], vals[3]],
            quaternion,
        });
    }
    Ok(out)
}

pub fn load_tum(path: &Path) -> Result<Vec<TumRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })?;
    parse_tum(&text, &path_str(path))
}

pub fn format_tum(records: &[TumRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let [x, y, z] = r.translation;
        let [qx, qy, qz, qw] = r.quaternion;
        s.push_str(&format!("{} {x} {y} {z} {qx} {qy} {qz} {qw}\n", r.timestamp));
    }
    s
}

pub fn save_tum(path: &Path, records: &[TumRecord]) -> Result<()> {
    write_text(path, &format_tum(records))
}

/// Cuts `records` into `parts` consecutive segments of near-equal length.
pub fn split(records: &[TumRecord], parts: usize) -> Result<Vec<Vec<TumRecord>>> {
    if parts == 0 || parts > records.len() {
        return Err(Error::Config(format!(
            "cannot split {} poses into {parts} segments",
            records.len()
        )));
    }
    let base = records.len() / parts;
    let extra = records.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push(records[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: path_str(dir),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path_str(path),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path_str(path),
        source,
    })
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<()> {
    save_json(path, report)
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    load_json(path)
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = || -> std::result::Result<Vec<u8>, csv::Error> {
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(w.get_ref().clone())
    };
    String::from_utf8(write().expect("writing to memory")).expect("ascii csv")
}

pub fn candidates_csv(set: &CandidateSet) -> String {
    csv_text(
        &["p_index", "k_index", "d_mh", "route_link"],
        set.pairs.iter().map(|c| {
            vec![
                c.p_index.to_string(),
                c.k_index.to_string(),
                c.d_mh.to_string(),
                c.route_link.to_string(),
            ]
        }),
    )
}

pub fn save_candidates(path: &Path, set: &CandidateSet) -> Result<()> {
    write_text(path, &candidates_csv(set))
}

/// `(p_index, k_index, d_mh, route_link)` rows of a candidates CSV.
pub fn load_candidates(path: &Path) -> Result<Vec<(usize, usize, f64, u32)>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path_str(path),
        source,
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|source| Error::Csv {
                path: path_str(path),
                source,
            })
        })
        .collect()
}

/// Plot-ready positions: one row per pose, in α's frame.
pub fn trajectories_csv(robots: &[(u32, Vec<Pose>)]) -> String {
    csv_text(
        &["robot", "index", "x", "y", "z", "yaw"],
        robots.iter().flat_map(|(robot, poses)| {
            poses.iter().enumerate().map(move |(i, p)| {
                vec![
                    robot.to_string(),
                    i.to_string(),
                    p.translation.x.to_string(),
                    p.translation.y.to_string(),
                    p.translation.z.to_string(),
                    p.yaw().to_string(),
                ]
            })
        }),
    )
}

/// One row per cluster box.
pub fn clusters_csv(clusters: &[Cluster]) -> String {
    csv_text(
        &[
            "cluster", "depth", "alpha_count", "beta_count", "min_x", "min_y", "min_z", "max_x", "max_y", "max_z",
        ],
        clusters.iter().enumerate().map(|(i, c)| {
            let mut row = vec![
                i.to_string(),
                c.depth.to_string(),
                c.alpha.len().to_string(),
                c.beta.len().to_string(),
            ];
            row.extend(c.bbox.min.iter().chain(c.bbox.max.iter()).map(|v| v.to_string()));
            row
        }),
    )
}
