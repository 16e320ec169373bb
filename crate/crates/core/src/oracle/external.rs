use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::NormSpec;
use crate::source::{Point, PointSet};

/// An oracle run as a subprocess.
///
/// The child reads on stdin a comment line `#k=<k> p=<p> seed=<seed>`, a
/// header `x0,...,x{d-1},w` and one row per point, and prints `k` rows of
/// center coordinates on stdout. With `replicate` set to `R`, each point is
/// written `round(w R)` times with weight 1, for oracles that only accept
/// unweighted input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalOracle {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate: Option<u32>,
}

impl ExternalOracle {
    pub fn input(&self, points: &PointSet, k: usize, spec: &NormSpec, seed: u64) -> Result<String> {
        let p = match spec.p.finite() {
            Some(p) => p.to_string(),
            None => "inf".to_owned(),
        };
        let d = spec.d;
        let mut text = format!("#k={k} p={p} seed={seed}\n");
        let header: Vec<String> = (0..d).map(|j| format!("x{j}")).chain(["w".to_owned()]).collect();
        text.push_str(&header.join(","));
        text.push('\n');
        let mut rows = 0usize;
        for (i, x) in points.points.iter().enumerate() {
            let coords: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            let coords = coords.join(",");
            match self.replicate {
                Some(r) => {
                    let copies = (points.weight(i) * r as f64).round() as usize;
                    for _ in 0..copies {
                        text.push_str(&format!("{coords},1\n"));
                    }
                    rows += copies;
                }
                None => {
                    text.push_str(&format!("{coords},{:?}\n", points.weight(i)));
                    rows += 1;
                }
            }
        }
        if rows == 0 {
            return Err(Error::Oracle("replication produced no rows; raise the factor".into()));
        }
        Ok(text)
    }

    pub fn solve(&self, points: &PointSet, k: usize, spec: &NormSpec, seed: u64) -> Result<Vec<Point>> {
        let input = self.input(points, k, spec, seed)?;
        let mut child = Command::new(&self.command)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start {:?}: {e}", self.command)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let out = child.wait_with_output()?;
        // A child that exits without reading all input closes the pipe early.
        let _ = writer.join();
        if !out.status.success() {
            return Err(Error::Oracle(format!(
                "{:?} exited with {}: {}",
                self.command,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        parse_centers(&String::from_utf8_lossy(&out.stdout), k, spec.d)
    }
}

fn parse_centers(text: &str, k: usize, d: usize) -> Result<Vec<Point>> {
    let mut centers = Vec::with_capacity(k);
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Oracle(format!("bad center row {line:?}: {e}")))?;
        if row.len() != d {
            return Err(Error::Oracle(format!("center row has {} fields, expected {d}", row.len())));
        }
        centers.push(row);
    }
    if centers.len() != k {
        return Err(Error::Oracle(format!("oracle returned {} centers, expected {k}", centers.len())));
    }
    Ok(centers)
}
