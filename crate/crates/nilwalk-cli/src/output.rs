//! Artifact emission: JSON reports, CSV tables, and minimal SVG line charts.
//! Every file carries the config hash so results can be traced to their
//! exact inputs.

use serde_json::{json, Value};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub struct ArtifactWriter {
    dir: PathBuf,
    hash: String,
    pub plot: bool,
    pub written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, hash: &str, plot: bool) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            plot,
            written: Vec::new(),
        })
    }

    pub fn json(&mut self, name: &str, mut body: Value) -> io::Result<()> {
        if let Value::Object(map) = &mut body {
            map.insert("config_hash".into(), json!(self.hash));
        } else {
            body = json!({ "config_hash": self.hash, "data": body });
        }
        let path = self.dir.join(format!("{name}.json"));
        fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> io::Result<()> {
        let mut text = format!("# config_hash={}\n{header}\n", self.hash);
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        let path = self.dir.join(format!("{name}.csv"));
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    /// Axes plus one polyline; data CSVs are the primary artifact, this is a
    /// quick look only.  Emitted only under --plot.
    pub fn svg_line(&mut self, name: &str, points: &[(f64, f64)]) -> io::Result<()> {
        if !self.plot || points.is_empty() {
            return Ok(());
        }
        let (w, h, pad) = (480.0, 320.0, 40.0);
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let (x0, x1) = bounds(&xs);
        let (y0, y1) = bounds(&ys);
        let px = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-300) * (w - 2.0 * pad);
        let py = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-300) * (h - 2.0 * pad);
        let poly: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <!-- config_hash={hash} -->\n\
             <line x1=\"{pad}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{yb}\" stroke=\"black\"/>\n\
             <text x=\"{pad}\" y=\"{ylab}\" font-size=\"10\">[{x0:.3}, {x1:.3}] x [{y0:.3}, {y1:.3}]</text>\n\
             <polyline fill=\"none\" stroke=\"steelblue\" points=\"{pts}\"/>\n\
             </svg>\n",
            hash = self.hash,
            yb = h - pad,
            xr = w - pad,
            ylab = h - pad / 4.0,
            pts = poly.join(" "),
        );
        let path = self.dir.join(format!("{name}.svg"));
        fs::write(&path, svg)?;
        self.written.push(path);
        Ok(())
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
