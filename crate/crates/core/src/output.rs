//! Run artifacts: curve CSVs, the JSONL frame log, the events summary and
//! SVG snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EventKind, Frame, RunOutput};
use crate::geometry::{param, ClosedCurve};

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 600.0;
const SVG_MARGIN: f64 = 20.0;

/// Curve CSV with a mask column.
pub fn frame_csv(curve: &ClosedCurve, mask: &[bool]) -> String {
    let n = curve.len();
    let mut out = String::from("s,x,y,mask\n");
    for i in 0..n {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{}",
            param(i, n),
            curve.x[i],
            curve.y[i],
            u8::from(mask.get(i).copied().unwrap_or(false))
        );
    }
    out
}

/// Reads `s,x,y` or `s,x,y,mask`.
pub fn read_frame_csv(text: &str) -> Result<(ClosedCurve, Vec<bool>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty curve file".into()))?;
    let has_mask = header.trim() == "s,x,y,mask";
    if !has_mask && header.trim() != "s,x,y" {
        return Err(Error::InvalidInput(format!("unexpected header {header:?}")));
    }
    let (mut x, mut y, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |j: usize| -> Result<f64> {
            f.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad value on data line {}", k + 1)))
        };
        x.push(num(1)?);
        y.push(num(2)?);
        mask.push(has_mask && f.get(3) == Some(&"1"));
    }
    Ok((ClosedCurve::new(x, y)?, mask))
}

/// One JSONL line per stored frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub step: usize,
    pub t: f64,
    pub min_gap: f64,
    pub overlap_measure: f64,
    pub overlap_depth: f64,
    pub embedded: bool,
    pub bridge_sign: f64,
    pub extended: bool,
    pub curve_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub t: f64,
    pub step: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsSummary {
    pub config: Option<String>,
    pub t_touch: Option<f64>,
    pub t_overlap: Option<f64>,
    pub termination: Option<EventKind>,
    pub events: Vec<EventRecord>,
}

impl EventsSummary {
    pub fn from_run(out: &RunOutput, config: Option<&Path>) -> Self {
        EventsSummary {
            config: config.map(|p| p.display().to_string()),
            t_touch: out.event(EventKind::FirstTouch).map(|e| e.t),
            t_overlap: out.event(EventKind::OverlapOnset).map(|e| e.t),
            termination: out.events.last().map(|e| e.kind),
            events: out
                .events
                .iter()
                .map(|e| EventRecord {
                    kind: e.kind,
                    t: e.t,
                    step: e.step,
                    detail: e.detail.clone(),
                })
                .collect(),
        }
    }
}

fn frame_name(step: usize, ext: &str) -> String {
    format!("frame_{step:06}.{ext}")
}

/// Writes the artifacts of a run below `dir`.
pub fn write_run(dir: &Path, out: &RunOutput, config: Option<&Path>, svg: bool) -> Result<()> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir)?;
    if svg {
        fs::create_dir_all(dir.join("svg"))?;
    }
    let mut log = String::new();
    for f in &out.frames {
        let rel: PathBuf = ["frames", &frame_name(f.step, "csv")].iter().collect();
        fs::write(dir.join(&rel), frame_csv(&f.curve, &f.mask))?;
        if svg {
            fs::write(
                dir.join("svg").join(frame_name(f.step, "svg")),
                render_frame(f),
            )?;
        }
        let d = f.diagnostics;
        let rec = FrameRecord {
            step: f.step,
            t: f.t,
            min_gap: d.min_gap,
            overlap_measure: d.overlap_measure,
            overlap_depth: d.overlap_depth,
            embedded: d.embedded,
            bridge_sign: d.bridge_sign,
            extended: f.extended,
            curve_csv: rel.to_string_lossy().replace('\\', "/"),
        };
        log.push_str(&serde_json::to_string(&rec).map_err(|e| Error::InvalidInput(e.to_string()))?);
        log.push('\n');
    }
    fs::write(dir.join("frames.jsonl"), log)?;
    let summary = EventsSummary::from_run(out, config);
    let text =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(dir.join("events.json"), text + "\n")?;
    Ok(())
}

pub fn render_frame(frame: &Frame) -> String {
    render_svg(&frame.curve, &frame.mask)
}

/// Fixed-size SVG: the curve as one closed polyline, the axis `y = 0`, and
/// every run of masked nodes as a separate stroke with the part below the
/// axis shaded.
pub fn render_svg(curve: &ClosedCurve, mask: &[bool]) -> String {
    let n = curve.len();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for i in 0..n {
        x0 = x0.min(curve.x[i]);
        x1 = x1.max(curve.x[i]);
        y0 = y0.min(curve.y[i]);
        y1 = y1.max(curve.y[i]);
    }
    let scale = ((SVG_WIDTH - 2.0 * SVG_MARGIN) / (x1 - x0).max(1e-12))
        .min((SVG_HEIGHT - 2.0 * SVG_MARGIN) / (y1 - y0).max(1e-12));
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let map = |x: f64, y: f64| {
        (
            0.5 * SVG_WIDTH + scale * (x - cx),
            0.5 * SVG_HEIGHT - scale * (y - cy),
        )
    };
    let pts = |idx: &mut dyn Iterator<Item = usize>| {
        let mut s = String::new();
        for (k, i) in idx.enumerate() {
            let (px, py) = map(curve.x[i], curve.y[i]);
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{px:.3},{py:.3}");
        }
        s
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let (_, ay) = map(cx, 0.0);
    let _ = writeln!(
        svg,
        "<line class=\"axis\" x1=\"0\" y1=\"{ay:.3}\" x2=\"{w}\" y2=\"{ay:.3}\" stroke=\"#999999\" stroke-width=\"1\" stroke-dasharray=\"4 4\"/>",
        w = SVG_WIDTH
    );
    let _ = writeln!(
        svg,
        "<polyline class=\"curve\" points=\"{}\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\"/>",
        pts(&mut (0..=n).map(|i| i % n))
    );
    for run in mask_runs(mask) {
        let _ = writeln!(
            svg,
            "<polygon class=\"overlap\" points=\"{} {:.3},{ay:.3} {:.3},{ay:.3}\" fill=\"#d62728\" fill-opacity=\"0.25\" stroke=\"none\"/>",
            pts(&mut run.clone().map(|i| i % n)),
            map(curve.x[(run.end - 1) % n], 0.0).0,
            map(curve.x[run.start % n], 0.0).0,
        );
        let _ = writeln!(
            svg,
            "<polyline class=\"mask\" points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"3\"/>",
            pts(&mut run.map(|i| i % n))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Maximal runs of masked nodes, cyclically; a run may wrap past `n`.
fn mask_runs(mask: &[bool]) -> Vec<std::ops::Range<usize>> {
    let n = mask.len();
    if n == 0 || !mask.iter().any(|&m| m) {
        return Vec::new();
    }
    if mask.iter().all(|&m| m) {
        return vec![0..n];
    }
    // start right after an unmasked node so no run is split
    let first = (0..n).find(|&i| !mask[i]).unwrap_or(0) + 1;
    let mut runs = Vec::new();
    let mut k = 0;
    while k < n {
        let i = first + k;
        if mask[i % n] {
            let start = i;
            let mut end = i;
            while end - first < n && mask[end % n] {
                end += 1;
            }
            runs.push(start..end);
            k = end - first;
        } else {
            k += 1;
        }
    }
    runs
}
