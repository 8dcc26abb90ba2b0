use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use stefan::geometry::NormalGraph;
use stefan::output::{read_frame_csv, render_svg, EventsSummary};
use stefan::overlap::cut;
use stefan::shapegen::{make_dumbbell, ShapeSpec};

fn stefan(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_stefan"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn events(dir: &Path) -> EventsSummary {
    serde_json::from_str(&fs::read_to_string(dir.join("events.json")).unwrap()).unwrap()
}

#[test]
fn circle_run_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[shape]\nkind = \"circle\"\nnodes = 64\n[step]\ndt = 0.01\nmax_t = 0.1\n",
    );
    let out = tmp.path().join("out");
    let code = stefan(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let ev = events(&out);
    assert_eq!(ev.t_touch, None);
    assert_eq!(ev.t_overlap, None);
    assert_eq!(ev.events.len(), 1);
    let lines = fs::read_to_string(out.join("frames.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn critical_run_reports_overlap_and_stops_at_the_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[shape]\ngap = 0.0\nnodes = 256\n[step]\ndt = 1e-3\nmax_t = 0.05\n[output]\nframe_every = 1\n",
    );
    let out = tmp.path().join("out");
    let code = stefan(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 4);
    let ev = events(&out);
    let t = ev.t_overlap.unwrap();
    assert!(t > 0.0 && t.is_finite());
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[step]\ndt = -1.0\n");
    let out = tmp.path().join("out");
    assert_eq!(
        stefan(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        2
    );
    let cfg = write_config(tmp.path(), "[shape]\nnodes = 63\n");
    assert_eq!(
        stefan(&[
            "diagnose",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        2
    );
}

#[test]
fn shapegen_solve_and_render() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[shape]\nnodes = 256\n");
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(stefan(&["shapegen", "--config", c, "--out", o]), 0);
    assert_eq!(stefan(&["solve", "--config", c, "--out", o]), 0);
    assert_eq!(stefan(&["diagnose", "--config", c, "--out", o]), 0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("s,u,H,sigma\n"));
    assert_eq!(trace.lines().count(), 257);
    let svg = out.join("rendered.svg");
    let csv = out.join("initial.csv");
    assert_eq!(
        stefan(&[
            "render",
            "--input",
            csv.to_str().unwrap(),
            "--out",
            svg.to_str().unwrap()
        ]),
        0
    );
    let (curve, mask) = read_frame_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(fs::read_to_string(&svg).unwrap(), render_svg(&curve, &mask));
    assert_eq!(
        fs::read_to_string(&svg).unwrap(),
        fs::read_to_string(out.join("initial.svg")).unwrap()
    );
}

#[test]
fn overlapping_frame_matches_golden_svg() {
    let spec = ShapeSpec {
        gap: 0.0,
        nodes: 256,
        ..ShapeSpec::default()
    };
    let d = make_dumbbell(&spec).unwrap();
    let n = d.curve.len();
    // push both flats 0.01 across the axis
    let rho = NormalGraph::new(
        (0..n)
            .map(|i| if d.frame.in_bridge(i) { 0.01 } else { 0.0 })
            .collect(),
    );
    let r = cut(&d.frame, &rho).unwrap();
    assert!(r.any_cut());
    let uncut = stefan::geometry::graph_to_curve(&d.frame, &rho).unwrap();
    let svg = render_svg(&uncut, &r.mask);
    assert_eq!(
        svg.matches("class=\"mask\"").count(),
        2,
        "one stroke per flat"
    );
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/dumbbell_overlap.svg");
    if !golden.exists() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, fs::read_to_string(&golden).unwrap());
}
