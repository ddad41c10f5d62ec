use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &[&str] = &[
    "--hidden-layers",
    "2",
    "--hidden-width",
    "8",
    "--levels",
    "2",
    "--coarse-iterations",
    "60",
    "--fine-iterations",
    "20",
    "--batch-size",
    "64",
    "--smoothing-iterations",
    "3",
];

fn hnsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnsc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Octahedron subdivided `levels` times and squashed into an ellipsoid.
fn ellipsoid_obj(levels: usize) -> String {
    let mut v: Vec<[f64; 3]> = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut f: Vec<[usize; 3]> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    for _ in 0..levels {
        let mut mids = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<[f64; 3]>| {
            *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let p = [0, 1, 2].map(|k| (v[a][k] + v[b][k]) / 2.0);
                let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                v.push(p.map(|c| c / n));
                v.len() - 1
            })
        };
        let mut next = Vec::new();
        for &[a, b, c] in &f {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    let mut out = String::new();
    for p in &v {
        writeln!(out, "v {} {} {}", p[0] * 2.0, p[1], p[2] * 0.5).unwrap();
    }
    for t in &f {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out
}

fn torus_obj(n: usize, m: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        for j in 0..m {
            let (u, v) = (
                i as f64 / n as f64 * std::f64::consts::TAU,
                j as f64 / m as f64 * std::f64::consts::TAU,
            );
            let r = 1.0 + 0.3 * v.cos();
            writeln!(out, "v {} {} {}", r * u.cos(), r * u.sin(), 0.3 * v.sin()).unwrap();
        }
    }
    let id = |i: usize, j: usize| (i % n) * m + (j % m) + 1;
    for i in 0..n {
        for j in 0..m {
            writeln!(out, "f {} {} {}", id(i, j), id(i + 1, j), id(i + 1, j + 1)).unwrap();
            writeln!(out, "f {} {} {}", id(i, j), id(i + 1, j + 1), id(i, j + 1)).unwrap();
        }
    }
    out
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let w = Workspace {
            dir: TempDir::new().unwrap(),
        };
        fs::write(w.path("shape.obj"), ellipsoid_obj(3)).unwrap();
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn encode(&self, out: &str, extra: &[&str]) -> Output {
        let input = self.path("shape.obj");
        let output = self.path(out);
        let progress = self.path(&format!("{out}.progress"));
        let mut args = vec!["encode", s(&input), "-o", s(&output), "--progress", s(&progress)];
        args.extend_from_slice(extra);
        hnsc(&args)
    }
}

#[test]
fn encode_decode_info_eval_round_trip() {
    let w = Workspace::new();
    let out = w.encode("m.hnsc", TINY);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for key in ["coarse_secs", "fine_secs", "coarse_loss", "fine_loss", "file_bytes"] {
        assert!(text.contains(key), "missing {key} in {text}");
    }
    let progress = fs::read_to_string(w.path("m.hnsc.progress")).unwrap();
    assert!(progress.lines().count() >= 2);
    assert!(progress.lines().all(|l| l.starts_with('{') && l.contains("\"loss\"")));

    let model = w.path("m.hnsc");
    let a = w.path("a.obj");
    let out = hnsc(&["decode", s(&model), "-o", s(&a), "-k", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("vertices = 642"));

    let b = w.path("b.obj");
    assert!(hnsc(&["decode", s(&model), "-o", s(&b), "-k", "3"]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ply = w.path("c.ply");
    let out = hnsc(&["decode", s(&model), "-o", s(&ply), "-k", "2", "--adaptive"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = hnsc(&["info", s(&model)]);
    assert!(out.status.success());
    let info = stdout(&out);
    assert!(info.contains("q_c: input 3 hidden 20x12 output 3 levels 0 params 3051"));
    assert!(info.contains("quantized: yes"));

    let shape = w.path("shape.obj");
    let out = hnsc(&["eval", s(&shape), s(&shape), "-n", "2000"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("d_pm_x1e4 / d_n = 0.00 / 0.00"), "{}", stdout(&out));

    let json = w.path("e.json");
    let out = hnsc(&["eval", s(&a), s(&shape), "-n", "2000", "--json", s(&json)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::read_to_string(&json).unwrap().contains("d_pm_mean"));
}

#[test]
fn encode_is_bit_reproducible_across_thread_counts() {
    let w = Workspace::new();
    assert!(w.encode("one.hnsc", TINY).status.success());
    let mut args = TINY.to_vec();
    args.extend(["--threads", "3"]);
    assert!(w.encode("two.hnsc", &args).status.success());
    assert_eq!(fs::read(w.path("one.hnsc")).unwrap(), fs::read(w.path("two.hnsc")).unwrap());
}

#[test]
fn preset_sizes_and_unquantized_doubling() {
    let w = Workspace::new();
    let fast = ["--coarse-iterations", "2", "--fine-iterations", "2", "--batch-size", "16"];
    let mut args = vec!["--preset", "50KB"];
    args.extend(fast);
    let out = w.encode("p.hnsc", &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let quantized = fs::metadata(w.path("p.hnsc")).unwrap().len() as f64;
    assert!((quantized / 56_000.0 - 1.0).abs() <= 0.15, "{quantized}");

    let info = stdout(&hnsc(&["info", s(&w.path("p.hnsc"))]));
    assert!(info.contains("params 25059"), "{info}");
    assert!(info.contains("params 3051"));

    args.push("--no-quantize");
    assert!(w.encode("f.hnsc", &args).status.success());
    let full = fs::metadata(w.path("f.hnsc")).unwrap().len() as f64;
    assert!((full / quantized - 2.0).abs() < 0.01, "{full} vs {quantized}");
    let info = stdout(&hnsc(&["info", s(&w.path("f.hnsc"))]));
    assert!(info.contains("quantized: no"));
}

#[test]
fn torus_fails_with_topology_code() {
    let w = Workspace::new();
    fs::write(w.path("torus.obj"), torus_obj(16, 8)).unwrap();
    let input = w.path("torus.obj");
    let output = w.path("t.hnsc");
    let out = hnsc(&["encode", s(&input), "-o", s(&output)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).contains("genus"), "{}", stderr(&out));
    assert!(!output.exists());
}

#[test]
fn damaged_containers_fail_with_format_code() {
    let w = Workspace::new();
    assert!(w.encode("m.hnsc", TINY).status.success());
    let bytes = fs::read(w.path("m.hnsc")).unwrap();

    let cut = w.path("cut.hnsc");
    fs::write(&cut, &bytes[..bytes.len() - 10]).unwrap();
    let out = hnsc(&["decode", s(&cut), "-o", s(&w.path("x.obj"))]);
    assert_eq!(out.status.code(), Some(7));
    assert!(stderr(&out).contains("truncation"), "{}", stderr(&out));

    let mut bumped = bytes.clone();
    bumped[4] = bumped[4].wrapping_add(1);
    let v2 = w.path("v2.hnsc");
    fs::write(&v2, &bumped).unwrap();
    let out = hnsc(&["info", s(&v2)]);
    assert_eq!(out.status.code(), Some(7));
    assert!(stderr(&out).contains("unsupported version"), "{}", stderr(&out));
}

#[test]
fn missing_files_fail_with_io_code() {
    let w = Workspace::new();
    let missing = w.path("nope.obj");
    let shape = w.path("shape.obj");
    let out = hnsc(&["eval", s(&missing), s(&shape)]);
    assert_eq!(out.status.code(), Some(3));
    let out = hnsc(&["info", s(&w.path("nope.hnsc"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let w = Workspace::new();
    let cfg = w.path("train.toml");
    fs::write(
        &cfg,
        "preset = \"custom\"\ncustom_hidden_layers = 2\ncustom_hidden_width = 8\n\
         positional_levels = 2\ncoarse_iterations = 30\nfine_iterations = 10\n\
         batch_size = 32\nsmoothing_iterations = 2\nlog_every = 5\n",
    )
    .unwrap();
    let out = w.encode("c.hnsc", &["--config", s(&cfg), "--fine-iterations", "15"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let progress = fs::read_to_string(w.path("c.hnsc.progress")).unwrap();
    assert_eq!(progress.lines().count(), 6 + 3);
    assert!(progress.lines().last().unwrap().contains("\"iteration\":15"));

    fs::write(&cfg, "batch_size = \"many\"\n").unwrap();
    let out = w.encode("d.hnsc", &["--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(8));
}
