// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use f2fplace::io::{parse_design, parse_solution, write_solution};
use f2fplace::model::Die;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_f2fplace")).args(args).output().unwrap()
}

/// `place` with iterations capped; tiny designs rarely reach the overflow target.
fn place(args: &[&str]) -> Output {
    let mut all = vec!["place", "--max-iters", "300"];
    all.extend_from_slice(args);
    bin(&all)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, cells: usize, seed: u64) -> std::path::PathBuf {
    let design = dir.join(format!("d{cells}_{seed}.txt"));
    let out = bin(&["gen", "--cells", &cells.to_string(), "--seed", &seed.to_string(), "-o", path(&design)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    design
}

fn eval(design: &Path, sol: &Path) -> Output {
    bin(&["eval", path(design), path(sol), "--kv"])
}

#[test]
fn gen_writes_a_parsable_design() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen(dir.path(), 100, 7);
    let d = parse_design(&fs::read_to_string(&design).unwrap()).unwrap();
    assert_eq!(d.num_nodes(), 100);
    let other = tempfile::tempdir().unwrap();
    let again = gen(other.path(), 100, 7);
    assert_eq!(fs::read(&design).unwrap(), fs::read(again).unwrap());
}

#[test]
fn place_small_design_is_legal_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen(dir.path(), 120, 3);
    let mut files = Vec::new();
    for run in 0..2 {
        let sol = dir.path().join(format!("s{run}.txt"));
        let trace = dir.path().join(format!("t{run}.csv"));
        let out = place(&[
            path(&design),
            "-o",
            path(&sol),
            "--seed",
            "5",
            "--trace",
            path(&trace),
            "--audit",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let log = String::from_utf8(out.stdout).unwrap();
        assert!(log.contains("# seed = 5"), "{log}");
        assert!(log.contains("global placement:"), "{log}");
        let ev = eval(&design, &sol);
        assert_eq!(ev.status.code(), Some(0), "{}", String::from_utf8_lossy(&ev.stdout));
        assert!(String::from_utf8_lossy(&ev.stdout).contains("legal=true"));
        files.push((fs::read(&sol).unwrap(), fs::read(&trace).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    assert!(String::from_utf8_lossy(&files[0].1).starts_with("iter,wl_smooth,wl_exact,cut,overflow,lambda,gamma"));
}

#[test]
fn skip_dp_output_is_legal() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen(dir.path(), 150, 11);
    let sol = dir.path().join("s.txt");
    let out = place(&[path(&design), "-o", path(&sol), "--skip-dp", "--wl-model", "plain", "--no-fda"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("detailed placement:"));
    assert_eq!(eval(&design, &sol).status.code(), Some(0));
}

#[test]
fn eval_flags_an_injected_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let design_path = gen(dir.path(), 100, 2);
    let sol_path = dir.path().join("s.txt");
    let out = place(&[path(&design_path), "-o", path(&sol_path), "--skip-dp"]);
    assert!(out.status.success());
    let design = parse_design(&fs::read_to_string(&design_path).unwrap()).unwrap();
    let mut sol = parse_solution(&fs::read_to_string(&sol_path).unwrap(), &design).unwrap();
    let on_top: Vec<usize> = (0..design.num_nodes()).filter(|&i| sol.die[i] == Die::Top).collect();
    let (a, b) = (on_top[0], on_top[1]);
    sol.x[b] = sol.x[a];
    sol.y[b] = sol.y[a];
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, write_solution(&design, &sol)).unwrap();
    let ev = eval(&design_path, &bad);
    assert_eq!(ev.status.code(), Some(1));
    let text = String::from_utf8_lossy(&ev.stdout);
    assert!(text.contains("legal=false") && text.contains("overlap"), "{text}");
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen(dir.path(), 80, 4);
    let cfg = dir.path().join("gp.cfg");
    fs::write(&cfg, "# settings\nseed = 9\nmax_iters = 200\nalpha = 0.5\n").unwrap();
    let sol = dir.path().join("s.txt");
    let out = bin(&["place", path(&design), "-o", path(&sol), "--config", path(&cfg), "--max-iters", "150"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8(out.stdout).unwrap();
    assert!(log.contains("# seed = 9") && log.contains("# max_iters = 150"), "{log}");
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen(dir.path(), 60, 1);
    let sol = dir.path().join("s.txt");

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = place(&[path(&design), "-o", path(&sol), "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = place(&[path(&dir.path().join("missing.txt")), "-o", path(&sol)]);
    assert_eq!(out.status.code(), Some(1));

    let text = fs::read_to_string(&design).unwrap();
    let tight = text
        .lines()
        .map(|l| if l.ends_with("DieMaxUtil 70") || l.ends_with("DieMaxUtil 75") { l.replace(" 7", " 1") } else { l.into() })
        .collect::<Vec<_>>()
        .join("\n");
    let tight_path = dir.path().join("tight.txt");
    fs::write(&tight_path, tight).unwrap();
    let out = place(&[path(&tight_path), "-o", path(&sol)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn render_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let design = gen(dir.path(), 50, 6);
    let sol = dir.path().join("s.txt");
    assert!(place(&[path(&design), "-o", path(&sol), "--skip-dp"]).status.success());
    let svg = dir.path().join("s.svg");
    let out = bin(&["render", path(&design), path(&sol), "-o", path(&svg), "--die", "top"]);
    assert!(out.status.success());
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}
