use std::path::Path;
use std::process::{Command, Output};

const TENT2: &str = r#"
observable = "x - 0.5"
[map]
family = "tent"
slope = 2.0
[acim]
n = 512
[orbit]
length = 2000
[ww]
ms = [10, 100, 1000]
[lil]
ms = [10, 100, 1000]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_susceptibility")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn acim_tent2_writes_uniform_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tent2.toml", TENT2);
    let out = dir.path().join("out");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "acim"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("density.csv")).unwrap();
    let header: Vec<&str> = csv.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header.iter().any(|l| l.starts_with("# command: acim")));
    assert!(header.iter().any(|l| l.starts_with("# scenario: ")));
    assert!(header.iter().any(|l| l.contains("\"eps_s\":")));
    let rho: Vec<f64> = csv.lines().skip(header.len() + 1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let l1 = rho.iter().map(|r| (r - 1.0).abs()).sum::<f64>() / rho.len() as f64;
    assert!(l1 <= 1e-10);
}

#[test]
fn same_config_and_seed_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tent2.toml", TENT2);
    for cmd in ["orbit", "ww", "hecke", "suscept"] {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        for d in [&a, &b] {
            let o = run(&["--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "7", cmd]);
            assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        for entry in std::fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{cmd} {name:?}");
        }
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tent2.toml", TENT2);
    let outs: Vec<_> = ["1", "3"]
        .iter()
        .map(|w| {
            let d = dir.path().join(format!("w{w}"));
            let o = run(&["--config", &cfg, "--out", d.to_str().unwrap(), "--workers", w, "lil"]);
            assert_eq!(o.status.code(), Some(0));
            std::fs::read(d.join("lil_envelope.csv")).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for body in ["[map\nfamily =", "[map]\nfamily = \"tent\"\nslope = 2.0\nunknown = 1\n", "[map]\nfamily = \"tent\"\nslope = 0.5\n"] {
        let cfg = write_config(dir.path(), "bad.toml", body);
        let o = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "acim"]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(!out.exists());
    }
    let cfg = write_config(dir.path(), "tent2.toml", TENT2);
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "--tol-overrides", "orbit.length=3", "acim"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn numeric_failure_exits_3_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "short.toml", "[map]\nfamily = \"tent\"\nslope = 1.9\n[orbit]\nlength = 500\n[nt]\nj_max = 20\n");
    let out = dir.path().join("out");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "nt-limit"]);
    assert_eq!(o.status.code(), Some(3));
    let names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("failure.json")]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("failure.json")).unwrap()).unwrap();
    assert_eq!(v["failure"]["kind"], "TailUnreachable");
}

#[test]
fn overrides_change_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tent2.toml", TENT2);
    let hash = |extra: &[&str]| {
        let d = tempfile::tempdir_in(dir.path()).unwrap();
        let mut args = vec!["--config", &cfg, "--out", d.path().to_str().unwrap()];
        args.extend_from_slice(extra);
        args.push("hecke");
        assert_eq!(run(&args).status.code(), Some(0));
        let s = std::fs::read_to_string(d.path().join("hecke.csv")).unwrap();
        s.lines().find(|l| l.starts_with("# scenario: ")).unwrap().to_string()
    };
    assert_eq!(hash(&[]), hash(&[]));
    assert_ne!(hash(&[]), hash(&["--tol-overrides", "nt.tol=1e-7"]));
    assert_ne!(hash(&[]), hash(&["--seed", "11"]));
}

#[test]
fn verify_rejects_unknown_suite() {
    assert_eq!(run(&["verify", "nonsense"]).status.code(), Some(2));
}
