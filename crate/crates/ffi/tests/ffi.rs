use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use susceptibility::C64;
use susceptibility_ffi::*;

const TENT2: &str = r#"
observable = "x - 0.5"
[map]
family = "tent"
slope = 2.0
[acim]
n = 256
[orbit]
length = 2000
"#;

fn last_error() -> String {
    let p = sus_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(src: &str, overrides: Option<&str>) -> Result<*mut SusScenario, SusStatus> {
    let src = CString::new(src).unwrap();
    let ov = overrides.map(|s| CString::new(s).unwrap());
    let mut out = ptr::null_mut();
    let st = unsafe { sus_scenario_from_toml(src.as_ptr(), ov.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut out) };
    if st == SusStatus::Ok { Ok(out) } else { Err(st) }
}

fn hash(s: *const SusScenario) -> String {
    let mut buf = [0 as c_char; 128];
    let mut len = buf.len();
    assert_eq!(unsafe { sus_scenario_hash(s, buf.as_mut_ptr(), &mut len) }, SusStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sus_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn tent_map_values() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sus_map_tent(2.0, &mut m) }, SusStatus::Ok);
    let (mut y, mut d) = (0.0, 0.0);
    assert_eq!(unsafe { sus_map_eval(m, 0.25, &mut y, &mut d) }, SusStatus::Ok);
    assert_eq!((y, d), (0.5, 2.0));
    assert_eq!(unsafe { sus_map_eval(m, 0.75, &mut y, ptr::null_mut()) }, SusStatus::Ok);
    assert_eq!(y, 0.5);
    let mut crit = [0.0; 3];
    assert_eq!(unsafe { sus_map_critical(m, crit.as_mut_ptr()) }, SusStatus::Ok);
    assert_eq!(crit, [0.5, 1.0, 0.0]);
    assert_eq!(unsafe { sus_map_eval(m, 1.5, &mut y, ptr::null_mut()) }, SusStatus::Invalid);
    assert!(last_error().contains("outside"));
    unsafe { sus_map_free(m) };
}

#[test]
fn contracting_tent_is_invalid() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sus_map_tent(0.9, &mut m) }, SusStatus::Invalid);
    assert!(m.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sus_scenario_from_toml(ptr::null(), ptr::null(), &mut out) }, SusStatus::NullPointer);
    assert_eq!(unsafe { sus_map_eval(ptr::null(), 0.5, ptr::null_mut(), ptr::null_mut()) }, SusStatus::NullPointer);
    unsafe {
        sus_map_free(ptr::null_mut());
        sus_scenario_free(ptr::null_mut());
        sus_sigma_free(ptr::null_mut());
    }
}

#[test]
fn scenario_hash_and_overrides() {
    let a = scenario(TENT2, None).unwrap();
    let b = scenario(TENT2, Some("suscept.tol=1e-6")).unwrap();
    let ha = hash(a);
    assert_eq!(ha.len(), 64);
    assert_ne!(ha, hash(b));
    assert_eq!(unsafe { sus_scenario_set_seed(a, 9) }, SusStatus::Ok);
    assert_ne!(ha, hash(a));

    let mut small = [0 as c_char; 8];
    let mut len = small.len();
    assert_eq!(unsafe { sus_scenario_hash(a, small.as_mut_ptr(), &mut len) }, SusStatus::BufferTooSmall);
    assert_eq!(len, 65);

    assert_eq!(scenario(TENT2, Some("acim.n=8")).unwrap_err(), SusStatus::Invalid);
    assert_eq!(scenario("[map]\nfamily = \"tent\"\nslope = 2.0\nbogus = 1\n", None).unwrap_err(), SusStatus::Invalid);
    unsafe {
        sus_scenario_free(a);
        sus_scenario_free(b);
    }
}

#[test]
fn sigma_on_tent2_matches_closed_form() {
    // Orbit 1, 0, 0, ... gives sigma(z) = 1/2 - (z/2)/(1 - z).
    let s = scenario(TENT2, None).unwrap();
    let mut sig = ptr::null_mut();
    assert_eq!(unsafe { sus_sigma_new(s, &mut sig) }, SusStatus::Ok);
    for (re, im) in [(0.0, 0.0), (0.5, 0.0), (-0.5, 0.3), (0.2, -0.6)] {
        let (mut v, mut tail) = (SusComplex::default(), f64::NAN);
        assert_eq!(unsafe { sus_sigma_eval(sig, SusComplex { re, im }, 1e-12, &mut v, &mut tail) }, SusStatus::Ok);
        let z = C64::new(re, im);
        let want = 0.5 - 0.5 * z / (1.0 - z);
        assert!((C64::new(v.re, v.im) - want).norm() < 1e-10, "{v:?} vs {want}");
        assert!(tail <= 1e-12);
    }
    let mut v = SusComplex::default();
    assert_eq!(unsafe { sus_sigma_eval(sig, SusComplex { re: 1.2, im: 0.0 }, 1e-9, &mut v, ptr::null_mut()) }, SusStatus::Invalid);
    assert!(last_error().starts_with("OutsideDomain"));
    unsafe {
        sus_sigma_free(sig);
        sus_scenario_free(s);
    }
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(TENT2, None).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let cmd = CString::new("hecke").unwrap();
    assert_eq!(unsafe { sus_run(s, cmd.as_ptr(), out.as_ptr()) }, SusStatus::Ok);
    assert!(dir.path().join("out/hecke.csv").exists());

    let bad = CString::new("nope").unwrap();
    assert_eq!(unsafe { sus_run(s, bad.as_ptr(), out.as_ptr()) }, SusStatus::Invalid);
    unsafe { sus_scenario_free(s) };
}

#[test]
fn numeric_failure_writes_failure_json() {
    let short = "[map]\nfamily = \"tent\"\nslope = 1.9\n[orbit]\nlength = 500\n[nt]\nj_max = 20\n";
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(short, None).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let cmd = CString::new("nt-limit").unwrap();
    assert_eq!(unsafe { sus_run(s, cmd.as_ptr(), out.as_ptr()) }, SusStatus::Numeric);
    let entries: Vec<_> = std::fs::read_dir(dir.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec!["failure.json"]);
    unsafe { sus_scenario_free(s) };
}

#[test]
fn header_compiles_as_c() {
    let inc = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(inc.join("susceptibility.h")).unwrap();
    for f in ["sus_scenario_from_toml", "sus_run", "sus_sigma_eval", "sus_last_error", "typedef struct SusScenario SusScenario"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"susceptibility.h\"\nint main(void) {\n  SusMap *m = 0;\n  double y;\n  if (sus_map_tent(2.0, &m) != SUS_STATUS_OK) return 1;\n  sus_map_eval(m, 0.25, &y, 0);\n  sus_map_free(m);\n  return 0;\n}\n",
    )
    .unwrap();
    let Ok(o) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&inc)
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
