//! Scenario-driven commands. Every command builds its artifacts in memory;
//! nothing touches the disk until the whole command has succeeded.

use crate::acim::{build_ulam, saltus_decomposition, stationary_density};
use crate::diagnostics::{
    hecke_outer, hecke_reference, lil_envelope_check, lil_ratio, nontangential_limit, radial_scan, wiener_wintner_check,
    NtWeight, ScanReport,
};
use crate::error::{Error, Result};
use crate::map::{PostcriticalOrbit, UnimodalMap};
use crate::observable::Observable;
use crate::response::{acim_level, choose_precritical, response_report, AcimLevel, ResponseConfig};
use crate::right_limits::breuer_simon_witness;
use crate::scenario::{NtSeries, Scenario};
use crate::series::{Continuation, OuterSigma, SeriesValue, SigmaSeries, Susceptibility};
use crate::C64;
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Acim,
    Orbit,
    Suscept,
    BoundaryScan,
    NtLimit,
    Ww,
    Lil,
    Witness,
    Response,
    Hecke,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Acim,
        Command::Orbit,
        Command::Suscept,
        Command::BoundaryScan,
        Command::NtLimit,
        Command::Ww,
        Command::Lil,
        Command::Witness,
        Command::Response,
        Command::Hecke,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Acim => "acim",
            Command::Orbit => "orbit",
            Command::Suscept => "suscept",
            Command::BoundaryScan => "boundary-scan",
            Command::NtLimit => "nt-limit",
            Command::Ww => "ww",
            Command::Lil => "lil",
            Command::Witness => "witness",
            Command::Response => "response",
            Command::Hecke => "hecke",
        }
    }

    pub fn from_name(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// One output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// What every artifact starts with.
struct Header<'a> {
    command: Command,
    scenario: &'a Scenario,
}

impl Header<'_> {
    fn csv(&self, extra: &[String]) -> String {
        let mut s = format!(
            "# susceptibility {VERSION}\n# command: {}\n# scenario: {}\n# config: {}\n",
            self.command.name(),
            self.scenario.hash(),
            self.scenario.canonical()
        );
        for line in extra {
            let _ = writeln!(s, "# {line}");
        }
        s
    }

    fn json(&self) -> serde_json::Value {
        let config: serde_json::Value = serde_json::from_str(&self.scenario.canonical()).expect("canonical form is json");
        json!({
            "tool": "susceptibility",
            "version": VERSION,
            "command": self.command.name(),
            "scenario": self.scenario.hash(),
            "config": config,
        })
    }

    fn json_artifact(&self, name: &str, report: impl Serialize) -> Result<Artifact> {
        let body = json!({ "header": self.json(), "report": report });
        let contents = serde_json::to_string_pretty(&body).map_err(|e| Error::Io(e.to_string()))? + "\n";
        Ok(Artifact { name: name.into(), contents })
    }
}

fn csv(header: &Header, extra: &[String], columns: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = header.csv(extra);
    s.push_str(columns);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// `abscissa, re, im, error, aux` for any scan.
fn scan_csv(header: &Header, extra: &[String], rep: &ScanReport, abscissa: &str, aux: &str) -> String {
    let rows = (0..rep.values.len()).map(|i| {
        format!(
            "{},{},{},{},{}",
            rep.abscissae.get(i).copied().unwrap_or(f64::NAN),
            rep.values[i].re,
            rep.values[i].im,
            rep.errors.get(i).copied().unwrap_or(f64::NAN),
            rep.aux.get(i).copied().unwrap_or(f64::NAN)
        )
    });
    csv(header, extra, &format!("{abscissa},re,im,error,{aux}"), rows)
}

/// The failure report written on a numeric error.
pub fn failure_artifact(command: Command, scenario: &Scenario, err: &Error) -> Artifact {
    let h = Header { command, scenario };
    let body = json!({
        "header": h.json(),
        "failure": { "kind": err.kind(), "message": err.to_string() },
    });
    Artifact { name: "failure.json".into(), contents: serde_json::to_string_pretty(&body).expect("json") + "\n" }
}

struct Setup {
    map: UnimodalMap,
    orbit: PostcriticalOrbit,
    phi: Observable,
}

fn setup(s: &Scenario) -> Result<Setup> {
    let map = s.build_map()?;
    let orbit = s.orbit(&map)?;
    Ok(Setup { map, orbit, phi: s.observable()? })
}

pub fn run(command: Command, s: &Scenario) -> Result<Vec<Artifact>> {
    let h = Header { command, scenario: s };
    match command {
        Command::Acim => acim(&h, s),
        Command::Orbit => orbit(&h, s),
        Command::Suscept => suscept(&h, s),
        Command::BoundaryScan => boundary_scan(&h, s),
        Command::NtLimit => nt_limit(&h, s),
        Command::Ww => {
            let st = setup(s)?;
            let rep = wiener_wintner_check(&st.orbit, &st.phi, &s.ww.omegas, &s.ww.ms)?;
            let extra = [format!("verdict: {:?}", rep.verdict)];
            Ok(vec![
                Artifact { name: "ww.csv".into(), contents: scan_csv(&h, &extra, &rep, "m", "omega") },
                h.json_artifact("ww.json", &rep)?,
            ])
        }
        Command::Lil => {
            let st = setup(s)?;
            let ratio = lil_ratio(&st.orbit, &st.phi, s.lil.omega, &s.lil.ms)?;
            let env = lil_envelope_check(&s.lil.fit_radii, &s.lil.check_radii)?;
            Ok(vec![
                Artifact {
                    name: "lil.csv".into(),
                    contents: scan_csv(&h, &[format!("verdict: {:?}", ratio.verdict)], &ratio, "m", "running_sup"),
                },
                Artifact {
                    name: "lil_envelope.csv".into(),
                    contents: scan_csv(&h, &[format!("verdict: {:?}", env.verdict)], &env, "r", "ratio"),
                },
                h.json_artifact("lil.json", json!({ "ratio": ratio, "envelope": env }))?,
            ])
        }
        Command::Witness => {
            let st = setup(s)?;
            let w = breuer_simon_witness(&st.map, &st.orbit, &st.phi, s.witness.delta)?;
            let half = w.window.half_width as i64;
            let rows = (-half..=half).map(|n| {
                format!("{n},{},{},{},{}", w.window.get(n), w.window.gap(n), w.window_tilde.get(n), w.window_tilde.gap(n))
            });
            let extra = [format!("ell: {} x: {} x_tilde: {}", w.ell, w.x, w.x_tilde)];
            Ok(vec![
                Artifact { name: "windows.csv".into(), contents: csv(&h, &extra, "n,b,gap,b_tilde,gap_tilde", rows) },
                h.json_artifact("witness.json", &w)?,
            ])
        }
        Command::Response => {
            let st = setup(s)?;
            let x = s.perturbation(&st.map, &st.orbit)?;
            let rep = response_report(&st.map, &x, &st.phi, &s.response_config())?;
            Ok(vec![h.json_artifact("response.json", &rep)?])
        }
        Command::Hecke => hecke(&h, s),
    }
}

fn acim(h: &Header, s: &Scenario) -> Result<Vec<Artifact>> {
    let st = setup(s)?;
    let op = build_ulam(&st.map, s.acim.n)?;
    let sd = stationary_density(&op)?;
    let d = saltus_decomposition(&st.map, &st.orbit, &op, &sd, s.acim.eps_s)?;
    let g = d.grid;
    let rows = (0..g.n).map(|i| format!("{i},{},{},{},{}", g.midpoint(i), d.rho[i], d.rho_sal[i], d.rho_reg[i]));
    let extra = [format!("residual: {} iterations: {}", sd.residual, sd.iterations)];
    let jumps = d.jumps.iter().map(|j| format!("{},{},{}", j.n, j.at, j.s));
    let jextra = [format!("s1: {} tail_bound: {} split_defect: {}", d.s1, d.tail_bound, d.split_defect)];
    Ok(vec![
        Artifact { name: "density.csv".into(), contents: csv(h, &extra, "cell,x,rho,rho_sal,rho_reg", rows) },
        Artifact { name: "saltus.csv".into(), contents: csv(h, &jextra, "n,c_n,s_n", jumps) },
    ])
}

fn orbit(h: &Header, s: &Scenario) -> Result<Vec<Artifact>> {
    let st = setup(s)?;
    let pp = match st.orbit.preperiodicity() {
        Some(p) => format!("preperiodic: true preperiod: {} period: {} proven: {}", p.preperiod, p.period, p.proven),
        None => "preperiodic: false".into(),
    };
    let rows = st.orbit.points().iter().enumerate().map(|(i, x)| format!("{},{x}", i + 1));
    Ok(vec![Artifact { name: "orbit.csv".into(), contents: csv(h, &[pp], "k,c_k", rows) }])
}

/// Acim at the scenario resolution and the centered observable.
fn level_and_phi(s: &Scenario, st: &Setup) -> Result<(AcimLevel, Observable)> {
    let level = acim_level(&st.map, &st.orbit, s.acim.n)?;
    let phi = st.phi.normalized(&level.density.grid, &level.density.rho);
    Ok((level, phi))
}

fn outer_config(s: &Scenario, depth: usize) -> ResponseConfig {
    ResponseConfig { precritical_depth: depth, ..s.response_config() }
}

fn suscept(h: &Header, s: &Scenario) -> Result<Vec<Artifact>> {
    let st = setup(s)?;
    let x = s.perturbation(&st.map, &st.orbit)?;
    let (level, phi) = level_and_phi(s, &st)?;
    let d = &level.density;
    let mut sus = Susceptibility::new(&st.map, &st.orbit, &x, &phi, d, &level.op, s.suscept.tol);
    let mut extra = vec![];
    if s.suscept.side == Continuation::Outer {
        let (pre, choice) = choose_precritical(&st.map, &st.phi, d, &outer_config(s, s.response.precritical_depth))?;
        extra.push(format!("precritical seed: {} birkhoff deviation: {}", choice.seed, choice.birkhoff_deviation));
        sus = sus.with_outer(&pre);
    }
    let mut rows = vec![];
    for &r in &s.suscept.radii {
        for &theta in &s.suscept.angles {
            let z = C64::from_polar(r, theta);
            let v = sus.eval(z, s.suscept.side)?;
            let opt = |c: Option<C64>| c.map_or(",".to_string(), |c| format!("{},{}", c.re, c.im));
            rows.push(format!(
                "{r},{theta},{},{},{},{},{},{},{},{},{},{},{},{}",
                z.re,
                z.im,
                serde_json::to_value(v.route).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                v.value.re,
                v.value.im,
                v.sing.re,
                v.sing.im,
                v.hol.re,
                v.hol.im,
                v.tail,
                opt(v.u),
                opt(v.sigma)
            ));
        }
    }
    let cols = "r,theta,z_re,z_im,route,psi_re,psi_im,sing_re,sing_im,hol_re,hol_im,tail,u_re,u_im,sigma_re,sigma_im";
    Ok(vec![Artifact { name: "suscept.csv".into(), contents: csv(h, &extra, cols, rows) }])
}

fn radii(j_min: u32, j_max: u32) -> Vec<f64> {
    (j_min..=j_max).map(|j| 1.0 - 2f64.powi(-(j as i32))).collect()
}

fn boundary_scan(h: &Header, s: &Scenario) -> Result<Vec<Artifact>> {
    let st = setup(s)?;
    let sigma = SigmaSeries::new(&st.map, &st.orbit, &st.phi);
    let eval = |z: C64, _: usize| sigma.eval(z, s.scan.tol);
    let rs = radii(s.scan.j_min, s.scan.j_max);
    let mut rows = vec![];
    let mut reports = vec![];
    for arc in &s.scan.arcs {
        let rep = radial_scan(&eval, arc[0], arc[1], &rs, s.scan.panels)?;
        for i in 0..rep.values.len() {
            rows.push(format!("{},{},{},{},{}", arc[0], arc[1], rep.abscissae[i], rep.values[i].re, rep.errors[i]));
        }
        reports.push(json!({ "arc": arc, "scan": rep }));
    }
    Ok(vec![
        Artifact { name: "scan.csv".into(), contents: csv(h, &[], "arc_start,arc_end,r,integral,error", rows) },
        h.json_artifact("scan.json", reports)?,
    ])
}

fn nt_limit(h: &Header, s: &Scenario) -> Result<Vec<Artifact>> {
    let p = &s.nt;
    let st = setup(s)?;
    let sector = p.sector();
    let weight = if p.order > 0 { NtWeight::Derivative(p.order) } else { NtWeight::None };
    let outer = p.side == Continuation::Outer;
    let mut extra = vec![];
    let rep = match p.series {
        NtSeries::Sigma => {
            if outer {
                let op = build_ulam(&st.map, s.acim.n)?;
                let sd = stationary_density(&op)?;
                let d = saltus_decomposition(&st.map, &st.orbit, &op, &sd, s.acim.eps_s)?;
                let (pre, choice) = choose_precritical(&st.map, &st.phi, &d, &outer_config(s, p.precritical_depth))?;
                extra.push(format!("precritical seed: {} birkhoff deviation: {}", choice.seed, choice.birkhoff_deviation));
                let sigma = OuterSigma::new(&st.map, &pre, &st.phi);
                nontangential_limit(&|z: C64, d: usize| sigma.eval_derivative(z, d, p.tol), &sector, weight)?
            } else {
                let sigma = SigmaSeries::new(&st.map, &st.orbit, &st.phi);
                nontangential_limit(&|z: C64, d: usize| sigma.eval_derivative(z, d, p.tol), &sector, weight)?
            }
        }
        NtSeries::Psi => {
            let x = s.perturbation(&st.map, &st.orbit)?;
            let (level, phi) = level_and_phi(s, &st)?;
            let d = &level.density;
            let mut sus = Susceptibility::new(&st.map, &st.orbit, &x, &phi, d, &level.op, p.tol);
            if outer {
                let (pre, choice) = choose_precritical(&st.map, &st.phi, d, &outer_config(s, p.precritical_depth))?;
                extra.push(format!("precritical seed: {} birkhoff deviation: {}", choice.seed, choice.birkhoff_deviation));
                sus = sus.with_outer(&pre);
            }
            let eval = |z: C64, d: usize| -> Result<SeriesValue> {
                let v = sus.eval_derivative(z, p.side, d)?;
                Ok(SeriesValue { value: v.value, terms: 0, tail: v.tail })
            };
            nontangential_limit(&eval, &sector, weight)?
        }
    };
    extra.push(format!(
        "limit: {} {} error: {} verdict: {:?}",
        rep.limit.unwrap_or_default().re,
        rep.limit.unwrap_or_default().im,
        rep.limit_error.unwrap_or(f64::NAN),
        rep.verdict
    ));
    Ok(vec![
        Artifact { name: "nt.csv".into(), contents: scan_csv(h, &extra, &rep, "j", "abs_z") },
        h.json_artifact("nt.json", &rep)?,
    ])
}

fn hecke(h: &Header, s: &Scenario) -> Result<Vec<Artifact>> {
    let p = &s.hecke;
    let mut rows = vec![];
    for z in &p.z {
        let z = C64::new(z[0], z[1]);
        let outer = hecke_outer(p.theta, z, p.k)?;
        let inner = hecke_reference(p.theta, z.inv(), p.k)?;
        let gap = (outer.value - inner.value - 0.5).norm();
        rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            z.re,
            z.im,
            outer.value.re,
            outer.value.im,
            inner.value.re,
            inner.value.im,
            gap,
            outer.tail + inner.tail
        ));
    }
    let cols = "z_re,z_im,outer_re,outer_im,inner_re,inner_im,gap,tails";
    Ok(vec![Artifact { name: "hecke.csv".into(), contents: csv(h, &[], cols, rows) }])
}

/// Writes artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent2() -> Scenario {
        Scenario::from_toml("[map]\nfamily = \"tent\"\nslope = 2.0\n[acim]\nn = 256\n[orbit]\nlength = 100\n[ww]\nms = [10, 100]\n").unwrap()
    }

    #[test]
    fn names_round_trip() {
        for c in Command::ALL {
            assert_eq!(Command::from_name(c.name()), Some(c));
        }
        assert_eq!(Command::from_name("nope"), None);
    }

    #[test]
    fn acim_tent2_is_uniform() {
        let s = tent2();
        let a = run(Command::Acim, &s).unwrap();
        let density = &a.iter().find(|a| a.name == "density.csv").unwrap().contents;
        assert!(density.starts_with("# susceptibility"));
        assert!(density.contains(&s.hash()));
        let rows: Vec<&str> = density.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.len(), 256);
        let l1: f64 = rows.iter().map(|r| (r.split(',').nth(2).unwrap().parse::<f64>().unwrap() - 1.0).abs()).sum::<f64>() / 256.0;
        assert!(l1 < 1e-10);
    }

    #[test]
    fn orbit_reports_preperiodicity() {
        let a = run(Command::Orbit, &tent2()).unwrap();
        assert!(a[0].contents.contains("preperiodic: true"));
    }

    #[test]
    fn deterministic() {
        let s = tent2();
        for c in [Command::Acim, Command::Hecke, Command::Ww] {
            assert_eq!(run(c, &s).unwrap(), run(c, &s).unwrap());
        }
    }

    #[test]
    fn failure_is_serialized() {
        let s = tent2();
        let a = failure_artifact(Command::Suscept, &s, &Error::TailUnreachable { needed: 10, available: 5 });
        let v: serde_json::Value = serde_json::from_str(&a.contents).unwrap();
        assert_eq!(v["failure"]["kind"], "TailUnreachable");
        assert_eq!(v["header"]["scenario"], s.hash());
    }
}
