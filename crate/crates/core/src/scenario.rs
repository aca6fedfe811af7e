//! Scenario files: a TOML tree naming the map, observable, perturbation and
//! per-command parameters. Every field has a documented default, and the
//! resolved scenario (defaults filled in, overrides applied) is what gets
//! hashed and echoed into artifacts.

use crate::diagnostics::SectorSpec;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::map::{postcritical_orbit, MapSpec, PostcriticalOrbit, UnimodalMap};
use crate::observable::{Observable, Perturbation};
use crate::response::ResponseConfig;
use crate::series::{make_horizontal, Continuation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Either a literal field or one corrected to be horizontal of `order`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PerturbationSpec {
    Expr(LiteralField),
    Horizontal(HorizontalField),
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LiteralField {
    pub expr: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HorizontalField {
    pub base: String,
    pub basis: Vec<String>,
    pub order: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitParams {
    pub length: usize,
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams { length: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcimParams {
    pub n: usize,
    pub eps_s: f64,
}

impl Default for AcimParams {
    fn default() -> Self {
        AcimParams { n: 4096, eps_s: 1e-12 }
    }
}

/// Polar grid `r e^{iθ}` for `suscept`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SusceptParams {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    pub side: Continuation,
    pub tol: f64,
}

impl Default for SusceptParams {
    fn default() -> Self {
        SusceptParams { radii: vec![0.25, 0.5, 0.75, 0.9], angles: vec![0.0, 1.0, 2.0, 3.0], side: Continuation::Inner, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanParams {
    pub arcs: Vec<[f64; 2]>,
    /// Radii `1 − 2^{−j}` for `j_min..=j_max`.
    pub j_min: u32,
    pub j_max: u32,
    pub panels: usize,
    pub tol: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams { arcs: vec![[0.1, 0.4], [2.0, 2.5]], j_min: 3, j_max: 11, panels: 1024, tol: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NtSeries {
    /// `σ_φ` alone.
    Sigma,
    /// The assembled `Ψ_φ`.
    Psi,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct NtParams {
    pub series: NtSeries,
    pub omega: f64,
    pub half_aperture: f64,
    pub tilt: f64,
    pub j_min: u32,
    pub j_max: u32,
    pub side: Continuation,
    pub order: usize,
    pub tol: f64,
    /// Depth of the sampled precritical orbit for the outer side.
    pub precritical_depth: usize,
}

impl Default for NtParams {
    fn default() -> Self {
        NtParams {
            series: NtSeries::Sigma,
            omega: 0.0,
            half_aperture: std::f64::consts::FRAC_PI_4,
            tilt: 0.0,
            j_min: 4,
            j_max: 14,
            side: Continuation::Inner,
            order: 0,
            tol: 1e-9,
            precritical_depth: 1 << 20,
        }
    }
}

impl NtParams {
    pub fn sector(&self) -> SectorSpec {
        SectorSpec {
            omega: self.omega,
            half_aperture: self.half_aperture,
            tilt: self.tilt,
            j_min: self.j_min,
            j_max: self.j_max,
            side: self.side,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct WwParams {
    pub omegas: Vec<f64>,
    pub ms: Vec<usize>,
}

impl Default for WwParams {
    fn default() -> Self {
        WwParams { omegas: vec![0.0, 0.5, 1.0, 2.0, 3.0], ms: vec![100, 1000, 10_000, 100_000] }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct LilParams {
    pub omega: f64,
    pub ms: Vec<usize>,
    pub fit_radii: Vec<f64>,
    pub check_radii: Vec<f64>,
}

impl Default for LilParams {
    fn default() -> Self {
        LilParams {
            omega: 1.0,
            ms: vec![100, 1000, 10_000, 100_000],
            fit_radii: (0..=16).map(|i| 1.0 - 0.01 * 10f64.powf(-0.25 * i as f64)).collect(),
            check_radii: (0..=40).map(|i| 1.0 - 0.01 * 10f64.powf(-0.1 * i as f64)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessParams {
    pub delta: f64,
}

impl Default for WitnessParams {
    fn default() -> Self {
        WitnessParams { delta: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeckeParams {
    pub theta: f64,
    pub k: usize,
    /// Points `[re, im]` outside the unit disc.
    pub z: Vec<[f64; 2]>,
}

impl Default for HeckeParams {
    fn default() -> Self {
        HeckeParams { theta: (5f64.sqrt() - 1.0) / 2.0, k: 200, z: vec![[1.1, 0.0], [0.0, 2.0], [-3.0, 0.0], [1.5, 1.5]] }
    }
}

fn default_observable() -> String {
    "x".into()
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub map: MapSpec,
    #[serde(default = "default_observable")]
    pub observable: String,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub orbit: OrbitParams,
    #[serde(default)]
    pub acim: AcimParams,
    #[serde(default)]
    pub suscept: SusceptParams,
    #[serde(default)]
    pub scan: ScanParams,
    #[serde(default)]
    pub nt: NtParams,
    #[serde(default)]
    pub ww: WwParams,
    #[serde(default)]
    pub lil: LilParams,
    #[serde(default)]
    pub witness: WitnessParams,
    #[serde(default)]
    pub response: ResponseConfig,
    #[serde(default)]
    pub hecke: HeckeParams,
}

/// Leaf names an override may touch.
fn is_tolerance_key(key: &str) -> bool {
    key == "tol" || key.ends_with("_tol") || key.starts_with("eps") || key == "delta"
}

/// Parses `a.b=1e-9,c.tol=2` into dotted paths and values.
pub fn parse_overrides(src: &str) -> Result<Vec<(String, f64)>> {
    src.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("override `{kv}` has a non-numeric value")))?;
            let k = k.trim().to_string();
            let leaf = k.rsplit('.').next().unwrap_or_default();
            if !is_tolerance_key(leaf) {
                return Err(Error::Config(format!("`{k}` is not a tolerance")));
            }
            Ok((k, v))
        })
        .collect()
}

impl Scenario {
    pub fn from_toml(src: &str) -> Result<Self> {
        Self::from_toml_with(src, &[])
    }

    /// Parses, then applies overrides on the raw tree before typing it, so an
    /// override is validated exactly like a value written in the file.
    pub fn from_toml_with(src: &str, overrides: &[(String, f64)]) -> Result<Self> {
        let mut tree: toml::Table = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        for (path, v) in overrides {
            let mut parts: Vec<&str> = path.split('.').collect();
            let leaf = parts.pop().unwrap_or_default();
            let mut node = &mut tree;
            for p in parts {
                node = node
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{path}` does not name a table entry")))?;
            }
            node.insert(leaf.to_string(), toml::Value::Float(*v));
        }
        let s: Scenario = toml::Value::Table(tree).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.orbit.length < 2 {
            return bad("orbit.length must be at least 2");
        }
        if self.acim.n < 16 || self.response.n < 16 {
            return bad("grid sizes must be at least 16");
        }
        let tols = [self.acim.eps_s, self.suscept.tol, self.scan.tol, self.nt.tol, self.witness.delta, self.response.tol];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("tolerances must be positive");
        }
        if self.scan.j_min > self.scan.j_max || self.nt.j_min + 2 > self.nt.j_max {
            return bad("j ranges must be increasing (nt needs at least three radii)");
        }
        if self.scan.arcs.iter().any(|a| !(a[0] < a[1])) {
            return bad("arcs must be [start, end] with start < end");
        }
        self.nt.sector().points()?;
        Expr::parse(&self.observable)?;
        Ok(())
    }

    /// Canonical JSON: object keys sorted, defaults resolved.
    pub fn canonical(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario serializes");
        serde_json::to_string(&v).expect("json value serializes")
    }

    /// SHA-256 of the canonical form, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn build_map(&self) -> Result<UnimodalMap> {
        crate::map::build_map(&self.map)
    }

    pub fn orbit(&self, map: &UnimodalMap) -> Result<PostcriticalOrbit> {
        postcritical_orbit(map, self.orbit.length)
    }

    pub fn observable(&self) -> Result<Observable> {
        Observable::parse(&self.observable)
    }

    /// `X`, or the zero field when none is configured.
    pub fn perturbation(&self, map: &UnimodalMap, orbit: &PostcriticalOrbit) -> Result<Perturbation> {
        match &self.perturbation {
            None => Ok(Perturbation::zero()),
            Some(PerturbationSpec::Expr(f)) => Perturbation::parse(&f.expr, map.a()),
            Some(PerturbationSpec::Horizontal(f)) => {
                let basis: Vec<Expr> = f.basis.iter().map(|b| Expr::parse(b)).collect::<Result<_>>()?;
                make_horizontal(map, orbit, &Expr::parse(&f.base)?, &basis, f.order)
            }
        }
    }

    /// The response parameters with the scenario seed.
    pub fn response_config(&self) -> ResponseConfig {
        ResponseConfig { seed: self.seed, ..self.response.clone() }
    }
}
