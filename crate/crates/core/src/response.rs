//! The perturbed family `f_t = f + t X∘f` and the three routes to
//! `∂_t ∫φ dμ_t` at `t = 0`: finite differences, the closed formula
//! `V_φ(1) + Ψ^hol(1)`, and nontangential limits of `Ψ_φ` at 1 from inside
//! and from outside the disc.

use crate::acim::{build_ulam, psi_hol_eval, saltus_decomposition, stationary_density, AcimDensity, UlamOperator};
use crate::diagnostics::{nontangential_limit, NtWeight, SectorSpec, Verdict};
use crate::error::{Error, Result};
use crate::map::{PostcriticalOrbit, PrecriticalOrbit, UnimodalMap};
use crate::observable::{HorizontalityRecord, Observable, Perturbation};
use crate::right_limits::{backward_birkhoff_deviation, sample_precritical};
use crate::series::{
    horizontality_record, horizontality_sum, singular_factors, v_at_one_resummed, Continuation, SeriesValue,
    Susceptibility,
};
use crate::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `f_t = f + t X∘f` with its conservative expansion threshold.
#[derive(Clone, Debug)]
pub struct FamilyAtT {
    pub t: f64,
    pub t_max: f64,
    pub map: UnimodalMap,
}

/// `(λ − 1)/(λ sup|X'| + 1)`.
pub fn expansion_threshold(map: &UnimodalMap, x: &Perturbation) -> f64 {
    let lambda = map.lambda();
    (lambda - 1.0) / (lambda * x.sup_d1_on(map.a(), map.b()) + 1.0)
}

pub fn family_at(map: &UnimodalMap, x: &Perturbation, t: f64) -> Result<FamilyAtT> {
    let t_max = expansion_threshold(map, x);
    if !(t.abs() <= t_max) {
        let lambda = map.lambda();
        let bound = lambda * (1.0 - t.abs() * x.sup_d1_on(map.a(), map.b()));
        return Err(Error::ExpansionViolated { x: map.critical(), value: bound });
    }
    let perturbed = map.perturbed(x.expr(), t)?;
    Ok(FamilyAtT { t, t_max, map: perturbed })
}

/// Ulam operator plus the split density at one resolution.
pub struct AcimLevel {
    pub op: UlamOperator,
    pub density: AcimDensity,
}

pub const SALTUS_EPS: f64 = 1e-12;

pub fn acim_level(map: &UnimodalMap, orbit: &PostcriticalOrbit, n: usize) -> Result<AcimLevel> {
    let op = build_ulam(map, n)?;
    let sd = stationary_density(&op)?;
    let density = saltus_decomposition(map, orbit, &op, &sd, SALTUS_EPS)?;
    Ok(AcimLevel { op, density })
}

#[derive(Clone, Debug, Serialize)]
pub struct FdEstimate {
    pub value: f64,
    pub err: f64,
    /// Two-point central difference at the finest resolution.
    pub fd2: f64,
    /// `|fd4 − fd2|`.
    pub richardson: f64,
    /// `|fd4(N) − fd4(N')|` against the next coarser resolution, 0 with a single one.
    pub discretization: f64,
    pub t0: f64,
    pub resolutions: Vec<usize>,
    /// `∫φ dμ_t` at `t = −2t_0, −t_0, t_0, 2t_0` for the finest resolution.
    pub means: Vec<f64>,
}

/// Four-point central difference of `t ↦ ∫φ dμ_t` at each resolution in
/// `ns` (ascending); the value is taken at the last one.
pub fn response_fd(map: &UnimodalMap, x: &Perturbation, phi: &Observable, t0: f64, ns: &[usize]) -> Result<FdEstimate> {
    if ns.is_empty() {
        return Err(Error::InvalidSpec("no resolution given".into()));
    }
    let steps = [-2.0, -1.0, 1.0, 2.0];
    let maps: Vec<UnimodalMap> = steps.iter().map(|k| Ok(family_at(map, x, k * t0)?.map)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..ns.len()).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
    let means: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let op = build_ulam(&maps[j], ns[i])?;
            let sd = stationary_density(&op)?;
            Ok(phi.mean(&sd.grid, &sd.rho).re)
        })
        .collect::<Result<_>>()?;
    let stencil = |v: &[f64]| {
        let fd4 = (-v[3] + 8.0 * v[2] - 8.0 * v[1] + v[0]) / (12.0 * t0);
        let fd2 = (v[2] - v[1]) / (2.0 * t0);
        (fd4, fd2)
    };
    let last = ns.len() - 1;
    let (fd4, fd2) = stencil(&means[4 * last..]);
    let discretization = if last > 0 { (fd4 - stencil(&means[4 * (last - 1)..4 * last]).0).abs() } else { 0.0 };
    let richardson = (fd4 - fd2).abs();
    Ok(FdEstimate {
        value: fd4,
        err: richardson + discretization,
        fd2,
        richardson,
        discretization,
        t0,
        resolutions: ns.to_vec(),
        means: means[4 * last..].to_vec(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaEstimate {
    pub value: f64,
    pub err: f64,
    pub v: f64,
    pub hol: f64,
    pub v_tail: f64,
    /// `V_φ(1)` by the resummed double series, when it converges.
    pub v_resummed: Option<f64>,
    pub hol_residual: f64,
    /// `|formula(N) − formula(N')|` against a coarser resolution, when given.
    pub discretization: f64,
}

/// `V_φ(1) + Ψ^hol(1)` for horizontal `X` and mean-normalized `φ`.
pub fn response_formula(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    x: &Perturbation,
    phi: &Observable,
    level: &AcimLevel,
    tol: f64,
) -> Result<FormulaEstimate> {
    if x.is_zero() {
        return Ok(FormulaEstimate { value: 0.0, err: 0.0, v: 0.0, hol: 0.0, v_tail: 0.0, v_resummed: Some(0.0), hol_residual: 0.0, discretization: 0.0 });
    }
    let h0 = horizontality_sum(map, orbit, x, 0, 1e-14)?.value.re;
    if h0.abs() > 1e-8 {
        return Err(Error::NotHorizontal(h0));
    }
    let one = C64::new(1.0, 0.0);
    let d = &level.density;
    let f = singular_factors(map, orbit, x, phi, d.s1, one, 0, tol)?;
    let hol = psi_hol_eval(x, phi, d, &level.op, one, 0)?;
    let v_resummed = v_at_one_resummed(map, orbit, x, phi, d.s1, tol).ok().map(|s| s.value.re);
    let v = f.v[0].value.re;
    let hv = hol.values[0].re;
    Ok(FormulaEstimate {
        value: v + hv,
        err: f.v[0].tail,
        v,
        hol: hv,
        v_tail: f.v[0].tail,
        v_resummed,
        hol_residual: hol.residual,
        discretization: 0.0,
    })
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseConfig {
    pub n: usize,
    /// Coarser resolution used for the discretization error estimates.
    pub n_coarse: Option<usize>,
    pub t0: f64,
    pub orbit_len: usize,
    pub j_min: u32,
    pub j_max: u32,
    pub outer_j_min: u32,
    pub precritical_depth: usize,
    pub seed: u64,
    pub birkhoff_tol: f64,
    pub birkhoff_m: usize,
    pub max_attempts: usize,
    pub tol: f64,
    pub outer: bool,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            n: 1 << 13,
            n_coarse: Some(1 << 12),
            t0: 1e-3,
            orbit_len: 2_000_000,
            j_min: 4,
            j_max: 14,
            outer_j_min: 5,
            precritical_depth: 1 << 20,
            seed: 0,
            birkhoff_tol: 0.05,
            birkhoff_m: 10_000,
            max_attempts: 32,
            tol: 1e-9,
            outer: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NtSample {
    pub j: u32,
    pub z: C64,
    pub value: f64,
    pub tail: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NtEstimate {
    pub value: f64,
    pub err: f64,
    /// Absent for non-horizontal `X`, where no limit is claimed.
    pub verdict: Option<Verdict>,
    pub samples: Vec<NtSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterChoice {
    pub seed: u64,
    pub attempts: usize,
    pub depth: usize,
    /// Largest backward Birkhoff deviation over the test observables.
    pub birkhoff_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Horizontality {
    pub order: usize,
    pub residuals: Vec<f64>,
}

impl From<HorizontalityRecord> for Horizontality {
    fn from(r: HorizontalityRecord) -> Self {
        Horizontality { order: r.order, residuals: r.residuals }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResponseReport {
    pub fd: FdEstimate,
    pub formula: Option<FormulaEstimate>,
    pub nt_inner: NtEstimate,
    pub nt_outer: Option<NtEstimate>,
    pub outer_orbit: Option<OuterChoice>,
    pub horizontality: Horizontality,
    pub u_at_one: f64,
    /// `∫φ dμ` subtracted before the formula and limits.
    pub phi_mean: f64,
    /// Every pair of available columns agrees within its summed errors.
    pub consistent: bool,
    /// `(max − min)/|mean|` over the available columns.
    pub spread: f64,
}

/// Picks the first seeded backward orbit whose Birkhoff averages of
/// `x`, `x^2` and `φ` stay within `birkhoff_tol` of the acim means.
pub fn choose_precritical(
    map: &UnimodalMap,
    phi: &Observable,
    density: &AcimDensity,
    cfg: &ResponseConfig,
) -> Result<(PrecriticalOrbit, OuterChoice)> {
    let grid = density.grid;
    let rho = &density.rho;
    let mut tests = vec![];
    for src in ["x", "x^2"] {
        let o = Observable::parse(src)?;
        let m = o.mean(&grid, rho).re;
        tests.push((o, m));
    }
    tests.push((phi.clone(), phi.mean(&grid, rho).re));
    let m = cfg.birkhoff_m;
    let ms = [m / 10, m / 4, m / 2, m];
    let mut best = f64::INFINITY;
    for attempt in 0..cfg.max_attempts.max(1) {
        let seed = cfg.seed + attempt as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pre = sample_precritical(map, &grid, rho, cfg.precritical_depth.max(m), &mut rng)?;
        let dev = backward_birkhoff_deviation(&pre, &tests, &ms)?;
        best = best.min(dev);
        if dev <= cfg.birkhoff_tol {
            let choice = OuterChoice { seed, attempts: attempt + 1, depth: pre.depth(), birkhoff_deviation: dev };
            return Ok((pre, choice));
        }
    }
    Err(Error::NotFound(format!("no sampled precritical orbit passed the Birkhoff check (best {best:e})")))
}

fn nt_estimate(sus: &Susceptibility, sector: &SectorSpec, horizontal: bool) -> Result<NtEstimate> {
    let side = sector.side;
    let eval = |z: C64, d: usize| -> Result<SeriesValue> {
        let v = sus.eval_derivative(z, side, d)?;
        Ok(SeriesValue { value: v.value, terms: 0, tail: v.tail })
    };
    let rep = nontangential_limit(&eval, sector, NtWeight::None)?;
    let pts = sector.points()?;
    let samples = rep
        .values
        .iter()
        .zip(&rep.errors)
        .zip(&pts)
        .enumerate()
        .map(|(i, ((v, e), z))| NtSample { j: sector.j_min + i as u32, z: *z, value: v.re, tail: *e })
        .collect();
    Ok(NtEstimate {
        value: rep.limit.unwrap_or_default().re,
        err: rep.limit_error.unwrap_or(f64::INFINITY),
        verdict: horizontal.then_some(rep.verdict),
        samples,
    })
}

/// Side-by-side finite-difference, formula and nontangential estimates.
/// `phi` is the raw observable; it is centered against the acim here.
pub fn response_report(map: &UnimodalMap, x: &Perturbation, phi: &Observable, cfg: &ResponseConfig) -> Result<ResponseReport> {
    let orbit = crate::map::postcritical_orbit(map, cfg.orbit_len)?;
    let mut ns = vec![];
    if let Some(nc) = cfg.n_coarse {
        ns.push(nc);
    }
    ns.push(cfg.n);
    let fd = response_fd(map, x, phi, cfg.t0, &ns)?;
    let level = acim_level(map, &orbit, cfg.n)?;
    let d = &level.density;
    let phi_mean = phi.mean(&d.grid, &d.rho).re;
    let phin = phi.normalized(&d.grid, &d.rho);
    let record = horizontality_record(map, &orbit, x, 3)?;
    let horizontal = x.is_zero() || record.order >= 1;
    let u_at_one = if x.is_zero() {
        0.0
    } else {
        singular_factors(map, &orbit, x, &phin, d.s1, C64::new(1.0, 0.0), 0, cfg.tol)?.u[0].value.re
    };

    let formula = if horizontal {
        let mut f = response_formula(map, &orbit, x, &phin, &level, cfg.tol)?;
        if let Some(nc) = cfg.n_coarse {
            let coarse = acim_level(map, &orbit, nc)?;
            let pc = phi.normalized(&coarse.density.grid, &coarse.density.rho);
            let fc = response_formula(map, &orbit, x, &pc, &coarse, cfg.tol)?;
            f.discretization = (f.value - fc.value).abs();
            f.err += f.discretization;
        }
        Some(f)
    } else {
        None
    };

    let sus = Susceptibility::new(map, &orbit, x, &phin, d, &level.op, cfg.tol);
    let inner = SectorSpec::radial(0.0, cfg.j_min, cfg.j_max, Continuation::Inner);
    let nt_inner = nt_estimate(&sus, &inner, horizontal)?;

    let (nt_outer, outer_orbit) = if cfg.outer {
        let (pre, choice) = choose_precritical(map, phi, d, cfg)?;
        let sus = sus.with_outer(&pre);
        let outer = SectorSpec::radial(0.0, cfg.outer_j_min.max(cfg.j_min), cfg.j_max, Continuation::Outer);
        (Some(nt_estimate(&sus, &outer, horizontal)?), Some(choice))
    } else {
        (None, None)
    };

    let mut cols: Vec<(f64, f64)> = vec![(fd.value, fd.err)];
    if let Some(f) = &formula {
        cols.push((f.value, f.err));
    }
    if horizontal {
        cols.push((nt_inner.value, nt_inner.err));
        if let Some(o) = &nt_outer {
            cols.push((o.value, o.err));
        }
    }
    let consistent = cols.iter().enumerate().all(|(i, a)| cols[i + 1..].iter().all(|b| (a.0 - b.0).abs() <= a.1 + b.1));
    let (lo, hi) = cols.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), c| (l.min(c.0), h.max(c.0)));
    let mean = cols.iter().map(|c| c.0).sum::<f64>() / cols.len() as f64;
    let spread = if hi == lo { 0.0 } else { (hi - lo) / mean.abs() };

    Ok(ResponseReport {
        fd,
        formula,
        nt_inner,
        nt_outer,
        outer_orbit,
        horizontality: record.into(),
        u_at_one,
        phi_mean,
        consistent,
        spread,
    })
}
