//! Finite-data probes of boundary behaviour: radial integrals, nontangential
//! limits, rotated ergodic averages, LIL ratios and the Hecke reference.
//!
//! Every verdict here describes the sampled data only. A growth verdict is
//! a diagnostic consistent with a strong natural boundary, never a proof.

use crate::error::{Error, Result};
use crate::map::PostcriticalOrbit;
use crate::observable::Observable;
use crate::series::{phase, rotated_sums, Continuation, SeriesValue, OUTER_RADIUS};
use crate::C64;
use rayon::prelude::*;
use serde::Serialize;

/// Anything that evaluates a function (or its `order`-th derivative) with a
/// truncation tail.
pub trait Evaluator: Sync {
    fn eval(&self, z: C64, order: usize) -> Result<SeriesValue>;
}

impl<F> Evaluator for F
where
    F: Fn(C64, usize) -> Result<SeriesValue> + Sync,
{
    fn eval(&self, z: C64, order: usize) -> Result<SeriesValue> {
        self(z, order)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanKind {
    Radial,
    NontangentialLimit,
    WienerWintner,
    Lil,
    LilEnvelope,
    SectorEnvelope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    GrowthConsistentWithStrongBoundary,
    Bounded,
    Converged,
    NotConverged,
    Decaying,
    NotDecaying,
    Plateau,
    NoPlateau,
    EnvelopeHolds,
    EnvelopeViolated,
}

/// One scan. `abscissae`, `values` and `errors` are parallel; `aux` holds a
/// kind-specific extra column (running sup for LIL, `m` for Wiener–Wintner).
#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub kind: ScanKind,
    pub abscissae: Vec<f64>,
    pub values: Vec<C64>,
    pub errors: Vec<f64>,
    pub aux: Vec<f64>,
    /// Fitted slope, constant or sector constant, depending on the kind.
    pub trend: Option<f64>,
    pub limit: Option<C64>,
    pub limit_error: Option<f64>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl ScanReport {
    fn new(kind: ScanKind, verdict: Verdict) -> Self {
        ScanReport {
            kind,
            abscissae: vec![],
            values: vec![],
            errors: vec![],
            aux: vec![],
            trend: None,
            limit: None,
            limit_error: None,
            verdict,
            notes: vec![],
        }
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub const RADIAL_PANELS: usize = 1 << 10;
const RADIAL_MAX_PANELS: usize = 1 << 16;
pub const RADIAL_QUAD_TOL: f64 = 0.01;
/// Doublings of `(1-r)^{-1}` a monotone run must span for the growth verdict.
pub const GROWTH_DOUBLINGS: f64 = 4.0;

/// `∫_{ω_1}^{ω_2} |g(r e^{iω})| dω` at each `r`, by composite midpoint with
/// panel doubling until the relative change drops below 1%.
pub fn radial_scan(
    eval: &dyn Evaluator,
    omega1: f64,
    omega2: f64,
    radii: &[f64],
    panels: usize,
) -> Result<ScanReport> {
    if !(omega1 < omega2) {
        return Err(Error::InvalidSpec(format!("arc [{omega1}, {omega2}] is empty")));
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(Error::OutsideDomain(*r));
    }
    let mut report = ScanReport::new(ScanKind::Radial, Verdict::Bounded);
    for &r in radii {
        let (integral, tail) = arc_integral(eval, omega1, omega2, r, panels.max(1))?;
        report.abscissae.push(r);
        report.values.push(C64::new(integral, 0.0));
        report.errors.push(tail);
    }
    let ints: Vec<f64> = report.values.iter().map(|v| v.re).collect();
    if radii.len() >= 2 && ints.iter().all(|v| *v > 0.0) {
        let lx: Vec<f64> = radii.iter().map(|r| (1.0 - r).ln()).collect();
        let ly: Vec<f64> = ints.iter().map(|v| v.ln()).collect();
        report.trend = Some(fit_slope(&lx, &ly));
    }
    // longest monotone run ending at the last radius
    let mut start = radii.len().saturating_sub(1);
    while start > 0 && radii[start] > radii[start - 1] && ints[start] > ints[start - 1] * (1.0 + RADIAL_QUAD_TOL) {
        start -= 1;
    }
    if radii.len() >= 2 {
        let span = ((1.0 - radii[start]) / (1.0 - radii[radii.len() - 1])).log2();
        if span >= GROWTH_DOUBLINGS - 1e-9 {
            report.verdict = Verdict::GrowthConsistentWithStrongBoundary;
        }
        report.notes.push(format!("monotone run spans {span:.2} doublings of 1/(1-r)"));
    }
    report.notes.push("finite-data growth diagnostic, not a proof of a natural boundary".into());
    Ok(report)
}

fn arc_integral(eval: &dyn Evaluator, w1: f64, w2: f64, r: f64, panels: usize) -> Result<(f64, f64)> {
    let quad = |n: usize| -> Result<(f64, f64)> {
        let h = (w2 - w1) / n as f64;
        let samples: Vec<Result<SeriesValue>> = (0..n)
            .into_par_iter()
            .map(|i| eval.eval(C64::from_polar(r, w1 + (i as f64 + 0.5) * h), 0))
            .collect();
        let mut sum = 0.0;
        let mut tail: f64 = 0.0;
        for s in samples {
            let s = s?;
            sum += s.value.norm();
            tail = tail.max(s.tail);
        }
        Ok((sum * h, tail))
    };
    let mut n = panels;
    let (mut prev, mut tail) = quad(n)?;
    while n < RADIAL_MAX_PANELS {
        n *= 2;
        let (next, t) = quad(n)?;
        tail = tail.max(t);
        let done = (next - prev).abs() <= RADIAL_QUAD_TOL * next.abs();
        prev = next;
        if done {
            break;
        }
    }
    Ok((prev, tail))
}

/// A sector at `e^{iω}` sampled at distances `2^{-j}` from the vertex.
///
/// Inner points are `e^{iω}(1 − 2^{-j} e^{iθ})` for the tilt `θ`; outer
/// points are their reflections `1/z̄` across the circle, on the same ray.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorSpec {
    pub omega: f64,
    pub half_aperture: f64,
    pub tilt: f64,
    pub j_min: u32,
    pub j_max: u32,
    pub side: Continuation,
}

impl SectorSpec {
    pub fn radial(omega: f64, j_min: u32, j_max: u32, side: Continuation) -> Self {
        SectorSpec { omega, half_aperture: std::f64::consts::FRAC_PI_4, tilt: 0.0, j_min, j_max, side }
    }

    /// The vertex-side points `z_j` inside the disc.
    pub fn inner_points(&self) -> Result<Vec<C64>> {
        if !(self.half_aperture > 0.0 && self.half_aperture < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidSpec(format!("half-aperture {} outside (0, π/2)", self.half_aperture)));
        }
        if !(self.tilt.abs() < self.half_aperture) {
            return Err(Error::InvalidSpec(format!("tilt {} leaves the sector", self.tilt)));
        }
        if self.j_min > self.j_max || self.j_max - self.j_min < 2 {
            return Err(Error::InvalidSpec("a sector needs at least three radii".into()));
        }
        let vertex = C64::from_polar(1.0, self.omega);
        let dir = C64::from_polar(1.0, self.tilt);
        let pts: Vec<C64> = (self.j_min..=self.j_max).map(|j| vertex * (1.0 - dir * 2f64.powi(-(j as i32)))).collect();
        if let Some(z) = pts.iter().find(|z| !(z.norm() < 1.0)) {
            return Err(Error::InvalidSpec(format!("sector point {z} is not inside the disc")));
        }
        Ok(pts)
    }

    /// Points handed to the evaluator for this side.
    pub fn points(&self) -> Result<Vec<C64>> {
        let inner = self.inner_points()?;
        match self.side {
            Continuation::Inner => Ok(inner),
            Continuation::Outer => {
                let pts: Vec<C64> = inner.iter().map(|z| z.conj().inv()).collect();
                if let Some(w) = pts.iter().find(|w| !(w.norm() < OUTER_RADIUS)) {
                    return Err(Error::InvalidSpec(format!("outer point {w} is beyond radius {OUTER_RADIUS}")));
                }
                Ok(pts)
            }
        }
    }

    /// Largest `|1 − z e^{-iω}| / (1 − |z|)` over the inner points.
    pub fn sector_constant(&self) -> Result<f64> {
        let back = C64::from_polar(1.0, -self.omega);
        Ok(self
            .inner_points()?
            .iter()
            .map(|z| (1.0 - z * back).norm() / (1.0 - z.norm()))
            .fold(0.0, f64::max))
    }
}

/// Multiplier applied to the evaluated function along the sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NtWeight {
    None,
    /// `(z − e^{iω})` at the evaluated point.
    Vertex,
    /// The `ℓ`-th z-derivative, unweighted.
    Derivative(usize),
}

/// Evaluates along the sector and estimates the limit from the last three
/// samples. The estimate is the last value; with `q = |d_2|/|d_1|` the
/// error is `|d_2|/(1-q)` plus the last tail, or `|d_1| + |d_2|` when the
/// differences do not contract.
pub fn nontangential_limit(eval: &dyn Evaluator, sector: &SectorSpec, weight: NtWeight) -> Result<ScanReport> {
    let pts = sector.points()?;
    let vertex = C64::from_polar(1.0, sector.omega);
    let order = match weight {
        NtWeight::Derivative(l) => l,
        _ => 0,
    };
    let samples: Vec<Result<SeriesValue>> = pts.par_iter().map(|&z| eval.eval(z, order)).collect();
    let mut report = ScanReport::new(ScanKind::NontangentialLimit, Verdict::NotConverged);
    for (i, (s, &z)) in samples.into_iter().zip(&pts).enumerate() {
        let s = s?;
        let w = match weight {
            NtWeight::Vertex => z - vertex,
            _ => C64::new(1.0, 0.0),
        };
        report.abscissae.push((sector.j_min + i as u32) as f64);
        report.values.push(s.value * w);
        report.errors.push(s.tail * w.norm());
        report.aux.push(z.norm());
    }
    let (est, err, converged) = three_point(&report.values, &report.errors);
    report.limit = Some(est);
    report.limit_error = Some(err);
    report.trend = Some(sector.sector_constant()?);
    report.verdict = if converged { Verdict::Converged } else { Verdict::NotConverged };
    Ok(report)
}

/// `(estimate, error, contracting)` from the last three samples.
pub fn three_point(values: &[C64], tails: &[f64]) -> (C64, f64, bool) {
    let n = values.len();
    let last = values[n - 1];
    let tail = tails[n - 1];
    if n < 3 {
        return (last, f64::INFINITY, false);
    }
    let d1 = (values[n - 2] - values[n - 3]).norm();
    let d2 = (values[n - 1] - values[n - 2]).norm();
    if d2 == 0.0 {
        return (last, tail, true);
    }
    let q = if d1 > 0.0 { d2 / d1 } else { f64::INFINITY };
    if q < 1.0 {
        (last, d2 / (1.0 - q) + tail, true)
    } else {
        (last, d1 + d2 + tail, false)
    }
}

/// `|(1/m) Σ_{k<m} e^{iωk} φ(c_{k+1})|` over `m` for each `ω`. `values`
/// holds the moduli; `aux` holds `ω` and `abscissae` holds `m`.
///
/// The verdict is `Decaying` when, for every `ω`, the modulus at the
/// largest `m` is at most half the modulus at the largest `m` not above a
/// tenth of it.
pub fn wiener_wintner_check(orbit: &PostcriticalOrbit, phi: &Observable, omegas: &[f64], ms: &[usize]) -> Result<ScanReport> {
    let m_max = ms.iter().copied().max().ok_or_else(|| Error::InvalidSpec("empty m list".into()))?;
    if ms.contains(&0) {
        return Err(Error::InvalidSpec("m must be positive".into()));
    }
    orbit.require(m_max)?;
    let mut report = ScanReport::new(ScanKind::WienerWintner, Verdict::Decaying);
    let mut sorted = ms.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &omega in omegas {
        let sums = rotated_sums(orbit, phi, omega, m_max)?;
        let moduli: Vec<f64> = sorted.iter().map(|&m| sums[m - 1].norm() / m as f64).collect();
        for (&m, &v) in sorted.iter().zip(&moduli) {
            report.abscissae.push(m as f64);
            report.values.push(C64::new(v, 0.0));
            report.errors.push(0.0);
            report.aux.push(omega);
        }
        let last = *moduli.last().unwrap();
        let decade = sorted.iter().rposition(|&m| m * 10 <= m_max);
        let decays = match decade {
            Some(i) => last == 0.0 || last <= 0.5 * moduli[i],
            None => false,
        };
        if !decays {
            report.verdict = Verdict::NotDecaying;
        }
        if omega.rem_euclid(2.0 * std::f64::consts::PI) == 0.0 && !phi.is_normalized() {
            report.notes.push(format!("omega = {omega}: observable is not mean-normalized, averages tend to the mean"));
        }
    }
    Ok(report)
}

/// `RHS − LHS` of the van der Corput inequality for `u_0..u_{n-1}`.
pub fn van_der_corput_slack(u: &[C64], n: usize, h: usize) -> Result<f64> {
    if n > u.len() || h < 1 || h + 1 > n {
        return Err(Error::InvalidSpec(format!("need 1 <= h <= n-1 <= len-1, got n={n} h={h}")));
    }
    let u = &u[..n];
    let (nf, hf) = (n as f64, h as f64);
    let lhs = u.iter().sum::<C64>().norm_sqr();
    let energy: f64 = u.iter().map(|v| v.norm_sqr()).sum();
    let mut corr = 0.0;
    for l in 1..=h {
        let c: C64 = (0..n - l).map(|k| u[k + l].conj() * u[k]).sum();
        corr += (h + 1 - l) as f64 * c.norm();
    }
    let rhs = (nf + hf) / (hf + 1.0) * energy + 2.0 * (nf + hf) / ((hf + 1.0) * (hf + 1.0)) * corr;
    Ok(rhs - lhs)
}

/// `|S_m(e^{iω})| / √(m log log m)` with the running sup in `aux`.
///
/// `Plateau` when the running sup at the largest `m` exceeds the running
/// sup one decade earlier by less than 10%.
pub fn lil_ratio(orbit: &PostcriticalOrbit, phi: &Observable, omega: f64, ms: &[usize]) -> Result<ScanReport> {
    let mut sorted: Vec<usize> = ms.iter().copied().filter(|&m| m >= 3).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut report = ScanReport::new(ScanKind::Lil, Verdict::NoPlateau);
    if sorted.len() < ms.len() {
        report.notes.push("entries with m < 3 dropped".into());
    }
    let Some(&m_max) = sorted.last() else {
        return Ok(report);
    };
    let sums = rotated_sums(orbit, phi, omega, m_max)?;
    let mut sup: f64 = 0.0;
    for &m in &sorted {
        let mf = m as f64;
        let ratio = sums[m - 1].norm() / (mf * mf.ln().ln()).sqrt();
        sup = sup.max(ratio);
        report.abscissae.push(mf);
        report.values.push(C64::new(ratio, 0.0));
        report.errors.push(0.0);
        report.aux.push(sup);
    }
    if let Some(i) = sorted.iter().rposition(|&m| m * 10 <= m_max) {
        if sup <= 1.1 * report.aux[i] {
            report.verdict = Verdict::Plateau;
        }
    }
    report.trend = Some(sup);
    Ok(report)
}

/// `L(r) = Σ_{k>=3} r^{k-1} √(k log log k)` with a certified relative
/// tail, using `√(k log log k) <= k`.
pub fn lil_series(r: f64, rel_tol: f64) -> Result<SeriesValue> {
    if !(r >= 0.0 && r < 1.0) {
        return Err(Error::OutsideDomain(r));
    }
    let bound = |k: usize| {
        let kf = k as f64;
        r.powf(kf) * (kf + 1.0 - kf * r) / ((1.0 - r) * (1.0 - r))
    };
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut p = r * r;
    let mut k = 3usize;
    loop {
        let kf = k as f64;
        let term = p * (kf * kf.ln().ln()).sqrt();
        let t = sum + term;
        comp += if sum >= term { (sum - t) + term } else { (term - t) + sum };
        sum = t;
        p *= r;
        if k % 1024 == 0 && bound(k) <= rel_tol * sum {
            break;
        }
        k += 1;
        if k > 1 << 34 {
            return Err(Error::TailUnreachable { needed: k, available: 1 << 34 });
        }
    }
    Ok(SeriesValue { value: C64::new(sum + comp, 0.0), terms: k - 2, tail: bound(k) })
}

/// `(1-r)^{-3/2} (log log 1/(1-r))^{1/2}`.
pub fn lil_envelope(r: f64) -> f64 {
    let x = 1.0 - r;
    x.powf(-1.5) * (1.0 / x).ln().ln().sqrt()
}

/// Fits `M = max L(r)/envelope(r)` on `fit_radii`, then checks
/// `L(r) <= M envelope(r)` on `check_radii`. `trend` holds the slope of
/// `log L` against `log(1-r)` and `aux` holds the envelope ratios.
pub fn lil_envelope_check(fit_radii: &[f64], check_radii: &[f64]) -> Result<ScanReport> {
    let mut report = ScanReport::new(ScanKind::LilEnvelope, Verdict::EnvelopeHolds);
    if let Some(r) = fit_radii.iter().chain(check_radii).find(|r| lil_envelope(**r).is_nan() || !(**r > 1.0 - (-1.0f64).exp())) {
        return Err(Error::InvalidSpec(format!("r = {r} is below the envelope's range 1 - 1/e")));
    }
    let fit: Vec<SeriesValue> = fit_radii.par_iter().map(|&r| lil_series(r, 1e-12)).collect::<Result<_>>()?;
    let m = fit
        .iter()
        .zip(fit_radii)
        .map(|(l, &r)| (l.value.re + l.tail) / lil_envelope(r))
        .fold(0.0, f64::max);
    let lx: Vec<f64> = fit_radii.iter().map(|r| (1.0 - r).ln()).collect();
    let ly: Vec<f64> = fit.iter().map(|l| l.value.re.ln()).collect();
    report.trend = Some(fit_slope(&lx, &ly));
    report.limit = Some(C64::new(m, 0.0));
    let check: Vec<SeriesValue> = check_radii.par_iter().map(|&r| lil_series(r, 1e-12)).collect::<Result<_>>()?;
    for (l, &r) in check.iter().zip(check_radii) {
        let ratio = l.value.re / (m * lil_envelope(r));
        report.abscissae.push(r);
        report.values.push(l.value);
        report.errors.push(l.tail);
        report.aux.push(ratio);
        if ratio > 1.0 {
            report.verdict = Verdict::EnvelopeViolated;
        }
    }
    report.notes.push(format!("fitted M = {m:.6e}"));
    Ok(report)
}

/// Fits `C(S) = max |σ(z)| |z − e^{iω}|^{1/2} (log log 1/|z − e^{iω}|)^{-1/2}`
/// over the samples, which must satisfy `|z − e^{iω}| < 1/e`. `aux` holds
/// the per-sample constants; the verdict is `EnvelopeHolds` when the
/// constant over the closer half of the samples does not exceed the
/// constant over the farther half by more than a factor 2.
pub fn sector_envelope(omega: f64, samples: &[(C64, C64)]) -> Result<ScanReport> {
    let vertex = C64::from_polar(1.0, omega);
    let mut report = ScanReport::new(ScanKind::SectorEnvelope, Verdict::EnvelopeHolds);
    for &(z, v) in samples {
        let d = (z - vertex).norm();
        if !(d < (-1.0f64).exp()) {
            return Err(Error::InvalidSpec(format!("|z - e^(iω)| = {d} too large for the envelope")));
        }
        report.abscissae.push(d);
        report.values.push(v);
        report.errors.push(0.0);
        report.aux.push(v.norm() * d.sqrt() / (1.0 / d).ln().ln().sqrt());
    }
    let c = report.aux.iter().copied().fold(0.0, f64::max);
    report.trend = Some(c);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| report.abscissae[b].total_cmp(&report.abscissae[a]));
    let half = idx.len() / 2;
    let far = idx[..half].iter().map(|&i| report.aux[i]).fold(0.0, f64::max);
    let near = idx[half..].iter().map(|&i| report.aux[i]).fold(0.0, f64::max);
    if half > 0 && near > 2.0 * far {
        report.verdict = Verdict::EnvelopeViolated;
    }
    Ok(report)
}

/// `{x} − 1/2`.
fn centered_frac(x: f64) -> f64 {
    x.rem_euclid(1.0) - 0.5
}

/// `g(z) = Σ_{k<=K} ({kθ} − 1/2) z^k`, tail `|z|^{K+1} / (2(1 − |z|))`.
pub fn hecke_reference(theta: f64, z: C64, k: usize) -> Result<SeriesValue> {
    let r = z.norm();
    if !(r < 1.0) {
        return Err(Error::OutsideDomain(r));
    }
    let value = (0..=k).rev().fold(C64::new(0.0, 0.0), |acc, j| acc * z + centered_frac(j as f64 * theta));
    Ok(SeriesValue { value, terms: k + 1, tail: 0.5 * r.powi(k as i32 + 1) / (1.0 - r) })
}

/// `g_{b_-}(z) = −Σ_{1<=m<=K} ({−mθ} − 1/2) z^{-m}` for `|z| > 1`.
pub fn hecke_outer(theta: f64, z: C64, k: usize) -> Result<SeriesValue> {
    let r = z.norm();
    if !(r > 1.0) {
        return Err(Error::OutsideDomain(r));
    }
    let w = z.inv();
    let acc = (1..=k).rev().fold(C64::new(0.0, 0.0), |acc, m| acc * w - centered_frac(-(m as f64) * theta));
    Ok(SeriesValue { value: acc * w, terms: k, tail: 0.5 * r.powi(-(k as i32)) / (r - 1.0) })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HeckeGap {
    pub z: C64,
    pub gap: f64,
    /// Both truncation tails plus the Horner rounding bound of both sums.
    pub tails: f64,
}

/// `|g_{b_-}(z) − g(z^{-1}) − 1/2|` with both series truncated at `K`.
pub fn hecke_rrl_check(theta: f64, z: C64, k: usize) -> Result<HeckeGap> {
    let outer = hecke_outer(theta, z, k)?;
    let inner = hecke_reference(theta, z.inv(), k)?;
    let gap = (outer.value - inner.value - 0.5).norm();
    // γ_{2K+2} Σ |c_k| |w|^k per sum, with |c_k| <= 1/2 and |w| = 1/|z|
    let n = 2.0 * (k as f64 + 2.0);
    let gamma = n * f64::EPSILON / (1.0 - n * f64::EPSILON);
    let rounding = 2.0 * gamma * 0.5 / (1.0 - 1.0 / z.norm()) + f64::EPSILON;
    Ok(HeckeGap { z, gap, tails: outer.tail + inner.tail + rounding })
}

/// Right-limit windows `b_n` for `|n| <= w` of `{kθ} − 1/2`, taken at the
/// first `k` in `1..k_max` with `{kθ}` within `delta` of `0` from above
/// (`b^-`) or below (`b^+`).
pub fn hecke_right_limits(theta: f64, w: usize, delta: f64, k_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let find = |above: bool| {
        (w + 1..k_max)
            .find(|&k| {
                let f = (k as f64 * theta).rem_euclid(1.0);
                if above {
                    f < delta
                } else {
                    f > 1.0 - delta
                }
            })
            .ok_or_else(|| Error::NotFound(format!("no return within {delta} below k = {k_max}")))
    };
    let window = |k: usize| -> Vec<f64> {
        (-(w as i64)..=w as i64).map(|n| centered_frac((k as i64 + n) as f64 * theta)).collect()
    };
    Ok((window(find(true)?), window(find(false)?)))
}

/// Largest `|S_k(e^{iω}) − (ψ(c_1) − e^{ikω} ψ(c_{k+1}))|` for `k <= k_max`,
/// where `φ = ψ − e^{iω} ψ∘f`.
pub fn telescoping_defect(orbit: &PostcriticalOrbit, psi: &dyn Fn(f64) -> f64, phi: &Observable, omega: f64, k_max: usize) -> Result<f64> {
    orbit.require(k_max + 1)?;
    let sums = rotated_sums(orbit, phi, omega, k_max)?;
    let p1 = psi(orbit.point(1));
    Ok(sums
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k = i + 1;
            (s - (p1 - phase(k, omega) * psi(orbit.point(k + 1)))).norm()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{build_map, postcritical_orbit, MapSpec};

    #[test]
    fn van_der_corput_example() {
        let u = vec![C64::new(1.0, 0.0); 10];
        assert!((van_der_corput_slack(&u, 10, 3).unwrap() - 13.75).abs() < 1e-12);
        assert_eq!(van_der_corput_slack(&[C64::new(0.0, 0.0); 5], 5, 2).unwrap(), 0.0);
        assert!(van_der_corput_slack(&u, 10, 10).is_err());
    }

    #[test]
    fn geometric_series_is_bounded_on_far_arc() {
        let geo = |z: C64, _: usize| -> Result<SeriesValue> { Ok(SeriesValue::exact((1.0 - z).inv())) };
        let radii: Vec<f64> = (3..=10).map(|j| 1.0 - 2f64.powi(-j)).collect();
        let rep = radial_scan(&geo, std::f64::consts::FRAC_PI_2, std::f64::consts::PI, &radii, 256).unwrap();
        assert_eq!(rep.verdict, Verdict::Bounded);
    }

    #[test]
    fn rational_nt_limit_at_minus_one() {
        let f = |z: C64, _: usize| -> Result<SeriesValue> { Ok(SeriesValue::exact(0.5 - 0.5 * z / (1.0 - z))) };
        let s = SectorSpec::radial(std::f64::consts::PI, 4, 20, Continuation::Inner);
        let rep = nontangential_limit(&f, &s, NtWeight::None).unwrap();
        assert!((rep.limit.unwrap() - 0.75).norm() < 1e-5);
        assert!((rep.limit.unwrap() - 0.75).norm() <= rep.limit_error.unwrap());
        assert_eq!(rep.verdict, Verdict::Converged);
    }

    #[test]
    fn sector_points_respect_domains() {
        let s = SectorSpec { omega: 1.0, half_aperture: 0.6, tilt: 0.4, j_min: 3, j_max: 12, side: Continuation::Inner };
        let c = s.sector_constant().unwrap();
        let back = C64::from_polar(1.0, -1.0);
        for z in s.points().unwrap() {
            assert!(z.norm() < 1.0);
            let d = (1.0 - z * back).norm();
            assert!(1.0 - z.norm() <= d && d <= c * (1.0 - z.norm()) * (1.0 + 1e-12));
        }
        let outer = SectorSpec { side: Continuation::Outer, j_min: 5, ..s.clone() };
        assert!(outer.points().unwrap().iter().all(|w| w.norm() > 1.0 && w.norm() < OUTER_RADIUS));
        assert!(SectorSpec { side: Continuation::Outer, j_min: 2, ..s }.points().is_err());
    }

    #[test]
    fn wiener_wintner_constant_observable() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 10_000).unwrap();
        let one = Observable::constant(C64::new(1.0, 0.0));
        let ms = [10, 100, 1000, 10_000];
        let rep = wiener_wintner_check(&o, &one, &[std::f64::consts::FRAC_PI_3], &ms).unwrap();
        assert_eq!(rep.verdict, Verdict::Decaying);
        let bound = 2.0 / (1.0 - C64::from_polar(1.0, std::f64::consts::FRAC_PI_3)).norm();
        for (m, v) in rep.abscissae.iter().zip(&rep.values) {
            assert!(v.re <= bound / m + 1e-12);
        }
        let rep = wiener_wintner_check(&o, &one, &[0.0], &ms).unwrap();
        assert_eq!(rep.verdict, Verdict::NotDecaying);
        assert!(rep.values.iter().all(|v| (v.re - 1.0).abs() < 1e-12));
        assert_eq!(rep.notes.len(), 1);
    }

    #[test]
    fn lil_of_constant_rotated_vanishes() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 100_000).unwrap();
        let one = Observable::constant(C64::new(1.0, 0.0));
        let rep = lil_ratio(&o, &one, 1.0, &[2, 10, 1000, 100_000]).unwrap();
        assert_eq!(rep.abscissae.len(), 3);
        assert!(rep.values.last().unwrap().re < 1e-2);
        assert_eq!(rep.verdict, Verdict::Plateau);
    }

    #[test]
    fn lil_series_matches_brute_force() {
        let r: f64 = 0.9;
        let brute: f64 = (3..2000).map(|k| r.powi(k - 1) * ((k as f64) * (k as f64).ln().ln()).sqrt()).sum();
        let l = lil_series(r, 1e-14).unwrap();
        assert!((l.value.re - brute).abs() < 1e-10 * brute);
    }

    #[test]
    fn envelope_holds_from_point_nine() {
        let fit: Vec<f64> = (0..=10).map(|i| 1.0 - 0.1 * 10f64.powf(-0.5 * i as f64)).collect();
        let check = [0.9, 0.95, 0.999, 0.9999];
        let rep = lil_envelope_check(&fit, &check).unwrap();
        assert_eq!(rep.verdict, Verdict::EnvelopeHolds);
    }

    #[test]
    fn hecke_constant_term_and_identity() {
        let theta = (5f64.sqrt() - 1.0) / 2.0;
        assert_eq!(hecke_reference(theta, C64::new(0.0, 0.0), 10).unwrap().value, C64::new(-0.5, 0.0));
        let g = hecke_rrl_check(theta, C64::new(2.0, 0.0), 60).unwrap();
        assert!(g.gap <= g.tails.max(1e-14) && g.gap < 1e-10);
        let (minus, plus) = hecke_right_limits(theta, 5, 1e-4, 1_000_000).unwrap();
        assert!((minus[5] + 0.5).abs() < 1e-4 && (plus[5] - 0.5).abs() < 1e-4);
        for n in (0..11).filter(|&n| n != 5) {
            assert!((minus[n] - plus[n]).abs() < 1e-3);
        }
    }
}
