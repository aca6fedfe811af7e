//! Finite windows of right limits of the postcritical sequence, precritical
//! trees, covering depths and the witness pairs behind the natural-boundary
//! argument.
//!
//! Right limits are limits along infinite subsequences. Everything here is
//! about finite windows with convergence gaps, never about true limits.

use crate::acim::Grid;
use crate::error::{Error, Result};
use crate::map::{PostcriticalOrbit, PrecriticalOrbit, Side, UnimodalMap};
use crate::observable::Observable;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Approximate right limit `b_n`, `|n| <= W`, of `a_k = c_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RightLimitWindow {
    /// Increasing centers `k_j`.
    pub centers: Vec<usize>,
    pub half_width: usize,
    /// `b_{-W} .. b_W`.
    pub values: Vec<f64>,
    /// Per-entry gap `max_j |a_{n+k_j} − b_n|` over the last two centers.
    pub gaps: Vec<f64>,
}

impl RightLimitWindow {
    /// Window taken at the last center, with gaps against the one before.
    pub fn from_centers(orbit: &PostcriticalOrbit, centers: &[usize], half_width: usize) -> Result<Self> {
        let Some(&last) = centers.last() else {
            return Err(Error::InvalidSpec("a window needs at least one center".into()));
        };
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("centers must increase".into()));
        }
        if centers[0] < half_width {
            return Err(Error::InvalidSpec(format!("center {} is closer than W = {half_width} to the start", centers[0])));
        }
        orbit.require(last + half_width + 1)?;
        let a = |k: usize| orbit.point(k + 1);
        let w = half_width as i64;
        let values: Vec<f64> = (-w..=w).map(|n| a((last as i64 + n) as usize)).collect();
        let gaps = (-w..=w)
            .zip(&values)
            .map(|(n, &b)| {
                centers
                    .iter()
                    .rev()
                    .take(2)
                    .map(|&k| (a((k as i64 + n) as usize) - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(RightLimitWindow { centers: centers.to_vec(), half_width, values, gaps })
    }

    /// The renascent window: the precritical orbit for `n < 0`, `c_{n+1}` for `n >= 0`.
    pub fn glued(orbit: &PostcriticalOrbit, pre: &PrecriticalOrbit, half_width: usize) -> Result<Self> {
        if pre.depth() < half_width {
            return Err(Error::InvalidSpec(format!("precritical depth {} < W = {half_width}", pre.depth())));
        }
        orbit.require(half_width + 1)?;
        let mut values: Vec<f64> = (1..=half_width).rev().map(|m| pre.point(m)).collect();
        values.extend((0..=half_width).map(|n| orbit.point(n + 1)));
        Ok(RightLimitWindow { centers: vec![], half_width, gaps: vec![0.0; values.len()], values })
    }

    /// `b_n`.
    pub fn get(&self, n: i64) -> f64 {
        self.values[(n + self.half_width as i64) as usize]
    }

    pub fn gap(&self, n: i64) -> f64 {
        self.gaps[(n + self.half_width as i64) as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitViolation {
    pub n: i64,
    pub defect: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompleteOrbitVerdict {
    pub passed: bool,
    pub violations: Vec<OrbitViolation>,
}

pub const ORBIT_CHECK_FLOOR: f64 = 1e-9;

/// Checks `b_{n+1} = f(b_n)` within `max(gap_n, 1e-9)` for `−W <= n < W`.
pub fn complete_orbit_check(map: &UnimodalMap, window: &RightLimitWindow) -> CompleteOrbitVerdict {
    let w = window.half_width as i64;
    let violations: Vec<OrbitViolation> = (-w..w)
        .filter_map(|n| {
            let defect = (map.eval(window.get(n)) - window.get(n + 1)).abs();
            let tolerance = window.gap(n).max(ORBIT_CHECK_FLOOR);
            (!(defect <= tolerance)).then_some(OrbitViolation { n, defect, tolerance })
        })
        .collect();
    CompleteOrbitVerdict { passed: violations.is_empty(), violations }
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecriticalTree {
    pub depth: usize,
    pub orbits: Vec<PrecriticalOrbit>,
    /// Surviving strings per depth `0..=M`, after truncation.
    pub counts: Vec<usize>,
    pub truncated: bool,
    /// Whether the count at depth `M` reaches `min(cap, 2^{⌊M/2⌋})`.
    pub meets_bound: bool,
}

/// Breadth-first enumeration of `M`-bit inverse-branch strings whose orbits
/// stay in `[c_2, c_1]`, keeping at most `cap` strings per level.
pub fn enumerate_precritical(map: &UnimodalMap, depth: usize, cap: usize) -> Result<PrecriticalTree> {
    if depth < 1 {
        return Err(Error::InvalidSpec("precritical depth must be at least 1".into()));
    }
    let cap = cap.max(1);
    let mut level: Vec<(Vec<Side>, Vec<f64>)> = vec![(vec![], vec![map.critical()])];
    let mut counts = vec![1];
    let mut truncated = false;
    for _ in 0..depth {
        let mut next: Vec<(Vec<Side>, Vec<f64>)> = level
            .par_iter()
            .flat_map_iter(|(bits, pts)| {
                let y = *pts.last().unwrap();
                [Side::Left, Side::Right].into_iter().filter_map(move |s| {
                    map.inverse(s, y).map(|x| {
                        let mut b = bits.clone();
                        b.push(s);
                        let mut p = pts.clone();
                        p.push(x);
                        (b, p)
                    })
                })
            })
            .collect();
        if next.len() > cap {
            next.truncate(cap);
            truncated = true;
        }
        counts.push(next.len());
        level = next;
    }
    let bound = if depth / 2 >= usize::BITS as usize - 1 { usize::MAX } else { 1usize << (depth / 2) };
    let meets_bound = counts[depth] >= cap.min(bound);
    let orbits = level.into_iter().map(|(b, p)| PrecriticalOrbit::from_parts(p, b)).collect();
    Ok(PrecriticalTree { depth, orbits, counts, truncated, meets_bound })
}

/// A backward orbit of depth `M` chosen at random with the invariant
/// backward weights `ρ(x)/|f'(x)|` over the preimages `x` of the current
/// point, so that it is typical for the acim.
pub fn sample_precritical<R: Rng>(map: &UnimodalMap, grid: &Grid, rho: &[f64], depth: usize, rng: &mut R) -> Result<PrecriticalOrbit> {
    if depth < 1 {
        return Err(Error::InvalidSpec("precritical depth must be at least 1".into()));
    }
    let mut points = Vec::with_capacity(depth);
    let mut bits = Vec::with_capacity(depth - 1);
    let mut y = map.critical();
    points.push(y);
    while points.len() < depth {
        let cands: Vec<(Side, f64, f64)> = [Side::Left, Side::Right]
            .into_iter()
            .filter_map(|s| map.inverse(s, y).map(|x| (s, x, rho[grid.cell(x)].max(0.0) / map.deriv(x).abs())))
            .collect();
        if cands.is_empty() {
            return Err(Error::BranchUnavailable(points.len() + 1));
        }
        let total: f64 = cands.iter().map(|c| c.2).sum();
        let pick = if cands.len() == 1 {
            0
        } else if total > 0.0 {
            usize::from(rng.random::<f64>() * total >= cands[0].2)
        } else {
            usize::from(rng.random::<bool>())
        };
        let (s, x, _) = cands[pick];
        bits.push(s);
        points.push(x);
        y = x;
    }
    Ok(PrecriticalOrbit::from_parts(points, bits))
}

/// Largest `|(1/m) Σ_{k<=m} φ(y_{-k}) − ∫φ dμ|` over the given `m` and
/// observables, each paired with its mean.
pub fn backward_birkhoff_deviation(pre: &PrecriticalOrbit, observables: &[(Observable, f64)], ms: &[usize]) -> Result<f64> {
    let m_max = ms.iter().copied().max().unwrap_or(0);
    if m_max > pre.depth() {
        return Err(Error::OrbitTooShort { needed: m_max, available: pre.depth() });
    }
    let mut worst: f64 = 0.0;
    for (phi, mean) in observables {
        let mut s = 0.0;
        let mut k = 0;
        let mut sorted = ms.to_vec();
        sorted.sort_unstable();
        for m in sorted.into_iter().filter(|&m| m > 0) {
            while k < m {
                s += phi.eval(pre.points()[k]).re;
                k += 1;
            }
            worst = worst.max((s / m as f64 - mean).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringDepth {
    pub depth: usize,
    pub size: usize,
    /// Largest distance from a point of `[c_2, c_1]` to the preimage set.
    pub max_distance: f64,
    /// `f^{-ℓ}(x_0)`, ascending.
    pub points: Vec<f64>,
}

pub const PREIMAGE_BUDGET: usize = 1_000_000;

/// Half the largest gap of the sorted set, counting the two ends in full.
fn max_distance(points: &[f64], lo: f64, hi: f64) -> f64 {
    let (Some(&first), Some(&last)) = (points.first(), points.last()) else {
        return f64::INFINITY;
    };
    let inner = points.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(0.0, f64::max);
    inner.max(first - lo).max(hi - last)
}

/// First `ℓ` with `f^{-ℓ}(x_0)` `ε`-dense in `[c_2, c_1]`.
pub fn covering_depth(map: &UnimodalMap, x0: f64, eps: f64) -> Result<CoveringDepth> {
    let (lo, hi) = (map.c2(), map.c1());
    if !(x0 > lo && x0 < hi) {
        return Err(Error::InvalidSpec(format!("x0 = {x0} is not inside (c2, c1)")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("eps = {eps} must be positive")));
    }
    let mut set = vec![x0];
    let mut depth = 0;
    loop {
        let d = max_distance(&set, lo, hi);
        if d <= eps {
            return Ok(CoveringDepth { depth, size: set.len(), max_distance: d, points: set });
        }
        if set.len() * 2 > PREIMAGE_BUDGET {
            return Err(Error::DepthBudgetExceeded(PREIMAGE_BUDGET));
        }
        let mut next: Vec<f64> = set.iter().flat_map(|&y| map.preimages(y)).collect();
        next.sort_by(f64::total_cmp);
        next.dedup();
        set = next;
        depth += 1;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub ell: usize,
    pub x: f64,
    pub x_tilde: f64,
    /// `|f^ℓ(x) − c|` and `|f^ℓ(x̃) − c|`.
    pub base_defects: (f64, f64),
    pub phi_gap: f64,
    pub window: RightLimitWindow,
    pub window_tilde: RightLimitWindow,
    /// `max_{ℓ<=n<=W} |b_n − b̃_n|`.
    pub merge_defect: f64,
    /// Sum of both windows' gaps over `ℓ <= n <= W`, maximized over `n`.
    pub merge_gaps: f64,
    /// `|b_0 − b̃_0|`.
    pub split: f64,
}

/// Points of the grid on `[c_2, c_1]` used to look for a value gap of `φ`.
const VALUE_SCAN: usize = 1000;

/// Builds two right-limit windows whose centers approach distinct points of
/// `f^{-ℓ}(c)` with `|φ(x) − φ(x̃)| > δ`. Windows have half-width `ℓ`.
pub fn breuer_simon_witness(map: &UnimodalMap, orbit: &PostcriticalOrbit, phi: &Observable, delta: f64) -> Result<Witness> {
    let (lo, hi) = (map.c2(), map.c1());
    if let Some(pp) = orbit.preperiodicity() {
        return Err(Error::NotFound(format!(
            "finite postcritical orbit (preperiod {}, period {}) is not dense",
            pp.preperiod, pp.period
        )));
    }
    let vals: Vec<f64> = (0..=VALUE_SCAN)
        .map(|i| phi.eval(lo + (hi - lo) * i as f64 / VALUE_SCAN as f64).re)
        .collect();
    let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(spread > delta) {
        return Err(Error::NotFound(format!("φ varies by only {spread:e} on [c2, c1]")));
    }
    let c = map.critical();
    let mut eps = 0.5 * (hi - lo);
    let (cover, x, x_tilde) = loop {
        let cover = covering_depth(map, c, eps)?;
        let pts = &cover.points;
        let (imin, imax) = (0..pts.len()).fold((0, 0), |(a, b), i| {
            let v = phi.eval(pts[i]).re;
            (if v < phi.eval(pts[a]).re { i } else { a }, if v > phi.eval(pts[b]).re { i } else { b })
        });
        if (phi.eval(pts[imax]) - phi.eval(pts[imin])).norm() > delta {
            break (cover.clone(), pts[imin], pts[imax]);
        }
        eps *= 0.5;
    };
    let ell = cover.depth;
    let base = |p: f64| {
        let mut y = p;
        for _ in 0..ell {
            y = map.eval(y);
        }
        (y - c).abs()
    };
    let w = ell;
    let centers = |target: f64| -> Result<Vec<usize>> {
        let mut radius = delta / 4.0;
        let mut hits = vec![];
        let last = orbit.len().saturating_sub(w + 1);
        for k in w..last {
            let d = (orbit.point(k + 1) - target).abs();
            if d < radius {
                hits.push(k);
                while radius > d {
                    radius *= 0.5;
                }
            }
        }
        if hits.len() < 2 {
            return Err(Error::NotFound(format!("orbit prefix never returns near {target} twice")));
        }
        Ok(hits)
    };
    let window = RightLimitWindow::from_centers(orbit, &centers(x)?, w)?;
    let window_tilde = RightLimitWindow::from_centers(orbit, &centers(x_tilde)?, w)?;
    let mut merge_defect: f64 = 0.0;
    let mut merge_gaps: f64 = 0.0;
    for n in ell as i64..=w as i64 {
        merge_defect = merge_defect.max((window.get(n) - window_tilde.get(n)).abs());
        merge_gaps = merge_gaps.max(window.gap(n) + window_tilde.gap(n));
    }
    Ok(Witness {
        ell,
        x,
        x_tilde,
        base_defects: (base(x), base(x_tilde)),
        phi_gap: (phi.eval(x) - phi.eval(x_tilde)).norm(),
        split: (window.get(0) - window_tilde.get(0)).abs(),
        window,
        window_tilde,
        merge_defect,
        merge_gaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryVerdict {
    pub symmetric: bool,
    pub max_gap: f64,
    /// `(y, x, x̃)` at the largest gap.
    pub worst: Option<(f64, f64, f64)>,
}

pub const SYMMETRY_TOL: f64 = 1e-12;

/// `|φ(x) − φ(x̃)|` for the two preimages of `y`, if both exist.
pub fn symmetry_gap(map: &UnimodalMap, phi: &Observable, y: f64) -> Option<(f64, f64, f64)> {
    let l = map.inverse(Side::Left, y)?;
    let r = map.inverse(Side::Right, y)?;
    Some(((phi.eval(l) - phi.eval(r)).norm(), l, r))
}

/// Largest preimage-pair gap of `φ` over `samples` midpoints of `[c_2, c_1]`.
pub fn f_symmetry_check(map: &UnimodalMap, phi: &Observable, samples: usize) -> SymmetryVerdict {
    let (lo, hi) = (map.c2(), map.c1());
    let n = samples.max(1);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 0..n {
        let y = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        if let Some((g, l, r)) = symmetry_gap(map, phi, y) {
            if best.map_or(true, |b| g > b.0) {
                best = Some((g, y, l, r));
            }
        }
    }
    let max_gap = best.map_or(0.0, |b| b.0);
    SymmetryVerdict { symmetric: max_gap <= SYMMETRY_TOL, max_gap, worst: best.map(|b| (b.1, b.2, b.3)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::map::{build_map, postcritical_orbit, MapSpec};

    #[test]
    fn tent_two_full_tree() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let t = enumerate_precritical(&m, 3, 1000).unwrap();
        assert_eq!(t.orbits.len(), 8);
        assert_eq!(t.counts, vec![1, 2, 4, 8]);
        assert!(!t.truncated && t.meets_bound);
        let t = enumerate_precritical(&m, 3, 4).unwrap();
        assert_eq!(t.orbits.len(), 4);
        assert!(t.truncated);
    }

    #[test]
    fn tent_19_tree_grows() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let t = enumerate_precritical(&m, 10, 1 << 20).unwrap();
        assert!(t.counts[10] >= 32 && t.meets_bound);
        assert!(t.counts.windows(2).all(|w| w[0] <= w[1]));
        for o in &t.orbits {
            assert!(o.max_defect(&m) < 1e-12);
        }
    }

    #[test]
    fn covering_examples() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let c = covering_depth(&m, 0.5, 0.3).unwrap();
        assert!(c.depth <= 2);
        let c2 = covering_depth(&m, 0.5, 0.3 * 0.5).unwrap();
        assert_eq!(c2.size, 1 << c2.depth);
        assert!(covering_depth(&m, 0.5, 1.0).unwrap().depth <= 1);
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let eps = [0.01, 0.02, 0.05, 0.1, 0.3];
        let depths: Vec<usize> = eps.iter().map(|&e| covering_depth(&m, 0.5, e).unwrap().depth).collect();
        assert!(depths.windows(2).all(|w| w[0] >= w[1]), "{depths:?}");
    }

    #[test]
    fn symmetry_examples() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let x = Observable::parse("x").unwrap();
        let (g, l, r) = symmetry_gap(&m, &x, 0.5).unwrap();
        assert_eq!((g, l, r), (0.5, 0.25, 0.75));
        assert!(!f_symmetry_check(&m, &x, 100).symmetric);
        let even = Observable::parse("(x - 0.5)^2").unwrap();
        assert!(f_symmetry_check(&m, &even, 1000).symmetric);
        let m19 = build_map(&MapSpec::tent(1.9)).unwrap();
        let (mm, psi) = (m19.clone(), Expr::parse("sin(3*x)").unwrap());
        let comp = Observable::new("sin(3 f(x))", move |x| crate::C64::new(psi.eval(mm.eval(x)), 0.0), None);
        assert!(f_symmetry_check(&m19, &comp, 1000).symmetric);
    }

    #[test]
    fn windows_and_gluing() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 100_000).unwrap();
        let target = 0.6;
        let mut centers = vec![];
        let mut radius = 0.01;
        for k in 20..o.len() - 30 {
            let d = (o.point(k + 1) - target).abs();
            if d < radius {
                centers.push(k);
                radius = d;
            }
        }
        let w = RightLimitWindow::from_centers(&o, &centers, 20).unwrap();
        assert!(complete_orbit_check(&m, &w).passed);
        let mut bad = w.clone();
        bad.values[20] += 0.1;
        let v = complete_orbit_check(&m, &bad);
        assert!(v.violations.iter().any(|x| x.n == 0));

        let t = enumerate_precritical(&m, 12, 64).unwrap();
        for pre in &t.orbits {
            let g = RightLimitWindow::glued(&o, pre, 12).unwrap();
            assert!(complete_orbit_check(&m, &g).passed);
        }
    }

    #[test]
    fn witness_not_found_cases() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 10_000).unwrap();
        let one = Observable::constant(crate::C64::new(1.0, 0.0));
        assert!(matches!(breuer_simon_witness(&m, &o, &one, 0.05), Err(Error::NotFound(_))));
        let m2 = build_map(&MapSpec::tent(2.0)).unwrap();
        let o2 = postcritical_orbit(&m2, 10_000).unwrap();
        let x = Observable::parse("x").unwrap();
        let e = breuer_simon_witness(&m2, &o2, &x, 0.05).unwrap_err();
        assert!(matches!(e, Error::NotFound(ref s) if s.contains("finite")));
    }
}
