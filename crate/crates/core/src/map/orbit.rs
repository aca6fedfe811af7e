use super::UnimodalMap;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Inverse branch selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Only this many leading points are scanned for repeats. Floating-point
/// orbits of non-exact maps drift away from any true periodic orbit, and a
/// long scan turns chance near-coincidences into false positives.
pub const PREPERIODIC_SCAN: usize = 4096;

/// Tolerance for preperiodicity detection on non-exact maps.
pub const PREPERIODIC_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preperiodicity {
    /// Smallest `m` with `c_{m+p} = c_m`.
    pub preperiod: usize,
    pub period: usize,
    /// Exact binary arithmetic was used. Otherwise the match is only
    /// detected within tolerance and not proven.
    pub proven: bool,
}

/// `c_1, ..., c_K` with the derivative products `D_n = (f^n)'(c_1)`.
#[derive(Clone, Debug)]
pub struct PostcriticalOrbit {
    points: Vec<f64>,
    derivs: Vec<f64>,
    preperiodicity: Option<Preperiodicity>,
    lambda: f64,
}

pub fn postcritical_orbit(map: &UnimodalMap, k: usize) -> Result<PostcriticalOrbit> {
    if k < 2 {
        return Err(Error::InvalidSpec(format!("orbit length {k} < 2")));
    }
    let (lo, hi) = (map.c2(), map.c1());
    let mut points = Vec::with_capacity(k);
    let mut x = map.c1();
    points.push(x);
    for _ in 1..k {
        x = map.eval(x).clamp(lo, hi);
        points.push(x);
    }
    // |D_n| >= lambda^n, so past this index 1/D_n underflows to zero anyway.
    let cap = if map.lambda() > 1.0 {
        (745.0 / map.lambda().ln()).ceil() as usize + 1
    } else {
        usize::MAX
    };
    let nd = (k - 1).min(cap);
    let mut derivs = Vec::with_capacity(nd);
    let mut d = 1.0;
    for &p in &points[..nd] {
        d *= map.deriv(p);
        derivs.push(d);
    }
    let preperiodicity = detect_preperiodicity(&points, map.is_exact());
    Ok(PostcriticalOrbit { points, derivs, preperiodicity, lambda: map.lambda() })
}

fn detect_preperiodicity(points: &[f64], exact: bool) -> Option<Preperiodicity> {
    let n = points.len().min(PREPERIODIC_SCAN);
    let tol = if exact { 0.0 } else { PREPERIODIC_TOL };
    let mut idx: Vec<(f64, usize)> = points[..n].iter().copied().zip(1..).collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // For every orbit index, the nearest later index with a matching value.
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 - idx[end - 1].0 <= tol {
            end += 1;
        }
        if end - start > 1 {
            let mut members: Vec<usize> = idx[start..end].iter().map(|p| p.1).collect();
            members.sort_unstable();
            let (m, p) = (members[0], members[1] - members[0]);
            best = match best {
                Some((bm, bp)) if bm < m || (bm == m && bp <= p) => Some((bm, bp)),
                _ => Some((m, p)),
            };
        }
        start = end;
    }
    best.map(|(m, p)| Preperiodicity { preperiod: m, period: p, proven: exact })
}

impl PostcriticalOrbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `c_k` for `1 <= k <= K`.
    pub fn point(&self, k: usize) -> f64 {
        self.points[k - 1]
    }

    /// `[c_1, ..., c_K]`; slice index `i` holds `c_{i+1}`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `D_n` for `0 <= n <= K-1` with `D_0 = 1`. Beyond the stored range the
    /// product has overflowed and `±inf` is returned.
    pub fn deriv_product(&self, n: usize) -> f64 {
        if n == 0 {
            1.0
        } else if n <= self.derivs.len() {
            self.derivs[n - 1]
        } else {
            f64::INFINITY
        }
    }

    /// `1 / D_n`, exactly zero once `|D_n|` has overflowed.
    pub fn inv_deriv(&self, n: usize) -> f64 {
        1.0 / self.deriv_product(n)
    }

    /// Number of stored `D_n` (`n = 1..=len`).
    pub fn derivs_len(&self) -> usize {
        self.derivs.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn preperiodicity(&self) -> Option<Preperiodicity> {
        self.preperiodicity
    }

    pub fn require(&self, needed: usize) -> Result<()> {
        if needed > self.len() {
            return Err(Error::OrbitTooShort { needed, available: self.len() });
        }
        Ok(())
    }
}

/// Backward orbit `y_{-1} = c, y_{-2}, ..., y_{-M}` with `f(y_{n-1}) = y_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrecriticalOrbit {
    points: Vec<f64>,
    bits: Vec<Side>,
}

/// Follows `bits[i]` to go from `y_{-(i+1)}` to `y_{-(i+2)}`.
pub fn precritical_orbit(map: &UnimodalMap, bits: &[Side], m: usize) -> Result<PrecriticalOrbit> {
    if m == 0 {
        return Err(Error::InvalidSpec("precritical depth must be at least 1".into()));
    }
    if bits.len() + 1 < m {
        return Err(Error::InvalidSpec(format!(
            "{} choice bits cannot reach depth {m}",
            bits.len()
        )));
    }
    let mut points = Vec::with_capacity(m);
    let mut y = map.critical();
    points.push(y);
    for (i, &side) in bits.iter().take(m - 1).enumerate() {
        y = map.inverse(side, y).ok_or(Error::BranchUnavailable(i + 2))?;
        points.push(y);
    }
    Ok(PrecriticalOrbit { points, bits: bits[..m - 1].to_vec() })
}

impl PrecriticalOrbit {
    /// Assembles an orbit from already computed parts without rechecking.
    pub fn from_parts(points: Vec<f64>, bits: Vec<Side>) -> Self {
        debug_assert_eq!(points.len(), bits.len() + 1);
        PrecriticalOrbit { points, bits }
    }

    pub fn depth(&self) -> usize {
        self.points.len()
    }

    /// `y_{-m}` for `1 <= m <= M`.
    pub fn point(&self, m: usize) -> f64 {
        self.points[m - 1]
    }

    /// `[y_{-1}, y_{-2}, ...]`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bits(&self) -> &[Side] {
        &self.bits
    }

    /// Largest `|f(y_{n-1}) - y_n|` over the stored orbit.
    pub fn max_defect(&self, map: &UnimodalMap) -> f64 {
        self.points.windows(2).map(|w| (map.eval(w[1]) - w[0]).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{build_map, MapSpec};

    #[test]
    fn tent_two_orbit() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let o = postcritical_orbit(&m, 5).unwrap();
        assert_eq!(o.points(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        let d: Vec<f64> = (1..5).map(|n| o.deriv_product(n)).collect();
        assert_eq!(d, vec![-2.0, -4.0, -8.0, -16.0]);
        assert_eq!(
            o.preperiodicity(),
            Some(Preperiodicity { preperiod: 2, period: 1, proven: true })
        );
    }

    #[test]
    fn tent_19_trapped_no_repeat() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        assert!((m.c1() - 0.95).abs() < 1e-15 && (m.c2() - 0.095).abs() < 1e-15);
        let o = postcritical_orbit(&m, 10).unwrap();
        assert!(o.points().iter().all(|&x| (m.c2()..=m.c1()).contains(&x)));
        assert!(o.preperiodicity().is_none());
    }

    #[test]
    fn minimal_length() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let o = postcritical_orbit(&m, 2).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.deriv_product(1), m.deriv(m.c1()));
        assert!(postcritical_orbit(&m, 1).is_err());
    }

    #[test]
    fn periodic_from_start() {
        // tent with slope s on [0,1] where c_1 is a fixed point of the right branch:
        // s/2 = s (1 - s/2)  <=>  s = 1 ... not expanding; use c_1 -> c_2 -> c_1 instead.
        // Skewed tent with apex height 1 at c: c_1 = 1, c_2 = 0, fixed. m = 2, p = 1.
        let m = build_map(&MapSpec::skewed_tent(0.4, 1.0)).unwrap();
        let o = postcritical_orbit(&m, 50).unwrap();
        let pp = o.preperiodicity().unwrap();
        assert_eq!((pp.preperiod, pp.period, pp.proven), (2, 1, false));
    }

    #[test]
    fn precritical_tent_two() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let o = precritical_orbit(&m, &[Side::Left, Side::Left], 3).unwrap();
        assert_eq!(o.points(), &[0.5, 0.25, 0.125]);
        let o = precritical_orbit(&m, &[Side::Right], 2).unwrap();
        assert_eq!(o.points(), &[0.5, 0.75]);
    }

    #[test]
    fn precritical_branch_unavailable() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let e = precritical_orbit(&m, &[Side::Left; 5], 6).unwrap_err();
        assert_eq!(e, Error::BranchUnavailable(4));
    }
}
