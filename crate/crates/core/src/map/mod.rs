//! Piecewise expanding unimodal maps `f : [a, b] -> [a, b]` with a single
//! critical point `c`, `f(a) = f(b) = a`, increasing on `[a, c]` and
//! decreasing on `[c, b]`.

mod branch;
mod orbit;

pub use branch::Branch;
pub use orbit::{
    postcritical_orbit, precritical_orbit, PostcriticalOrbit, PrecriticalOrbit, Preperiodicity,
    Side,
};

use crate::error::{Error, Result};
use crate::expr::Expr;
use serde::{Deserialize, Serialize};

/// Samples used for expansion and sign validation of non-affine branches.
pub const VALIDATION_GRID: usize = 10_000;

const ENDPOINT_TOL: f64 = 1e-12;

/// Parameters of a map family, tagged by `family` in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapFamily {
    /// Symmetric tent with slopes `±slope`, critical point at the midpoint.
    Tent { slope: f64 },
    /// Tent with apex `(critical, height)`.
    SkewedTent { critical: f64, height: f64 },
    /// Arbitrary polynomial branches, coefficients in ascending powers of `x`.
    PolynomialBranches {
        critical: f64,
        left: Vec<f64>,
        right: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    #[serde(flatten)]
    pub family: MapFamily,
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

impl MapSpec {
    pub fn tent(slope: f64) -> Self {
        MapSpec { family: MapFamily::Tent { slope }, interval: unit_interval() }
    }

    pub fn skewed_tent(critical: f64, height: f64) -> Self {
        MapSpec { family: MapFamily::SkewedTent { critical, height }, interval: unit_interval() }
    }

    pub fn polynomial(critical: f64, left: Vec<f64>, right: Vec<f64>) -> Self {
        MapSpec {
            family: MapFamily::PolynomialBranches { critical, left, right },
            interval: unit_interval(),
        }
    }
}

/// A validated unimodal map. Immutable after construction.
#[derive(Clone, Debug)]
pub struct UnimodalMap {
    a: f64,
    b: f64,
    c: f64,
    left: Branch,
    right: Branch,
    lambda: f64,
    c1: f64,
    c2: f64,
    exact_dyadic: bool,
    label: String,
}

pub fn build_map(spec: &MapSpec) -> Result<UnimodalMap> {
    let [a, b] = spec.interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidSpec(format!("interval [{a}, {b}] is empty")));
    }
    let (c, left, right, label, exact) = match &spec.family {
        MapFamily::Tent { slope } => {
            let s = *slope;
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidSpec(format!("tent slope {s} must be positive")));
            }
            let c = 0.5 * (a + b);
            let left = Branch::Affine { slope: s, x0: a, y0: a };
            let right = Branch::Affine { slope: -s, x0: b, y0: a };
            (c, left, right, format!("tent(s={s})"), s == 2.0)
        }
        MapFamily::SkewedTent { critical, height } => {
            let (c, h) = (*critical, *height);
            if !(a < c && c < b) {
                return Err(Error::InvalidSpec(format!("critical point {c} not inside ({a}, {b})")));
            }
            let left = Branch::Affine { slope: (h - a) / (c - a), x0: a, y0: a };
            let right = Branch::Affine { slope: -(h - a) / (b - c), x0: b, y0: a };
            (c, left, right, format!("skewed-tent(c={c}, h={h})"), false)
        }
        MapFamily::PolynomialBranches { critical, left, right } => {
            let c = *critical;
            if !(a < c && c < b) {
                return Err(Error::InvalidSpec(format!("critical point {c} not inside ({a}, {b})")));
            }
            if left.is_empty() || right.is_empty() {
                return Err(Error::InvalidSpec("empty coefficient list".into()));
            }
            (
                c,
                Branch::Poly(left.clone()),
                Branch::Poly(right.clone()),
                "polynomial-branches".to_string(),
                false,
            )
        }
    };
    UnimodalMap::from_branches(a, b, c, left, right, label, exact)
}

impl UnimodalMap {
    /// Validates a pair of branches and assembles the map.
    pub fn from_branches(
        a: f64,
        b: f64,
        c: f64,
        left: Branch,
        right: Branch,
        label: String,
        exact_dyadic: bool,
    ) -> Result<Self> {
        if !(a < c && c < b) {
            return Err(Error::InvalidSpec(format!("critical point {c} not inside ({a}, {b})")));
        }
        let fa = left.eval(a);
        if (fa - a).abs() > ENDPOINT_TOL {
            return Err(Error::EndpointViolated(format!("f(a) = {fa}, expected {a}")));
        }
        let fb = right.eval(b);
        if (fb - a).abs() > ENDPOINT_TOL {
            return Err(Error::EndpointViolated(format!("f(b) = {fb}, expected {a}")));
        }
        let jump = (left.eval(c) - right.eval(c)).abs();
        if jump > ENDPOINT_TOL {
            return Err(Error::DiscontinuousAtC(jump));
        }

        let lam_l = branch_min_abs_derivative(&left, a, c, 1.0)?;
        let lam_r = branch_min_abs_derivative(&right, c, b, -1.0)?;
        let lambda = lam_l.min(lam_r);

        let c1 = left.eval(c);
        if c1 > b + ENDPOINT_TOL {
            return Err(Error::InvalidSpec(format!("critical value {c1} exceeds b = {b}")));
        }
        let c1 = c1.min(b);
        let c2 = right.eval(c1).max(a);
        if !(c2 < c1) {
            return Err(Error::InvalidSpec(format!("c2 = {c2} is not below c1 = {c1}")));
        }
        if !(c2 <= c && c <= c1) {
            return Err(Error::InvalidSpec(format!(
                "critical point {c} outside the trapping interval [{c2}, {c1}]"
            )));
        }
        let map = UnimodalMap { a, b, c, left, right, lambda, c1, c2, exact_dyadic, label };
        let low = map.eval(c2).min(map.eval(c1));
        if low < c2 - 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "[c2, c1] = [{c2}, {c1}] is not forward invariant (min image {low})"
            )));
        }
        Ok(map)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn critical(&self) -> f64 {
        self.c
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// `c_1 = f(c)`, the top of the trapping interval.
    pub fn c1(&self) -> f64 {
        self.c1
    }
    /// `c_2 = f(c_1)`, the bottom of the trapping interval.
    pub fn c2(&self) -> f64 {
        self.c2
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn left(&self) -> &Branch {
        &self.left
    }
    pub fn right(&self) -> &Branch {
        &self.right
    }

    /// True when orbits are computed exactly in binary floating point
    /// (the slope-2 tent on a dyadic interval).
    pub fn is_exact(&self) -> bool {
        self.exact_dyadic
    }

    pub fn branch(&self, x: f64) -> &Branch {
        if x <= self.c {
            &self.left
        } else {
            &self.right
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.branch(x).eval(x)
    }

    /// One-sided derivative; at `c` the left branch is used.
    pub fn deriv(&self, x: f64) -> f64 {
        self.branch(x).d1(x)
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        self.branch(x).d2(x)
    }

    /// Preimage on a chosen side, if it lies in `[c_2, c_1]`.
    pub fn inverse(&self, side: Side, y: f64) -> Option<f64> {
        let x = match side {
            Side::Left => self.left.inverse(y, self.a, self.c)?,
            Side::Right => self.right.inverse(y, self.c, self.b)?,
        };
        let tol = 1e-13 * (self.c1 - self.c2);
        if x < self.c2 - tol || x > self.c1 + tol {
            return None;
        }
        Some(x.clamp(self.c2, self.c1))
    }

    /// All solutions of `f(x) = y` in `[c_2, c_1]`, ascending.
    pub fn preimages(&self, y: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(2);
        if let Some(x) = self.inverse(Side::Left, y) {
            out.push(x);
        }
        if let Some(x) = self.inverse(Side::Right, y) {
            if out.last().map_or(true, |&l| x > l) {
                out.push(x);
            }
        }
        out
    }

    /// Sup of `|f'|` over `[a, b]`, used for conditioning bounds.
    pub fn sup_abs_derivative(&self) -> f64 {
        let n = 2048;
        (0..=n)
            .map(|i| self.a + (self.b - self.a) * i as f64 / n as f64)
            .map(|x| self.deriv(x).abs())
            .fold(0.0, f64::max)
    }

    /// `f + t X∘f`, revalidated.
    pub fn perturbed(&self, x: &Expr, t: f64) -> Result<UnimodalMap> {
        if t == 0.0 {
            return Ok(self.clone());
        }
        let dx = x.derivative();
        let ddx = dx.derivative();
        let wrap = |b: &Branch| Branch::Perturbed {
            base: Box::new(b.clone()),
            x: x.clone(),
            dx: dx.clone(),
            ddx: ddx.clone(),
            t,
        };
        UnimodalMap::from_branches(
            self.a,
            self.b,
            self.c,
            wrap(&self.left),
            wrap(&self.right),
            format!("{} + {t}*X(f)", self.label),
            false,
        )
    }
}

/// `inf |f'|` over a branch with a sign check. Affine branches are exact;
/// otherwise a dense sample grid is refined by golden section around the
/// smallest sample.
fn branch_min_abs_derivative(br: &Branch, lo: f64, hi: f64, sign: f64) -> Result<f64> {
    if let Branch::Affine { slope, .. } = br {
        if slope * sign <= 1.0 {
            return Err(Error::ExpansionViolated { x: lo, value: slope.abs() });
        }
        return Ok(slope.abs());
    }
    let n = VALIDATION_GRID;
    let h = (hi - lo) / n as f64;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=n {
        let x = if i == n { hi } else { lo + h * i as f64 };
        let v = sign * br.d1(x);
        if !v.is_finite() || v <= 1.0 {
            return Err(Error::ExpansionViolated { x, value: v.abs() });
        }
        if v < best.0 {
            best = (v, x);
        }
    }
    let g = |x: f64| sign * br.d1(x);
    let (mut l, mut r) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = r - phi * (r - l);
        let m2 = l + phi * (r - l);
        if g(m1) < g(m2) {
            r = m2;
        } else {
            l = m1;
        }
    }
    let xm = 0.5 * (l + r);
    let v = g(xm).min(best.0);
    if v <= 1.0 {
        return Err(Error::ExpansionViolated { x: xm, value: v.abs() });
    }
    Ok(v)
}
