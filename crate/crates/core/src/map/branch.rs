use crate::expr::Expr;

/// One monotone branch of a unimodal map.
#[derive(Clone, Debug)]
pub enum Branch {
    /// `y = y0 + slope (x - x0)`.
    Affine { slope: f64, x0: f64, y0: f64 },
    /// Polynomial in ascending powers of `x`.
    Poly(Vec<f64>),
    /// `g + t X∘g` for a base branch `g`.
    Perturbed { base: Box<Branch>, x: Expr, dx: Expr, ddx: Expr, t: f64 },
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn horner_d1(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
}

fn horner_d2(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(2)
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * x + (k * (k - 1)) as f64 * c)
}

impl Branch {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Branch::Affine { slope, x0, y0 } => y0 + slope * (x - x0),
            Branch::Poly(c) => horner(c, x),
            Branch::Perturbed { base, x: xe, t, .. } => {
                let g = base.eval(x);
                g + t * xe.eval(g)
            }
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            Branch::Affine { slope, .. } => *slope,
            Branch::Poly(c) => horner_d1(c, x),
            Branch::Perturbed { base, dx, t, .. } => {
                let g = base.eval(x);
                base.d1(x) * (1.0 + t * dx.eval(g))
            }
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            Branch::Affine { .. } => 0.0,
            Branch::Poly(c) => horner_d2(c, x),
            Branch::Perturbed { base, dx, ddx, t, .. } => {
                let g = base.eval(x);
                let g1 = base.d1(x);
                base.d2(x) * (1.0 + t * dx.eval(g)) + g1 * g1 * t * ddx.eval(g)
            }
        }
    }

    /// Solution of `eval(x) = y` in `[lo, hi]`, assuming strict monotonicity there.
    pub fn inverse(&self, y: f64, lo: f64, hi: f64) -> Option<f64> {
        let tol = 1e-14 * (1.0 + lo.abs().max(hi.abs()));
        if let Branch::Affine { slope, x0, y0 } = self {
            let x = x0 + (y - y0) / slope;
            if x < lo - tol || x > hi + tol {
                return None;
            }
            return Some(x.clamp(lo, hi));
        }
        let (flo, fhi) = (self.eval(lo), self.eval(hi));
        let (ymin, ymax) = if flo <= fhi { (flo, fhi) } else { (fhi, flo) };
        let ytol = 1e-14 * (1.0 + ymin.abs().max(ymax.abs()));
        if y < ymin - ytol || y > ymax + ytol {
            return None;
        }
        if (y - flo).abs() <= ytol {
            return Some(lo);
        }
        if (y - fhi).abs() <= ytol {
            return Some(hi);
        }
        let increasing = fhi > flo;
        // Safeguarded Newton: keep a bracket and bisect whenever a step leaves it.
        let (mut l, mut r) = (lo, hi);
        let mut x = lo + (hi - lo) * (y - flo) / (fhi - flo);
        for _ in 0..200 {
            let fx = self.eval(x) - y;
            if fx == 0.0 {
                return Some(x);
            }
            if (fx > 0.0) == increasing {
                r = x;
            } else {
                l = x;
            }
            let d = self.d1(x);
            let mut next = x - fx / d;
            if !(next > l && next < r) || !next.is_finite() {
                next = 0.5 * (l + r);
            }
            if (next - x).abs() <= 1e-16 * (1.0 + x.abs()) || r - l <= 1e-16 * (1.0 + x.abs()) {
                return Some(next);
            }
            x = next;
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let b = Branch::Poly(vec![1.0, -2.0, 3.0, 0.5]);
        let x = 0.3;
        assert!((b.eval(x) - (1.0 - 0.6 + 0.27 + 0.5 * 0.027)).abs() < 1e-15);
        assert!((b.d1(x) - (-2.0 + 6.0 * x + 1.5 * x * x)).abs() < 1e-14);
        assert!((b.d2(x) - (6.0 + 3.0 * x)).abs() < 1e-14);
    }

    #[test]
    fn newton_inverse_roundtrip() {
        let b = Branch::Poly(vec![0.0, 2.2, -0.4]);
        for i in 0..=50 {
            let y = i as f64 / 50.0;
            let x = b.inverse(y, 0.0, 0.5).unwrap();
            assert!((b.eval(x) - y).abs() < 1e-14, "y={y}");
        }
        assert!(b.inverse(1.01, 0.0, 0.5).is_none());
    }

    #[test]
    fn perturbed_derivatives_match_fd() {
        let x = Expr::parse("x*(1-x)").unwrap();
        let dx = x.derivative();
        let ddx = dx.derivative();
        let b = Branch::Perturbed {
            base: Box::new(Branch::Poly(vec![0.0, 2.2, -0.4])),
            x,
            dx,
            ddx,
            t: 0.05,
        };
        let h = 1e-5;
        for &p in &[0.1, 0.25, 0.4] {
            let fd1 = (b.eval(p + h) - b.eval(p - h)) / (2.0 * h);
            let fd2 = (b.d1(p + h) - b.d1(p - h)) / (2.0 * h);
            assert!((fd1 - b.d1(p)).abs() < 1e-8);
            assert!((fd2 - b.d2(p)).abs() < 1e-6);
        }
    }
}
