use super::Grid;
use crate::error::{Error, Result};
use crate::map::{Branch, UnimodalMap};
use crate::C64;

/// Cell-to-cell transition matrix of the transfer operator, stored as CSR
/// (rows are target cells). It acts on vectors of cell densities.
#[derive(Clone, Debug)]
pub struct UlamOperator {
    grid: Grid,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

pub fn build_ulam(map: &UnimodalMap, n: usize) -> Result<UlamOperator> {
    if n < 16 {
        return Err(Error::InvalidSpec(format!("Ulam grid needs at least 16 cells, got {n}")));
    }
    let grid = Grid::new(map.a(), map.b(), n);
    let h = grid.h();
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(4 * n);
    let mut pts = Vec::with_capacity(3 * n);
    for (br, lo, hi) in [(map.left(), map.a(), map.critical()), (map.right(), map.critical(), map.b())] {
        pts.clear();
        pts.push(lo);
        pts.push(hi);
        for i in 1..n {
            let x = grid.node(i);
            if x > lo && x < hi {
                pts.push(x);
            }
        }
        branch_preimages_of_nodes(br, lo, hi, &grid, &mut pts);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        for w in pts.windows(2) {
            let (u, v) = (w[0], w[1]);
            if v <= u {
                continue;
            }
            let mid = 0.5 * (u + v);
            let src = grid.cell(mid);
            let tgt = grid.cell(br.eval(mid));
            trip.push((tgt as u32, src as u32, (v - u) / h));
        }
    }
    Ok(UlamOperator::from_triplets(grid, trip))
}

fn branch_preimages_of_nodes(br: &Branch, lo: f64, hi: f64, grid: &Grid, out: &mut Vec<f64>) {
    let (flo, fhi) = (br.eval(lo), br.eval(hi));
    let (ymin, ymax) = (flo.min(fhi), flo.max(fhi));
    for i in 0..=grid.n {
        let y = grid.node(i);
        if y <= ymin || y >= ymax {
            continue;
        }
        if let Some(x) = br.inverse(y, lo, hi) {
            if x > lo && x < hi {
                out.push(x);
            }
        }
    }
}

impl UlamOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(grid: Grid, mut trip: Vec<(u32, u32, f64)>) -> Self {
        trip.sort_by(|p, q| (p.0, p.1).cmp(&(q.0, q.1)));
        let mut row_ptr = vec![0usize; grid.n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..grid.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        UlamOperator { grid, row_ptr, cols, vals }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_complex_into(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            *yi = acc;
        }
    }

    pub fn apply_complex(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n()];
        self.apply_complex_into(x, &mut y);
        y
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n()];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            s[*c as usize] += v;
        }
        s
    }

    pub fn min_entry(&self) -> f64 {
        self.vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .find(|&k| self.cols[k] as usize == j)
            .map_or(0.0, |k| self.vals[k])
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.push((i as u32, self.cols[k], self.vals[k]));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct StationaryDensity {
    pub grid: Grid,
    pub rho: Vec<f64>,
    /// `‖Lρ − ρ‖₁` of the returned vector.
    pub residual: f64,
    pub iterations: usize,
}

pub const DENSITY_RESIDUAL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200_000;

/// Power iteration from the uniform density. If the plain iteration has not
/// converged after half the budget (e.g. a nearly periodic chain), it
/// restarts from the current iterate with the lazy operator `(I + L)/2`,
/// which has the same fixed vectors.
pub fn stationary_density(op: &UlamOperator) -> Result<StationaryDensity> {
    let g = *op.grid();
    let h = g.h();
    let n = g.n;
    let mut v = vec![1.0 / (g.b - g.a); n];
    let mut w = vec![0.0; n];
    let mut it = 0;
    let mut lazy = false;
    loop {
        op.apply_into(&v, &mut w);
        if lazy {
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = 0.5 * (*wi + vi);
            }
        }
        let mass = h * w.iter().sum::<f64>();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NoConvergence { iterations: it, residual: f64::NAN });
        }
        for wi in w.iter_mut() {
            *wi /= mass;
        }
        let step = h * v.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum::<f64>();
        std::mem::swap(&mut v, &mut w);
        it += 1;
        if step <= 0.01 * DENSITY_RESIDUAL || it >= MAX_ITERATIONS {
            break;
        }
        if !lazy && it >= MAX_ITERATIONS / 2 {
            lazy = true;
        }
    }
    op.apply_into(&v, &mut w);
    let residual = h * v.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum::<f64>();
    if residual > DENSITY_RESIDUAL {
        return Err(Error::NoConvergence { iterations: it, residual });
    }
    Ok(StationaryDensity { grid: g, rho: v, residual, iterations: it })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{build_map, MapSpec};

    #[test]
    fn columns_are_stochastic() {
        for spec in [MapSpec::tent(2.0), MapSpec::tent(1.9), MapSpec::skewed_tent(0.4, 0.96)] {
            let m = build_map(&spec).unwrap();
            for n in [16, 100, 1024] {
                let op = build_ulam(&m, n).unwrap();
                for s in op.column_sums() {
                    assert!((s - 1.0).abs() <= 1e-12, "{} n={n} sum={s}", m.label());
                }
                assert!(op.min_entry() >= 0.0);
            }
        }
    }

    #[test]
    fn polynomial_columns_are_stochastic() {
        let m = build_map(&MapSpec::polynomial(0.5, vec![0.0, 2.2, -0.4], vec![1.8, -1.4, -0.4])).unwrap();
        let op = build_ulam(&m, 512).unwrap();
        for s in op.column_sums() {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn tent_two_uniform_fixed() {
        let m = build_map(&MapSpec::tent(2.0)).unwrap();
        let op = build_ulam(&m, 256).unwrap();
        let y = op.apply(&vec![1.0; 256]);
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let d = stationary_density(&op).unwrap();
        let l1: f64 = d.rho.iter().map(|r| (r - 1.0).abs()).sum::<f64>() / 256.0;
        assert!(l1 < 1e-10);
    }

    #[test]
    fn tent_19_support() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let op = build_ulam(&m, 1024).unwrap();
        let d = stationary_density(&op).unwrap();
        assert!(d.residual <= 1e-10);
        assert!(d.rho.iter().all(|&r| r >= 0.0));
        let g = d.grid;
        for (i, &r) in d.rho.iter().enumerate() {
            let (l, rr) = (g.node(i), g.node(i + 1));
            // Ulam leaks mass at most one cell past the support
            if rr < m.c2() - g.h() || l > m.c1() + g.h() {
                assert!(r < 1e-12, "mass outside [c2, c1] in cell {i}");
            }
        }
        assert!((g.integral(&d.rho) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_stochastic_input_rejected() {
        let m = build_map(&MapSpec::tent(1.9)).unwrap();
        let op = build_ulam(&m, 64).unwrap();
        let mut t = op.triplets();
        for e in t.iter_mut().filter(|e| e.1 == 40) {
            e.2 *= 1.5;
        }
        let bad = UlamOperator::from_triplets(*op.grid(), t);
        assert!(matches!(stationary_density(&bad), Err(Error::NoConvergence { .. })));
    }
}
