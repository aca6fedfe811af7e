use super::{resolvent_solve, Grid, StationaryDensity, UlamOperator};
use crate::error::{Error, Result};
use crate::map::{Branch, PostcriticalOrbit, UnimodalMap};
use crate::C64;
use serde::Serialize;

/// A jump of size `s` at `c_n` in the invariant density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub n: usize,
    pub at: f64,
    pub s: f64,
}

/// Grid density together with its split into a jump series and a regular part.
#[derive(Clone, Debug)]
pub struct AcimDensity {
    pub grid: Grid,
    pub rho: Vec<f64>,
    pub residual: f64,
    pub s1: f64,
    pub jumps: Vec<Jump>,
    /// Cell averages of `Σ s_n H_{c_n}`.
    pub rho_sal: Vec<f64>,
    /// Solution of `(1 − L)ρ_reg = Lρ_sal − ρ_sal` carrying the remaining mass.
    pub rho_reg: Vec<f64>,
    /// `‖ρ − ρ_sal − ρ_reg‖₁`, the smearing of the jumps by the discretization.
    pub split_defect: f64,
    pub eps_s: f64,
    /// Bound on the discarded `Σ_{n > N_s} |s_n|`.
    pub tail_bound: f64,
}

/// Cells used for the one-sided fit of `ρ(c_1^-)`.
pub const FIT_CELLS: usize = 8;

/// Splits a stationary density into the jump series and a regular part.
///
/// The regular part is not taken as `ρ − ρ_sal`: the discrete operator smears
/// every jump of `ρ` over a width growing like `λ^n h`, and differentiating
/// that residue corrupts the resolvent term. Instead the exact cell averages
/// of `Lρ_sal` are formed through the branch inverses, and `ρ_reg` solves the
/// fixed-point equation on the mean-zero complement, plus the multiple of
/// `ρ` that restores unit mass.
pub fn saltus_decomposition(
    map: &UnimodalMap,
    orbit: &PostcriticalOrbit,
    op: &UlamOperator,
    density: &StationaryDensity,
    eps_s: f64,
) -> Result<AcimDensity> {
    let grid = density.grid;
    let rho = &density.rho;
    let s1 = -left_limit(&grid, rho, map.c1())?;
    let lambda = map.lambda();

    // smallest N with |s_1| λ^{-N} / (1 - 1/λ) <= eps
    let geo = |n: usize| s1.abs() * lambda.powi(-(n as i32)) / (1.0 - 1.0 / lambda);
    let mut ns = 1;
    while geo(ns) > eps_s {
        ns += 1;
        if ns > 1_000_000 {
            return Err(Error::OrbitTooShort { needed: ns, available: orbit.len() });
        }
    }
    orbit.require(ns)?;

    let mut jumps = Vec::with_capacity(ns);
    let mut s = s1;
    for n in 1..=ns {
        let at = orbit.point(n);
        jumps.push(Jump { n, at, s });
        s /= map.deriv(at);
    }

    let rho_sal = saltus_cells(&grid, &jumps);
    let lsal = transfer_saltus_cells(map, &grid, &jumps);
    let rhs: Vec<C64> = lsal.iter().zip(&rho_sal).map(|(l, r)| C64::new(l - r, 0.0)).collect();
    let sol = resolvent_solve(op, Some(rho), C64::new(1.0, 0.0), &rhs)?;
    let u: Vec<f64> = sol.u.iter().map(|v| v.re).collect();
    let c = 1.0 - grid.integral(&rho_sal) - grid.integral(&u);
    let rho_reg: Vec<f64> = u.iter().zip(rho).map(|(u, r)| u + c * r).collect();
    let split_defect = grid.h()
        * rho
            .iter()
            .zip(&rho_sal)
            .zip(&rho_reg)
            .map(|((r, s), g)| (r - s - g).abs())
            .sum::<f64>();
    Ok(AcimDensity {
        grid,
        rho: rho.clone(),
        residual: density.residual,
        s1,
        jumps,
        rho_sal,
        rho_reg,
        split_defect,
        eps_s,
        tail_bound: geo(ns),
    })
}

/// Exact cell averages of `L(Σ s_n H_{c_n})`: the mass of each cell is the
/// integral of the step sum over the branch preimages of the cell.
pub fn transfer_saltus_cells(map: &UnimodalMap, grid: &Grid, jumps: &[Jump]) -> Vec<f64> {
    let mut sorted: Vec<(f64, f64)> = jumps.iter().map(|j| (j.at, j.s)).collect();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut pos = Vec::with_capacity(sorted.len());
    let (mut cs, mut cm) = (vec![0.0], vec![0.0]);
    for (at, s) in &sorted {
        pos.push(*at);
        cs.push(cs.last().unwrap() + s);
        cm.push(cm.last().unwrap() + s * at);
    }
    // ∫_a^y Σ s_n H_{c_n} = Σ_{c_n <= y} s_n (y - c_n)
    let primitive = |y: f64| {
        let k = pos.partition_point(|&p| p <= y);
        cs[k] * y - cm[k]
    };
    let n = grid.n;
    let mut out = vec![0.0; n];
    for (br, lo, hi) in [(map.left(), map.a(), map.critical()), (map.right(), map.critical(), map.b())] {
        let pre = node_preimages(br, lo, hi, grid);
        for i in 0..n {
            // decreasing branches reverse the preimage interval
            let d = primitive(pre[i + 1]) - primitive(pre[i]);
            out[i] += if pre[i + 1] >= pre[i] { d } else { -d };
        }
    }
    let h = grid.h();
    out.iter_mut().for_each(|v| *v /= h);
    out
}

/// Preimage of every grid node under one branch, clamped to the branch
/// domain where the node lies outside the branch image.
fn node_preimages(br: &Branch, lo: f64, hi: f64, grid: &Grid) -> Vec<f64> {
    let (flo, fhi) = (br.eval(lo), br.eval(hi));
    let increasing = fhi > flo;
    let (ymin, ymax) = (flo.min(fhi), flo.max(fhi));
    let (at_min, at_max) = if increasing { (lo, hi) } else { (hi, lo) };
    (0..=grid.n)
        .map(|i| {
            let y = grid.node(i);
            if y <= ymin {
                at_min
            } else if y >= ymax {
                at_max
            } else {
                br.inverse(y, lo, hi).unwrap_or(if y - ymin < ymax - y { at_min } else { at_max })
            }
        })
        .collect()
}

/// Cell averages of a finite sum of right-continuous unit steps.
pub fn saltus_cells(grid: &Grid, jumps: &[Jump]) -> Vec<f64> {
    let n = grid.n;
    let h = grid.h();
    let mut partial = vec![0.0; n];
    let mut step = vec![0.0; n + 1];
    for j in jumps {
        let t = (j.at - grid.a) / h;
        if t >= n as f64 {
            continue;
        }
        if t <= 0.0 {
            step[0] += j.s;
            continue;
        }
        let k = t.floor() as usize;
        let frac = (grid.node(k + 1) - j.at) / h;
        partial[k] += j.s * frac;
        step[k + 1] += j.s;
    }
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        acc += step[i];
        out[i] = acc + partial[i];
    }
    out
}

/// Quadratic least-squares fit through the full cells left of `x`,
/// evaluated at `x`.
fn left_limit(grid: &Grid, rho: &[f64], x: f64) -> Result<f64> {
    let h = grid.h();
    let end = (((x - grid.a) / h).floor() as usize).min(grid.n);
    if end < FIT_CELLS {
        return Err(Error::InvalidSpec(format!(
            "c1 = {x} leaves fewer than {FIT_CELLS} grid cells to its left"
        )));
    }
    // normal equations in t = (midpoint - x)/h for conditioning
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for i in end - FIT_CELLS..end {
        let t = (grid.midpoint(i) - x) / h;
        let row = [1.0, t, t * t];
        for p in 0..3 {
            for q in 0..3 {
                ata[p][q] += row[p] * row[q];
            }
            atb[p] += row[p] * rho[i];
        }
    }
    let coef = solve3(ata, atb);
    Ok(coef[0])
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut acc = b[r];
        for c in r + 1..3 {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    x
}
