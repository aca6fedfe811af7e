//! Invariant densities of the transfer operator and the resolvent part of
//! the susceptibility.

mod hol;
mod resolvent;
mod saltus;
mod ulam;

pub use hol::{hol_source, psi_hol_eval, HolValue};
pub use resolvent::{gmres, resolvent_solve, resolvent_solve_dense, ResolventSolution, DEFLATION_RADIUS};
pub use saltus::{saltus_cells, saltus_decomposition, transfer_saltus_cells, AcimDensity, Jump, FIT_CELLS};
pub use ulam::{build_ulam, stationary_density, StationaryDensity, UlamOperator};

/// Uniform partition of `[a, b]` into `n` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Self {
        Grid { a, b, n }
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    /// Left endpoint of cell `i` (`i = n` gives `b`).
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.b
        } else {
            self.a + self.h() * i as f64
        }
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.a + self.h() * (i as f64 + 0.5)
    }

    /// Index of the cell containing `x`, clamped to `[0, n-1]`.
    pub fn cell(&self, x: f64) -> usize {
        let j = ((x - self.a) / self.h()).floor();
        if j < 0.0 {
            0
        } else {
            (j as usize).min(self.n - 1)
        }
    }

    /// `h Σ v_i`.
    pub fn integral(&self, v: &[f64]) -> f64 {
        self.h() * v.iter().sum::<f64>()
    }
}
