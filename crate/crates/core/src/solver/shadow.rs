//! The iteration in plain `f64` on the host, without flush-to-zero.

use alloc::vec::Vec;

use super::{pcg, PcgBackend, PcgState, Stop};
use crate::error::{Error, Result};
use crate::kernels::StencilCoeffs;

/// Global grid dimensions, points ordered `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShadowGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl ShadowGrid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        ShadowGrid { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct ShadowBackend {
    grid: ShadowGrid,
    /// West, north, below, center, east, south, above.
    c: [f64; 7],
}

impl ShadowBackend {
    pub fn new(grid: ShadowGrid, coeffs: &StencilCoeffs) -> Self {
        ShadowBackend {
            grid,
            c: coeffs.to_array().map(|v| v as f64),
        }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let ShadowGrid { nx, ny, nz } = self.grid;
        let mut out = alloc::vec![0.0; u.len()];
        let at = |i: usize, j: usize, k: usize| u[i + nx * (j + ny * k)];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut s = self.c[3] * at(i, j, k);
                    if i > 0 {
                        s += self.c[0] * at(i - 1, j, k);
                    }
                    if i + 1 < nx {
                        s += self.c[4] * at(i + 1, j, k);
                    }
                    if j > 0 {
                        s += self.c[1] * at(i, j - 1, k);
                    }
                    if j + 1 < ny {
                        s += self.c[5] * at(i, j + 1, k);
                    }
                    if k > 0 {
                        s += self.c[2] * at(i, j, k - 1);
                    }
                    if k + 1 < nz {
                        s += self.c[6] * at(i, j, k + 1);
                    }
                    out[i + nx * (j + ny * k)] = s;
                }
            }
        }
        out
    }
}

impl PcgBackend for ShadowBackend {
    type Vector = Vec<f64>;

    fn spmv(&mut self, p: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(self.apply(p))
    }

    fn dot(&mut self, x: &Vec<f64>, y: &Vec<f64>) -> Result<f64> {
        Ok(x.iter().zip(y).map(|(a, b)| a * b).sum())
    }

    fn axpy(&mut self, alpha: f64, x: &Vec<f64>, y: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(x.iter().zip(y).map(|(a, b)| alpha * a + b).collect())
    }

    fn precond_dot(&mut self, r: &Vec<f64>) -> Result<f64> {
        Ok(r.iter().map(|v| v * v).sum::<f64>() / self.c[3])
    }

    fn initial_direction(&mut self, r: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(r.iter().map(|v| v / self.c[3]).collect())
    }

    fn update_direction(&mut self, beta: f64, p: &Vec<f64>, r: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(p.iter()
            .zip(r)
            .map(|(p, r)| r / self.c[3] + beta * p)
            .collect())
    }

    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }

    fn sqrt(&mut self, a: f64) -> f64 {
        libm::sqrt(a)
    }

    fn is_breakdown(&self, v: f64) -> bool {
        v == 0.0 || !v.is_finite()
    }
}

/// Solves in double precision with the same iteration as the device.
pub fn shadow_solve(
    grid: ShadowGrid,
    coeffs: &StencilCoeffs,
    b: &[f64],
    x0: &[f64],
    epsilon: f64,
    max_iters: usize,
) -> Result<PcgState<Vec<f64>>> {
    if b.len() != grid.len() || x0.len() != grid.len() {
        return Err(Error::LayoutMismatch);
    }
    let mut be = ShadowBackend::new(grid, coeffs);
    pcg(
        &mut be,
        &b.to_vec(),
        &x0.to_vec(),
        Stop::Converge { epsilon, max_iters },
    )
}
