//! Preconditioned conjugate gradient for the 7-point operator.
//!
//! The iteration is written once, generically over [`PcgBackend`]. The device
//! backend runs every step as a kernel on the simulated grid; the shadow
//! backend runs the same steps in plain `f64`.

mod device;
mod plan;
mod shadow;

use alloc::vec::Vec;

pub use device::{
    jacobi_apply, jacobi_scale, pcg_estimate, pcg_solve, spmv, DeviceBackend, PcgReport,
};
pub use plan::{max_tiles_per_core, SramPlan};
pub use shadow::{shadow_solve, ShadowBackend, ShadowGrid};

use crate::costmodel::Unit;
use crate::error::{Error, Result};
use crate::kernels::{ReductionConfig, StencilCoeffs};
use crate::numerics::ScalarFmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PcgMode {
    /// One persistent program: scalars stay on the device.
    Fused,
    /// One launch per kernel with a host readback of the residual each iteration.
    Split,
}

impl PcgMode {
    pub fn name(self) -> &'static str {
        match self {
            PcgMode::Fused => "fused",
            PcgMode::Split => "split",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgConfig {
    /// Absolute threshold on the 2-norm of the residual.
    pub epsilon: f64,
    pub max_iters: usize,
    pub fmt: ScalarFmt,
    pub mode: PcgMode,
    pub unit: Unit,
    pub reduction: ReductionConfig,
    pub coeffs: StencilCoeffs,
}

impl PcgConfig {
    /// BF16 runs fused on the FPU, FP32 runs split on the SFPU.
    pub fn new(fmt: ScalarFmt) -> Self {
        let (mode, unit) = match fmt {
            ScalarFmt::Bf16 => (PcgMode::Fused, Unit::Fpu),
            ScalarFmt::Fp32 => (PcgMode::Split, Unit::Sfpu),
        };
        PcgConfig {
            epsilon: 1e-4,
            max_iters: 1000,
            fmt,
            mode,
            unit,
            reduction: ReductionConfig::default(),
            coeffs: StencilCoeffs::laplacian(),
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_mode(mut self, mode: PcgMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn with_reduction(mut self, reduction: ReductionConfig) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn with_coeffs(mut self, coeffs: StencilCoeffs) -> Self {
        self.coeffs = coeffs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(alloc::format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.unit == Unit::Fpu && self.fmt == ScalarFmt::Fp32 {
            return Err(Error::FpuFormat);
        }
        if self.coeffs.center == 0.0 {
            return Err(Error::Config("center coefficient must be nonzero".into()));
        }
        self.coeffs.check(self.fmt)
    }
}

/// Vectors and scalars of the iteration.
#[derive(Debug, Clone)]
pub struct PcgState<V> {
    pub x: V,
    pub r: V,
    /// Preconditioned residual; `None` when it is regenerated on the fly.
    pub z: Option<V>,
    pub p: V,
    pub q: Option<V>,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub iter: usize,
    /// `||r||` after initialization and after every iteration.
    pub residual_history: Vec<f64>,
    /// Backend cycles elapsed at the same points as `residual_history`.
    pub cycle_history: Vec<u64>,
    pub converged: bool,
}

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Until `||r|| <= epsilon` or `max_iters` iterations.
    Converge { epsilon: f64, max_iters: usize },
    /// Exactly this many iterations regardless of the residual; breakdown
    /// checks are skipped. Used for cost estimates.
    Fixed(usize),
}

/// Vector and scalar primitives the iteration is built from.
///
/// Scalars are exchanged as `f64`; a backend with a narrower format keeps
/// them exactly representable in it.
pub trait PcgBackend {
    type Vector: Clone;

    fn spmv(&mut self, p: &Self::Vector) -> Result<Self::Vector>;
    fn dot(&mut self, x: &Self::Vector, y: &Self::Vector) -> Result<f64>;
    /// `alpha * x + y`.
    fn axpy(&mut self, alpha: f64, x: &Self::Vector, y: &Self::Vector) -> Result<Self::Vector>;
    /// `r . M^-1 r`. May keep `M^-1 r` for [`PcgBackend::update_direction`].
    fn precond_dot(&mut self, r: &Self::Vector) -> Result<f64>;
    /// First search direction `M^-1 r`.
    fn initial_direction(&mut self, r: &Self::Vector) -> Result<Self::Vector>;
    /// `M^-1 r + beta * p`.
    fn update_direction(
        &mut self,
        beta: f64,
        p: &Self::Vector,
        r: &Self::Vector,
    ) -> Result<Self::Vector>;
    fn div(&mut self, a: f64, b: f64) -> f64;
    fn sqrt(&mut self, a: f64) -> f64;
    /// True if `v` cannot be divided by.
    fn is_breakdown(&self, v: f64) -> bool;
    /// Called once per iteration after the residual norm is formed.
    fn end_iteration(&mut self) -> Result<()> {
        Ok(())
    }
    fn cycles(&self) -> u64 {
        0
    }
    /// Preconditioned residual kept by the last `precond_dot`, if any.
    fn take_z(&mut self) -> Option<Self::Vector> {
        None
    }
}

/// Runs the iteration from `x0`.
pub fn pcg<B: PcgBackend>(
    be: &mut B,
    b: &B::Vector,
    x0: &B::Vector,
    stop: Stop,
) -> Result<PcgState<B::Vector>> {
    let (eps, max_iters, fixed) = match stop {
        Stop::Converge { epsilon, max_iters } => (epsilon, max_iters, false),
        Stop::Fixed(n) => (f64::NEG_INFINITY, n, true),
    };
    let breakdown = |be: &B, v: f64, k: usize| {
        if !fixed && be.is_breakdown(v) {
            Err(Error::Breakdown(k))
        } else {
            Ok(())
        }
    };

    let ax = be.spmv(x0)?;
    let r = be.axpy(-1.0, &ax, b)?;
    let rr = be.dot(&r, &r)?;
    let norm = be.sqrt(rr);
    let mut st = PcgState {
        x: x0.clone(),
        p: r.clone(),
        r,
        z: None,
        q: None,
        delta: 0.0,
        alpha: 0.0,
        beta: 0.0,
        iter: 0,
        residual_history: alloc::vec![norm],
        cycle_history: alloc::vec![be.cycles()],
        converged: norm <= eps,
    };
    if st.converged || max_iters == 0 {
        return Ok(st);
    }

    st.delta = be.precond_dot(&st.r)?;
    st.p = be.initial_direction(&st.r)?;
    breakdown(be, st.delta, 0)?;

    while st.iter < max_iters {
        let k = st.iter;
        let q = be.spmv(&st.p)?;
        let pq = be.dot(&st.p, &q)?;
        breakdown(be, pq, k)?;
        st.alpha = be.div(st.delta, pq);
        st.x = be.axpy(st.alpha, &st.p, &st.x)?;
        st.r = be.axpy(-st.alpha, &q, &st.r)?;
        st.q = Some(q);
        let rr = be.dot(&st.r, &st.r)?;
        let norm = be.sqrt(rr);
        be.end_iteration()?;
        st.iter += 1;
        st.residual_history.push(norm);
        if norm <= eps {
            st.converged = true;
            st.cycle_history.push(be.cycles());
            break;
        }
        if st.iter == max_iters {
            st.cycle_history.push(be.cycles());
            break;
        }
        let delta_new = be.precond_dot(&st.r)?;
        breakdown(be, delta_new, st.iter)?;
        st.beta = be.div(delta_new, st.delta);
        st.p = be.update_direction(st.beta, &st.p, &st.r)?;
        st.delta = delta_new;
        st.cycle_history.push(be.cycles());
    }
    st.z = be.take_z();
    Ok(st)
}
