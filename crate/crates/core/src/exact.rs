//! Reference density-matrix integrator and physicality monitors.
//!
//! The integrator is classical fixed-step RK4 on `dρ/dt = L_t[ρ]`. It is the
//! oracle every stochastic engine is validated against.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, CVector};
use crate::model::MasterEquation;
use crate::policy::NumericPolicy;
use crate::scalar::Scalar;

/// Density matrices on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<CMatrix<T>>,
}

impl<T: Scalar> DensityTrajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(T, &CMatrix<T>)> {
        self.times.last().copied().zip(self.states.last())
    }
}

/// Minimum eigenvalue `μ(t)` of `ρ(t)` and its eigenvector `ξ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityMonitor<T> {
    pub times: Vec<T>,
    pub mu: Vec<T>,
    pub xi: Vec<CVector<T>>,
    /// First grid time with `μ(t) < -positivity_tol`.
    pub first_violation_time: Option<T>,
}

/// Choi spectra of `Λ_t` on a time grid, each ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiSpectrumSeries<T> {
    pub times: Vec<T>,
    pub eigenvalues: Vec<Vec<T>>,
}

impl<T: Scalar> ChoiSpectrumSeries<T> {
    /// Smallest Choi eigenvalue over the whole grid.
    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues
            .iter()
            .map(|s| s[0])
            .fold(T::infinity(), |m, x| if x < m { x } else { m })
    }
}

/// One classical RK4 step of length `h` from time `t`.
pub fn rk4_step<T: Scalar>(
    me: &MasterEquation<T>,
    t: T,
    h: T,
    rho: &CMatrix<T>,
) -> Result<CMatrix<T>> {
    let half = T::lit(0.5);
    let mid = me.at(t + h * half);
    let k1 = me.at(t).generator_apply(rho)?;
    let mut y = rho.clone();
    y.add_scaled(Complex::new(h * half, T::zero()), &k1);
    let k2 = mid.generator_apply(&y)?;
    let mut y = rho.clone();
    y.add_scaled(Complex::new(h * half, T::zero()), &k2);
    let k3 = mid.generator_apply(&y)?;
    let mut y = rho.clone();
    y.add_scaled(Complex::new(h, T::zero()), &k3);
    let k4 = me.at(t + h).generator_apply(&y)?;

    let sixth = h / T::lit(6.0);
    let mut out = rho.clone();
    out.add_scaled(Complex::new(sixth, T::zero()), &k1);
    out.add_scaled(Complex::new(sixth + sixth, T::zero()), &k2);
    out.add_scaled(Complex::new(sixth + sixth, T::zero()), &k3);
    out.add_scaled(Complex::new(sixth, T::zero()), &k4);
    Ok(out)
}

/// Uniform grid `0, dt, 2dt, …` ending exactly at `t_max`; the final
/// interval is shortened when `t_max` is not a multiple of `dt`.
pub fn time_grid<T: Scalar>(t_max: T, dt: T) -> Result<Vec<T>> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidInput("dt must be positive and finite".into()));
    }
    if !(t_max >= T::zero()) || !t_max.is_finite() {
        return Err(Error::InvalidInput(
            "t_max must be non-negative and finite".into(),
        ));
    }
    let ratio = t_max / dt;
    let n = ratio.round();
    let slack = T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) * ratio.max(T::one());
    let n_full = if (ratio - n).abs() <= slack {
        n
    } else {
        ratio.floor()
    };
    let n_full = n_full.to_usize().unwrap_or(0);
    let mut grid: Vec<T> = (0..=n_full).map(|k| T::lit(k as f64) * dt).collect();
    let last = *grid.last().unwrap();
    if (t_max - last).abs() > slack * dt {
        grid.push(t_max);
    } else if let Some(l) = grid.last_mut() {
        *l = t_max;
    }
    Ok(grid)
}

fn check_density<T: Scalar>(rho: &CMatrix<T>, dim: usize, policy: &NumericPolicy) -> Result<()> {
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rho.dim(),
        });
    }
    let tol = T::lit(policy.hermiticity_tol);
    let spec = hermitian_eig(rho, tol)?;
    let tr = rho.trace();
    if (tr.re - T::one()).abs() > T::lit(policy.norm_tol) || tr.im.abs() > T::lit(policy.norm_tol) {
        return Err(Error::InvalidInput(format!(
            "initial state has trace {}",
            tr
        )));
    }
    if spec.eigenvalues[0] < -T::lit(policy.positivity_tol) {
        return Err(Error::InvalidInput(format!(
            "initial state has negative eigenvalue {}",
            spec.eigenvalues[0]
        )));
    }
    Ok(())
}

/// Integrates the master equation from `rho0` over `[0, t_max]`.
pub fn evolve_exact<T: Scalar>(
    me: &MasterEquation<T>,
    rho0: &CMatrix<T>,
    t_max: T,
    dt: T,
) -> Result<DensityTrajectory<T>> {
    evolve_exact_with(me, rho0, t_max, dt, &NumericPolicy::for_scalar::<T>())
}

pub fn evolve_exact_with<T: Scalar>(
    me: &MasterEquation<T>,
    rho0: &CMatrix<T>,
    t_max: T,
    dt: T,
    policy: &NumericPolicy,
) -> Result<DensityTrajectory<T>> {
    check_density(rho0, me.dim(), policy)?;
    let times = time_grid(t_max, dt)?;
    let bound = T::lit(policy.trace_drift_tol);
    let mut states = Vec::with_capacity(times.len());
    let mut rho = rho0.clone();
    let tr0 = rho.trace().re;
    states.push(rho.clone());
    for w in times.windows(2) {
        rho = rk4_step(me, w[0], w[1] - w[0], &rho)?;
        let drift = (rho.trace().re - tr0).abs();
        let herm = rho.hermiticity_error();
        if !(drift <= bound) || !(herm <= bound) || !rho.is_finite() {
            let (what, value) = if herm > drift {
                ("hermiticity drift", herm)
            } else {
                ("trace drift", drift)
            };
            return Err(Error::StepTooLarge {
                time: w[1].to_f64_lossy(),
                what,
                value: value.to_f64_lossy(),
                bound: policy.trace_drift_tol,
            });
        }
        states.push(rho.clone());
    }
    Ok(DensityTrajectory { times, states })
}

/// Choi spectrum of the propagator `Λ_t` at each time of `t_grid`.
///
/// Convention: `C = (Λ_t ⊗ id)|Ω⟩⟨Ω|` with `|Ω⟩ = Σ_i |ii⟩ / √d`, system
/// index slow, so `tr C = 1` and `C(0)` has spectrum `{1, 0, …, 0}`.
pub fn propagator_choi<T: Scalar>(
    me: &MasterEquation<T>,
    t_grid: &[T],
    dt: T,
) -> Result<ChoiSpectrumSeries<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    if t_grid.iter().any(|t| !(*t >= T::zero())) || t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidInput(
            "t_grid must be ascending and non-negative".into(),
        ));
    }
    let d = me.dim();
    let mut units: Vec<CMatrix<T>> = (0..d * d)
        .map(|k| {
            let mut e = CMatrix::zeros(d);
            e[(k / d, k % d)] = Complex::new(T::one(), T::zero());
            e
        })
        .collect();

    // sequential propagation of the matrix units
    let mut maps: Vec<Vec<CMatrix<T>>> = Vec::with_capacity(t_grid.len());
    let mut t = T::zero();
    let eps = dt * T::lit(1e-9);
    for &target in t_grid {
        while target - t > eps {
            let h = dt.min(target - t);
            for u in units.iter_mut() {
                *u = rk4_step(me, t, h, u)?;
            }
            t = if target - (t + h) <= eps {
                target
            } else {
                t + h
            };
        }
        maps.push(units.clone());
    }

    let inv_d = T::one() / T::lit(d as f64);
    let tol = T::lit(1e-8);
    let eigenvalues = maps
        .par_iter()
        .map(|images| {
            let mut choi = CMatrix::zeros(d * d);
            for (k, img) in images.iter().enumerate() {
                let (i, j) = (k / d, k % d);
                for a in 0..d {
                    for b in 0..d {
                        choi[(a * d + i, b * d + j)] = img[(a, b)] * inv_d;
                    }
                }
            }
            hermitian_eig(&choi.hermitian_part(), tol).map(|s| s.eigenvalues)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChoiSpectrumSeries {
        times: t_grid.to_vec(),
        eigenvalues,
    })
}

pub fn positivity_monitor<T: Scalar>(traj: &DensityTrajectory<T>) -> Result<PositivityMonitor<T>> {
    positivity_monitor_with(traj, &NumericPolicy::for_scalar::<T>())
}

pub fn positivity_monitor_with<T: Scalar>(
    traj: &DensityTrajectory<T>,
    policy: &NumericPolicy,
) -> Result<PositivityMonitor<T>> {
    let tol = T::lit(policy.trace_drift_tol.max(policy.hermiticity_tol));
    let mut mu = Vec::with_capacity(traj.len());
    let mut xi = Vec::with_capacity(traj.len());
    let mut first_violation_time = None;
    for (&t, rho) in traj.times.iter().zip(&traj.states) {
        let spec = hermitian_eig(rho, tol)?;
        let (m, v) = spec.min();
        if first_violation_time.is_none() && m < -T::lit(policy.positivity_tol) {
            first_violation_time = Some(t);
        }
        mu.push(m);
        xi.push(v.clone());
    }
    Ok(PositivityMonitor {
        times: traj.times.clone(),
        mu,
        xi,
        first_violation_time,
    })
}
