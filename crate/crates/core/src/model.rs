//! Time-local master equations in Lindblad-like form with possibly negative
//! rates:
//!
//! ```text
//! L_t[ρ] = -i[H(t), ρ] + Σ_α γ_α(t) (L_α ρ L_α† - ½{L_α† L_α, ρ})
//! ```
//!
//! Time dependence enters only through scalar coefficients: the Hamiltonian is
//! `Σ_k c_k(t) H_k` and each channel carries a rate `γ_α(t)` in front of a
//! constant jump operator.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{pauli, CMatrix, CVector};
use crate::policy::NumericPolicy;
use crate::scalar::Scalar;

/// Scalar function of time used for rates and Hamiltonian envelopes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFn<T> {
    Constant(T),
    /// `amplitude · sin(omega · t + phase) + offset`
    Sinusoid {
        amplitude: T,
        omega: T,
        phase: T,
        offset: T,
    },
    /// `amplitude · tanh(steepness · t)`
    TanhRamp {
        amplitude: T,
        steepness: T,
    },
    /// `Σ_k c_k t^k`
    Polynomial(Vec<T>),
    /// Linear interpolation through `(t, value)` samples sorted by `t`;
    /// constant beyond either end.
    PiecewiseLinear(Vec<(T, T)>),
}

impl<T: Scalar> CoefficientFn<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            Self::Constant(c) => *c,
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => *amplitude * (*omega * t + *phase).sin() + *offset,
            Self::TanhRamp {
                amplitude,
                steepness,
            } => *amplitude * (*steepness * t).tanh(),
            Self::Polynomial(coeffs) => coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * t + c),
            Self::PiecewiseLinear(samples) => piecewise_linear(samples, t),
        }
    }

    /// Checks parameters are finite and samples ordered.
    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            Self::Constant(c) => c.is_finite(),
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => [*amplitude, *omega, *phase, *offset]
                .iter()
                .all(|x| x.is_finite()),
            Self::TanhRamp {
                amplitude,
                steepness,
            } => amplitude.is_finite() && steepness.is_finite(),
            Self::Polynomial(c) => c.iter().all(|x| x.is_finite()),
            Self::PiecewiseLinear(s) => {
                if s.is_empty() {
                    return Err(Error::InvalidInput(
                        "piecewise_linear needs at least one sample".into(),
                    ));
                }
                if s.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(Error::InvalidInput(
                        "piecewise_linear sample times must be strictly increasing".into(),
                    ));
                }
                s.iter().all(|(a, b)| a.is_finite() && b.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "coefficient parameters must be finite".into(),
            ))
        }
    }
}

fn piecewise_linear<T: Scalar>(samples: &[(T, T)], t: T) -> T {
    match samples {
        [] => T::zero(),
        [(_, v)] => *v,
        _ => {
            let first = samples[0];
            let last = samples[samples.len() - 1];
            if t <= first.0 {
                return first.1;
            }
            if t >= last.0 {
                return last.1;
            }
            let k = samples.partition_point(|(ts, _)| *ts <= t);
            let (t0, v0) = samples[k - 1];
            let (t1, v1) = samples[k];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

impl<T: Scalar> From<T> for CoefficientFn<T> {
    fn from(c: T) -> Self {
        Self::Constant(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm<T> {
    pub coefficient: CoefficientFn<T>,
    pub matrix: CMatrix<T>,
}

/// One dissipative channel `γ_α(t) L_α · L_α†`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T> {
    pub rate: CoefficientFn<T>,
    pub operator: CMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquation<T> {
    dim: usize,
    hamiltonian: Vec<HamiltonianTerm<T>>,
    channels: Vec<Channel<T>>,
}

impl<T: Scalar> MasterEquation<T> {
    /// Validates dimensions and Hermiticity of every Hamiltonian term.
    pub fn new(
        dim: usize,
        hamiltonian: Vec<HamiltonianTerm<T>>,
        channels: Vec<Channel<T>>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput(format!(
                "system dimension must be >= 2, got {dim}"
            )));
        }
        let herm_tol = T::lit(NumericPolicy::for_scalar::<T>().atol);
        for term in &hamiltonian {
            if term.matrix.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: term.matrix.dim(),
                });
            }
            let dev = term.matrix.hermiticity_error();
            if !(dev <= herm_tol) {
                return Err(Error::NotHermitian {
                    deviation: dev.to_f64_lossy(),
                    tol: herm_tol.to_f64_lossy(),
                });
            }
            term.coefficient.validate()?;
        }
        for ch in &channels {
            if ch.operator.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ch.operator.dim(),
                });
            }
            if !ch.operator.is_finite() {
                return Err(Error::InvalidInput(
                    "channel operator has non-finite entries".into(),
                ));
            }
            ch.rate.validate()?;
        }
        Ok(Self {
            dim,
            hamiltonian,
            channels,
        })
    }

    /// Qubit with `H = β(t) σ_z` and Pauli channels `γ_x σ_x`, `γ_y σ_y`, `γ_z σ_z`.
    pub fn pauli(
        gamma_x: CoefficientFn<T>,
        gamma_y: CoefficientFn<T>,
        gamma_z: CoefficientFn<T>,
        beta: CoefficientFn<T>,
    ) -> Result<Self> {
        let [sx, sy, sz] = pauli::<T>();
        Self::new(
            2,
            vec![HamiltonianTerm {
                coefficient: beta,
                matrix: sz.clone(),
            }],
            vec![
                Channel {
                    rate: gamma_x,
                    operator: sx,
                },
                Channel {
                    rate: gamma_y,
                    operator: sy,
                },
                Channel {
                    rate: gamma_z,
                    operator: sz,
                },
            ],
        )
    }

    /// Pauli model with constant rates and constant `β`.
    pub fn pauli_constant(gamma_x: T, gamma_y: T, gamma_z: T, beta: T) -> Self {
        Self::pauli(gamma_x.into(), gamma_y.into(), gamma_z.into(), beta.into())
            .expect("Pauli preset is well formed")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian_terms(&self) -> &[HamiltonianTerm<T>] {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    /// Evaluates every coefficient at `t`.
    pub fn at(&self, t: T) -> Snapshot<T> {
        let d = self.dim;
        let mut hamiltonian = CMatrix::zeros(d);
        for term in &self.hamiltonian {
            let c = term.coefficient.eval(t);
            hamiltonian.add_scaled(Complex::new(c, T::zero()), &term.matrix);
        }
        let mut gamma = CMatrix::zeros(d);
        let channels: Vec<_> = self
            .channels
            .iter()
            .map(|ch| {
                let rate = ch.rate.eval(t);
                let adjoint = ch.operator.adjoint();
                gamma.add_scaled(Complex::new(rate, T::zero()), &(&adjoint * &ch.operator));
                SnapshotChannel {
                    rate,
                    operator: ch.operator.clone(),
                    adjoint,
                }
            })
            .collect();
        Snapshot {
            time: t,
            dim: d,
            hamiltonian,
            gamma,
            channels,
        }
    }

    pub fn rates_at(&self, t: T) -> Vec<T> {
        self.channels.iter().map(|ch| ch.rate.eval(t)).collect()
    }

    /// `L_t[ρ]`.
    pub fn generator_apply(&self, t: T, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.at(t).generator_apply(rho)
    }

    /// `J_t[ρ] = Σ_α γ_α L_α ρ L_α†`.
    pub fn jump_part(&self, t: T, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.at(t).jump_part(rho)
    }

    /// `K_t = H(t) - (i/2) Γ(t)`.
    pub fn drift_hamiltonian(&self, t: T) -> CMatrix<T> {
        self.at(t).drift_hamiltonian()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotChannel<T> {
    pub rate: T,
    pub operator: CMatrix<T>,
    pub adjoint: CMatrix<T>,
}

/// A master equation with its coefficients frozen at one time.
///
/// Trajectory engines evaluate one snapshot per grid time and share it
/// across all trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub time: T,
    pub dim: usize,
    /// `H(t)`
    pub hamiltonian: CMatrix<T>,
    /// `Γ(t) = Σ_α γ_α L_α† L_α`
    pub gamma: CMatrix<T>,
    pub channels: Vec<SnapshotChannel<T>>,
}

impl<T: Scalar> Snapshot<T> {
    fn check_dim(&self, m: &CMatrix<T>) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        Ok(())
    }

    /// Applies the generator. Linear, so any square matrix is accepted.
    pub fn generator_apply(&self, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.check_dim(rho)?;
        let minus_i = Complex::new(T::zero(), -T::one());
        let mut out = self.jump_part(rho)?;
        out.add_scaled(minus_i, &self.hamiltonian.commutator(rho));
        out.add_scaled(
            Complex::new(T::lit(-0.5), T::zero()),
            &self.gamma.anticommutator(rho),
        );
        Ok(out)
    }

    pub fn jump_part(&self, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.check_dim(rho)?;
        let mut out = CMatrix::zeros(self.dim);
        for ch in &self.channels {
            if ch.rate.is_zero() {
                continue;
            }
            let term = &(&ch.operator * rho) * &ch.adjoint;
            out.add_scaled(Complex::new(ch.rate, T::zero()), &term);
        }
        Ok(out)
    }

    /// `Σ_α γ_α L_α|ψ⟩⟨ψ|L_α†` without forming the outer products one by one.
    pub fn jump_part_pure(&self, psi: &CVector<T>) -> CMatrix<T> {
        let mut out = CMatrix::zeros(self.dim);
        for ch in &self.channels {
            if ch.rate.is_zero() {
                continue;
            }
            let l_psi = ch.operator.mul_vec(psi);
            out.add_outer(Complex::new(ch.rate, T::zero()), &l_psi, &l_psi);
        }
        out
    }

    pub fn drift_hamiltonian(&self) -> CMatrix<T> {
        let mut k = self.hamiltonian.clone();
        k.add_scaled(Complex::new(T::zero(), T::lit(-0.5)), &self.gamma);
        k
    }

    /// `Σ_j γ_j |⟨u|L_j|v⟩|²`.
    pub fn transition_weight(&self, u: &CVector<T>, v: &CVector<T>) -> T {
        self.channels
            .iter()
            .map(|ch| ch.rate * ch.operator.sandwich(u, v).norm_sqr())
            .sum()
    }
}

/// Closed-form P-divisibility test for the Pauli model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliDivisibility<T> {
    pub divisible: bool,
    /// `(γ_x + γ_y, γ_y + γ_z, γ_x + γ_z)`
    pub margins: [T; 3],
}

pub fn pauli_p_divisibility<T: Scalar>(gamma_x: T, gamma_y: T, gamma_z: T) -> PauliDivisibility<T> {
    let margins = [gamma_x + gamma_y, gamma_y + gamma_z, gamma_x + gamma_z];
    PauliDivisibility {
        divisible: margins.iter().all(|m| *m >= T::zero()),
        margins,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledDivisibility<T> {
    pub divisible: bool,
    /// Smallest `Σ_j γ_j |⟨φ_μ|L_j|φ_μ'⟩|²` encountered.
    pub worst_value: T,
}

/// Number of angles per great circle in the qubit basis scan.
pub const QUBIT_SCAN_POINTS: usize = 360;
const SAMPLED_VIOLATION_TOL: f64 = 1e-12;

/// Necessary-condition check of P-divisibility at time `t`.
///
/// Evaluates the basis inequality over `n_samples` Haar-random orthonormal
/// bases and, for qubits, over bases whose Bloch axis sweeps the three
/// coordinate great circles. A `true` result is evidence, not proof.
pub fn p_divisibility_sampled<T: Scalar, R: Rng + ?Sized>(
    me: &MasterEquation<T>,
    t: T,
    n_samples: usize,
    rng: &mut R,
) -> Result<SampledDivisibility<T>> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be >= 1".into()));
    }
    let snap = me.at(t);
    let mut worst = T::zero();
    let mut visit = |basis: &[CVector<T>]| {
        for (mu, u) in basis.iter().enumerate() {
            for (nu, v) in basis.iter().enumerate() {
                if mu != nu {
                    let w = snap.transition_weight(u, v);
                    if w < worst {
                        worst = w;
                    }
                }
            }
        }
    };
    if snap.channels.is_empty() {
        return Ok(SampledDivisibility {
            divisible: true,
            worst_value: T::zero(),
        });
    }
    for _ in 0..n_samples {
        visit(&haar_basis(me.dim(), rng));
    }
    if me.dim() == 2 {
        for k in 0..QUBIT_SCAN_POINTS {
            let theta = T::lit(std::f64::consts::TAU * k as f64 / QUBIT_SCAN_POINTS as f64);
            for axis in great_circle_axes(theta) {
                visit(&qubit_basis_along(axis));
            }
        }
    }
    Ok(SampledDivisibility {
        divisible: worst >= -T::lit(SAMPLED_VIOLATION_TOL),
        worst_value: worst,
    })
}

fn great_circle_axes<T: Scalar>(theta: T) -> [[T; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let o = T::zero();
    [[s, o, c], [o, s, c], [c, s, o]]
}

/// Orthonormal qubit basis `{|n+⟩, |n-⟩}` for the Bloch unit vector `n`.
pub fn qubit_basis_along<T: Scalar>(n: [T; 3]) -> [CVector<T>; 2] {
    let half = T::lit(0.5);
    let theta = n[2].max(-T::one()).min(T::one()).acos();
    let phi = n[1].atan2(n[0]);
    let (st, ct) = (theta * half).sin_cos();
    let e = Complex::new(phi.cos(), phi.sin());
    let up = CVector::from_vec(vec![Complex::new(ct, T::zero()), e * st]);
    let down = CVector::from_vec(vec![Complex::new(-st, T::zero()), e * ct]);
    [up, down]
}

/// Haar-random orthonormal basis via Gram–Schmidt on complex Gaussian vectors.
pub fn haar_basis<T: Scalar, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<CVector<T>> {
    let mut basis: Vec<CVector<T>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = CVector::from_vec(
            (0..dim)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex::new(T::lit(re), T::lit(im))
                })
                .collect(),
        );
        for b in &basis {
            let proj = b.inner(&v);
            v = &v - &b.scale(proj);
        }
        if let Ok(u) = v.normalized() {
            if u.norm() > T::lit(0.5) {
                basis.push(u);
            }
        }
    }
    basis
}

/// Haar-random pure state.
pub fn haar_state<T: Scalar, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector<T> {
    haar_basis(dim, rng).swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector;
    use num_complex::Complex64;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type M = CMatrix<f64>;
    type V = CVector<f64>;

    fn plus() -> V {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        V::from_f64_pairs(&[(h, 0.0), (h, 0.0)])
    }

    fn minus() -> V {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        V::from_f64_pairs(&[(h, 0.0), (-h, 0.0)])
    }

    fn random_density(d: usize, rng: &mut impl Rng) -> M {
        let b = M::from_fn(d, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let a = &b * &b.adjoint();
        let tr = a.trace().re;
        a.scale_real(1.0 / tr)
    }

    fn random_me(d: usize, n_channels: usize, rng: &mut impl Rng) -> MasterEquation<f64> {
        let rnd = |rng: &mut dyn rand::RngCore| {
            M::from_fn(d, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let h = rnd(rng);
        let h = h.hermitian_part();
        let channels = (0..n_channels)
            .map(|_| Channel {
                rate: CoefficientFn::Constant(rng.random_range(-1.0..1.0)),
                operator: rnd(rng),
            })
            .collect();
        MasterEquation::new(
            d,
            vec![HamiltonianTerm {
                coefficient: CoefficientFn::Constant(1.0),
                matrix: h,
            }],
            channels,
        )
        .unwrap()
    }

    #[test]
    fn coefficient_families() {
        assert_eq!(CoefficientFn::Constant(2.5).eval(7.0), 2.5);
        let s = CoefficientFn::Sinusoid {
            amplitude: 0.5,
            omega: 2.0,
            phase: std::f64::consts::FRAC_PI_2,
            offset: 0.0,
        };
        assert!((s.eval(0.3) - 0.5 * (0.6f64).cos()).abs() < 1e-15);
        let r = CoefficientFn::TanhRamp {
            amplitude: -1.0,
            steepness: 2.0,
        };
        assert!((r.eval(0.5) + (1.0f64).tanh()).abs() < 1e-15);
        assert_eq!(
            CoefficientFn::Polynomial(vec![1.0, -2.0, 3.0]).eval(2.0),
            9.0
        );
        let pl = CoefficientFn::PiecewiseLinear(vec![(0.0, 1.0), (1.0, 3.0), (2.0, -1.0)]);
        assert_eq!(pl.eval(-1.0), 1.0);
        assert_eq!(pl.eval(0.5), 2.0);
        assert_eq!(pl.eval(1.5), 1.0);
        assert_eq!(pl.eval(5.0), -1.0);
        assert!(CoefficientFn::PiecewiseLinear(vec![(1.0, 0.0), (0.0, 1.0)])
            .validate()
            .is_err());
    }

    #[test]
    fn unital_fixed_point() {
        let me = MasterEquation::<f64>::pauli_constant(0.3, -0.2, 1.1, 0.7);
        let half = M::identity(2).scale_real(0.5);
        let out = me.generator_apply(0.0, &half).unwrap();
        assert!(out.max_abs() < 1e-15);
    }

    #[test]
    fn unitary_precession_generator() {
        let me = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 0.0, 1.0);
        let rho = projector(&plus()).unwrap();
        let out = me.generator_apply(0.0, &rho).unwrap();
        let [_, sy, _] = pauli::<f64>();
        assert!(out.max_abs_diff(&sy) < 1e-15);

        // finite-difference of the exact rotation e^{-iσ_z t}
        let h = 1e-6;
        let rot = |t: f64| {
            let u = M::diagonal(&[0.0, 0.0]);
            let mut u = u;
            u[(0, 0)] = Complex64::new(t.cos(), -t.sin());
            u[(1, 1)] = Complex64::new(t.cos(), t.sin());
            &(&u * &rho) * &u.adjoint()
        };
        let fd = (&rot(h) - &rot(-h)).scale_real(0.5 / h);
        assert!(fd.max_abs_diff(&out) < 1e-8);
    }

    #[test]
    fn dephasing_generator() {
        let me = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 1.0, 0.0);
        let rho = projector(&plus()).unwrap();
        let out = me.generator_apply(0.0, &rho).unwrap();
        let want = &projector(&minus()).unwrap() - &rho;
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn jump_part_examples() {
        let zero = projector(&V::basis(2, 0)).unwrap();
        let one = projector(&V::basis(2, 1)).unwrap();

        let me = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 1.0, 0.0);
        assert!(me.jump_part(0.0, &zero).unwrap().max_abs_diff(&zero) < 1e-15);
        let k = me.drift_hamiltonian(0.0);
        assert!(k.max_abs_diff(&M::identity(2).scale(Complex64::new(0.0, -0.5))) < 1e-15);

        let h = M::from_f64_pairs(2, &[(0.3, 0.0), (0.1, 0.2), (0.1, -0.2), (-0.4, 0.0)]);
        let bare = MasterEquation::new(
            2,
            vec![HamiltonianTerm {
                coefficient: CoefficientFn::Constant(1.0),
                matrix: h.clone(),
            }],
            vec![],
        )
        .unwrap();
        assert_eq!(bare.jump_part(0.0, &zero).unwrap(), M::zeros(2));
        assert_eq!(bare.drift_hamiltonian(0.0), h);

        let me = MasterEquation::<f64>::pauli_constant(1.0, 1.0, 1.0, 0.0);
        let want = &one.scale_real(2.0) + &zero;
        assert!(me.jump_part(0.0, &zero).unwrap().max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let me = MasterEquation::<f64>::pauli_constant(1.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            me.generator_apply(0.0, &M::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = MasterEquation::new(
            2,
            vec![],
            vec![Channel {
                rate: CoefficientFn::Constant(1.0),
                operator: M::identity(3),
            }],
        );
        assert!(bad.is_err());
        let non_herm = M::from_f64_pairs(2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        assert!(MasterEquation::new(
            2,
            vec![HamiltonianTerm {
                coefficient: CoefficientFn::Constant(1.0),
                matrix: non_herm
            }],
            vec![]
        )
        .is_err());
    }

    #[test]
    fn pauli_closed_form_examples() {
        let r = pauli_p_divisibility(1.0f64, 1.0, 1.0);
        assert!(r.divisible);
        assert_eq!(r.margins, [2.0, 2.0, 2.0]);
        let r = pauli_p_divisibility(0.1f64, 0.1, -0.5);
        assert!(!r.divisible);
        assert!((r.margins[0] - 0.2).abs() < 1e-15);
        assert!((r.margins[1] + 0.4).abs() < 1e-15);
        assert!((r.margins[2] + 0.4).abs() < 1e-15);
        let r = pauli_p_divisibility(1.0f64, 1.0, -1.0);
        assert!(r.divisible);
        assert_eq!(r.margins, [2.0, 0.0, 0.0]);
    }

    /// Brute-force scan over the polar angle of a qubit basis in the x-z plane.
    #[test]
    fn violating_basis_exists_for_non_p_divisible_rates() {
        let me = MasterEquation::<f64>::pauli_constant(0.1, 0.1, -0.5, 0.0);
        let snap = me.at(0.0);
        let mut worst = f64::INFINITY;
        for k in 0..=1000 {
            let theta = std::f64::consts::PI * k as f64 / 1000.0;
            let [u, v] = qubit_basis_along([theta.sin(), 0.0, theta.cos()]);
            worst = worst.min(snap.transition_weight(&u, &v));
        }
        // x-axis basis: γ_y + γ_z = -0.4
        assert!((worst + 0.4).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = p_divisibility_sampled(&me, 0.0, 16, &mut rng).unwrap();
        assert!(!r.divisible);
        assert!(r.worst_value <= -0.4 + 1e-9);
    }

    #[test]
    fn sampled_check_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let me = MasterEquation::<f64>::pauli_constant(0.2, 0.0, 1.3, 1.0);
        assert!(
            p_divisibility_sampled(&me, 0.0, 32, &mut rng)
                .unwrap()
                .divisible
        );
        let bare = MasterEquation::<f64>::new(3, vec![], vec![]).unwrap();
        let r = p_divisibility_sampled(&bare, 0.0, 4, &mut rng).unwrap();
        assert!(r.divisible);
        assert_eq!(r.worst_value, 0.0);
        assert!(p_divisibility_sampled(&me, 0.0, 0, &mut rng).is_err());
    }

    #[test]
    fn sampled_agrees_with_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let g: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let me = MasterEquation::<f64>::pauli_constant(g[0], g[1], g[2], 0.5);
            let closed = pauli_p_divisibility(g[0], g[1], g[2]);
            let sampled = p_divisibility_sampled(&me, 0.0, 8, &mut rng).unwrap();
            if !closed.divisible {
                assert!(!sampled.divisible, "missed violation for {g:?}");
            }
            // every scanned or sampled value is a convex mix of the margins
            let min_margin = closed.margins.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(sampled.worst_value >= min_margin.min(0.0) - 1e-12);
        }
    }

    #[test]
    fn haar_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = haar_basis::<f64, _>(4, &mut rng);
        for (i, u) in b.iter().enumerate() {
            for (j, v) in b.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((u.inner(v) - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn splitting_and_linearity(seed in any::<u64>(), d in 2usize..5, nch in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let me = random_me(d, nch, &mut rng);
            let snap = me.at(0.0);
            let r1 = random_density(d, &mut rng);
            let r2 = random_density(d, &mut rng);

            let l1 = snap.generator_apply(&r1).unwrap();
            prop_assert!(l1.hermiticity_error() < 1e-12);
            prop_assert!(l1.trace().norm() < 1e-12);

            let k = snap.drift_hamiltonian();
            let minus_i = Complex64::new(0.0, -1.0);
            let mut split = snap.jump_part(&r1).unwrap();
            split.add_scaled(minus_i, &(&(&k * &r1) - &(&r1 * &k.adjoint())));
            prop_assert!(split.max_abs_diff(&l1) < 1e-12);

            let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
            let mut mix = r1.scale(a);
            mix.add_scaled(b, &r2);
            let lhs = snap.generator_apply(&mix).unwrap();
            let mut rhs = l1.scale(a);
            rhs.add_scaled(b, &snap.generator_apply(&r2).unwrap());
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }
}
