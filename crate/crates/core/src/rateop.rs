//! Generalized rate operator
//!
//! ```text
//! R_ψ = Σ_α γ_α L_α|ψ⟩⟨ψ|L_α† + ½(|ψ⟩⟨Φ_ψ| + |Φ_ψ⟩⟨ψ|)
//! K_ψ = H - (i/2) Σ_α γ_α L_α† L_α - (i/2)|Φ_ψ⟩⟨ψ|
//! ```
//!
//! The vector `Φ_ψ` is free: any choice leaves the ensemble dynamics
//! unchanged while reshaping individual trajectories. It is supplied by a
//! [`TransformationStrategy`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, CVector, SpectralDecomposition};
use crate::model::Snapshot;
use crate::policy::NumericPolicy;
use crate::scalar::Scalar;

/// Callback `(ψ, t) ↦ Φ_ψ`. Must be a pure function of its arguments.
pub type PhiFn<T> = Arc<dyn Fn(&CVector<T>, T) -> CVector<T> + Send + Sync>;

/// How `Φ_ψ` is chosen for a trajectory in state `ψ` at time `t`.
#[derive(Clone)]
pub enum TransformationStrategy<T> {
    /// `Φ_ψ = 0`: the plain rate operator.
    Zero,
    /// `Φ_ψ = c ψ`.
    StateScaled(Complex<T>),
    /// Qubit only: the minimal-norm `Φ_ψ` that makes `R_ψ` diagonal in the
    /// given orthonormal basis, so every jump lands on a basis state.
    TargetBasis(Vec<CVector<T>>),
    Custom(PhiFn<T>),
}

impl<T: Scalar> fmt::Debug for TransformationStrategy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::StateScaled(c) => write!(f, "StateScaled({c})"),
            Self::TargetBasis(b) => f.debug_tuple("TargetBasis").field(b).finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl<T: Scalar> TransformationStrategy<T> {
    /// Target basis `{|0⟩, |1⟩}` of a qubit.
    pub fn computational_basis() -> Self {
        Self::TargetBasis(vec![CVector::basis(2, 0), CVector::basis(2, 1)])
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::StateScaled(_) => "state_scaled",
            Self::TargetBasis(_) => "target_basis",
            Self::Custom(_) => "custom",
        }
    }

    /// Evaluates `Φ_ψ`.
    pub fn phi(&self, snap: &Snapshot<T>, psi: &CVector<T>) -> Result<CVector<T>> {
        let phi = match self {
            Self::Zero => CVector::zeros(psi.dim()),
            Self::StateScaled(c) => psi.scale(*c),
            Self::TargetBasis(basis) => target_basis_phi(snap, psi, basis)?,
            Self::Custom(f) => f(psi, snap.time),
        };
        if phi.dim() != psi.dim() {
            return Err(Error::DimensionMismatch {
                expected: psi.dim(),
                found: phi.dim(),
            });
        }
        if !phi.is_finite() {
            return Err(Error::NonFiniteStrategyOutput);
        }
        Ok(phi)
    }
}

/// `R_ψ` together with its spectrum and the positive/negative rate split.
#[derive(Debug, Clone, PartialEq)]
pub struct RateOperator<T> {
    pub matrix: CMatrix<T>,
    pub spectral: SpectralDecomposition<T>,
    pub lambda_plus: Vec<T>,
    pub lambda_minus: Vec<T>,
    /// `true` where the eigenvector coincides projectively with `ψ`; such
    /// jumps leave the state unchanged and are never sampled.
    pub self_jump: Vec<bool>,
    pub phi: CVector<T>,
}

impl<T: Scalar> RateOperator<T> {
    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.spectral.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[CVector<T>] {
        &self.spectral.eigenvectors
    }

    /// `R^± = Σ_i λ_i^± |φ_i⟩⟨φ_i|`.
    pub fn positive_part(&self) -> CMatrix<T> {
        weighted_projectors(&self.lambda_plus, &self.spectral.eigenvectors)
    }

    pub fn negative_part(&self) -> CMatrix<T> {
        weighted_projectors(&self.lambda_minus, &self.spectral.eigenvectors)
    }
}

fn weighted_projectors<T: Scalar>(weights: &[T], vecs: &[CVector<T>]) -> CMatrix<T> {
    let mut out = CMatrix::zeros(vecs[0].dim());
    for (&w, v) in weights.iter().zip(vecs) {
        if w != T::zero() {
            out.add_scaled(Complex::new(w, T::zero()), &CMatrix::outer(v, v));
        }
    }
    out
}

pub(crate) fn check_normalized<T: Scalar>(psi: &CVector<T>, policy: &NumericPolicy) -> Result<()> {
    let n = psi.norm();
    if !((n - T::one()).abs() <= T::lit(policy.norm_tol)) {
        return Err(Error::NotNormalized {
            norm: n.to_f64_lossy(),
        });
    }
    Ok(())
}

fn check_dims<T: Scalar>(snap: &Snapshot<T>, psi: &CVector<T>) -> Result<()> {
    if psi.dim() != snap.dim {
        return Err(Error::DimensionMismatch {
            expected: snap.dim,
            found: psi.dim(),
        });
    }
    Ok(())
}

/// Builds `R_ψ` and diagonalizes it.
pub fn build_rate_operator<T: Scalar>(
    snap: &Snapshot<T>,
    psi: &CVector<T>,
    strategy: &TransformationStrategy<T>,
    policy: &NumericPolicy,
) -> Result<RateOperator<T>> {
    check_dims(snap, psi)?;
    check_normalized(psi, policy)?;
    let phi = strategy.phi(snap, psi)?;
    let mut matrix = snap.jump_part_pure(psi);
    let half = Complex::new(T::lit(0.5), T::zero());
    matrix.add_outer(half, psi, &phi);
    matrix.add_outer(half, &phi, psi);

    let spectral = match strategy {
        TransformationStrategy::TargetBasis(basis) => diagonal_in_basis(&matrix, basis, policy)?,
        _ => hermitian_eig(&matrix, T::lit(policy.hermiticity_tol))?,
    };
    let (lambda_plus, lambda_minus) = split_rates(&spectral);
    let fid_cut = T::one() - T::lit(policy.self_jump_tol);
    let self_jump = spectral
        .eigenvectors
        .iter()
        .map(|v| v.fidelity(psi) > fid_cut)
        .collect();
    Ok(RateOperator {
        matrix,
        spectral,
        lambda_plus,
        lambda_minus,
        self_jump,
        phi,
    })
}

/// Spectrum read off in a basis where `r` is diagonal by construction.
///
/// Degenerate diagonals would let a generic eigensolver return any rotated
/// basis; reading the diagonal keeps the jump targets on the basis states.
fn diagonal_in_basis<T: Scalar>(
    r: &CMatrix<T>,
    basis: &[CVector<T>],
    policy: &NumericPolicy,
) -> Result<SpectralDecomposition<T>> {
    let scale = r.frobenius_norm().max(T::one());
    let tol = T::lit(policy.hermiticity_tol) * scale;
    let mut off = T::zero();
    for (i, u) in basis.iter().enumerate() {
        for v in basis.iter().skip(i + 1) {
            off = off.max(r.sandwich(u, v).norm());
        }
    }
    if off > tol {
        return hermitian_eig(r, T::lit(policy.hermiticity_tol));
    }
    let mut pairs: Vec<(T, CVector<T>)> = basis
        .iter()
        .map(|e| {
            let mut v = e.clone();
            v.fix_phase();
            (r.sandwich(e, e).re, v)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| {
        la.partial_cmp(lb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| va.lex_cmp(vb))
    });
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `K_ψ ψ` without forming `K_ψ`.
pub fn drift_vector<T: Scalar>(
    snap: &Snapshot<T>,
    psi: &CVector<T>,
    phi: &CVector<T>,
) -> CVector<T> {
    let h = snap.hamiltonian.mul_vec(psi);
    let g = snap.gamma.mul_vec(psi);
    let overlap = psi.inner(psi);
    let m_half_i = Complex::new(T::zero(), T::lit(-0.5));
    CVector::from_vec(
        h.iter()
            .zip(g.iter())
            .zip(phi.iter())
            .map(|((h, g), p)| h + m_half_i * g + m_half_i * p * overlap)
            .collect(),
    )
}

/// Returns `(K_ψ, K̃_ψ)` with `K̃_ψ = K_ψ + (i/2) tr[R_ψ] 1`.
pub fn effective_hamiltonian<T: Scalar>(
    snap: &Snapshot<T>,
    psi: &CVector<T>,
    strategy: &TransformationStrategy<T>,
    policy: &NumericPolicy,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    check_dims(snap, psi)?;
    check_normalized(psi, policy)?;
    let phi = strategy.phi(snap, psi)?;
    let mut k = snap.drift_hamiltonian();
    k.add_scaled(
        Complex::new(T::zero(), T::lit(-0.5)),
        &CMatrix::outer(&phi, psi),
    );
    // tr R_ψ = ⟨ψ|Γ|ψ⟩ + Re⟨Φ|ψ⟩
    let tr_r = snap.gamma.sandwich(psi, psi).re + phi.inner(psi).re;
    let mut k_tilde = k.clone();
    k_tilde.add_scaled(
        Complex::new(T::zero(), tr_r * T::lit(0.5)),
        &CMatrix::identity(snap.dim),
    );
    Ok((k, k_tilde))
}

/// Minimal-norm `Φ_ψ` with `⟨e_0|R_ψ|e_1⟩ = 0` for a qubit basis `{e_0, e_1}`.
///
/// With `a = ⟨e_0|ψ⟩`, `b = ⟨e_1|ψ⟩` and `j = ⟨e_0|J_ψ|e_1⟩` the constraint
/// `j + ½(a ⟨Φ|e_1⟩ + ⟨e_0|Φ⟩ b̄) = 0` is solved by
/// `Φ = -2 j b e_0 - 2 j̄ a e_1`.
pub fn target_basis_phi<T: Scalar>(
    snap: &Snapshot<T>,
    psi: &CVector<T>,
    basis: &[CVector<T>],
) -> Result<CVector<T>> {
    if snap.dim != 2 || psi.dim() != 2 {
        return Err(Error::DimensionUnsupported {
            required: 2,
            found: psi.dim(),
        });
    }
    let [e0, e1] = basis else {
        return Err(Error::DimensionUnsupported {
            required: 2,
            found: basis.len(),
        });
    };
    if e0.dim() != 2 || e1.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: e0.dim().max(e1.dim()),
        });
    }
    let tol = T::lit(1e-10);
    if (e0.norm_sqr() - T::one()).abs() > tol
        || (e1.norm_sqr() - T::one()).abs() > tol
        || e0.inner(e1).norm() > tol
    {
        return Err(Error::InvalidInput(
            "target basis is not orthonormal".into(),
        ));
    }
    let a = e0.inner(psi);
    let b = e1.inner(psi);
    let j = snap.channels.iter().filter(|ch| !ch.rate.is_zero()).fold(
        Complex::<T>::zero(),
        |acc, ch| {
            let l_psi = ch.operator.mul_vec(psi);
            acc + e0.inner(&l_psi) * l_psi.inner(e1) * ch.rate
        },
    );
    let two = T::lit(2.0);
    let c0 = -(j * b) * two;
    let c1 = -(j.conj() * a) * two;
    Ok(&e0.scale(c0) + &e1.scale(c1))
}

/// `λ^± = ½(|λ| ± λ)`, computed so that `λ^+ λ^- = 0` exactly.
pub fn split_rates<T: Scalar>(spectral: &SpectralDecomposition<T>) -> (Vec<T>, Vec<T>) {
    spectral
        .eigenvalues
        .iter()
        .map(|&l| {
            if l >= T::zero() {
                (l, T::zero())
            } else {
                (T::zero(), -l)
            }
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector;
    use crate::model::{haar_state, MasterEquation};
    use num_complex::Complex64;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = CMatrix<f64>;
    type V = CVector<f64>;

    fn pol() -> NumericPolicy {
        NumericPolicy::default()
    }

    fn plus() -> V {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        V::from_f64_pairs(&[(h, 0.0), (h, 0.0)])
    }

    fn strategies(rng: &mut impl Rng) -> Vec<TransformationStrategy<f64>> {
        let c = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let basis = crate::model::haar_basis::<f64, _>(2, rng);
        let w = V::from_f64_pairs(&[
            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            (0.3, -0.2),
        ]);
        vec![
            TransformationStrategy::Zero,
            TransformationStrategy::StateScaled(c),
            TransformationStrategy::TargetBasis(basis),
            TransformationStrategy::Custom(Arc::new(move |psi: &V, t: f64| {
                &w.scale_real(t.cos()) + &psi.scale(Complex64::new(0.0, psi[0].norm()))
            })),
        ]
    }

    /// `-i(K P - P K†) + R`
    fn drift_plus_jump(snap: &Snapshot<f64>, psi: &V, s: &TransformationStrategy<f64>) -> M {
        let (k, _) = effective_hamiltonian(snap, psi, s, &pol()).unwrap();
        let r = build_rate_operator(snap, psi, s, &pol()).unwrap();
        let p = projector(psi).unwrap();
        let mut out = r.matrix.clone();
        out.add_scaled(
            Complex64::new(0.0, -1.0),
            &(&(&k * &p) - &(&p * &k.adjoint())),
        );
        out
    }

    #[test]
    fn pauli_rate_operator_on_zero() {
        let me = MasterEquation::<f64>::pauli_constant(1.0, 1.0, 1.0, 0.4);
        let snap = me.at(0.0);
        let psi = V::basis(2, 0);
        let r = build_rate_operator(&snap, &psi, &TransformationStrategy::Zero, &pol()).unwrap();
        let want = M::diagonal(&[1.0, 2.0]);
        assert!(r.matrix.max_abs_diff(&want) < 1e-15);
        assert_eq!(r.spectral.eigenvalues, vec![1.0, 2.0]);
        assert_eq!(r.self_jump, vec![true, false]);

        let (k, kt) =
            effective_hamiltonian(&snap, &psi, &TransformationStrategy::Zero, &pol()).unwrap();
        let mut h = snap.hamiltonian.clone();
        h.add_scaled(Complex64::new(0.0, -1.5), &M::identity(2));
        assert!(k.max_abs_diff(&h) < 1e-15);
        // tr R = 3 cancels the damping
        assert!(kt.max_abs_diff(&snap.hamiltonian) < 1e-15);
    }

    #[test]
    fn state_scaled_adds_projector() {
        let me = MasterEquation::<f64>::pauli_constant(0.2, 0.5, 0.1, 0.0);
        let snap = me.at(0.0);
        let psi = plus();
        let zero = build_rate_operator(&snap, &psi, &TransformationStrategy::Zero, &pol()).unwrap();
        let scaled = build_rate_operator(
            &snap,
            &psi,
            &TransformationStrategy::StateScaled(Complex64::new(1.0, 0.0)),
            &pol(),
        )
        .unwrap();
        let want = &zero.matrix + &projector(&psi).unwrap();
        assert!(scaled.matrix.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn no_channels_gives_zero_operator() {
        let me = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 0.0, 1.0);
        let snap = me.at(0.0);
        let r = build_rate_operator(&snap, &plus(), &TransformationStrategy::Zero, &pol()).unwrap();
        assert_eq!(r.matrix, M::zeros(2));
        let (k, kt) =
            effective_hamiltonian(&snap, &plus(), &TransformationStrategy::Zero, &pol()).unwrap();
        assert_eq!(k, snap.hamiltonian);
        assert_eq!(kt, snap.hamiltonian);
    }

    #[test]
    fn target_basis_on_computational_states_is_zero() {
        let me = MasterEquation::<f64>::pauli_constant(0.4, -0.1, 0.7, 1.0);
        let snap = me.at(0.0);
        let basis = [V::basis(2, 0), V::basis(2, 1)];
        for k in 0..2 {
            let phi = target_basis_phi(&snap, &V::basis(2, k), &basis).unwrap();
            assert_eq!(phi, V::zeros(2));
        }
        let quiet = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 0.0, 1.0);
        let phi = target_basis_phi(&quiet.at(0.0), &plus(), &basis).unwrap();
        assert_eq!(phi, V::zeros(2));
    }

    #[test]
    fn target_basis_dephasing_example() {
        let me = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 1.0, 0.0);
        let snap = me.at(0.0);
        let basis = vec![V::basis(2, 0), V::basis(2, 1)];
        let psi = plus();
        // j = ⟨0|σ_z|+⟩⟨+|σ_z|1⟩ = -1/2, a = b = 1/√2
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi = target_basis_phi(&snap, &psi, &basis).unwrap();
        assert!((phi[0] - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!((phi[1] - Complex64::new(h, 0.0)).norm() < 1e-15);
        let r = build_rate_operator(
            &snap,
            &psi,
            &TransformationStrategy::TargetBasis(basis),
            &pol(),
        )
        .unwrap();
        assert!(r.matrix[(0, 1)].norm() < 1e-15);
        // R = 1 here; the tie is ordered lexicographically, |1⟩ before |0⟩
        assert_eq!(
            r.spectral.eigenvectors,
            vec![V::basis(2, 1), V::basis(2, 0)]
        );
    }

    #[test]
    fn target_basis_requires_qubit() {
        let me = MasterEquation::<f64>::new(3, vec![], vec![]).unwrap();
        let psi = V::basis(3, 0);
        let basis = vec![V::basis(3, 0), V::basis(3, 1)];
        assert!(matches!(
            target_basis_phi(&me.at(0.0), &psi, &basis),
            Err(Error::DimensionUnsupported { .. })
        ));
        let me = MasterEquation::<f64>::pauli_constant(1.0, 0.0, 0.0, 0.0);
        let bad = vec![V::basis(2, 0), V::basis(2, 0)];
        assert!(target_basis_phi(&me.at(0.0), &plus(), &bad).is_err());
    }

    #[test]
    fn strategy_errors() {
        let me = MasterEquation::<f64>::pauli_constant(1.0, 0.0, 0.0, 0.0);
        let snap = me.at(0.0);
        let nan = TransformationStrategy::Custom(Arc::new(|psi: &V, _| psi.scale_real(f64::NAN)));
        assert!(matches!(
            build_rate_operator(&snap, &plus(), &nan, &pol()),
            Err(Error::NonFiniteStrategyOutput)
        ));
        let wrong = TransformationStrategy::Custom(Arc::new(|_: &V, _| V::zeros(3)));
        assert!(matches!(
            build_rate_operator(&snap, &plus(), &wrong, &pol()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            build_rate_operator(
                &snap,
                &plus().scale_real(2.0),
                &TransformationStrategy::Zero,
                &pol()
            ),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn split_examples() {
        let mk = |v: Vec<f64>| SpectralDecomposition {
            eigenvectors: vec![V::basis(2, 0); v.len()],
            eigenvalues: v,
        };
        assert_eq!(
            split_rates(&mk(vec![2.0, -0.3])),
            (vec![2.0, 0.0], vec![0.0, 0.3])
        );
        assert_eq!(
            split_rates(&mk(vec![0.0, 0.0])),
            (vec![0.0, 0.0], vec![0.0, 0.0])
        );
        assert_eq!(
            split_rates(&mk(vec![-1.0, -2.0])),
            (vec![0.0, 0.0], vec![1.0, 2.0])
        );
    }

    #[test]
    fn generator_identity_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let me = MasterEquation::<f64>::pauli_constant(
                g[0],
                g[1],
                g[2],
                rng.random_range(-1.0..1.0),
            );
            let snap = me.at(0.0);
            let psi: V = haar_state(2, &mut rng);
            let l = snap.generator_apply(&projector(&psi).unwrap()).unwrap();
            for s in strategies(&mut rng) {
                let lhs = drift_plus_jump(&snap, &psi, &s);
                assert!(lhs.max_abs_diff(&l) <= 1e-10, "strategy {s:?}");
            }
        }
    }

    #[test]
    fn target_basis_cancels_off_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let me = MasterEquation::<f64>::pauli_constant(0.3, 0.3, -0.2, 1.0);
        for _ in 0..100 {
            let basis = crate::model::haar_basis::<f64, _>(2, &mut rng);
            let psi: V = haar_state(2, &mut rng);
            let s = TransformationStrategy::TargetBasis(basis.clone());
            let r = build_rate_operator(&me.at(0.0), &psi, &s, &pol()).unwrap();
            assert!(r.matrix.sandwich(&basis[0], &basis[1]).norm() <= 1e-10);
            for v in r.eigenvectors() {
                assert!(basis.iter().any(|e| e.fidelity(v) > 1.0 - 1e-12));
            }
        }
    }

    proptest! {
        #[test]
        fn trace_identities(seed in any::<u64>(), d in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ops: Vec<M> = (0..3).map(|_| M::from_fn(d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).collect();
            let me = MasterEquation::new(
                d,
                vec![],
                ops.into_iter().map(|o| crate::model::Channel { rate: crate::model::CoefficientFn::Constant(rng.random_range(-1.0..1.0)), operator: o }).collect(),
            ).unwrap();
            let snap = me.at(0.0);
            let psi: V = haar_state(d, &mut rng);
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = TransformationStrategy::StateScaled(c);
            let r = build_rate_operator(&snap, &psi, &s, &pol()).unwrap();
            let sum: f64 = r.eigenvalues().iter().sum();
            prop_assert!((r.trace() - sum).abs() <= 1e-10);
            let tr_j = snap.jump_part_pure(&psi).trace().re;
            prop_assert!((r.trace() - (tr_j + r.phi.inner(&psi).re)).abs() <= 1e-10);
            prop_assert!(r.matrix.hermiticity_error() <= 1e-12);
            for ((p, m), l) in r.lambda_plus.iter().zip(&r.lambda_minus).zip(r.eigenvalues()) {
                prop_assert!(*p >= 0.0 && *m >= 0.0 && p * m == 0.0 && p - m == *l);
            }
        }
    }
}
