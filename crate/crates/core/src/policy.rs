use crate::scalar::Scalar;

/// Every numerical tolerance used by the library, in one place.
///
/// Values are calibrated for `f64`; [`NumericPolicy::for_scalar`] widens them
/// for lower-precision scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Generic absolute tolerance for identities between matrices.
    pub atol: f64,
    /// Maximum `|A - A†|` accepted as Hermitian.
    pub hermiticity_tol: f64,
    /// Maximum deviation of a pure state from unit norm.
    pub norm_tol: f64,
    /// Allowed trace / Hermiticity drift of the exact integrator over a run.
    pub trace_drift_tol: f64,
    /// Eigenvalues below `-rate_tol` count as negative jump rates.
    pub rate_tol: f64,
    /// Two states are the same class when their fidelity is `>= 1 - match_tol`.
    pub match_tol: f64,
    /// Fidelity margin for the self-jump rule.
    pub self_jump_tol: f64,
    /// Negative density-matrix eigenvalues below `-positivity_tol` are violations.
    pub positivity_tol: f64,
    /// Upper bound on the total event probability per member and step.
    pub max_event_prob: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            atol: 1e-12,
            hermiticity_tol: 1e-10,
            norm_tol: 1e-9,
            trace_drift_tol: 1e-8,
            rate_tol: 1e-12,
            match_tol: 1e-8,
            self_jump_tol: 1e-10,
            positivity_tol: 1e-9,
            max_event_prob: 0.1,
        }
    }
}

impl NumericPolicy {
    /// Tighter profile for regression runs.
    pub fn strict() -> Self {
        Self {
            atol: 1e-13,
            hermiticity_tol: 1e-11,
            norm_tol: 1e-10,
            trace_drift_tol: 1e-9,
            rate_tol: 1e-13,
            match_tol: 1e-9,
            self_jump_tol: 1e-11,
            positivity_tol: 1e-10,
            max_event_prob: 0.05,
        }
    }

    /// Looks up a named profile (`default` or `strict`).
    pub fn from_profile(name: &str) -> Option<Self> {
        match name.trim() {
            "default" => Some(Self::default()),
            "strict" => Some(Self::strict()),
            _ => None,
        }
    }

    /// Default profile adjusted to the precision of `T`.
    pub fn for_scalar<T: Scalar>() -> Self {
        Self::default().scaled(T::TOLERANCE_SCALE)
    }

    /// Multiplies every tolerance (but not probability bounds) by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            atol: self.atol * factor,
            hermiticity_tol: self.hermiticity_tol * factor,
            norm_tol: self.norm_tol * factor,
            trace_drift_tol: self.trace_drift_tol * factor,
            rate_tol: self.rate_tol * factor,
            match_tol: self.match_tol * factor,
            self_jump_tol: self.self_jump_tol * factor,
            positivity_tol: self.positivity_tol * factor,
            max_event_prob: self.max_event_prob,
        }
    }
}
