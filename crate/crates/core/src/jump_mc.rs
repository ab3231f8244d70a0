//! Engine A: independent piecewise-deterministic trajectories.
//!
//! Each step evaluates `R_ψ`, draws one uniform number and either jumps to an
//! eigenvector of `R_ψ` or follows the normalized first-order drift
//! `(1 - i K_ψ dt)ψ`. Only valid while every non-self jump rate is
//! non-negative; otherwise [`Error::NegativeRate`] is raised and the
//! reverse-jump engine in [`crate::nmqj`] must be used.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{time_grid, DensityTrajectory};
use crate::linalg::{CMatrix, CVector};
use crate::model::{MasterEquation, Snapshot};
use crate::policy::NumericPolicy;
use crate::rateop::{build_rate_operator, check_normalized, RateOperator, TransformationStrategy};
use crate::scalar::Scalar;

/// Trajectories per reduction chunk. Fixed so that summation order, and
/// therefore every output bit, does not depend on the worker count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig<T> {
    pub dt: T,
    pub t_max: T,
    pub n_traj: usize,
    pub seed: u64,
    pub max_event_prob: T,
}

impl<T: Scalar> TrajectoryConfig<T> {
    pub fn new(dt: T, t_max: T, n_traj: usize, seed: u64) -> Self {
        Self {
            dt,
            t_max,
            n_traj,
            seed,
            max_event_prob: T::lit(0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_max >= T::zero()) || !self.t_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "t_max must be non-negative, got {}",
                self.t_max
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidInput("n_traj must be at least 1".into()));
        }
        if !(self.max_event_prob > T::zero() && self.max_event_prob < T::one()) {
            return Err(Error::InvalidInput(format!(
                "max_event_prob must lie in (0, 1), got {}",
                self.max_event_prob
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<T>> {
        time_grid(self.t_max, self.dt)
    }
}

/// One jump of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord<T> {
    pub time: T,
    /// Number of jumps before this one; identifies the segment jumped from.
    pub from_segment: usize,
    pub eigenindex: usize,
    pub rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T> {
    pub times: Vec<T>,
    pub states: Vec<CVector<T>>,
    pub jump_log: Vec<JumpRecord<T>>,
}

/// Picks at most one jump with `P(i) = λ_i dt`.
///
/// Self jumps are skipped: they leave the state unchanged and their rate
/// cancels from the ensemble average, whatever its sign.
pub fn sample_event<T: Scalar>(
    rates: &[T],
    self_jump: &[bool],
    time: T,
    dt: T,
    u: T,
    max_event_prob: T,
    policy: &NumericPolicy,
) -> Result<Option<usize>> {
    let neg_tol = -T::lit(policy.rate_tol);
    let mut total = T::zero();
    for (i, (&l, &skip)) in rates.iter().zip(self_jump).enumerate() {
        if skip {
            continue;
        }
        if l < neg_tol {
            return Err(Error::NegativeRate {
                time: time.to_f64_lossy(),
                index: i,
                rate: l.to_f64_lossy(),
            });
        }
        total = total + l.max(T::zero()) * dt;
    }
    if total > max_event_prob {
        return Err(Error::StepTooLarge {
            time: time.to_f64_lossy(),
            what: "jump probability",
            value: total.to_f64_lossy(),
            bound: max_event_prob.to_f64_lossy(),
        });
    }
    let mut cum = T::zero();
    for (i, (&l, &skip)) in rates.iter().zip(self_jump).enumerate() {
        if skip {
            continue;
        }
        cum = cum + l.max(T::zero()) * dt;
        if u < cum {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// `(1 - i K_ψ dt)ψ`, normalized, with `Φ_ψ` already evaluated.
pub fn drift_step<T: Scalar>(
    snap: &Snapshot<T>,
    psi: &CVector<T>,
    phi: &CVector<T>,
    dt: T,
) -> Result<CVector<T>> {
    let d = psi.dim();
    let p = psi.as_slice();
    let h = snap.hamiltonian.as_slice();
    let g = snap.gamma.as_slice();
    let minus_i_dt = Complex::new(T::zero(), -dt);
    let m_half_i = Complex::new(T::zero(), T::lit(-0.5));
    let overlap = psi.norm_sqr();
    let mut next = CVector::zeros(d);
    let mut norm_sqr = T::zero();
    for (i, (out, f)) in next.as_mut_slice().iter_mut().zip(phi.iter()).enumerate() {
        let mut k = f * (m_half_i * overlap);
        for j in 0..d {
            k = k + (h[i * d + j] + m_half_i * g[i * d + j]) * p[j];
        }
        *out = p[i] + minus_i_dt * k;
        norm_sqr = norm_sqr + out.norm_sqr();
    }
    let n = norm_sqr.sqrt();
    if !(n > T::zero()) {
        return Err(Error::ZeroVector);
    }
    let inv = n.recip();
    for z in next.as_mut_slice() {
        *z = *z * inv;
    }
    Ok(next)
}

/// First-order deterministic step `ψ ↦ (1 - i K_ψ dt)ψ / ‖·‖`.
pub fn deterministic_step<T: Scalar>(
    snap: &Snapshot<T>,
    psi: &CVector<T>,
    strategy: &TransformationStrategy<T>,
    dt: T,
    policy: &NumericPolicy,
) -> Result<CVector<T>> {
    check_normalized(psi, policy)?;
    let phi = strategy.phi(snap, psi)?;
    drift_step(snap, psi, &phi, dt)
}

/// Everything needed to step trajectories of one model on one grid.
struct Stepper<'a, T> {
    snaps: Vec<Snapshot<T>>,
    grid: Vec<T>,
    strategy: &'a TransformationStrategy<T>,
    policy: NumericPolicy,
    max_event_prob: T,
}

impl<'a, T: Scalar> Stepper<'a, T> {
    fn new(
        me: &MasterEquation<T>,
        strategy: &'a TransformationStrategy<T>,
        config: &TrajectoryConfig<T>,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let snaps = grid.par_iter().map(|&t| me.at(t)).collect();
        Ok(Self {
            snaps,
            grid,
            strategy,
            policy: *policy,
            max_event_prob: config.max_event_prob,
        })
    }

    /// Runs one trajectory, handing each grid state to `visit`.
    fn run(
        &self,
        psi0: &CVector<T>,
        rng: &mut ChaCha8Rng,
        mut visit: impl FnMut(usize, &CVector<T>),
        mut on_jump: impl FnMut(JumpRecord<T>),
    ) -> Result<usize> {
        let mut psi = psi0.clone();
        let mut jumps = 0;
        for k in 0..self.grid.len() {
            visit(k, &psi);
            if k + 1 == self.grid.len() {
                break;
            }
            let t = self.grid[k];
            let dt = self.grid[k + 1] - t;
            let snap = &self.snaps[k];
            let r: RateOperator<T> = build_rate_operator(snap, &psi, self.strategy, &self.policy)?;
            let u = T::lit(rng.random::<f64>());
            match sample_event(
                r.eigenvalues(),
                &r.self_jump,
                t,
                dt,
                u,
                self.max_event_prob,
                &self.policy,
            )? {
                Some(i) => {
                    on_jump(JumpRecord {
                        time: t,
                        from_segment: jumps,
                        eigenindex: i,
                        rate: r.eigenvalues()[i],
                    });
                    jumps += 1;
                    psi = r.eigenvectors()[i].clone();
                }
                None => psi = drift_step(snap, &psi, &r.phi, dt)?,
            }
        }
        Ok(jumps)
    }
}

/// The random stream of trajectory `stream_id`, independent of scheduling.
pub fn trajectory_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Simulates a single trajectory on the config grid.
pub fn run_trajectory<T: Scalar>(
    me: &MasterEquation<T>,
    strategy: &TransformationStrategy<T>,
    psi0: &CVector<T>,
    config: &TrajectoryConfig<T>,
    stream_id: u64,
    policy: &NumericPolicy,
) -> Result<TrajectoryRecord<T>> {
    check_initial(me, psi0, policy)?;
    let stepper = Stepper::new(me, strategy, config, policy)?;
    let mut rng = trajectory_rng(config.seed, stream_id);
    let mut states = Vec::with_capacity(stepper.grid.len());
    let mut jump_log = Vec::new();
    stepper.run(
        psi0,
        &mut rng,
        |_, psi| states.push(psi.clone()),
        |j| jump_log.push(j),
    )?;
    Ok(TrajectoryRecord {
        times: stepper.grid,
        states,
        jump_log,
    })
}

fn check_initial<T: Scalar>(
    me: &MasterEquation<T>,
    psi0: &CVector<T>,
    policy: &NumericPolicy,
) -> Result<()> {
    if psi0.dim() != me.dim() {
        return Err(Error::DimensionMismatch {
            expected: me.dim(),
            found: psi0.dim(),
        });
    }
    check_normalized(psi0, policy)
}

/// Sample mean of `|ψ⟩⟨ψ|` with the standard error of every entry.
///
/// `stderr[k]` stores the standard error of `Re ρ_ij` in the real part and
/// of `Im ρ_ij` in the imaginary part of entry `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate<T> {
    pub mean: DensityTrajectory<T>,
    pub stderr: Vec<CMatrix<T>>,
    pub samples: u64,
}

/// Running first and second moments of projector entries on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator<T> {
    dim: usize,
    weight: Vec<T>,
    sum: Vec<Vec<Complex<T>>>,
    sum_sq: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> MomentAccumulator<T> {
    pub fn new(dim: usize, n_times: usize) -> Self {
        Self {
            dim,
            weight: vec![T::zero(); n_times],
            sum: vec![vec![Complex::new(T::zero(), T::zero()); dim * dim]; n_times],
            sum_sq: vec![vec![Complex::new(T::zero(), T::zero()); dim * dim]; n_times],
        }
    }

    /// Adds `w` copies of `|ψ⟩⟨ψ|` at grid index `k`.
    pub fn add(&mut self, k: usize, psi: &CVector<T>, w: T) {
        let d = self.dim;
        let p = psi.as_slice();
        let sum = &mut self.sum[k];
        let sq = &mut self.sum_sq[k];
        for i in 0..d {
            for j in 0..d {
                let e = p[i] * p[j].conj();
                sum[i * d + j] = sum[i * d + j] + e * w;
                sq[i * d + j] = sq[i * d + j] + Complex::new(e.re * e.re, e.im * e.im) * w;
            }
        }
        self.weight[k] = self.weight[k] + w;
    }

    pub fn merge(&mut self, other: &Self) {
        for k in 0..self.weight.len() {
            self.weight[k] = self.weight[k] + other.weight[k];
            for (a, b) in self.sum[k].iter_mut().zip(&other.sum[k]) {
                *a = *a + b;
            }
            for (a, b) in self.sum_sq[k].iter_mut().zip(&other.sum_sq[k]) {
                *a = *a + b;
            }
        }
    }

    /// Keeps the first `n` grid points.
    pub fn truncate(&mut self, n: usize) {
        self.weight.truncate(n);
        self.sum.truncate(n);
        self.sum_sq.truncate(n);
    }

    /// Mean and standard error; the sample variance uses `n - 1`.
    pub fn finish(&self, times: Vec<T>) -> Result<EnsembleEstimate<T>> {
        if times.len() != self.weight.len() {
            return Err(Error::GridMismatch);
        }
        let d = self.dim;
        let mut states = Vec::with_capacity(times.len());
        let mut stderr = Vec::with_capacity(times.len());
        for k in 0..times.len() {
            let n = self.weight[k];
            let mean = CMatrix::from_fn(d, |i, j| self.sum[k][i * d + j] / n);
            let se = CMatrix::from_fn(d, |i, j| {
                let m = mean.as_slice()[i * d + j];
                let sq = self.sum_sq[k][i * d + j];
                let var = |s: T, m: T| {
                    if n > T::one() {
                        ((s - n * m * m) / (n - T::one())).max(T::zero())
                    } else {
                        T::zero()
                    }
                };
                Complex::new((var(sq.re, m.re) / n).sqrt(), (var(sq.im, m.im) / n).sqrt())
            });
            states.push(mean);
            stderr.push(se);
        }
        Ok(EnsembleEstimate {
            mean: DensityTrajectory { times, states },
            stderr,
            samples: self.weight.first().map_or(0, |w| w.to_u64().unwrap_or(0)),
        })
    }
}

/// `ρ(t) ≈ (1/N) Σ_n |ψ_n(t)⟩⟨ψ_n(t)|` over stored records.
pub fn ensemble_average<T: Scalar>(
    records: &[TrajectoryRecord<T>],
    t_grid: &[T],
) -> Result<EnsembleEstimate<T>> {
    if records.len() < 2 {
        return Err(Error::InvalidInput(
            "ensemble average needs at least two records".into(),
        ));
    }
    let dim = records[0].states.first().map_or(0, CVector::dim);
    let mut acc = MomentAccumulator::new(dim, t_grid.len());
    for rec in records {
        if rec.times.len() != t_grid.len() || rec.times.iter().zip(t_grid).any(|(a, b)| a != b) {
            return Err(Error::GridMismatch);
        }
        for (k, psi) in rec.states.iter().enumerate() {
            if psi.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: psi.dim(),
                });
            }
            acc.add(k, psi, T::one());
        }
    }
    acc.finish(t_grid.to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun<T> {
    pub estimate: EnsembleEstimate<T>,
    pub total_jumps: u64,
}

/// Runs `config.n_traj` trajectories in parallel and averages them on the fly.
///
/// Trajectory `n` always uses stream `n`, and chunk sums are reduced in chunk
/// order, so the result is bit-identical for any thread pool size. If any
/// trajectory fails, the failure with the earliest time is returned.
pub fn run_ensemble<T: Scalar>(
    me: &MasterEquation<T>,
    strategy: &TransformationStrategy<T>,
    psi0: &CVector<T>,
    config: &TrajectoryConfig<T>,
    policy: &NumericPolicy,
) -> Result<EnsembleRun<T>> {
    check_initial(me, psi0, policy)?;
    let stepper = Stepper::new(me, strategy, config, policy)?;
    let n_times = stepper.grid.len();
    let n_chunks = config.n_traj.div_ceil(CHUNK);
    let chunks: Vec<Result<(MomentAccumulator<T>, u64)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = MomentAccumulator::new(me.dim(), n_times);
            let mut jumps = 0u64;
            for n in c * CHUNK..((c + 1) * CHUNK).min(config.n_traj) {
                let mut rng = trajectory_rng(config.seed, n as u64);
                jumps +=
                    stepper.run(psi0, &mut rng, |k, psi| acc.add(k, psi, T::one()), |_| {})? as u64;
            }
            Ok((acc, jumps))
        })
        .collect();

    let mut first_err: Option<Error> = None;
    let mut total = MomentAccumulator::new(me.dim(), n_times);
    let mut total_jumps = 0;
    for chunk in chunks {
        match chunk {
            Ok((acc, jumps)) => {
                total.merge(&acc);
                total_jumps += jumps;
            }
            Err(e) => {
                let earlier = match &first_err {
                    None => true,
                    Some(prev) => error_time(&e) < error_time(prev),
                };
                if earlier {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(EnsembleRun {
        estimate: total.finish(stepper.grid)?,
        total_jumps,
    })
}

fn error_time(e: &Error) -> f64 {
    match e {
        Error::NegativeRate { time, .. } | Error::StepTooLarge { time, .. } => *time,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector;
    use crate::model::{haar_state, Channel, CoefficientFn, MasterEquation};
    use crate::rateop::drift_vector;
    use proptest::prelude::{prop_assert, proptest};

    type V = CVector<f64>;

    fn plus() -> V {
        V::from_f64_pairs(&[(0.5f64.sqrt(), 0.0), (0.5f64.sqrt(), 0.0)])
    }

    fn policy() -> NumericPolicy {
        NumericPolicy::default()
    }

    #[test]
    fn sample_event_examples() {
        let rates = [1.0, 2.0];
        let skip = [false, false];
        let p = policy();
        let ev = |u| sample_event(&rates, &skip, 0.0, 0.01, u, 0.1, &p).unwrap();
        assert_eq!(ev(0.005), Some(0));
        assert_eq!(ev(0.02), Some(1));
        assert_eq!(ev(0.5), None);
    }

    #[test]
    fn sample_event_skips_self_jumps() {
        let p = policy();
        let ev = sample_event(&[5.0, 2.0], &[true, false], 0.0, 0.01, 0.01, 0.1, &p).unwrap();
        assert_eq!(ev, Some(1));
        // negative self rate is harmless
        let ev = sample_event(&[-1.0, 2.0], &[true, false], 0.0, 0.01, 0.5, 0.1, &p).unwrap();
        assert_eq!(ev, None);
    }

    #[test]
    fn sample_event_errors() {
        let p = policy();
        let err = sample_event(&[-0.5, 1.0], &[false, false], 1.5, 0.01, 0.0, 0.1, &p).unwrap_err();
        assert!(matches!(err, Error::NegativeRate { index: 0, time, .. } if time == 1.5));
        let err =
            sample_event(&[10.0, 10.0], &[false, false], 0.0, 0.01, 0.0, 0.1, &p).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn free_evolution_is_constant() {
        let me = MasterEquation::<f64>::new(2, vec![], vec![]).unwrap();
        let cfg = TrajectoryConfig::new(0.01, 1.0, 1, 3);
        let rec = run_trajectory(
            &me,
            &TransformationStrategy::Zero,
            &plus(),
            &cfg,
            0,
            &policy(),
        )
        .unwrap();
        assert!(rec.jump_log.is_empty());
        assert_eq!(rec.states.len(), 101);
        for s in &rec.states {
            assert!(s.fidelity(&plus()) > 1.0 - 1e-14);
        }
    }

    #[test]
    fn ground_state_is_a_drift_fixed_point() {
        let me = MasterEquation::<f64>::pauli_constant(0.3, 0.2, 0.1, 1.3);
        let snap = me.at(0.0);
        let zero = V::basis(2, 0);
        let next = deterministic_step(&snap, &zero, &TransformationStrategy::Zero, 0.01, &policy())
            .unwrap();
        assert!(next.fidelity(&zero) > 1.0 - 1e-14);
        assert!((next.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn norm_loss_matches_total_rate() {
        let me = MasterEquation::<f64>::pauli_constant(0.7, 0.4, 0.9, 0.5);
        let snap = me.at(0.0);
        let mut rng = trajectory_rng(11, 0);
        let strategies = [
            TransformationStrategy::Zero,
            TransformationStrategy::StateScaled(Complex::new(0.3, -0.2)),
            TransformationStrategy::computational_basis(),
        ];
        for _ in 0..20 {
            let psi: V = haar_state(2, &mut rng);
            for s in &strategies {
                let r = build_rate_operator(&snap, &psi, s, &policy()).unwrap();
                let k_psi = drift_vector(&snap, &psi, &r.phi);
                for dt in [1e-2, 1e-3, 1e-4] {
                    let step = CVector::from_vec(
                        psi.iter()
                            .zip(k_psi.iter())
                            .map(|(p, k)| p + Complex::new(0.0, -dt) * k)
                            .collect(),
                    );
                    let gap = (step.norm_sqr() - (1.0 - dt * r.trace())).abs();
                    assert!(gap <= 10.0 * dt * dt, "dt {dt}: gap {gap}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn drift_step_is_normalized(re0 in -1.0f64..1.0, im0 in -1.0f64..1.0, re1 in -1.0f64..1.0, dt in 1e-4f64..1e-2) {
            let raw = V::from_f64_pairs(&[(re0, im0), (re1, 0.3)]);
            let psi = raw.normalized().unwrap();
            let me = MasterEquation::<f64>::pauli_constant(0.5, 0.1, 0.2, 1.0);
            let out = deterministic_step(&me.at(0.0), &psi, &TransformationStrategy::Zero, dt, &policy()).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_flip_channel_jump_statistics() {
        // γ_x = 1 only: every trajectory flips between |0⟩ and |1⟩ at rate 1
        let sx = crate::linalg::pauli::<f64>()[0].clone();
        let me = MasterEquation::new(
            2,
            vec![],
            vec![Channel {
                rate: CoefficientFn::Constant(1.0),
                operator: sx,
            }],
        )
        .unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 5.0, 1000, 5);
        let counts: Vec<f64> = (0..cfg.n_traj as u64)
            .map(|n| {
                run_trajectory(
                    &me,
                    &TransformationStrategy::Zero,
                    &V::basis(2, 0),
                    &cfg,
                    n,
                    &policy(),
                )
                .unwrap()
                .jump_log
                .len() as f64
            })
            .collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 5.0).abs() < 5.0 * se, "mean {mean} se {se}");
        // Poisson: variance close to the mean
        assert!((var / mean - 1.0).abs() < 0.2, "dispersion {}", var / mean);
    }

    #[test]
    fn negative_rate_is_reported_with_time() {
        let me = MasterEquation::<f64>::pauli(
            CoefficientFn::Constant(0.1),
            CoefficientFn::Constant(0.1),
            CoefficientFn::Sinusoid {
                amplitude: -0.5,
                omega: 1.0,
                phase: 0.0,
                offset: 0.0,
            },
            CoefficientFn::Constant(0.0),
        )
        .unwrap();
        let cfg = TrajectoryConfig::new(1e-2, 2.0, 4, 0);
        let err =
            run_ensemble(&me, &TransformationStrategy::Zero, &plus(), &cfg, &policy()).unwrap_err();
        match err {
            Error::NegativeRate { time, rate, .. } => {
                assert!(time > 0.0 && time < 1.0, "time {time}");
                assert!(rate < 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ensemble_average_examples() {
        let grid = vec![0.0, 1.0];
        let rec = |psi: &V| TrajectoryRecord {
            times: grid.clone(),
            states: vec![psi.clone(), psi.clone()],
            jump_log: vec![],
        };
        let same = ensemble_average(&[rec(&plus()), rec(&plus())], &grid).unwrap();
        assert!(same.mean.states[1].max_abs_diff(&projector(&plus()).unwrap()) < 1e-15);
        assert!(same.stderr[1].max_abs() < 1e-15);

        let mixed = ensemble_average(&[rec(&V::basis(2, 0)), rec(&V::basis(2, 1))], &grid).unwrap();
        assert!(mixed.mean.states[0].max_abs_diff(&CMatrix::identity(2).scale_real(0.5)) < 1e-15);
        assert!((mixed.stderr[0].as_slice()[0].re - 0.5).abs() < 1e-15);

        assert!(matches!(
            ensemble_average(&[rec(&plus())], &grid),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            ensemble_average(&[rec(&plus()), rec(&plus())], &[0.0, 2.0]),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn accumulator_matches_stored_records() {
        let me = MasterEquation::<f64>::pauli_constant(0.5, 0.5, 0.5, 1.0);
        let cfg = TrajectoryConfig::new(1e-2, 1.0, 10, 9);
        let s = TransformationStrategy::Zero;
        let records: Vec<_> = (0..10)
            .map(|n| run_trajectory(&me, &s, &plus(), &cfg, n, &policy()).unwrap())
            .collect();
        let stored = ensemble_average(&records, &records[0].times).unwrap();
        let streamed = run_ensemble(&me, &s, &plus(), &cfg, &policy()).unwrap();
        for (a, b) in stored
            .mean
            .states
            .iter()
            .zip(&streamed.estimate.mean.states)
        {
            assert!(a.max_abs_diff(b) < 1e-14);
        }
        let jumps: usize = records.iter().map(|r| r.jump_log.len()).sum();
        assert_eq!(jumps as u64, streamed.total_jumps);
    }

    #[test]
    fn dephasing_ensemble_hits_analytic_coherence() {
        let me = MasterEquation::<f64>::pauli_constant(0.0, 0.0, 1.0, 0.0);
        let cfg = TrajectoryConfig::new(1e-3, 1.0, 4000, 1);
        let run =
            run_ensemble(&me, &TransformationStrategy::Zero, &plus(), &cfg, &policy()).unwrap();
        let last = run.estimate.mean.states.len() - 1;
        let x = 2.0 * run.estimate.mean.states[last].as_slice()[1].re;
        let se = 2.0 * run.estimate.stderr[last].as_slice()[1].re;
        assert!((x - (-2.0f64).exp()).abs() < 5.0 * se, "x {x} se {se}");
    }

    #[test]
    fn ensemble_is_independent_of_thread_count() {
        let me = MasterEquation::<f64>::pauli_constant(1.0, 1.0, 1.0, 1.0);
        let cfg = TrajectoryConfig::new(1e-2, 1.0, 300, 42);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    run_ensemble(&me, &TransformationStrategy::Zero, &plus(), &cfg, &policy())
                        .unwrap()
                })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
    }

    #[test]
    fn jump_log_is_reproducible() {
        let me = MasterEquation::<f64>::pauli_constant(1.0, 1.0, 1.0, 1.0);
        let cfg = TrajectoryConfig::new(1e-2, 2.0, 1, 7);
        let s = TransformationStrategy::Zero;
        let a = run_trajectory(&me, &s, &plus(), &cfg, 3, &policy()).unwrap();
        let b = run_trajectory(&me, &s, &plus(), &cfg, 3, &policy()).unwrap();
        let c = run_trajectory(&me, &s, &plus(), &cfg, 4, &policy()).unwrap();
        assert_eq!(a.jump_log, b.jump_log);
        assert_ne!(a.jump_log, c.jump_log);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrajectoryConfig::new(1e-3, 1.0, 10, 0);
        assert!(cfg.validate().is_ok());
        cfg.dt = -1.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 1e-3;
        cfg.n_traj = 0;
        assert!(cfg.validate().is_err());
        cfg.n_traj = 1;
        cfg.max_event_prob = 1.0;
        assert!(cfg.validate().is_err());
    }
}
