//! Engine B: a finite ensemble of trajectory classes with reverse jumps.
//!
//! The distribution over pure states is represented by classes
//! `(ψ_i, N_i)` with `Σ N_i = N` fixed. Each step runs three phases:
//!
//! 1. direct jumps: every member of class `ψ` jumps to `φ_{i,ψ}` with
//!    probability `λ⁺_{i,ψ} dt`;
//! 2. reverse jumps: for every negative rate `λ_{i,ψ'} < 0`, members of the
//!    class sitting at `φ_{i,ψ'}` jump back to `ψ'` with probability
//!    `(N_ψ' / N_φ) λ⁻_{i,ψ'} dt`;
//! 3. every class representative follows the deterministic drift.
//!
//! A negative rate toward a state that no populated class occupies cannot be
//! compensated; this is reported as a [`BreakdownEvent`].

use std::collections::HashMap;

use num_complex::{Complex, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use rayon::prelude::*;

use crate::error::{BreakdownEvent, Error, Result};
use crate::jump_mc::{drift_step, EnsembleEstimate, MomentAccumulator, TrajectoryConfig};
use crate::linalg::{CMatrix, CVector};
use crate::model::{MasterEquation, Snapshot};
use crate::policy::NumericPolicy;
use crate::rateop::{build_rate_operator, check_normalized, RateOperator, TransformationStrategy};
use crate::scalar::Scalar;

/// Steps an empty class is kept before it is dropped.
pub const RETENTION_STEPS: usize = 100;
/// Smallest ensemble accepted by [`run_nmqj`].
pub const MIN_MEMBERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleClass<T> {
    pub id: usize,
    pub representative: CVector<T>,
    pub count: u64,
    idle_steps: usize,
}

impl<T> EnsembleClass<T> {
    pub fn is_populated(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    classes: Vec<EnsembleClass<T>>,
    total: u64,
    next_id: usize,
}

impl<T: Scalar> Ensemble<T> {
    /// All `n` members in `psi0`.
    pub fn new(psi0: CVector<T>, n: u64) -> Result<Self> {
        Self::from_classes(vec![(psi0, n)])
    }

    /// Classes in the given order, with ids `0, 1, …`.
    pub fn from_classes(classes: Vec<(CVector<T>, u64)>) -> Result<Self> {
        let total: u64 = classes.iter().map(|(_, n)| n).sum();
        if total == 0 {
            return Err(Error::InvalidInput("ensemble has no members".into()));
        }
        let classes: Vec<_> = classes
            .into_iter()
            .enumerate()
            .map(|(id, (representative, count))| EnsembleClass {
                id,
                representative,
                count,
                idle_steps: 0,
            })
            .collect();
        let next_id = classes.len();
        Ok(Self {
            classes,
            total,
            next_id,
        })
    }

    pub fn classes(&self) -> &[EnsembleClass<T>] {
        &self.classes
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn populated(&self) -> usize {
        self.classes.iter().filter(|c| c.is_populated()).count()
    }

    /// `ρ = Σ_i (N_i / N) |ψ_i⟩⟨ψ_i|`.
    pub fn density(&self) -> CMatrix<T> {
        let d = self.classes[0].representative.dim();
        let mut rho = CMatrix::zeros(d);
        let n = T::lit(self.total as f64);
        for c in self.classes.iter().filter(|c| c.is_populated()) {
            let w = T::lit(c.count as f64) / n;
            rho.add_outer(
                Complex::new(w, T::zero()),
                &c.representative,
                &c.representative,
            );
        }
        rho
    }

    fn accumulate(&self, acc: &mut MomentAccumulator<T>, k: usize) {
        for c in self.classes.iter().filter(|c| c.is_populated()) {
            acc.add(k, &c.representative, T::lit(c.count as f64));
        }
    }

    /// Index of the first class projectively equal to `v`.
    fn find(&self, v: &CVector<T>, populated_only: bool, policy: &NumericPolicy) -> Option<usize> {
        let cut = T::one() - T::lit(policy.match_tol);
        self.classes.iter().position(|c| {
            (!populated_only || c.is_populated()) && c.representative.fidelity(v) >= cut
        })
    }
}

/// Rate operators of every populated class; `None` for empty classes.
pub fn class_rates<T: Scalar>(
    ensemble: &Ensemble<T>,
    snap: &Snapshot<T>,
    strategy: &TransformationStrategy<T>,
    policy: &NumericPolicy,
) -> Result<Vec<Option<RateOperator<T>>>> {
    ensemble
        .classes
        .par_iter()
        .map(|c| {
            if c.is_populated() {
                build_rate_operator(snap, &c.representative, strategy, policy).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// A negative non-self rate whose target no populated class occupies.
pub fn detect_breakdown<T: Scalar>(
    ensemble: &Ensemble<T>,
    rates: &[Option<RateOperator<T>>],
    time: T,
    step: usize,
    policy: &NumericPolicy,
) -> Option<BreakdownEvent> {
    let neg_tol = -T::lit(policy.rate_tol);
    for (class, r) in ensemble.classes.iter().zip(rates) {
        let Some(r) = r else { continue };
        for (i, (&l, target)) in r.eigenvalues().iter().zip(r.eigenvectors()).enumerate() {
            if r.self_jump[i] || !(l < neg_tol) {
                continue;
            }
            if ensemble.find(target, true, policy).is_none() {
                return Some(BreakdownEvent {
                    time: time.to_f64_lossy(),
                    step,
                    source_class: class.id,
                    eigenindex: i,
                    rate: l.to_f64_lossy(),
                    missing_target: target
                        .iter()
                        .map(|z| Complex64::new(z.re.to_f64_lossy(), z.im.to_f64_lossy()))
                        .collect(),
                });
            }
        }
    }
    None
}

/// What a member of a class may do in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Jump to eigenvector `eigenindex` of this class's rate operator.
    Direct { eigenindex: usize },
    /// Jump back to class index `source`, undoing its negative rate `eigenindex`.
    Reverse { source: usize, eigenindex: usize },
}

/// Per-member event probabilities, indexed like the ensemble classes.
pub type EventTable<T> = Vec<Vec<(Outcome, T)>>;

/// Builds the per-member probabilities of phases 1 and 2.
///
/// Must be called after [`detect_breakdown`] found nothing; a negative rate
/// without a populated target is reported as [`Error::Breakdown`] here too.
pub fn event_table<T: Scalar>(
    ensemble: &Ensemble<T>,
    rates: &[Option<RateOperator<T>>],
    time: T,
    step: usize,
    dt: T,
    max_event_prob: T,
    policy: &NumericPolicy,
) -> Result<EventTable<T>> {
    let mut table: EventTable<T> = vec![Vec::new(); ensemble.classes.len()];
    let rate_tol = T::lit(policy.rate_tol);
    for (c, r) in rates.iter().enumerate() {
        let Some(r) = r else { continue };
        for (i, &l) in r.lambda_plus.iter().enumerate() {
            if !r.self_jump[i] && l > T::zero() {
                table[c].push((Outcome::Direct { eigenindex: i }, l * dt));
            }
        }
    }
    for (s, r) in rates.iter().enumerate() {
        let Some(r) = r else { continue };
        let n_source = T::lit(ensemble.classes[s].count as f64);
        for (i, &l) in r.lambda_minus.iter().enumerate() {
            if r.self_jump[i] || !(l > rate_tol) {
                continue;
            }
            let Some(target) = ensemble.find(&r.eigenvectors()[i], true, policy) else {
                return Err(Error::Breakdown(Box::new(
                    detect_breakdown(ensemble, rates, time, step, policy)
                        .expect("unmatched negative rate"),
                )));
            };
            let n_target = T::lit(ensemble.classes[target].count as f64);
            table[target].push((
                Outcome::Reverse {
                    source: s,
                    eigenindex: i,
                },
                n_source / n_target * l * dt,
            ));
        }
    }
    for row in &table {
        let total = row.iter().fold(T::zero(), |acc, (_, p)| acc + *p);
        if total > max_event_prob {
            return Err(Error::StepTooLarge {
                time: time.to_f64_lossy(),
                what: if row
                    .iter()
                    .any(|(o, _)| matches!(o, Outcome::Reverse { .. }))
                {
                    "direct plus reverse jump probability"
                } else {
                    "jump probability"
                },
                value: total.to_f64_lossy(),
                bound: max_event_prob.to_f64_lossy(),
            });
        }
    }
    Ok(table)
}

/// Random stream for class `class_id` at `step`.
fn class_rng(seed: u64, step: usize, class_id: usize) -> ChaCha8Rng {
    debug_assert!(class_id < 1 << 24);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 24) | class_id as u64);
    rng
}

/// Samples how many members of each class take each outcome.
///
/// Per-member events within a class are mutually exclusive, so the counts
/// are multinomial; they are drawn as a chain of conditional binomials.
pub fn sample_counts<T: Scalar>(
    ensemble: &Ensemble<T>,
    table: &EventTable<T>,
    seed: u64,
    step: usize,
) -> Vec<Vec<u64>> {
    ensemble
        .classes
        .iter()
        .zip(table)
        .map(|(class, row)| {
            let mut rng = class_rng(seed, step, class.id);
            let mut remaining = class.count;
            let mut mass = 1.0f64;
            row.iter()
                .map(|(_, p)| {
                    let p = p.to_f64_lossy();
                    if remaining == 0 || p <= 0.0 {
                        mass -= p;
                        return 0;
                    }
                    let q = (p / mass).clamp(0.0, 1.0);
                    mass -= p;
                    let k = Binomial::new(remaining, q)
                        .expect("probability in [0, 1]")
                        .sample(&mut rng);
                    remaining -= k;
                    k
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub direct_jumps: u64,
    pub reverse_jumps: u64,
}

/// Advances the ensemble from `snap.time` by `dt`.
#[allow(clippy::too_many_arguments)]
pub fn step_ensemble<T: Scalar>(
    ensemble: &mut Ensemble<T>,
    snap: &Snapshot<T>,
    strategy: &TransformationStrategy<T>,
    dt: T,
    step: usize,
    seed: u64,
    max_event_prob: T,
    policy: &NumericPolicy,
) -> Result<StepStats> {
    let rates = class_rates(ensemble, snap, strategy, policy)?;
    step_with_rates(
        ensemble,
        &rates,
        snap,
        strategy,
        dt,
        step,
        seed,
        max_event_prob,
        policy,
    )
}

#[allow(clippy::too_many_arguments)]
fn step_with_rates<T: Scalar>(
    ensemble: &mut Ensemble<T>,
    rates: &[Option<RateOperator<T>>],
    snap: &Snapshot<T>,
    strategy: &TransformationStrategy<T>,
    dt: T,
    step: usize,
    seed: u64,
    max_event_prob: T,
    policy: &NumericPolicy,
) -> Result<StepStats> {
    let time = snap.time;
    if let Some(event) = detect_breakdown(ensemble, rates, time, step, policy) {
        return Err(Error::Breakdown(Box::new(event)));
    }
    let table = event_table(ensemble, rates, time, step, dt, max_event_prob, policy)?;
    let counts = sample_counts(ensemble, &table, seed, step);

    // phases 1 and 2: move members, all draws taken on the pre-step ensemble
    let mut stats = StepStats::default();
    let n_before = ensemble.classes.len();
    for c in 0..n_before {
        for (&(outcome, _), &k) in table[c].iter().zip(&counts[c]) {
            if k == 0 {
                continue;
            }
            let dest = match outcome {
                Outcome::Direct { eigenindex } => {
                    stats.direct_jumps += k;
                    let target =
                        &rates[c].as_ref().expect("populated class").eigenvectors()[eigenindex];
                    match ensemble.find(target, false, policy) {
                        Some(d) => d,
                        None => {
                            ensemble.classes.push(EnsembleClass {
                                id: ensemble.next_id,
                                representative: target.clone(),
                                count: 0,
                                idle_steps: 0,
                            });
                            ensemble.next_id += 1;
                            ensemble.classes.len() - 1
                        }
                    }
                }
                Outcome::Reverse { source, .. } => {
                    stats.reverse_jumps += k;
                    source
                }
            };
            ensemble.classes[c].count -= k;
            ensemble.classes[dest].count += k;
        }
    }

    // phase 3: deterministic drift of every representative
    let drifted: Vec<Result<CVector<T>>> = ensemble
        .classes
        .par_iter()
        .enumerate()
        .map(|(c, class)| {
            let phi = match rates.get(c).and_then(Option::as_ref) {
                Some(r) => r.phi.clone(),
                None => strategy.phi(snap, &class.representative)?,
            };
            drift_step(snap, &class.representative, &phi, dt)
        })
        .collect();
    for (class, next) in ensemble.classes.iter_mut().zip(drifted) {
        class.representative = next?;
    }

    merge_and_purge(ensemble, policy);
    debug_assert_eq!(
        ensemble.classes.iter().map(|c| c.count).sum::<u64>(),
        ensemble.total
    );
    Ok(stats)
}

/// Merges projectively equal classes into the earliest one and drops classes
/// that stayed empty for longer than [`RETENTION_STEPS`].
///
/// Candidates are bucketed on the projector entries `ρ_00`, `Re ρ_01`,
/// `Im ρ_01`: two states with fidelity `F` differ in each by at most
/// `sqrt(1 - F)`, so only neighbouring cells need the full fidelity test.
fn merge_and_purge<T: Scalar>(ensemble: &mut Ensemble<T>, policy: &NumericPolicy) {
    let cut = T::one() - T::lit(policy.match_tol);
    let cell = 2.0 * policy.match_tol.sqrt() + 1e-12;
    let classes = &mut ensemble.classes;
    let cells: Vec<[i64; 3]> = classes
        .iter()
        .map(|c| {
            let v = c.representative.as_slice();
            let c01 = v[0] * v[1].conj();
            [v[0].norm_sqr(), c01.re, c01.im].map(|f| (f.to_f64_lossy() / cell).floor() as i64)
        })
        .collect();
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, key) in cells.iter().enumerate() {
        grid.entry(*key).or_default().push(i);
    }
    let mut absorbed = vec![false; classes.len()];
    for i in 0..classes.len() {
        if absorbed[i] {
            continue;
        }
        let [a, b, c] = cells[i];
        let mut gained = 0;
        for key in (-1..=1)
            .flat_map(|x| (-1..=1).flat_map(move |y| (-1..=1).map(move |z| [a + x, b + y, c + z])))
        {
            let Some(members) = grid.get(&key) else {
                continue;
            };
            for &j in members {
                if j > i
                    && !absorbed[j]
                    && classes[i]
                        .representative
                        .fidelity(&classes[j].representative)
                        >= cut
                {
                    absorbed[j] = true;
                    gained += classes[j].count;
                }
            }
        }
        classes[i].count += gained;
    }
    let mut k = 0;
    classes.retain(|_| {
        k += 1;
        !absorbed[k - 1]
    });
    for c in classes.iter_mut() {
        c.idle_steps = if c.is_populated() {
            0
        } else {
            c.idle_steps + 1
        };
    }
    classes.retain(|c| c.idle_steps <= RETENTION_STEPS);
}

/// Weight `N_i / N` of one class at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeight<T> {
    pub class_id: usize,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmqjRun<T> {
    /// Ensemble estimate up to the last completed grid time.
    pub estimate: EnsembleEstimate<T>,
    /// Populated classes at each grid time.
    pub populations: Vec<Vec<ClassWeight<T>>>,
    /// Cumulative reverse jumps at each grid time.
    pub reverse_jumps: Vec<u64>,
    pub direct_jumps: u64,
    pub breakdown: Option<BreakdownEvent>,
}

impl<T> NmqjRun<T> {
    pub fn total_reverse_jumps(&self) -> u64 {
        self.reverse_jumps.last().copied().unwrap_or(0)
    }
}

/// Runs the reverse-jump ensemble with `config.n_traj` members.
pub fn run_nmqj<T: Scalar>(
    me: &MasterEquation<T>,
    strategy: &TransformationStrategy<T>,
    psi0: &CVector<T>,
    config: &TrajectoryConfig<T>,
    policy: &NumericPolicy,
) -> Result<NmqjRun<T>> {
    run_nmqj_observed(me, strategy, psi0, config, policy, |_, _| {})
}

/// [`run_nmqj`] with a callback seeing the ensemble at every grid time.
pub fn run_nmqj_observed<T: Scalar>(
    me: &MasterEquation<T>,
    strategy: &TransformationStrategy<T>,
    psi0: &CVector<T>,
    config: &TrajectoryConfig<T>,
    policy: &NumericPolicy,
    mut observe: impl FnMut(T, &Ensemble<T>),
) -> Result<NmqjRun<T>> {
    config.validate()?;
    if config.n_traj < MIN_MEMBERS {
        return Err(Error::InvalidInput(format!(
            "the ensemble needs at least {MIN_MEMBERS} members, got {}",
            config.n_traj
        )));
    }
    if psi0.dim() != me.dim() {
        return Err(Error::DimensionMismatch {
            expected: me.dim(),
            found: psi0.dim(),
        });
    }
    check_normalized(psi0, policy)?;
    let grid = config.grid()?;
    let mut ensemble = Ensemble::new(psi0.clone(), config.n_traj as u64)?;
    let mut acc = MomentAccumulator::new(me.dim(), grid.len());
    let mut populations = Vec::with_capacity(grid.len());
    let mut reverse_jumps = Vec::with_capacity(grid.len());
    let mut reverse_total = 0u64;
    let mut direct_total = 0u64;
    let mut breakdown = None;
    let mut completed = grid.len();

    let n = T::lit(config.n_traj as f64);
    for k in 0..grid.len() {
        let t = grid[k];
        ensemble.accumulate(&mut acc, k);
        populations.push(
            ensemble
                .classes
                .iter()
                .filter(|c| c.is_populated())
                .map(|c| ClassWeight {
                    class_id: c.id,
                    weight: T::lit(c.count as f64) / n,
                })
                .collect(),
        );
        reverse_jumps.push(reverse_total);
        observe(t, &ensemble);
        if k + 1 == grid.len() {
            break;
        }
        let snap = me.at(t);
        let dt = grid[k + 1] - t;
        match step_ensemble(
            &mut ensemble,
            &snap,
            strategy,
            dt,
            k,
            config.seed,
            config.max_event_prob,
            policy,
        ) {
            Ok(stats) => {
                reverse_total += stats.reverse_jumps;
                direct_total += stats.direct_jumps;
            }
            Err(Error::Breakdown(event)) => {
                breakdown = Some(*event);
                completed = k + 1;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let estimate = if completed < grid.len() {
        acc.truncate(completed);
        acc.finish(grid[..completed].to_vec())?
    } else {
        acc.finish(grid)?
    };
    Ok(NmqjRun {
        estimate,
        populations,
        reverse_jumps,
        direct_jumps: direct_total,
        breakdown,
    })
}
