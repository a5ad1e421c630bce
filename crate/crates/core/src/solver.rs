//! Preconditioned SDMM over a sum of proximable terms, and the reweighted
//! outer loop that turns it into a separation method.
//!
//! With terms `f_i(L_i s)`, one iteration reads
//!
//! ```text
//! y_i <- prox_{gamma f_i}(L_i s + z_i)
//! z_i' <- z_i + L_i s - y_i
//! s   <- s - tau / (gamma I) * sum_i L_i^*(2 z_i' - z_i)
//! ```
//!
//! For separation the terms are the weighted analysis ℓ1 norm (`L = Id`),
//! the data-fidelity ball around the mixture (`L = A`) and, optionally, the
//! spectrogram rank constraint (`L = Id`).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::config_err;
use crate::frame::{stft, StftConfig};
use crate::mixing::{FilterBank, MixingOperator};
use crate::prox::{
    prox_weighted_l1_analysis, project_l2_ball, project_rank_constraint_set, weighted_l1_norm,
    RankBudget, WeightMatrix,
};
use crate::signal::MultichannelSignal;
use crate::{Error, Result};

/// Step size selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    /// `0.9 * gamma / ||K||^2_est`
    Auto,
    Fixed(f64),
}

/// Floor `tau_w` in the weight update `1 / (|c| + tau_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFloor {
    /// Fraction of the largest coefficient magnitude after the first round,
    /// computed once.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Radius of the data-fidelity ball.
    pub eps: f64,
    pub rank: RankBudget,
    pub rank_enabled: bool,
    pub gamma: f64,
    pub tau: Tau,
    pub max_inner_iters: usize,
    pub inner_tol: f64,
    pub reweight_rounds: usize,
    pub reweight_floor: WeightFloor,
    pub reweight_enabled: bool,
    /// Seeds the power iteration that estimates `||A||`.
    pub seed: u64,
    pub norm_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            rank: RankBudget::new(10).expect("nonzero"),
            rank_enabled: true,
            gamma: 1.0,
            tau: Tau::Auto,
            max_inner_iters: 500,
            inner_tol: 1e-5,
            reweight_rounds: 5,
            reweight_floor: WeightFloor::Relative(1e-3),
            reweight_enabled: true,
            seed: 0,
            norm_iterations: 100,
        }
    }
}

impl SolverConfig {
    /// Reweighted analysis ℓ1 without the rank constraint.
    pub fn ssra() -> Self {
        Self {
            rank_enabled: false,
            ..Self::default()
        }
    }

    pub fn sslr(rank: usize) -> Result<Self> {
        Ok(Self {
            rank: RankBudget::new(rank)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(config_err!("eps must be positive, got {}", self.eps));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(config_err!("gamma must be positive, got {}", self.gamma));
        }
        if let Tau::Fixed(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_err!("tau must be positive, got {t}"));
            }
        }
        if !(self.inner_tol > 0.0) {
            return Err(config_err!("inner tolerance must be positive"));
        }
        if self.reweight_rounds == 0 {
            return Err(config_err!("at least one reweighting round is required"));
        }
        match self.reweight_floor {
            WeightFloor::Relative(f) | WeightFloor::Absolute(f) if !(f > 0.0 && f.is_finite()) => {
                return Err(config_err!("reweight floor must be positive, got {f}"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Number of terms in the splitting.
    pub fn num_terms(&self) -> usize {
        if self.rank_enabled {
            3
        } else {
            2
        }
    }
}

/// Safety factor applied to the power-iteration estimate of `||A||`.
pub const NORM_SAFETY: f64 = 1.01;

/// Relative singular-value threshold used for the rank-excess diagnostic.
pub const RANK_DIAGNOSTIC_TOL: f64 = 1e-3;

/// Monotonic millisecond clock. The core has no time source of its own.
pub trait Clock {
    fn elapsed_ms(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `||x - A(s)||`
    pub residual: f64,
    /// `||s Psi||_{W,1}`
    pub objective: f64,
    pub s_change: f64,
    /// `max_n (rank(|Phi(s_n)|) - r)^+`, `None` when the rank term is off.
    pub rank_excess: Option<usize>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationDiagnostics {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub tau: f64,
}

impl IterationDiagnostics {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// One term `f_i(L_i s)` of the splitting.
pub trait ProxTerm {
    /// `L_i(s)`
    fn apply(&self, s: &MultichannelSignal) -> Result<MultichannelSignal>;
    /// `L_i^*(v)`
    fn apply_adjoint(&self, v: &MultichannelSignal) -> Result<MultichannelSignal>;
    /// `prox_{gamma f_i}(v)`
    fn prox(&self, v: &MultichannelSignal, gamma: f64) -> Result<MultichannelSignal>;
}

/// Iterates of [`Psdmm`].
#[derive(Debug, Clone)]
pub struct SolverState {
    pub s: MultichannelSignal,
    pub z: Vec<MultichannelSignal>,
    pub y: Vec<MultichannelSignal>,
    /// `L_i(s)` for the current `s`.
    pub ls: Vec<MultichannelSignal>,
    pub iter: usize,
}

/// Preconditioned SDMM engine over an arbitrary list of terms.
pub struct Psdmm<'a> {
    terms: Vec<&'a dyn ProxTerm>,
    gamma: f64,
    tau: f64,
}

impl<'a> Psdmm<'a> {
    pub fn new(terms: Vec<&'a dyn ProxTerm>, gamma: f64, tau: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(config_err!("PSDMM needs at least one term"));
        }
        if !(gamma > 0.0 && tau > 0.0) {
            return Err(config_err!("gamma and tau must be positive"));
        }
        Ok(Self { terms, gamma, tau })
    }

    /// Zero duals, `y_i = L_i(s0)`.
    pub fn init(&self, s0: &MultichannelSignal) -> Result<SolverState> {
        let ls = self
            .terms
            .iter()
            .map(|t| t.apply(s0))
            .collect::<Result<Vec<_>>>()?;
        let z = ls
            .iter()
            .map(|l| MultichannelSignal::zeros(l.num_channels(), l.num_samples(), l.sample_rate()))
            .collect();
        Ok(SolverState {
            s: s0.clone(),
            z,
            y: ls.clone(),
            ls,
            iter: 0,
        })
    }

    /// One iteration. Returns the relative change of `s`.
    pub fn step(&self, state: &mut SolverState) -> Result<f64> {
        let count = self.terms.len() as f64;
        let mut grad: Option<MultichannelSignal> = None;
        for (i, term) in self.terms.iter().enumerate() {
            let mut v = state.ls[i].clone();
            v.axpy(1.0, &state.z[i]);
            let y = term.prox(&v, self.gamma)?;
            // z' = z + L s - y ; dual direction 2 z' - z = z + 2 (L s - y)
            let mut z_new = state.z[i].clone();
            z_new.axpy(1.0, &state.ls[i]);
            z_new.axpy(-1.0, &y);
            let mut dir = z_new.scaled(2.0);
            dir.axpy(-1.0, &state.z[i]);
            let back = term.apply_adjoint(&dir)?;
            match grad.as_mut() {
                Some(g) => g.axpy(1.0, &back),
                None => grad = Some(back),
            }
            state.z[i] = z_new;
            state.y[i] = y;
        }
        let grad = grad.expect("at least one term");
        let mut s_new = state.s.clone();
        s_new.axpy(-self.tau / (self.gamma * count), &grad);
        let change = s_new.distance(&state.s) / state.s.norm().max(1e-12);
        state.iter += 1;
        if !s_new.is_finite() {
            state.s = s_new;
            return Err(Error::NonFinite("primal iterate".into()));
        }
        for (i, term) in self.terms.iter().enumerate() {
            state.ls[i] = term.apply(&s_new)?;
        }
        state.s = s_new;
        Ok(change)
    }
}

/// `f_1(s) = ||s Psi||_{W,1}`.
pub struct SparsityTerm<'a> {
    pub weights: &'a WeightMatrix,
    pub frame: &'a StftConfig,
}

impl ProxTerm for SparsityTerm<'_> {
    fn apply(&self, s: &MultichannelSignal) -> Result<MultichannelSignal> {
        Ok(s.clone())
    }

    fn apply_adjoint(&self, v: &MultichannelSignal) -> Result<MultichannelSignal> {
        Ok(v.clone())
    }

    fn prox(&self, v: &MultichannelSignal, gamma: f64) -> Result<MultichannelSignal> {
        prox_weighted_l1_analysis(v, self.weights, gamma, self.frame)
    }
}

/// `f_2(A s)`: indicator of the `eps`-ball around the mixture.
pub struct FidelityTerm<'a> {
    pub operator: &'a MixingOperator,
    pub mixture: &'a MultichannelSignal,
    pub eps: f64,
}

impl ProxTerm for FidelityTerm<'_> {
    fn apply(&self, s: &MultichannelSignal) -> Result<MultichannelSignal> {
        self.operator.forward(s)
    }

    fn apply_adjoint(&self, v: &MultichannelSignal) -> Result<MultichannelSignal> {
        self.operator.adjoint(v)
    }

    fn prox(&self, v: &MultichannelSignal, _gamma: f64) -> Result<MultichannelSignal> {
        project_l2_ball(v, self.mixture, self.eps)
    }
}

/// `f_3(s)`: indicator of sources whose spectrograms have rank `<= r`.
pub struct RankTerm<'a> {
    pub rank: RankBudget,
    pub frame: &'a StftConfig,
}

impl ProxTerm for RankTerm<'_> {
    fn apply(&self, s: &MultichannelSignal) -> Result<MultichannelSignal> {
        Ok(s.clone())
    }

    fn apply_adjoint(&self, v: &MultichannelSignal) -> Result<MultichannelSignal> {
        Ok(v.clone())
    }

    fn prox(&self, v: &MultichannelSignal, _gamma: f64) -> Result<MultichannelSignal> {
        project_rank_constraint_set(v, self.rank, self.frame)
    }
}

/// Optional instrumentation for a solve.
pub struct SolveHooks<'a> {
    pub clock: &'a dyn Clock,
    pub observer: Option<&'a mut dyn FnMut(&SolverState)>,
}

impl Default for SolveHooks<'_> {
    fn default() -> Self {
        Self {
            clock: &NoClock,
            observer: None,
        }
    }
}

/// Mixture, mixing operator and frame shared by every inner solve.
#[derive(Debug, Clone)]
pub struct SeparationProblem {
    mixture: MultichannelSignal,
    operator: MixingOperator,
    frame: StftConfig,
    norm_estimate: f64,
}

impl SeparationProblem {
    pub fn new(
        mixture: &MultichannelSignal,
        filters: &FilterBank,
        frame: &StftConfig,
        norm_iterations: usize,
        seed: u64,
    ) -> Result<Self> {
        if mixture.num_channels() != filters.num_out() {
            return Err(crate::error::shape_err!(
                "mixture has {} channels, filter bank has {} outputs",
                mixture.num_channels(),
                filters.num_out()
            ));
        }
        if mixture.num_samples() != frame.signal_len() {
            return Err(config_err!(
                "mixture has {} samples, frame configured for {}",
                mixture.num_samples(),
                frame.signal_len()
            ));
        }
        let operator = MixingOperator::new(filters, mixture.num_samples());
        let norm_estimate = operator.norm_estimate(norm_iterations.max(1), seed);
        Ok(Self {
            mixture: mixture.clone(),
            operator,
            frame: frame.clone(),
            norm_estimate,
        })
    }

    pub fn mixture(&self) -> &MultichannelSignal {
        &self.mixture
    }

    pub fn operator(&self) -> &MixingOperator {
        &self.operator
    }

    pub fn frame(&self) -> &StftConfig {
        &self.frame
    }

    pub fn num_sources(&self) -> usize {
        self.operator.num_sources()
    }

    /// Power-iteration estimate of `||A||`, without safety factor.
    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate
    }

    /// Bound on `||K||^2 <= ||L_1||^2 + ||L_2||^2 + ||L_3||^2 = 2 + ||A||^2`.
    pub fn k_norm_sq(&self) -> f64 {
        let a = NORM_SAFETY * self.norm_estimate;
        2.0 + a * a
    }

    pub fn step_size(&self, cfg: &SolverConfig) -> Result<f64> {
        let bound = cfg.gamma / self.k_norm_sq();
        match cfg.tau {
            Tau::Auto => Ok(0.9 * bound),
            Tau::Fixed(t) if t < bound => Ok(t),
            Tau::Fixed(t) => Err(config_err!(
                "tau = {t} violates tau < gamma / ||K||^2 = {bound}"
            )),
        }
    }

    /// `A^*(x) / max(1, ||A||^2_est)`.
    pub fn matched_filter(&self) -> Result<MultichannelSignal> {
        let mut s0 = self.operator.adjoint(&self.mixture)?;
        let scale = (self.norm_estimate * self.norm_estimate).max(1.0);
        s0.scale(1.0 / scale);
        Ok(s0)
    }

    fn check_sources(&self, s: &MultichannelSignal, what: &str) -> Result<()> {
        if s.num_channels() != self.num_sources() || s.num_samples() != self.mixture.num_samples()
        {
            return Err(crate::error::shape_err!(
                "{what} is {} x {}, expected {} x {}",
                s.num_channels(),
                s.num_samples(),
                self.num_sources(),
                self.mixture.num_samples()
            ));
        }
        Ok(())
    }

    /// Runs PSDMM on the weighted problem from `s0`.
    pub fn solve(
        &self,
        weights: &WeightMatrix,
        cfg: &SolverConfig,
        s0: &MultichannelSignal,
        hooks: &mut SolveHooks<'_>,
    ) -> Result<(MultichannelSignal, IterationDiagnostics)> {
        cfg.validate()?;
        self.check_sources(s0, "initial estimate")?;
        if weights.num_sources() != self.num_sources()
            || weights.coeffs_per_source() != self.frame.num_coeffs()
        {
            return Err(crate::error::shape_err!(
                "weights are {} x {}, expected {} x {}",
                weights.num_sources(),
                weights.coeffs_per_source(),
                self.num_sources(),
                self.frame.num_coeffs()
            ));
        }
        if cfg.rank_enabled {
            cfg.rank.check_frame(&self.frame)?;
        }
        let tau = self.step_size(cfg)?;

        let sparsity = SparsityTerm {
            weights,
            frame: &self.frame,
        };
        let fidelity = FidelityTerm {
            operator: &self.operator,
            mixture: &self.mixture,
            eps: cfg.eps,
        };
        let rank = RankTerm {
            rank: cfg.rank,
            frame: &self.frame,
        };
        let mut terms: Vec<&dyn ProxTerm> = vec![&sparsity, &fidelity];
        if cfg.rank_enabled {
            terms.push(&rank);
        }
        let engine = Psdmm::new(terms, cfg.gamma, tau)?;
        let mut state = engine.init(s0)?;
        let mut diagnostics = IterationDiagnostics {
            tau,
            ..Default::default()
        };
        let start_ms = hooks.clock.elapsed_ms();
        for _ in 0..cfg.max_inner_iters {
            let change = match engine.step(&mut state) {
                Ok(c) => c,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence {
                        iteration: state.iter,
                        diagnostics,
                    })
                }
                Err(e) => return Err(e),
            };
            if let Some(obs) = hooks.observer.as_mut() {
                obs(&state);
            }
            let record = self.record(&state, weights, cfg, change, hooks.clock.elapsed_ms() - start_ms)?;
            diagnostics.records.push(record);
            if change < cfg.inner_tol {
                diagnostics.converged = true;
                break;
            }
        }
        Ok((state.s, diagnostics))
    }

    fn record(
        &self,
        state: &SolverState,
        weights: &WeightMatrix,
        cfg: &SolverConfig,
        s_change: f64,
        wall_ms: f64,
    ) -> Result<IterationRecord> {
        // ls[1] = A(s) for the current iterate
        let residual = state.ls[1].distance(&self.mixture);
        let tf = stft(&state.s, &self.frame)?;
        let objective = weighted_l1_norm(&tf, weights);
        let rank_excess = cfg.rank_enabled.then(|| {
            (0..tf.num_sources())
                .map(|n| {
                    let sv = crate::prox::folded_singular_values(
                        tf.source(n),
                        tf.num_frames(),
                        tf.num_bins(),
                    );
                    let top = sv.iter().copied().fold(0.0, f64::max);
                    let rank = sv.iter().filter(|v| **v > RANK_DIAGNOSTIC_TOL * top).count();
                    rank.saturating_sub(cfg.rank.get())
                })
                .max()
                .unwrap_or(0)
        });
        Ok(IterationRecord {
            iter: state.iter,
            residual,
            objective,
            s_change,
            rank_excess,
            wall_ms,
        })
    }
}

/// Single PSDMM solve of the weighted problem.
pub fn psdmm_solve(
    x: &MultichannelSignal,
    filters: &FilterBank,
    w: &WeightMatrix,
    cfg: &SolverConfig,
    stft_cfg: &StftConfig,
    s0: &MultichannelSignal,
) -> Result<(MultichannelSignal, IterationDiagnostics)> {
    let problem = SeparationProblem::new(x, filters, stft_cfg, cfg.norm_iterations, cfg.seed)?;
    problem.solve(w, cfg, s0, &mut SolveHooks::default())
}

/// `w_ij = 1 / (|(s Psi)_ij| + floor)`.
pub fn weight_update(
    s: &MultichannelSignal,
    stft_cfg: &StftConfig,
    floor: f64,
) -> Result<WeightMatrix> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(config_err!("weight floor must be positive, got {floor}"));
    }
    let tf = stft(s, stft_cfg)?;
    WeightMatrix::new(
        s.num_channels(),
        stft_cfg.num_coeffs(),
        tf.as_slice().iter().map(|c| 1.0 / (c.norm() + floor)).collect(),
    )
}

/// Diagnostics of one reweighting round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDiagnostics {
    pub round: usize,
    /// Floor used to build the weights of this round (`None` for the
    /// uniform first round).
    pub weight_floor: Option<f64>,
    /// Objective of the warm start under this round's weights.
    pub start_objective: f64,
    /// Objective of the round's solution under this round's weights.
    pub final_objective: f64,
    pub iterations: IterationDiagnostics,
    pub estimate: MultichannelSignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub estimates: MultichannelSignal,
    pub rounds: Vec<RoundDiagnostics>,
    pub solver_config: SolverConfig,
    pub stft_config: StftConfig,
    /// Estimate of `||A||` used for the step size.
    pub norm_estimate: f64,
    pub sdr_per_source: Option<Vec<f64>>,
}

impl SeparationResult {
    pub fn total_iterations(&self) -> usize {
        self.rounds.iter().map(|r| r.iterations.iterations()).sum()
    }
}

/// Reweighted separation. With `rank_enabled = false` this is the plain
/// reweighted analysis ℓ1 method.
pub fn sslr_separate(
    x: &MultichannelSignal,
    filters: &FilterBank,
    cfg: &SolverConfig,
    stft_cfg: &StftConfig,
) -> Result<SeparationResult> {
    sslr_separate_with(x, filters, cfg, stft_cfg, &NoClock)
}

pub fn sslr_separate_with(
    x: &MultichannelSignal,
    filters: &FilterBank,
    cfg: &SolverConfig,
    stft_cfg: &StftConfig,
    clock: &dyn Clock,
) -> Result<SeparationResult> {
    cfg.validate()?;
    let problem = SeparationProblem::new(x, filters, stft_cfg, cfg.norm_iterations, cfg.seed)?;
    let s0 = problem.matched_filter()?;
    sslr_from(&problem, cfg, s0, clock)
}

/// Reweighting loop on a prepared problem, starting from `s0`.
pub fn sslr_from(
    problem: &SeparationProblem,
    cfg: &SolverConfig,
    s0: MultichannelSignal,
    clock: &dyn Clock,
) -> Result<SeparationResult> {
    cfg.validate()?;
    let frame = problem.frame();
    let n = problem.num_sources();
    let rounds = if cfg.reweight_enabled {
        cfg.reweight_rounds
    } else {
        1
    };
    let mut weights = WeightMatrix::uniform(n, frame.num_coeffs(), 1.0)?;
    let mut floor: Option<f64> = None;
    let mut s = s0;
    let mut history = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let start_objective = weighted_l1_norm(&stft(&s, frame)?, &weights);
        let mut hooks = SolveHooks {
            clock,
            observer: None,
        };
        let (estimate, iterations) = problem.solve(&weights, cfg, &s, &mut hooks)?;
        let final_objective = weighted_l1_norm(&stft(&estimate, frame)?, &weights);
        history.push(RoundDiagnostics {
            round,
            weight_floor: floor,
            start_objective,
            final_objective,
            iterations,
            estimate: estimate.clone(),
        });
        s = estimate;
        if round + 1 < rounds {
            let f = *floor.get_or_insert_with(|| match cfg.reweight_floor {
                WeightFloor::Absolute(a) => a,
                WeightFloor::Relative(rel) => {
                    let peak = stft(&s, frame)
                        .map(|tf| tf.as_slice().iter().map(|c| c.norm()).fold(0.0, f64::max))
                        .unwrap_or(0.0);
                    if peak > 0.0 {
                        rel * peak
                    } else {
                        rel
                    }
                }
            });
            weights = weight_update(&s, frame, f)?;
        }
    }
    Ok(SeparationResult {
        estimates: s,
        rounds: history,
        solver_config: cfg.clone(),
        stft_config: frame.clone(),
        norm_estimate: problem.norm_estimate(),
        sdr_per_source: None,
    })
}
