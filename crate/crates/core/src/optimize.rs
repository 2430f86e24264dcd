//! Minimization of the worst-case objective over nodal potentials.
//!
//! The design variable is a nodal potential `V ∈ [0, M]`, constrained by
//! the smooth volume surrogate `∫ e^{-αV} ≤ m`. Internally the optimizers
//! work with the normalized variable `x = V / M ∈ [0, 1]`, the objective
//! scaled by its magnitude at the initial design, and the constraint
//! scaled by `|D|`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::field::ScalarField;
use crate::state::{check_delta, check_exponent, StateConfig, StateSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Method of moving asymptotes, one constraint, dual solved by bisection.
    Mma,
    /// Projected gradient with a bisection on the constraint multiplier.
    ProjectedGradient,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Mma => "mma",
            OptimizerKind::ProjectedGradient => "projected-gradient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mma" => Some(OptimizerKind::Mma),
            "projected-gradient" | "pg" => Some(OptimizerKind::ProjectedGradient),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    /// Upper bound `M` on the potential.
    pub upper_bound: f64,
    pub alpha: f64,
    /// Volume bound `m`.
    pub volume_fraction: f64,
    pub max_outer_iter: usize,
    /// Largest change of `V / M` per step.
    pub move_limit: f64,
    pub kkt_tol: f64,
    /// Relative objective change below which a step counts as stalled.
    pub objective_tol: f64,
    /// Consecutive stalled steps needed to stop.
    pub stall_window: usize,
    pub kind: OptimizerKind,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            upper_bound: 1000.0,
            alpha: 0.01,
            volume_fraction: 0.3,
            max_outer_iter: 400,
            move_limit: 0.1,
            kkt_tol: 1e-4,
            objective_tol: 1e-7,
            stall_window: 5,
            kind: OptimizerKind::Mma,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self, area: f64) -> Result<()> {
        if !(self.upper_bound > 0.0 && self.upper_bound.is_finite()) {
            return Err(Error::validation("M", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("alpha", "must be positive"));
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= area) {
            return Err(Error::validation("m", format!("must lie in (0, |D|] = (0, {area}]")));
        }
        if (-self.alpha * self.upper_bound).exp() * area > self.volume_fraction {
            return Err(Error::validation("m", "infeasible: even V = M everywhere exceeds the volume bound"));
        }
        if self.max_outer_iter == 0 {
            return Err(Error::validation("max_iter", "must be positive"));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::validation("move_limit", "must lie in (0, 1]"));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::validation("kkt_tol", "must be positive"));
        }
        if !(self.objective_tol >= 0.0) {
            return Err(Error::validation("objective_tol", "must be nonnegative"));
        }
        if self.stall_window == 0 {
            return Err(Error::validation("stall_window", "must be positive"));
        }
        Ok(())
    }

    /// Uniform potential for which the volume constraint is exactly active.
    pub fn initial_potential(&self, area: f64) -> f64 {
        ((area / self.volume_fraction).ln() / self.alpha).clamp(0.0, self.upper_bound)
    }
}

/// Everything the optimizer needs besides its own settings.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub space: FemSpace,
    pub source: ScalarField,
    pub delta: f64,
    pub p: f64,
    pub state: StateConfig,
}

impl DesignProblem {
    pub fn new(space: FemSpace, source: ScalarField, delta: f64, p: f64, state: StateConfig) -> Result<Self> {
        space.check(&source)?;
        check_delta(delta)?;
        check_exponent(p)?;
        state.validate()?;
        Ok(Self {
            space,
            source,
            delta,
            p,
            state,
        })
    }

    pub fn solve_state(&self, potential: &ScalarField) -> Result<StateSolution> {
        self.space
            .solve_worstcase_state(potential, &self.source, self.delta, self.p, &self.state)
    }

    pub fn objective(&self, state: &StateSolution) -> f64 {
        self.space.objective_at(&self.source, &state.u, self.delta, self.p)
    }
}

/// `∫ e^{-αV}` with lumped quadrature.
pub fn volume(space: &FemSpace, potential: &[f64], alpha: f64) -> f64 {
    space
        .weights()
        .iter()
        .zip(potential)
        .map(|(w, v)| w * (-alpha * v).exp())
        .sum()
}

/// `∂F/∂V_i = w_i u_i²`, from the envelope theorem applied to `F = 2 min J`.
///
/// `delta` does not enter the formula: the norm term is part of `J` and
/// drops out at the minimizer.
pub fn objective_gradient(
    space: &FemSpace,
    potential: &ScalarField,
    state: &StateSolution,
    _delta: f64,
) -> Result<ScalarField> {
    space.check(potential)?;
    space.check(&state.u)?;
    if !state.converged {
        return Err(Error::StateNotConverged { iteration: 0 });
    }
    Ok(ScalarField::new(
        space
            .weights()
            .iter()
            .zip(state.u.iter())
            .map(|(w, u)| w * u * u)
            .collect(),
    ))
}

/// `∂/∂V_i ∫e^{-αV} = −α w_i e^{-αV_i}`.
pub fn constraint_gradient(space: &FemSpace, potential: &[f64], alpha: f64) -> ScalarField {
    ScalarField::new(
        space
            .weights()
            .iter()
            .zip(potential)
            .map(|(w, v)| -alpha * w * (-alpha * v).exp())
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Kkt,
    ObjectiveStall,
    IterationCap,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Kkt => "kkt",
            Termination::ObjectiveStall => "objective-stall",
            Termination::IterationCap => "iteration-cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub volume: f64,
    pub kkt: f64,
    pub state_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub potential: ScalarField,
    pub state: ScalarField,
    pub objective_history: Vec<f64>,
    /// `∫e^{-αV} − m` per iterate.
    pub constraint_history: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl OptimizationResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap()
    }

    pub fn constraint(&self) -> f64 {
        *self.constraint_history.last().unwrap()
    }
}

/// Scaled problem data at one design.
struct Evaluation {
    x: Vec<f64>,
    state: StateSolution,
    objective: f64,
    volume: f64,
    /// Gradients with respect to `x` of the scaled objective and constraint.
    grad_obj: Vec<f64>,
    grad_con: Vec<f64>,
}

struct Scaled<'a> {
    problem: &'a DesignProblem,
    cfg: &'a OptimizationConfig,
    area: f64,
    obj_scale: f64,
    /// `w_i / |D|`
    rel_weights: Vec<f64>,
}

impl Scaled<'_> {
    fn potential(&self, x: &[f64]) -> ScalarField {
        ScalarField::new(x.iter().map(|&x| x * self.cfg.upper_bound).collect())
    }

    fn volume(&self, x: &[f64]) -> f64 {
        let m = self.cfg.upper_bound;
        let a = self.cfg.alpha;
        self.problem
            .space
            .weights()
            .iter()
            .zip(x)
            .map(|(w, x)| w * (-a * m * x).exp())
            .sum()
    }

    fn evaluate(&self, x: Vec<f64>, iteration: usize) -> Result<Evaluation> {
        let potential = self.potential(&x);
        let state = self.problem.solve_state(&potential)?;
        if !state.converged {
            return Err(Error::StateNotConverged { iteration });
        }
        let objective = self.problem.objective(&state);
        let m = self.cfg.upper_bound;
        let space = &self.problem.space;
        let grad_obj = objective_gradient(space, &potential, &state, self.problem.delta)?
            .iter()
            .map(|g| g * m / self.obj_scale)
            .collect();
        let grad_con = constraint_gradient(space, &potential, self.cfg.alpha)
            .iter()
            .map(|g| g * m / self.area)
            .collect();
        let volume = self.volume(&x);
        Ok(Evaluation {
            x,
            state,
            objective,
            volume,
            grad_obj,
            grad_con,
        })
    }

    /// Scaled constraint value `(vol − m) / |D|`.
    fn constraint(&self, volume: f64) -> f64 {
        (volume - self.cfg.volume_fraction) / self.area
    }

    /// Projected-gradient KKT residual in the per-weight (function space)
    /// metric, with the multiplier fitted on the free variables.
    fn kkt(&self, ev: &Evaluation) -> f64 {
        let d0: Vec<f64> = ev.grad_obj.iter().zip(&self.rel_weights).map(|(g, w)| g / w).collect();
        let d1: Vec<f64> = ev.grad_con.iter().zip(&self.rel_weights).map(|(g, w)| g / w).collect();
        let free = |x: f64| x > 1e-6 && x < 1.0 - 1e-6;
        let (mut num, mut den) = (0.0, 0.0);
        for ((&x, a), b) in ev.x.iter().zip(&d0).zip(&d1) {
            if free(x) {
                num -= a * b;
                den += b * b;
            }
        }
        let lambda = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        let stationarity = ev
            .x
            .iter()
            .zip(d0.iter().zip(&d1))
            .map(|(&x, (a, b))| (x - (x - (a + lambda * b)).clamp(0.0, 1.0)).abs())
            .fold(0.0, f64::max);
        let g = self.constraint(ev.volume);
        stationarity.max(g.max(0.0)).max((lambda * g).abs())
    }

    /// Uniform upward shift of `x` (clamped to the box) that brings the
    /// volume back down to `m` when a step overshoots it.
    fn restore_feasibility(&self, x: &mut [f64]) {
        let target = self.cfg.volume_fraction;
        if self.volume(x) <= target {
            return;
        }
        let shifted = |t: f64| -> Vec<f64> { x.iter().map(|&v| (v + t).clamp(0.0, 1.0)).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.volume(&shifted(mid)) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x.copy_from_slice(&shifted(hi));
    }
}

/// Runs the configured optimizer from the uniform feasible start.
pub fn optimize(problem: &DesignProblem, cfg: &OptimizationConfig) -> Result<OptimizationResult> {
    optimize_with_observer(problem, cfg, |_| {})
}

/// Like [`optimize`], calling `observer` with every history row as soon as
/// it is produced.
pub fn optimize_with_observer(
    problem: &DesignProblem,
    cfg: &OptimizationConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<OptimizationResult> {
    let area = problem.space.area();
    cfg.validate(area)?;
    if problem.source.iter().any(|&f| f < 0.0) {
        return Err(Error::validation("source", "the optimizer requires a nonnegative source"));
    }
    let n = problem.space.node_count();
    let x0 = vec![cfg.initial_potential(area) / cfg.upper_bound; n];

    let mut scaled = Scaled {
        problem,
        cfg,
        area,
        obj_scale: 1.0,
        rel_weights: problem.space.weights().iter().map(|w| w / area).collect(),
    };
    let mut current = scaled.evaluate(x0, 0)?;
    scaled.obj_scale = current.objective.abs().max(f64::MIN_POSITIVE);
    current = scaled.evaluate(current.x, 0)?;

    let mut records = Vec::new();
    let mut objective_history = Vec::new();
    let mut constraint_history = Vec::new();
    let mut push = |ev: &Evaluation, iteration: usize, kkt: f64, records: &mut Vec<IterationRecord>| {
        let rec = IterationRecord {
            iteration,
            objective: ev.objective,
            volume: ev.volume,
            kkt,
            state_iterations: ev.state.iterations,
        };
        observer(&rec);
        records.push(rec);
        objective_history.push(ev.objective);
        constraint_history.push(ev.volume - cfg.volume_fraction);
    };
    let kkt0 = scaled.kkt(&current);
    push(&current, 0, kkt0, &mut records);

    let mut mma = MmaState::new(n);
    let mut step = None;
    let mut stalled = 0;
    let mut termination = Termination::IterationCap;
    let mut converged = false;
    let mut iterations = 0;

    if kkt0 <= cfg.kkt_tol {
        termination = Termination::Kkt;
        converged = true;
    } else {
        for k in 1..=cfg.max_outer_iter {
            let next = match cfg.kind {
                OptimizerKind::Mma => {
                    let mut x = mma.step(&scaled, &current, cfg.move_limit);
                    scaled.restore_feasibility(&mut x);
                    scaled.evaluate(x, k)?
                }
                OptimizerKind::ProjectedGradient => projected_gradient_step(&scaled, &current, &mut step, k)?,
            };
            debug_assert!(next.x.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let kkt = scaled.kkt(&next);
            let change = (next.objective - current.objective).abs();
            current = next;
            iterations = k;
            push(&current, k, kkt, &mut records);

            if kkt <= cfg.kkt_tol {
                termination = Termination::Kkt;
                converged = true;
                break;
            }
            if change <= cfg.objective_tol * current.objective.abs() {
                stalled += 1;
                if stalled >= cfg.stall_window {
                    termination = Termination::ObjectiveStall;
                    converged = true;
                    break;
                }
            } else {
                stalled = 0;
            }
        }
    }

    let potential = scaled.potential(&current.x);
    Ok(OptimizationResult {
        potential,
        state: current.state.u,
        objective_history,
        constraint_history,
        records,
        iterations,
        converged,
        termination,
    })
}

/// Iteration history of the method of moving asymptotes.
struct MmaState {
    iteration: usize,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
}

const ASY_INIT: f64 = 0.5;
const ASY_DECR: f64 = 0.7;
const ASY_INCR: f64 = 1.2;
const ALBE_FACTOR: f64 = 0.1;
const RAA0: f64 = 1e-5;

impl MmaState {
    fn new(n: usize) -> Self {
        Self {
            iteration: 0,
            low: vec![0.0; n],
            upp: vec![1.0; n],
            xold1: vec![0.0; n],
            xold2: vec![0.0; n],
        }
    }

    /// One MMA update on `[0, 1]^n` for one objective and one inequality
    /// constraint. The dual of the convex separable subproblem is a
    /// one-dimensional concave maximization; its optimality condition is
    /// found by bisection on the multiplier.
    fn step(&mut self, scaled: &Scaled<'_>, ev: &Evaluation, move_limit: f64) -> Vec<f64> {
        self.iteration += 1;
        let x = &ev.x;
        let n = x.len();
        let range = 1.0;

        if self.iteration <= 2 {
            for j in 0..n {
                self.low[j] = x[j] - ASY_INIT * range;
                self.upp[j] = x[j] + ASY_INIT * range;
            }
        } else {
            for j in 0..n {
                let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if trend < 0.0 {
                    ASY_DECR
                } else if trend > 0.0 {
                    ASY_INCR
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                self.upp[j] = upp.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
            }
        }

        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        let mut q1 = vec![0.0; n];
        let mut r1 = scaled.constraint(ev.volume);
        for j in 0..n {
            let (l, u) = (self.low[j], self.upp[j]);
            lower[j] = 0f64
                .max(l + ALBE_FACTOR * (x[j] - l))
                .max(x[j] - move_limit * range);
            upper[j] = 1f64
                .min(u - ALBE_FACTOR * (u - x[j]))
                .min(x[j] + move_limit * range);
            let (ux, xl) = ((u - x[j]).powi(2), (x[j] - l).powi(2));
            let approx = |g: f64| {
                let reg = RAA0 / range;
                let plus = 1.001 * g.max(0.0) + 0.001 * (-g).max(0.0) + reg;
                let minus = 0.001 * g.max(0.0) + 1.001 * (-g).max(0.0) + reg;
                (ux * plus, xl * minus)
            };
            (p0[j], q0[j]) = approx(ev.grad_obj[j]);
            (p1[j], q1[j]) = approx(ev.grad_con[j]);
            r1 -= p1[j] / (u - x[j]) + q1[j] / (x[j] - l);
        }

        let primal = |lambda: f64| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let sp = (p0[j] + lambda * p1[j]).sqrt();
                    let sq = (q0[j] + lambda * q1[j]).sqrt();
                    let xj = (sp * self.low[j] + sq * self.upp[j]) / (sp + sq);
                    xj.clamp(lower[j], upper[j])
                })
                .collect()
        };
        let approx_con = |y: &[f64]| -> f64 {
            r1 + (0..n)
                .map(|j| p1[j] / (self.upp[j] - y[j]) + q1[j] / (y[j] - self.low[j]))
                .sum::<f64>()
        };

        let mut y = primal(0.0);
        if approx_con(&y) > 0.0 {
            let mut hi = 1.0;
            while approx_con(&primal(hi)) > 0.0 && hi < 1e16 {
                hi *= 4.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if approx_con(&primal(mid)) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            y = primal(hi);
        }

        self.xold2 = std::mem::replace(&mut self.xold1, x.clone());
        y
    }
}

const MAX_HALVINGS: usize = 40;

/// One projected-gradient step with backtracking. The step length carries
/// over between calls and grows after every accepted step.
fn projected_gradient_step(
    scaled: &Scaled<'_>,
    current: &Evaluation,
    step: &mut Option<f64>,
    iteration: usize,
) -> Result<Evaluation> {
    let d0: Vec<f64> = current
        .grad_obj
        .iter()
        .zip(&scaled.rel_weights)
        .map(|(g, w)| g / w)
        .collect();
    let d1: Vec<f64> = current
        .grad_con
        .iter()
        .zip(&scaled.rel_weights)
        .map(|(g, w)| g / w)
        .collect();
    let move_limit = scaled.cfg.move_limit;
    let dmax = d0.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
    let mut s = step.unwrap_or(move_limit / dmax);

    let target = scaled.cfg.volume_fraction;
    let candidate = |s: f64, lambda: f64| -> Vec<f64> {
        current
            .x
            .iter()
            .zip(d0.iter().zip(&d1))
            .map(|(&x, (a, b))| {
                let mv = (s * (a + lambda * b)).clamp(-move_limit, move_limit);
                (x - mv).clamp(0.0, 1.0)
            })
            .collect()
    };

    for _ in 0..MAX_HALVINGS {
        let mut x = candidate(s, 0.0);
        if scaled.volume(&x) > target {
            // Volume decreases monotonically in the multiplier.
            let mut hi = 1.0;
            while scaled.volume(&candidate(s, hi)) > target && hi < 1e16 {
                hi *= 4.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if scaled.volume(&candidate(s, mid)) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            x = candidate(s, hi);
            scaled.restore_feasibility(&mut x);
        }
        let next = scaled.evaluate(x, iteration)?;
        if next.objective < current.objective {
            *step = Some(s * 1.5);
            return Ok(next);
        }
        s *= 0.5;
    }
    Err(Error::Stalled {
        iteration,
        reason: "no descent step found".into(),
    })
}

#[derive(Debug, Clone)]
pub struct GradientCheckRow {
    pub node: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub step: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub rows: Vec<GradientCheckRow>,
    pub max_relative_error: f64,
}

/// Compares the envelope gradient with central differences of the
/// objective, re-solving the nonlinear state at `V ± ε e_i`.
///
/// For each node the step is picked from `steps` where successive
/// difference quotients agree best, without looking at the analytic value.
pub fn gradient_check(
    problem: &DesignProblem,
    potential: &ScalarField,
    node_count: usize,
    steps: &[f64],
    seed: u64,
) -> Result<GradientCheck> {
    let space = &problem.space;
    let interior: Vec<usize> = (0..space.node_count())
        .filter(|&k| !space.mesh().is_boundary(k))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, interior.len(), node_count.min(interior.len()));

    let state = problem.solve_state(potential)?;
    let grad = objective_gradient(space, potential, &state, problem.delta)?;

    let objective_at = |v: &ScalarField| -> Result<f64> {
        let st = problem.solve_state(v)?.into_converged()?;
        Ok(problem.objective(&st))
    };

    let mut rows = Vec::new();
    for pick in picks.iter() {
        let node = interior[pick];
        let mut quotients = Vec::with_capacity(steps.len());
        for &eps in steps {
            let mut plus = potential.clone();
            plus[node] += eps;
            let mut minus = potential.clone();
            minus[node] = (minus[node] - eps).max(0.0);
            let width = plus[node] - minus[node];
            quotients.push((objective_at(&plus)? - objective_at(&minus)?) / width);
        }
        let (best, _) = (0..steps.len())
            .map(|i| {
                let spread = if steps.len() == 1 {
                    0.0
                } else if i + 1 < steps.len() {
                    (quotients[i] - quotients[i + 1]).abs()
                } else {
                    (quotients[i] - quotients[i - 1]).abs()
                };
                (i, spread)
            })
            .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
        let fd = quotients[best];
        let analytic = grad[node];
        rows.push(GradientCheckRow {
            node,
            analytic,
            finite_difference: fd,
            step: steps[best],
            relative_error: (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE),
        });
    }
    let max_relative_error = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Ok(GradientCheck {
        rows,
        max_relative_error,
    })
}
