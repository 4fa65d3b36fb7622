//! Nonmonotone accelerated projected gradient (APG) solver for joint AP
//! selection and power control, plus the post-processing that turns the
//! soft solution into a binary association and power coefficients.
//!
//! One inner loop runs, for `o = 1, 2, ...`:
//!
//! ```text
//! ϑ̄  = ϑ + (q_prev/q)(ϑ̃ - ϑ) + ((q_prev - 1)/q)(ϑ - ϑ_prev)
//! ϑ̃' = P(ϑ̄ - α̅ ∇g(ϑ̄))
//! accept ϑ̃' if g(ϑ̃') <= c - ζ ||ϑ̃' - ϑ̄||², otherwise
//!     ϑ̂' = P(ϑ - α ∇g(ϑ)) and keep the better of ϑ̃', ϑ̂'
//! q' = (1 + sqrt(4q² + 1))/2,  b' = ζ b + 1,  c' = (ζ b c + g(ϑ'))/b'
//! ```
//!
//! Outer rounds multiply the penalty multiplier X by ς until the penalty
//! bracket vanishes.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::netgen::{seeded_rng, stream};
use crate::penalty::{evaluate, grad_g, Evaluation, PenaltyConfig, SolverVars};
use crate::project::{project_theta, project_z};
use crate::sinr::{Allocation, Scenario, SeReport};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub penalty: PenaltyConfig,
    /// Step size for the extrapolated point; `None` estimates 1/(2J).
    pub step_extrapolated: Option<f64>,
    /// Step size for the correction step; `None` estimates 1/(2J).
    pub step_correction: Option<f64>,
    /// Random feasible pairs used to estimate the gradient Lipschitz constant.
    pub lipschitz_samples: usize,
    /// Nonmonotonicity ζ in [0, 1).
    pub nonmonotone: f64,
    /// Relative-change stopping tolerance ε.
    pub tol: f64,
    pub max_iters: usize,
    pub outer_rounds: usize,
    /// Outer loop stops once the penalty bracket drops below this.
    pub bracket_tol: f64,
    /// `z² >= threshold` rounds an association to 1.
    pub round_threshold: f64,
    /// Halve both step sizes whenever a correction step fails to decrease g.
    pub backtrack: bool,
    /// Per-user QoS shortfall tolerated before flagging infeasibility.
    pub qos_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyConfig::default(),
            step_extrapolated: None,
            step_correction: None,
            lipschitz_samples: 100,
            nonmonotone: 0.5,
            tol: 1e-5,
            max_iters: 5000,
            outer_rounds: 10,
            bracket_tol: 1e-6,
            round_threshold: 0.5,
            backtrack: true,
            qos_tol: 1e-3,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, entities: usize) -> Result<()> {
        self.penalty.validate(entities)?;
        if !(0.0..1.0).contains(&self.nonmonotone) {
            return Err(Error::Config(format!(
                "nonmonotone must lie in [0, 1), got {}",
                self.nonmonotone
            )));
        }
        for s in [self.step_extrapolated, self.step_correction]
            .into_iter()
            .flatten()
        {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "step sizes must be positive, got {s}"
                )));
            }
        }
        if self.max_iters == 0 || self.outer_rounds == 0 {
            return Err(Error::Config(
                "max_iters and outer_rounds must be positive".into(),
            ));
        }
        if self.lipschitz_samples == 0
            && (self.step_extrapolated.is_none() || self.step_correction.is_none())
        {
            return Err(Error::Config(
                "lipschitz_samples must be positive when a step size is estimated".into(),
            ));
        }
        if !(self.round_threshold > 0.0 && self.round_threshold <= 1.0) {
            return Err(Error::Config("round_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// What the solver optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Soft associations and powers together.
    Joint,
    /// Association frozen; only powers of associated links move.
    PowerOnly(Array2<bool>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Accelerated,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub outer_round: usize,
    pub iteration: usize,
    pub multiplier: f64,
    /// g at the accepted iterate.
    pub g: f64,
    pub weighted_se: f64,
    pub bracket: f64,
    pub step: StepKind,
    /// g at the projected extrapolated point.
    pub g_tilde: f64,
    /// c - ζ ||ϑ̃ - ϑ̄||², the acceptance threshold for the accelerated step.
    pub threshold: f64,
    pub rel_change_g: Option<f64>,
    pub rel_change_f: Option<f64>,
}

pub fn update_q(q: f64) -> f64 {
    (1.0 + (4.0 * q * q + 1.0).sqrt()) / 2.0
}

/// Running nonmonotone average: returns `(c_next, b_next)`.
pub fn update_cb(c: f64, b: f64, g_val: f64, zeta: f64) -> (f64, f64) {
    let b_next = zeta * b + 1.0;
    ((zeta * b * c + g_val) / b_next, b_next)
}

const HISTORY: usize = 11;

#[derive(Debug, Clone)]
pub struct ApgState {
    pub vars: SolverVars,
    pub vars_prev: SolverVars,
    pub vars_tilde: SolverVars,
    pub vars_bar: SolverVars,
    pub q_prev: f64,
    pub q: f64,
    pub b: f64,
    pub c: f64,
    pub o: usize,
    pub eval: Evaluation,
    /// g of the last accepted iterates, newest last.
    pub history: VecDeque<f64>,
    pub f_history: VecDeque<f64>,
}

impl ApgState {
    pub fn new(vars: SolverVars, eval: Evaluation) -> Self {
        let mut history = VecDeque::with_capacity(HISTORY);
        history.push_back(eval.g);
        let mut f_history = VecDeque::with_capacity(HISTORY);
        f_history.push_back(eval.weighted_se);
        Self {
            vars_prev: vars.clone(),
            vars_tilde: vars.clone(),
            vars_bar: vars.clone(),
            vars,
            q_prev: 0.0,
            q: 1.0,
            b: 1.0,
            c: eval.g,
            o: 1,
            eval,
            history,
            f_history,
        }
    }
}

pub fn extrapolate(state: &ApgState) -> SolverVars {
    let a = state.q_prev / state.q;
    let m = (state.q_prev - 1.0) / state.q;
    let toward_tilde = state.vars_tilde.sub(&state.vars);
    let momentum = state.vars.sub(&state.vars_prev);
    state
        .vars
        .add_scaled(a, &toward_tilde)
        .add_scaled(m, &momentum)
}

/// Objective, gradient and projection for one solve, with the mode applied.
struct Problem<'a> {
    sc: &'a Scenario,
    cfg: PenaltyConfig,
    antennas: usize,
    k_max: usize,
    frozen: Option<&'a Array2<bool>>,
}

impl Problem<'_> {
    fn eval(&self, v: &SolverVars) -> Evaluation {
        evaluate(self.sc, v, &self.cfg)
    }

    fn grad(&self, v: &SolverVars) -> SolverVars {
        let mut g = grad_g(self.sc, v, &self.cfg);
        if let Some(mask) = self.frozen {
            g.z.fill(0.0);
            for (t, &on) in g.theta.iter_mut().zip(mask.iter()) {
                if !on {
                    *t = 0.0;
                }
            }
        }
        g
    }

    fn project(&self, v: &SolverVars) -> SolverVars {
        let mut out = v.clone();
        match self.frozen {
            Some(mask) => {
                for (t, &on) in out.theta.iter_mut().zip(mask.iter()) {
                    if !on {
                        *t = 0.0;
                    }
                }
                project_theta(&mut out, self.antennas);
                out.z = mask.mapv(|a| if a { 1.0 } else { 0.0 });
            }
            None => {
                project_theta(&mut out, self.antennas);
                project_z(&mut out, self.k_max);
            }
        }
        out
    }

    fn random_feasible<R: Rng>(&self, rng: &mut R) -> SolverVars {
        let (n, e) = (self.sc.n_aps(), self.sc.entities());
        let mut v = SolverVars::zeros(n, e);
        v.theta.mapv_inplace(|_| rng.gen::<f64>());
        // Random radius so samples fill the ball, not just its surface.
        let l = self.antennas as f64;
        for mut row in v.theta.rows_mut() {
            let norm = row.iter().map(|t| t * t).sum::<f64>().sqrt();
            let target = rng.gen::<f64>() / l.sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|t| t * target / norm);
            }
        }
        v.z.mapv_inplace(|_| rng.gen::<f64>());
        self.project(&v)
    }
}

/// Largest observed `||∇g(v) - ∇g(w)|| / ||v - w||` over random feasible pairs.
fn estimate_lipschitz(pb: &Problem<'_>, samples: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed, stream::LIPSCHITZ);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let v = pb.random_feasible(&mut rng);
        let w = pb.random_feasible(&mut rng);
        let d = v.dist_sq(&w).sqrt();
        if d <= 0.0 {
            continue;
        }
        let gd = pb.grad(&v).dist_sq(&pb.grad(&w)).sqrt();
        if gd.is_finite() {
            best = best.max(gd / d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Steps {
    extrapolated: f64,
    correction: f64,
}

fn non_finite(iteration: usize, what: &'static str, trace: &[TraceEntry]) -> Error {
    Error::NonFinite {
        iteration,
        what,
        trace: trace.to_vec(),
    }
}

/// One APG iteration. Returns the trace entry describing it.
fn apg_iterate(
    pb: &Problem<'_>,
    state: &mut ApgState,
    steps: &mut Steps,
    cfg: &SolverConfig,
    backtrack_floor: f64,
    trace: &[TraceEntry],
) -> Result<(StepKind, Evaluation, f64)> {
    let zeta = cfg.nonmonotone;
    let bar = extrapolate(state);
    let grad_bar = pb.grad(&bar);
    if !grad_bar.is_finite() {
        return Err(non_finite(state.o, "gradient at extrapolated point", trace));
    }
    let tilde = pb.project(&bar.add_scaled(-steps.extrapolated, &grad_bar));
    let eval_tilde = pb.eval(&tilde);
    if !eval_tilde.g.is_finite() {
        return Err(non_finite(state.o, "objective at extrapolated step", trace));
    }
    let threshold = state.c - zeta * tilde.dist_sq(&bar);

    let (kind, next, eval_next) = if eval_tilde.g <= threshold {
        (StepKind::Accelerated, tilde.clone(), eval_tilde)
    } else {
        let grad_x = pb.grad(&state.vars);
        if !grad_x.is_finite() {
            return Err(non_finite(state.o, "gradient at iterate", trace));
        }
        let g_x = state.eval.g;
        let (hat, eval_hat) = loop {
            let hat = pb.project(&state.vars.add_scaled(-steps.correction, &grad_x));
            let eval_hat = pb.eval(&hat);
            if !eval_hat.g.is_finite() {
                return Err(non_finite(state.o, "objective at correction step", trace));
            }
            if !cfg.backtrack || eval_hat.g <= g_x {
                break (hat, eval_hat);
            }
            if steps.correction <= backtrack_floor {
                // Numerically stationary: stay put.
                break (state.vars.clone(), state.eval);
            }
            steps.correction *= 0.5;
            steps.extrapolated *= 0.5;
        };
        if eval_tilde.g <= eval_hat.g {
            (StepKind::Corrected, tilde.clone(), eval_tilde)
        } else {
            (StepKind::Corrected, hat, eval_hat)
        }
    };

    state.vars_bar = bar;
    state.vars_prev = std::mem::replace(&mut state.vars, next);
    state.vars_tilde = tilde;
    state.eval = eval_next;
    state.q_prev = state.q;
    state.q = update_q(state.q);
    let (c, b) = update_cb(state.c, state.b, eval_next.g, zeta);
    state.c = c;
    state.b = b;
    state.o += 1;
    state.history.push_back(eval_next.g);
    if state.history.len() > HISTORY {
        state.history.pop_front();
    }
    state.f_history.push_back(eval_next.weighted_se);
    if state.f_history.len() > HISTORY {
        state.f_history.pop_front();
    }
    Ok((kind, eval_tilde, threshold))
}

fn rel_change(now: f64, then: f64) -> f64 {
    let scale = now.abs();
    if scale > 0.0 {
        (now - then).abs() / scale
    } else {
        (now - then).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    /// 1 - normalized load, per AP.
    pub power_slack: Vec<f64>,
    /// SE minus its floor, per receiver.
    pub qos_slack: Vec<f64>,
    pub uncovered: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub alloc: Allocation,
    pub report: SeReport,
    pub vars: SolverVars,
    pub converged: bool,
    pub qos_infeasible: bool,
    pub outer_rounds: usize,
    pub iters: usize,
    pub trace: Vec<TraceEntry>,
    pub feasibility: Feasibility,
    /// Links associated with zero estimation variance; their power is forced to 0.
    pub degenerate_links: Vec<(usize, usize)>,
    /// APs whose coefficients were rescaled after rounding.
    pub rescaled_aps: Vec<usize>,
}

impl SolveResult {
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_trace_csv(&self.trace, writer)
    }
}

pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "outer_round",
        "iteration",
        "multiplier",
        "g",
        "weighted_se",
        "bracket",
        "step",
        "g_tilde",
        "threshold",
        "rel_change_g",
        "rel_change_f",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in trace {
        w.write_record([
            t.outer_round.to_string(),
            t.iteration.to_string(),
            t.multiplier.to_string(),
            t.g.to_string(),
            t.weighted_se.to_string(),
            t.bracket.to_string(),
            match t.step {
                StepKind::Accelerated => "accelerated".into(),
                StepKind::Corrected => "corrected".into(),
            },
            t.g_tilde.to_string(),
            t.threshold.to_string(),
            opt(t.rel_change_g),
            opt(t.rel_change_f),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the solver and post-processes the soft solution.
pub fn solve(sc: &Scenario, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_with_mode(sc, cfg, &Mode::Joint)
}

pub fn solve_with_mode(sc: &Scenario, cfg: &SolverConfig, mode: &Mode) -> Result<SolveResult> {
    let entities = sc.entities();
    cfg.validate(entities)?;
    let n = sc.n_aps();
    let frozen = match mode {
        Mode::Joint => None,
        Mode::PowerOnly(mask) => {
            if mask.dim() != (n, entities) {
                return Err(Error::Config(format!(
                    "frozen association is {:?}, expected ({n}, {entities})",
                    mask.dim()
                )));
            }
            Some(mask)
        }
    };
    let mut pb = Problem {
        sc,
        cfg: cfg.penalty.clone(),
        antennas: sc.link.antennas,
        k_max: cfg.penalty.k_max(entities),
        frozen,
    };

    let mut rng = seeded_rng(cfg.seed, stream::SOLVER_INIT);
    let mut init = SolverVars::zeros(n, entities);
    init.theta.mapv_inplace(|_| rng.gen::<f64>());
    init.z.fill(1.0);
    let mut vars = pb.project(&init);

    let mut trace = Vec::new();
    let mut total_iters = 0;
    let mut converged = false;
    let mut rounds = 0;
    for round in 0..cfg.outer_rounds {
        rounds = round + 1;
        pb.cfg.multiplier = cfg.penalty.multiplier * cfg.penalty.varsigma.powi(round as i32);
        let lipschitz = if cfg.step_extrapolated.is_none() || cfg.step_correction.is_none() {
            estimate_lipschitz(
                &pb,
                cfg.lipschitz_samples,
                cfg.seed.wrapping_add(round as u64),
            )
        } else {
            0.0
        };
        let auto = if lipschitz > 0.0 {
            0.5 / lipschitz
        } else {
            1.0
        };
        let mut steps = Steps {
            extrapolated: cfg.step_extrapolated.unwrap_or(auto),
            correction: cfg.step_correction.unwrap_or(auto),
        };
        let floor = steps.correction * 1e-12;

        let eval0 = pb.eval(&vars);
        if !eval0.g.is_finite() {
            return Err(non_finite(total_iters, "objective at round start", &trace));
        }
        let mut state = ApgState::new(vars.clone(), eval0);
        let mut round_converged = false;
        for _ in 0..cfg.max_iters {
            let (kind, eval_tilde, threshold) =
                apg_iterate(&pb, &mut state, &mut steps, cfg, floor, &trace)?;
            total_iters += 1;
            let h = &state.history;
            let rel_g = (h.len() == HISTORY).then(|| rel_change(h[HISTORY - 1], h[0]));
            let f = &state.f_history;
            let rel_f = (f.len() == HISTORY).then(|| rel_change(f[HISTORY - 1], f[HISTORY - 2]));
            trace.push(TraceEntry {
                outer_round: round,
                iteration: state.o - 1,
                multiplier: pb.cfg.multiplier,
                g: state.eval.g,
                weighted_se: state.eval.weighted_se,
                bracket: state.eval.bracket(&pb.cfg),
                step: kind,
                g_tilde: eval_tilde.g,
                threshold,
                rel_change_g: rel_g,
                rel_change_f: rel_f,
            });
            if rel_g.is_some_and(|r| r <= cfg.tol) || rel_f.is_some_and(|r| r <= cfg.tol) {
                round_converged = true;
                break;
            }
        }
        vars = state.vars;
        converged = round_converged;
        if state.eval.bracket(&pb.cfg) < cfg.bracket_tol {
            break;
        }
    }

    let assoc = match frozen {
        Some(mask) => mask.clone(),
        None => round_association(&vars.z, cfg.round_threshold, pb.k_max),
    };
    let recovered = recover_power(sc, &vars.theta, &assoc);
    let alloc = recovered.alloc;
    let w = &cfg.penalty;
    let report = sc.se_report(&alloc, w.w1, w.w2);
    let qos_slack: Vec<f64> = report
        .se_uni
        .iter()
        .map(|s| s - w.se_qos_uni)
        .chain(report.se_multi.iter().flatten().map(|s| s - w.se_qos_multi))
        .collect();
    let feasibility = Feasibility {
        power_slack: alloc.ap_load(sc).iter().map(|l| 1.0 - l).collect(),
        qos_slack,
        uncovered: alloc.uncovered(),
    };
    let qos_infeasible = feasibility.qos_slack.iter().any(|s| *s < -cfg.qos_tol);
    Ok(SolveResult {
        alloc,
        report,
        vars,
        converged,
        qos_infeasible,
        outer_rounds: rounds,
        iters: total_iters,
        trace,
        feasibility,
        degenerate_links: recovered.degenerate,
        rescaled_aps: recovered.rescaled,
    })
}

/// Binary association from soft indicators: `a = 1` iff `z² >= threshold`.
/// APs over the `k_max` cap keep their largest indicators; a stream left
/// without any AP is then given its largest-z AP among those below the cap
/// (lowest index on ties), or among all APs if none has room.
pub fn round_association(z: &Array2<f64>, threshold: f64, k_max: usize) -> Array2<bool> {
    let (n, e_count) = z.dim();
    let mut a = z.mapv(|v| v * v >= threshold);
    if n == 0 {
        return a;
    }
    for ap in 0..n {
        let mut on: Vec<usize> = (0..e_count).filter(|&e| a[[ap, e]]).collect();
        if on.len() > k_max {
            on.sort_by(|&x, &y| z[[ap, y]].total_cmp(&z[[ap, x]]).then(x.cmp(&y)));
            for &e in &on[k_max..] {
                a[[ap, e]] = false;
            }
        }
    }
    for e in 0..e_count {
        if (0..n).any(|ap| a[[ap, e]]) {
            continue;
        }
        let spare: Vec<usize> = (0..n)
            .filter(|&ap| a.row(ap).iter().filter(|&&x| x).count() < k_max)
            .collect();
        let pool = if spare.is_empty() {
            (0..n).collect()
        } else {
            spare
        };
        let mut best = pool[0];
        for &ap in &pool[1..] {
            if z[[ap, e]] > z[[best, e]] {
                best = ap;
            }
        }
        a[[best, e]] = true;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPower {
    pub alloc: Allocation,
    pub degenerate: Vec<(usize, usize)>,
    pub rescaled: Vec<usize>,
}

/// Power coefficients `eta = θ²/γ` (`θ̄²/ζ` for groups), zero where
/// unassociated. APs whose masked load exceeds the budget are scaled back
/// uniformly onto it.
pub fn recover_power(sc: &Scenario, theta: &Array2<f64>, assoc: &Array2<bool>) -> RecoveredPower {
    let (n, e_count) = theta.dim();
    let mut eta = Array2::zeros((n, e_count));
    let mut degenerate = Vec::new();
    for ap in 0..n {
        for e in 0..e_count {
            if !assoc[[ap, e]] {
                continue;
            }
            let t = theta[[ap, e]];
            let s = sc.stat(ap, e);
            if s > 0.0 {
                eta[[ap, e]] = t * t / s;
            } else if t > 0.0 {
                degenerate.push((ap, e));
            }
        }
    }
    let mut alloc = Allocation {
        assoc: assoc.clone(),
        eta,
    };
    let mut rescaled = Vec::new();
    for (ap, load) in alloc.ap_load(sc).into_iter().enumerate() {
        if load > 1.0 {
            alloc.eta.row_mut(ap).mapv_inplace(|v| v / load);
            rescaled.push(ap);
        }
    }
    RecoveredPower {
        alloc,
        degenerate,
        rescaled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanstats::EstimationStats;
    use crate::netgen::{NetworkConfig, NetworkRealization};
    use crate::sinr::{LinkParams, MulticastGain};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn scalar_state(theta: f64, tilde: f64, prev: f64, q_prev: f64, q: f64) -> ApgState {
        let v = |x: f64| SolverVars {
            theta: array![[x]],
            z: array![[x]],
        };
        let eval = Evaluation {
            g: 0.0,
            weighted_se: 0.0,
            qos: 0.0,
            binary: 0.0,
            coupling: 0.0,
        };
        let mut s = ApgState::new(v(theta), eval);
        s.vars_tilde = v(tilde);
        s.vars_prev = v(prev);
        s.q_prev = q_prev;
        s.q = q;
        s
    }

    #[test]
    fn extrapolation_examples() {
        let s = scalar_state(0.3, 0.3, 0.3, 0.0, 1.0);
        assert_eq!(extrapolate(&s).theta[[0, 0]], 0.3);
        let s = scalar_state(0.7, 0.7, 0.7, 4.0, 5.0);
        assert_relative_eq!(extrapolate(&s).theta[[0, 0]], 0.7, max_relative = 1e-15);
        let s = scalar_state(0.0, 1.0, 0.0, 1.0, 1.618);
        assert_relative_eq!(
            extrapolate(&s).theta[[0, 0]],
            1.0 / 1.618,
            max_relative = 1e-12
        );
    }

    #[test]
    fn q_and_cb_recurrences() {
        assert_relative_eq!(update_q(1.0), (1.0 + 5f64.sqrt()) / 2.0);
        assert_eq!(update_q(0.0), 1.0);
        let q = update_q(1.618);
        assert_relative_eq!(q, 2.193_494_6, max_relative = 1e-7);
        assert!((q - 2.1938).abs() < 5e-4);
        assert_eq!(update_cb(10.0, 3.0, 2.0, 0.0), (2.0, 1.0));
        let (c, b) = update_cb(10.0, 1.0, 2.0, 0.5);
        assert_eq!(b, 1.5);
        assert_relative_eq!(c, 7.0 / 1.5);
        let (c, _) = update_cb(4.0, 50.0, 4.0, 0.999);
        assert_relative_eq!(c, 4.0, max_relative = 1e-15);
    }

    fn one_link(beta: f64, antennas: usize) -> Scenario {
        let real = NetworkRealization::from_gains(array![[beta]], vec![]).unwrap();
        let stats = EstimationStats::compute(&real, 10.0);
        let link = LinkParams {
            p_dl: 100.0,
            antennas,
            coherence: 200,
            pilot_len: 1,
        };
        Scenario::new(real, stats, link, MulticastGain::Exact).unwrap()
    }

    fn no_qos() -> SolverConfig {
        let mut cfg = SolverConfig::default();
        cfg.penalty.w1 = 1.0;
        cfg.penalty.w2 = 0.0;
        cfg.penalty.se_qos_uni = 0.0;
        cfg.penalty.se_qos_multi = 0.0;
        cfg
    }

    #[test]
    fn single_link_full_power() {
        let sc = one_link(0.5, 4);
        let res = solve(&sc, &no_qos()).unwrap();
        let want = 1.0 / (4.0 * sc.stats.gamma[[0, 0]]);
        assert_relative_eq!(res.alloc.eta[[0, 0]], want, max_relative = 1e-3);
        // 1-D grid over the feasible amplitude confirms the boundary optimum.
        let best = (0..=1000)
            .map(|i| {
                let t = 0.5 * i as f64 / 1000.0;
                (
                    t,
                    sc.se_report_theta(array![[t]].view(), 1.0, 0.0)
                        .sse_weighted,
                )
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(best.0, 0.5);
        assert!(res.converged);
    }

    #[test]
    fn multicast_off_when_unweighted() {
        for seed in 0..5 {
            let net = NetworkConfig {
                n_aps: 5,
                antennas: 2,
                unicast_users: 2,
                group_sizes: vec![2],
                area_m: 200.0,
                seed,
                ..NetworkConfig::default()
            };
            let sc = Scenario::from_config(&net, MulticastGain::Exact).unwrap();
            let mut cfg = no_qos();
            cfg.seed = seed;
            let res = solve(&sc, &cfg).unwrap();
            for ap in 0..5 {
                let share = sc.link.antennas as f64 * res.alloc.eta[[ap, 2]] * sc.stat(ap, 2);
                assert!(share <= 1e-3, "seed {seed} ap {ap} share {share}");
            }
        }
    }

    fn small_scenario(seed: u64) -> Scenario {
        let net = NetworkConfig {
            n_aps: 8,
            antennas: 2,
            unicast_users: 3,
            group_sizes: vec![2, 3],
            seed,
            ..NetworkConfig::default()
        };
        Scenario::from_config(&net, MulticastGain::Exact).unwrap()
    }

    #[test]
    fn deterministic() {
        let sc = small_scenario(4);
        let cfg = SolverConfig {
            seed: 11,
            ..SolverConfig::default()
        };
        let a = solve(&sc, &cfg).unwrap();
        let b = solve(&sc, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.alloc, b.alloc);
    }

    #[test]
    fn acceptance_and_monotone_trace() {
        let sc = small_scenario(2);
        let cfg = SolverConfig {
            nonmonotone: 0.0,
            ..SolverConfig::default()
        };
        let res = solve(&sc, &cfg).unwrap();
        assert!(!res.trace.is_empty());
        for t in &res.trace {
            if t.step == StepKind::Accelerated {
                assert!(t.g_tilde <= t.threshold);
            }
        }
        for w in res.trace.windows(2) {
            if w[0].outer_round == w[1].outer_round {
                assert!(w[1].g <= w[0].g, "{} -> {}", w[0].g, w[1].g);
            }
        }
        assert!(res.feasibility.power_slack.iter().all(|s| *s >= -1e-9));
        assert!(res.feasibility.uncovered.is_empty());
    }

    #[test]
    fn power_only_keeps_mask() {
        let sc = small_scenario(3);
        let mut mask = Array2::from_elem((8, 5), false);
        for e in 0..5 {
            mask[[e, e]] = true;
            mask[[7, e]] = true;
        }
        let res = solve_with_mode(
            &sc,
            &SolverConfig::default(),
            &Mode::PowerOnly(mask.clone()),
        )
        .unwrap();
        assert_eq!(res.alloc.assoc, mask);
        assert_eq!(res.vars.z, mask.mapv(|a| if a { 1.0 } else { 0.0 }));
        for ((ap, e), &eta) in res.alloc.eta.indexed_iter() {
            if !mask[[ap, e]] {
                assert_eq!(eta, 0.0);
            }
        }
    }

    #[test]
    fn rounding_examples() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(round_association(&z, 0.5, 2), z.mapv(|v| v == 1.0));
        let z = array![[0.0, 1.0], [0.0, 1.0], [0.0, 0.2]];
        let a = round_association(&z, 0.5, 2);
        assert_eq!(a.column(0).to_vec(), vec![true, false, false]);
        let edge = 0.5f64.sqrt();
        let z = array![[edge]];
        assert!(round_association(&z, edge * edge, 1)[[0, 0]]);
        let z = array![[0.9, 0.8, 0.95], [0.0, 0.1, 0.0]];
        let a = round_association(&z, 0.5, 2);
        assert_eq!(a.row(0).to_vec(), vec![true, false, true]);
        assert_eq!(a.row(1).to_vec(), vec![false, true, false]);
    }

    #[test]
    fn power_recovery_examples() {
        let sc = one_link(0.5, 4);
        let assoc = array![[true]];
        let r = recover_power(&sc, &array![[0.0]], &assoc);
        assert_eq!(r.alloc.eta[[0, 0]], 0.0);
        let sc1 = one_link(0.5, 1);
        let g = sc1.stats.gamma[[0, 0]];
        let r = recover_power(&sc1, &array![[g.sqrt()]], &assoc);
        assert!(r.rescaled.is_empty());
        assert_relative_eq!(r.alloc.eta[[0, 0]], 1.0, max_relative = 1e-15);
        // L θ² = 1.02 rescales by 1/1.02 onto the budget.
        let t = (1.02f64 / 4.0).sqrt();
        let r = recover_power(&sc, &array![[t]], &assoc);
        assert_eq!(r.rescaled, vec![0]);
        assert_relative_eq!(r.alloc.ap_load(&sc)[0], 1.0, max_relative = 1e-12);
        let r = recover_power(&sc, &array![[t]], &array![[false]]);
        assert_eq!(r.alloc.eta[[0, 0]], 0.0);
    }

    #[test]
    fn degenerate_link_flagged() {
        let real = NetworkRealization::from_gains(array![[0.0, 1.0]], vec![]).unwrap();
        let stats = EstimationStats::compute(&real, 10.0);
        let link = LinkParams {
            p_dl: 1.0,
            antennas: 1,
            coherence: 10,
            pilot_len: 2,
        };
        let sc = Scenario::new(real, stats, link, MulticastGain::Exact).unwrap();
        let r = recover_power(&sc, &array![[0.3, 0.3]], &array![[true, true]]);
        assert_eq!(r.degenerate, vec![(0, 0)]);
        assert_eq!(r.alloc.eta[[0, 0]], 0.0);
    }
}
