//! Receding-horizon nonlinear MPC by direct single shooting.
//!
//! The decision vector holds the whole input sequence, each channel scaled
//! to [0, 1] over its bounds. States are eliminated by simulating the RC
//! model with the same RK4 sub-step the plant uses. The gradient is
//! computed exactly by propagating adjoints back through every RK4 stage.
//! Input bounds and move limits are enforced by projection; output bounds
//! and output rate limits are quadratic penalties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    derivative, input_jacobian_into, offset, state_jacobian, ControlInput, Disturbance,
    InputJacobian, Integrator, StateJacobian, ThermalState, N_INPUTS, N_STATES, PLAUSIBLE_MAX,
    PLAUSIBLE_MIN,
};
use crate::params::BuildingParams;
use crate::solver::{self, BoxProblem, GradientMode, Objective, RateChain, SolveStatus};
use crate::zone::{ZoneId, N_ZONES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Control interval t_s, s.
    pub interval_s: f64,
    /// Prediction horizon N_p, in control intervals.
    pub horizon: usize,
    /// Tracking weight per room output.
    pub output_weights: [f64; N_ZONES],
    pub input_min: [f64; N_INPUTS],
    pub input_max: [f64; N_INPUTS],
    /// Largest change of each input between consecutive intervals.
    pub input_rate: [f64; N_INPUTS],
    /// Soft room-temperature bounds, °C.
    pub output_min: [f64; N_ZONES],
    pub output_max: [f64; N_ZONES],
    /// Soft limit on room-temperature change per interval, K.
    pub output_rate: f64,
    /// Weight of the soft-constraint penalties.
    pub penalty: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Input applied before the first solve.
    pub initial_input: [f64; N_INPUTS],
    /// Quantization step used when counting valve operations.
    pub valve_step: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            interval_s: 300.0,
            horizon: 12,
            output_weights: [1.0; N_ZONES],
            input_min: [20.0, 16.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            input_max: [50.0, 28.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            input_rate: [5.0, 4.0, 0.5, 0.5, 0.5, 0.5, 0.5],
            output_min: [18.0; N_ZONES],
            output_max: [26.0; N_ZONES],
            output_rate: 2.0,
            penalty: 100.0,
            max_iter: 20,
            tol: 1e-4,
            initial_input: [35.0, 21.0, 0.5, 0.5, 0.5, 0.5, 0.5],
            valve_step: 0.1,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("mpc: {m}")));
        if !(self.interval_s > 0.0) {
            return bad("interval_s must be positive".into());
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.output_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be nonnegative".into());
        }
        for c in 0..N_INPUTS {
            let name = ControlInput::CHANNELS[c];
            if !(self.input_min[c] <= self.input_max[c]) {
                return bad(format!("bounds of {name} are inverted"));
            }
            if !(self.input_rate[c] > 0.0) {
                return bad(format!("rate limit of {name} must be positive"));
            }
            if !(self.input_min[c]..=self.input_max[c]).contains(&self.initial_input[c]) {
                return bad(format!("initial {name} outside its bounds"));
            }
        }
        if self.input_min[2..].iter().any(|v| *v < 0.0) || self.input_max[2..].iter().any(|v| *v > 1.0) {
            return bad("valve bounds must lie within [0, 1]".into());
        }
        for m in 0..N_ZONES {
            if !(self.output_min[m] < self.output_max[m]) {
                return bad(format!("output bounds of {} need min < max", ZoneId::ALL[m]));
            }
        }
        if !(self.output_rate > 0.0) || !(self.penalty >= 0.0) {
            return bad("output_rate must be positive and penalty nonnegative".into());
        }
        if !(self.valve_step > 0.0) {
            return bad("valve_step must be positive".into());
        }
        Ok(())
    }

    fn range(&self, c: usize) -> f64 {
        self.input_max[c] - self.input_min[c]
    }

    fn clamp_input(&self, u: [f64; N_INPUTS]) -> [f64; N_INPUTS] {
        let mut out = u;
        for c in 0..N_INPUTS {
            out[c] = u[c].clamp(self.input_min[c], self.input_max[c]);
        }
        out
    }
}

/// J = Σ_j Σ_m (w_m · (y_ref,m − y_m))² over the predicted room outputs.
pub fn build_objective(
    outputs: &[[f64; N_ZONES]],
    refs: &[[f64; N_ZONES]],
    weights: &[f64; N_ZONES],
) -> Result<f64> {
    if outputs.len() != refs.len() {
        return Err(Error::LengthMismatch {
            left: outputs.len(),
            right: refs.len(),
        });
    }
    Ok(outputs
        .iter()
        .zip(refs)
        .map(|(y, r)| {
            (0..N_ZONES)
                .map(|m| {
                    let e = weights[m] * (r[m] - y[m]);
                    e * e
                })
                .sum::<f64>()
        })
        .sum())
}

/// Rolls the model over the input sequence, one control interval per entry.
/// Returns the states at every interval boundary, starting with `x0`.
pub fn predict(
    x0: &ThermalState,
    inputs: &[ControlInput],
    dists: &[Disturbance],
    params: &BuildingParams,
    interval: f64,
    substep: f64,
) -> Result<Vec<ThermalState>> {
    if inputs.len() != dists.len() {
        return Err(Error::LengthMismatch {
            left: inputs.len(),
            right: dists.len(),
        });
    }
    let integ = Integrator::new(substep)?;
    let mut traj = Vec::with_capacity(inputs.len() + 1);
    traj.push(*x0);
    let mut x = *x0;
    for (j, (u, d)) in inputs.iter().zip(dists).enumerate() {
        x = integ.advance_with(&x, u, d, params, interval, j * integ.substeps(interval), |_, _| {})?;
        traj.push(x);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpcStatus {
    Converged,
    IterationLimit,
    /// The solve failed; the previous input is reused.
    InfeasibleRelaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub inputs: Vec<ControlInput>,
    pub trajectory: Vec<ThermalState>,
    pub objective: f64,
    pub status: MpcStatus,
    pub iterations: usize,
}

/// One horizon's optimal-control problem in scaled coordinates.
pub struct MpcProblem<'a> {
    pub x0: ThermalState,
    pub refs: &'a [[f64; N_ZONES]],
    pub dists: &'a [Disturbance],
    pub params: &'a BuildingParams,
    pub cfg: &'a MpcConfig,
    pub substep: f64,
    pub previous: [f64; N_INPUTS],
}

impl MpcProblem<'_> {
    fn steps(&self) -> usize {
        self.refs.len()
    }

    fn substeps(&self) -> usize {
        (self.cfg.interval_s / self.substep).round() as usize
    }

    pub fn dim(&self) -> usize {
        self.steps() * N_INPUTS
    }

    pub fn unscale(&self, s: &[f64]) -> Vec<ControlInput> {
        s.chunks_exact(N_INPUTS)
            .map(|chunk| {
                let mut u = [0.0; N_INPUTS];
                for c in 0..N_INPUTS {
                    u[c] = self.cfg.input_min[c] + chunk[c] * self.cfg.range(c);
                }
                ControlInput::from_array(self.cfg.clamp_input(u))
            })
            .collect()
    }

    pub fn scale(&self, inputs: &[ControlInput]) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.dim());
        for u in inputs {
            let a = u.to_array();
            for c in 0..N_INPUTS {
                let r = self.cfg.range(c);
                s.push(if r > 0.0 {
                    (a[c] - self.cfg.input_min[c]) / r
                } else {
                    0.0
                });
            }
        }
        s
    }

    pub fn box_problem(&self) -> BoxProblem {
        let n = self.dim();
        let mut rate = Vec::new();
        for c in 0..N_INPUTS {
            let r = self.cfg.range(c);
            if r <= 0.0 {
                continue;
            }
            rate.push(RateChain {
                indices: (0..self.steps()).map(|j| j * N_INPUTS + c).collect(),
                max_step: self.cfg.input_rate[c] / r,
                anchor: Some(((self.previous[c] - self.cfg.input_min[c]) / r).clamp(0.0, 1.0)),
            });
        }
        BoxProblem {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            rate,
            gradient: GradientMode::Supplied,
            max_iter: self.cfg.max_iter,
            tol: self.cfg.tol,
        }
    }

    /// Derivative of the cost with respect to each predicted output, and the
    /// cost itself.
    fn output_cost(&self, outputs: &[[f64; N_ZONES]]) -> (f64, Vec<[f64; N_ZONES]>) {
        let cfg = self.cfg;
        let rho = cfg.penalty;
        let mut j = 0.0;
        let mut grad = vec![[0.0; N_ZONES]; outputs.len()];
        for k in 1..outputs.len() {
            let (y, prev, r) = (&outputs[k], &outputs[k - 1], &self.refs[k - 1]);
            for m in 0..N_ZONES {
                let w2 = cfg.output_weights[m] * cfg.output_weights[m];
                let e = r[m] - y[m];
                j += w2 * e * e;
                grad[k][m] -= 2.0 * w2 * e;
                if y[m] > cfg.output_max[m] {
                    let v = y[m] - cfg.output_max[m];
                    j += rho * v * v;
                    grad[k][m] += 2.0 * rho * v;
                } else if y[m] < cfg.output_min[m] {
                    let v = cfg.output_min[m] - y[m];
                    j += rho * v * v;
                    grad[k][m] -= 2.0 * rho * v;
                }
                let dy = y[m] - prev[m];
                let v = dy.abs() - cfg.output_rate;
                if v > 0.0 {
                    j += rho * v * v;
                    let g = 2.0 * rho * v * dy.signum();
                    grad[k][m] += g;
                    grad[k - 1][m] -= g;
                }
            }
        }
        (j, grad)
    }

    /// Simulates the horizon; returns room outputs at each boundary and,
    /// when `stages` is given, every RK4 stage point for the adjoint pass.
    fn rollout(
        &self,
        inputs: &[ControlInput],
        mut stages: Option<&mut Vec<[f64; N_STATES]>>,
    ) -> Option<Vec<[f64; N_ZONES]>> {
        let h = self.substep;
        let mut x = self.x0;
        let mut outputs = Vec::with_capacity(self.steps() + 1);
        outputs.push(x.rooms());
        for (u, d) in inputs.iter().zip(self.dists) {
            for _ in 0..self.substeps() {
                let y1 = x;
                let k1 = derivative(&y1, u, d, self.params);
                let y2 = offset(&x.0, &k1, h / 2.0);
                let k2 = derivative(&y2, u, d, self.params);
                let y3 = offset(&x.0, &k2, h / 2.0);
                let k3 = derivative(&y3, u, d, self.params);
                let y4 = offset(&x.0, &k3, h);
                let k4 = derivative(&y4, u, d, self.params);
                if let Some(st) = stages.as_deref_mut() {
                    st.extend_from_slice(&[y1.0, y2.0, y3.0, y4.0]);
                }
                for i in 0..N_STATES {
                    x.0[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            if x.0.iter().any(|v| !(PLAUSIBLE_MIN..=PLAUSIBLE_MAX).contains(v)) {
                return None;
            }
            outputs.push(x.rooms());
        }
        Some(outputs)
    }
}

fn transpose_mul(a: &StateJacobian, v: &[f64; N_STATES]) -> [f64; N_STATES] {
    let mut out = [0.0; N_STATES];
    for (i, row) in a.iter().enumerate() {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for (o, aij) in out.iter_mut().zip(row) {
            *o += aij * vi;
        }
    }
    out
}

fn accumulate_input_grad(b: &InputJacobian, g: &[f64; N_STATES], acc: &mut [f64; N_INPUTS]) {
    for (row, gi) in b.iter().zip(g) {
        if *gi == 0.0 {
            continue;
        }
        for (a, bij) in acc.iter_mut().zip(row) {
            *a += bij * gi;
        }
    }
}

impl Objective for MpcProblem<'_> {
    fn value(&self, s: &[f64]) -> f64 {
        let inputs = self.unscale(s);
        match self.rollout(&inputs, None) {
            Some(outputs) => self.output_cost(&outputs).0,
            None => f64::INFINITY,
        }
    }

    fn value_and_gradient(&self, s: &[f64], grad: &mut [f64]) -> Option<f64> {
        let inputs = self.unscale(s);
        let nsub = self.substeps();
        let mut stages = Vec::with_capacity(self.steps() * nsub * 4);
        let Some(outputs) = self.rollout(&inputs, Some(&mut stages)) else {
            grad.fill(0.0);
            return Some(f64::INFINITY);
        };
        let (cost, dy) = self.output_cost(&outputs);

        let h = self.substep;
        let mut lambda = [0.0; N_STATES];
        let mut b = [[0.0; N_INPUTS]; N_STATES];
        for j in (0..self.steps()).rev() {
            for z in ZoneId::ALL {
                lambda[z.room_index()] += dy[j + 1][z.index()];
            }
            let u = &inputs[j];
            let a = state_jacobian(u, self.params);
            let mut gu = [0.0; N_INPUTS];
            for n in (0..nsub).rev() {
                let base = (j * nsub + n) * 4;
                let mut g4 = [0.0; N_STATES];
                for i in 0..N_STATES {
                    g4[i] = h / 6.0 * lambda[i];
                }
                let t4 = transpose_mul(&a, &g4);
                let mut g3 = [0.0; N_STATES];
                for i in 0..N_STATES {
                    g3[i] = h / 3.0 * lambda[i] + h * t4[i];
                }
                let t3 = transpose_mul(&a, &g3);
                let mut g2 = [0.0; N_STATES];
                for i in 0..N_STATES {
                    g2[i] = h / 3.0 * lambda[i] + h / 2.0 * t3[i];
                }
                let t2 = transpose_mul(&a, &g2);
                let mut g1 = [0.0; N_STATES];
                for i in 0..N_STATES {
                    g1[i] = h / 6.0 * lambda[i] + h / 2.0 * t2[i];
                }
                let t1 = transpose_mul(&a, &g1);
                for i in 0..N_STATES {
                    lambda[i] += t1[i] + t2[i] + t3[i] + t4[i];
                }
                for (stage, g) in [&g1, &g2, &g3, &g4].into_iter().enumerate() {
                    input_jacobian_into(&stages[base + stage], u, self.params, &mut b);
                    accumulate_input_grad(&b, g, &mut gu);
                }
            }
            for c in 0..N_INPUTS {
                grad[j * N_INPUTS + c] = gu[c] * self.cfg.range(c);
            }
        }
        Some(cost)
    }
}

/// Receding-horizon controller state carried between intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcController {
    pub cfg: MpcConfig,
    pub substep: f64,
    /// Last applied input.
    pub previous: ControlInput,
    /// Previous optimal sequence, reused as the next warm start.
    pub incumbent: Option<Vec<ControlInput>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcOutcome {
    pub input: ControlInput,
    pub solution: MpcSolution,
    /// The solve failed and the previous input was reapplied.
    pub fallback: bool,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, substep: f64) -> Result<Self> {
        cfg.validate()?;
        Integrator::new(substep)?;
        let ratio = cfg.interval_s / substep;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config("mpc interval must be a multiple of the sub-step".into()));
        }
        let previous = ControlInput::from_array(cfg.initial_input);
        Ok(MpcController {
            cfg,
            substep,
            previous,
            incumbent: None,
        })
    }

    /// Warm start: the previous solution shifted one step with its last
    /// entry repeated, or the previous input held over the horizon.
    pub fn warm_start(&self) -> Vec<ControlInput> {
        let n = self.cfg.horizon;
        match &self.incumbent {
            Some(seq) if !seq.is_empty() => {
                let mut w: Vec<ControlInput> = seq.iter().skip(1).copied().collect();
                let last = *seq.last().unwrap();
                w.resize(n, last);
                w
            }
            _ => vec![self.previous; n],
        }
    }

    /// Solves one horizon from the measured state and applies the first move.
    pub fn step(
        &mut self,
        measured: &ThermalState,
        refs: &[[f64; N_ZONES]],
        dists: &[Disturbance],
        params: &BuildingParams,
    ) -> Result<MpcOutcome> {
        let warm = self.warm_start();
        self.step_from(measured, refs, dists, params, &warm)
    }

    pub fn step_from(
        &mut self,
        measured: &ThermalState,
        refs: &[[f64; N_ZONES]],
        dists: &[Disturbance],
        params: &BuildingParams,
        start: &[ControlInput],
    ) -> Result<MpcOutcome> {
        let n = self.cfg.horizon;
        if refs.len() != n || dists.len() != n || start.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: refs.len().min(dists.len()).min(start.len()),
            });
        }
        measured
            .check_finite()
            .map_err(|e| Error::ControllerFault(e.to_string()))?;
        let problem = MpcProblem {
            x0: *measured,
            refs,
            dists,
            params,
            cfg: &self.cfg,
            substep: self.substep,
            previous: self.previous.to_array(),
        };
        let bp = problem.box_problem();
        let result = solver::solve(&bp, &problem, &problem.scale(start));

        if result.status == SolveStatus::Failed || !result.value.is_finite() {
            let held = vec![self.previous; n];
            let solution = MpcSolution {
                trajectory: vec![*measured],
                inputs: held,
                objective: f64::INFINITY,
                status: MpcStatus::InfeasibleRelaxed,
                iterations: result.iterations,
            };
            self.incumbent = None;
            return Ok(MpcOutcome {
                input: self.previous,
                solution,
                fallback: true,
            });
        }

        let inputs = problem.unscale(&result.x);
        let first = self.enforce_move(inputs[0]);
        let trajectory = predict(measured, &inputs, dists, params, self.cfg.interval_s, self.substep)
            .unwrap_or_else(|_| vec![*measured]);
        let status = match result.status {
            SolveStatus::IterationLimit => MpcStatus::IterationLimit,
            _ => MpcStatus::Converged,
        };
        self.previous = first;
        self.incumbent = Some(inputs.clone());
        Ok(MpcOutcome {
            input: first,
            solution: MpcSolution {
                inputs,
                trajectory,
                objective: result.value,
                status,
                iterations: result.iterations,
            },
            fallback: false,
        })
    }

    /// Clamps the applied input to its bounds and the move limit around the
    /// previous input, removing any rounding left by unscaling.
    fn enforce_move(&self, u: ControlInput) -> ControlInput {
        let prev = self.previous.to_array();
        let mut a = u.to_array();
        for c in 0..N_INPUTS {
            let lo = self.cfg.input_min[c].max(prev[c] - self.cfg.input_rate[c]);
            let hi = self.cfg.input_max[c].min(prev[c] + self.cfg.input_rate[c]);
            a[c] = if lo <= hi {
                a[c].clamp(lo, hi)
            } else {
                a[c].clamp(self.cfg.input_min[c], self.cfg.input_max[c])
            };
        }
        ControlInput::from_array(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn calm() -> Disturbance {
        Disturbance {
            outdoor: 0.0,
            solar: 0.0,
            internal: 100.0,
        }
    }

    #[test]
    fn objective_examples() {
        let y = [[21.0; N_ZONES]; 3];
        assert_eq!(build_objective(&y, &y, &[1.0; N_ZONES]).unwrap(), 0.0);

        let mut w = [0.0; N_ZONES];
        w[0] = 2.0;
        let mut r = [[0.0; N_ZONES]; 1];
        r[0][0] = 3.0;
        let out = [[0.0; N_ZONES]; 1];
        assert_eq!(build_objective(&out, &r, &w).unwrap(), 36.0);

        let out = [[20.0, 21.5, 19.0, 22.0, 21.0]; 2];
        let refs = [[21.0; N_ZONES]; 2];
        let j1 = build_objective(&out, &refs, &[1.0, 0.5, 2.0, 1.0, 3.0]).unwrap();
        let j2 = build_objective(&out, &refs, &[2.0, 1.0, 4.0, 2.0, 6.0]).unwrap();
        assert!((j2 - 4.0 * j1).abs() < 1e-12);
        assert!(build_objective(&out, &refs[..1], &w).is_err());
    }

    #[test]
    fn horizon_one_prediction_is_one_interval() {
        let p = BuildingParams::default();
        let x0 = ThermalState::uniform(18.0);
        let u = ControlInput::from_array(MpcConfig::default().initial_input);
        let traj = predict(&x0, &[u], &[calm()], &p, 300.0, 60.0).unwrap();
        let direct = Integrator::new(60.0).unwrap().advance(&x0, &u, &calm(), &p, 300.0).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj[1], direct);
    }

    #[test]
    fn equilibrium_prediction_is_constant() {
        let p = BuildingParams::default();
        let x0 = ThermalState::uniform(5.0);
        let u = ControlInput {
            supply_water: 5.0,
            supply_air: 5.0,
            valves: [0.3; N_ZONES],
        };
        let d = Disturbance {
            outdoor: 5.0,
            solar: 0.0,
            internal: 0.0,
        };
        let traj = predict(&x0, &[u; 6], &[d; 6], &p, 300.0, 60.0).unwrap();
        assert!(traj.iter().all(|x| *x == x0));
    }

    fn problem_fixture<'a>(
        refs: &'a [[f64; N_ZONES]],
        dists: &'a [Disturbance],
        p: &'a BuildingParams,
        cfg: &'a MpcConfig,
    ) -> MpcProblem<'a> {
        let mut x0 = ThermalState::uniform(20.0);
        for z in ZoneId::ALL {
            x0.0[z.floor_index()] = 23.0;
            if let Some(w) = z.wall_index() {
                x0.0[w] = 12.0;
            }
        }
        MpcProblem {
            x0,
            refs,
            dists,
            params: p,
            cfg,
            substep: 60.0,
            previous: cfg.initial_input,
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let p = BuildingParams::default();
        for horizon in [1usize, 4] {
            let cfg = MpcConfig {
                horizon,
                output_rate: 0.05,
                ..MpcConfig::default()
            };
            let refs = vec![[21.0, 21.5, 21.0, 22.0, 21.0]; horizon];
            let dists = vec![calm(); horizon];
            let prob = problem_fixture(&refs, &dists, &p, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(horizon as u64);
            for _ in 0..5 {
                let s: Vec<f64> = (0..prob.dim()).map(|_| rng.gen_range(0.05..0.95)).collect();
                let mut g = vec![0.0; s.len()];
                let f = prob.value_and_gradient(&s, &mut g).unwrap();
                assert!((f - prob.value(&s)).abs() <= 1e-12 * f.abs().max(1.0));
                let fd = solver::finite_diff_grad(&prob, &s, 0.0, 1e-5).unwrap();
                let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..s.len() {
                    assert!(
                        (g[i] - fd[i]).abs() <= 1e-5 * scale,
                        "N_p={horizon} i={i}: adjoint {} vs fd {}",
                        g[i],
                        fd[i]
                    );
                }
            }
        }
    }

    #[test]
    fn collapsed_bounds_return_the_point() {
        let p = BuildingParams::default();
        let point = [33.0, 20.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let cfg = MpcConfig {
            horizon: 3,
            input_min: point,
            input_max: point,
            initial_input: point,
            ..MpcConfig::default()
        };
        let mut ctl = MpcController::new(cfg, 60.0).unwrap();
        let x = ThermalState::uniform(20.0);
        let out = ctl.step(&x, &[[21.0; N_ZONES]; 3], &[calm(); 3], &p).unwrap();
        assert_eq!(out.input.to_array(), point);
        assert!(!out.fallback);
    }

    #[test]
    fn applied_move_respects_rate_limits() {
        let p = BuildingParams::default();
        let cfg = MpcConfig {
            horizon: 4,
            ..MpcConfig::default()
        };
        let mut ctl = MpcController::new(cfg.clone(), 60.0).unwrap();
        let cold = ThermalState::uniform(12.0);
        let prev = ctl.previous.to_array();
        let out = ctl.step(&cold, &[[21.0; N_ZONES]; 4], &[calm(); 4], &p).unwrap();
        let u = out.input.to_array();
        for c in 0..N_INPUTS {
            assert!(u[c] >= cfg.input_min[c] && u[c] <= cfg.input_max[c]);
            assert!((u[c] - prev[c]).abs() <= cfg.input_rate[c], "{c}");
        }
        // a cold building asks for hotter water
        assert!(u[0] > prev[0]);
    }

    #[test]
    fn solution_beats_random_feasible_sequences() {
        let p = BuildingParams::default();
        let cfg = MpcConfig {
            horizon: 6,
            max_iter: 200,
            tol: 1e-8,
            ..MpcConfig::default()
        };
        let refs = vec![[21.0; N_ZONES]; cfg.horizon];
        let dists = vec![calm(); cfg.horizon];
        let prob = problem_fixture(&refs, &dists, &p, &cfg);
        let bp = prob.box_problem();
        let start = prob.scale(&vec![ControlInput::from_array(cfg.initial_input); cfg.horizon]);
        let best = solver::solve(&bp, &prob, &start);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let mut s: Vec<f64> = best.x.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
            bp.project(&mut s);
            assert!(prob.value(&s) >= best.value - 1e-9);
        }
    }

    #[test]
    fn solver_never_worsens_warm_start() {
        let p = BuildingParams::default();
        let cfg = MpcConfig::default();
        let refs = vec![[21.0; N_ZONES]; cfg.horizon];
        let dists = vec![calm(); cfg.horizon];
        let prob = problem_fixture(&refs, &dists, &p, &cfg);
        let bp = prob.box_problem();
        let mut start = prob.scale(&vec![ControlInput::from_array(cfg.initial_input); cfg.horizon]);
        bp.project(&mut start);
        let r = solver::solve(&bp, &prob, &start);
        assert!(r.value <= prob.value(&start));
        assert!(bp.is_feasible(&r.x, 0.0));
    }

    #[test]
    fn deterministic_solutions() {
        let p = BuildingParams::default();
        let x = ThermalState::uniform(19.0);
        let run = || {
            let mut c = MpcController::new(MpcConfig::default(), 60.0).unwrap();
            c.step(&x, &[[21.0; N_ZONES]; 12], &[calm(); 12], &p).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn warm_start_shifts_incumbent() {
        let mut c = MpcController::new(
            MpcConfig {
                horizon: 3,
                ..MpcConfig::default()
            },
            60.0,
        )
        .unwrap();
        let mk = |v: f64| ControlInput {
            supply_water: v,
            supply_air: 20.0,
            valves: [0.5; N_ZONES],
        };
        c.incumbent = Some(vec![mk(30.0), mk(31.0), mk(32.0)]);
        let w = c.warm_start();
        assert_eq!(w, vec![mk(31.0), mk(32.0), mk(32.0)]);
    }

    #[test]
    fn nonfinite_measurement_is_a_fault() {
        let p = BuildingParams::default();
        let mut c = MpcController::new(MpcConfig::default(), 60.0).unwrap();
        let mut x = ThermalState::uniform(20.0);
        x.0[3] = f64::NAN;
        let e = c.step(&x, &[[21.0; N_ZONES]; 12], &[calm(); 12], &p).unwrap_err();
        assert!(matches!(e, Error::ControllerFault(_)));
    }
}
