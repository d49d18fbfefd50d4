//! Closed-loop simulation.
//!
//! The plant states, the unmodeled states and every controller state are
//! integrated together as one augmented ODE
//! `[x, xi, alpha_c, theta_hat, gamma_hat, r]` with classical fixed-step RK4.
//! The controller is re-evaluated at every stage time, so the time-varying
//! gains are never frozen across a step.

use rayon::prelude::*;
use serde::Serialize;

use crate::controller::{ControlOutput, Controller, ControllerGains, ControllerState, DEFAULT_GUARD_DELTA};
use crate::error::{ControlError, ParamError};
use crate::metrics::{summarize, MetricsSummary};
use crate::perf_rate::EpsSchedule;
use crate::plant::{PlantModel, ReferenceSignal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub log_stride: usize,
    pub guard_delta: f64,
    pub blowup_limit: f64,
    /// When false, gains violating `varsigma_z1 > 1/2` are accepted (with a warning).
    pub enforce_design_conditions: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            horizon: 10.0,
            log_stride: 10,
            guard_delta: DEFAULT_GUARD_DELTA,
            blowup_limit: 1e9,
            enforce_design_conditions: true,
        }
    }
}

impl SimConfig {
    /// Checks the step against the prescribed time `T` and the logging density.
    pub fn validate(&self, prescribed_time: f64) -> Result<(), ParamError> {
        for (name, v) in [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("guard_delta", self.guard_delta),
            ("blowup_limit", self.blowup_limit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::NotPositive { name, value: v });
            }
        }
        if self.log_stride == 0 {
            return Err(ParamError::Invalid("log_stride must be at least 1".into()));
        }
        if !(self.dt < prescribed_time / 100.0) {
            return Err(ParamError::Invalid(format!(
                "dt={} does not resolve the prescribed time T={prescribed_time} (need dt < T/100)",
                self.dt
            )));
        }
        if self.log_stride as f64 * self.dt > 0.01 * self.horizon {
            return Err(ParamError::Invalid(format!(
                "log_stride*dt={} exceeds 1% of the horizon",
                self.log_stride as f64 * self.dt
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialConditions {
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub theta_hat0: Vec<f64>,
    pub gamma_hat0: Vec<f64>,
}

impl InitialConditions {
    /// Zero estimates and zero unmodeled state.
    pub fn from_state(plant: &PlantModel, x0: Vec<f64>) -> Self {
        let n = plant.order();
        Self {
            x0,
            xi0: vec![0.0; plant.unmodeled_dim()],
            theta_hat0: vec![0.0; n],
            gamma_hat0: vec![0.0; n - 1],
        }
    }

    fn validate(&self, plant: &PlantModel) -> Result<(), ParamError> {
        let n = plant.order();
        for (what, expected, got) in [
            ("x0", n, self.x0.len()),
            ("xi0", plant.unmodeled_dim(), self.xi0.len()),
            ("theta_hat0", n, self.theta_hat0.len()),
            ("gamma_hat0", n - 1, self.gamma_hat0.len()),
        ] {
            if expected != got {
                return Err(ParamError::Dimension { what, expected, got });
            }
        }
        if self.theta_hat0.iter().chain(&self.gamma_hat0).any(|v| !(*v >= 0.0)) {
            return Err(ParamError::Invalid("initial estimates must be nonnegative".into()));
        }
        if self.x0.iter().chain(&self.xi0).any(|v| !v.is_finite()) {
            return Err(ParamError::Invalid("initial state must be finite".into()));
        }
        Ok(())
    }
}

/// A fully specified closed-loop experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: PlantModel,
    pub reference: ReferenceSignal,
    pub gains: ControllerGains,
    pub sim: SimConfig,
    pub init: InitialConditions,
}

/// One logged sample of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub r: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub u: f64,
    /// Virtual laws `alpha_1 .. alpha_{n-1}`.
    pub alpha: Vec<f64>,
    pub alpha_c: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub e: f64,
}

impl TrajectoryRecord {
    fn from_eval(x: &[f64], xi: &[f64], state: &ControllerState, out: &ControlOutput) -> Self {
        let ws = &out.workspace;
        let n = x.len();
        Self {
            t: ws.t,
            x: x.to_vec(),
            xi: xi.to_vec(),
            r: state.r,
            z: ws.z.clone(),
            w: ws.w.clone(),
            u: out.u,
            alpha: ws.alpha[..n - 1].to_vec(),
            alpha_c: state.alpha_c.clone(),
            theta_hat: state.theta_hat.clone(),
            gamma_hat: state.gamma_hat.clone(),
            sigma1: ws.sigma1,
            sigma2: ws.sigma2,
            rho: ws.rho,
            e: x[0] - ws.y_d,
        }
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [self.t, self.r, self.u, self.sigma1, self.sigma2, self.rho, self.e];
        scalars.iter().all(|v| v.is_finite())
            && self
                .x
                .iter()
                .chain(&self.xi)
                .chain(&self.z)
                .chain(&self.w)
                .chain(&self.alpha)
                .chain(&self.alpha_c)
                .chain(&self.theta_hat)
                .chain(&self.gamma_hat)
                .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum RunStatus {
    Completed,
    FunnelViolation { t: f64 },
    NumericalBlowup { t: f64 },
    InitialFunnelViolation,
    /// The true gain left the declared bounds: the scenario itself is inconsistent.
    GainBoundViolation { t: f64, index: usize },
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Completed => "Completed",
            Self::FunnelViolation { .. } => "FunnelViolation",
            Self::NumericalBlowup { .. } => "NumericalBlowup",
            Self::InitialFunnelViolation => "InitialFunnelViolation",
            Self::GainBoundViolation { .. } => "GainBoundViolation",
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Self::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub records: Vec<TrajectoryRecord>,
    /// `None` when nothing was logged (initial funnel violation).
    pub metrics: Option<MetricsSummary>,
}

/// Scratch buffers for classical RK4 on a flat state vector.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            stage: vec![0.0; dim],
        }
    }

    /// Advances `y` by `dt`. `k1` may be supplied precomputed at `(t, y)`.
    pub fn step<E>(
        &mut self,
        t: f64,
        dt: f64,
        y: &mut [f64],
        k1: Option<&[f64]>,
        mut f: impl FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    ) -> Result<(), E> {
        match k1 {
            Some(k) => self.k1.copy_from_slice(k),
            None => f(t, y, &mut self.k1)?,
        }
        let half = 0.5 * dt;
        axpy(&mut self.stage, y, half, &self.k1);
        f(t + half, &self.stage, &mut self.k2)?;
        axpy(&mut self.stage, y, half, &self.k2);
        f(t + half, &self.stage, &mut self.k3)?;
        axpy(&mut self.stage, y, dt, &self.k3);
        f(t + dt, &self.stage, &mut self.k4)?;
        let sixth = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn axpy(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for ((o, yi), ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + a * ki;
    }
}

/// Splits the augmented state into its plant, unmodeled and controller parts.
struct Layout {
    n: usize,
    n0: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        self.n + self.n0 + ControllerState::packed_len(self.n)
    }

    fn split<'a>(&self, y: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (x, rest) = y.split_at(self.n);
        let (xi, ctrl) = rest.split_at(self.n0);
        (x, xi, ctrl)
    }
}

fn closed_loop_rhs(
    plant: &PlantModel,
    controller: &Controller,
    layout: &Layout,
    t: f64,
    y: &[f64],
    dy: &mut [f64],
) -> Result<ControlOutput, ControlError> {
    let (x, xi, ctrl) = layout.split(y);
    let state = ControllerState::read_from(layout.n, ctrl);
    let out = controller.eval(t, x, &state)?;
    let (dx, rest) = dy.split_at_mut(layout.n);
    let (dxi, dctrl) = rest.split_at_mut(layout.n0);
    plant.rhs_into(t, x, xi, out.u, dx, dxi)?;
    out.rates.write_to(dctrl);
    Ok(out)
}

fn status_from(err: ControlError) -> RunStatus {
    match err {
        ControlError::FunnelViolation { t, .. } => RunStatus::FunnelViolation { t },
        ControlError::NumericalBlowup { t } => RunStatus::NumericalBlowup { t },
        ControlError::InitialFunnelViolation { .. } => RunStatus::InitialFunnelViolation,
    }
}

/// Simulates the closed loop of `scenario` over `[0, horizon]`.
///
/// Guard events end the run and are reported in the returned status; only an
/// inconsistent scenario definition is an `Err`.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, ParamError> {
    let Scenario { plant, reference, gains, sim, init } = scenario;
    sim.validate(gains.horizon)?;
    init.validate(plant)?;
    let controller = if sim.enforce_design_conditions {
        Controller::new(plant.design(), reference.clone(), gains.clone())?
    } else {
        Controller::new_relaxed(plant.design(), reference.clone(), gains.clone())?
    }
    .with_guard(sim.guard_delta);
    let layout = Layout { n: plant.order(), n0: plant.unmodeled_dim() };

    let state0 = match controller.init_state(&init.x0, &init.theta_hat0, &init.gamma_hat0) {
        Ok(s) => s,
        Err(ControlError::InitialFunnelViolation { .. }) => {
            return Ok(RunOutcome { status: RunStatus::InitialFunnelViolation, records: Vec::new(), metrics: None });
        }
        Err(e) => {
            return Ok(RunOutcome { status: status_from(e), records: Vec::new(), metrics: None });
        }
    };

    let mut y = vec![0.0; layout.dim()];
    y[..layout.n].copy_from_slice(&init.x0);
    y[layout.n..layout.n + layout.n0].copy_from_slice(&init.xi0);
    state0.write_to(&mut y[layout.n + layout.n0..]);

    let steps = sim.steps();
    let mut records = Vec::with_capacity(steps / sim.log_stride + 2);
    let mut rk4 = Rk4::new(layout.dim());
    let mut k1 = vec![0.0; layout.dim()];
    let mut status = RunStatus::Completed;

    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        let out = match closed_loop_rhs(plant, &controller, &layout, t, &y, &mut k1) {
            Ok(out) => out,
            Err(e) => {
                status = status_from(e);
                break;
            }
        };
        let (x, xi, ctrl) = layout.split(&y);
        if let Some((index, _)) = plant.gain_violation(t, x) {
            status = RunStatus::GainBoundViolation { t, index };
            break;
        }
        if k % sim.log_stride == 0 || k == steps {
            let record = TrajectoryRecord::from_eval(x, xi, &ControllerState::read_from(layout.n, ctrl), &out);
            if !record.is_finite() {
                status = RunStatus::NumericalBlowup { t };
                break;
            }
            records.push(record);
        }
        if k == steps {
            break;
        }
        let stepped = rk4.step(t, sim.dt, &mut y, Some(&k1), |ts, ys, dys| {
            closed_loop_rhs(plant, &controller, &layout, ts, ys, dys).map(|_| ())
        });
        if let Err(e) = stepped {
            status = status_from(e);
            break;
        }
        if y.iter().any(|v| !(v.abs() <= sim.blowup_limit)) {
            status = RunStatus::NumericalBlowup { t: t + sim.dt };
            break;
        }
    }

    let metrics = summarize(&records, gains.horizon, status.is_completed()).ok();
    Ok(RunOutcome { status, records, metrics })
}

/// Parameters that may be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SigmaBar,
    RhoT,
    PrescribedTime,
    EpsDecay,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sigma_bar" => Some(Self::SigmaBar),
            "rho_T" | "rho_t" => Some(Self::RhoT),
            "T" => Some(Self::PrescribedTime),
            "eps_decay" => Some(Self::EpsDecay),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SigmaBar => "sigma_bar",
            Self::RhoT => "rho_T",
            Self::PrescribedTime => "T",
            Self::EpsDecay => "eps_decay",
        }
    }

    /// Returns a copy of `base` with this parameter set to `value`.
    pub fn apply(&self, base: &Scenario, value: f64) -> Result<Scenario, ParamError> {
        let mut s = base.clone();
        match self {
            Self::SigmaBar => s.gains.sigma_bar = value,
            Self::RhoT => s.gains.rho_t = value,
            Self::PrescribedTime => s.gains.horizon = value,
            Self::EpsDecay => {
                let floor = s.gains.eps.floor();
                if s.gains.eps.decay_rate().is_none() {
                    return Err(ParamError::Invalid("eps_decay sweep needs an exponential eps schedule".into()));
                }
                s.gains.eps = EpsSchedule::exponential(value, floor)?;
            }
        }
        Ok(s)
    }
}

/// Runs one independent simulation per value, in parallel, preserving order.
pub fn sweep(
    base: &Scenario,
    param: SweepParam,
    values: &[f64],
    jobs: Option<usize>,
) -> Vec<Result<RunOutcome, ParamError>> {
    let one = |v: &f64| param.apply(base, *v).and_then(|s| run(&s));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build();
    match pool {
        Ok(pool) => pool.install(|| values.par_iter().map(one).collect()),
        Err(_) => values.iter().map(one).collect(),
    }
}
