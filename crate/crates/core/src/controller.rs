//! Adaptive dynamic surface controller with a barrier-transformed output error.
//!
//! The recursion runs over the plant order `n`:
//!
//! * step 1 maps the output error through the funnel, `z1 = (x1 - y_d) / rho`,
//!   and builds the first virtual law `alpha1` from the barrier gain
//!   `kappa1 = lambda / (g1_lower rho)` with `lambda = 1 / (1 - z1^2)`;
//! * every virtual law `alpha_j` (`j < n`) is passed through a nonlinear
//!   first-order filter whose output `alpha_j^c` feeds the next step, and
//!   whose analytic right-hand side is reused as `d/dt alpha_j^c`;
//! * step `n` produces the actual input `u`.
//!
//! All laws share one saturation shape `-kappa z abar^2 / (g_lower sqrt((kappa z abar)^2 + eps^2))`
//! so that `|alpha| <= |abar| / g_lower`. Parameter estimates use a leakage
//! term scaled by `sigma2(t)`, which vanishes after the prescribed time.
//!
//! Indices are zero-based: `z[0]` is `z1`, `alpha_c[0]` is `alpha_1^c`.

use crate::error::{ControlError, ParamError};
use crate::perf_rate::{EpsSchedule, GainSchedule, PerfRateFn};
use crate::plant::{DesignModel, ReferenceSignal};

pub const DEFAULT_GUARD_DELTA: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ControllerGains {
    /// Error gains; the first must exceed 1/2.
    pub varsigma_z: Vec<f64>,
    /// Filter gains, one per filter (`n - 1`).
    pub varsigma_w: Vec<f64>,
    pub iota_theta: Vec<f64>,
    pub iota_gamma: Vec<f64>,
    pub sigma_bar: f64,
    /// Prescribed time `T`.
    pub horizon: f64,
    pub rho0: f64,
    pub rho_t: f64,
    pub upsilon_rho: f64,
    pub upsilon_sigma: f64,
    pub eps: EpsSchedule,
}

impl ControllerGains {
    /// Structural checks plus the design condition `varsigma_z1 > 1/2`.
    pub fn validate(&self, order: usize) -> Result<(), ParamError> {
        self.validate_structure(order)?;
        if !(self.varsigma_z[0] > 0.5) {
            return Err(ParamError::Invalid(format!(
                "varsigma_z1 must exceed 1/2 (got {})",
                self.varsigma_z[0]
            )));
        }
        Ok(())
    }

    /// Dimensions, positivity, funnel and schedule only.
    pub fn validate_structure(&self, order: usize) -> Result<(), ParamError> {
        let filters = order - 1;
        for (what, expected, got) in [
            ("varsigma_z", order, self.varsigma_z.len()),
            ("varsigma_w", filters, self.varsigma_w.len()),
            ("iota_theta", order, self.iota_theta.len()),
            ("iota_gamma", filters, self.iota_gamma.len()),
        ] {
            if expected != got {
                return Err(ParamError::Dimension { what, expected, got });
            }
        }
        let all = self
            .varsigma_z
            .iter()
            .chain(&self.varsigma_w)
            .chain(&self.iota_theta)
            .chain(&self.iota_gamma);
        if let Some(bad) = all.copied().find(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ParamError::NotPositive { name: "controller gain", value: bad });
        }
        self.funnel()?;
        self.schedule()?;
        Ok(())
    }

    pub fn funnel(&self) -> Result<PerfRateFn, ParamError> {
        PerfRateFn::funnel(self.rho0, self.rho_t, self.horizon, self.upsilon_rho)
    }

    pub fn schedule(&self) -> Result<GainSchedule, ParamError> {
        let rate = PerfRateFn::rate(self.sigma_bar, self.horizon, self.upsilon_sigma)?;
        Ok(GainSchedule::new(rate, self.eps.clone()))
    }
}

/// Integrated controller states.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub alpha_c: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub r: f64,
}

impl ControllerState {
    pub fn zeros(order: usize) -> Self {
        Self {
            alpha_c: vec![0.0; order - 1],
            theta_hat: vec![0.0; order],
            gamma_hat: vec![0.0; order - 1],
            r: 0.0,
        }
    }

    pub fn packed_len(order: usize) -> usize {
        3 * order - 1
    }

    pub fn write_to(&self, out: &mut [f64]) {
        let it = self
            .alpha_c
            .iter()
            .chain(&self.theta_hat)
            .chain(&self.gamma_hat)
            .chain(std::iter::once(&self.r));
        for (slot, v) in out.iter_mut().zip(it) {
            *slot = *v;
        }
    }

    pub fn read_from(order: usize, packed: &[f64]) -> Self {
        let f = order - 1;
        Self {
            alpha_c: packed[..f].to_vec(),
            theta_hat: packed[f..f + order].to_vec(),
            gamma_hat: packed[f + order..2 * f + order].to_vec(),
            r: packed[2 * f + order],
        }
    }
}

/// Intermediate quantities of one controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWorkspace {
    pub t: f64,
    pub y_d: f64,
    pub rho: f64,
    pub rho_dot: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub eps: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub lambda: f64,
    pub kappa: Vec<f64>,
    pub zeta: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub varphi: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Virtual laws; the last entry is the control input.
    pub alpha: Vec<f64>,
    pub alpha_c_dot: Vec<f64>,
}

impl StepWorkspace {
    pub fn u(&self) -> f64 {
        *self.alpha.last().expect("order >= 1")
    }
}

/// Result of a single step law.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw {
    pub kappa: f64,
    pub zeta: f64,
    pub phi: Vec<f64>,
    pub varphi: f64,
    pub alpha_bar: f64,
    pub alpha: f64,
}

/// Transformed errors `z1 = (x1 - y_d) / rho` and `z_i = x_i - alpha_{i-1}^c`.
pub fn transform_errors(
    t: f64,
    x: &[f64],
    y_d: f64,
    rho: f64,
    alpha_c: &[f64],
    guard_delta: f64,
) -> Result<Vec<f64>, ControlError> {
    let z1 = (x[0] - y_d) / rho;
    if !z1.is_finite() {
        return Err(ControlError::NumericalBlowup { t });
    }
    if z1.abs() >= 1.0 - guard_delta {
        return Err(ControlError::FunnelViolation { t, z1 });
    }
    let mut z = Vec::with_capacity(x.len());
    z.push(z1);
    z.extend(x[1..].iter().zip(alpha_c).map(|(xi, ac)| xi - ac));
    Ok(z)
}

/// `s Phi^T Phi / sqrt(s^2 Phi^T Phi + eps^2)`, bounded by `|Phi|`.
pub fn smoothed_normalizer(s: f64, phi: &[f64], eps: f64) -> f64 {
    let sq: f64 = phi.iter().map(|v| v * v).sum();
    if sq == 0.0 || s == 0.0 {
        return 0.0;
    }
    s * sq / (s * s * sq + eps * eps).sqrt()
}

/// Smooth envelope `psi^2 z / sqrt(z^2 psi^2 + eps^2)`; vanishes at `z = 0`
/// and satisfies `z * out >= |z| psi - eps`.
pub fn smoothed_envelope(z: f64, psi: f64, eps: f64) -> f64 {
    if z == 0.0 || psi == 0.0 {
        return 0.0;
    }
    psi * psi * z / (z * z * psi * psi + eps * eps).sqrt()
}

/// Shared saturation shape of every virtual law and of `u`.
pub fn saturated_law(kappa: f64, z: f64, alpha_bar: f64, g_lower: f64, eps: f64) -> f64 {
    let s = kappa * z * alpha_bar;
    if s == 0.0 {
        return 0.0;
    }
    -kappa * z * alpha_bar * alpha_bar / (g_lower * (s * s + eps * eps).sqrt())
}

/// Inputs of the first (barrier) step.
#[derive(Debug, Clone, Copy)]
pub struct Step1Input<'a> {
    pub z1: f64,
    pub rho: f64,
    pub rho_dot: f64,
    pub y_d_dot: f64,
    pub regressor: &'a [f64],
    /// `psi_11(x1)`.
    pub psi_state: f64,
    /// `psi_12(r)`.
    pub psi_signal: f64,
    pub theta_hat: f64,
    pub varsigma_z: f64,
    pub g_lower: f64,
    pub sigma1: f64,
    pub eps: f64,
}

pub fn step1_law(inp: &Step1Input<'_>) -> StepLaw {
    let z1 = inp.z1;
    let lambda = 1.0 / (1.0 - z1 * z1);
    let kappa = lambda / (inp.g_lower * inp.rho);
    let zeta = z1 / (4.0 * inp.rho) - inp.y_d_dot - inp.rho_dot * z1;
    let mut phi = inp.regressor.to_vec();
    phi.push(smoothed_envelope(z1, inp.psi_state, inp.eps) + smoothed_envelope(z1, inp.psi_signal, inp.eps));
    phi.push(z1 / 4.0);
    let varphi = smoothed_normalizer(kappa * z1, &phi, inp.eps);
    let alpha_bar = inp.varsigma_z * inp.sigma1 * inp.rho * z1 + zeta + inp.theta_hat * varphi;
    let alpha = saturated_law(kappa, z1, alpha_bar, inp.g_lower, inp.eps);
    StepLaw { kappa, zeta, phi, varphi, alpha_bar, alpha }
}

/// Inputs of an intermediate or final step (`i >= 2`).
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub z: f64,
    pub z_prev: f64,
    pub kappa_prev: f64,
    /// Right-hand side of the previous filter, used as its time derivative.
    pub alpha_c_dot_prev: f64,
    pub regressor: &'a [f64],
    pub psi_state: f64,
    pub psi_signal: f64,
    pub theta_hat: f64,
    pub varsigma_z: f64,
    pub g_lower: f64,
    pub sigma1: f64,
    pub eps: f64,
}

pub fn stepi_law(inp: &StepInput<'_>) -> StepLaw {
    let z = inp.z;
    let kappa = 1.0 / inp.g_lower;
    let zeta = z / 4.0 - inp.alpha_c_dot_prev;
    let mut phi = Vec::with_capacity(inp.regressor.len() + 3);
    phi.push(inp.kappa_prev / kappa * inp.z_prev);
    phi.extend_from_slice(inp.regressor);
    phi.push(smoothed_envelope(z, inp.psi_state, inp.eps) + smoothed_envelope(z, inp.psi_signal, inp.eps));
    phi.push(z / 4.0);
    let varphi = smoothed_normalizer(kappa * z, &phi, inp.eps);
    let alpha_bar = inp.varsigma_z * inp.sigma1 * z + zeta + inp.theta_hat * varphi;
    let alpha = saturated_law(kappa, z, alpha_bar, inp.g_lower, inp.eps);
    StepLaw { kappa, zeta, phi, varphi, alpha_bar, alpha }
}

/// The last step; identical in form to [`stepi_law`] and returns `u` in `alpha`.
pub fn final_law(inp: &StepInput<'_>) -> StepLaw {
    stepi_law(inp)
}

/// Nonlinear filter right-hand side for `alpha_j^c` given `omega_j = alpha_j^c - alpha_j`.
pub fn filter_rhs(omega: f64, kappa: f64, gamma_hat: f64, sigma1: f64, varsigma_w: f64, eps: f64) -> f64 {
    let linear = -(varsigma_w * sigma1 + kappa) * omega;
    let g2 = gamma_hat * gamma_hat;
    if g2 == 0.0 || omega == 0.0 {
        return linear;
    }
    linear - g2 * omega / (g2 * omega * omega + eps * eps).sqrt()
}

/// Right-hand sides of the estimates and of the dynamic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRates {
    pub theta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub r: f64,
}

pub fn adaptive_rhs(
    ws: &StepWorkspace,
    state: &ControllerState,
    gains: &ControllerGains,
    design: &DesignModel,
    x1: f64,
) -> AdaptiveRates {
    let sigma2 = ws.sigma2;
    let theta_hat = (0..state.theta_hat.len())
        .map(|i| {
            let iota = gains.iota_theta[i];
            iota * ws.kappa[i] * ws.z[i] * ws.varphi[i] - 2.0 * iota * sigma2 * state.theta_hat[i]
        })
        .collect();
    let gamma_hat = (0..state.gamma_hat.len())
        .map(|j| {
            let iota = gains.iota_gamma[j];
            iota * ws.w[j].abs() - 2.0 * iota * sigma2 * state.gamma_hat[j]
        })
        .collect();
    let r = design
        .dynamic_signal
        .as_ref()
        .map_or(0.0, |sig| sig.rhs(state.r, x1));
    AdaptiveRates { theta_hat, gamma_hat, r }
}

/// One controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub rates: ControllerState,
    pub workspace: StepWorkspace,
}

/// The closed-form controller bound to a plant's design data and a reference.
#[derive(Debug, Clone)]
pub struct Controller {
    design: DesignModel,
    reference: ReferenceSignal,
    gains: ControllerGains,
    funnel: PerfRateFn,
    schedule: GainSchedule,
    guard_delta: f64,
}

impl Controller {
    pub fn new(design: &DesignModel, reference: ReferenceSignal, gains: ControllerGains) -> Result<Self, ParamError> {
        gains.validate(design.order)?;
        Self::build(design, reference, gains)
    }

    /// Like [`Controller::new`] but skips the `varsigma_z1 > 1/2` design
    /// condition. Meant for stress scenarios that probe the guards.
    pub fn new_relaxed(design: &DesignModel, reference: ReferenceSignal, gains: ControllerGains) -> Result<Self, ParamError> {
        gains.validate_structure(design.order)?;
        if !(gains.varsigma_z[0] > 0.5) {
            log::warn!("varsigma_z1 = {} violates the design condition", gains.varsigma_z[0]);
        }
        Self::build(design, reference, gains)
    }

    fn build(design: &DesignModel, reference: ReferenceSignal, gains: ControllerGains) -> Result<Self, ParamError> {
        let funnel = gains.funnel()?;
        let schedule = gains.schedule()?;
        Ok(Self {
            design: design.clone(),
            reference,
            gains,
            funnel,
            schedule,
            guard_delta: DEFAULT_GUARD_DELTA,
        })
    }

    pub fn with_guard(mut self, guard_delta: f64) -> Self {
        self.guard_delta = guard_delta;
        self
    }

    pub fn order(&self) -> usize {
        self.design.order
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn funnel(&self) -> &PerfRateFn {
        &self.funnel
    }

    pub fn schedule(&self) -> &GainSchedule {
        &self.schedule
    }

    pub fn reference(&self) -> &ReferenceSignal {
        &self.reference
    }

    /// Initial controller state: filter outputs start on their virtual laws,
    /// estimates at the given values and `r` at the plant's `r0`.
    pub fn init_state(
        &self,
        x0: &[f64],
        theta_hat0: &[f64],
        gamma_hat0: &[f64],
    ) -> Result<ControllerState, ControlError> {
        let n = self.order();
        let error = x0[0] - self.reference.value(0.0);
        let rho0 = self.funnel.eval(0.0);
        if !(error.abs() / rho0 < 1.0 - self.guard_delta) {
            return Err(ControlError::InitialFunnelViolation { error, rho0 });
        }
        let mut state = ControllerState {
            alpha_c: vec![0.0; n - 1],
            theta_hat: theta_hat0.to_vec(),
            gamma_hat: gamma_hat0.to_vec(),
            r: self.design.dynamic_signal.as_ref().map_or(0.0, |s| s.r0),
        };
        // alpha_j depends only on alpha_c[..j], so filling in order is exact.
        for j in 0..n - 1 {
            let out = self.eval(0.0, x0, &state)?;
            state.alpha_c[j] = out.workspace.alpha[j];
        }
        Ok(state)
    }

    pub fn eval(&self, t: f64, x: &[f64], state: &ControllerState) -> Result<ControlOutput, ControlError> {
        let n = self.order();
        let design = &self.design;
        let gains = &self.gains;
        let rho = self.funnel.eval(t);
        let rho_dot = self.funnel.derivative(t);
        let sigma1 = self.schedule.sigma1(t);
        let sigma2 = self.schedule.sigma2(t);
        let eps = self.schedule.eps(t);
        let y_d = self.reference.value(t);
        let y_d_dot = self.reference.rate(t);
        let r = state.r;

        let z = transform_errors(t, x, y_d, rho, &state.alpha_c, self.guard_delta)?;

        let regressor = design.regressor(0, x);
        let first = step1_law(&Step1Input {
            z1: z[0],
            rho,
            rho_dot,
            y_d_dot,
            regressor: &regressor,
            psi_state: design.psi1(0, x),
            psi_signal: design.psi2(0, r),
            theta_hat: state.theta_hat[0],
            varsigma_z: gains.varsigma_z[0],
            g_lower: design.gain_lower[0],
            sigma1,
            eps,
        });
        let lambda = 1.0 / (1.0 - z[0] * z[0]);

        let mut ws = StepWorkspace {
            t,
            y_d,
            rho,
            rho_dot,
            sigma1,
            sigma2,
            eps,
            z,
            w: Vec::with_capacity(n - 1),
            lambda,
            kappa: Vec::with_capacity(n),
            zeta: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            varphi: Vec::with_capacity(n),
            alpha_bar: Vec::with_capacity(n),
            alpha: Vec::with_capacity(n),
            alpha_c_dot: Vec::with_capacity(n - 1),
        };
        push_step(&mut ws, first);

        for j in 0..n - 1 {
            let i = j + 1;
            let omega = state.alpha_c[j] - ws.alpha[j];
            let ac_dot = filter_rhs(omega, ws.kappa[j], state.gamma_hat[j], sigma1, gains.varsigma_w[j], eps);
            ws.w.push(omega);
            ws.alpha_c_dot.push(ac_dot);
            let regressor = design.regressor(i, x);
            let step = stepi_law(&StepInput {
                z: ws.z[i],
                z_prev: ws.z[j],
                kappa_prev: ws.kappa[j],
                alpha_c_dot_prev: ac_dot,
                regressor: &regressor,
                psi_state: design.psi1(i, x),
                psi_signal: design.psi2(i, r),
                theta_hat: state.theta_hat[i],
                varsigma_z: gains.varsigma_z[i],
                g_lower: design.gain_lower[i],
                sigma1,
                eps,
            });
            push_step(&mut ws, step);
        }

        let rates = adaptive_rhs(&ws, state, gains, design, x[0]);
        let u = ws.u();
        let finite = u.is_finite()
            && ws.alpha.iter().chain(&ws.alpha_c_dot).all(|v| v.is_finite())
            && rates.theta_hat.iter().chain(&rates.gamma_hat).all(|v| v.is_finite())
            && rates.r.is_finite();
        if !finite {
            return Err(ControlError::NumericalBlowup { t });
        }
        let rates = ControllerState {
            alpha_c: ws.alpha_c_dot.clone(),
            theta_hat: rates.theta_hat,
            gamma_hat: rates.gamma_hat,
            r: rates.r,
        };
        Ok(ControlOutput { u, rates, workspace: ws })
    }
}

fn push_step(ws: &mut StepWorkspace, step: StepLaw) {
    ws.kappa.push(step.kappa);
    ws.zeta.push(step.zeta);
    ws.phi.push(step.phi);
    ws.varphi.push(step.varphi);
    ws.alpha_bar.push(step.alpha_bar);
    ws.alpha.push(step.alpha);
}
