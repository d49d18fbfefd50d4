//! Strict-feedback plants with unmodeled dynamics.
//!
//! A plant is split into the part a controller may use ([`DesignModel`]:
//! dimensions, gain lower bounds, regressors, uncertainty envelopes and the
//! dynamic-signal parameters) and the hidden truth ([`PlantTruth`]: the actual
//! gains, parameter terms, uncertainties and unmodeled dynamics). The
//! controller only ever receives a `&DesignModel`.
//!
//! State indices are zero-based throughout: index `i` refers to `x_{i+1}`.

use std::fmt;
use std::sync::Arc;

use crate::error::{ControlError, ParamError};

pub type GainFn = Arc<dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync>;
pub type ParamTermFn = Arc<dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync>;
pub type UncertaintyFn = Arc<dyn Fn(usize, f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type UnmodeledFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type RegressorFn = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;
pub type StateEnvelopeFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;
pub type SignalEnvelopeFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Parameters of the dynamic signal `r' = -c_bar r + upsilon_bar(x1) + d`.
#[derive(Clone)]
pub struct DynamicSignal {
    pub c_bar: f64,
    pub d: f64,
    pub upsilon_bar: ScalarFn,
    pub r0: f64,
}

impl DynamicSignal {
    pub fn rhs(&self, r: f64, x1: f64) -> f64 {
        -self.c_bar * r + (self.upsilon_bar)(x1) + self.d
    }
}

impl fmt::Debug for DynamicSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicSignal")
            .field("c_bar", &self.c_bar)
            .field("d", &self.d)
            .field("r0", &self.r0)
            .finish_non_exhaustive()
    }
}

/// Everything the controller is allowed to know about the plant.
#[derive(Clone)]
pub struct DesignModel {
    pub order: usize,
    pub gain_lower: Vec<f64>,
    pub regressor_dims: Vec<usize>,
    /// `phi_i(x_1..x_{i+1})`; receives the truncated state `x[..=i]`.
    pub regressor: RegressorFn,
    /// `psi_{i1}` evaluated on `x[..=i]`.
    pub psi1: StateEnvelopeFn,
    /// `psi_{i2}` already composed into a function of the dynamic signal `r`.
    pub psi2: SignalEnvelopeFn,
    pub dynamic_signal: Option<DynamicSignal>,
}

impl DesignModel {
    pub fn regressor(&self, i: usize, x: &[f64]) -> Vec<f64> {
        (self.regressor)(i, &x[..=i])
    }

    pub fn psi1(&self, i: usize, x: &[f64]) -> f64 {
        (self.psi1)(i, &x[..=i])
    }

    pub fn psi2(&self, i: usize, r: f64) -> f64 {
        (self.psi2)(i, r)
    }
}

impl fmt::Debug for DesignModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesignModel")
            .field("order", &self.order)
            .field("gain_lower", &self.gain_lower)
            .field("regressor_dims", &self.regressor_dims)
            .field("dynamic_signal", &self.dynamic_signal)
            .finish_non_exhaustive()
    }
}

/// Hidden plant dynamics.
#[derive(Clone)]
pub struct PlantTruth {
    pub unmodeled_dim: usize,
    /// `g_i(t, x)`.
    pub gain: GainFn,
    /// `theta_i(t)^T phi_i(x_1..x_{i+1})`; receives `x[..=i]`.
    pub param_term: ParamTermFn,
    /// `Delta_i(t, x, xi)`.
    pub uncertainty: UncertaintyFn,
    /// `q(t, xi, x)`, written into the output slice.
    pub unmodeled_rhs: UnmodeledFn,
}

#[derive(Clone)]
pub struct PlantModel {
    design: DesignModel,
    truth: PlantTruth,
    /// Known upper gain bounds; used for runtime assertions only.
    gain_upper: Vec<f64>,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("design", &self.design)
            .field("unmodeled_dim", &self.truth.unmodeled_dim)
            .field("gain_upper", &self.gain_upper)
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    pub fn new(design: DesignModel, truth: PlantTruth, gain_upper: Vec<f64>) -> Result<Self, ParamError> {
        let n = design.order;
        if n == 0 {
            return Err(ParamError::Invalid("plant order must be at least 1".into()));
        }
        for (what, got) in [
            ("gain_lower", design.gain_lower.len()),
            ("gain_upper", gain_upper.len()),
            ("regressor_dims", design.regressor_dims.len()),
        ] {
            if got != n {
                return Err(ParamError::Dimension { what, expected: n, got });
            }
        }
        for (lo, hi) in design.gain_lower.iter().zip(&gain_upper) {
            if !(*lo > 0.0 && lo <= hi) {
                return Err(ParamError::Invalid(format!(
                    "gain bounds must satisfy 0 < lower <= upper (got {lo}, {hi})"
                )));
            }
        }
        if let Some(sig) = &design.dynamic_signal {
            if !(sig.c_bar > 0.0 && sig.d >= 0.0 && sig.r0 >= 0.0) {
                return Err(ParamError::Invalid(
                    "dynamic signal requires c_bar > 0, d >= 0, r0 >= 0".into(),
                ));
            }
        }
        Ok(Self { design, truth, gain_upper })
    }

    pub fn order(&self) -> usize {
        self.design.order
    }

    pub fn unmodeled_dim(&self) -> usize {
        self.truth.unmodeled_dim
    }

    pub fn design(&self) -> &DesignModel {
        &self.design
    }

    pub fn gain_lower(&self) -> &[f64] {
        &self.design.gain_lower
    }

    pub fn gain_upper(&self) -> &[f64] {
        &self.gain_upper
    }

    pub fn true_gain(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        (self.truth.gain)(i, t, x)
    }

    pub fn uncertainty(&self, i: usize, t: f64, x: &[f64], xi: &[f64]) -> f64 {
        (self.truth.uncertainty)(i, t, x, xi)
    }

    /// Replaces the dynamic-signal initial value.
    pub fn set_r0(&mut self, r0: f64) -> Result<(), ParamError> {
        if !(r0 >= 0.0 && r0.is_finite()) {
            return Err(ParamError::Invalid(format!("r0 must be nonnegative (got {r0})")));
        }
        if let Some(sig) = &mut self.design.dynamic_signal {
            sig.r0 = r0;
        }
        Ok(())
    }

    /// Writes the plant derivatives for input `u` into `dx` and `dxi`.
    pub fn rhs_into(
        &self,
        t: f64,
        x: &[f64],
        xi: &[f64],
        u: f64,
        dx: &mut [f64],
        dxi: &mut [f64],
    ) -> Result<(), ControlError> {
        let n = self.design.order;
        for i in 0..n {
            let drive = if i + 1 < n { x[i + 1] } else { u };
            dx[i] = (self.truth.gain)(i, t, x) * drive
                + (self.truth.param_term)(i, t, &x[..=i])
                + (self.truth.uncertainty)(i, t, x, xi);
        }
        (self.truth.unmodeled_rhs)(t, xi, x, dxi);
        if dx.iter().chain(dxi.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ControlError::NumericalBlowup { t })
        }
    }

    pub fn rhs(&self, t: f64, x: &[f64], xi: &[f64], u: f64) -> Result<(Vec<f64>, Vec<f64>), ControlError> {
        let mut dx = vec![0.0; self.order()];
        let mut dxi = vec![0.0; self.unmodeled_dim()];
        self.rhs_into(t, x, xi, u, &mut dx, &mut dxi)?;
        Ok((dx, dxi))
    }

    /// Returns the first index whose true gain leaves `[gain_lower, gain_upper]`.
    pub fn gain_violation(&self, t: f64, x: &[f64]) -> Option<(usize, f64)> {
        (0..self.order()).find_map(|i| {
            let g = self.true_gain(i, t, x);
            (g < self.design.gain_lower[i] || g > self.gain_upper[i]).then_some((i, g))
        })
    }
}

/// Reference trajectory and its first two derivatives.
#[derive(Clone)]
pub struct ReferenceSignal {
    pub y_d: ScalarFn,
    pub y_d_dot: ScalarFn,
    pub y_d_ddot: ScalarFn,
}

impl ReferenceSignal {
    pub fn constant(value: f64) -> Self {
        Self {
            y_d: Arc::new(move |_| value),
            y_d_dot: Arc::new(|_| 0.0),
            y_d_ddot: Arc::new(|_| 0.0),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.y_d)(t)
    }

    pub fn rate(&self, t: f64) -> f64 {
        (self.y_d_dot)(t)
    }
}

impl fmt::Debug for ReferenceSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ReferenceSignal { .. }")
    }
}

/// First-order plant `x' = g(t, x) u + theta(t) phi(x)` with
/// `g = 1 - 0.5 cos(t x)`, `theta = 1 + 0.5 sin t`, `phi = x sin x`,
/// regulated to zero.
pub fn builtin_example1() -> (PlantModel, ReferenceSignal) {
    let design = DesignModel {
        order: 1,
        gain_lower: vec![0.5],
        regressor_dims: vec![1],
        regressor: Arc::new(|_, x| vec![x[0] * x[0].sin()]),
        psi1: Arc::new(|_, _| 0.0),
        psi2: Arc::new(|_, _| 0.0),
        dynamic_signal: None,
    };
    let truth = PlantTruth {
        unmodeled_dim: 0,
        gain: Arc::new(|_, t, x| 1.0 - 0.5 * (t * x[0]).cos()),
        param_term: Arc::new(|_, t, x| (1.0 + 0.5 * t.sin()) * x[0] * x[0].sin()),
        uncertainty: Arc::new(|_, _, _, _| 0.0),
        unmodeled_rhs: Arc::new(|_, _, _, _| {}),
    };
    let plant = PlantModel::new(design, truth, vec![1.5]).expect("example 1 is well formed");
    (plant, ReferenceSignal::constant(0.0))
}

/// Default bound on `|x1|` used to size the upper gain bound `1 + B^2` of
/// the second example.
pub const EXAMPLE2_STATE_BOUND: f64 = 2.0;

/// Second-order plant with an unmodeled first-order subsystem `xi` and the
/// reference `0.5 (sin t + sin 0.5 t)`.
pub fn builtin_example2(r0: f64, state_bound: f64) -> (PlantModel, ReferenceSignal) {
    let envelope = |r: f64| (r * r + 0.1).sqrt();
    let design = DesignModel {
        order: 2,
        gain_lower: vec![1.0, 2.0],
        regressor_dims: vec![1, 1],
        regressor: Arc::new(|i, x| match i {
            0 => vec![x[0] * (-0.5 * x[0]).exp()],
            _ => vec![x[0] * x[1] * x[1]],
        }),
        psi1: Arc::new(|i, x| if i == 0 { (x[0] * x[0] + 0.1).sqrt() } else { 0.0 }),
        psi2: Arc::new(move |_, r| envelope(r)),
        dynamic_signal: Some(DynamicSignal {
            c_bar: 1.0,
            d: 0.625,
            upsilon_bar: Arc::new(|x1| 2.5 * x1.powi(4)),
            r0,
        }),
    };
    let truth = PlantTruth {
        unmodeled_dim: 1,
        gain: Arc::new(|i, _, x| match i {
            0 => 1.0 + x[0] * x[0],
            _ => 3.0 - (x[0] * x[1]).cos(),
        }),
        param_term: Arc::new(|i, _, x| match i {
            0 => x[0] * (-0.5 * x[0]).exp(),
            _ => x[0] * x[1] * x[1],
        }),
        uncertainty: Arc::new(|i, t, x, xi| match i {
            0 => 0.2 * xi[0] * x[0] * (x[1] * t).sin(),
            _ => 0.1 * xi[0] * (0.5 * x[1] * t).cos(),
        }),
        unmodeled_rhs: Arc::new(|t, xi, x, out| {
            out[0] = -xi[0] + 0.5 * x[0] * x[0] * (x[0] * t).sin();
        }),
    };
    let reference = ReferenceSignal {
        y_d: Arc::new(|t| 0.5 * (t.sin() + (0.5 * t).sin())),
        y_d_dot: Arc::new(|t| 0.5 * (t.cos() + 0.5 * (0.5 * t).cos())),
        y_d_ddot: Arc::new(|t| -0.5 * (t.sin() + 0.25 * (0.5 * t).sin())),
    };
    let upper = vec![1.0 + state_bound * state_bound, 4.0];
    let plant = PlantModel::new(design, truth, upper).expect("example 2 is well formed");
    (plant, reference)
}
