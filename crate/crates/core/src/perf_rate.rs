//! Performance-rate functions.
//!
//! A performance-rate function moves from `mu0` at `t = 0` to `mu_t` at the
//! prescribed time `T` with zero initial slope, and stays frozen at `mu_t`
//! afterwards. The same rational family is used for the tracking funnel
//! `rho(t)` (decreasing) and for the rate gain `sigma1(t)` (increasing from 1
//! to `sigma_bar`). The leakage gain `sigma2(t)` follows `sigma1` up to `T` and
//! then decays as `sigma_bar * eps(t - T)`.

use std::fmt;
use std::sync::Arc;

use crate::error::ParamError;

/// Parameters of one performance-rate function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfRateParams {
    pub mu0: f64,
    pub mu_t: f64,
    /// Prescribed time `T` in seconds.
    pub horizon: f64,
    /// Shape parameter `upsilon > 0`; smaller values sharpen the approach to `T`.
    pub shape: f64,
}

impl PerfRateParams {
    pub fn new(mu0: f64, mu_t: f64, horizon: f64, shape: f64) -> Result<Self, ParamError> {
        for (name, v) in [("mu0", mu0), ("mu_t", mu_t), ("T", horizon), ("upsilon", shape)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::NotPositive { name, value: v });
            }
        }
        if mu0 == mu_t {
            log::warn!("performance-rate function with mu0 == mu_t = {mu0} is constant");
        }
        Ok(Self { mu0, mu_t, horizon, shape })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Funnel-type, `mu0 > mu_t`.
    Decreasing,
    /// Rate-type, `mu0 < mu_t`.
    Increasing,
    Constant,
}

/// The rational performance-rate function with analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfRateFn {
    params: PerfRateParams,
    direction: Direction,
}

impl PerfRateFn {
    pub fn new(params: PerfRateParams) -> Self {
        let direction = if params.mu0 > params.mu_t {
            Direction::Decreasing
        } else if params.mu0 < params.mu_t {
            Direction::Increasing
        } else {
            Direction::Constant
        };
        Self { params, direction }
    }

    /// Funnel `rho(t)` shrinking from `rho0` to `rho_t`.
    pub fn funnel(rho0: f64, rho_t: f64, horizon: f64, shape: f64) -> Result<Self, ParamError> {
        if !(rho_t < rho0) {
            return Err(ParamError::Invalid(format!(
                "funnel requires rho_T < rho0 (got rho0={rho0}, rho_T={rho_t})"
            )));
        }
        Ok(Self::new(PerfRateParams::new(rho0, rho_t, horizon, shape)?))
    }

    /// Rate gain `sigma1(t)` rising from 1 to `sigma_bar`.
    pub fn rate(sigma_bar: f64, horizon: f64, shape: f64) -> Result<Self, ParamError> {
        if !(sigma_bar > 1.0) {
            return Err(ParamError::Invalid(format!(
                "rate function requires sigma_bar > 1 (got {sigma_bar})"
            )));
        }
        Ok(Self::new(PerfRateParams::new(1.0, sigma_bar, horizon, shape)?))
    }

    pub fn params(&self) -> &PerfRateParams {
        &self.params
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn eval(&self, t: f64) -> f64 {
        let PerfRateParams { mu0, mu_t, horizon, shape } = self.params;
        if t >= horizon {
            return mu_t;
        }
        if t <= 0.0 {
            return mu0;
        }
        let s = horizon - t;
        // (upsilon^2 + 1) t^2 + T^2 - 2 T t, written as a sum of squares.
        let denom = s * s + shape * shape * t * t;
        mu_t + (mu0 - mu_t) * s * s / denom
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let PerfRateParams { mu0, mu_t, horizon, shape } = self.params;
        if t >= horizon || t <= 0.0 {
            return 0.0;
        }
        let s = horizon - t;
        let u2 = shape * shape;
        let denom = s * s + u2 * t * t;
        // d/dt [s^2 / (s^2 + u2 t^2)] = -2 u2 s t T / denom^2
        -2.0 * (mu0 - mu_t) * u2 * s * t * horizon / (denom * denom)
    }
}

/// Integrable schedule `eps(t) > 0` used by every smoothing term.
#[derive(Clone)]
pub enum EpsSchedule {
    /// `eps(t) = exp(-rate * t)`.
    Exponential { rate: f64, floor: f64 },
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, floor: f64 },
}

pub const DEFAULT_EPS_FLOOR: f64 = 1e-12;

impl fmt::Debug for EpsSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate, floor } => f
                .debug_struct("Exponential")
                .field("rate", rate)
                .field("floor", floor)
                .finish(),
            Self::Custom { floor, .. } => f.debug_struct("Custom").field("floor", floor).finish(),
        }
    }
}

impl EpsSchedule {
    pub fn exponential(rate: f64, floor: f64) -> Result<Self, ParamError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ParamError::NotPositive { name: "eps_decay", value: rate });
        }
        check_floor(floor)?;
        Ok(Self::Exponential { rate, floor })
    }

    /// Wraps an arbitrary positive integrable schedule. A schedule with
    /// `eps(0) != 1` makes `sigma2` jump at `T`; that is allowed but logged.
    pub fn custom(f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, floor: f64) -> Result<Self, ParamError> {
        check_floor(floor)?;
        let at_zero = f(0.0);
        if (at_zero - 1.0).abs() > 1e-12 {
            log::warn!("custom eps schedule has eps(0) = {at_zero}; sigma2 will be discontinuous at T");
        }
        Ok(Self::Custom { f, floor })
    }

    pub fn floor(&self) -> f64 {
        match self {
            Self::Exponential { floor, .. } | Self::Custom { floor, .. } => *floor,
        }
    }

    pub fn decay_rate(&self) -> Option<f64> {
        match self {
            Self::Exponential { rate, .. } => Some(*rate),
            Self::Custom { .. } => None,
        }
    }

    /// Unclamped value.
    pub fn raw(&self, t: f64) -> f64 {
        match self {
            Self::Exponential { rate, .. } => (-rate * t).exp(),
            Self::Custom { f, .. } => f(t),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.raw(t).max(self.floor())
    }
}

fn check_floor(floor: f64) -> Result<(), ParamError> {
    if floor.is_finite() && floor > 0.0 {
        Ok(())
    } else {
        Err(ParamError::NotPositive { name: "eps_floor", value: floor })
    }
}

/// Time-varying gains shared by the virtual laws, filters and update laws.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    sigma1: PerfRateFn,
    eps: EpsSchedule,
}

impl GainSchedule {
    pub fn new(sigma1: PerfRateFn, eps: EpsSchedule) -> Self {
        Self { sigma1, eps }
    }

    pub fn horizon(&self) -> f64 {
        self.sigma1.params.horizon
    }

    pub fn sigma_bar(&self) -> f64 {
        self.sigma1.params.mu_t
    }

    pub fn sigma1(&self, t: f64) -> f64 {
        self.sigma1.eval(t)
    }

    /// Leakage gain: equal to `sigma1` before `T`, `sigma_bar * eps(t - T)` after.
    pub fn sigma2(&self, t: f64) -> f64 {
        let horizon = self.horizon();
        let value = if t < horizon {
            self.sigma1.eval(t)
        } else {
            self.sigma_bar() * self.eps.raw(t - horizon)
        };
        value.max(self.eps.floor())
    }

    pub fn eps(&self, t: f64) -> f64 {
        self.eps.eval(t)
    }

    pub fn eps_schedule(&self) -> &EpsSchedule {
        &self.eps
    }

    pub fn rate_fn(&self) -> &PerfRateFn {
        &self.sigma1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn funnel() -> PerfRateFn {
        PerfRateFn::funnel(3.0, 0.2, 0.5, 1.0).unwrap()
    }

    fn central_difference(f: &PerfRateFn, t: f64, h: f64) -> f64 {
        (f.eval(t + h) - f.eval(t - h)) / (2.0 * h)
    }

    #[test]
    fn funnel_endpoints_and_midpoint() {
        let f = funnel();
        assert_eq!(f.eval(0.0), 3.0);
        assert_eq!(f.eval(0.75), 0.2);
        // (T-t)^2 = 0.0625, denominator 0.125, 0.2 + 2.8 * 0.5
        assert_relative_eq!(f.eval(0.25), 1.6, epsilon = 1e-14);
        assert_eq!(f.direction(), Direction::Decreasing);
    }

    #[test]
    fn derivative_zero_at_start_and_after_horizon() {
        let f = funnel();
        assert_eq!(f.derivative(0.0), 0.0);
        assert_eq!(f.derivative(1.0), 0.0);
        assert_eq!(f.derivative(0.5), 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let f = funnel();
        let analytic = f.derivative(0.25);
        let fd = central_difference(&f, 0.25, 1e-6);
        assert!((analytic - fd).abs() <= 1e-6 * analytic.abs().max(1.0), "{analytic} vs {fd}");
    }

    #[test]
    fn derivative_continuous_at_horizon() {
        let f = funnel();
        let near = f.derivative(0.5 - 1e-6);
        assert!(near.abs() <= 1e-3 * (3.0 - 0.2) / 0.5);
    }

    #[test]
    fn rate_function_rises_to_sigma_bar() {
        let s = PerfRateFn::rate(100.0, 0.5, 0.4).unwrap();
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(0.5), 100.0);
        assert_eq!(s.direction(), Direction::Increasing);
        assert!(s.derivative(0.3) > 0.0);
    }

    #[test]
    fn sigma2_piecewise_values() {
        let schedule = GainSchedule::new(
            PerfRateFn::rate(100.0, 0.5, 0.4).unwrap(),
            EpsSchedule::exponential(0.3, DEFAULT_EPS_FLOOR).unwrap(),
        );
        assert_eq!(schedule.sigma2(0.0), 1.0);
        assert_eq!(schedule.sigma2(0.5), 100.0);
        let late = schedule.sigma2(10.5);
        let oracle = 100.0 * f64::exp(-3.0);
        assert_relative_eq!(late, oracle, max_relative = 1e-14);
        assert_relative_eq!(late, 4.9787, epsilon = 1e-4);
        // continuity at T
        let before = schedule.sigma2(0.5 - 1e-12);
        assert!((before - schedule.sigma2(0.5)).abs() <= 1e-9 * 100.0);
    }

    #[test]
    fn eps_floor_clamps() {
        let eps = EpsSchedule::exponential(1.0, 1e-12).unwrap();
        assert_eq!(eps.eval(1e4), 1e-12);
        assert_eq!(eps.eval(0.0), 1.0);
    }

    #[test]
    fn eps_integral_matches_closed_form() {
        // Composite Simpson rule on exp(-a t) over [0, H].
        let a = 0.3;
        let h_end = 20.0;
        let eps = EpsSchedule::exponential(a, DEFAULT_EPS_FLOOR).unwrap();
        let n = 2000;
        let h = h_end / n as f64;
        let mut acc = eps.eval(0.0) + eps.eval(h_end);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * eps.eval(k as f64 * h);
        }
        let quad = acc * h / 3.0;
        let exact = (1.0 - (-a * h_end).exp()) / a;
        assert_relative_eq!(quad, exact, max_relative = 1e-6);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(PerfRateParams::new(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(PerfRateParams::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(PerfRateFn::funnel(0.2, 3.0, 0.5, 1.0).is_err());
        assert!(PerfRateFn::rate(1.0, 0.5, 1.0).is_err());
        assert!(EpsSchedule::exponential(0.1, 0.0).is_err());
    }

    #[test]
    fn custom_eps_accepted() {
        let eps = EpsSchedule::custom(Arc::new(|t: f64| 2.0 / (1.0 + t * t)), 1e-12).unwrap();
        assert_eq!(eps.eval(0.0), 2.0);
        assert!(eps.decay_rate().is_none());
    }
}
