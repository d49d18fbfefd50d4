//! Trajectory summaries, the residual-set calculator and sampled checkers
//! for the inequalities the controller relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::controller::{smoothed_envelope, smoothed_normalizer};
use crate::error::MetricsError;
use crate::perf_rate::{Direction, EpsSchedule, GainSchedule, PerfRateFn, PerfRateParams};
use crate::sim::{Rk4, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    /// Trapezoidal integral of `u^2` over the logged samples.
    pub energy: f64,
    /// `|e|` at the prescribed time, linearly interpolated; `None` if the run
    /// stopped before `T`.
    pub e_at_t: Option<f64>,
    pub max_funnel_ratio: f64,
    /// Mean `|e|` over the last 5% of the logged span.
    pub final_error: f64,
    pub max_abs_u: f64,
    pub theta_hat_max: Vec<f64>,
    pub completed: bool,
}

pub fn summarize(
    records: &[TrajectoryRecord],
    prescribed_time: f64,
    completed: bool,
) -> Result<MetricsSummary, MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyTrajectory)?;
    let last = records.last().ok_or(MetricsError::EmptyTrajectory)?;

    let energy = records
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].u * w[0].u + w[1].u * w[1].u))
        .sum();

    let e_at_t = if prescribed_time <= first.t {
        Some(first.e.abs())
    } else {
        records.windows(2).find(|w| w[0].t <= prescribed_time && prescribed_time <= w[1].t).map(|w| {
            let span = w[1].t - w[0].t;
            let a = if span > 0.0 { (prescribed_time - w[0].t) / span } else { 0.0 };
            (w[0].e + a * (w[1].e - w[0].e)).abs()
        })
    };

    let max_funnel_ratio = records.iter().map(|r| r.e.abs() / r.rho).fold(0.0, f64::max);
    let max_abs_u = records.iter().map(|r| r.u.abs()).fold(0.0, f64::max);

    let tail_start = last.t - 0.05 * (last.t - first.t);
    let tail: Vec<f64> = records.iter().filter(|r| r.t >= tail_start).map(|r| r.e.abs()).collect();
    let final_error = tail.iter().sum::<f64>() / tail.len() as f64;

    let mut theta_hat_max = vec![f64::NEG_INFINITY; first.theta_hat.len()];
    for r in records {
        for (m, v) in theta_hat_max.iter_mut().zip(&r.theta_hat) {
            *m = m.max(*v);
        }
    }

    Ok(MetricsSummary {
        energy,
        e_at_t,
        max_funnel_ratio,
        final_error,
        max_abs_u,
        theta_hat_max,
        completed,
    })
}

/// Residual region of the Lyapunov value at the prescribed time and the
/// induced error bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualBound {
    pub omega: f64,
    pub z1_bound: f64,
    /// Bounds for `z_2 .. z_n`.
    pub zi_bounds: Vec<f64>,
}

/// Inputs of [`residual_bound`]. `chi_bar` and `v0` are proof-side constants
/// supplied by the caller; the result is a diagnostic, not a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualInputs {
    pub v0: f64,
    pub varsigma_bar: f64,
    pub sigma_bar: f64,
    pub horizon: f64,
    pub chi_bar: f64,
    pub g1_lower: f64,
    pub rho_t: f64,
    pub gi_lower: Vec<f64>,
}

pub fn residual_bound(inp: &ResidualInputs) -> ResidualBound {
    let decay = (-inp.varsigma_bar * inp.sigma_bar * inp.horizon).exp();
    let omega = decay * inp.v0 + inp.chi_bar / inp.sigma_bar * (1.0 - decay);
    let z1_bound = (1.0 - 10f64.powf(-2.0 * inp.g1_lower * omega)).sqrt().min(inp.rho_t);
    let zi_bounds = inp.gi_lower.iter().map(|g| (2.0 * g * omega).sqrt()).collect();
    ResidualBound { omega, z1_bound, zi_bounds }
}

/// Outcome of a sampled check. `max_slack` is the largest observed
/// `lhs - rhs` of the inequality being checked (`<= 0` means it holds).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub samples: usize,
    pub violations: usize,
    pub max_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{name} violated: {detail}")]
pub struct CheckFailure {
    pub name: &'static str,
    pub detail: String,
}

/// Absolute slack allowed for round-off in the sampled inequality checks.
pub const INEQUALITY_TOL: f64 = 1e-12;

struct Tally {
    name: &'static str,
    samples: usize,
    max_slack: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, samples: 0, max_slack: f64::NEG_INFINITY }
    }

    fn record(&mut self, slack: f64, violated: bool, detail: impl FnOnce() -> String) -> Result<(), CheckFailure> {
        self.samples += 1;
        self.max_slack = self.max_slack.max(slack);
        if violated || slack.is_nan() {
            return Err(CheckFailure { name: self.name, detail: detail() });
        }
        Ok(())
    }

    fn finish(self) -> CheckReport {
        CheckReport { name: self.name, samples: self.samples, violations: 0, max_slack: self.max_slack }
    }
}

fn lemma4_slack(s: f64, theta: &[f64], phi: &[f64], tau: f64) -> f64 {
    let bound: f64 = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lhs = s * theta.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
    let rhs = bound * s * smoothed_normalizer(s, phi, tau) + tau * bound;
    lhs - rhs
}

/// Samples `s Theta^T Phi <= |Theta| s^2 Phi^T Phi / sqrt(s^2 Phi^T Phi + tau^2) + tau |Theta|`.
pub fn check_lemma4(samples: usize, seed: u64) -> Result<CheckReport, CheckFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("lemma4_sqrt_bound");
    let fixed = [
        (0.0, [1.0, -2.0, 3.0, 0.5], [4.0, 0.1, -1.0, 2.0], 0.3),
        (2.5, [0.0; 4], [4.0, 0.1, -1.0, 2.0], 0.3),
    ];
    for (s, theta, phi, tau) in fixed {
        let slack = lemma4_slack(s, &theta, &phi, tau);
        tally.record(slack, slack > INEQUALITY_TOL, || format!("s={s} theta={theta:?} phi={phi:?} tau={tau}"))?;
    }
    for _ in 0..samples {
        let s = rng.gen_range(-10.0..=10.0);
        let theta: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..=10.0));
        let phi: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..=10.0));
        let tau = 1.0 - rng.gen::<f64>();
        let slack = lemma4_slack(s, &theta, &phi, tau);
        tally.record(slack, slack > INEQUALITY_TOL, || format!("s={s} theta={theta:?} phi={phi:?} tau={tau}"))?;
    }
    Ok(tally.finish())
}

/// `rhs - lhs` of `log(k^2/(k^2-s^2)) < s^2/(k^2-s^2)`, written as
/// `v - ln(1 + v)` with `v = s^2 / (k^2 - s^2)`.
fn lemma5_gap(s: f64, k: f64) -> f64 {
    let v = s * s / ((k - s) * (k + s));
    if v < 1e-3 {
        // Alternating series; truncation error below v^6 / 6.
        v * v * (0.5 - v * (1.0 / 3.0 - v * (0.25 - v / 5.0)))
    } else {
        v - v.ln_1p()
    }
}

/// Samples `log(k^2/(k^2 - s^2)) < s^2/(k^2 - s^2)` for `0 < |s| < k <= 10`.
pub fn check_lemma5(samples: usize, seed: u64) -> Result<CheckReport, CheckFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("lemma5_log_barrier");
    let probe = |s: f64, k: f64, tally: &mut Tally| {
        let gap = lemma5_gap(s, k);
        tally.record(-gap, !(gap > 0.0), || format!("s={s} k={k} gap={gap}"))
    };
    for k in [0.01, 1.0, 10.0] {
        for ratio in [0.9, -0.9, 1.0 - 1e-6, -(1.0 - 1e-6), 1e-4] {
            probe(ratio * k, k, &mut tally)?;
        }
    }
    for _ in 0..samples {
        let k = 10.0 * (1.0 - rng.gen::<f64>());
        let ratio: f64 = rng.gen_range(-1.0..1.0);
        if ratio == 0.0 || ratio.abs() > 1.0 - 1e-6 {
            continue;
        }
        probe(ratio * k, k, &mut tally)?;
    }
    Ok(tally.finish())
}

/// Samples `z * psi_hat(z, psi, eps) >= |z| psi - eps` for the smooth envelope.
pub fn check_smoothing(samples: usize, seed: u64) -> Result<CheckReport, CheckFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("smoothed_envelope_bound");
    for _ in 0..samples {
        let z: f64 = rng.gen_range(-10.0..=10.0);
        let psi = rng.gen_range(0.0..=10.0);
        let eps = 1.0 - rng.gen::<f64>();
        let slack = z.abs() * psi - eps - z * smoothed_envelope(z, psi, eps);
        tally.record(slack, slack > INEQUALITY_TOL, || format!("z={z} psi={psi} eps={eps}"))?;
    }
    Ok(tally.finish())
}

/// Verifies `r >= 0` along the records and that consecutive samples satisfy
/// `r' = -c_bar r + upsilon_bar(x1) + d` up to `1e-3 max(1, |rhs|)`.
pub fn check_dynamic_signal(
    records: &[TrajectoryRecord],
    c_bar: f64,
    upsilon_bar: &dyn Fn(f64) -> f64,
    d: f64,
) -> Result<CheckReport, CheckFailure> {
    let mut tally = Tally::new("dynamic_signal_residual");
    let rhs = |r: &TrajectoryRecord| -c_bar * r.r + upsilon_bar(r.x[0]) + d;
    for rec in records {
        if rec.r < 0.0 {
            return Err(CheckFailure { name: tally.name, detail: format!("r={} < 0 at t={}", rec.r, rec.t) });
        }
    }
    for w in records.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            continue;
        }
        let slope = (w[1].r - w[0].r) / dt;
        let mean_rhs = 0.5 * (rhs(&w[0]) + rhs(&w[1]));
        let scale = 1e-3 * mean_rhs.abs().max(1.0);
        let residual = (slope - mean_rhs).abs();
        tally.record(residual - scale, residual > scale, || format!("t={} residual={residual}", w[0].t))?;
    }
    Ok(tally.finish())
}

/// Integrates `r' = -c r + d` with the simulator's RK4 and compares with the
/// closed form `r(t) = d/c + (r0 - d/c) exp(-c t)`; max error must stay within `1e-6`.
pub fn dynamic_signal_oracle(c_bar: f64, d: f64, r0: f64, horizon: f64, dt: f64) -> Result<CheckReport, CheckFailure> {
    let mut tally = Tally::new("dynamic_signal_closed_form");
    let mut rk4 = Rk4::new(1);
    let mut r = [r0];
    let steps = (horizon / dt).round() as usize;
    for k in 0..steps {
        rk4.step::<()>(k as f64 * dt, dt, &mut r, None, |_, y, dy| {
            dy[0] = -c_bar * y[0] + d;
            Ok(())
        })
        .expect("infallible");
        let t = (k + 1) as f64 * dt;
        let exact = d / c_bar + (r0 - d / c_bar) * (-c_bar * t).exp();
        let err = (r[0] - exact).abs();
        tally.record(err - 1e-6, err > 1e-6 || r[0] < 0.0, || format!("t={t} r={} exact={exact}", r[0]))?;
    }
    Ok(tally.finish())
}

/// Randomised property suite for the performance-rate family: exact
/// endpoints, monotonicity, analytic derivative against central differences,
/// the C1 junction at `T` and continuity of `sigma2` at `T`.
pub fn check_perf_rate(draws: usize, grid: usize, seed: u64) -> Result<CheckReport, CheckFailure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("perf_rate_properties");
    let fail = |detail: String| CheckFailure { name: "perf_rate_properties", detail };
    let mut times = Vec::with_capacity(grid);
    for _ in 0..draws {
        let mu0 = 10f64.powf(rng.gen_range(-2.0..2.0));
        let mut mu_t = 10f64.powf(rng.gen_range(-2.0..2.0));
        if mu_t == mu0 {
            mu_t *= 2.0;
        }
        let horizon = 10f64.powf(rng.gen_range(-1.0..1.0));
        let shape = 10f64.powf(rng.gen_range(-0.7..0.7));
        let params = PerfRateParams::new(mu0, mu_t, horizon, shape).map_err(|e| fail(e.to_string()))?;
        let f = PerfRateFn::new(params);
        let desc = || format!("mu0={mu0} mu_t={mu_t} T={horizon} upsilon={shape}");

        if f.eval(0.0) != mu0 || f.eval(horizon) != mu_t || f.eval(horizon * 1.5) != mu_t {
            return Err(fail(format!("endpoint mismatch for {}", desc())));
        }
        if f.derivative(0.0) != 0.0 || f.derivative(horizon) != 0.0 || f.derivative(2.0 * horizon) != 0.0 {
            return Err(fail(format!("derivative not frozen for {}", desc())));
        }
        let near = f.derivative(horizon - 1e-6).abs();
        let limit = 1e-3 * (mu0 - mu_t).abs() / horizon;
        tally.record(near - limit, near > limit, || format!("C1 junction: {} |mu'(T-)|={near}", desc()))?;

        times.clear();
        times.extend((0..grid).map(|_| rng.gen_range(0.0..horizon)));
        times.sort_by(f64::total_cmp);
        let sign = match f.direction() {
            Direction::Decreasing => -1.0,
            Direction::Increasing => 1.0,
            Direction::Constant => 0.0,
        };
        let h = 1e-6 * horizon;
        let mut prev = f.eval(0.0);
        for &t in &times {
            let value = f.eval(t);
            if sign * (value - prev) < 0.0 {
                return Err(fail(format!("not monotone at t={t} for {}", desc())));
            }
            prev = value;
            let analytic = f.derivative(t);
            if t > 0.0 && !(sign * analytic > 0.0) {
                return Err(fail(format!("derivative sign wrong at t={t} for {}", desc())));
            }
            if t + h < horizon {
                let fd = (f.eval(t + h) - f.eval(t - h)) / (2.0 * h);
                let tol = 1e-6 * analytic.abs().max(1.0);
                let err = (analytic - fd).abs();
                tally.record(err - tol, err > tol, || format!("t={t} analytic={analytic} fd={fd} for {}", desc()))?;
            }
        }

        let sigma_bar = 1.0 + 10f64.powf(rng.gen_range(-1.0..3.0));
        let rate = rng.gen_range(0.01..5.0);
        let schedule = GainSchedule::new(
            PerfRateFn::rate(sigma_bar, horizon, shape).map_err(|e| fail(e.to_string()))?,
            EpsSchedule::exponential(rate, crate::perf_rate::DEFAULT_EPS_FLOOR).map_err(|e| fail(e.to_string()))?,
        );
        let jump = (schedule.sigma2(horizon * (1.0 - 1e-12)) - schedule.sigma2(horizon)).abs();
        let limit = 1e-9 * sigma_bar;
        tally.record(jump - limit, jump > limit, || format!("sigma2 jump {jump} at T={horizon}"))?;
    }
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(t: f64, u: f64, e: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            x: vec![e],
            xi: vec![],
            r: 0.0,
            z: vec![e],
            w: vec![],
            u,
            alpha: vec![],
            alpha_c: vec![],
            theta_hat: vec![t],
            gamma_hat: vec![],
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 1.0,
            e,
        }
    }

    fn grid(u: impl Fn(f64) -> f64) -> Vec<TrajectoryRecord> {
        (0..=1000).map(|k| k as f64 * 0.01).map(|t| record(t, u(t), 0.1 * t)).collect()
    }

    #[test]
    fn energy_of_constant_inputs() {
        assert_eq!(summarize(&grid(|_| 0.0), 0.5, true).unwrap().energy, 0.0);
        assert_relative_eq!(summarize(&grid(|_| 1.0), 0.5, true).unwrap().energy, 10.0, max_relative = 1e-12);
    }

    #[test]
    fn error_at_prescribed_time_is_interpolated() {
        let m = summarize(&grid(|_| 0.0), 0.505, true).unwrap();
        assert_relative_eq!(m.e_at_t.unwrap(), 0.0505, max_relative = 1e-12);
        let short: Vec<_> = grid(|_| 0.0).into_iter().take(10).collect();
        assert!(summarize(&short, 0.5, false).unwrap().e_at_t.is_none());
    }

    #[test]
    fn summary_fields() {
        let m = summarize(&grid(|t| -t), 0.5, true).unwrap();
        assert_relative_eq!(m.max_funnel_ratio, 1.0);
        assert_relative_eq!(m.max_abs_u, 10.0);
        assert_eq!(m.theta_hat_max, vec![10.0]);
        // mean of 0.1 t over t in [9.5, 10]
        assert_relative_eq!(m.final_error, 0.975, max_relative = 1e-12);
    }

    #[test]
    fn empty_trajectory() {
        assert_eq!(summarize(&[], 0.5, true), Err(MetricsError::EmptyTrajectory));
    }

    #[test]
    fn energy_monotone_under_domination() {
        let small = summarize(&grid(|t| (3.0 * t).sin()), 0.5, true).unwrap().energy;
        let large = summarize(&grid(|t| 1.5 * (3.0 * t).sin() + (3.0 * t).sin().signum() * 0.1), 0.5, true)
            .unwrap()
            .energy;
        assert!(small <= large);
    }

    fn residual(v0: f64, sigma_bar: f64, chi_bar: f64) -> ResidualBound {
        residual_bound(&ResidualInputs {
            v0,
            varsigma_bar: 1.0,
            sigma_bar,
            horizon: 0.5,
            chi_bar,
            g1_lower: 1.0,
            rho_t: 0.02,
            gi_lower: vec![2.0],
        })
    }

    #[test]
    fn residual_bound_cases() {
        let zero = residual(0.0, 100.0, 0.0);
        assert_eq!(zero.omega, 0.0);
        assert_eq!(zero.z1_bound, 0.0);
        assert_eq!(zero.zi_bounds, vec![0.0]);

        let b = residual(1.0, 100.0, 10.0);
        let e50 = (-50.0f64).exp();
        assert_relative_eq!(b.omega, e50 + 0.1 * (1.0 - e50), max_relative = 1e-14);
        assert_relative_eq!(b.zi_bounds[0], (0.4 * b.omega / 0.1).sqrt(), max_relative = 1e-12);
        assert_eq!(b.z1_bound, 0.02);
    }

    #[test]
    fn residual_bound_monotone() {
        let mut prev = f64::INFINITY;
        for s in [1.5, 2.0, 5.0, 20.0, 100.0, 1000.0] {
            let o = residual(1.0, s, 10.0).omega;
            assert!(o < prev);
            prev = o;
        }
        assert!(residual(1.0, 50.0, 11.0).omega > residual(1.0, 50.0, 10.0).omega);
    }

    #[test]
    fn lemma_checks_pass_small() {
        assert_eq!(check_lemma4(2000, 1).unwrap().violations, 0);
        assert_eq!(check_lemma5(2000, 1).unwrap().violations, 0);
        assert_eq!(check_smoothing(2000, 1).unwrap().violations, 0);
        assert!(check_perf_rate(50, 50, 1).is_ok());
    }

    #[test]
    fn lemma5_gap_small_argument() {
        let gap = lemma5_gap(1e-9, 1.0);
        assert!(gap > 0.0);
        assert_relative_eq!(gap, 0.5e-36, max_relative = 1e-6);
    }

    #[test]
    fn dynamic_signal_oracles() {
        assert!(dynamic_signal_oracle(1.0, 0.625, 0.0, 10.0, 1e-3).is_ok());
        assert!(dynamic_signal_oracle(1.0, 0.0, 1.0, 10.0, 1e-3).is_ok());
    }

    #[test]
    fn dynamic_signal_residual_detects_mismatch() {
        let recs: Vec<_> = (0..=100)
            .map(|k| {
                let t = k as f64 * 0.01;
                let mut r = record(t, 0.0, 0.0);
                r.r = 0.625 * (1.0 - (-t).exp());
                r
            })
            .collect();
        assert!(check_dynamic_signal(&recs, 1.0, &|_| 0.0, 0.625).is_ok());
        assert!(check_dynamic_signal(&recs, 1.0, &|_| 0.0, 1.0).is_err());
    }
}
