//! Forward-noising schedules, discrete and continuous.
//!
//! The discrete schedule drives the edit kernel: step `t` carries
//! `alpha_bar(t) = prod_{s<=t} (1 - beta_s)` with `alpha_bar(0) = 1`. The
//! continuous schedule exists for the closed-form mean-decay factor
//! `exp(-integral(beta)/2)` that the coupled SDE simulation is checked
//! against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{sc, Scalar};

/// Serialisable schedule description used by run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Linear {
        beta_start: f64,
        beta_end: f64,
        steps: usize,
    },
    Constant {
        beta: f64,
        steps: usize,
    },
    CosineLike {
        steps: usize,
    },
}

impl Default for ScheduleSpec {
    /// Linear ramp 1e-4 to 0.2 over 100 steps. Nothing in the protocol pins
    /// these numbers; configs may override all of them.
    fn default() -> Self {
        ScheduleSpec::Linear {
            beta_start: 1e-4,
            beta_end: 0.2,
            steps: 100,
        }
    }
}

/// Discrete noising schedule with precomputed cumulative products.
#[derive(Debug, Clone)]
pub struct NoiseSchedule<T> {
    spec: ScheduleSpec,
    betas: Vec<T>,
    // alpha_bars[t] for t in 0..=steps; alpha_bars[0] == 1.
    alpha_bars: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn from_spec(spec: ScheduleSpec) -> Result<Self> {
        let betas: Vec<T> = match spec {
            ScheduleSpec::Linear {
                beta_start,
                beta_end,
                steps,
            } => {
                if steps == 0 {
                    return Err(Error::InvalidConfig("schedule needs at least one step".into()));
                }
                (0..steps)
                    .map(|i| {
                        let frac = if steps == 1 {
                            0.0
                        } else {
                            i as f64 / (steps - 1) as f64
                        };
                        sc(beta_start + (beta_end - beta_start) * frac)
                    })
                    .collect()
            }
            ScheduleSpec::Constant { beta, steps } => {
                if steps == 0 {
                    return Err(Error::InvalidConfig("schedule needs at least one step".into()));
                }
                vec![sc(beta); steps]
            }
            ScheduleSpec::CosineLike { steps } => {
                if steps == 0 {
                    return Err(Error::InvalidConfig("schedule needs at least one step".into()));
                }
                // Squared-cosine cumulative profile with the usual small
                // offset; betas are recovered from successive ratios and
                // clamped away from 1.
                let s = 0.008;
                let f = |t: f64| {
                    let arg = (t / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
                    arg.cos().powi(2)
                };
                (1..=steps)
                    .map(|t| {
                        let ratio = f(t as f64) / f(t as f64 - 1.0);
                        sc((1.0 - ratio).clamp(1e-8, 0.999))
                    })
                    .collect()
            }
        };
        for (i, b) in betas.iter().enumerate() {
            let b = b.to_f64().expect("scalar converts to f64");
            if !(0.0..1.0).contains(&b) || b == 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "beta[{i}] = {b} outside (0, 1)"
                )));
            }
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        let mut acc = T::one();
        alpha_bars.push(acc);
        for &b in &betas {
            acc *= T::one() - b;
            alpha_bars.push(acc);
        }
        Ok(NoiseSchedule {
            spec,
            betas,
            alpha_bars,
        })
    }

    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    /// Number of noising steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=steps`.
    pub fn beta(&self, t: usize) -> Result<T> {
        if t == 0 || t > self.betas.len() {
            return Err(Error::OutOfRange(format!(
                "beta index {t} outside 1..={}",
                self.betas.len()
            )));
        }
        Ok(self.betas[t - 1])
    }

    /// Cumulative product `alpha_bar(t)` for `t` in `0..=steps`.
    pub fn alpha_bar(&self, t: usize) -> Result<T> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or_else(|| Error::OutOfRange(format!(
                "step {t} outside 0..={}",
                self.steps()
            )))
    }

    /// Maps an edit strength in `[0, 1]` to its starting step
    /// `round(t_star * steps)`.
    pub fn start_step(&self, t_star: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t_star) {
            return Err(Error::OutOfRange(format!(
                "edit strength {t_star} outside [0, 1]"
            )));
        }
        Ok((t_star * self.steps() as f64).round() as usize)
    }

    /// Watermark power ratio after noising to step `t`:
    /// `gamma^2 * alpha_bar / (1 - alpha_bar)`; infinite at `t = 0` where no
    /// noise has been injected.
    pub fn snr_theoretical(&self, t: usize, gamma: T) -> Result<T> {
        let ab = self.alpha_bar(t)?;
        if t == 0 {
            return Ok(T::infinity());
        }
        Ok(gamma * gamma * ab / (T::one() - ab))
    }
}

/// Continuous-time coefficient function for the mean-reverting SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuousSchedule {
    Constant { beta: f64 },
    /// `beta(u) = beta0 + slope * u`.
    LinearRamp { beta0: f64, slope: f64 },
}

impl ContinuousSchedule {
    pub fn beta_at(&self, t: f64) -> f64 {
        match *self {
            ContinuousSchedule::Constant { beta } => beta,
            ContinuousSchedule::LinearRamp { beta0, slope } => beta0 + slope * t,
        }
    }

    /// Closed-form `integral_0^t beta(u) du`.
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            ContinuousSchedule::Constant { beta } => beta * t,
            ContinuousSchedule::LinearRamp { beta0, slope } => beta0 * t + slope * t * t / 2.0,
        }
    }

    /// Deterministic decay factor `exp(-integral(t)/2)` of the SDE mean and
    /// of coupled-path differences.
    pub fn mean_decay_factor(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::OutOfRange(format!("negative time {t}")));
        }
        Ok((-self.integral(t) / 2.0).exp())
    }
}
