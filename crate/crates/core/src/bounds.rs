//! Closed-form information and contraction bounds, plus the Monte-Carlo
//! oracles that verify them on small exactly-enumerable channels.
//!
//! The verification channel is Y = √ᾱ·γ·s(M) + √(1−ᾱ)·ε with M uniform over
//! 2^L messages and s(M) a sum of orthogonal ±1-derived carriers. Capping
//! L ≤ 8 and d ≤ 64 keeps exact mixture enumeration cheap.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::stream::{derive_stream, RngStream};

/// Lane index for drawing verification-channel carriers.
pub const LANE_CHANNEL: u64 = 102;

/// Largest payload for which the 2^L mixture is enumerated exactly.
pub const MAX_CHANNEL_BITS: usize = 8;

/// Largest ambient dimension of the verification channel.
pub const MAX_CHANNEL_DIM: usize = 64;

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// A small additive-noise channel with enumerable message set.
///
/// Carriers are drawn as ±1 vectors and orthogonalized exactly, each with
/// squared norm d, so every message signal satisfies ‖s(m)‖² = d and the
/// per-coordinate signal power is γ²ᾱ.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    d: usize,
    l: usize,
    gamma: f64,
    alpha_bar: f64,
    carriers: Vec<Vec<f64>>,
}

impl ChannelSpec {
    /// Builds the channel for dimension `d`, payload `l` bits, strength
    /// `gamma`, and signal retention `alpha_bar`, with carriers derived from
    /// `seed`.
    ///
    /// # Arguments
    /// * `d` - ambient dimension, `l ..= 64`
    /// * `l` - payload bits, `1 ..= 8`
    /// * `gamma` - nonnegative embedding strength
    /// * `alpha_bar` - fraction of signal variance surviving, in (0, 1)
    /// * `seed` - master seed for the carrier draw
    ///
    /// # Returns
    /// The channel, or an error when a cap or range is violated.
    pub fn new(d: usize, l: usize, gamma: f64, alpha_bar: f64, seed: u64) -> Result<Self> {
        if l == 0 || l > MAX_CHANNEL_BITS {
            return Err(Error::InvalidConfig(format!(
                "payload bits must be 1..={MAX_CHANNEL_BITS}, got {l}"
            )));
        }
        if d < l || d > MAX_CHANNEL_DIM {
            return Err(Error::InvalidConfig(format!(
                "dimension must be {l}..={MAX_CHANNEL_DIM}, got {d}"
            )));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::OutOfRange(format!(
                "strength must be finite and nonnegative, got {gamma}"
            )));
        }
        if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
            return Err(Error::OutOfRange(format!(
                "signal retention must lie in (0, 1), got {alpha_bar}"
            )));
        }
        let mut rng = derive_stream(seed, &[LANE_CHANNEL]);
        let carriers = draw_orthogonal_carriers(d, l, &mut rng)?;
        Ok(Self {
            d,
            l,
            gamma,
            alpha_bar,
            carriers,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    pub fn carrier(&self, i: usize) -> &[f64] {
        &self.carriers[i]
    }

    /// Unit-power signal for a message: Σ (2mᵢ − 1)·cᵢ / √L.
    pub fn signal(&self, msg: &[u8]) -> Result<Vec<f64>> {
        if msg.len() != self.l {
            return Err(Error::ShapeMismatch(format!(
                "message has {} bits, channel carries {}",
                msg.len(),
                self.l
            )));
        }
        if msg.iter().any(|b| *b > 1) {
            return Err(Error::BadPayload("message bits must be 0 or 1".into()));
        }
        let inv_sqrt_l = 1.0 / (self.l as f64).sqrt();
        let mut s = vec![0.0f64; self.d];
        for (bit, carrier) in msg.iter().zip(&self.carriers) {
            let sign = if *bit == 1 { inv_sqrt_l } else { -inv_sqrt_l };
            for (acc, c) in s.iter_mut().zip(carrier) {
                *acc += sign * c;
            }
        }
        Ok(s)
    }

    /// Capacity-style ceiling on I(M; Y) in nats: (d/2)·ln(1 + γ²ᾱ/(1−ᾱ)).
    pub fn mi_upper_bound(&self) -> f64 {
        mi_upper_bound(self.d, self.gamma, self.alpha_bar)
    }

    /// Monte-Carlo estimate of I(M; Y) in nats via the exact mixture
    /// identity, I = E[ln p(Y|M) − ln p(Y)] with p(Y) enumerated over all
    /// 2^L messages. Requires `n_samples ≥ 10_000`.
    pub fn mi_monte_carlo(&self, n_samples: usize, rng: &mut RngStream) -> Result<MonteCarloEstimate> {
        self.mi_mixture(None, n_samples, rng)
    }

    /// Same estimate after the deterministic per-coordinate map yᵢ ↦ gᵢ·yᵢ.
    ///
    /// Nonzero gains rescale a coordinate's signal and noise together and
    /// cancel from every likelihood ratio; zero gains erase the coordinate,
    /// so the estimate is the mixture MI restricted to surviving coordinates.
    pub fn mi_monte_carlo_postmap(
        &self,
        gains: &[f64],
        n_samples: usize,
        rng: &mut RngStream,
    ) -> Result<MonteCarloEstimate> {
        if gains.len() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "{} gains for dimension {}",
                gains.len(),
                self.d
            )));
        }
        if gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::OutOfRange("post-map gains must be finite".into()));
        }
        let keep: Vec<usize> = (0..self.d).filter(|i| gains[*i] != 0.0).collect();
        self.mi_mixture(Some(&keep), n_samples, rng)
    }

    fn mi_mixture(
        &self,
        keep: Option<&[usize]>,
        n_samples: usize,
        rng: &mut RngStream,
    ) -> Result<MonteCarloEstimate> {
        check_samples(n_samples)?;
        let means = self.message_means();
        let count = means.len();
        let ln_count = (self.l as f64) * std::f64::consts::LN_2;
        let inv_two_v = 1.0 / (2.0 * (1.0 - self.alpha_bar));
        let noise_std = (1.0 - self.alpha_bar).sqrt();
        let mut y = vec![0.0f64; self.d];
        let mut exponents = vec![0.0f64; count];
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for trial in 0..n_samples {
            let m = (rng.next_u64() & (count as u64 - 1)) as usize;
            for (slot, mu) in y.iter_mut().zip(&means[m]) {
                *slot = mu + noise_std * rng.normal();
            }
            for (e, mu) in exponents.iter_mut().zip(&means) {
                *e = -dist_sq(&y, mu, keep) * inv_two_v;
            }
            let sample = exponents[m] - logsumexp(&exponents) + ln_count;
            // Welford running moments keep the stderr single-pass.
            let delta = sample - mean;
            mean += delta / (trial + 1) as f64;
            m2 += delta * (sample - mean);
        }
        let var = m2 / (n_samples - 1) as f64;
        Ok(MonteCarloEstimate {
            value: mean,
            stderr: (var / n_samples as f64).sqrt(),
        })
    }

    /// Empirical full-message error of the exhaustive maximum-likelihood
    /// decoder, with binomial standard error. Ties resolve to the lowest
    /// message index so the γ = 0 channel decodes every draw to message 0.
    pub fn ml_decoder_error(&self, n_trials: usize, rng: &mut RngStream) -> Result<MonteCarloEstimate> {
        check_samples(n_trials)?;
        let means = self.message_means();
        let count = means.len();
        let noise_std = (1.0 - self.alpha_bar).sqrt();
        let mut y = vec![0.0f64; self.d];
        let mut errors = 0usize;
        for _ in 0..n_trials {
            let m = (rng.next_u64() & (count as u64 - 1)) as usize;
            for (slot, mu) in y.iter_mut().zip(&means[m]) {
                *slot = mu + noise_std * rng.normal();
            }
            let mut best = 0usize;
            let mut best_d2 = dist_sq(&y, &means[0], None);
            for (idx, mu) in means.iter().enumerate().skip(1) {
                let d2 = dist_sq(&y, mu, None);
                if d2 < best_d2 {
                    best = idx;
                    best_d2 = d2;
                }
            }
            errors += usize::from(best != m);
        }
        let p = errors as f64 / n_trials as f64;
        Ok(MonteCarloEstimate {
            value: p,
            stderr: (p * (1.0 - p) / n_trials as f64).sqrt(),
        })
    }

    /// Received means √ᾱ·γ·s(m) for every message, indexed by the integer
    /// whose bit i is message bit i.
    fn message_means(&self) -> Vec<Vec<f64>> {
        let scale = self.alpha_bar.sqrt() * self.gamma;
        (0..1usize << self.l)
            .map(|m| {
                let bits: Vec<u8> = (0..self.l).map(|i| ((m >> i) & 1) as u8).collect();
                let mut s = self.signal(&bits).expect("enumerated message is valid");
                for v in &mut s {
                    *v *= scale;
                }
                s
            })
            .collect()
    }
}

/// Capacity-style ceiling on the message information in nats.
pub fn mi_upper_bound(d: usize, gamma: f64, alpha_bar: f64) -> f64 {
    let snr = gamma * gamma * alpha_bar / (1.0 - alpha_bar);
    (d as f64 / 2.0) * snr.ln_1p()
}

/// Fano lower bound on full-message error: max(0, 1 − (mi + ln 2)/(L·ln 2)).
pub fn fano_lower_bound(mi_nats: f64, l: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::InvalidConfig("payload must have at least one bit".into()));
    }
    if !(mi_nats.is_finite() && mi_nats >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "mutual information must be finite and nonnegative, got {mi_nats}"
        )));
    }
    let bound = 1.0 - (mi_nats + std::f64::consts::LN_2) / (l as f64 * std::f64::consts::LN_2);
    Ok(bound.max(0.0))
}

/// Norm ceiling after n steps of a ρ-contractive map: ρⁿ·‖δ‖.
pub fn contraction_bound(rho: f64, n_steps: usize, delta_norm: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::OutOfRange(format!(
            "contraction factor must lie in (0, 1), got {rho}"
        )));
    }
    if n_steps == 0 {
        return Err(Error::InvalidConfig("contraction needs at least one step".into()));
    }
    if !(delta_norm.is_finite() && delta_norm >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "perturbation norm must be finite and nonnegative, got {delta_norm}"
        )));
    }
    Ok(rho.powi(n_steps as i32) * delta_norm)
}

fn check_samples(n: usize) -> Result<()> {
    if n < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "Monte-Carlo runs need at least 10000 samples, got {n}"
        )));
    }
    Ok(())
}

fn dist_sq(y: &[f64], mu: &[f64], keep: Option<&[usize]>) -> f64 {
    match keep {
        None => y
            .iter()
            .zip(mu)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum(),
        Some(idx) => idx
            .iter()
            .map(|&i| {
                let d = y[i] - mu[i];
                d * d
            })
            .sum(),
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn draw_orthogonal_carriers(d: usize, l: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(l);
    for _ in 0..l {
        let mut accepted = false;
        for _attempt in 0..32 {
            let mut v: Vec<f64> = (0..d)
                .map(|_| if rng.bit() == 1 { 1.0 } else { -1.0 })
                .collect();
            // Modified Gram-Schmidt against rows that already have ‖row‖² = d.
            for prev in &rows {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                let coeff = dot / d as f64;
                for (slot, p) in v.iter_mut().zip(prev) {
                    *slot -= coeff * p;
                }
            }
            let norm_sq: f64 = v.iter().map(|x| x * x).sum();
            if norm_sq > 1e-9 * d as f64 {
                let rescale = (d as f64 / norm_sq).sqrt();
                for slot in &mut v {
                    *slot *= rescale;
                }
                rows.push(v);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::InvalidConfig(
                "carrier draw degenerated; dimension too small for payload".into(),
            ));
        }
    }
    Ok(rows)
}
