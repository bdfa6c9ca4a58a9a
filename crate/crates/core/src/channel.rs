//! Quantized block-fading channel.
//!
//! The gain axis is cut at thresholds `z_0 = 0 < z_1 < ... < z_K = inf`.
//! Bin `i` covers `[z_{i-1}, z_i)`, so transmitting at the power that just
//! clears `z_k` fails exactly when the gain falls in bins `1..=k`:
//!
//! ```text
//! P_k = (2^R - 1) / z_k        eps_k = Pr{gain < z_k} = sum_{i<=k} beta_i
//! ```
//!
//! Level `K` is the silent level: `P_K = 0` and `eps_K = 1`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Distribution of the per-slot channel gain (unit noise power, dimensionless).
pub trait FadingDistribution: Send + Sync {
    fn cdf(&self, gain: f64) -> f64;
    fn quantile(&self, p: f64) -> f64;
    fn label(&self) -> &str;
}

/// Exponential power gain, i.e. Rayleigh amplitude fading.
#[derive(Debug, Clone, PartialEq)]
pub struct Exponential {
    mean: f64,
    label: String,
}

impl Exponential {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Domain(format!("exponential mean must be positive, got {mean}")));
        }
        let label = if mean == 1.0 {
            "exponential_unit_mean".to_string()
        } else {
            format!("exponential_mean_{mean}")
        };
        Ok(Exponential { mean, label })
    }

    pub fn unit_mean() -> Self {
        Exponential {
            mean: 1.0,
            label: "exponential_unit_mean".to_string(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

impl FadingDistribution for Exponential {
    fn cdf(&self, gain: f64) -> f64 {
        if gain <= 0.0 {
            0.0
        } else {
            -(-gain / self.mean).exp_m1()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p >= 1.0 {
            f64::INFINITY
        } else {
            -self.mean * (-p).ln_1p()
        }
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Looks up a built-in distribution by its config name.
pub fn distribution_by_name(name: &str) -> Result<Arc<dyn FadingDistribution>> {
    match name {
        "exponential_unit_mean" | "rayleigh_unit_mean" => Ok(Arc::new(Exponential::unit_mean())),
        other => Err(Error::config(
            "channel.distribution",
            format!("unknown distribution `{other}` (known: exponential_unit_mean)"),
        )),
    }
}

pub fn dbw_to_watt(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

pub fn watt_to_dbw(watts: f64) -> Result<f64> {
    if !(watts > 0.0) {
        return Err(Error::Domain(format!("cannot express {watts} W in dBw")));
    }
    Ok(10.0 * watts.log10())
}

/// SNR a single slot must clear to carry rate `rate` bits/s/Hz.
pub fn required_snr(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

#[derive(Clone)]
pub struct ChannelModel {
    dist: Arc<dyn FadingDistribution>,
    rate: f64,
    thresholds: Vec<f64>,
    bin_probs: Vec<f64>,
    powers: Vec<f64>,
    failure_probs: Vec<f64>,
}

impl fmt::Debug for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelModel")
            .field("dist", &self.dist.label())
            .field("levels", &self.levels())
            .field("rate", &self.rate)
            .field("thresholds", &self.thresholds)
            .field("powers", &self.powers)
            .field("failure_probs", &self.failure_probs)
            .finish()
    }
}

impl ChannelModel {
    /// Equiprobable quantization: `z_k = quantile(k / K)`, every `beta_i = 1 / K`.
    pub fn quantize(dist: Arc<dyn FadingDistribution>, levels: usize, rate: f64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Domain("number of channel levels must be at least 1".into()));
        }
        check_rate(rate)?;
        let k_total = levels as f64;
        let mut thresholds = Vec::with_capacity(levels + 1);
        thresholds.push(0.0);
        for k in 1..levels {
            let z = dist.quantile(k as f64 / k_total);
            if !z.is_finite() || z <= 0.0 {
                return Err(Error::InvalidDistribution {
                    label: dist.label().to_string(),
                    reason: format!("quantile({k}/{levels}) = {z} is not a positive finite gain"),
                });
            }
            thresholds.push(z);
        }
        thresholds.push(f64::INFINITY);
        check_increasing(dist.label(), &thresholds)?;

        let failure_probs = (1..=levels).map(|k| k as f64 / k_total).collect();
        let bin_probs = vec![1.0 / k_total; levels];
        let powers = powers_for(&thresholds, rate);
        Ok(ChannelModel {
            dist,
            rate,
            thresholds,
            bin_probs,
            powers,
            failure_probs,
        })
    }

    /// General quantization from interior thresholds `z_1 < ... < z_{K-1}`;
    /// bin probabilities come from the CDF.
    pub fn from_thresholds(
        dist: Arc<dyn FadingDistribution>,
        interior: &[f64],
        rate: f64,
    ) -> Result<Self> {
        check_rate(rate)?;
        let mut thresholds = Vec::with_capacity(interior.len() + 2);
        thresholds.push(0.0);
        thresholds.extend_from_slice(interior);
        thresholds.push(f64::INFINITY);
        if interior.iter().any(|z| !z.is_finite() || *z <= 0.0) {
            return Err(Error::Domain("interior thresholds must be positive and finite".into()));
        }
        check_increasing(dist.label(), &thresholds)?;

        let mut failure_probs: Vec<f64> = interior.iter().map(|&z| dist.cdf(z)).collect();
        failure_probs.push(1.0);
        let mut prev = 0.0;
        let mut bin_probs = Vec::with_capacity(failure_probs.len());
        for &eps in &failure_probs {
            if !(eps >= prev && eps <= 1.0) {
                return Err(Error::InvalidDistribution {
                    label: dist.label().to_string(),
                    reason: format!("cdf is not monotone in [0, 1] at the thresholds ({eps})"),
                });
            }
            bin_probs.push(eps - prev);
            prev = eps;
        }
        let powers = powers_for(&thresholds, rate);
        Ok(ChannelModel {
            dist,
            rate,
            thresholds,
            bin_probs,
            powers,
            failure_probs,
        })
    }

    /// Two-level model: one transmit level at exactly `power` watts plus silence.
    /// Used by the fixed-power baselines.
    pub fn fixed_power(dist: Arc<dyn FadingDistribution>, rate: f64, power: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::Domain(format!("baseline power must be positive, got {power}")));
        }
        check_rate(rate)?;
        let z = required_snr(rate) / power;
        let eps = dist.cdf(z);
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidDistribution {
                label: dist.label().to_string(),
                reason: format!("cdf({z}) = {eps} outside [0, 1]"),
            });
        }
        Ok(ChannelModel {
            dist,
            rate,
            thresholds: vec![0.0, z, f64::INFINITY],
            bin_probs: vec![eps, 1.0 - eps],
            powers: vec![power, 0.0],
            failure_probs: vec![eps, 1.0],
        })
    }

    pub fn levels(&self) -> usize {
        self.powers.len()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn distribution(&self) -> &Arc<dyn FadingDistribution> {
        &self.dist
    }

    /// `z_0..=z_K`.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn bin_probs(&self) -> &[f64] {
        &self.bin_probs
    }

    /// `P_1..=P_K`, zero-based storage.
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// `eps_1..=eps_K`, zero-based storage.
    pub fn failure_probs(&self) -> &[f64] {
        &self.failure_probs
    }

    pub fn silent_level(&self) -> usize {
        self.levels()
    }

    /// `eps_k` for 1-based level `k`.
    pub fn failure_prob(&self, level: usize) -> Result<f64> {
        self.check_level(level)?;
        Ok(self.failure_probs[level - 1])
    }

    pub fn power(&self, level: usize) -> Result<f64> {
        self.check_level(level)?;
        Ok(self.powers[level - 1])
    }

    /// Gain threshold `z_k` a slot at level `k` must clear.
    pub fn threshold(&self, level: usize) -> Result<f64> {
        self.check_level(level)?;
        Ok(self.thresholds[level])
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels() {
            Err(Error::LevelOutOfRange {
                level,
                levels: self.levels(),
            })
        } else {
            Ok(())
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("rate must be positive, got {rate}")))
    }
}

fn check_increasing(label: &str, thresholds: &[f64]) -> Result<()> {
    if thresholds.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::InvalidDistribution {
            label: label.to_string(),
            reason: "thresholds are not strictly increasing".into(),
        })
    }
}

fn powers_for(thresholds: &[f64], rate: f64) -> Vec<f64> {
    let snr = required_snr(rate);
    thresholds[1..].iter().map(|&z| snr / z).collect()
}
