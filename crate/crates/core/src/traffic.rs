//! On/off user activity and periodic frame arrivals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic configuration: {0}")]
    Invalid(String),
}

/// How a configured minimum duration is enforced on exponential draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinDurationMode {
    /// `max(min, Exp(mean))`.
    #[default]
    Truncate,
    /// Redraw until the sample is at least `min`.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub n_users: u32,
    pub mean_on: f64,
    pub mean_off: f64,
    pub min_on: f64,
    pub min_off: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub duration: f64,
    #[serde(default)]
    pub min_mode: MinDurationMode,
    #[serde(skip)]
    pub seed: u64,
}

fn default_fps() -> f64 {
    30.0
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |msg: &str| Err(TrafficError::Invalid(msg.to_string()));
        if self.n_users < 1 {
            return bad("n_users must be at least 1");
        }
        if !(self.min_on >= 0.0 && self.mean_on >= self.min_on) {
            return bad("need mean_on >= min_on >= 0");
        }
        if !(self.min_off >= 0.0 && self.mean_off >= self.min_off) {
            return bad("need mean_off >= min_off >= 0");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be non-negative");
        }
        if self.mean_on.max(self.min_on) + self.mean_off.max(self.min_off) <= 0.0 {
            return bad("on and off durations cannot both be zero");
        }
        if self.min_mode == MinDurationMode::Resample
            && ((self.mean_on == 0.0 && self.min_on > 0.0)
                || (self.mean_off == 0.0 && self.min_off > 0.0))
        {
            return bad("resampling needs a positive mean");
        }
        Ok(())
    }
}

/// Activity of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSchedule {
    pub user_id: u32,
    pub on_intervals: Vec<(f64, f64)>,
}

/// Seeded sampler of one duration distribution.
#[derive(Debug, Clone, Copy)]
pub struct DurationSampler {
    exp: Option<Exp<f64>>,
    mean: f64,
    min: f64,
    mode: MinDurationMode,
}

impl DurationSampler {
    pub fn new(mean: f64, min: f64, mode: MinDurationMode) -> Self {
        let exp = (mean > 0.0).then(|| Exp::new(1.0 / mean).expect("positive rate"));
        Self {
            exp,
            mean,
            min,
            mode,
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let Some(exp) = self.exp else {
            return self.min.max(self.mean);
        };
        match self.mode {
            MinDurationMode::Truncate => exp.sample(rng).max(self.min),
            MinDurationMode::Resample => loop {
                let x = exp.sample(rng);
                if x >= self.min {
                    break x;
                }
            },
        }
    }
}

/// Stream of one user's random draws, independent of the other users.
pub fn user_rng(seed: u64, user_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user_id as u64 + 1);
    rng
}

/// Alternating off/on periods for every user, starting off at t = 0 and
/// truncated at the scenario duration.
pub fn generate_schedule(cfg: &TrafficConfig) -> Result<Vec<UserSchedule>, TrafficError> {
    cfg.validate()?;
    let on = DurationSampler::new(cfg.mean_on, cfg.min_on, cfg.min_mode);
    let off = DurationSampler::new(cfg.mean_off, cfg.min_off, cfg.min_mode);
    Ok((0..cfg.n_users)
        .map(|user_id| {
            let mut rng = user_rng(cfg.seed, user_id);
            let mut t = 0.0;
            let mut on_intervals = Vec::new();
            while t < cfg.duration {
                t += off.sample(&mut rng);
                if t >= cfg.duration {
                    break;
                }
                let end = (t + on.sample(&mut rng)).min(cfg.duration);
                if end > t {
                    on_intervals.push((t, end));
                }
                t = end;
            }
            UserSchedule {
                user_id,
                on_intervals,
            }
        })
        .collect())
}

/// Periodic send times `start + k / fps` inside each on-interval.
pub fn frame_arrivals(schedule: &UserSchedule, fps: f64) -> Vec<(f64, u32)> {
    assert!(fps > 0.0, "fps must be positive");
    let mut out = Vec::new();
    for &(start, end) in &schedule.on_intervals {
        let mut k = 0u64;
        loop {
            let t = start + k as f64 / fps;
            if t >= end {
                break;
            }
            out.push((t, schedule.user_id));
            k += 1;
        }
    }
    out
}

/// Arrivals of all users merged in time order (ties by user id).
pub fn merged_arrivals(schedules: &[UserSchedule], fps: f64) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = schedules
        .iter()
        .flat_map(|s| frame_arrivals(s, fps))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all
}

/// Number of users whose on-intervals contain `t`.
pub fn active_users(schedules: &[UserSchedule], t: f64) -> usize {
    schedules
        .iter()
        .filter(|s| s.on_intervals.iter().any(|&(a, b)| a <= t && t < b))
        .count()
}
