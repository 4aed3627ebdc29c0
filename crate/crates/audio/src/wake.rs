//! Wake-word gating: MFCC template matching with dynamic time warping.

use serde::{Deserialize, Serialize};

use crate::error::{AudioError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WakeMode {
    Sleep,
    Awake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WakeConfig {
    pub n_coeffs: usize,
    pub mel_bands: usize,
    pub awake_window_ms: u64,
    /// Threshold = factor x mean impostor distance at enrollment.
    pub threshold_factor: f64,
}

impl Default for WakeConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 13,
            mel_bands: 26,
            awake_window_ms: 8_000,
            threshold_factor: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeState {
    pub mode: WakeMode,
    /// Stream time (ms) at which an awake device falls back to sleep.
    pub awake_deadline_ms: Option<u64>,
    pub template: Vec<Vec<f64>>,
    pub dtw_threshold: f64,
    pub awake_window_ms: u64,
}

impl WakeState {
    pub fn new(template: Vec<Vec<f64>>, dtw_threshold: f64, awake_window_ms: u64) -> Result<Self> {
        if template.is_empty() {
            return Err(AudioError::InvalidConfig("wake template is empty".into()));
        }
        if !(dtw_threshold >= 0.0) {
            return Err(AudioError::InvalidConfig(
                "dtw threshold must be non-negative".into(),
            ));
        }
        Ok(Self {
            mode: WakeMode::Sleep,
            awake_deadline_ms: None,
            template,
            dtw_threshold,
            awake_window_ms,
        })
    }

    /// Enrolls `template` with a threshold of `factor` times the mean DTW
    /// distance from the template to `impostors`.
    pub fn enroll(
        template: Vec<Vec<f64>>,
        impostors: &[Vec<Vec<f64>>],
        config: &WakeConfig,
    ) -> Result<Self> {
        let threshold = calibrate_threshold(&template, impostors, config.threshold_factor)?;
        Self::new(template, threshold, config.awake_window_ms)
    }

    pub fn is_awake(&self) -> bool {
        self.mode == WakeMode::Awake
    }

    /// Falls back to sleep once `now_ms` reaches the deadline.
    pub fn tick(&mut self, now_ms: u64) {
        if let (WakeMode::Awake, Some(deadline)) = (self.mode, self.awake_deadline_ms) {
            if now_ms >= deadline {
                self.mode = WakeMode::Sleep;
                self.awake_deadline_ms = None;
            }
        }
    }

    /// Pushes the deadline out after speech activity while awake.
    pub fn extend(&mut self, now_ms: u64) {
        if self.mode == WakeMode::Awake {
            let candidate = now_ms + self.awake_window_ms;
            self.awake_deadline_ms = Some(self.awake_deadline_ms.map_or(candidate, |d| d.max(candidate)));
        }
    }

    fn wake(&mut self, now_ms: u64) {
        self.mode = WakeMode::Awake;
        self.awake_deadline_ms = Some(now_ms + self.awake_window_ms);
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// DTW alignment cost divided by the number of steps on the optimal path.
pub fn dtw_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AudioError::EmptyFeatures);
    }
    let m = b.len();
    // rolling rows of (cumulative cost, path length)
    let mut prev = vec![(f64::INFINITY, 0u32); m];
    let mut cur = vec![(f64::INFINITY, 0u32); m];
    for (i, fa) in a.iter().enumerate() {
        for j in 0..m {
            let cost = euclidean(fa, &b[j]);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, 0u32);
                if i > 0 && j > 0 && prev[j - 1].0 < best.0 {
                    best = prev[j - 1];
                }
                if i > 0 && prev[j].0 < best.0 {
                    best = prev[j];
                }
                if j > 0 && cur[j - 1].0 < best.0 {
                    best = cur[j - 1];
                }
                best
            };
            cur[j] = (best.0 + cost, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (total, steps) = prev[m - 1];
    Ok(total / steps as f64)
}

pub fn calibrate_threshold(
    template: &[Vec<f64>],
    impostors: &[Vec<Vec<f64>>],
    factor: f64,
) -> Result<f64> {
    if impostors.is_empty() {
        return Err(AudioError::InvalidConfig(
            "threshold calibration needs at least one impostor".into(),
        ));
    }
    let mut sum = 0.0;
    for imp in impostors {
        sum += dtw_distance(template, imp)?;
    }
    Ok(factor * sum / impostors.len() as f64)
}

/// Matches `features` against the enrolled template; wakes the state on a hit.
pub fn detect_wakeword(features: &[Vec<f64>], state: &mut WakeState, now_ms: u64) -> Result<bool> {
    if features.is_empty() {
        return Err(AudioError::EmptyFeatures);
    }
    if state.template.is_empty() {
        return Err(AudioError::InvalidConfig("wake template is empty".into()));
    }
    let distance = dtw_distance(features, &state.template)?;
    let hit = distance <= state.dtw_threshold;
    if hit {
        state.wake(now_ms);
    }
    Ok(hit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|v| vec![*v, -*v]).collect()
    }

    #[test]
    fn self_match_is_zero_and_wakes() {
        let t = seq(&[1.0, 2.0, 3.0, 2.0]);
        let mut st = WakeState::new(t.clone(), 0.0, 8_000).unwrap();
        assert_eq!(dtw_distance(&t, &t).unwrap(), 0.0);
        assert!(detect_wakeword(&t, &mut st, 1_000).unwrap());
        assert_eq!(st.mode, WakeMode::Awake);
        assert_eq!(st.awake_deadline_ms, Some(9_000));
    }

    #[test]
    fn single_frame_template_warps() {
        let t = seq(&[0.7]);
        let repeated = seq(&[0.7; 9]);
        assert_eq!(dtw_distance(&repeated, &t).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_distance() {
        // a = [0, 1], b = [0, 0, 1] on one dimension: path (0,0)(0,1)(1,2) costs 0
        let a = vec![vec![0.0], vec![1.0]];
        let b = vec![vec![0.0], vec![0.0], vec![1.0]];
        assert_eq!(dtw_distance(&a, &b).unwrap(), 0.0);
        // a = [0, 2], b = [1]: both steps cost 1, 2 steps -> 1.0
        let a = vec![vec![0.0], vec![2.0]];
        let b = vec![vec![1.0]];
        assert_eq!(dtw_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn empty_features() {
        let mut st = WakeState::new(seq(&[1.0]), 1.0, 8_000).unwrap();
        assert_eq!(detect_wakeword(&[], &mut st, 0), Err(AudioError::EmptyFeatures));
        assert!(WakeState::new(vec![], 1.0, 8_000).is_err());
    }

    #[test]
    fn miss_stays_asleep_and_deadline_expires() {
        let mut st = WakeState::new(seq(&[0.0, 0.0]), 0.5, 8_000).unwrap();
        assert!(!detect_wakeword(&seq(&[5.0, 5.0]), &mut st, 0).unwrap());
        assert_eq!(st.mode, WakeMode::Sleep);
        assert!(detect_wakeword(&seq(&[0.1, 0.0]), &mut st, 100).unwrap());
        st.extend(2_000);
        assert_eq!(st.awake_deadline_ms, Some(10_000));
        st.tick(9_999);
        assert!(st.is_awake());
        st.tick(10_000);
        assert!(!st.is_awake());
    }

    #[test]
    fn calibration_scales_mean() {
        let t = seq(&[0.0]);
        let imps = vec![seq(&[1.0]), seq(&[3.0])];
        // distances sqrt(2) and 3 sqrt(2)
        let thr = calibrate_threshold(&t, &imps, 0.6).unwrap();
        assert!((thr - 0.6 * 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
