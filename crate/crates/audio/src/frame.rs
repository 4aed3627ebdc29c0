use crate::error::{AudioError, Result};

/// A fixed-length window of mono samples.
///
/// Samples are clamped to `[-1.0, 1.0]` on construction and non-finite
/// values are replaced by silence.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFrame {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    /// Frame ordinal counted from the start of the stream.
    pub index: usize,
}

impl AudioFrame {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, index: usize) -> Self {
        let samples = samples.into_iter().map(clamp_sample).collect();
        Self {
            samples,
            sample_rate_hz,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn clamp_sample(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Number of frames `frame_signal` produces for `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len == 0 {
        0
    } else if len <= frame_len {
        1
    } else {
        (len - frame_len).div_ceil(hop) + 1
    }
}

pub(crate) fn check_framing(frame_len: usize, hop: usize) -> Result<()> {
    if frame_len == 0 {
        return Err(AudioError::InvalidConfig("frame_len must be > 0".into()));
    }
    if hop == 0 || hop > frame_len {
        return Err(AudioError::InvalidConfig(format!(
            "hop must satisfy 0 < hop <= frame_len ({frame_len}), got {hop}"
        )));
    }
    Ok(())
}

/// Splits `samples` into frames of `frame_len` starting every `hop` samples.
/// The final window is zero-padded.
pub fn frame_signal(
    samples: &[f64],
    frame_len: usize,
    hop: usize,
    sample_rate_hz: u32,
) -> Result<Vec<AudioFrame>> {
    check_framing(frame_len, hop)?;
    if samples.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let count = frame_count(samples.len(), frame_len, hop);
    let frames = (0..count)
        .map(|i| {
            let start = i * hop;
            let end = (start + frame_len).min(samples.len());
            let mut window = Vec::with_capacity(frame_len);
            window.extend_from_slice(&samples[start..end]);
            window.resize(frame_len, 0.0);
            AudioFrame::new(window, sample_rate_hz, i)
        })
        .collect();
    Ok(frames)
}

/// Concatenates frames produced with `hop == frame_len`.
pub fn concat_frames(frames: &[AudioFrame]) -> Vec<f64> {
    frames
        .iter()
        .flat_map(|f| f.samples.iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_tiling() {
        let frames = frame_signal(&vec![0.1; 480], 160, 160, 16_000).unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().enumerate().all(|(i, f)| f.index == i));
    }

    #[test]
    fn short_input_is_one_padded_window() {
        let frames = frame_signal(&vec![0.25; 100], 160, 80, 16_000).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(frames[0].samples[..100].iter().all(|&x| x == 0.25));
        assert!(frames[0].samples[100..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_sample_over_adds_padded_frame() {
        // window starts 0, 160, 320, 480; the last holds sample 480 and 159 zeros
        let samples: Vec<f64> = (0..481).map(|i| (i as f64 + 1.0) / 1000.0).collect();
        let frames = frame_signal(&samples, 160, 160, 16_000).unwrap();
        assert_eq!(frames.len(), 4);
        let last = &frames[3];
        assert_eq!(last.samples[0], 0.481);
        assert_eq!(last.samples[1..].iter().filter(|&&x| x == 0.0).count(), 159);
    }

    #[test]
    fn empty_and_bad_framing() {
        assert_eq!(frame_signal(&[], 160, 80, 16_000), Err(AudioError::EmptySignal));
        assert!(matches!(
            frame_signal(&[0.0; 10], 0, 1, 16_000),
            Err(AudioError::InvalidConfig(_))
        ));
        assert!(matches!(
            frame_signal(&[0.0; 10], 4, 5, 16_000),
            Err(AudioError::InvalidConfig(_))
        ));
    }

    #[test]
    fn samples_are_clamped() {
        let f = AudioFrame::new(vec![2.0, -3.0, f64::NAN, 0.5], 16_000, 0);
        assert_eq!(f.samples, vec![1.0, -1.0, 0.0, 0.5]);
    }

    proptest! {
        #[test]
        fn frame_count_matches_formula(len in 1usize..3000, frame_len in 1usize..600, hop_frac in 0.01f64..1.0) {
            let hop = ((frame_len as f64 * hop_frac).ceil() as usize).clamp(1, frame_len);
            let frames = frame_signal(&vec![0.0; len], frame_len, hop, 16_000).unwrap();
            let expected = (len.saturating_sub(frame_len)).div_ceil(hop) + 1;
            prop_assert_eq!(frames.len(), expected);
            // every sample is covered by some window
            let last = frames.last().unwrap();
            prop_assert!(last.index * hop + frame_len >= len);
        }

        #[test]
        fn tiling_reconstructs_padded_input(samples in proptest::collection::vec(-1.0f64..1.0, 1..2000), frame_len in 1usize..300) {
            let frames = frame_signal(&samples, frame_len, frame_len, 16_000).unwrap();
            let joined = concat_frames(&frames);
            prop_assert_eq!(joined.len() % frame_len, 0);
            prop_assert_eq!(&joined[..samples.len()], &samples[..]);
            prop_assert!(joined[samples.len()..].iter().all(|&x| x == 0.0));
        }
    }
}
