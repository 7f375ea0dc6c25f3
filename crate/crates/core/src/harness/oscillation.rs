//! Confinement detector: fires when the tracked position stays inside a
//! small ball around its own windowed mean for a full window.
//!
//! `epsilon` is the ball's diameter, so every sample lies within
//! `epsilon / 2` of the mean. Any motion faster than `epsilon / window`
//! spans more than `epsilon` per window and can never fire.

use std::collections::VecDeque;

pub const DEFAULT_WINDOW_S: f64 = 60.0;
pub const DEFAULT_EPSILON_M: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationDetector {
    pub window_s: f64,
    pub epsilon_m: f64,
    pub rate_hz: f64,
}

impl OscillationDetector {
    pub fn new(rate_hz: f64) -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            epsilon_m: DEFAULT_EPSILON_M,
            rate_hz,
        }
    }

    /// Samples needed to span at least `window_s`.
    pub fn window_len(&self) -> usize {
        (self.window_s * self.rate_hz - 1e-9).ceil().max(0.0) as usize + 1
    }

    /// Whether any full window of `history` is confined.
    pub fn fires<const D: usize>(&self, history: &[[f64; D]]) -> bool {
        let n = self.window_len();
        if history.len() < n || D == 0 {
            return false;
        }
        let mut mins: [VecDeque<usize>; D] = std::array::from_fn(|_| VecDeque::new());
        let mut maxs: [VecDeque<usize>; D] = std::array::from_fn(|_| VecDeque::new());
        for i in 0..history.len() {
            for d in 0..D {
                push_mono(&mut mins[d], history, i, d, |a, b| a <= b);
                push_mono(&mut maxs[d], history, i, d, |a, b| a >= b);
                let start = (i + 1).saturating_sub(n);
                while mins[d].front().is_some_and(|&j| j < start) {
                    mins[d].pop_front();
                }
                while maxs[d].front().is_some_and(|&j| j < start) {
                    maxs[d].pop_front();
                }
            }
            if i + 1 < n {
                continue;
            }
            let boxed = (0..D).all(|d| {
                history[*maxs[d].front().unwrap()][d] - history[*mins[d].front().unwrap()][d] <= self.epsilon_m
            });
            if boxed && self.confined(&history[i + 1 - n..=i]) {
                return true;
            }
        }
        false
    }

    fn confined<const D: usize>(&self, window: &[[f64; D]]) -> bool {
        let mut mean = [0.0; D];
        for p in window {
            for d in 0..D {
                mean[d] += p[d];
            }
        }
        for m in &mut mean {
            *m /= window.len() as f64;
        }
        let r2 = (self.epsilon_m / 2.0).powi(2);
        window
            .iter()
            .all(|p| (0..D).map(|d| (p[d] - mean[d]).powi(2)).sum::<f64>() <= r2)
    }
}

fn push_mono<const D: usize>(
    q: &mut VecDeque<usize>,
    history: &[[f64; D]],
    i: usize,
    d: usize,
    keep: impl Fn(f64, f64) -> bool,
) {
    while q.back().is_some_and(|&j| !keep(history[j][d], history[i][d])) {
        q.pop_back();
    }
    q.push_back(i);
}

/// Default 60 s / 0.02 m detector over a 3-D position track.
pub fn detect_oscillation(history: &[[f64; 3]], rate_hz: f64) -> bool {
    OscillationDetector::new(rate_hz).fires(history)
}
