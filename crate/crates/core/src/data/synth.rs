//! Random but schema-valid episodes, for exercising dataset tooling.

use rand::Rng;

use super::action::{assemble_action, ProprioState};
use super::episode::{Episode, EpisodeHeader, Step};

/// One synthetic episode: joints follow a bounded random walk, and each arm
/// gets zero to two suction-on windows.
pub fn synthetic_episode<R: Rng>(rng: &mut R, task_id: u8, len: usize, rate_hz: f64) -> Episode {
    let mut windows: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for arm_windows in &mut windows {
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(0..len.max(1));
            let b = rng.gen_range(a..=len);
            arm_windows.push((a, b));
        }
    }
    let mut joints = [[0.0f64; 6]; 2];
    let mut steps = Vec::with_capacity(len);
    for i in 0..len {
        for arm in &mut joints {
            for j in arm.iter_mut() {
                *j = (*j + rng.gen_range(-0.02..0.02)).clamp(-1.5, 1.5);
            }
        }
        let widths = [rng.gen_range(0.0..0.07), rng.gen_range(0.0..0.07)];
        let suction = [0, 1].map(|arm| {
            windows[arm].iter().any(|&(a, b)| (a..b).contains(&i)) as u8 as f64
        });
        let pressure = suction.map(|s| if s == 1.0 { -rng.gen_range(0.0..60.0) } else { 0.0 });
        steps.push(Step {
            t: i as f64 / rate_hz,
            proprio: ProprioState::new(joints, widths),
            action: assemble_action(&joints[0], &joints[1], &widths, &suction)
                .expect("synthetic components are in range"),
            pressure,
            subtask: None,
            image_refs: None,
        });
    }
    Episode::new(EpisodeHeader::new(task_id, "synthetic", rate_hz), steps)
        .expect("synthetic episode is valid")
}

/// `n` episodes spread over tasks 1..=4 with lengths in `len_range`.
pub fn synthetic_dataset<R: Rng>(rng: &mut R, n: usize, len_range: std::ops::Range<usize>) -> Vec<Episode> {
    (0..n)
        .map(|i| {
            let len = rng.gen_range(len_range.clone());
            synthetic_episode(rng, (i % 4) as u8 + 1, len, 30.0)
        })
        .collect()
}
