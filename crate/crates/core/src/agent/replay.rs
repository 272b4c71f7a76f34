use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::env::AuxInput;
use crate::grid::GridObservation;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Observation the action was chosen from.
    pub obs: GridObservation,
    pub aux: AuxInput,
    pub action: Action,
    pub reward: f32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalCause {
    Goal,
    Collision,
    StepLimit,
}

impl TerminalCause {
    pub fn name(self) -> &'static str {
        match self {
            TerminalCause::Goal => "goal",
            TerminalCause::Collision => "collision",
            TerminalCause::StepLimit => "step-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub transitions: Vec<Transition>,
    pub seed: u64,
    pub cause: TerminalCause,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Ring of whole episodes; the oldest is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

/// Window of `len` consecutive transitions starting at `start` in the
/// `episode`-th stored episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowRef {
    pub episode: usize,
    pub start: usize,
    pub len: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn get(&self, i: usize) -> &EpisodeRecord {
        &self.episodes[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// Number of episodes at least `window` steps long.
    pub fn eligible(&self, window: usize) -> usize {
        self.episodes.iter().filter(|e| e.len() >= window).count()
    }

    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }
}

/// Draws `batch` windows: an eligible episode uniformly, then a start offset
/// uniformly among those where the window fits. `None` when no episode is
/// long enough.
pub fn sample_batch<R: Rng + ?Sized>(
    mem: &ReplayMemory,
    batch: usize,
    window: usize,
    rng: &mut R,
) -> Option<Vec<WindowRef>> {
    let eligible: Vec<usize> = (0..mem.len()).filter(|&i| mem.get(i).len() >= window).collect();
    if eligible.is_empty() || window == 0 {
        return None;
    }
    let draws = (0..batch)
        .map(|_| {
            let episode = eligible[rng.random_range(0..eligible.len())];
            let start = rng.random_range(0..=mem.get(episode).len() - window);
            WindowRef {
                episode,
                start,
                len: window,
            }
        })
        .collect();
    Some(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(len: usize, seed: u64) -> EpisodeRecord {
        let transitions = (0..len)
            .map(|i| Transition {
                obs: GridObservation::empty(),
                aux: AuxInput::new(0.0, 1.0, None),
                action: Action::Steer,
                reward: i as f32,
                done: i + 1 == len,
            })
            .collect();
        EpisodeRecord {
            transitions,
            seed,
            cause: TerminalCause::Goal,
        }
    }

    #[test]
    fn single_eight_step_episode_gives_one_window() {
        let mut m = ReplayMemory::new(50);
        m.push(episode(8, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_batch(&m, 32, 8, &mut rng).unwrap();
        assert_eq!(b.len(), 32);
        assert!(b.iter().all(|w| *w == WindowRef { episode: 0, start: 0, len: 8 }));
    }

    #[test]
    fn short_episodes_are_not_ready() {
        let mut m = ReplayMemory::new(50);
        m.push(episode(3, 0));
        m.push(episode(7, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_batch(&m, 32, 8, &mut rng), None);
        assert_eq!(m.eligible(8), 0);
    }

    #[test]
    fn oldest_is_evicted() {
        let mut m = ReplayMemory::new(50);
        for s in 0..51 {
            m.push(episode(10, s));
        }
        assert_eq!(m.len(), 50);
        assert!(m.iter().all(|e| e.seed != 0));
        assert_eq!(m.get(0).seed, 1);
        assert_eq!(m.get(49).seed, 50);
    }

    proptest::proptest! {
        #[test]
        fn windows_fit_inside_one_episode(lens in proptest::collection::vec(1usize..40, 1..10), seed: u64) {
            let mut m = ReplayMemory::new(50);
            for (i, l) in lens.iter().enumerate() {
                m.push(episode(*l, i as u64));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match sample_batch(&m, 32, 8, &mut rng) {
                None => proptest::prop_assert!(lens.iter().all(|l| *l < 8)),
                Some(b) => {
                    for w in b {
                        proptest::prop_assert!(w.start + w.len <= m.get(w.episode).len());
                        proptest::prop_assert!(m.get(w.episode).len() >= 8);
                    }
                }
            }
        }
    }
}
