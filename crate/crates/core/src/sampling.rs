//! Choosing which people of a scene fill the model's person slots.

use rand::seq::index;
use rand::Rng;

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Uniform subset of at most `cap` people, padded up to `cap`.
    Train { cap: usize },
    /// Everyone, no padding.
    Test,
}

/// Slot assignment: `Some(k)` is the k-th input person, `None` a pad slot.
/// Selected people keep their input order.
pub fn sample_people<R: Rng + ?Sized>(count: usize, mode: SampleMode, rng: &mut R) -> Result<Vec<Option<usize>>> {
    ensure!(count >= 1, "a scene needs at least one person");
    match mode {
        SampleMode::Test => Ok((0..count).map(Some).collect()),
        SampleMode::Train { cap } => {
            ensure!(cap >= 1, "person cap must be positive");
            let mut chosen: Vec<usize> = if count > cap {
                index::sample(rng, count, cap).into_vec()
            } else {
                (0..count).collect()
            };
            chosen.sort_unstable();
            let mut slots: Vec<Option<usize>> = chosen.into_iter().map(Some).collect();
            slots.resize(cap, None);
            Ok(slots)
        }
    }
}
