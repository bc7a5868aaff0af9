use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::types::Label;

/// Endless stream of class-balanced batches of example indices.
///
/// Each epoch permutes the larger class and walks it in half-batch slices
/// (`floor(n_major / half)` batches); the other half of every batch is drawn
/// from the smaller class with replacement. With equal classes both are
/// permuted. The sequence depends only on the labels, batch size and seed.
pub struct BalancedBatches {
    major: Vec<usize>,
    minor: Vec<usize>,
    half: usize,
    equal: bool,
    rng: ChaCha8Rng,
    epoch_major: Vec<usize>,
    epoch_minor: Vec<usize>,
    cursor: usize,
}

pub fn balanced_batches(labels: &[Label], batch_size: usize, seed: u64) -> Result<BalancedBatches, TrainError> {
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(TrainError::Config(format!(
            "batch_size {batch_size} must be even and >= 2"
        )));
    }
    let pick = |l: Label| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == l).collect() };
    let (real, fake) = (pick(Label::Real), pick(Label::Fake));
    for (set, l) in [(&real, Label::Real), (&fake, Label::Fake)] {
        if set.is_empty() {
            return Err(TrainError::EmptyClass(l));
        }
    }
    let half = batch_size / 2;
    let equal = real.len() == fake.len();
    let (major, minor, major_label) = if real.len() >= fake.len() {
        (real, fake, Label::Real)
    } else {
        (fake, real, Label::Fake)
    };
    if major.len() < half {
        return Err(TrainError::InsufficientData {
            label: major_label,
            needed: half,
            found: major.len(),
        });
    }
    Ok(BalancedBatches {
        major,
        minor,
        half,
        equal,
        rng: ChaCha8Rng::seed_from_u64(seed),
        epoch_major: Vec::new(),
        epoch_minor: Vec::new(),
        cursor: 0,
    })
}

impl BalancedBatches {
    pub fn batches_per_epoch(&self) -> usize {
        self.major.len() / self.half
    }

    fn start_epoch(&mut self) {
        self.epoch_major = self.major.clone();
        self.epoch_major.shuffle(&mut self.rng);
        let n = self.batches_per_epoch() * self.half;
        self.epoch_minor = if self.equal {
            let mut m = self.minor.clone();
            m.shuffle(&mut self.rng);
            m
        } else {
            (0..n)
                .map(|_| self.minor[self.rng.random_range(0..self.minor.len())])
                .collect()
        };
        self.cursor = 0;
    }
}

impl Iterator for BalancedBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let limit = self.batches_per_epoch() * self.half;
        if self.epoch_major.is_empty() || self.cursor + self.half > limit {
            self.start_epoch();
        }
        let range = self.cursor..self.cursor + self.half;
        let mut batch = self.epoch_major[range.clone()].to_vec();
        batch.extend_from_slice(&self.epoch_minor[range]);
        self.cursor += self.half;
        Some(batch)
    }
}
