use serde::{Deserialize, Serialize};

use crate::image::ImageBuffer;
use crate::par;

/// Position of a scorer in the cascade.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Proposal,
    Refine,
    Output,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Proposal, Stage::Refine, Stage::Output];

    /// Side of the square patch this stage scores.
    pub fn input_size(self) -> usize {
        match self {
            Stage::Proposal => 12,
            Stage::Refine => 24,
            Stage::Output => 48,
        }
    }

    pub fn has_landmarks(self) -> bool {
        self == Stage::Output
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// What a stage network says about one square patch.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutput {
    pub p_face: f64,
    /// `(dx1, dy1, dx2, dy2)` as fractions of the patch box width/height.
    pub offsets: [f64; 4],
    /// Five points in patch-normalised `[0, 1]^2` coordinates (output stage only).
    pub landmarks: Option<[(f64, f64); 5]>,
}

impl StageOutput {
    pub fn reject() -> Self {
        Self {
            p_face: 0.0,
            offsets: [0.0; 4],
            landmarks: None,
        }
    }
}

/// A per-stage patch classifier/regressor. Implementations must be safe to
/// call concurrently.
pub trait StageScorer: Send + Sync {
    fn score(&self, patch: &ImageBuffer) -> StageOutput;

    fn score_batch(&self, patches: &[ImageBuffer]) -> Vec<StageOutput> {
        par::map_slice(patches, |p| self.score(p))
    }
}

impl<F> StageScorer for F
where
    F: Fn(&ImageBuffer) -> StageOutput + Send + Sync,
{
    fn score(&self, patch: &ImageBuffer) -> StageOutput {
        self(patch)
    }
}

/// The three scorers of a cascade: proposal (12 px), refinement (24 px), output (48 px).
#[derive(Clone, Copy)]
pub struct CascadeScorers<'a> {
    pub proposal: &'a dyn StageScorer,
    pub refine: &'a dyn StageScorer,
    pub output: &'a dyn StageScorer,
}

impl<'a> CascadeScorers<'a> {
    pub fn new(proposal: &'a dyn StageScorer, refine: &'a dyn StageScorer, output: &'a dyn StageScorer) -> Self {
        Self {
            proposal,
            refine,
            output,
        }
    }
}
