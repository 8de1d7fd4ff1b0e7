//! Event taxonomy, synthetic contact-event generator, corpus splitting and
//! the `.tevd` corpus file.

mod corpus;
mod format;
mod generator;

pub use corpus::{build_corpus, split, Corpus, CorpusHeader, Split, SplitRatio};
pub use format::{CORPUS_MAGIC, CORPUS_VERSION};
pub use generator::{
    bulge_amplitude, generate, generate_on, patch_weight, radial_bulge, render_field, ContactPatch, ScenarioConfig,
    DEFAULT_NOISE_MM,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TevError;

pub const NUM_CLASSES: usize = 7;

/// The seven contact events, in one-hot index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventClass {
    TranslationalSlip,
    RotationalSlip,
    Rolling,
    Stable,
    Noncontact,
    MakingContact,
    BreakingContact,
}

impl EventClass {
    pub const ALL: [EventClass; NUM_CLASSES] = [
        EventClass::TranslationalSlip,
        EventClass::RotationalSlip,
        EventClass::Rolling,
        EventClass::Stable,
        EventClass::Noncontact,
        EventClass::MakingContact,
        EventClass::BreakingContact,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EventClass::TranslationalSlip => "TranslationalSlip",
            EventClass::RotationalSlip => "RotationalSlip",
            EventClass::Rolling => "Rolling",
            EventClass::Stable => "Stable",
            EventClass::Noncontact => "Noncontact",
            EventClass::MakingContact => "MakingContact",
            EventClass::BreakingContact => "BreakingContact",
        }
    }

    pub fn one_hot(self) -> [f32; NUM_CLASSES] {
        let mut y = [0.0; NUM_CLASSES];
        y[self.index()] = 1.0;
        y
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = TevError;

    /// Accepts the display name or its snake_case form, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().to_lowercase() == key)
            .ok_or_else(|| TevError::Config(format!("unknown event class `{s}`")))
    }
}
