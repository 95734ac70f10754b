use std::fmt;

use super::sm3::{Digest, Sm3};

/// The four kinds of post-processing data that are authenticated each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TagCategory {
    BasisSift = 1,
    CorrectedKey = 2,
    PASharedRandom = 3,
    FinalKey = 4,
}

impl TagCategory {
    pub const ALL: [TagCategory; 4] = [
        TagCategory::BasisSift,
        TagCategory::CorrectedKey,
        TagCategory::PASharedRandom,
        TagCategory::FinalKey,
    ];

    pub fn byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.byte() == b)
    }
}

impl fmt::Display for TagCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagCategory::BasisSift => "basis-sift",
            TagCategory::CorrectedKey => "corrected-key",
            TagCategory::PASharedRandom => "pa-shared-random",
            TagCategory::FinalKey => "final-key",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub category: TagCategory,
    pub digest: Digest,
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tag({}, {})",
            self.category,
            super::sm3::to_hex(&self.digest)
        )
    }
}

/// `sm3(category byte || data)`.
pub fn compute_tag(category: TagCategory, data: &[u8]) -> Tag {
    let digest = Sm3::new()
        .update(&[category.byte()])
        .update(data)
        .finalize();
    Tag { category, digest }
}
