//! Activity classes reported by the wearable's activity recognizer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A discrete activity recognized from wrist audio/IMU.
///
/// Every variant has exactly one canonical surface string, which is what
/// appears after `Wearable:` in a conversation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ActivityClass {
    None,
    Hammer,
    Sand,
    Drill,
    Screw,
    Unscrew,
    /// lift1
    LiftFloorChestHeavy,
    /// lift2
    LiftFloorChestLight,
    /// lift3
    LiftChestChestHeavy,
    /// lift4
    LiftKneeChestHeavy,
    /// lift5
    LiftChestKneeHeavy,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown activity {0:?}")]
pub struct UnknownActivity(pub String);

impl ActivityClass {
    pub const ALL: [ActivityClass; 11] = [
        ActivityClass::None,
        ActivityClass::Hammer,
        ActivityClass::Sand,
        ActivityClass::Drill,
        ActivityClass::Screw,
        ActivityClass::Unscrew,
        ActivityClass::LiftFloorChestHeavy,
        ActivityClass::LiftFloorChestLight,
        ActivityClass::LiftChestChestHeavy,
        ActivityClass::LiftKneeChestHeavy,
        ActivityClass::LiftChestKneeHeavy,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            ActivityClass::None => "none",
            ActivityClass::Hammer => "hammer",
            ActivityClass::Sand => "sand",
            ActivityClass::Drill => "drill",
            ActivityClass::Screw => "screw",
            ActivityClass::Unscrew => "unscrew",
            ActivityClass::LiftFloorChestHeavy => "lift floor-to-chest heavy",
            ActivityClass::LiftFloorChestLight => "lift floor-to-chest light",
            ActivityClass::LiftChestChestHeavy => "lift chest-to-chest heavy",
            ActivityClass::LiftKneeChestHeavy => "lift knee-to-chest heavy",
            ActivityClass::LiftChestKneeHeavy => "lift chest-to-knee heavy",
        }
    }

    /// Short detector label (`lift1`..`lift5` for the lifts).
    pub fn label(self) -> &'static str {
        match self {
            ActivityClass::LiftFloorChestHeavy => "lift1",
            ActivityClass::LiftFloorChestLight => "lift2",
            ActivityClass::LiftChestChestHeavy => "lift3",
            ActivityClass::LiftKneeChestHeavy => "lift4",
            ActivityClass::LiftChestKneeHeavy => "lift5",
            other => other.surface(),
        }
    }

    /// Activities that never change tracker state.
    pub fn is_inert(self) -> bool {
        matches!(self, ActivityClass::None | ActivityClass::Hammer)
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

impl FromStr for ActivityClass {
    type Err = UnknownActivity;

    /// Accepts the canonical surface string or the detector label.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ActivityClass::ALL
            .into_iter()
            .find(|a| a.surface() == s || a.label() == s)
            .ok_or_else(|| UnknownActivity(s.to_string()))
    }
}

impl From<ActivityClass> for String {
    fn from(a: ActivityClass) -> String {
        a.surface().to_string()
    }
}

impl TryFrom<String> for ActivityClass {
    type Error = UnknownActivity;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
