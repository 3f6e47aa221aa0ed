use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activity::ActivityClass;
use crate::tracker::MistakeKind;

/// Shortest allowed activity duration. Leaves room for an assistant reply, a
/// user comment and the reply to it before the next activity.
pub const MIN_DURATION_SECS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationRange {
    pub min: u32,
    pub max: u32,
}

impl DurationRange {
    pub const fn new(min: u32, max: u32) -> Self {
        DurationRange { min, max }
    }
}

/// How a simulated user performs the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkillProfile {
    /// 1.0 never makes mistakes; 0.0 makes each one with its full probability.
    pub skill: f64,
    pub per_mistake_prob: BTreeMap<MistakeKind, f64>,
    /// Chance of an extra pause before any activity.
    pub pause_prob: f64,
    pub pause_range: DurationRange,
    /// Seconds each activity takes; its event is logged when it finishes.
    pub duration_params: BTreeMap<ActivityClass, DurationRange>,
    /// Chance of a user comment at a step boundary.
    pub comment_prob: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid skill profile: {0}")]
pub struct InvalidProfile(pub String);

/// Activities the generator emits.
pub(crate) const USED_ACTIVITIES: [ActivityClass; 8] = [
    ActivityClass::LiftFloorChestHeavy,
    ActivityClass::Sand,
    ActivityClass::LiftChestChestHeavy,
    ActivityClass::LiftFloorChestLight,
    ActivityClass::Screw,
    ActivityClass::Unscrew,
    ActivityClass::LiftKneeChestHeavy,
    ActivityClass::Drill,
];

impl Default for SkillProfile {
    fn default() -> Self {
        use ActivityClass as A;
        let durations = [
            (A::LiftFloorChestHeavy, DurationRange::new(10, 25)),
            (A::Sand, DurationRange::new(180, 240)),
            (A::LiftChestChestHeavy, DurationRange::new(10, 25)),
            (A::LiftFloorChestLight, DurationRange::new(10, 20)),
            (A::Screw, DurationRange::new(15, 25)),
            (A::Unscrew, DurationRange::new(8, 15)),
            (A::LiftKneeChestHeavy, DurationRange::new(10, 20)),
            (A::Drill, DurationRange::new(6, 9)),
            (A::LiftChestKneeHeavy, DurationRange::new(10, 25)),
        ];
        SkillProfile {
            skill: 0.5,
            per_mistake_prob: MistakeKind::ALL.into_iter().map(|k| (k, 0.5)).collect(),
            pause_prob: 0.15,
            pause_range: DurationRange::new(10, 60),
            duration_params: durations.into_iter().collect(),
            comment_prob: 0.3,
        }
    }
}

impl SkillProfile {
    pub fn with_skill(mut self, skill: f64) -> Self {
        self.skill = skill;
        self
    }

    pub fn with_mistake_prob(mut self, p: f64) -> Self {
        for v in self.per_mistake_prob.values_mut() {
            *v = p;
        }
        self
    }

    /// Probability that mistake `kind` is injected.
    pub fn effective_prob(&self, kind: MistakeKind) -> f64 {
        (1.0 - self.skill) * self.per_mistake_prob.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn duration(&self, activity: ActivityClass) -> DurationRange {
        self.duration_params.get(&activity).copied().unwrap_or(DurationRange::new(MIN_DURATION_SECS, MIN_DURATION_SECS))
    }

    pub fn validate(&self) -> Result<(), InvalidProfile> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(InvalidProfile(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        prob("skill", self.skill)?;
        prob("pause_prob", self.pause_prob)?;
        prob("comment_prob", self.comment_prob)?;
        for (kind, p) in &self.per_mistake_prob {
            prob(&format!("mistake probability for {kind:?}"), *p)?;
        }
        if self.pause_range.min > self.pause_range.max {
            return Err(InvalidProfile("pause_range min exceeds max".into()));
        }
        for a in USED_ACTIVITIES.into_iter().chain([ActivityClass::LiftChestKneeHeavy]) {
            let Some(r) = self.duration_params.get(&a) else {
                return Err(InvalidProfile(format!("missing duration for {a}")));
            };
            if r.min > r.max {
                return Err(InvalidProfile(format!("duration for {a}: min {} exceeds max {}", r.min, r.max)));
            }
            if r.min < MIN_DURATION_SECS {
                return Err(InvalidProfile(format!(
                    "duration for {a} must be at least {MIN_DURATION_SECS} s, got {}",
                    r.min
                )));
            }
        }
        Ok(())
    }
}
