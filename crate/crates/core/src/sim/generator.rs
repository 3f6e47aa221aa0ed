use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::{InvalidProfile, SkillProfile};
use crate::activity::ActivityClass as A;
use crate::convo::{ClockTime, Conversation, Dialogue};
use crate::par::Execution;
use crate::task::Targets;
use crate::tracker::{MistakeEvent, MistakeKind};

/// A simulated wearable activity stream with the mistakes it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityLog {
    /// Wearable dialogues only.
    pub conversation: Conversation,
    pub mistakes: Vec<MistakeEvent>,
    pub seed: u64,
    pub start_time: ClockTime,
    pub profile: SkillProfile,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error(transparent)]
    InvalidProfile(#[from] InvalidProfile),
    #[error("activity log starting at {0} would run past midnight")]
    PastMidnight(ClockTime),
}

type Plan = Vec<(A, Option<MistakeKind>)>;

fn push_n(plan: &mut Plan, a: A, n: u32) {
    plan.extend((0..n).map(|_| (a, None)));
}

/// Orders the activities of one run, injecting mistakes and their recovery.
fn plan_events(profile: &SkillProfile, targets: Targets, rng: &mut ChaCha8Rng) -> Plan {
    let roll = |kind: MistakeKind, rng: &mut ChaCha8Rng| rng.random_bool(profile.effective_prob(kind).clamp(0.0, 1.0));
    let frame_mistake = roll(MistakeKind::ScrewFrameBeforeAllPlaced, rng);
    let leg_mistake = roll(MistakeKind::ScrewLegBeforeFramesDone, rng);
    let drill_mistake = roll(MistakeKind::DrillBeforeAllScrews, rng);

    let mut plan: Plan = vec![(A::LiftFloorChestHeavy, None), (A::Sand, None), (A::LiftChestChestHeavy, None)];

    // Frames, possibly with one early screw.
    let mut frame_screws_done = 0;
    if frame_mistake && targets.frames >= 2 {
        let early_after = rng.random_range(2.min(targets.frames - 1)..=3.min(targets.frames - 1));
        push_n(&mut plan, A::LiftFloorChestLight, early_after);
        plan.push((A::Screw, Some(MistakeKind::ScrewFrameBeforeAllPlaced)));
        push_n(&mut plan, A::LiftFloorChestLight, targets.frames - early_after);
        if rng.random_bool(0.5) {
            plan.push((A::Unscrew, None));
            plan.push((A::Screw, None));
        }
        frame_screws_done = 1;
    } else {
        push_n(&mut plan, A::LiftFloorChestLight, targets.frames);
    }

    // Frame screws, possibly interrupted by a leg screwed in too early.
    let remaining = targets.frame_screws - frame_screws_done;
    let mut legs_screwed = 0;
    let mut legs_lifted = 0;
    let interrupt_after = (leg_mistake && remaining >= 1).then(|| rng.random_range(1..=remaining.min(6)));
    for i in 0..remaining {
        if interrupt_after == Some(i) {
            plan.push((A::LiftKneeChestHeavy, None));
            plan.push((A::Screw, Some(MistakeKind::ScrewLegBeforeFramesDone)));
            legs_lifted += 1;
            if rng.random_bool(0.5) {
                plan.push((A::Unscrew, None));
            } else {
                legs_screwed += 1;
            }
        }
        plan.push((A::Screw, None));
    }

    // Legs. A leg lifted early but unscrewed again only needs its screw.
    let mut leg_phase: Plan = Vec::new();
    if legs_lifted > legs_screwed {
        leg_phase.push((A::Screw, None));
        legs_screwed += 1;
    }
    for _ in legs_screwed..targets.legs {
        leg_phase.push((A::LiftKneeChestHeavy, None));
        leg_phase.push((A::Screw, None));
    }
    let leg_screw_positions: Vec<usize> =
        leg_phase.iter().enumerate().filter(|(_, (a, _))| *a == A::Screw).map(|(i, _)| i).collect();
    let mut drills_done = 0;
    if drill_mistake && leg_screw_positions.len() >= 2 {
        let after = rng.random_range(1..leg_screw_positions.len().min(4));
        leg_phase.insert(leg_screw_positions[after - 1] + 1, (A::Drill, Some(MistakeKind::DrillBeforeAllScrews)));
        drills_done = 1;
    }
    plan.extend(leg_phase);

    push_n(&mut plan, A::Drill, targets.drills - drills_done);
    plan.push((A::LiftChestKneeHeavy, None));
    plan
}

/// Generates one activity log. Each activity is logged when it finishes, so
/// the gap before an event is that activity's duration plus any pause.
pub fn generate_log(
    profile: &SkillProfile,
    targets: Targets,
    seed: u64,
    start_time: ClockTime,
) -> Result<ActivityLog, GenerateError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = plan_events(profile, targets, &mut rng);
    let mut conversation = Conversation::new();
    let mut mistakes = Vec::new();
    let mut time = start_time;
    for (activity, mistake) in plan {
        let d = profile.duration(activity);
        let mut gap = rng.random_range(d.min..=d.max);
        if rng.random_bool(profile.pause_prob) {
            gap += rng.random_range(profile.pause_range.min..=profile.pause_range.max);
        }
        time = time.checked_add(gap).map_err(|_| GenerateError::PastMidnight(start_time))?;
        conversation.push(Dialogue::wearable(time, activity)).expect("times increase");
        if let Some(kind) = mistake {
            mistakes.push(MistakeEvent { kind, time });
        }
    }
    Ok(ActivityLog { conversation, mistakes, seed, start_time, profile: profile.clone() })
}

/// How skill levels are drawn for a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkillSampler {
    Uniform { min: f64, max: f64 },
    Fixed { skill: f64 },
}

impl Default for SkillSampler {
    fn default() -> Self {
        SkillSampler::Uniform { min: 0.0, max: 1.0 }
    }
}

impl SkillSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            SkillSampler::Uniform { min, max } if max > min => rng.random_range(min..=max),
            SkillSampler::Uniform { min, .. } => min,
            SkillSampler::Fixed { skill } => skill,
        }
    }
}

/// Sessions start between 8 AM and 6 PM.
const START_WINDOW: (u32, u32) = (8 * 3600, 18 * 3600);

/// Generates `count` logs. Per-log seeds, skills and start times are drawn
/// from `seed` up front, so the result does not depend on `exec`.
pub fn generate_corpus(
    base: &SkillProfile,
    sampler: SkillSampler,
    targets: Targets,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ActivityLog>, GenerateError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(u64, SkillProfile, ClockTime)> = (0..count)
        .map(|_| {
            let log_seed: u64 = master.random();
            let profile = base.clone().with_skill(sampler.sample(&mut master));
            let start =
                ClockTime::from_seconds(master.random_range(START_WINDOW.0..START_WINDOW.1)).expect("within a day");
            (log_seed, profile, start)
        })
        .collect();
    let mut logs = exec.try_map(&jobs, |(s, p, t)| generate_log(p, targets, *s, *t))?;
    for (i, log) in logs.iter_mut().enumerate() {
        log.conversation.source = Some(log_id(i));
    }
    Ok(logs)
}

pub fn log_id(i: usize) -> String {
    format!("log-{i:04}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convo::serialize_conversation;
    use crate::task::{StepId, TaskDef};
    use crate::tracker::StepTracker;
    use proptest::prelude::*;

    fn targets() -> Targets {
        TaskDef::table_assembly().targets()
    }

    fn ten() -> ClockTime {
        ClockTime::from_hms(10, 0, 0).unwrap()
    }

    fn activities(log: &ActivityLog) -> Vec<A> {
        log.conversation.dialogues.iter().map(|d| d.activity().unwrap()).collect()
    }

    #[test]
    fn perfect_skill_gives_nominal_sequence() {
        let mut want = vec![A::LiftFloorChestHeavy, A::Sand, A::LiftChestChestHeavy];
        want.extend([A::LiftFloorChestLight; 4]);
        want.extend([A::Screw; 8]);
        for _ in 0..4 {
            want.extend([A::LiftKneeChestHeavy, A::Screw]);
        }
        want.extend([A::Drill; 12]);
        want.push(A::LiftChestKneeHeavy);
        let p = SkillProfile::default().with_skill(1.0).with_mistake_prob(1.0);
        for seed in 0..20 {
            let log = generate_log(&p, targets(), seed, ten()).unwrap();
            assert!(log.mistakes.is_empty());
            assert_eq!(activities(&log), want);
        }
    }

    #[test]
    fn zero_skill_full_probability_makes_every_mistake() {
        let task = TaskDef::table_assembly();
        let tracker = StepTracker::new(&task);
        let p = SkillProfile::default().with_skill(0.0).with_mistake_prob(1.0);
        for seed in 0..50 {
            let log = generate_log(&p, targets(), seed, ten()).unwrap();
            let kinds: Vec<MistakeKind> = log.mistakes.iter().map(|m| m.kind).collect();
            assert_eq!(kinds, MistakeKind::ALL);
            let replay = tracker.replay(&log.conversation);
            assert_eq!(replay.state.mistakes, log.mistakes);
            assert_eq!(tracker.step_of(&replay.state), StepId::Done);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = SkillProfile::default().with_skill(0.2);
        let a = generate_log(&p, targets(), 99, ten()).unwrap();
        let b = generate_log(&p, targets(), 99, ten()).unwrap();
        assert_eq!(serialize_conversation(&a.conversation), serialize_conversation(&b.conversation));
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_profile_is_rejected() {
        let p = SkillProfile::default().with_skill(2.0);
        assert!(matches!(generate_log(&p, targets(), 1, ten()), Err(GenerateError::InvalidProfile(_))));
    }

    #[test]
    fn late_start_overflows() {
        let late = ClockTime::from_hms(23, 50, 0).unwrap();
        assert!(matches!(
            generate_log(&SkillProfile::default(), targets(), 1, late),
            Err(GenerateError::PastMidnight(_))
        ));
    }

    #[test]
    fn corpus_is_seeded() {
        let p = SkillProfile::default();
        let a = generate_corpus(&p, SkillSampler::default(), targets(), 20, 7, Execution::Parallel).unwrap();
        let b = generate_corpus(&p, SkillSampler::default(), targets(), 20, 7, Execution::Sequential).unwrap();
        let c = generate_corpus(&p, SkillSampler::default(), targets(), 20, 8, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], c[0]);
        assert_eq!(a[3].conversation.source.as_deref(), Some("log-0003"));
        assert!(generate_corpus(&p, SkillSampler::default(), targets(), 0, 7, Execution::Parallel).unwrap().is_empty());
        for log in &a {
            let t = log.start_time.seconds_since_midnight();
            assert!((8 * 3600..18 * 3600).contains(&t));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn replay_matches_recorded_mistakes(seed in any::<u64>(), skill in 0.0f64..=1.0, p in 0.0f64..=1.0) {
            let task = TaskDef::table_assembly();
            let tracker = StepTracker::new(&task);
            let profile = SkillProfile::default().with_skill(skill).with_mistake_prob(p);
            let log = generate_log(&profile, task.targets(), seed, ten()).unwrap();
            let replay = tracker.replay(&log.conversation);
            prop_assert_eq!(&replay.state.mistakes, &log.mistakes);
            prop_assert_eq!(tracker.step_of(&replay.state), StepId::Done);
        }

        #[test]
        fn gaps_respect_profile(seed in any::<u64>(), skill in 0.0f64..=1.0) {
            let profile = SkillProfile::default().with_skill(skill);
            let log = generate_log(&profile, targets(), seed, ten()).unwrap();
            let mut prev = log.start_time;
            for d in &log.conversation.dialogues {
                let r = profile.duration(d.activity().unwrap());
                let gap = prev.seconds_until(d.time);
                prop_assert!(gap >= i64::from(r.min));
                prop_assert!(gap <= i64::from(r.max + profile.pause_range.max));
                prev = d.time;
            }
        }
    }
}
