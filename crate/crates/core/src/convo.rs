//! Timestamped conversation format.
//!
//! One dialogue per line:
//!
//! ```text
//! 05:30:15 PM - Assistant: Please lift the tabletop and place it on a surface.
//! 05:30:26 PM - Wearable: lift floor-to-chest heavy
//! ```
//!
//! Sessions are single-day: timestamps are compared in 24-hour order and a
//! decrease is an error.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityClass;

/// Number of dialogues shown to the assistant model.
pub const DEFAULT_WINDOW: usize = 5;

const SECONDS_PER_DAY: u32 = 24 * 3600;

static LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{2}):(\d{2}):(\d{2}) (AM|PM) - (Assistant|User|Wearable):(.*)$").unwrap());

static GENERATED_PREFIX_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\d{1,2}:\d{2}:\d{2}\s*(?:AM|PM)\s*-\s*Assistant\s*:").unwrap());

static OTHER_SPEAKER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\d{1,2}:\d{2}:\d{2}\s*(?:AM|PM)\s*-\s*(?:User|Wearable)\s*:").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Assistant,
    User,
    Wearable,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Assistant => "Assistant",
            Speaker::User => "User",
            Speaker::Wearable => "Wearable",
        }
    }

    /// Wearable and User dialogues trigger an assistant invocation.
    pub fn is_trigger(self) -> bool {
        !matches!(self, Speaker::Assistant)
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Speaker {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Assistant" => Ok(Speaker::Assistant),
            "User" => Ok(Speaker::User),
            "Wearable" => Ok(Speaker::Wearable),
            other => Err(format!("unknown speaker {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Meridiem {
    Am,
    Pm,
}

/// Wall-clock time of day with one-second resolution.
///
/// Ordered in 24-hour time; displayed as `HH:MM:SS AM/PM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ClockTime {
    secs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClockError {
    #[error("invalid clock time {0:?}")]
    Invalid(String),
    #[error("time past the end of the day")]
    Overflow,
}

impl ClockTime {
    pub const MIDNIGHT: ClockTime = ClockTime { secs: 0 };
    pub const LAST: ClockTime = ClockTime { secs: SECONDS_PER_DAY - 1 };

    /// From 24-hour components.
    pub fn from_hms(hour: u32, minute: u32, second: u32) -> Result<Self, ClockError> {
        if hour > 23 || minute > 59 || second > 59 {
            return Err(ClockError::Invalid(format!("{hour}:{minute}:{second}")));
        }
        Ok(ClockTime { secs: hour * 3600 + minute * 60 + second })
    }

    /// From 12-hour components (`hour` in 1..=12).
    pub fn from_12h(hour: u32, minute: u32, second: u32, meridiem: Meridiem) -> Result<Self, ClockError> {
        if !(1..=12).contains(&hour) {
            return Err(ClockError::Invalid(format!("hour {hour}")));
        }
        let h24 = match (meridiem, hour) {
            (Meridiem::Am, 12) => 0,
            (Meridiem::Am, h) => h,
            (Meridiem::Pm, 12) => 12,
            (Meridiem::Pm, h) => h + 12,
        };
        Self::from_hms(h24, minute, second)
    }

    pub fn from_seconds(secs: u32) -> Result<Self, ClockError> {
        if secs >= SECONDS_PER_DAY {
            return Err(ClockError::Overflow);
        }
        Ok(ClockTime { secs })
    }

    pub fn seconds_since_midnight(self) -> u32 {
        self.secs
    }

    pub fn hour24(self) -> u32 {
        self.secs / 3600
    }

    pub fn hour12(self) -> u32 {
        match self.hour24() % 12 {
            0 => 12,
            h => h,
        }
    }

    pub fn minute(self) -> u32 {
        (self.secs / 60) % 60
    }

    pub fn second(self) -> u32 {
        self.secs % 60
    }

    pub fn meridiem(self) -> Meridiem {
        if self.hour24() < 12 {
            Meridiem::Am
        } else {
            Meridiem::Pm
        }
    }

    pub fn checked_add(self, secs: u32) -> Result<Self, ClockError> {
        Self::from_seconds(self.secs.checked_add(secs).ok_or(ClockError::Overflow)?)
    }

    /// Adds seconds, pinning at 11:59:59 PM.
    pub fn saturating_add(self, secs: u32) -> Self {
        ClockTime { secs: self.secs.saturating_add(secs).min(SECONDS_PER_DAY - 1) }
    }

    pub fn seconds_until(self, later: ClockTime) -> i64 {
        later.secs as i64 - self.secs as i64
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.meridiem() {
            Meridiem::Am => "AM",
            Meridiem::Pm => "PM",
        };
        write!(f, "{:02}:{:02}:{:02} {}", self.hour12(), self.minute(), self.second(), m)
    }
}

impl FromStr for ClockTime {
    type Err = ClockError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClockError::Invalid(s.to_string());
        let (hms, mer) = s.trim().split_once(' ').ok_or_else(bad)?;
        let meridiem = match mer.trim() {
            "AM" => Meridiem::Am,
            "PM" => Meridiem::Pm,
            _ => return Err(bad()),
        };
        let mut parts = hms.split(':');
        let mut next = || -> Result<u32, ClockError> {
            let p = parts.next().ok_or_else(bad)?;
            if p.len() != 2 || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            p.parse().map_err(|_| bad())
        };
        let (h, m, sec) = (next()?, next()?, next()?);
        if parts.next().is_some() {
            return Err(bad());
        }
        ClockTime::from_12h(h, m, sec, meridiem).map_err(|_| bad())
    }
}

impl From<ClockTime> for String {
    fn from(t: ClockTime) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for ClockTime {
    type Error = ClockError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One timestamped, speaker-attributed utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dialogue {
    pub time: ClockTime,
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("dialogue text is empty")]
    EmptyText,
    #[error("dialogue text contains a line break")]
    Multiline,
    #[error(transparent)]
    UnknownActivity(#[from] crate::activity::UnknownActivity),
}

impl Dialogue {
    /// Validated constructor. Text is trimmed; Wearable text is canonicalized.
    pub fn new(time: ClockTime, speaker: Speaker, text: impl AsRef<str>) -> Result<Self, DialogueError> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(DialogueError::EmptyText);
        }
        if text.contains(['\n', '\r']) {
            return Err(DialogueError::Multiline);
        }
        let text = match speaker {
            Speaker::Wearable => text.parse::<ActivityClass>()?.surface().to_string(),
            _ => text.to_string(),
        };
        Ok(Dialogue { time, speaker, text })
    }

    pub fn wearable(time: ClockTime, activity: ActivityClass) -> Self {
        Dialogue { time, speaker: Speaker::Wearable, text: activity.surface().to_string() }
    }

    /// The recognized activity, for Wearable dialogues.
    pub fn activity(&self) -> Option<ActivityClass> {
        match self.speaker {
            Speaker::Wearable => self.text.parse().ok(),
            _ => None,
        }
    }
}

impl fmt::Display for Dialogue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {}: {}", self.time, self.speaker, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("line {0}: malformed dialogue line")]
    MalformedLine(usize),
    #[error("line {0}: timestamp earlier than the previous dialogue")]
    NonMonotonicTimestamp(usize),
    #[error("line {line}: unknown activity {text:?}")]
    UnknownActivity { line: usize, text: String },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::MalformedLine(l) | ParseError::NonMonotonicTimestamp(l) => *l,
            ParseError::UnknownActivity { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("dialogue at {got} is earlier than the previous one at {last}")]
pub struct OutOfOrder {
    pub last: ClockTime,
    pub got: ClockTime,
}

/// Ordered dialogues of one session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub dialogues: Vec<Dialogue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Conversation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn last_time(&self) -> Option<ClockTime> {
        self.dialogues.last().map(|d| d.time)
    }

    /// Appends a dialogue, rejecting a timestamp that goes backwards.
    pub fn push(&mut self, d: Dialogue) -> Result<(), OutOfOrder> {
        if let Some(last) = self.last_time() {
            if d.time < last {
                return Err(OutOfOrder { last, got: d.time });
            }
        }
        self.dialogues.push(d);
        Ok(())
    }

    pub fn count(&self, speaker: Speaker) -> usize {
        self.dialogues.iter().filter(|d| d.speaker == speaker).count()
    }

    pub fn triggers(&self) -> impl Iterator<Item = (usize, &Dialogue)> {
        self.dialogues.iter().enumerate().filter(|(_, d)| d.speaker.is_trigger())
    }
}

/// Parses a conversation document. Blank lines are ignored.
pub fn parse_conversation(doc: &str) -> Result<Conversation, ParseError> {
    let mut convo = Conversation::new();
    for (i, raw) in doc.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let d = parse_line(line, line_no)?;
        convo.push(d).map_err(|_| ParseError::NonMonotonicTimestamp(line_no))?;
    }
    Ok(convo)
}

fn parse_line(line: &str, line_no: usize) -> Result<Dialogue, ParseError> {
    let caps = LINE_RE.captures(line).ok_or(ParseError::MalformedLine(line_no))?;
    let num = |i: usize| caps[i].parse::<u32>().map_err(|_| ParseError::MalformedLine(line_no));
    let meridiem = if &caps[4] == "AM" { Meridiem::Am } else { Meridiem::Pm };
    let time =
        ClockTime::from_12h(num(1)?, num(2)?, num(3)?, meridiem).map_err(|_| ParseError::MalformedLine(line_no))?;
    let speaker: Speaker = caps[5].parse().map_err(|_| ParseError::MalformedLine(line_no))?;
    let text = &caps[6];
    Dialogue::new(time, speaker, text).map_err(|e| match e {
        DialogueError::UnknownActivity(a) => ParseError::UnknownActivity { line: line_no, text: a.0 },
        _ => ParseError::MalformedLine(line_no),
    })
}

/// One line per dialogue with a single trailing newline; empty for an empty conversation.
pub fn serialize_conversation(c: &Conversation) -> String {
    serialize_dialogues(&c.dialogues)
}

pub fn serialize_dialogues(dialogues: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

/// Trims every line, drops blank lines and collapses runs of whitespace.
pub fn normalize_document(doc: &str) -> String {
    let mut out = String::new();
    for line in doc.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

/// The last `min(n, len)` dialogues, in order.
pub fn recent_window(c: &Conversation, n: usize) -> &[Dialogue] {
    window_of(&c.dialogues, n)
}

pub fn window_of(dialogues: &[Dialogue], n: usize) -> &[Dialogue] {
    &dialogues[dialogues.len().saturating_sub(n)..]
}

/// Removes a leading `HH:MM:SS AM/PM - Assistant:` that a model copied from
/// its prompt, and trims the result.
pub fn strip_generated_prefix(response: &str) -> &str {
    let trimmed = response.trim();
    match GENERATED_PREFIX_RE.find(trimmed) {
        Some(m) => trimmed[m.end()..].trim(),
        None => trimmed,
    }
}

/// Post-processes raw model output into a single assistant utterance.
///
/// Generated assistant prefixes are stripped, output stops at the first line
/// attributed to another speaker, remaining lines are joined with spaces and
/// any configured silence marker (compared case-insensitively) becomes the
/// empty string.
pub fn clean_response(raw: &str, silence_markers: &[String]) -> String {
    let mut parts = Vec::new();
    for line in raw.lines() {
        if OTHER_SPEAKER_RE.is_match(line) {
            break;
        }
        let text = strip_generated_prefix(line);
        if !text.is_empty() {
            parts.push(text);
        }
    }
    let joined = parts.join(" ");
    let joined = joined.trim();
    if silence_markers.iter().any(|m| m.trim().eq_ignore_ascii_case(joined)) {
        return String::new();
    }
    joined.to_string()
}
