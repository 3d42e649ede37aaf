//! The schedule ladder as seen by a compromised untrusted task.
//!
//! The attacker folds the timeline into rows as long as the victim's
//! smallest period. Columns where its own jobs arrive form the AAI set,
//! columns where it actually runs form the AEI set; arrival columns in
//! which it never ran point at the victim (or another higher-priority task).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_integer::Integer;
use serde::Serialize;

use crate::rational::Rational;
use crate::schedgen::Schedule;
use crate::taskmodel::TaskSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LadderView {
    pub row_length: u64,
    pub attacker_id: usize,
    /// Folded timeline the ladder was built from.
    pub timeline: Vec<usize>,
    /// Columns (0-based) where an attacker job arrives.
    pub aai: BTreeSet<u64>,
    /// Columns (0-based) where the attacker executes.
    pub aei: BTreeSet<u64>,
    /// `aai \ aei`.
    pub inferred_columns: BTreeSet<u64>,
    /// Set when the observation is shorter than `lcm(row, p_attacker)`.
    pub inconclusive: bool,
}

/// What the attacker can measure about itself: maximal runs of consecutive
/// slots in which it executed, as `[start, end)` pairs.
pub fn observed_segments(timeline: &[usize], attacker_id: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &s) in timeline.iter().enumerate() {
        match (s == attacker_id, start) {
            (true, None) => start = Some(t as u64),
            (false, Some(b)) => {
                out.push((b, t as u64));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        out.push((b, timeline.len() as u64));
    }
    out
}

/// Ladder from the attacker's own execution segments only.
pub fn ladder_from_segments(
    segments: &[(u64, u64)],
    observation_slots: u64,
    row_length: u64,
    attacker_id: usize,
    attacker_period: u64,
) -> Result<LadderView> {
    if row_length == 0 || attacker_period == 0 {
        return Err(Error::Domain("row length and attacker period must be positive".into()));
    }
    let aai: BTreeSet<u64> = (0..observation_slots)
        .step_by(attacker_period as usize)
        .map(|t| t % row_length)
        .collect();
    let mut timeline = vec![0usize; observation_slots as usize];
    let mut aei = BTreeSet::new();
    for &(b, e) in segments {
        for t in b..e.min(observation_slots) {
            aei.insert(t % row_length);
            timeline[t as usize] = attacker_id;
        }
    }
    let inferred_columns = aai.difference(&aei).copied().collect();
    Ok(LadderView {
        row_length,
        attacker_id,
        timeline,
        aai,
        aei,
        inferred_columns,
        inconclusive: observation_slots < row_length.lcm(&attacker_period),
    })
}

/// Ladder over `observation_slots` slots of a (cyclically repeated)
/// timeline.
pub fn ladder_from_timeline(
    timeline: &[usize],
    row_length: u64,
    attacker_id: usize,
    attacker_period: u64,
) -> Result<LadderView> {
    let mut lv = ladder_from_segments(
        &observed_segments(timeline, attacker_id),
        timeline.len() as u64,
        row_length,
        attacker_id,
        attacker_period,
    )?;
    lv.timeline = timeline.to_vec();
    Ok(lv)
}

/// Default observation length: two repetitions of `lcm(row, p_attacker)`,
/// rounded up to whole hyper-periods of the schedule.
pub fn default_observation(schedule: &Schedule, row_length: u64, attacker_period: u64) -> u64 {
    let base = 2 * row_length.lcm(&attacker_period);
    let l = schedule.hyper_period().max(1);
    base.div_ceil(l) * l
}

/// Ladder of `schedule` for victim `victim_id` against `attacker_id`. The
/// row length is the victim's smallest admissible period, whatever period
/// the schedule deploys.
pub fn build_ladder(
    schedule: &Schedule,
    taskset: &TaskSet,
    victim_id: usize,
    attacker_id: usize,
    observation_slots: Option<u64>,
) -> Result<LadderView> {
    let victim = taskset
        .trusted_task(victim_id)
        .ok_or_else(|| Error::config(format!("task {victim_id} is not a trusted task")))?;
    if attacker_id == 0 || attacker_id > schedule.spec.len() {
        return Err(Error::config(format!("no task with priority index {attacker_id}")));
    }
    let row = victim.min_period();
    let p_att = schedule.spec.period(attacker_id);
    let obs = observation_slots.unwrap_or_else(|| default_observation(schedule, row, p_att));
    ladder_from_timeline(&schedule.timeline(obs as usize), row, attacker_id, p_att)
}

/// `(|AEI| mod |AAI|) / |AAI|`.
pub fn inferability_ratio(lv: &LadderView) -> Rational {
    ir_from_counts(lv.aei.len(), lv.aai.len())
}

pub fn ir_from_counts(aei: usize, aai: usize) -> Rational {
    if aai == 0 {
        return Rational::from_integer(0);
    }
    Rational::new((aei % aai) as i64, aai as i64)
}

/// Number of slots in which `victim_id` runs right after `attacker_id` was
/// running and the attacker still had work left, over the given timeline.
pub fn preemptions(timeline: &[usize], spec: &crate::taskmodel::TaskSpec, victim_id: usize, attacker_id: usize) -> usize {
    let p = spec.period(attacker_id) as usize;
    let e = spec.wcet(attacker_id);
    let mut executed = 0u64;
    let mut count = 0;
    for t in 0..timeline.len() {
        if t % p == 0 {
            executed = 0;
        }
        if t > 0 && timeline[t] == victim_id && timeline[t - 1] == attacker_id && executed < e && executed > 0 {
            count += 1;
        }
        if timeline[t] == attacker_id {
            executed += 1;
        }
    }
    count
}

/// Text grid with 1-based column headers; `.` marks idle slots.
pub fn render_grid(lv: &LadderView) -> String {
    let mut out = String::new();
    let width = lv
        .timeline
        .iter()
        .map(|s| s.to_string().len())
        .max()
        .unwrap_or(1)
        .max(lv.row_length.to_string().len());
    let _ = write!(out, "{:>5} |", "row");
    for c in 1..=lv.row_length {
        let _ = write!(out, " {c:>width$}");
    }
    out.push('\n');
    for (r, chunk) in lv.timeline.chunks(lv.row_length as usize).enumerate() {
        let _ = write!(out, "{:>5} |", r + 1);
        for &s in chunk {
            let cell = if s == 0 { ".".to_string() } else { s.to_string() };
            let _ = write!(out, " {cell:>width$}");
        }
        out.push('\n');
    }
    let cols = |set: &BTreeSet<u64>| set.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(",");
    let _ = writeln!(out, "AAI columns: {{{}}}", cols(&lv.aai));
    let _ = writeln!(out, "AEI columns: {{{}}}", cols(&lv.aei));
    let _ = writeln!(out, "IR = {}", crate::rational::format(&inferability_ratio(lv)));
    out
}

/// CSV with one line per slot: row and column (both 1-based) and the task.
pub fn render_csv(lv: &LadderView) -> String {
    let mut out = String::from("row,column,task\n");
    for (t, &s) in lv.timeline.iter().enumerate() {
        let r = t as u64 / lv.row_length + 1;
        let c = t as u64 % lv.row_length + 1;
        let _ = writeln!(out, "{r},{c},{s}");
    }
    out
}
