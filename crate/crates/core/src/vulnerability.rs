//! Posterior-attack counting, attack probabilities, vulnerability indices
//! and the sorted schedule store with its per-task lookup table.
//!
//! The attack effective window of a victim job is the `Ω` slots after the
//! slot in which it completes, cut at the end of the job's own period: the
//! output buffer is consumed at the next release, so later writes cannot
//! affect that job.

use std::fmt::Write as _;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::rational::{self, serde_rational, serde_rational_vec, Rational};
use crate::schedgen::Schedule;
use crate::taskmodel::{criticality_levels, TaskSet};
use crate::{Error, Result};

/// Slots `[first, last]` of the window after the completion of job `job`
/// of a task with period `p`, or `None` when the window is empty.
pub fn aew_window(completion: usize, job: usize, period: u64, aew: u64) -> Option<(usize, usize)> {
    let end_of_period = (job + 1) * period as usize - 1;
    let last = (completion + aew as usize).min(end_of_period);
    (aew > 0 && last > completion).then_some((completion + 1, last))
}

/// Attack counts for one victim in one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackCount {
    /// Jobs whose post-completion window contains an untrusted slot.
    pub completion_based: u64,
    /// Jobs with any executed slot followed, within `Ω` and inside the
    /// period, by an untrusted slot. Equal to the above with unit WCETs.
    pub occupancy_based: u64,
    pub jobs: u64,
}

pub fn attack_count(s: &Schedule, victim_id: usize, aew: u64, untrusted_ids: &[usize]) -> AttackCount {
    let p = s.spec.period(victim_id);
    let is_untrusted = |t: usize| untrusted_ids.contains(&s.slots[t]);
    let completions = s.completion_slots(victim_id);
    let mut completion_based = 0;
    for (job, &c) in completions.iter().enumerate() {
        if let Some((a, b)) = aew_window(c, job, p, aew) {
            if (a..=b).any(is_untrusted) {
                completion_based += 1;
            }
        }
    }
    let mut occupancy_based = 0;
    for job in 0..completions.len() {
        let start = job * p as usize;
        let hit = (start..start + p as usize)
            .filter(|&t| s.slots[t] == victim_id)
            .any(|t| aew_window(t, job, p, aew).is_some_and(|(a, b)| (a..=b).any(is_untrusted)));
        if hit {
            occupancy_based += 1;
        }
    }
    AttackCount {
        completion_based,
        occupancy_based,
        jobs: completions.len() as u64,
    }
}

/// `C_p · p / l`, i.e. the fraction of victim jobs exposed.
pub fn attack_probability(count: u64, period: u64, hyper_period: u64) -> Rational {
    Rational::new((count * period) as i64, hyper_period as i64)
}

pub fn svi(aps: &[Rational], levels: &[Rational]) -> Rational {
    aps.iter().zip(levels).fold(Rational::zero(), |acc, (a, c)| acc + a * c)
}

/// `Σ TAP_i · cl_i`.
pub fn svt(taskset: &TaskSet) -> Rational {
    svi(&taskset.taps(), &criticality_levels(taskset))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnReport {
    pub schedule_key: String,
    pub spec_label: String,
    pub counts: Vec<u64>,
    #[serde(with = "serde_rational_vec")]
    pub ap: Vec<Rational>,
    #[serde(with = "serde_rational")]
    pub svi: Rational,
}

pub fn analyze(s: &Schedule, taskset: &TaskSet, levels: &[Rational]) -> VulnReport {
    let untrusted: Vec<usize> = taskset.untrusted_ids().collect();
    let l = s.hyper_period();
    let mut counts = Vec::new();
    let mut ap = Vec::new();
    for (i, t) in taskset.trusted.iter().enumerate() {
        let id = i + 1;
        let c = attack_count(s, id, t.aew, &untrusted).completion_based;
        counts.push(c);
        ap.push(attack_probability(c, s.spec.period(id), l));
    }
    VulnReport {
        schedule_key: s.key(),
        spec_label: s.spec.label(),
        svi: svi(&ap, levels),
        counts,
        ap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub schedule: Schedule,
    pub report: VulnReport,
}

/// Schedules sorted by SVI (ties by key), the threshold index `K` and one
/// lookup row per trusted task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStore {
    pub schema_version: u32,
    pub tool_version: String,
    pub taskset_hash: String,
    #[serde(with = "serde_rational")]
    pub svt: Rational,
    #[serde(with = "serde_rational_vec")]
    pub taps: Vec<Rational>,
    /// First index whose SVI is not below the threshold.
    pub k: usize,
    pub entries: Vec<StoreEntry>,
    /// `lut[i]` lists indices with `AP_{i+1} < TAP_{i+1}`, ascending by AP.
    pub lut: Vec<Vec<usize>>,
    /// Problems that make a mode unusable.
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn build_store(pool: Vec<Schedule>, taskset: &TaskSet) -> Result<ScheduleStore> {
    if pool.is_empty() {
        return Err(Error::EmptyCandidateSet("schedule pool".into()));
    }
    let levels = criticality_levels(taskset);
    let mut entries: Vec<StoreEntry> = pool
        .into_iter()
        .map(|schedule| {
            let report = analyze(&schedule, taskset, &levels);
            StoreEntry { schedule, report }
        })
        .collect();
    entries.sort_by(|a, b| {
        a.report
            .svi
            .cmp(&b.report.svi)
            .then_with(|| a.report.schedule_key.cmp(&b.report.schedule_key))
            .then_with(|| a.schedule.spec.cmp(&b.schedule.spec))
            .then_with(|| a.schedule.slots.cmp(&b.schedule.slots))
    });
    let threshold = svt(taskset);
    let k = entries.partition_point(|e| e.report.svi < threshold);
    let taps = taskset.taps();
    let lut: Vec<Vec<usize>> = taps
        .iter()
        .enumerate()
        .map(|(i, tap)| {
            let mut row: Vec<usize> = (0..entries.len()).filter(|&j| entries[j].report.ap[i] < *tap).collect();
            row.sort_by(|&a, &b| entries[a].report.ap[i].cmp(&entries[b].report.ap[i]).then(a.cmp(&b)));
            row
        })
        .collect();
    let mut warnings = Vec::new();
    if k == 0 {
        warnings.push("no schedule has SVI below the threshold; normal mode cannot select".to_string());
    }
    for (i, row) in lut.iter().enumerate() {
        if row.is_empty() {
            warnings.push(format!(
                "no schedule keeps {} below its tolerable attack probability; alert mode for it cannot select",
                taskset.task_name(i + 1)
            ));
        }
    }
    Ok(ScheduleStore {
        schema_version: 1,
        tool_version: crate::TOOL_VERSION.to_string(),
        taskset_hash: taskset.hash(),
        svt: threshold,
        taps,
        k,
        entries,
        lut,
        warnings,
    })
}

/// Memory needed on the target: the modelled cost and the size of the
/// JSON encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryCost {
    pub model_bytes: u64,
    pub lut_bytes: u64,
    pub schedule_bytes: u64,
    pub serialized_bytes: u64,
}

impl ScheduleStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trusted_count(&self) -> usize {
        self.lut.len()
    }

    pub fn svi(&self, index: usize) -> Rational {
        self.entries[index].report.svi
    }

    /// AP of trusted task `task_id` (1-based) in schedule `index`.
    pub fn ap(&self, index: usize, task_id: usize) -> Rational {
        self.entries[index].report.ap[task_id - 1]
    }

    /// `q·M·b + (Σ l_k)·b` for `q` lookup rows over `M` schedules.
    pub fn memory_cost(&self, bytes_per_element: u64) -> Result<MemoryCost> {
        let q = self.trusted_count() as u64;
        let m = self.entries.len() as u64;
        let lut_bytes = q * m * bytes_per_element;
        let schedule_bytes = self.entries.iter().map(|e| e.schedule.hyper_period()).sum::<u64>() * bytes_per_element;
        Ok(MemoryCost {
            model_bytes: lut_bytes + schedule_bytes,
            lut_bytes,
            schedule_bytes,
            serialized_bytes: serde_json::to_vec(self)?.len() as u64,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ScheduleStore = serde_json::from_str(text).map_err(|e| Error::config(format!("store file: {e}")))?;
        if s.schema_version != 1 {
            return Err(Error::config(format!("unsupported store schema version {}", s.schema_version)));
        }
        s.check()?;
        Ok(s)
    }

    /// Verifies ordering, `K` and the lookup rows.
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("store is inconsistent: {m}")));
        if self.entries.windows(2).any(|w| w[0].report.svi > w[1].report.svi) {
            return bad("entries are not sorted by SVI");
        }
        if self.k > self.entries.len()
            || self.entries[..self.k].iter().any(|e| e.report.svi >= self.svt)
            || self.entries[self.k..].iter().any(|e| e.report.svi < self.svt)
        {
            return bad("threshold index does not split the entries at the threshold");
        }
        for (i, row) in self.lut.iter().enumerate() {
            if row.iter().any(|&j| j >= self.entries.len() || self.entries[j].report.ap[i] >= self.taps[i]) {
                return bad("lookup row holds a schedule above the tolerable probability");
            }
            if row.windows(2).any(|w| self.entries[w[0]].report.ap[i] > self.entries[w[1]].report.ap[i]) {
                return bad("lookup row is not sorted by AP");
            }
        }
        Ok(())
    }

    /// One CSV line per schedule: index, key, spec, SVI and each AP.
    pub fn reports_csv(&self, taskset: &TaskSet) -> String {
        let mut out = String::from("index,key,spec,svi,below_svt");
        for i in 1..=self.trusted_count() {
            let _ = write!(out, ",ap_{}", taskset.task_name(i));
        }
        out.push('\n');
        for (idx, e) in self.entries.iter().enumerate() {
            let _ = write!(
                out,
                "{idx},{},{},{},{}",
                e.report.schedule_key,
                e.report.spec_label,
                rational::format(&e.report.svi),
                idx < self.k
            );
            for a in &e.report.ap {
                let _ = write!(out, ",{}", rational::format(a));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-task averages and the fraction below the threshold, as floats for
/// reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolSummary {
    pub schedules: usize,
    pub mean_ap: Vec<f64>,
    pub below_svt: usize,
    pub fraction_below_svt: f64,
    pub mean_svi: f64,
}

pub fn summarize(reports: &[&VulnReport], svt: Rational) -> PoolSummary {
    let n = reports.len();
    let q = reports.first().map_or(0, |r| r.ap.len());
    let mean_ap = (0..q)
        .map(|i| {
            let sum: Rational = reports.iter().fold(Rational::zero(), |acc, r| acc + r.ap[i]);
            rational::to_f64(&sum) / n as f64
        })
        .collect();
    let below_svt = reports.iter().filter(|r| r.svi < svt).count();
    let mean_svi = reports.iter().map(|r| rational::to_f64(&r.svi)).sum::<f64>() / n.max(1) as f64;
    PoolSummary {
        schedules: n,
        mean_ap,
        below_svt,
        fraction_below_svt: below_svt as f64 / n.max(1) as f64,
        mean_svi,
    }
}
