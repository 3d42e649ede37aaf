//! Task sets, task specifications, response-time analysis and hyper-periods.
//!
//! Priorities are implicit in list order: trusted tasks come first
//! (index 1 is the highest priority), untrusted tasks follow. Every time
//! value is a whole number of slots.

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rational::{self, serde_rational, Rational};
use crate::secureperiods::SecurityPolicy;
use crate::{Error, Result};

/// Schema version written to and accepted from task-set files.
pub const TASKSET_SCHEMA_VERSION: u32 = 1;

/// Default cap on the hyper-period of a single specification.
pub const DEFAULT_HYPER_PERIOD_BOUND: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustedTask {
    pub name: String,
    /// Admissible periods, in slots.
    pub period_menu: Vec<u64>,
    pub wcet: u64,
    /// Attack effective window length Ω in slots.
    pub aew: u64,
    /// Raw criticality value; defaults to `q - index` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub criticality: Option<Rational>,
    /// Tolerable attack probability.
    #[serde(with = "serde_rational")]
    pub tap: Rational,
    /// Key into the plant configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<String>,
}

impl TrustedTask {
    pub fn min_period(&self) -> u64 {
        self.period_menu.iter().copied().min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UntrustedTask {
    pub name: String,
    pub period: u64,
    pub wcet: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    /// Seconds per slot.
    pub delta: f64,
    pub trusted: Vec<TrustedTask>,
    #[serde(default)]
    pub untrusted: Vec<UntrustedTask>,
    #[serde(default)]
    pub security_policy: SecurityPolicy,
}

fn default_schema() -> u32 {
    TASKSET_SCHEMA_VERSION
}

mod opt_rational {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Rational>, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(r) => serde_rational::serialize(r, ser),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Option<Rational>, D::Error> {
        serde_rational::deserialize(de).map(Some)
    }
}

impl TaskSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let ts: TaskSet = serde_json::from_str(text).map_err(|e| Error::config(format!("task set: {e}")))?;
        ts.validate()?;
        Ok(ts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != TASKSET_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported task-set schema version {} (expected {TASKSET_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta must be a positive number of seconds"));
        }
        for (i, t) in self.trusted.iter().enumerate() {
            let id = i + 1;
            if t.period_menu.is_empty() {
                return Err(Error::config(format!("trusted task {id} has an empty period menu")));
            }
            if t.wcet == 0 {
                return Err(Error::config(format!("trusted task {id} has zero WCET")));
            }
            let mut menu = t.period_menu.clone();
            menu.sort_unstable();
            menu.dedup();
            if menu.len() != t.period_menu.len() {
                return Err(Error::config(format!("trusted task {id} repeats a period")));
            }
            if t.min_period() <= t.wcet {
                return Err(Error::config(format!("trusted task {id}: minimum period must exceed WCET")));
            }
            if t.aew >= t.min_period() {
                return Err(Error::config(format!("trusted task {id}: AEW must be shorter than the minimum period")));
            }
            if t.tap < Rational::from_integer(0) || t.tap > Rational::from_integer(1) {
                return Err(Error::config(format!("trusted task {id}: TAP must lie in [0, 1]")));
            }
            if let Some(c) = t.criticality {
                if c <= Rational::from_integer(0) {
                    return Err(Error::config(format!("trusted task {id}: criticality must be positive")));
                }
            }
        }
        for (j, u) in self.untrusted.iter().enumerate() {
            let id = self.trusted.len() + j + 1;
            if u.wcet == 0 || u.period <= u.wcet {
                return Err(Error::config(format!("untrusted task {id}: need 0 < WCET < period")));
            }
        }
        if let SecurityPolicy::DesignatedAttacker(id) = self.security_policy {
            if !self.is_untrusted(id) {
                return Err(Error::config(format!("designated attacker {id} is not an untrusted task")));
            }
        }
        Ok(())
    }

    pub fn trusted_count(&self) -> usize {
        self.trusted.len()
    }

    pub fn task_count(&self) -> usize {
        self.trusted.len() + self.untrusted.len()
    }

    /// Priority indices (1-based) of the untrusted tasks.
    pub fn untrusted_ids(&self) -> impl Iterator<Item = usize> + '_ {
        let q = self.trusted.len();
        (0..self.untrusted.len()).map(move |j| q + j + 1)
    }

    pub fn is_trusted(&self, id: usize) -> bool {
        id >= 1 && id <= self.trusted.len()
    }

    pub fn is_untrusted(&self, id: usize) -> bool {
        id > self.trusted.len() && id <= self.task_count()
    }

    pub fn trusted_task(&self, id: usize) -> Option<&TrustedTask> {
        id.checked_sub(1).and_then(|i| self.trusted.get(i))
    }

    pub fn untrusted_task(&self, id: usize) -> Option<&UntrustedTask> {
        id.checked_sub(self.trusted.len() + 1).and_then(|j| self.untrusted.get(j))
    }

    /// Display name for a priority index.
    pub fn task_name(&self, id: usize) -> String {
        if let Some(t) = self.trusted_task(id) {
            t.name.clone()
        } else if let Some(u) = self.untrusted_task(id) {
            u.name.clone()
        } else {
            format!("task{id}")
        }
    }

    /// Raw criticality values, defaulting to `{q, q-1, ..., 1}`.
    pub fn criticality_values(&self) -> Vec<Rational> {
        let q = self.trusted.len() as i64;
        self.trusted
            .iter()
            .enumerate()
            .map(|(i, t)| t.criticality.unwrap_or_else(|| Rational::from_integer(q - i as i64)))
            .collect()
    }

    pub fn taps(&self) -> Vec<Rational> {
        self.trusted.iter().map(|t| t.tap).collect()
    }

    /// The specification with every trusted task at its minimum period.
    pub fn min_spec(&self) -> TaskSpec {
        let periods = self.trusted.iter().map(TrustedTask::min_period).collect::<Vec<_>>();
        self.spec_with(&periods)
    }

    /// Builds a specification from one chosen period per trusted task.
    pub fn spec_with(&self, trusted_periods: &[u64]) -> TaskSpec {
        assert_eq!(trusted_periods.len(), self.trusted.len(), "one period per trusted task");
        let mut periods = trusted_periods.to_vec();
        let mut wcets: Vec<u64> = self.trusted.iter().map(|t| t.wcet).collect();
        for u in &self.untrusted {
            periods.push(u.period);
            wcets.push(u.wcet);
        }
        TaskSpec {
            periods,
            wcets,
            trusted: self.trusted.len(),
        }
    }

    /// Same task set with every menu replaced by the given menus.
    pub fn with_menus(&self, menus: &[Vec<u64>]) -> TaskSet {
        let mut out = self.clone();
        for (t, m) in out.trusted.iter_mut().zip(menus) {
            t.period_menu = m.clone();
        }
        out
    }

    /// Content hash (hex) of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("task set serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..8])
    }

    pub fn total_utilization_at_min(&self) -> f64 {
        self.min_spec().utilization()
    }
}

/// One concrete period per task (trusted choices plus the fixed untrusted
/// periods), listed in priority order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskSpec {
    pub periods: Vec<u64>,
    pub wcets: Vec<u64>,
    /// Number of leading entries that are trusted tasks.
    pub trusted: usize,
}

impl TaskSpec {
    /// A spec over anonymous tasks; the first `trusted` entries are trusted.
    pub fn new(tasks: &[(u64, u64)], trusted: usize) -> Self {
        TaskSpec {
            periods: tasks.iter().map(|t| t.0).collect(),
            wcets: tasks.iter().map(|t| t.1).collect(),
            trusted,
        }
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Period of task `id` (1-based priority index).
    pub fn period(&self, id: usize) -> u64 {
        self.periods[id - 1]
    }

    pub fn wcet(&self, id: usize) -> u64 {
        self.wcets[id - 1]
    }

    pub fn trusted_periods(&self) -> &[u64] {
        &self.periods[..self.trusted]
    }

    pub fn utilization(&self) -> f64 {
        self.periods
            .iter()
            .zip(&self.wcets)
            .map(|(&p, &e)| e as f64 / p as f64)
            .sum()
    }

    pub fn hyper_period(&self) -> Result<u64> {
        hyper_period_bounded(&self.periods, DEFAULT_HYPER_PERIOD_BOUND)
    }

    /// Worst-case response time of task `id` under this specification, with
    /// implicit deadlines.
    pub fn wcrt(&self, id: usize) -> Result<u64> {
        let i = id - 1;
        let e = self.wcets[i];
        let deadline = self.periods[i];
        let mut r = e;
        loop {
            let next = e + (0..i)
                .map(|j| r.div_ceil(self.periods[j]) * self.wcets[j])
                .sum::<u64>();
            if next > deadline {
                return Err(Error::Unschedulable { task: id, deadline });
            }
            if next == r {
                return Ok(r);
            }
            r = next;
        }
    }

    /// Checks every task; returns the response times.
    pub fn check_schedulable(&self) -> Result<Vec<u64>> {
        (1..=self.len()).map(|id| self.wcrt(id)).collect()
    }

    /// Compact label like `10-15-25-20`.
    pub fn label(&self) -> String {
        self.trusted_periods()
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Response time of `task_id` with every trusted task at its minimum period.
pub fn wcrt(taskset: &TaskSet, task_id: usize) -> Result<u64> {
    if task_id == 0 || task_id > taskset.task_count() {
        return Err(Error::config(format!("no task with priority index {task_id}")));
    }
    taskset.min_spec().wcrt(task_id)
}

/// Least common multiple of `periods`, or an overflow error past `bound`.
pub fn hyper_period_bounded(periods: &[u64], bound: u64) -> Result<u64> {
    let mut l: u64 = 1;
    for &p in periods {
        if p == 0 {
            return Err(Error::Domain("periods must be positive".into()));
        }
        let g = l.gcd(&p);
        l = (l / g)
            .checked_mul(p)
            .filter(|&v| v <= bound)
            .ok_or(Error::HyperPeriodOverflow { bound })?;
    }
    Ok(l)
}

pub fn hyper_period(spec: &TaskSpec) -> Result<u64> {
    spec.hyper_period()
}

/// Cartesian product of the trusted period menus, first task varying
/// slowest.
pub fn enumerate_specs(taskset: &TaskSet) -> Vec<TaskSpec> {
    let mut out = vec![Vec::with_capacity(taskset.trusted.len())];
    for t in &taskset.trusted {
        let mut next = Vec::with_capacity(out.len() * t.period_menu.len());
        for prefix in &out {
            for &p in &t.period_menu {
                let mut v = prefix.clone();
                v.push(p);
                next.push(v);
            }
        }
        out = next;
    }
    out.iter().map(|periods| taskset.spec_with(periods)).collect()
}

/// Number of specifications without materialising them.
pub fn spec_count(taskset: &TaskSet) -> usize {
    taskset.trusted.iter().map(|t| t.period_menu.len()).product()
}

/// Normalised criticality levels `c_i / Σ c_j`.
pub fn criticality_levels(taskset: &TaskSet) -> Vec<Rational> {
    let values = taskset.criticality_values();
    let total = rational::sum(&values);
    values.iter().map(|c| c / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    /// Slot-level synchronous-release simulation: first-job finish time of
    /// `id` under fixed priority.
    fn simulated_first_response(spec: &TaskSpec, id: usize) -> Option<u64> {
        let n = spec.len();
        let mut remaining = vec![0u64; n];
        let mut released_first = vec![false; n];
        let horizon = spec.periods[id - 1];
        for t in 0..horizon {
            for k in 0..n {
                if t % spec.periods[k] == 0 {
                    remaining[k] += spec.wcets[k];
                    released_first[k] = true;
                }
            }
            if let Some(k) = (0..n).find(|&k| remaining[k] > 0) {
                remaining[k] -= 1;
                if k == id - 1 && remaining[k] == 0 {
                    return Some(t + 1);
                }
            }
        }
        None
    }

    #[test]
    fn wcrt_matches_simulation_on_bundled_sets() {
        let tab2 = bundled::tab2();
        assert_eq!(wcrt(&tab2, 3).unwrap(), 4);
        assert_eq!(simulated_first_response(&tab2.min_spec(), 3), Some(4));

        let tab1 = bundled::tab1();
        assert_eq!(wcrt(&tab1, 3).unwrap(), 4);
        assert_eq!(simulated_first_response(&tab1.min_spec(), 3), Some(4));
    }

    #[test]
    fn wcrt_single_task() {
        let spec = TaskSpec::new(&[(5, 1)], 1);
        assert_eq!(spec.wcrt(1).unwrap(), 1);
    }

    #[test]
    fn wcrt_reports_unschedulable() {
        let spec = TaskSpec::new(&[(2, 1), (3, 2)], 2);
        assert!(matches!(spec.wcrt(2), Err(Error::Unschedulable { task: 2, .. })));
    }

    #[test]
    fn hyper_period_examples() {
        assert_eq!(hyper_period_bounded(&[2, 4, 4], 100).unwrap(), 4);
        assert_eq!(hyper_period_bounded(&[3, 4, 4], 100).unwrap(), 12);
        let periods = [10, 15, 25, 20, 10, 30, 20];
        let l = hyper_period_bounded(&periods, 1 << 20).unwrap();
        // brute-force divisibility scan
        let first = (1..).find(|m| periods.iter().all(|p| m % p == 0)).unwrap();
        assert_eq!(l, first);
        assert_eq!(l, 300);
        assert!(matches!(
            hyper_period_bounded(&[7, 11, 13], 500),
            Err(Error::HyperPeriodOverflow { .. })
        ));
    }

    #[test]
    fn spec_enumeration_cardinality() {
        assert_eq!(enumerate_specs(&bundled::tab2()).len(), 2);
        let mut single = bundled::tab2();
        single.trusted[0].period_menu = vec![2];
        assert_eq!(enumerate_specs(&single).len(), 1);
        let tab3 = bundled::tab3_low();
        assert_eq!(enumerate_specs(&tab3).len(), 81);
        assert_eq!(spec_count(&tab3), 81);
    }

    #[test]
    fn criticality_defaults_and_levels() {
        let ts = bundled::tab3_low();
        let levels = criticality_levels(&ts);
        let expected: Vec<Rational> = ["0.4", "0.3", "0.2", "0.1"].iter().map(|s| rational::parse(s).unwrap()).collect();
        assert_eq!(levels, expected);
    }

    #[test]
    fn validation_rejects_bad_menus() {
        let mut ts = bundled::tab2();
        ts.trusted[0].period_menu = vec![1];
        assert!(ts.validate().is_err());
        let mut ts = bundled::tab2();
        ts.trusted[0].aew = 5;
        assert!(ts.validate().is_err());
        let mut ts = bundled::tab2();
        ts.trusted[0].period_menu = vec![2, 2];
        assert!(ts.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let ts = bundled::tab3_high();
        let back = TaskSet::from_json(&ts.to_json().unwrap()).unwrap();
        assert_eq!(ts, back);
        assert_eq!(ts.hash(), back.hash());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn task_sets() -> impl Strategy<Value = Vec<(u64, u64)>> {
            prop::collection::vec((2u64..30, 1u64..4), 1..5)
                .prop_map(|v| v.into_iter().map(|(p, e)| (p.max(e + 1), e)).collect())
        }

        proptest! {
            #[test]
            fn wcrt_monotone_in_higher_priority_wcet(tasks in task_sets(), bump in 0usize..4) {
                let n = tasks.len();
                let spec = TaskSpec::new(&tasks, n);
                let j = bump % n;
                let mut heavier = tasks.clone();
                heavier[j].1 += 1;
                let heavier = TaskSpec::new(&heavier, n);
                for id in (j + 2)..=n {
                    if let (Ok(a), Ok(b)) = (spec.wcrt(id), heavier.wcrt(id)) {
                        prop_assert!(b >= a);
                    }
                    if spec.wcrt(id).is_err() {
                        prop_assert!(heavier.wcrt(id).is_err());
                    }
                }
            }

            #[test]
            fn adding_higher_priority_task_never_helps(tasks in task_sets(), extra in (2u64..30, 1u64..3)) {
                let n = tasks.len();
                let base = TaskSpec::new(&tasks, n);
                let mut more = vec![(extra.0.max(extra.1 + 1), extra.1)];
                more.extend(tasks.iter().copied());
                let more = TaskSpec::new(&more, n + 1);
                for id in 1..=n {
                    match (base.wcrt(id), more.wcrt(id + 1)) {
                        (Ok(a), Ok(b)) => prop_assert!(b >= a),
                        (Err(_), r) => prop_assert!(r.is_err()),
                        _ => {}
                    }
                }
            }

            #[test]
            fn wcrt_equals_simulated_first_response(tasks in task_sets()) {
                let n = tasks.len();
                let spec = TaskSpec::new(&tasks, n);
                for id in 1..=n {
                    match spec.wcrt(id) {
                        Ok(r) => prop_assert_eq!(simulated_first_response(&spec, id), Some(r)),
                        Err(_) => prop_assert_eq!(simulated_first_response(&spec, id), None),
                    }
                }
            }

            #[test]
            fn hyper_period_divisible_by_every_period(periods in prop::collection::vec(1u64..40, 1..6)) {
                let l = hyper_period_bounded(&periods, u64::MAX).unwrap();
                for p in &periods {
                    prop_assert_eq!(l % p, 0);
                }
            }
        }
    }
}
