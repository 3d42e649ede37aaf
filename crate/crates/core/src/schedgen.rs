//! Slot-level schedules over one hyper-period: the deterministic
//! fixed-priority schedule, randomized schedules, an exhaustive enumerator
//! for small task sets, and pools over several task specifications.
//!
//! Randomization picks, at every slot, uniformly among the ready jobs whose
//! selection leaves the remaining work EDF-feasible. The check runs EDF
//! forward only until the first instant with no pending work: from such an
//! instant the rest of an implicit-deadline periodic set with `U <= 1` is
//! always feasible. Idling happens only when nothing is ready.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::taskmodel::{TaskSet, TaskSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FixedPriority,
    Randomized,
    Exhaustive,
}

/// One hyper-period of slots. `slots[t]` is the priority index of the task
/// running in slot `t` (0 when idle) and `job_index[t]` the 0-based job
/// number of that task within the hyper-period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRecord", into = "ScheduleRecord")]
pub struct Schedule {
    pub spec: TaskSpec,
    pub slots: Vec<usize>,
    pub job_index: Vec<u32>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

/// On-disk form; job indices are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleRecord {
    spec: TaskSpec,
    slots: Vec<usize>,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl TryFrom<ScheduleRecord> for Schedule {
    type Error = Error;

    fn try_from(r: ScheduleRecord) -> Result<Self> {
        Schedule::from_slots(r.spec, r.slots, r.provenance, r.seed)
    }
}

impl From<Schedule> for ScheduleRecord {
    fn from(s: Schedule) -> Self {
        ScheduleRecord {
            spec: s.spec,
            slots: s.slots,
            provenance: s.provenance,
            seed: s.seed,
        }
    }
}

impl Schedule {
    /// Rebuilds a schedule from its slot array and checks it.
    pub fn from_slots(spec: TaskSpec, slots: Vec<usize>, provenance: Provenance, seed: Option<u64>) -> Result<Self> {
        let job_index = slots
            .iter()
            .enumerate()
            .map(|(t, &task)| match task {
                0 => Ok(0),
                id if id <= spec.len() => Ok((t as u64 / spec.period(id)) as u32),
                id => Err(Error::config(format!("slot {t} names unknown task {id}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let s = Schedule {
            spec,
            slots,
            job_index,
            provenance,
            seed,
        };
        let violations = check_validity(&s);
        if let Some(v) = violations.first() {
            return Err(Error::config(format!("invalid schedule: {v}")));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn hyper_period(&self) -> u64 {
        self.slots.len() as u64
    }

    /// Last slot of each job of `task`, in job order.
    pub fn completion_slots(&self, task: usize) -> Vec<usize> {
        let p = self.spec.period(task) as usize;
        let jobs = self.slots.len() / p;
        let mut out = vec![usize::MAX; jobs];
        for (t, &s) in self.slots.iter().enumerate() {
            if s == task {
                out[t / p] = t;
            }
        }
        out
    }

    /// Stable content key: spec and slots, hex of the first 8 bytes of a
    /// SHA-256 digest.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        for (p, e) in self.spec.periods.iter().zip(&self.spec.wcets) {
            h.update(p.to_le_bytes());
            h.update(e.to_le_bytes());
        }
        h.update((self.spec.trusted as u64).to_le_bytes());
        for s in &self.slots {
            h.update((*s as u32).to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Compact slot string like `1213`; tasks above 9 are bracketed.
    pub fn render(&self) -> String {
        self.slots
            .iter()
            .map(|&s| match s {
                0 => "-".to_string(),
                s if s < 10 => s.to_string(),
                s => format!("[{s}]"),
            })
            .collect()
    }

    /// The slot array repeated to cover `slots` slots.
    pub fn timeline(&self, slots: usize) -> Vec<usize> {
        self.slots.iter().copied().cycle().take(slots).collect()
    }
}

/// Everything wrong with a schedule: wrong per-job slot counts, execution
/// outside the job window, unknown tasks, idling while work is pending.
pub fn check_validity(s: &Schedule) -> Vec<String> {
    let spec = &s.spec;
    let mut problems = Vec::new();
    let l = match spec.hyper_period() {
        Ok(l) => l as usize,
        Err(e) => return vec![e.to_string()],
    };
    if s.slots.len() != l {
        problems.push(format!("length {} differs from the hyper-period {l}", s.slots.len()));
        return problems;
    }
    let n = spec.len();
    let mut counts: Vec<Vec<u64>> = (1..=n).map(|id| vec![0; l / spec.period(id) as usize]).collect();
    for (t, &task) in s.slots.iter().enumerate() {
        if task == 0 {
            continue;
        }
        if task > n {
            problems.push(format!("slot {t} runs unknown task {task}"));
            continue;
        }
        let job = t / spec.period(task) as usize;
        if s.job_index.get(t).copied() != Some(job as u32) {
            problems.push(format!("slot {t} has job index {:?}, expected {job}", s.job_index.get(t)));
        }
        counts[task - 1][job] += 1;
    }
    for id in 1..=n {
        for (job, &c) in counts[id - 1].iter().enumerate() {
            if c != spec.wcet(id) {
                problems.push(format!("task {id} job {job} received {c} slots instead of {}", spec.wcet(id)));
            }
        }
    }
    // Work conservation: replay the remaining work slot by slot.
    let mut rem = vec![0u64; n];
    for (t, &task) in s.slots.iter().enumerate() {
        for id in 1..=n {
            if (t as u64).is_multiple_of(spec.period(id)) {
                rem[id - 1] = spec.wcet(id);
            }
        }
        if task == 0 {
            if let Some(i) = rem.iter().position(|&r| r > 0) {
                problems.push(format!("slot {t} idles while task {} is ready", i + 1));
            }
        } else if task <= n {
            rem[task - 1] = rem[task - 1].saturating_sub(1);
        }
    }
    problems
}

fn release(spec: &TaskSpec, t: u64, rem: &mut [u64]) -> Result<()> {
    for (i, r) in rem.iter_mut().enumerate() {
        let p = spec.periods[i];
        if t.is_multiple_of(p) {
            if *r > 0 {
                return Err(Error::DeadlineMiss {
                    task: i + 1,
                    job: (t / p) as usize - 1,
                });
            }
            *r = spec.wcets[i];
        }
    }
    Ok(())
}

/// Highest-priority-ready schedule with synchronous release at slot 0.
pub fn simulate_fixed_priority(spec: &TaskSpec) -> Result<Schedule> {
    let l = spec.hyper_period()?;
    let mut rem = vec![0u64; spec.len()];
    let mut slots = Vec::with_capacity(l as usize);
    for t in 0..l {
        release(spec, t, &mut rem)?;
        match rem.iter().position(|&r| r > 0) {
            Some(i) => {
                rem[i] -= 1;
                slots.push(i + 1);
            }
            None => slots.push(0),
        }
    }
    release(spec, l, &mut rem)?;
    Schedule::from_slots(spec.clone(), slots, Provenance::FixedPriority, None)
}

/// Whether EDF can finish `rem` (pending work at the start of slot `t`,
/// releases at `t` not yet applied) and every later job by its deadline.
fn edf_completes(spec: &TaskSpec, l: u64, mut rem: Vec<u64>, mut t: u64) -> bool {
    loop {
        if rem.iter().all(|&r| r == 0) {
            return true;
        }
        if t >= l {
            return false;
        }
        if release(spec, t, &mut rem).is_err() {
            return false;
        }
        let pick = (0..rem.len())
            .filter(|&i| rem[i] > 0)
            .min_by_key(|&i| ((t / spec.periods[i]) + 1) * spec.periods[i]);
        if let Some(i) = pick {
            rem[i] -= 1;
        }
        t += 1;
    }
}

fn utilization_fits(spec: &TaskSpec, l: u64) -> bool {
    let demand: u64 = spec.periods.iter().zip(&spec.wcets).map(|(&p, &e)| e * (l / p)).sum();
    demand <= l
}

/// Ready jobs at slot `t` (after releases) whose selection keeps the rest
/// feasible.
fn safe_choices(spec: &TaskSpec, l: u64, rem: &[u64], t: u64) -> Vec<usize> {
    (0..rem.len())
        .filter(|&i| rem[i] > 0)
        .filter(|&i| {
            let mut next = rem.to_vec();
            next[i] -= 1;
            edf_completes(spec, l, next, t + 1)
        })
        .collect()
}

fn check_feasible(spec: &TaskSpec) -> Result<u64> {
    let l = spec.hyper_period()?;
    if !utilization_fits(spec, l) || !edf_completes(spec, l, vec![0; spec.len()], 0) {
        // Report the first fixed-priority miss if there is one.
        simulate_fixed_priority(spec)?;
        return Err(Error::Unschedulable {
            task: spec.len(),
            deadline: spec.periods.last().copied().unwrap_or(0),
        });
    }
    Ok(l)
}

/// One randomized, always-valid, work-conserving schedule.
pub fn shuffle_schedule(spec: &TaskSpec, seed: u64) -> Result<Schedule> {
    let l = check_feasible(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rem = vec![0u64; spec.len()];
    let mut slots = Vec::with_capacity(l as usize);
    for t in 0..l {
        release(spec, t, &mut rem)?;
        let choices = safe_choices(spec, l, &rem, t);
        let slot = match choices.len() {
            0 => {
                if rem.iter().any(|&r| r > 0) {
                    return Err(Error::Numeric(format!("no feasible choice at slot {t}")));
                }
                0
            }
            1 => choices[0] + 1,
            k => choices[rng.random_range(0..k)] + 1,
        };
        if slot > 0 {
            rem[slot - 1] -= 1;
        }
        slots.push(slot);
    }
    Schedule::from_slots(spec.clone(), slots, Provenance::Randomized, Some(seed))
}

/// Every valid work-conserving schedule of `spec`, in lexicographic order of
/// slot arrays. Fails with `BudgetExceeded` once more than `budget`
/// schedules exist.
pub fn enumerate_all(spec: &TaskSpec, budget: usize) -> Result<Vec<Schedule>> {
    let l = check_feasible(spec)?;
    let mut out = Vec::new();
    let mut slots = Vec::with_capacity(l as usize);
    dfs(spec, l, 0, vec![0; spec.len()], &mut slots, &mut out, budget)?;
    out.into_iter()
        .map(|slots| Schedule::from_slots(spec.clone(), slots, Provenance::Exhaustive, None))
        .collect()
}

fn dfs(
    spec: &TaskSpec,
    l: u64,
    t: u64,
    mut rem: Vec<u64>,
    slots: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    budget: usize,
) -> Result<()> {
    if t == l {
        if out.len() >= budget {
            return Err(Error::BudgetExceeded { partial: out.len() });
        }
        out.push(slots.clone());
        return Ok(());
    }
    release(spec, t, &mut rem)?;
    let choices = safe_choices(spec, l, &rem, t);
    if choices.is_empty() {
        slots.push(0);
        dfs(spec, l, t + 1, rem, slots, out, budget)?;
        slots.pop();
        return Ok(());
    }
    for i in choices {
        let mut next = rem.clone();
        next[i] -= 1;
        slots.push(i + 1);
        dfs(spec, l, t + 1, next, slots, out, budget)?;
        slots.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolOptions {
    /// Randomized schedules drawn per specification.
    pub seeds_per_spec: usize,
    /// When set, this many seeds are dealt round-robin over the
    /// specifications instead of `seeds_per_spec` each.
    pub total_seeds: Option<usize>,
    /// Enumerate a specification exhaustively when it has at most this many
    /// schedules.
    pub exhaustive_budget: Option<usize>,
    pub base_seed: u64,
}


/// Union over `specs` of exhaustive or randomized schedules, deduplicated
/// per (spec, slots) and sorted by spec then slots.
///
/// Seed `k` (counting across the whole pool) is `base_seed + k`.
pub fn generate_pool(specs: &[TaskSpec], opts: &PoolOptions) -> Result<Vec<Schedule>> {
    let mut pool: Vec<Schedule> = Vec::new();
    let mut seeds_for: Vec<Vec<u64>> = vec![Vec::new(); specs.len()];
    match opts.total_seeds {
        Some(total) if !specs.is_empty() => {
            for k in 0..total {
                seeds_for[k % specs.len()].push(opts.base_seed + k as u64);
            }
        }
        _ => {
            let mut k = 0u64;
            for seeds in &mut seeds_for {
                for _ in 0..opts.seeds_per_spec {
                    seeds.push(opts.base_seed + k);
                    k += 1;
                }
            }
        }
    }
    for (spec, seeds) in specs.iter().zip(seeds_for) {
        let mut set: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut members = Vec::new();
        let exhaustive = match opts.exhaustive_budget {
            Some(b) => match enumerate_all(spec, b) {
                Ok(all) => Some(all),
                Err(Error::BudgetExceeded { .. }) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        if let Some(all) = exhaustive {
            members = all;
        } else if seeds.is_empty() {
            members.push(simulate_fixed_priority(spec)?);
        } else {
            for seed in seeds {
                let s = shuffle_schedule(spec, seed)?;
                if set.insert(s.slots.clone()) {
                    members.push(s);
                }
            }
        }
        members.sort_by(|a, b| a.slots.cmp(&b.slots));
        pool.extend(members);
    }
    pool.sort_by(|a, b| a.spec.cmp(&b.spec).then_with(|| a.slots.cmp(&b.slots)));
    Ok(pool)
}

/// Pool file: provenance header plus schedule records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolFile {
    pub schema_version: u32,
    pub tool_version: String,
    pub taskset_hash: String,
    pub schedules: Vec<Schedule>,
}

impl PoolFile {
    pub fn new(taskset: &TaskSet, schedules: Vec<Schedule>) -> Self {
        PoolFile {
            schema_version: 1,
            tool_version: crate::TOOL_VERSION.to_string(),
            taskset_hash: taskset.hash(),
            schedules,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PoolFile = serde_json::from_str(text).map_err(|e| Error::config(format!("pool file: {e}")))?;
        if f.schema_version != 1 {
            return Err(Error::config(format!("unsupported pool schema version {}", f.schema_version)));
        }
        Ok(f)
    }
}
