//! Closed-loop co-simulation of the control tasks, their plants, the
//! detectors, a compromised untrusted task and the schedule policy.
//!
//! Timing of one control job released at `r` and completing in slot `c`:
//! the sensor value is latched at `r`; at the end of slot `c` the estimator
//! consumes it, the controller writes the next input into the actuation
//! buffer and the detector scores the residue; the buffer is applied to the
//! plant at the next release. A compromised task running in a slot of the
//! victim's attack effective window overwrites the buffer. This reproduces
//! the augmented closed loop `X[k+1] = Abb_h X[k]` exactly when nothing is
//! injected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::{self, DetectorState, DiscretizedLoop, PlantConfig, PlantFile};
use crate::linalg::{self, Matrix};
use crate::rational::{self, Rational};
use crate::runtime::{AtkFlag, Deployment, Mode, SelectorState, SplitMix64, World};
use crate::schedgen::{simulate_fixed_priority, Schedule};
use crate::vulnerability::{aew_window, ScheduleStore};
use crate::taskmodel::TaskSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Injection {
    /// Overwrite the buffered input.
    Replace(Vec<f64>),
    /// Add to the buffered input.
    Bias(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    /// Priority index of the compromised untrusted task.
    pub compromised: usize,
    /// Priority index of the targeted control task.
    pub victim: usize,
    /// Defaults to replacing the input with the plant's `attack_value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<Injection>,
    #[serde(default)]
    pub start_epoch: u64,
    /// Hyper-periods the attack lasts; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<u64>,
}

impl AttackScenario {
    pub fn active(&self, epoch: u64) -> bool {
        epoch >= self.start_epoch && self.duration.is_none_or(|d| epoch < self.start_epoch + d)
    }

    pub fn validate(&self, taskset: &TaskSet) -> Result<()> {
        if !taskset.is_untrusted(self.compromised) {
            return Err(Error::config(format!("task {} is not an untrusted task", self.compromised)));
        }
        if !taskset.is_trusted(self.victim) {
            return Err(Error::config(format!("task {} is not a trusted task", self.victim)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// The fixed-priority schedule at the minimum periods, every epoch.
    Static,
    /// A uniformly random stored schedule every epoch, ignoring alarms.
    Shuffle,
    /// The attack-aware selector.
    Maars,
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Policy::Static),
            "shuffle" => Ok(Policy::Shuffle),
            "maars" => Ok(Policy::Maars),
            other => Err(Error::config(format!("unknown policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Static => "static",
            Policy::Shuffle => "shuffle",
            Policy::Maars => "maars",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CosimOptions {
    pub seed: u64,
    pub epochs: u64,
    pub noise: bool,
    /// Any plant state norm above this counts as divergence.
    pub divergence_bound: f64,
    pub record_trace: bool,
    /// Record `[x; x̂]` at every release.
    pub record_samples: bool,
    pub alert_exit: u32,
    /// Samples used to calibrate thresholds not fixed in the plant file.
    pub calibration_samples: usize,
}

impl Default for CosimOptions {
    fn default() -> Self {
        CosimOptions {
            seed: 0,
            epochs: 50,
            noise: true,
            divergence_bound: 100.0,
            record_trace: false,
            record_samples: false,
            alert_exit: crate::runtime::DEFAULT_ALERT_EXIT,
            calibration_samples: 100_000,
        }
    }
}

/// Everything observed about one hyper-period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub start_slot: u64,
    pub length: u64,
    pub schedule_index: Option<usize>,
    pub spec: String,
    pub mode: String,
    /// Attack probability of the victim under the deployed schedule.
    pub victim_ap: Option<String>,
    pub attack_active: bool,
    /// Victim jobs whose buffer was overwritten.
    pub hits: u64,
    pub victim_jobs: u64,
    /// Trusted tasks whose detector alarmed.
    pub alarms: Vec<usize>,
    pub flag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: Policy,
    pub seed: u64,
    pub epochs_run: u64,
    /// Seconds until the victim's plant state norm stays in its band.
    pub settling_time: Option<f64>,
    /// Fitted exponential rate (1/s) of the victim's `‖[x; x̂]‖` from the
    /// peak of the initial transient until it enters the band.
    pub decay_rate: Option<f64>,
    pub alarm_epochs: Vec<u64>,
    pub alert_epochs: Vec<u64>,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub max_deviation: f64,
    pub final_deviation: f64,
    /// Seconds from the attack start until the victim state is back inside
    /// its band after its largest post-attack excursion. Zero if it never
    /// left the band.
    pub reentry_time: Option<f64>,
    pub attack_hits: u64,
    pub attacked_jobs: u64,
    pub epochs: Vec<EpochRecord>,
}

impl RunMetrics {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Fraction of victim jobs, while the attack was active, whose window held
/// an execution of the compromised task.
pub fn attack_success_rate(metrics: &RunMetrics) -> Rational {
    if metrics.attacked_jobs == 0 {
        return Rational::from_integer(0);
    }
    Rational::new(metrics.attack_hits as i64, metrics.attacked_jobs as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub slot: u64,
    pub time: f64,
    pub running: usize,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub alarms: Vec<bool>,
}

/// `[x; x̂]` of one task at one release.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub task: usize,
    pub slot: u64,
    pub period: u64,
    pub augmented: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub names: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,time,running");
        if let Some(first) = self.rows.first() {
            for (i, name) in self.names.iter().enumerate() {
                for k in 0..first.states[i].len() {
                    let _ = write!(out, ",{name}_x{k}");
                }
                for k in 0..first.inputs[i].len() {
                    let _ = write!(out, ",{name}_u{k}");
                }
                let _ = write!(out, ",{name}_g,{name}_alarm");
            }
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{:.6},{}", r.slot, r.time, r.running);
            for i in 0..self.names.len() {
                for v in r.states[i].iter().chain(&r.inputs[i]) {
                    let _ = write!(out, ",{v:.6e}");
                }
                let _ = write!(out, ",{:.6e},{}", r.g[i], u8::from(r.alarms[i]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CosimRun {
    pub metrics: RunMetrics,
    pub deployments: Vec<Deployment>,
    pub trace: Option<Trace>,
}

/// Per control task simulation state.
struct ControlTask {
    name: String,
    aew: u64,
    config: PlantConfig,
    c: Matrix,
    a_slot: Matrix,
    b_slot: Matrix,
    noise_w: Matrix,
    noise_v: Matrix,
    loops: BTreeMap<u64, DiscretizedLoop>,
    period: u64,
    x: DVector<f64>,
    xhat: DVector<f64>,
    /// Input the controller wrote for the coming sample.
    commanded: DVector<f64>,
    /// Actuation buffer (may be tampered).
    buffer: DVector<f64>,
    applied: DVector<f64>,
    /// What the controller believes is being applied.
    believed: DVector<f64>,
    y: DVector<f64>,
    detector: DetectorState,
    last_g: f64,
    last_alarm: bool,
    /// Window of the last completed job, absolute slots.
    window: Option<(u64, u64)>,
    window_hit: bool,
}

fn noise_factor(cov: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(linalg::symmetrize(cov));
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&root)
}

/// Threshold from the plant file, or calibrated deterministically.
fn detector_threshold(cfg: &PlantConfig, outputs: usize, samples: usize, salt: u64) -> Result<f64> {
    if let Some(th) = cfg.detector.threshold {
        return Ok(th);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7468_7265_7368 ^ salt);
    control::calibrate_threshold(outputs, cfg.detector.window, cfg.detector.far_target, samples, &mut rng)
}

impl ControlTask {
    fn new(name: &str, aew: u64, config: &PlantConfig, periods: &[u64], delta: f64, threshold: f64) -> Result<Self> {
        let plant = config.model()?;
        let (a_slot, b_slot) = control::discretize(&plant, delta)?;
        let mut loops = BTreeMap::new();
        for &p in periods {
            loops.insert(p, DiscretizedLoop::design(&plant, p, delta)?);
        }
        let period = *periods.first().ok_or_else(|| Error::config("no period to simulate"))?;
        let sigma = match &config.detector.residue_covariance {
            Some(rows) => linalg::from_rows(rows)?,
            None => loops[&period].innovation_covariance.clone(),
        };
        let p = plant.inputs();
        let m = plant.outputs();
        let xhat = DVector::from_vec(config.x0.clone());
        // The first command is issued from the initial estimate.
        let first = -(&loops[&period].k * &xhat);
        Ok(ControlTask {
            name: name.to_string(),
            aew,
            config: config.clone(),
            c: plant.c.clone(),
            a_slot,
            b_slot,
            noise_w: noise_factor(&plant.process_noise),
            noise_v: noise_factor(&plant.measurement_noise),
            loops,
            period,
            x: DVector::from_vec(config.x0.clone()),
            xhat,
            commanded: first.clone(),
            buffer: first,
            applied: DVector::zeros(p),
            believed: DVector::zeros(p),
            y: DVector::zeros(m),
            detector: DetectorState::new(&sigma, config.detector.window, threshold)?,
            last_g: 0.0,
            last_alarm: false,
            window: None,
            window_hit: false,
        })
    }

    fn lp(&self) -> &DiscretizedLoop {
        &self.loops[&self.period]
    }

    /// Switches to a new sampling period at a hyper-period boundary. An
    /// untampered pending command is reissued with the new gain.
    fn switch_period(&mut self, period: u64) -> Result<()> {
        if period == self.period {
            return Ok(());
        }
        if !self.loops.contains_key(&period) {
            return Err(Error::config(format!("{}: no loop designed for period {period}", self.name)));
        }
        self.period = period;
        if self.config.detector.residue_covariance.is_none() {
            let sigma = self.lp().innovation_covariance.clone();
            self.detector.set_residue_covariance(&sigma)?;
        }
        let untampered = self.buffer == self.commanded;
        self.commanded = -(&self.lp().k * &self.xhat);
        if untampered {
            self.buffer = self.commanded.clone();
        }
        Ok(())
    }

    fn release<R: Rng>(&mut self, rng: &mut R, noise: bool) {
        if noise {
            let w = DVector::from_fn(self.x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            self.x += &self.noise_w * w;
        }
        self.applied = self.buffer.clone();
        self.believed = self.commanded.clone();
        self.y = &self.c * &self.x;
        if noise {
            let v = DVector::from_fn(self.y.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            self.y += &self.noise_v * v;
        }
    }

    fn complete(&mut self) -> bool {
        let lp = &self.loops[&self.period];
        let res = &self.y - &self.c * &self.xhat;
        self.xhat = &lp.a * &self.xhat + &lp.b * &self.believed + &lp.l * &res;
        self.commanded = -(&lp.k * &self.xhat);
        self.buffer = self.commanded.clone();
        let out = self.detector.step(&res);
        self.last_g = out.g;
        self.last_alarm = out.alarm;
        out.alarm
    }

    fn advance_slot(&mut self) {
        self.x = &self.a_slot * &self.x + &self.b_slot * &self.applied;
    }

    fn augmented(&self) -> Vec<f64> {
        self.x.iter().chain(self.xhat.iter()).copied().collect()
    }

    fn deviation(&self) -> f64 {
        self.x.norm()
    }
}

/// Simulation world: plants and tasks, advanced one hyper-period at a time.
pub struct Cosim<'a> {
    taskset: &'a TaskSet,
    tasks: Vec<ControlTask>,
    scenario: Option<AttackScenario>,
    injection: Option<Injection>,
    opts: CosimOptions,
    rng: ChaCha8Rng,
    criticality: Vec<Rational>,
    slot: u64,
    diverged: bool,
    divergence_slot: Option<u64>,
    epochs: Vec<EpochRecord>,
    victim_norms: Vec<(u64, f64)>,
    augmented_norms: Vec<(u64, f64)>,
    trace: Option<Trace>,
    store: Option<&'a ScheduleStore>,
    pending_mode: Mode,
}

impl<'a> Cosim<'a> {
    /// `periods[i]` lists the periods trusted task `i + 1` may run at; the
    /// first entry is the initial one.
    pub fn new(
        taskset: &'a TaskSet,
        plants: &PlantFile,
        periods: &[Vec<u64>],
        scenario: Option<&AttackScenario>,
        opts: &CosimOptions,
    ) -> Result<Self> {
        let mut tasks = Vec::new();
        for (i, t) in taskset.trusted.iter().enumerate() {
            let name = t
                .plant
                .as_deref()
                .ok_or_else(|| Error::config(format!("trusted task {} has no plant", t.name)))?;
            let cfg = plants.get(name)?;
            let outputs = cfg.c.len();
            let th = detector_threshold(cfg, outputs, opts.calibration_samples, i as u64)?;
            tasks.push(ControlTask::new(&t.name, t.aew, cfg, &periods[i], taskset.delta, th)?);
        }
        let injection = match scenario {
            Some(sc) => {
                sc.validate(taskset)?;
                let task = &tasks[sc.victim - 1];
                let inj = match &sc.injection {
                    Some(i) => i.clone(),
                    None => Injection::Replace(
                        task.config
                            .attack_value
                            .clone()
                            .ok_or_else(|| Error::config(format!("plant of {} has no attack_value", task.name)))?,
                    ),
                };
                let (Injection::Replace(v) | Injection::Bias(v)) = &inj;
                if v.len() != task.buffer.len() {
                    return Err(Error::config("injection length does not match the input dimension"));
                }
                Some(inj)
            }
            None => None,
        };
        let trace = (opts.record_trace || opts.record_samples).then(|| Trace {
            names: tasks.iter().map(|t| t.name.clone()).collect(),
            ..Trace::default()
        });
        Ok(Cosim {
            taskset,
            tasks,
            scenario: scenario.cloned(),
            injection,
            opts: opts.clone(),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            criticality: taskset.criticality_values(),
            slot: 0,
            diverged: false,
            divergence_slot: None,
            epochs: Vec::new(),
            victim_norms: Vec::new(),
            augmented_norms: Vec::new(),
            trace,
            store: None,
            pending_mode: Mode::Normal,
        })
    }

    fn victim(&self) -> usize {
        self.scenario.as_ref().map_or(1, |s| s.victim)
    }

    /// Runs one hyper-period of `schedule` and returns the detector flag.
    pub fn run_schedule(&mut self, epoch: u64, schedule: &Schedule, index: Option<usize>) -> Result<AtkFlag> {
        let q = self.tasks.len();
        for (i, task) in self.tasks.iter_mut().enumerate() {
            task.switch_period(schedule.spec.period(i + 1))?;
        }
        let attack = self.scenario.clone().filter(|s| s.active(epoch));
        let victim = self.victim();
        let mut alarmed = vec![false; q];
        let mut hits = 0;
        let start_slot = self.slot;
        let delta = self.taskset.delta;
        let completions: Vec<Vec<usize>> = (1..=q).map(|id| schedule.completion_slots(id)).collect();
        for (t, &running) in schedule.slots.iter().enumerate() {
            let now = self.slot;
            for (i, task) in self.tasks.iter_mut().enumerate() {
                let p = task.period;
                if (t as u64).is_multiple_of(p) {
                    task.release(&mut self.rng, self.opts.noise);
                    task.window = None;
                    task.window_hit = false;
                    if let Some(tr) = self.trace.as_mut().filter(|_| self.opts.record_samples) {
                        tr.samples.push(Sample {
                            task: i + 1,
                            slot: now,
                            period: p,
                            augmented: task.augmented(),
                        });
                    }
                }
            }
            if (1..=q).contains(&running) {
                let i = running - 1;
                let job = t / self.tasks[i].period as usize;
                if completions[i][job] == t {
                    let task = &mut self.tasks[i];
                    if task.complete() {
                        alarmed[i] = true;
                    }
                    task.window = aew_window(t, job, task.period, task.aew)
                        .map(|(a, b)| (start_slot + a as u64, start_slot + b as u64));
                }
            }
            if let (Some(sc), Some(inj)) = (&attack, &self.injection) {
                if running == sc.compromised {
                    let task = &mut self.tasks[sc.victim - 1];
                    if task.window.is_some_and(|(a, b)| now >= a && now <= b) {
                        match inj {
                            Injection::Replace(v) => task.buffer = DVector::from_vec(v.clone()),
                            Injection::Bias(v) => task.buffer = &task.commanded + DVector::from_vec(v.clone()),
                        }
                        if !task.window_hit {
                            task.window_hit = true;
                            hits += 1;
                        }
                    }
                }
            }
            for task in &mut self.tasks {
                task.advance_slot();
            }
            self.slot += 1;
            let v = &self.tasks[victim - 1];
            self.victim_norms.push((self.slot, v.deviation()));
            self.augmented_norms.push((self.slot, v.augmented().iter().map(|x| x * x).sum::<f64>().sqrt()));
            if let Some(tr) = self.trace.as_mut().filter(|_| self.opts.record_trace) {
                tr.rows.push(TraceRow {
                    slot: now,
                    time: now as f64 * delta,
                    running,
                    states: self.tasks.iter().map(|t| t.x.iter().copied().collect()).collect(),
                    inputs: self.tasks.iter().map(|t| t.applied.iter().copied().collect()).collect(),
                    g: self.tasks.iter().map(|t| t.last_g).collect(),
                    alarms: self.tasks.iter().map(|t| t.last_alarm).collect(),
                });
            }
            let worst = self.tasks.iter().map(ControlTask::deviation).fold(0.0, f64::max);
            if !worst.is_finite() || worst > self.opts.divergence_bound {
                self.diverged = true;
                self.divergence_slot = Some(self.slot);
                break;
            }
        }
        let alarms: Vec<usize> = (1..=q).filter(|&id| alarmed[id - 1]).collect();
        let flag = AtkFlag::from_alarms(&alarms, &self.criticality);
        self.epochs.push(EpochRecord {
            epoch,
            start_slot,
            length: schedule.hyper_period(),
            schedule_index: index,
            spec: schedule.spec.label(),
            mode: self.pending_mode.to_string(),
            victim_ap: index.and_then(|k| self.store.map(|s| rational::format(&s.ap(k, victim)))),
            attack_active: attack.is_some(),
            hits,
            victim_jobs: if attack.is_some() {
                schedule.hyper_period() / schedule.spec.period(victim)
            } else {
                0
            },
            alarms,
            flag: flag.0,
        });
        Ok(flag)
    }

    fn metrics(&self, policy: Policy) -> RunMetrics {
        let delta = self.taskset.delta;
        let band = self.tasks[self.victim() - 1].config.settling_band;
        let settling_time = match self.victim_norms.iter().rposition(|(_, n)| *n > band) {
            None => Some(0.0),
            Some(i) if i + 1 < self.victim_norms.len() && !self.diverged => Some(self.victim_norms[i].0 as f64 * delta),
            _ => None,
        };
        // Fit ln‖X‖ from the peak of the initial transient until the first
        // entry into the band or the start of the attack.
        let attack_slot = self
            .scenario
            .as_ref()
            .and_then(|s| self.epochs.iter().find(|e| e.epoch >= s.start_epoch))
            .map_or(u64::MAX, |e| e.start_slot);
        let pre: Vec<(u64, f64, f64)> = self
            .augmented_norms
            .iter()
            .zip(&self.victim_norms)
            .take_while(|((s, _), _)| *s <= attack_slot)
            .map(|((s, n), (_, dev))| (*s, *n, *dev))
            .collect();
        let peak = pre
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map_or(0, |(i, _)| i);
        let transient: Vec<(f64, f64)> = pre[peak..]
            .iter()
            .take_while(|(_, _, dev)| *dev > band)
            .filter(|(_, n, _)| *n > 0.0)
            .map(|(s, n, _)| (*s as f64 * delta, n.ln()))
            .collect();
        let decay_rate = fit_slope(&transient);
        // Recovery from the worst excursion after the attack starts.
        let reentry_time = self.scenario.as_ref().and_then(|_| {
            let after: Vec<&(u64, f64)> = self.victim_norms.iter().filter(|(s, _)| *s > attack_slot).collect();
            let peak = after.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?.0;
            if after[peak].1 <= band {
                return Some(0.0);
            }
            after[peak..]
                .iter()
                .find(|(_, n)| *n <= band)
                .map(|(s, _)| (*s - attack_slot) as f64 * delta)
        });
        RunMetrics {
            policy,
            seed: self.opts.seed,
            epochs_run: self.epochs.len() as u64,
            settling_time,
            decay_rate,
            alarm_epochs: self.epochs.iter().filter(|e| e.flag != 0).map(|e| e.epoch).collect(),
            alert_epochs: self.epochs.iter().filter(|e| e.mode.starts_with("alert")).map(|e| e.epoch).collect(),
            diverged: self.diverged,
            divergence_time: self.divergence_slot.map(|s| s as f64 * delta),
            max_deviation: self.victim_norms.iter().map(|(_, n)| *n).fold(0.0, f64::max),
            final_deviation: self.victim_norms.last().map_or(0.0, |(_, n)| *n),
            reentry_time,
            attack_hits: self.epochs.iter().map(|e| e.hits).sum(),
            attacked_jobs: self.epochs.iter().map(|e| e.victim_jobs).sum(),
            epochs: self.epochs.clone(),
        }
    }
}

struct StoreWorld<'s, 'a> {
    sim: &'s mut Cosim<'a>,
    store: &'a ScheduleStore,
}

impl World for StoreWorld<'_, '_> {
    fn run_hyper_period(&mut self, epoch: u64, schedule_index: usize) -> Result<AtkFlag> {
        let schedule = &self.store.entries[schedule_index].schedule;
        self.sim.run_schedule(epoch, schedule, Some(schedule_index))
    }

    fn halted(&self) -> bool {
        self.sim.diverged
    }
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Periods each trusted task needs loops for under `policy`.
fn needed_periods(taskset: &TaskSet, store: Option<&ScheduleStore>, first: &Schedule) -> Vec<Vec<u64>> {
    (1..=taskset.trusted_count())
        .map(|id| {
            let mut v = vec![first.spec.period(id)];
            if let Some(s) = store {
                for e in &s.entries {
                    let p = e.schedule.spec.period(id);
                    if !v.contains(&p) {
                        v.push(p);
                    }
                }
            }
            v
        })
        .collect()
}

/// Runs `opts.epochs` hyper-periods under `policy`.
pub fn run_scenario(
    taskset: &TaskSet,
    store: Option<&ScheduleStore>,
    plants: &PlantFile,
    scenario: Option<&AttackScenario>,
    policy: Policy,
    opts: &CosimOptions,
) -> Result<CosimRun> {
    match policy {
        Policy::Static => {
            let schedule = simulate_fixed_priority(&taskset.min_spec())?;
            let periods = needed_periods(taskset, None, &schedule);
            let mut sim = Cosim::new(taskset, plants, &periods, scenario, opts)?;
            for epoch in 0..opts.epochs {
                sim.run_schedule(epoch, &schedule, None)?;
                if sim.diverged {
                    break;
                }
            }
            Ok(CosimRun {
                metrics: sim.metrics(policy),
                deployments: Vec::new(),
                trace: sim.trace.take(),
            })
        }
        Policy::Shuffle => {
            let store = store.ok_or_else(|| Error::config("the shuffle policy needs a schedule store"))?;
            let mut rng = SplitMix64::new(opts.seed ^ 0x5348_5546);
            let mut index = rng.below(store.len());
            let periods = needed_periods(taskset, Some(store), &store.entries[index].schedule);
            let mut sim = Cosim::new(taskset, plants, &periods, scenario, opts)?;
            sim.store = Some(store);
            for epoch in 0..opts.epochs {
                sim.run_schedule(epoch, &store.entries[index].schedule, Some(index))?;
                if sim.diverged {
                    break;
                }
                index = rng.below(store.len());
            }
            Ok(CosimRun {
                metrics: sim.metrics(policy),
                deployments: Vec::new(),
                trace: sim.trace.take(),
            })
        }
        Policy::Maars => {
            let store = store.ok_or_else(|| Error::config("the maars policy needs a schedule store"))?;
            let mut selector = SelectorState::new(store, opts.seed ^ 0x4d41_4152)?;
            selector.alert_exit = opts.alert_exit;
            let periods = needed_periods(taskset, Some(store), &store.entries[selector.current].schedule);
            let mut sim = Cosim::new(taskset, plants, &periods, scenario, opts)?;
            sim.store = Some(store);
            for epoch in 0..opts.epochs {
                sim.pending_mode = selector.mode;
                let flag = StoreWorld { sim: &mut sim, store }.run_hyper_period(epoch, selector.current)?;
                if sim.diverged {
                    break;
                }
                match selector.sched_sel(flag) {
                    Ok(_) | Err(Error::EmptyCandidateSet(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(CosimRun {
                metrics: sim.metrics(policy),
                deployments: selector.log.clone(),
                trace: sim.trace.take(),
            })
        }
    }
}

/// Deviation of a noise-free, attack-free trajectory: largest ratio
/// `V(X[k+1]) / V(X[k])` between consecutive releases of `task`, using
/// `p` as the Lyapunov matrix.
pub fn max_lyapunov_ratio(samples: &[Sample], task: usize, p: &Matrix) -> f64 {
    // Both states are scaled by the first one's norm so that V stays out of
    // the subnormal range once a noise-free loop has decayed far.
    let v = |x: &[f64], scale: f64| {
        let x = DVector::from_column_slice(x) / scale;
        (x.transpose() * p * &x)[(0, 0)]
    };
    samples
        .iter()
        .filter(|s| s.task == task)
        .collect::<Vec<_>>()
        .windows(2)
        .filter_map(|w| {
            let scale = DVector::from_column_slice(&w[0].augmented).norm();
            (scale > 0.0).then(|| v(&w[1].augmented, scale) / v(&w[0].augmented, scale))
        })
        .fold(0.0, f64::max)
}

/// `[x; x̂]` after one release-to-release step of a designed loop, for
/// cross-checking the simulator against `Abb_h`.
pub fn augmented_step(lp: &DiscretizedLoop, x: &[f64]) -> Vec<f64> {
    let v = &lp.augmented * DMatrix::from_column_slice(x.len(), 1, x);
    v.iter().copied().collect()
}
