//! Design-time pipeline: prune every period menu, enumerate the admissible
//! specifications, generate a schedule pool and rank it into a store.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attacker::{build_ladder, inferability_ratio};
use crate::control::PlantFile;
use crate::rational::{self, Rational};
use crate::schedgen::{generate_pool, PoolOptions, Schedule};
use crate::secureperiods::{prune_security, SecurityPruning};
use crate::stability::{prune_performance, PerformancePruning};
use crate::taskmodel::{enumerate_specs, TaskSet, TaskSpec};
use crate::vulnerability::{build_store, summarize, MemoryCost, PoolSummary, ScheduleStore};
use crate::{Error, Result, TOOL_VERSION};

/// How one trusted task's menu was narrowed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MenuProvenance {
    pub task_id: usize,
    pub name: String,
    pub original: Vec<u64>,
    /// Absent when the task has no plant attached.
    pub performance: Option<PerformancePruning>,
    pub security: Option<SecurityPruning>,
    pub retained: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodsReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub taskset_hash: String,
    pub menus: Vec<MenuProvenance>,
}

impl PeriodsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn menus(&self) -> Vec<Vec<u64>> {
        self.menus.iter().map(|m| m.retained.clone()).collect()
    }
}

/// Performance pruning (when a plant is attached) followed by security
/// pruning. Returns the task set with the pruned menus.
pub fn prune_menus(taskset: &TaskSet, plants: Option<&PlantFile>, security: bool) -> Result<(TaskSet, PeriodsReport)> {
    let untrusted: Vec<_> = taskset.untrusted_ids().zip(&taskset.untrusted).collect();
    let mut menus = Vec::new();
    for (i, task) in taskset.trusted.iter().enumerate() {
        let id = i + 1;
        let performance = match (plants, &task.plant) {
            (Some(file), Some(name)) => {
                let cfg = file.get(name)?;
                Some(prune_performance(&cfg.model()?, &task.period_menu, taskset.delta, cfg.gues_rate)?)
            }
            _ => None,
        };
        let after_perf = performance.as_ref().map_or_else(|| task.period_menu.clone(), |p| p.retained.clone());
        let sec = security
            .then(|| prune_security(id, task, &after_perf, &untrusted, taskset.security_policy))
            .transpose()?;
        let mut retained = sec.as_ref().map_or(after_perf, |s| s.retained.clone());
        retained.sort_unstable();
        menus.push(MenuProvenance {
            task_id: id,
            name: task.name.clone(),
            original: task.period_menu.clone(),
            performance,
            security: sec,
            retained,
        });
    }
    let report = PeriodsReport {
        schema_version: 1,
        tool_version: TOOL_VERSION.to_string(),
        taskset_hash: taskset.hash(),
        menus,
    };
    Ok((taskset.with_menus(&report.menus()), report))
}

/// Label and reason of each rejected specification.
pub type Rejected = Vec<(String, String)>;

/// Specifications of `taskset` that pass response-time analysis.
pub fn schedulable_specs(taskset: &TaskSet) -> Result<(Vec<TaskSpec>, Rejected)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for spec in enumerate_specs(taskset) {
        match spec.check_schedulable().and_then(|_| spec.hyper_period()) {
            Ok(_) => kept.push(spec),
            Err(e) if e.is_infeasible() || matches!(e, Error::HyperPeriodOverflow { .. }) => {
                dropped.push((spec.label(), e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        let min = taskset.min_spec();
        min.check_schedulable()?;
        min.hyper_period()?;
        return Err(Error::config("no schedulable specification"));
    }
    Ok((kept, dropped))
}

/// One IR measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrRow {
    pub schedule_key: String,
    pub spec: String,
    pub victim: usize,
    pub attacker: usize,
    pub aai: usize,
    pub aei: usize,
    #[serde(with = "rational::serde_rational")]
    pub ir: Rational,
}

pub fn ir_rows(store: &ScheduleStore, taskset: &TaskSet) -> Result<Vec<IrRow>> {
    let mut rows = Vec::new();
    for e in &store.entries {
        for victim in 1..=taskset.trusted_count() {
            for attacker in taskset.untrusted_ids() {
                let lv = build_ladder(&e.schedule, taskset, victim, attacker, None)?;
                rows.push(IrRow {
                    schedule_key: e.report.schedule_key.clone(),
                    spec: e.report.spec_label.clone(),
                    victim,
                    attacker,
                    aai: lv.aai.len(),
                    aei: lv.aei.len(),
                    ir: inferability_ratio(&lv),
                });
            }
        }
    }
    Ok(rows)
}

pub fn ir_csv(rows: &[IrRow]) -> String {
    let mut out = String::from("schedule,spec,victim,attacker,aai,aei,ir\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.schedule_key,
            r.spec,
            r.victim,
            r.attacker,
            r.aai,
            r.aei,
            rational::format(&r.ir)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub pool: PoolOptions,
    /// Skip both pruning steps and use only the minimum periods.
    pub baseline: bool,
    pub compute_ir: bool,
    /// Bytes per stored element in the memory model.
    pub element_bytes: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            pool: PoolOptions::default(),
            baseline: false,
            compute_ir: true,
            element_bytes: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub taskset: TaskSet,
    pub periods: PeriodsReport,
    pub specs: Vec<TaskSpec>,
    pub dropped_specs: Rejected,
    pub pool: Vec<Schedule>,
    pub store: ScheduleStore,
    pub ir: Vec<IrRow>,
    pub summary: PoolSummary,
    /// Per trusted task, schedules in which it can be attacked.
    pub vulnerable: Vec<usize>,
    pub memory: MemoryCost,
}

/// Runs the full pipeline. With `opts.baseline` the menus collapse to the
/// minimum periods and no pruning is applied.
pub fn analyze(taskset: &TaskSet, plants: Option<&PlantFile>, opts: &AnalysisOptions) -> Result<Analysis> {
    taskset.validate()?;
    let (pruned, periods) = if opts.baseline {
        let menus: Vec<Vec<u64>> = taskset.trusted.iter().map(|t| vec![t.min_period()]).collect();
        let report = PeriodsReport {
            schema_version: 1,
            tool_version: TOOL_VERSION.to_string(),
            taskset_hash: taskset.hash(),
            menus: taskset
                .trusted
                .iter()
                .enumerate()
                .map(|(i, t)| MenuProvenance {
                    task_id: i + 1,
                    name: t.name.clone(),
                    original: t.period_menu.clone(),
                    performance: None,
                    security: None,
                    retained: menus[i].clone(),
                })
                .collect(),
        };
        (taskset.with_menus(&menus), report)
    } else {
        prune_menus(taskset, plants, true)?
    };
    let (specs, dropped_specs) = schedulable_specs(&pruned)?;
    let pool = generate_pool(&specs, &opts.pool)?;
    let store = build_store(pool.clone(), &pruned)?;
    let ir = if opts.compute_ir { ir_rows(&store, &pruned)? } else { Vec::new() };
    let reports: Vec<_> = store.entries.iter().map(|e| &e.report).collect();
    let summary = summarize(&reports, store.svt);
    let vulnerable = (0..pruned.trusted_count())
        .map(|i| reports.iter().filter(|r| r.counts[i] > 0).count())
        .collect();
    let memory = store.memory_cost(opts.element_bytes)?;
    Ok(Analysis {
        taskset: pruned,
        periods,
        specs,
        dropped_specs,
        pool,
        store,
        ir,
        summary,
        vulnerable,
        memory,
    })
}

/// Human-readable summary; `baseline` adds a comparison column.
pub fn summary_text(a: &Analysis, baseline: Option<&Analysis>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tool: {TOOL_VERSION}");
    let _ = writeln!(out, "taskset: {} ({})", a.taskset.name, a.store.taskset_hash);
    for m in &a.periods.menus {
        let _ = writeln!(out, "menu {}: {:?} -> {:?}", m.name, m.original, m.retained);
    }
    let _ = writeln!(out, "specifications: {} ({} unschedulable)", a.specs.len(), a.dropped_specs.len());
    let _ = writeln!(out, "schedules: {}", a.summary.schedules);
    for (i, v) in a.vulnerable.iter().enumerate() {
        let _ = writeln!(out, "vulnerable for {}: {v}", a.taskset.task_name(i + 1));
    }
    let _ = writeln!(out, "SVT: {}", rational::format(&a.store.svt));
    let _ = writeln!(out, "K (SVI < SVT): {}", a.store.k);
    let pct = |f: f64| format!("{:.1}%", 100.0 * f);
    match baseline {
        Some(b) => {
            let _ = writeln!(out, "below SVT: {} (baseline {})", pct(a.summary.fraction_below_svt), pct(b.summary.fraction_below_svt));
            let _ = writeln!(out, "mean SVI: {:.4} (baseline {:.4})", a.summary.mean_svi, b.summary.mean_svi);
            for (i, ap) in a.summary.mean_ap.iter().enumerate() {
                let base = b.summary.mean_ap.get(i).copied().unwrap_or(f64::NAN);
                let _ = writeln!(out, "mean AP {}: {ap:.4} (baseline {base:.4})", a.taskset.task_name(i + 1));
            }
        }
        None => {
            let _ = writeln!(out, "below SVT: {}", pct(a.summary.fraction_below_svt));
            let _ = writeln!(out, "mean SVI: {:.4}", a.summary.mean_svi);
            for (i, ap) in a.summary.mean_ap.iter().enumerate() {
                let _ = writeln!(out, "mean AP {}: {ap:.4}", a.taskset.task_name(i + 1));
            }
        }
    }
    let m = &a.memory;
    let _ = writeln!(
        out,
        "memory: model {} B, lookup table {} B, schedules {} B, store file {} B",
        m.model_bytes, m.lut_bytes, m.schedule_bytes, m.serialized_bytes
    );
    for w in &a.store.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn tab2_analysis() {
        let ts = bundled::tab2().with_menus(&[vec![2], vec![4]]);
        let opts = AnalysisOptions {
            pool: PoolOptions {
                exhaustive_budget: Some(1000),
                ..PoolOptions::default()
            },
            ..AnalysisOptions::default()
        };
        let a = analyze(&ts, None, &opts).unwrap();
        assert_eq!(a.summary.schedules, 8);
        assert_eq!(a.vulnerable[0], 4);
        assert!(summary_text(&a, None).contains("vulnerable for tau1: 4"));
    }

    #[test]
    fn baseline_keeps_minimum_periods() {
        let ts = bundled::tab3_low();
        let opts = AnalysisOptions {
            baseline: true,
            compute_ir: false,
            pool: PoolOptions {
                total_seeds: Some(20),
                ..PoolOptions::default()
            },
            ..AnalysisOptions::default()
        };
        let a = analyze(&ts, None, &opts).unwrap();
        assert_eq!(a.specs.len(), 1);
        assert_eq!(a.specs[0], ts.min_spec());
    }
}
