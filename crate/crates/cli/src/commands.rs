use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use maars_core::attacker::{build_ladder, render_csv, render_grid};
use maars_core::control::PlantFile;
use maars_core::cosim::{attack_success_rate, run_scenario, AttackScenario, CosimOptions, CosimRun, Policy};
use maars_core::design::{self, AnalysisOptions};
use maars_core::runtime::log_csv;
use maars_core::schedgen::{generate_pool, shuffle_schedule, simulate_fixed_priority, PoolFile, PoolOptions};
use maars_core::{bundled, rational, Error, ScheduleStore, TaskSet};

use crate::{CommonArgs, LadderArgs, PoolArgs, SimulateArgs, ValidateArgs};

type Result<T = ()> = anyhow::Result<T>;

/// 2 for bad input, 3 when the task set cannot be deployed, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                e if e.is_infeasible() => 3,
                Error::Config(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::HyperPeriodOverflow { .. }
                | Error::BudgetExceeded { .. } => 2,
                _ => 1,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result {
    fs::create_dir_all(dir)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(Error::from)
        .with_context(|| format!("writing {}", path.display()))
}

fn load_taskset(arg: &str) -> Result<TaskSet> {
    let path = Path::new(arg);
    let ts = if path.is_file() {
        TaskSet::from_json(&read(path)?).with_context(|| format!("task set {arg}"))?
    } else if let Some(ts) = bundled::taskset_by_name(arg) {
        ts
    } else {
        return Err(Error::config(format!("{arg:?} is neither a task set file nor a bundled task set")).into());
    };
    ts.validate()?;
    Ok(ts)
}

fn load_plants(paths: &[impl AsRef<Path>], taskset: &TaskSet) -> Result<PlantFile> {
    let plants = if paths.is_empty() {
        bundled::plants()
    } else {
        let mut merged = PlantFile {
            schema_version: 1,
            plants: Default::default(),
        };
        for p in paths {
            let p = p.as_ref();
            let file = PlantFile::from_json(&read(p)?).with_context(|| format!("plants {}", p.display()))?;
            for (name, cfg) in file.plants {
                if merged.plants.insert(name.clone(), cfg).is_some() {
                    return Err(Error::config(format!("plant {name:?} is defined twice")).into());
                }
            }
        }
        merged
    };
    for t in &taskset.trusted {
        if let Some(name) = &t.plant {
            plants.get(name).with_context(|| format!("task {}", t.name))?;
        }
    }
    Ok(plants)
}

fn load_scenario(arg: &str, taskset: &TaskSet) -> Result<AttackScenario> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read(Path::new(arg))?
    };
    let sc = AttackScenario::from_json(&text)?;
    sc.validate(taskset)?;
    Ok(sc)
}

/// `7`, `1,2,3` or `1..5`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config(format!("cannot parse seeds {text:?}"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(Error::config("seeds must not be empty").into());
    }
    Ok(seeds)
}

pub fn validate(args: &ValidateArgs) -> Result {
    let ts = load_taskset(&args.taskset)?;
    let plants = load_plants(&args.plants, &ts)?;
    if let Some(s) = &args.scenario {
        load_scenario(s, &ts)?;
    }
    let spec = ts.min_spec();
    let wcrt = spec.check_schedulable()?;
    let l = spec.hyper_period()?;
    println!("task set {} ({})", ts.name, ts.hash());
    println!(
        "{} trusted, {} untrusted, {} specifications, utilization at minimum periods {:.3}",
        ts.trusted_count(),
        ts.untrusted.len(),
        maars_core::taskmodel::spec_count(&ts),
        ts.total_utilization_at_min()
    );
    for (i, r) in wcrt.iter().enumerate() {
        println!("  {}: period {} wcrt {r}", ts.task_name(i + 1), spec.period(i + 1));
    }
    println!("hyper-period at minimum periods: {l}");
    let used = ts.trusted.iter().filter(|t| t.plant.is_some()).count();
    println!("plants: {} available, {used} referenced", plants.plants.len());
    println!("ok");
    Ok(())
}

pub fn prune(args: &CommonArgs) -> Result {
    let ts = load_taskset(&args.taskset)?;
    let plants = load_plants(&args.plants, &ts)?;
    let (_, report) = design::prune_menus(&ts, Some(&plants), true)?;
    write(&args.out, "periods.json", &report.to_json()?)?;
    for m in &report.menus {
        println!("{}: {:?} -> {:?}", m.name, m.original, m.retained);
    }
    Ok(())
}

fn pool_options(args: &PoolArgs) -> PoolOptions {
    PoolOptions {
        total_seeds: Some(args.seeds),
        exhaustive_budget: args.exhaustive_budget,
        base_seed: args.base_seed,
        ..PoolOptions::default()
    }
}

pub fn generate(args: &PoolArgs) -> Result {
    let ts = load_taskset(&args.common.taskset)?;
    let plants = load_plants(&args.common.plants, &ts)?;
    let (pruned, report) = design::prune_menus(&ts, Some(&plants), true)?;
    let (specs, dropped) = design::schedulable_specs(&pruned)?;
    let pool = generate_pool(&specs, &pool_options(args))?;
    let file = PoolFile::new(&pruned, pool);
    write(&args.common.out, "periods.json", &report.to_json()?)?;
    write(&args.common.out, "pool.json", &file.to_json()?)?;
    println!(
        "{} specifications ({} unschedulable), {} schedules",
        specs.len(),
        dropped.len(),
        file.schedules.len()
    );
    Ok(())
}

pub fn analyze(args: &PoolArgs, baseline: bool) -> Result {
    let ts = load_taskset(&args.common.taskset)?;
    let plants = load_plants(&args.common.plants, &ts)?;
    let opts = AnalysisOptions {
        pool: pool_options(args),
        baseline,
        compute_ir: !args.no_ir,
        ..AnalysisOptions::default()
    };
    let a = design::analyze(&ts, Some(&plants), &opts)?;
    let reference = if baseline {
        None
    } else {
        let b = AnalysisOptions {
            baseline: true,
            compute_ir: false,
            ..opts.clone()
        };
        Some(design::analyze(&ts, Some(&plants), &b)?)
    };
    let summary = design::summary_text(&a, reference.as_ref());
    let out = &args.common.out;
    write(out, "periods.json", &a.periods.to_json()?)?;
    write(out, "pool.json", &PoolFile::new(&a.taskset, a.pool.clone()).to_json()?)?;
    write(out, "store.json", &a.store.to_json()?)?;
    write(out, "vuln.csv", &a.store.reports_csv(&a.taskset))?;
    if opts.compute_ir {
        write(out, "ir.csv", &design::ir_csv(&a.ir))?;
    }
    write(out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

/// The task set a stored schedule set was built from: the pruned menus,
/// the baseline menus or the raw task set, whichever hash matches.
fn taskset_for_store(ts: &TaskSet, plants: &PlantFile, store: &ScheduleStore) -> Result<TaskSet> {
    let (pruned, _) = design::prune_menus(ts, Some(plants), true)?;
    let min: Vec<Vec<u64>> = ts.trusted.iter().map(|t| vec![t.min_period()]).collect();
    [pruned, ts.with_menus(&min), ts.clone()]
        .into_iter()
        .find(|c| c.hash() == store.taskset_hash)
        .ok_or_else(|| Error::config("the store was built for a different task set").into())
}

pub fn simulate(args: &SimulateArgs) -> Result {
    let ts = load_taskset(&args.common.taskset)?;
    let plants = load_plants(&args.common.plants, &ts)?;
    let policy: Policy = args.policy.parse()?;
    let seeds = parse_seeds(&args.seeds)?;
    let scenario = args.scenario.as_deref().map(|s| load_scenario(s, &ts)).transpose()?;

    let (taskset, store) = match (&args.store, policy) {
        (None, Policy::Static) => (ts, None),
        (Some(path), _) => {
            let store = ScheduleStore::from_json(&read(path)?).with_context(|| format!("store {}", path.display()))?;
            (taskset_for_store(&ts, &plants, &store)?, Some(store))
        }
        (None, _) => {
            let opts = AnalysisOptions {
                pool: PoolOptions {
                    total_seeds: Some(args.pool_seeds),
                    exhaustive_budget: args.exhaustive_budget,
                    ..PoolOptions::default()
                },
                baseline: args.baseline,
                compute_ir: false,
                ..AnalysisOptions::default()
            };
            let a = design::analyze(&ts, Some(&plants), &opts)?;
            (a.taskset, Some(a.store))
        }
    };

    let mut runs = String::from(
        "seed,policy,diverged,divergence_time,alert_epochs,first_alert,reentry_time,settling_time,max_deviation,attack_success\n",
    );
    for &seed in &seeds {
        let opts = CosimOptions {
            seed,
            epochs: args.epochs,
            noise: !args.no_noise,
            record_trace: !args.no_trace,
            ..CosimOptions::default()
        };
        let run = run_scenario(&taskset, store.as_ref(), &plants, scenario.as_ref(), policy, &opts)?;
        let dir = if seeds.len() == 1 {
            args.common.out.clone()
        } else {
            args.common.out.join(format!("seed-{seed}"))
        };
        write_run(&dir, &run, store.as_ref())?;
        let m = &run.metrics;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        let _ = writeln!(
            runs,
            "{seed},{policy},{},{},{},{},{},{},{:.6},{}",
            m.diverged,
            opt(m.divergence_time),
            m.alert_epochs.len(),
            m.alert_epochs.first().map_or(String::new(), u64::to_string),
            opt(m.reentry_time),
            opt(m.settling_time),
            m.max_deviation,
            rational::format(&attack_success_rate(m))
        );
        println!(
            "seed {seed}: {policy}, {} epochs, diverged {}, alert epochs {}, reentry {}, max deviation {:.4}",
            m.epochs_run,
            m.divergence_time.map_or("no".to_string(), |t| format!("at {t:.3} s")),
            m.alert_epochs.len(),
            m.reentry_time.map_or("-".to_string(), |t| format!("{t:.3} s")),
            m.max_deviation
        );
    }
    if seeds.len() > 1 {
        write(&args.common.out, "runs.csv", &runs)?;
    }
    Ok(())
}

fn write_run(dir: &Path, run: &CosimRun, store: Option<&ScheduleStore>) -> Result {
    write(dir, "metrics.json", &run.metrics.to_json()?)?;
    if let Some(trace) = &run.trace {
        write(dir, "trace.csv", &trace.to_csv())?;
    }
    if let (Some(store), false) = (store, run.deployments.is_empty()) {
        write(dir, "deployments.csv", &log_csv(&run.deployments, store))?;
    }
    Ok(())
}

pub fn ladder(args: &LadderArgs) -> Result {
    let ts = load_taskset(&args.taskset)?;
    let spec = if args.periods.is_empty() {
        ts.min_spec()
    } else {
        if args.periods.len() != ts.trusted_count() {
            bail!(Error::config(format!("expected {} trusted periods", ts.trusted_count())));
        }
        ts.spec_with(&args.periods)
    };
    spec.check_schedulable()?;
    let schedule = match args.seed {
        Some(seed) => shuffle_schedule(&spec, seed)?,
        None => simulate_fixed_priority(&spec)?,
    };
    let lv = build_ladder(&schedule, &ts, args.victim, args.attacker, args.observation)?;
    if args.csv {
        print!("{}", render_csv(&lv));
    } else {
        print!("{}", render_grid(&lv));
        if lv.inconclusive {
            println!("observation shorter than one full ladder cycle: inconclusive");
        }
    }
    Ok(())
}
