//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Every check computes its expectation independently of the code under
//! test (brute-force enumeration, slot-level simulation, pair scans,
//! eigenvalue checks). Criteria listed in `KNOWN_FAILURES` still print FAIL
//! with their measurements; only an unexpected failure fails the run.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use maars_core::attacker::{build_ladder, inferability_ratio};
use maars_core::control::{discretize, kalman_gain, lqr_gain, DetectorState, DiscretizedLoop, PlantModel};
use maars_core::cosim::{run_scenario, AttackScenario, CosimOptions, Policy};
use maars_core::design::{analyze, AnalysisOptions};
use maars_core::linalg::Matrix;
use maars_core::runtime::{log_csv, Mode};
use maars_core::schedgen::{enumerate_all, generate_pool, simulate_fixed_priority, PoolOptions};
use maars_core::stability::{find_cqlf, CqlfOutcome, CqlfProblem};
use maars_core::taskmodel::enumerate_specs;
use maars_core::vulnerability::{self, build_store, svt};
use maars_core::{bundled, AtkFlag, Rational, ScheduleStore, SelectorState, TaskSet, TaskSpec};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Criteria whose measured outcome is documented as a shortfall.
const KNOWN_FAILURES: &[u32] = &[7];

type Check = Result<String, String>;

/// Number, label, time limit and check.
type Criterion = (u32, &'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

/// All work-conserving slot assignments of one hyper-period in which every
/// job gets exactly its WCET inside its period. Tasks are 1-based.
fn brute_force_schedules(spec: &TaskSpec) -> BTreeSet<Vec<usize>> {
    let l = spec.hyper_period().unwrap() as usize;
    let n = spec.len();
    let mut out = BTreeSet::new();
    let mut slots = Vec::new();
    fn go(spec: &TaskSpec, l: usize, n: usize, slots: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
        let t = slots.len();
        // Remaining demand of the current job of every task.
        let pending = |k: usize, t: usize, slots: &[usize]| {
            let p = spec.periods[k] as usize;
            let start = t / p * p;
            spec.wcets[k] as usize - slots[start..t].iter().filter(|&&s| s == k + 1).count()
        };
        if t > 0 {
            // The job that just closed its period must be complete.
            for k in 0..n {
                let p = spec.periods[k] as usize;
                if t.is_multiple_of(p) && pending(k, t - 1, slots) != usize::from(slots[t - 1] == k + 1) {
                    return;
                }
            }
        }
        if t == l {
            out.insert(slots.clone());
            return;
        }
        let ready: Vec<usize> = (0..n).filter(|&k| pending(k, t, slots) > 0).collect();
        if ready.is_empty() {
            slots.push(0);
            go(spec, l, n, slots, out);
            slots.pop();
        }
        for k in ready {
            slots.push(k + 1);
            go(spec, l, n, slots, out);
            slots.pop();
        }
    }
    go(spec, l, n, &mut slots, &mut out);
    out
}

/// Slot in which each job of `task` completes.
fn completions(slots: &[usize], spec: &TaskSpec, task: usize) -> Vec<usize> {
    let p = spec.period(task) as usize;
    let e = spec.wcet(task) as usize;
    (0..slots.len() / p)
        .map(|j| {
            let mut done = 0;
            (j * p..(j + 1) * p)
                .find(|&t| {
                    done += usize::from(slots[t] == task);
                    done == e
                })
                .expect("job completes in its period")
        })
        .collect()
}

/// Attacked-job count by scanning every (victim completion, untrusted
/// execution) pair.
fn pair_scan_count(slots: &[usize], spec: &TaskSpec, ts: &TaskSet, task: usize) -> u64 {
    let p = spec.period(task) as usize;
    let aew = ts.trusted[task - 1].aew as usize;
    let untrusted: Vec<usize> = (0..slots.len()).filter(|&t| ts.is_untrusted(slots[t])).collect();
    completions(slots, spec, task)
        .iter()
        .enumerate()
        .filter(|&(j, &c)| {
            let end = (c + aew).min((j + 1) * p - 1);
            untrusted.iter().any(|&t| t > c && t <= end)
        })
        .count() as u64
}

fn oracle_levels(ts: &TaskSet) -> Vec<Rational> {
    let q = ts.trusted.len() as i64;
    let raw: Vec<Rational> = ts
        .trusted
        .iter()
        .enumerate()
        .map(|(i, t)| t.criticality.unwrap_or(Rational::from_integer(q - i as i64)))
        .collect();
    let total: Rational = raw.iter().sum();
    raw.iter().map(|c| c / total).collect()
}

/// First-job response time under synchronous release and fixed priority.
fn simulated_first_response(spec: &TaskSpec, task: usize) -> u64 {
    let n = spec.len();
    let mut left = vec![0u64; n];
    for t in 0.. {
        for (k, rem) in left.iter_mut().enumerate() {
            if t % spec.periods[k] == 0 {
                *rem += spec.wcets[k];
            }
        }
        if let Some(k) = (0..n).find(|&k| left[k] > 0) {
            left[k] -= 1;
            if k == task - 1 && left[k] == 0 {
                return t + 1;
            }
        }
    }
    unreachable!()
}

fn sym_eigen(m: &Matrix) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().collect()
}

fn frob(m: &Matrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// --------------------------------------------------------------- criteria

fn c1() -> Check {
    let ts = bundled::tab2();
    let spec = ts.spec_with(&[2, 4]);
    let pool = enumerate_all(&spec, 10_000).map_err(|e| e.to_string())?;
    let levels = oracle_levels(&ts);
    let vulnerable = pool
        .iter()
        .filter(|s| vulnerability::analyze(s, &ts, &levels).counts[0] > 0)
        .count();
    let oracle = brute_force_schedules(&spec);
    let oracle_vulnerable = oracle.iter().filter(|s| pair_scan_count(s, &spec, &ts, 1) > 0).count();
    let keys: BTreeSet<Vec<usize>> = pool.iter().map(|s| s.slots.clone()).collect();
    ensure(keys == oracle, || format!("enumeration differs from brute force ({} vs {})", keys.len(), oracle.len()))?;
    ensure(pool.len() == 8 && vulnerable == 4 && oracle_vulnerable == 4, || {
        format!("{} schedules, {vulnerable} vulnerable (oracle {oracle_vulnerable})", pool.len())
    })?;
    Ok(format!("{} unique valid schedules, {vulnerable} vulnerable for tau1", pool.len()))
}

fn c2() -> Check {
    let ts = bundled::tab2();
    let spec = ts.spec_with(&[3, 4]);
    let pool = enumerate_all(&spec, 100_000).map_err(|e| e.to_string())?;
    let levels = oracle_levels(&ts);
    let safe = pool
        .iter()
        .filter(|s| vulnerability::analyze(s, &ts, &levels).counts[0] == 0)
        .count();
    let oracle = brute_force_schedules(&spec);
    let oracle_safe = oracle.iter().filter(|s| pair_scan_count(s, &spec, &ts, 1) == 0).count();
    let keys: BTreeSet<Vec<usize>> = pool.iter().map(|s| s.slots.clone()).collect();
    ensure(keys == oracle, || format!("enumeration differs from brute force ({} vs {})", keys.len(), oracle.len()))?;
    ensure(safe == oracle_safe, || format!("safe count {safe} but oracle {oracle_safe}"))?;
    let fraction = safe as f64 / pool.len() as f64;
    let detail = format!(
        "{} work-conserving schedules, {safe} safe (reference 36 / 12); safe fraction {fraction:.3} vs 0.333",
        pool.len()
    );
    ensure((fraction - 1.0 / 3.0).abs() <= 0.1, || detail.clone())?;
    Ok(detail)
}

fn c3() -> Check {
    let ts = bundled::tab1();
    let s = simulate_fixed_priority(&ts.spec_with(&[4])).map_err(|e| e.to_string())?;
    let lv = build_ladder(&s, &ts, 1, 3, Some(20)).map_err(|e| e.to_string())?;
    let ir = inferability_ratio(&lv);
    let detail = format!("|AAI| = {}, AEI = {:?}, IR = {ir}", lv.aai.len(), lv.aei);
    ensure(
        lv.aai.len() == 4 && lv.aei == BTreeSet::from([2, 3]) && ir == Rational::new(1, 2),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn c4() -> Check {
    let ts = bundled::tab3_low();
    let value = svt(&ts);
    let oracle: Rational = ts.taps().iter().zip(oracle_levels(&ts)).map(|(t, c)| t * c).sum();
    ensure(value == Rational::new(14, 100) && value == oracle, || format!("SVT = {value}"))?;
    ensure(svt(&bundled::tab3_high()) == value, || "high-utilization SVT differs".into())?;
    Ok(format!("SVT = {value}"))
}

fn c5() -> Check {
    let mut checked = 0;
    for ts in [bundled::tab1(), bundled::tab2(), bundled::tab3_low(), bundled::tab3_high()] {
        let spec = ts.min_spec();
        for id in 1..=spec.len() {
            let rta = spec.wcrt(id).map_err(|e| format!("{}: {e}", ts.name))?;
            let sim = simulated_first_response(&spec, id);
            ensure(rta == sim, || format!("{} task {id}: fixed point {rta}, simulation {sim}", ts.name))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} tasks agree"))
}

fn c6() -> Check {
    let mut checked = 0;
    for ts in [bundled::tab1(), bundled::tab2()] {
        let levels = oracle_levels(&ts);
        for spec in enumerate_specs(&ts) {
            for s in enumerate_all(&spec, 1_000_000).map_err(|e| e.to_string())? {
                let report = vulnerability::analyze(&s, &ts, &levels);
                let l = s.slots.len() as i64;
                let mut svi = Rational::from_integer(0);
                for i in 1..=ts.trusted_count() {
                    let count = pair_scan_count(&s.slots, &spec, &ts, i);
                    let ap = Rational::new(count as i64 * spec.period(i) as i64, l);
                    ensure(report.counts[i - 1] == count && report.ap[i - 1] == ap, || {
                        format!("{} {}: task {i} AP {} vs oracle {ap}", ts.name, s.key(), report.ap[i - 1])
                    })?;
                    svi += ap * levels[i - 1];
                }
                ensure(report.svi == svi, || format!("{}: SVI {} vs oracle {svi}", s.key(), report.svi))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} schedules match the pair scan"))
}

fn trend(ts: &TaskSet) -> Result<(bool, bool, String), String> {
    let plants = bundled::plants();
    let opts = AnalysisOptions {
        pool: PoolOptions {
            total_seeds: Some(1000),
            ..PoolOptions::default()
        },
        compute_ir: false,
        ..AnalysisOptions::default()
    };
    let maars = analyze(ts, Some(&plants), &opts).map_err(|e| e.to_string())?;
    let base = analyze(ts, Some(&plants), &AnalysisOptions { baseline: true, ..opts }).map_err(|e| e.to_string())?;
    let mut ap_ok = true;
    let mut parts = Vec::new();
    for (i, (m, b)) in maars.summary.mean_ap.iter().zip(&base.summary.mean_ap).enumerate() {
        ap_ok &= m < b;
        parts.push(format!("{} {m:.4}/{b:.4}", ts.task_name(i + 1)));
    }
    let (fm, fb) = (maars.summary.fraction_below_svt, base.summary.fraction_below_svt);
    let detail = format!(
        "{}: mean AP maars/baseline {}; below SVT {:.1}% vs {:.1}%",
        ts.name,
        parts.join(", "),
        100.0 * fm,
        100.0 * fb
    );
    Ok((ap_ok, fm > fb, detail))
}

fn c7() -> Check {
    let mut details = Vec::new();
    let mut pass = true;
    for ts in [bundled::tab3_low(), bundled::tab3_high()] {
        let (a, b, d) = trend(&ts)?;
        details.push(format!("{d} [AP {}, SVT {}]", verdict(a), verdict(b)));
        pass &= a && b;
    }
    let detail = details.join("; ");
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "not met"
    }
}

fn selector_store() -> Result<(TaskSet, ScheduleStore), String> {
    let ts = bundled::tab2();
    let specs = enumerate_specs(&ts);
    let pool = generate_pool(
        &specs,
        &PoolOptions {
            exhaustive_budget: Some(10_000),
            ..PoolOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let store = build_store(pool, &ts).map_err(|e| e.to_string())?;
    Ok((ts, store))
}

/// Quiet stretches broken by bursts of alarms for a scripted victim.
fn scripted_flags(n: usize, trusted: usize) -> Vec<AtkFlag> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut flags = Vec::with_capacity(n);
    while flags.len() < n {
        let quiet = rng.random_range(0..8);
        flags.extend(std::iter::repeat_n(AtkFlag(0), quiet));
        let victim = rng.random_range(1..=trusted);
        let burst = rng.random_range(1..4);
        flags.extend(std::iter::repeat_n(AtkFlag(victim), burst));
    }
    flags.truncate(n);
    flags
}

fn c8() -> Check {
    let (ts, store) = selector_store()?;
    ensure(store.k >= 2 && store.lut.iter().all(|r| r.len() >= 2), || {
        format!("store too small to exercise the selector (K = {})", store.k)
    })?;
    let flags = scripted_flags(10_000, ts.trusted_count());
    let run = |seed: u64| -> Result<SelectorState, String> {
        let mut s = SelectorState::new(&store, seed).map_err(|e| e.to_string())?;
        for &f in &flags {
            s.sched_sel(f).map_err(|e| e.to_string())?;
        }
        Ok(s)
    };
    let state = run(11)?;
    let log = &state.log;
    let mut alerts = 0;
    for (i, d) in log.iter().enumerate() {
        ensure(!d.held, || format!("decision {i} held the previous schedule"))?;
        let candidates = match d.mode {
            Mode::Normal => {
                ensure(store.svi(d.index) < store.svt, || format!("decision {i}: normal mode deployed SVI >= SVT"))?;
                store.k
            }
            Mode::Alert(v) => {
                alerts += 1;
                let tap = ts.trusted[v - 1].tap;
                ensure(store.ap(d.index, v) < tap, || format!("decision {i}: alert({v}) deployed AP >= TAP"))?;
                store.lut[v - 1].len()
            }
        };
        if i > 0 && candidates >= 2 {
            ensure(d.index != log[i - 1].index, || format!("decision {i} repeated the previous schedule"))?;
        }
    }
    let again = run(11)?;
    ensure(log_csv(log, &store) == log_csv(&again.log, &store), || "same seed gave a different log".into())?;
    ensure(log_csv(log, &store) != log_csv(&run(12)?.log, &store), || "different seeds gave the same log".into())?;
    Ok(format!(
        "{} decisions ({alerts} in alert mode) over {} schedules, K = {}",
        log.len() - 1,
        store.len(),
        store.k
    ))
}

fn c9() -> Check {
    let plants = bundled::plants();
    let ts = bundled::tab3_low();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut certificates = 0;
    let mut trajectories = 0;
    let mut worst_residual = f64::NEG_INFINITY;
    for task in &ts.trusted {
        let cfg = plants.get(task.plant.as_deref().unwrap()).map_err(|e| e.to_string())?;
        let model = cfg.model().map_err(|e| e.to_string())?;
        let min = task.min_period();
        let others: Vec<u64> = task.period_menu.iter().copied().filter(|&p| p != min).collect();
        // Every sub-menu that keeps the minimum period.
        for mask in 0..1u32 << others.len() {
            let mut menu = vec![min];
            menu.extend(others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, p)| *p));
            let loops: Vec<DiscretizedLoop> = menu
                .iter()
                .map(|&p| DiscretizedLoop::design(&model, p, ts.delta))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let problem = CqlfProblem::from_loops(&loops, cfg.gues_rate).map_err(|e| e.to_string())?;
            let CqlfOutcome::Feasible(cert) = find_cqlf(&problem) else {
                continue;
            };
            certificates += 1;
            let p = &cert.p;
            let min_eig = sym_eigen(p).into_iter().fold(f64::INFINITY, f64::min);
            ensure(min_eig > 0.0, || format!("{} {menu:?}: P is not positive definite", task.name))?;
            for (m, a) in problem.matrices.iter().zip(&problem.alphas) {
                let r = sym_eigen(&(m.transpose() * p * m - p * (1.0 + a))).into_iter().fold(f64::NEG_INFINITY, f64::max);
                worst_residual = worst_residual.max(r);
                ensure(r <= 1e-8, || format!("{} {menu:?}: LMI residual {r:e}", task.name))?;
            }
            // Random switching among the certified loops.
            let n = p.nrows();
            for _ in 0..63 {
                let mut x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                for step in 0..100 {
                    let j = rng.random_range(0..problem.matrices.len());
                    let next = &problem.matrices[j] * &x;
                    let v0 = (x.transpose() * p * &x)[0];
                    let v1 = (next.transpose() * p * &next)[0];
                    let bound = (1.0 + problem.alphas[j]) * v0 + 1e-8 * x.norm_squared();
                    ensure(v1 <= bound && v1 < v0, || {
                        format!("{} {menu:?}: V grew at step {step} ({v0:e} -> {v1:e})", task.name)
                    })?;
                    x = next;
                }
                trajectories += 1;
            }
        }
    }
    ensure(trajectories >= 1000, || format!("only {trajectories} trajectories"))?;

    // Two stable subsystems whose product is unstable.
    let a1 = Matrix::from_row_slice(2, 2, &[0.3, 1.8, 0.0, 0.3]);
    let a2 = Matrix::from_row_slice(2, 2, &[0.3, 0.0, 1.8, 0.3]);
    let product = &a1 * &a2;
    let rho = product.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let problem = CqlfProblem::new(vec![a1, a2], vec![-0.01, -0.01]).map_err(|e| e.to_string())?;
    ensure(rho > 1.0 && matches!(find_cqlf(&problem), CqlfOutcome::Infeasible(_)), || {
        "counterexample was not rejected".into()
    })?;
    Ok(format!(
        "{certificates} certificates, worst residual {worst_residual:.2e}, {trajectories} switching trajectories; counterexample infeasible"
    ))
}

fn c10() -> Check {
    let ts = bundled::tab3_low();
    let plants = bundled::plants();
    let opts = AnalysisOptions {
        pool: PoolOptions {
            total_seeds: Some(1000),
            ..PoolOptions::default()
        },
        compute_ir: false,
        ..AnalysisOptions::default()
    };
    let a = analyze(&ts, Some(&plants), &opts).map_err(|e| e.to_string())?;
    let scenario = AttackScenario {
        compromised: 5,
        victim: 2,
        injection: None,
        start_epoch: 20,
        duration: None,
    };
    let sim = CosimOptions {
        seed: 1,
        epochs: 300,
        ..CosimOptions::default()
    };
    let run = |policy| run_scenario(&a.taskset, Some(&a.store), &plants, Some(&scenario), policy, &sim).map_err(|e| e.to_string());
    let st = run(Policy::Static)?.metrics;
    let ma = run(Policy::Maars)?.metrics;
    let secs = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.3} s"));
    let detail = format!(
        "static: diverged {} (at {}); maars: {} alert epochs (first {}), diverged {}, back in band after {}",
        st.diverged,
        secs(st.divergence_time),
        ma.alert_epochs.len(),
        ma.alert_epochs.first().map_or("none".to_string(), u64::to_string),
        ma.diverged,
        secs(ma.reentry_time)
    );
    ensure(
        st.diverged && !ma.alert_epochs.is_empty() && !ma.diverged && ma.epochs_run == 300 && ma.reentry_time.is_some(),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn dare_residual_lqr(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let s = (r + b.transpose() * p * b).try_inverse().unwrap();
    let res = a.transpose() * p * a - p - a.transpose() * p * b * s * b.transpose() * p * a + q;
    frob(&res) / frob(p).max(1.0)
}

fn c11() -> Check {
    let plants = bundled::plants();
    let ts = bundled::tab3_low();
    let mut semigroup: f64 = 0.0;
    let mut dare: f64 = 0.0;
    let mut rates = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for task in &ts.trusted {
        let name = task.plant.as_deref().unwrap();
        let cfg = plants.get(name).map_err(|e| e.to_string())?;
        let model: PlantModel = cfg.model().map_err(|e| e.to_string())?;
        for &p in &task.period_menu {
            let h = p as f64 * ts.delta;
            let (a1, b1) = discretize(&model, h).map_err(|e| e.to_string())?;
            let (a2, b2) = discretize(&model, 2.0 * h).map_err(|e| e.to_string())?;
            semigroup = semigroup
                .max(frob(&(&a2 - &a1 * &a1)) / frob(&a2).max(1.0))
                .max(frob(&(&b2 - (&a1 * &b1 + &b1))) / frob(&b2).max(1.0));
            let (_, lqr) = lqr_gain(&model, &a1, &b1).map_err(|e| e.to_string())?;
            dare = dare.max(dare_residual_lqr(&a1, &b1, &model.q, &model.r, &lqr.p));
            let kal = kalman_gain(&model, &a1, &model.c).map_err(|e| e.to_string())?;
            let (at, ct) = (a1.transpose(), model.c.transpose());
            dare = dare.max(dare_residual_lqr(&at, &ct, &model.process_noise, &model.measurement_noise, &kal.prediction_covariance));
        }

        // False-alarm rate of a detector calibrated for 2 %, driven by
        // nominal innovations of the loop at the minimum period.
        let lp = DiscretizedLoop::design(&model, task.min_period(), ts.delta).map_err(|e| e.to_string())?;
        let m = model.c.nrows();
        let window = cfg.detector.window;
        let threshold = maars_core::control::calibrate_threshold(m, window, 0.02, 100_000, &mut rng).map_err(|e| e.to_string())?;
        let mut det = DetectorState::new(&lp.innovation_covariance, window, threshold).map_err(|e| e.to_string())?;
        let chol = lp.innovation_covariance.clone().cholesky().ok_or("innovation covariance not positive definite")?;
        let steps = 100_000;
        let mut alarms = 0;
        for i in 0..steps + window {
            let w = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let out = det.step(&(chol.l() * w));
            if i >= window && out.alarm {
                alarms += 1;
            }
        }
        rates.push((name.to_string(), 100.0 * alarms as f64 / steps as f64));
    }
    let far = rates.iter().map(|(n, r)| format!("{n} {r:.2}%")).collect::<Vec<_>>().join(", ");
    let detail = format!("semigroup error {semigroup:.1e}, DARE residual {dare:.1e}, false-alarm rate {far}");
    ensure(semigroup <= 1e-7 && dare <= 1e-8 && rates.iter().all(|(_, r)| (r - 2.0).abs() <= 0.5), || detail.clone())?;
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (1, "exhaustive count, short period", Duration::from_secs(1), c1),
        (2, "exhaustive count, multi-rate", Duration::from_secs(10), c2),
        (3, "ladder reproduction", Duration::from_secs(1), c3),
        (4, "threshold arithmetic", Duration::from_secs(1), c4),
        (5, "response-time oracle", Duration::from_secs(1), c5),
        (6, "attack-probability oracle", Duration::from_secs(60), c6),
        (7, "trend against the baseline", Duration::from_secs(300), c7),
        (8, "selector invariants", Duration::from_secs(60), c8),
        (9, "Lyapunov certification", Duration::from_secs(30), c9),
        (10, "resilience under attack", Duration::from_secs(60), c10),
        (11, "numerics", Duration::from_secs(60), c11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut unexpected = Vec::new();
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            r => r,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let note = if result.is_err() && KNOWN_FAILURES.contains(&n) {
            " (documented shortfall)"
        } else {
            ""
        };
        println!("criterion {n:>2} {status} {name} [{elapsed:.2?}]{note}: {detail}");
        if result.is_err() && !KNOWN_FAILURES.contains(&n) {
            unexpected.push(n);
        }
    }
    let _ = panic::take_hook();
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
