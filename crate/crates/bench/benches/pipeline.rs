use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use maars_core::control::DiscretizedLoop;
use maars_core::schedgen::{enumerate_all, generate_pool, shuffle_schedule, PoolOptions};
use maars_core::stability::{find_cqlf, CqlfProblem};
use maars_core::vulnerability::build_store;
use maars_core::{bundled, AtkFlag, SelectorState};

fn generation(c: &mut Criterion) {
    let lu = bundled::tab3_low();
    let spec = lu.min_spec();
    let mut seed = 0u64;
    c.bench_function("shuffle tab3-low minimum periods", |b| {
        b.iter(|| {
            seed += 1;
            shuffle_schedule(black_box(&spec), seed).unwrap()
        })
    });

    let tab2 = bundled::tab2().spec_with(&[3, 4]);
    c.bench_function("enumerate tab2 p1=3", |b| b.iter(|| enumerate_all(black_box(&tab2), 10_000).unwrap()));
}

fn store(c: &mut Criterion) {
    let lu = bundled::tab3_low();
    let specs = maars_core::taskmodel::enumerate_specs(&lu);
    let opts = PoolOptions {
        total_seeds: Some(200),
        ..PoolOptions::default()
    };
    let pool = generate_pool(&specs, &opts).unwrap();
    c.bench_function("build store from 200 schedules", |b| {
        b.iter_batched(|| pool.clone(), |p| build_store(p, &lu).unwrap(), BatchSize::SmallInput)
    });

    let store = build_store(pool, &lu).unwrap();
    let mut state = SelectorState::new(&store, 1).unwrap();
    let mut epoch = 0u64;
    c.bench_function("selector step", |b| {
        b.iter(|| {
            epoch += 1;
            if state.log.len() > 10_000 {
                state.log.clear();
            }
            let flag = if epoch.is_multiple_of(7) { AtkFlag(2) } else { AtkFlag(0) };
            state.sched_sel(black_box(flag))
        })
    });
}

fn cqlf(c: &mut Criterion) {
    let lu = bundled::tab3_low();
    let plants = bundled::plants();
    for task in &lu.trusted {
        let cfg = plants.get(task.plant.as_deref().unwrap()).unwrap();
        let model = cfg.model().unwrap();
        let loops: Vec<_> = task
            .period_menu
            .iter()
            .map(|&p| DiscretizedLoop::design(&model, p, lu.delta).unwrap())
            .collect();
        let problem = CqlfProblem::from_loops(&loops, cfg.gues_rate).unwrap();
        c.bench_function(&format!("cqlf {}", task.name), |b| b.iter(|| find_cqlf(black_box(&problem))));
    }
}

criterion_group!(benches, generation, store, cqlf);
criterion_main!(benches);
