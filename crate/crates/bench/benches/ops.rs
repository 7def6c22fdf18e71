//! Micro-benchmarks for the hot paths: noise synthesis + transport application,
//! the 3x3 matrix exponential, and a full stochastic step.
//!
//! Sized to finish quickly; raise `sample_size` for serious profiling.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use thinmag_core::solver::{initial_field, matexp3, Mat3, SimConfig, Stepper};
use thinmag_core::{InitialCondition, NoiseSpec, C64};

fn sim_config(n: u32) -> SimConfig {
    SimConfig {
        noise: NoiseSpec {
            n,
            beta: 4.0,
            gamma: 4.0,
            rho: 0.7,
            c1h: 3.2,
            c2h: 1.0,
            cv: 1.0,
            jmax: 3,
            eta: 1.0,
        },
        kmax: 2 * n,
        dt: 1e-3,
        horizon: 0.25,
        record_every: 5,
        initial: InitialCondition::RandomLowmode { kband: n, mband: 1, amp: 1.0, ic_seed: 7 },
    }
}

fn bench_noise_term(c: &mut Criterion) {
    let mut group = c.benchmark_group("noise_term");
    group.sample_size(20);
    for n in [2u32, 4] {
        let cfg = sim_config(n);
        let mut stepper = Stepper::new(&cfg).expect("stepper");
        let b = initial_field(&cfg).expect("initial field");
        let incr = stepper.increments(1, 0, 0);
        // Warm the FFT plan cache so the measurement is steady-state.
        let _ = stepper.noise_term(&b, &incr);
        group.bench_function(format!("n{n}"), |bench| {
            bench.iter(|| black_box(stepper.noise_term(black_box(&b), &incr)));
        });
    }
    group.finish();
}

fn bench_full_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_step");
    group.sample_size(20);
    for n in [2u32, 4] {
        let cfg = sim_config(n);
        let mut stepper = Stepper::new(&cfg).expect("stepper");
        let b0 = initial_field(&cfg).expect("initial field");
        let incr = stepper.increments(1, 0, 0);
        let _ = stepper.noise_term(&b0, &incr);
        group.bench_function(format!("n{n}"), |bench| {
            bench.iter_batched(
                || b0.clone(),
                |mut b| {
                    let incr = stepper.increments(1, 0, 0);
                    let (noise, _) = stepper.noise_term(&b, &incr);
                    stepper.advance(&mut b, Some(&noise), 0).expect("step");
                    b
                },
                BatchSize::SmallInput,
            );
        });
    }
    group.finish();
}

fn bench_matexp(c: &mut Criterion) {
    let z = |re: f64, im: f64| C64::new(re, im);
    let m: Mat3 = [
        [z(0.0, 0.0), z(0.0, -0.3), z(0.0, 0.0)],
        [z(0.0, 0.3), z(0.0, 0.0), z(0.0, 0.0)],
        [z(0.0, 0.1), z(0.0, 0.2), z(0.0, 0.0)],
    ];
    c.bench_function("matexp3", |bench| {
        bench.iter(|| black_box(matexp3(black_box(&m))));
    });
}

criterion_group!(benches, bench_noise_term, bench_full_step, bench_matexp);
criterion_main!(benches);
