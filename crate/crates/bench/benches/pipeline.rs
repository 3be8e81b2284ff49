use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use koopeig::dynamics::{generate_dataset, GenerateOptions, InputPolicy, Sampler};
use koopeig::mpc::{condense, solve_qp, AdmmSettings, TrackingExperiment};
use koopeig::predictor::EigMode;
use koopeig::spectrum::LambdaObjective;
use koopeig::VectorField;

fn small_experiment() -> TrackingExperiment {
    let mut exp = TrackingExperiment::duffing();
    exp.n_traj = 20;
    exp.duration = 4.0;
    exp.learn.eigmode = EigMode::Lattice;
    exp
}

fn data(c: &mut Criterion) {
    let vf = VectorField::duffing();
    let opts = GenerateOptions {
        n_traj: 20,
        duration: 4.0,
        ts: 0.01,
        policy: InputPolicy::None,
        seed: 1,
    };
    c.bench_function("generate 20x400 duffing", |b| {
        b.iter(|| {
            generate_dataset(&vf, &Sampler::Circle { radius: 1.0 }, black_box(&opts)).unwrap()
        })
    });
}

fn objective(c: &mut Criterion) {
    let exp = small_experiment();
    let vf = exp.vector_field().unwrap();
    let ds = generate_dataset(
        &vf,
        &exp.sampler,
        &GenerateOptions {
            n_traj: exp.n_traj,
            duration: exp.duration,
            ts: exp.ts,
            policy: InputPolicy::None,
            seed: 1,
        },
    )
    .unwrap();
    let obj = LambdaObjective::state_component(&ds, 0).unwrap();
    let pred = exp.train().unwrap();
    let lambdas: Vec<_> = pred.a[..10].to_vec();
    c.bench_function("objective value and gradient, N=10", |b| {
        b.iter(|| obj.value_and_gradient(black_box(&lambdas)).unwrap())
    });
}

fn lift_and_qp(c: &mut Criterion) {
    let exp = small_experiment();
    let pred = exp.train().unwrap();
    let points: Vec<Vec<f64>> = (0..100)
        .map(|i| {
            let a = i as f64 * 0.0628;
            vec![0.6 * a.cos(), 0.6 * a.sin()]
        })
        .collect();
    c.bench_function("lift 100 points", |b| {
        b.iter(|| {
            for x in &points {
                black_box(pred.lift(x).unwrap());
            }
        })
    });

    let spec = exp.spec().unwrap();
    let qp = condense(&spec, &pred).unwrap();
    let z0 = pred.lift(&[0.1, -0.2]).unwrap();
    let reference = spec.reference.as_ref().unwrap().at(0.0).to_vec();
    let settings = AdmmSettings::default();
    let mut group = c.benchmark_group("mpc");
    group.sample_size(20);
    group.bench_function("condense Np=100", |b| {
        b.iter(|| condense(&spec, black_box(&pred)).unwrap())
    });
    group.bench_function("cold QP solve Np=100", |b| {
        b.iter(|| solve_qp(&qp, black_box(&z0), Some(&reference), None, &settings).unwrap())
    });
    group.finish();
}

/// With `z0ᵀH₂` folded into the linear term, the QP has `m·Np` variables whatever the
/// number of eigenfunctions, so solve times should stay flat across N.
fn solve_vs_lift_size(c: &mut Criterion) {
    let mut group = c.benchmark_group("QP solve vs N");
    group.sample_size(20);
    for per_state in [5, 10, 20] {
        let mut exp = small_experiment();
        exp.per_state = per_state;
        let pred = exp.train().unwrap();
        let spec = exp.spec().unwrap();
        let qp = condense(&spec, &pred).unwrap();
        let z0 = pred.lift(&[0.1, -0.2]).unwrap();
        let reference = spec.reference.as_ref().unwrap().at(0.0).to_vec();
        let settings = AdmmSettings::default();
        group.bench_function(format!("N={}", pred.n_lift()), |b| {
            b.iter(|| solve_qp(&qp, black_box(&z0), Some(&reference), None, &settings).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, data, objective, lift_and_qp, solve_vs_lift_size);
criterion_main!(benches);
