use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use flowlab_core::calculus::{laplacian_operator, potential_lambda0, schrodinger_operator};
use flowlab_core::fields::field_family;
use flowlab_core::flow::{step_flow, DEFAULT_CFL};
use flowlab_core::inequality::{estimate_sobolev_constant, SobolevExponents};
use flowlab_bench::unit_sphere as unit;
use flowlab_core::manifold::make_conformal_s2;
use flowlab_core::{ConformalPreset, HeatSemigroup, NormPair};

fn eigensolve(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigensolve");
    for res in [64, 128, 256] {
        let op = laplacian_operator(&unit(res));
        g.bench_with_input(BenchmarkId::from_parameter(res), &op, |b, op| b.iter(|| op.decompose()));
    }
    g.finish();
}

fn heat_kernel_norms(c: &mut Criterion) {
    let sg = HeatSemigroup::new(&unit(128), 0.0).unwrap();
    c.bench_function("norm_1_inf_128", |b| b.iter(|| sg.norm(0.1, NormPair::OneToInf).unwrap()));
    c.bench_function("norm_q_inf_128", |b| b.iter(|| sg.norm(0.1, NormPair::QToInf(1.5)).unwrap()));
}

fn flow_step(c: &mut Criterion) {
    let s = make_conformal_s2(128, ConformalPreset::Bumped { a: 0.3, b: 0.0 }).unwrap();
    c.bench_function("rk4_step_128", |b| b.iter(|| step_flow(&s, 5e-5, DEFAULT_CFL).unwrap()));
}

fn constant_sweep(c: &mut Criterion) {
    let m = unit(128);
    let fam = field_family(m.grid(), 200, 1).unwrap();
    let e = SobolevExponents::new(2, 1.5).unwrap();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("sobolev_constant_200", |b| b.iter(|| estimate_sobolev_constant(&e, &m, &fam).unwrap()));
    g.bench_function("schrodinger_assembly_128", |b| {
        b.iter(|| schrodinger_operator(&m, &potential_lambda0(&m)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, eigensolve, heat_kernel_norms, flow_step, constant_sweep);
criterion_main!(benches);
