use std::hint::black_box;

use compose_core::gausslight::{synth_gaussian_env, GaussianLight, LightEdit};
use compose_core::olat::{edit, render_olat, EditRequest, LightTarget};
use compose_core::synthstage::{build_olat_basis, BuiltinScene};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench(c: &mut Criterion) {
    let basis = build_olat_basis(&BuiltinScene::HeadProxy.spec(), 160, 256, 256).unwrap();
    let env = synth_gaussian_env(&GaussianLight::new(0.3, 0.3, 0.15, 6.0).unwrap(), 256)
        .unwrap()
        .linear_combination(1.0, &compose_core::EnvironmentMap::uniform(256, [0.1; 3]).unwrap(), 1.0)
        .unwrap();

    let mut group = c.benchmark_group("relight");
    group.sample_size(10);
    group.bench_function("render_olat_256x256_n160", |b| {
        b.iter(|| render_olat(black_box(&basis), black_box(&env)).unwrap())
    });
    let req = EditRequest::new(LightTarget::Relative(LightEdit {
        sigma_scale: 0.5,
        ..LightEdit::default()
    }));
    group.bench_function("edit_256x256_n160", |b| {
        b.iter(|| edit(black_box(&basis), black_box(&env), &req).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
