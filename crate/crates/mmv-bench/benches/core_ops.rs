use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use mmv_core::densities::{logpdf_marginal, logpdf_wishart_companion};
use mmv_core::estimation::{fit_beta2, Beta2Model, FitConfig};
use mmv_core::samplers::{sample_family, sample_family_seq, RngStream};
use mmv_core::transforms::{t_to_r, CompanionFamily, Companions};
use mmv_core::{ExtendedShape, Family, KernelSpec, MatrixBlock, SpdMatrix};
use nalgebra::DMatrix;

fn random_spd(m: usize, seed: u64) -> SpdMatrix {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = DMatrix::from_fn(m, m, |_, _| next() * 2.0);
    SpdMatrix::new(a.transpose() * &a + DMatrix::identity(m, m) * 0.5).unwrap()
}

fn bench_matrix_core(c: &mut Criterion) {
    let s = random_spd(30, 7);
    c.bench_function("sym_sqrt_30x30", |b| b.iter(|| black_box(s.sym_sqrt())));
    c.bench_function("logdet_30x30", |b| {
        b.iter(|| black_box(s.logdet().unwrap()))
    });
}

fn bench_transforms(c: &mut Criterion) {
    let t = MatrixBlock::new(DMatrix::from_fn(22, 3, |i, j| {
        ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5
    }))
    .unwrap();
    c.bench_function("t_to_r_22x3", |b| b.iter(|| black_box(t_to_r(&t).unwrap())));
}

fn bench_densities(c: &mut Criterion) {
    let k = 30;
    let shape = ExtendedShape::with_anchor(3, 11.0, vec![1.7; k]).unwrap();
    let fs: Vec<SpdMatrix> = (0..k).map(|i| random_spd(3, 100 + i as u64)).collect();
    let comp = Companions::Beta2(fs);
    c.bench_function("beta2_marginal_m3_k30", |b| {
        b.iter(|| black_box(logpdf_marginal(&comp, &shape).unwrap()))
    });

    let joint_shape = ExtendedShape::from_block_rows(3, &[5, 4], true).unwrap();
    let kernel = KernelSpec::gaussian(joint_shape.kernel_dim()).unwrap();
    let anchor = random_spd(3, 5);
    let joint_comp = Companions::Beta2(vec![random_spd(3, 6)]);
    c.bench_function("wishart_beta2_joint_m3", |b| {
        b.iter(|| {
            black_box(
                logpdf_wishart_companion(&anchor, &joint_comp, &joint_shape, &kernel).unwrap(),
            )
        })
    });
}

fn bench_samplers(c: &mut Criterion) {
    let shape = ExtendedShape::from_block_rows(2, &[5, 4], true).unwrap();
    let kernel = KernelSpec::gaussian(shape.kernel_dim()).unwrap();
    let fam = Family::Marginal(CompanionFamily::Beta2);
    c.bench_function("sample_beta2_m2_1k_seq", |b| {
        b.iter(|| {
            black_box(sample_family_seq(fam, &shape, &kernel, 1000, RngStream::new(1, 0)).unwrap())
        })
    });
    c.bench_function("sample_beta2_m2_1k_par", |b| {
        b.iter(|| {
            black_box(sample_family(fam, &shape, &kernel, 1000, RngStream::new(1, 0)).unwrap())
        })
    });
}

fn bench_fit(c: &mut Criterion) {
    let shape = ExtendedShape::from_block_rows(2, &[6, 4], true).unwrap();
    let kernel = KernelSpec::gaussian(shape.kernel_dim()).unwrap();
    let draws = sample_family(
        Family::Marginal(CompanionFamily::Beta2),
        &shape,
        &kernel,
        200,
        RngStream::new(2, 0),
    )
    .unwrap();
    let data: Vec<SpdMatrix> = draws
        .iter()
        .map(|d| SpdMatrix::new(d.items[0].clone()).unwrap())
        .collect();
    c.bench_function("fit_independent_m2_k200", |b| {
        b.iter_batched(
            || data.clone(),
            |d| black_box(fit_beta2(&d, &FitConfig::new(Beta2Model::Independent)).unwrap()),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    benches,
    bench_matrix_core,
    bench_transforms,
    bench_densities,
    bench_samplers,
    bench_fit
);
criterion_main!(benches);
