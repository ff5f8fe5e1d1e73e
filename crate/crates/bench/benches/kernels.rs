use std::hint::black_box;

use carsrecon::eigen;
use carsrecon::inversion::{invert_peak, peak_layout, recover_correlations, windowed_ft};
use carsrecon::potentials::Preset;
use carsrecon::propagator::{PropagationSpec, Propagator};
use carsrecon::signs::{resolve, ScoreConfig, Scorer, SearchStrategy, SignVector};
use carsrecon::synth::{exact_correlations, synth_closure, DelayAxis, Lattice, PulseConfig, SynthOptions};
use carsrecon::units::{fs_to_au, LI2_REDUCED_MASS};
use carsrecon::Grid;
use criterion::{criterion_group, criterion_main, Criterion};

fn grid() -> Grid {
    Grid::new(2.0, 12.0, 256).unwrap()
}

fn eigensolve(c: &mut Criterion) {
    let g = grid();
    let x = Preset::X.model();
    c.bench_function("fgh_solve_256", |b| {
        b.iter(|| eigen::solve(&g, black_box(&x), LI2_REDUCED_MASS, 25).unwrap())
    });
}

fn split_step(c: &mut Criterion) {
    let g = grid();
    let ground = eigen::solve(&g, &Preset::X.model(), LI2_REDUCED_MASS, 1).unwrap();
    let spec = PropagationSpec::new(
        Preset::A.model().sample_on_grid(&g).unwrap(),
        LI2_REDUCED_MASS,
        fs_to_au(0.1),
    );
    let mut prop = Propagator::new(&g, &spec).unwrap();
    let mut psi = ground.field(0).into_values();
    c.bench_function("split_step_x100", |b| b.iter(|| prop.advance(black_box(&mut psi), 100)));
}

fn inversion(c: &mut Criterion) {
    let g = grid();
    let basis = eigen::solve(&g, &Preset::X.model(), LI2_REDUCED_MASS, 25).unwrap();
    let lattice = Lattice {
        t: DelayAxis::from_range(0.0, 20.0, 0.2).unwrap(),
        tau32: DelayAxis::from_range(3.0, 1500.0, 1.0).unwrap(),
    };
    let corr = exact_correlations(&basis, &Preset::A.model(), &lattice.t, &SynthOptions::default()).unwrap();
    let cube = synth_closure(&basis, &corr, &PulseConfig::standard(basis.omega0()), &lattice).unwrap();
    let omegas = peak_layout(&basis.shifted(), 10, 25).unwrap();
    c.bench_function("windowed_ft_101x1498", |b| {
        b.iter(|| windowed_ft(black_box(&cube), &omegas).unwrap())
    });
    let slice = windowed_ft(&cube, &omegas).unwrap();
    c.bench_function("invert_peak_25", |b| {
        b.iter(|| invert_peak(black_box(&slice), &basis, 10).unwrap())
    });
    c.bench_function("recover_correlations_25", |b| {
        b.iter(|| recover_correlations(black_box(&cube), &basis, 25).unwrap())
    });
}

fn sign_search(c: &mut Criterion) {
    let g = grid();
    let basis = eigen::solve(&g, &Preset::X.model(), LI2_REDUCED_MASS, 25).unwrap();
    let t = DelayAxis::from_range(0.0, 80.0, 0.2).unwrap();
    let corr = exact_correlations(&basis, &Preset::A.model(), &t, &SynthOptions::default()).unwrap();
    let cfg = ScoreConfig {
        backprop: None,
        ..ScoreConfig::li2(LI2_REDUCED_MASS)
    };
    let scorer = Scorer::new(&basis, &corr, cfg.clone()).unwrap();
    let signs = SignVector::all_positive(25);
    c.bench_function("variance_score", |b| {
        b.iter(|| scorer.variance(black_box(&signs)).unwrap())
    });
    let mut group = c.benchmark_group("resolve");
    group.sample_size(10);
    group.bench_function("beam64_variance_only", |b| {
        b.iter(|| resolve(&basis, black_box(&corr), SearchStrategy::Beam(64), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, eigensolve, split_step, inversion, sign_search);
criterion_main!(benches);
