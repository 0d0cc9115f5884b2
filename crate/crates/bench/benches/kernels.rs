use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use pdkl::coarse_grain::{cell_average, split};
use pdkl::fem::{assemble, build_mesh, explicit_dynamics, BoundaryConditions, DynamicsOptions};
use pdkl::kernel_fit::{build_system_2d, certify_positive_definite, inverse_rms_weights, solve};
use pdkl::{BoundaryDrive, CellGrid, Dimension, DriveComponent, PdModel, SolveMode};
use pdkl_bench::{kernel, plate, random_field};

fn fem_steps(c: &mut Criterion) {
    let spec = plate(10);
    let mesh = build_mesh(&spec, 6).unwrap();
    let sys = assemble(&mesh);
    let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
    let drive = BoundaryDrive::polynomial_pulse(1e-3, 7.85e-5);
    let options = DynamicsOptions::new(1e-5, 1e-6);
    c.bench_function("fem/plate_10x10_cells_10us", |b| {
        b.iter(|| explicit_dynamics(&sys, &bcs, &drive, black_box(&options)).unwrap())
    });
}

fn pd_operator(c: &mut Criterion) {
    let grid = CellGrid::new(Dimension::Two, 30);
    let model = PdModel::new(kernel(Dimension::Two, 6, 1.0 / 30.0), 8000.0, grid).unwrap();
    let u = random_field(1, grid.n_cells() * 2);
    c.bench_function("pd/apply_operator_30x30_m6", |b| {
        b.iter(|| model.apply_operator(black_box(&u)).unwrap())
    });
    let small = PdModel::new(
        kernel(Dimension::Two, 4, 1.0 / 16.0),
        8000.0,
        CellGrid::new(Dimension::Two, 16),
    )
    .unwrap();
    c.bench_function("pd/certify_16x16_m4", |b| {
        b.iter(|| certify_positive_definite(black_box(&small.kernel), 16).unwrap())
    });
}

fn regression(c: &mut Criterion) {
    let spec = plate(10);
    let mesh = build_mesh(&spec, 3).unwrap();
    let sys = assemble(&mesh);
    let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
    let state = explicit_dynamics(
        &sys,
        &bcs,
        &BoundaryDrive::polynomial_pulse(1e-3, 7.85e-5),
        &DynamicsOptions::new(2e-4, 2e-6),
    )
    .unwrap();
    let series = cell_average(&state, &mesh, &spec).unwrap();
    let train = split(&series, 1e-4).unwrap().train;
    let weights = inverse_rms_weights(&train, 2).unwrap();
    c.bench_function("fit/build_system_2d_m2", |b| {
        b.iter(|| build_system_2d(black_box(&train), 2, weights, Default::default()).unwrap())
    });
    let system = build_system_2d(&train, 2, weights, Default::default()).unwrap();
    c.bench_function("fit/solve_unconstrained_2d_m2", |b| {
        b.iter_batched(
            || system.clone(),
            |s| solve(&s, SolveMode::Unconstrained).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, fem_steps, pd_operator, regression);
criterion_main!(benches);
