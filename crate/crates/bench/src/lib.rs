//! Fixtures shared by the benchmarks in `benches/`.

use pdkl::kernel_fit::canonical_offsets;
use pdkl::{Dimension, Layout, MaterialPhase, MicroModulus, MicroStructureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bar(n_cells: usize) -> MicroStructureSpec {
    spec(Layout::Bar1dQuarterHalfQuarter, n_cells)
}

pub fn plate(n_cells: usize) -> MicroStructureSpec {
    spec(Layout::Plate2dCenterSquareInclusion, n_cells)
}

fn spec(layout: Layout, n_cells: usize) -> MicroStructureSpec {
    MicroStructureSpec::new(
        layout,
        1.0,
        n_cells,
        MaterialPhase::new(200e9, 8000.0),
        MaterialPhase::new(5e9, 8000.0),
    )
    .expect("valid fixture")
}

/// Nearest-neighbour dominated kernel with decaying sign-mixed tail.
pub fn kernel(dimension: Dimension, horizon_cells: usize, cell_length: f64) -> MicroModulus {
    let values = canonical_offsets(dimension, horizon_cells)
        .into_iter()
        .map(|(i, j)| {
            let r2 = (i * i + j * j) as f64;
            if r2 == 1.0 {
                3e13
            } else {
                -3e12 * (-1f64).powi(i as i32 + j as i32) / r2
            }
        })
        .collect();
    MicroModulus::new(dimension, horizon_cells, cell_length, values).expect("valid fixture")
}

pub fn random_field(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1e-3..1e-3)).collect()
}
