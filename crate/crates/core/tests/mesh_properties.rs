use obstacle_core::mesh::{divergence, gradient, inner_product, norm_l1, norm_lp, FaceField, Grid, GridFunction};
use proptest::prelude::*;

fn grid_and_fields() -> impl Strategy<Value = (Grid, Vec<f64>, Vec<f64>)> {
    (2usize..40, 0.1f64..10.0).prop_flat_map(|(n, l)| {
        let grid = Grid::new(l, n).unwrap();
        (
            Just(grid),
            prop::collection::vec(-100.0f64..100.0, grid.n_faces()),
            prop::collection::vec(-100.0f64..100.0, grid.n_nodes()),
        )
    })
}

proptest! {
    #[test]
    fn summation_by_parts((grid, q, v) in grid_and_fields()) {
        let q = FaceField::new(grid, q).unwrap();
        let v = GridFunction::new(grid, v).unwrap();
        let lhs = inner_product(&divergence(&q), &v).unwrap();
        let rhs = -q.dot(&gradient(&v)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()));
    }

    #[test]
    fn gradient_matches_difference_quotient((grid, _q, v) in grid_and_fields()) {
        let u = GridFunction::new(grid, v.clone()).unwrap();
        let g = gradient(&u);
        let mut padded = vec![0.0];
        padded.extend(&v);
        padded.push(0.0);
        for (j, gj) in g.values().iter().enumerate() {
            let expect = (padded[j + 1] - padded[j]) / grid.dx();
            prop_assert!((gj - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn norms_are_ordered((grid, _q, v) in grid_and_fields()) {
        // On (0, L): ‖u‖₁ ≤ L^{1/2} ‖u‖₂ ≤ L ‖u‖_∞.
        let u = GridFunction::new(grid, v).unwrap();
        let l = grid.length();
        let n1 = norm_l1(&u);
        let n2 = norm_lp(&u, 2.0).unwrap();
        let ninf = norm_lp(&u, f64::INFINITY).unwrap();
        prop_assert!(n1 <= l.sqrt() * n2 * (1.0 + 1e-12) + 1e-12);
        prop_assert!(n2 <= l.sqrt() * ninf * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn discrete_laplacian_of_sine_is_its_symbol() {
    // div ∇ sin(kπx) = −(4/dx²) sin²(kπdx/2) sin(kπx) exactly on the grid.
    let grid = Grid::new(1.0, 50).unwrap();
    let k = 3.0 * std::f64::consts::PI;
    let u = GridFunction::from_fn(grid, |x| (k * x).sin());
    let lap = divergence(&gradient(&u));
    let dx = grid.dx();
    let symbol = -4.0 / (dx * dx) * (k * dx / 2.0).sin().powi(2);
    for (a, b) in lap.values().iter().zip(u.values()) {
        assert!((a - symbol * b).abs() < 1e-9, "{a} vs {}", symbol * b);
    }
}
