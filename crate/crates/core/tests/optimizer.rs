use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wcshape::optimize::{optimize, optimize_with_observer, volume, DesignProblem};
use wcshape::{FemSpace, OptimizationConfig, OptimizerKind, ScalarField, Source, StateConfig, StructuredMesh};

fn problem(n: usize, delta: f64) -> DesignProblem {
    let space = FemSpace::new(StructuredMesh::unit_square(n).unwrap());
    let f = Source::reference_piecewise().interpolate(space.mesh()).unwrap();
    DesignProblem::new(space, f, delta, 2.0, StateConfig::default()).unwrap()
}

#[test]
fn full_volume_keeps_the_whole_domain() {
    let pb = problem(12, 0.25);
    let cfg = OptimizationConfig {
        volume_fraction: 1.0,
        max_outer_iter: 50,
        ..OptimizationConfig::default()
    };
    let result = optimize(&pb, &cfg).unwrap();
    let n = pb.space.node_count();
    let full = pb
        .space
        .paper_objective(&ScalarField::zeros(n), &pb.source, 0.25, &StateConfig::default())
        .unwrap();
    assert!(result.potential.max() < 1e-6, "max V = {}", result.potential.max());
    assert!((result.objective() - full).abs() <= 1e-6 * full.abs());
}

#[test]
fn optimum_beats_every_sampled_perturbation() {
    let delta = 0.25;
    let pb = problem(16, delta);
    let cfg = OptimizationConfig {
        max_outer_iter: 60,
        ..OptimizationConfig::default()
    };
    let result = optimize(&pb, &cfg).unwrap();
    let v = &result.potential;
    assert!(volume(&pb.space, v, cfg.alpha) <= cfg.volume_fraction + 1e-6);
    let worst = result.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let g = pb.space.random_perturbation(&mut rng, delta, 2.0);
        let e = pb.space.dirichlet_energy(v, &pb.source.zip_map(&g, |a, b| a + b)).unwrap();
        // −∫(f+g)u_{f+g} = 2E(V, f+g) never exceeds the worst case F.
        assert!(2.0 * e <= worst + 1e-6);
    }
}

#[test]
fn history_rows_and_bounds() {
    for kind in [OptimizerKind::Mma, OptimizerKind::ProjectedGradient] {
        let pb = problem(10, 0.0);
        let cfg = OptimizationConfig {
            max_outer_iter: 25,
            kind,
            ..OptimizationConfig::default()
        };
        let mut rows = Vec::new();
        let result = optimize_with_observer(&pb, &cfg, |r| rows.push(*r)).unwrap();
        assert_eq!(rows.len(), result.iterations + 1);
        assert_eq!(result.objective_history.len(), rows.len());
        assert!(result.potential.iter().all(|&x| (0.0..=cfg.upper_bound).contains(&x)));
        assert!(rows.iter().all(|r| r.volume <= cfg.volume_fraction + 1e-6));
        assert!(result.constraint() <= 1e-6);
    }
}
