use std::sync::Arc;

use kramers::fp_solver::{Field, Grid};
use kramers::particles::{empirical_distance, simulate, w1_distance, ParticleConfig, ParticleInit};
use kramers::EpsilonContext;

#[test]
fn histograms_count_every_particle() {
    let ctx = EpsilonContext::default_for(0.2).unwrap();
    let mut cfg = ParticleConfig::new(3001, 0.2, 1e-3, 5);
    cfg.snapshots = vec![0.05, 0.1];
    let run = simulate(&ctx, &ParticleInit::Point(0.3), &cfg).unwrap();
    assert_eq!(run.snapshots.len(), 3);
    assert!(run.snapshots.iter().all(|h| h.total() == 3001));
    assert!(run.positions.iter().all(|x| x.abs() <= 1.0));
}

#[test]
fn long_runs_equilibrate() {
    let ctx = EpsilonContext::default_for(0.3).unwrap();
    let grid = Arc::new(Grid::xi_space(&ctx, 801).unwrap());
    let gamma = Field::constant(grid, 1.0).unwrap();
    let runs: Vec<_> = (0..4)
        .map(|seed| {
            let cfg = ParticleConfig::new(20_000, 3.0 / ctx.k(), 5e-4, 100 + seed);
            simulate(&ctx, &ParticleInit::Point(-0.2), &cfg).unwrap().snapshots.pop().unwrap()
        })
        .collect();
    let to_gamma = runs.iter().map(|h| empirical_distance(h, &gamma).unwrap()).sum::<f64>() / 4.0;
    // two independent samples sit √2 Monte-Carlo floors apart
    let mut spread = 0.0;
    let mut pairs = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            spread += w1_distance(&runs[i].cdf(), &runs[j].cdf()).unwrap();
            pairs += 1.0;
        }
    }
    let floor = spread / pairs / std::f64::consts::SQRT_2;
    assert!(to_gamma <= 3.0 * floor, "W1 {to_gamma:e} vs floor {floor:e}");
}
