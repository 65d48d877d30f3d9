use std::time::Instant;

use embstab::classify::{self, default_l2_grid, TrainConfig};
use embstab::embed::spectral_embed;
use embstab::graph::{generate_sbm, split_nodes, SbmConfig};

#[test]
fn full_grid_selection_on_a_300_node_sbm() {
    let g = generate_sbm(&SbmConfig { block_sizes: vec![150, 150], p_in: 0.1, p_out: 0.01, seed: 3 }).unwrap();
    let split = split_nodes(&g, (0.7, 0.1, 0.2), 0).unwrap();
    let z = spectral_embed(&g, 128).unwrap();
    let grid = default_l2_grid();
    assert_eq!(grid.len(), 14);

    let started = Instant::now();
    let sel = classify::select_l2(&z, g.labels().unwrap(), 2, &split, &grid, &TrainConfig::default()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    eprintln!("14-point l2 grid, N=300, D=128: {secs:.2}s");
    assert!(secs < 30.0, "{secs:.1}s");
    assert_eq!(sel.val_accuracy.len(), 14);
    let best = sel.val_accuracy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let chosen = grid.iter().position(|&l| l == sel.l2_strength).unwrap();
    assert_eq!(sel.val_accuracy[chosen], best);
}
