use std::time::Instant;

use plx_core::benchgen::{generate_benchmark, seed_graph, GeneratorConfig, SeedSpec};
use plx_core::clones::{detect_clones, DetectionConfig};
use plx_core::platform::{integrate_all, IntegrationOrder};

#[test]
#[ignore]
fn probe() {
    let seed = seed_graph(&SeedSpec {
        classes: 25,
        methods_per_class: 11,
        statements_per_method: 6,
    })
    .unwrap();
    println!("seed nodes: {}", seed.node_count());
    let config = GeneratorConfig {
        variant_count: 20,
        variant_mutation_rate: 0.2,
        rng_seed: 9,
        ..GeneratorConfig::default()
    };
    let bench = generate_benchmark(&seed, &config).unwrap();
    let total: usize = bench.variants.iter().map(|v| v.node_count()).sum();
    println!("total nodes: {total}");
    let det = DetectionConfig::default();
    let t = Instant::now();
    for v in &bench.variants {
        detect_clones(v, &det).unwrap();
    }
    println!("detect: {:.2}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let platform =
        integrate_all(&bench.variants, Default::default(), 0.75, IntegrationOrder::Given).unwrap();
    println!("integrate: {:.2}s", t.elapsed().as_secs_f64());
    println!("platform nodes: {}", platform.root.walk().count());
}
