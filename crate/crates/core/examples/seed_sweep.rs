//! Oracle accuracy, per-set cross-validated accuracy and the missing-outcome
//! variant for a run of synthetic cohort seeds.
//!
//! `cargo run --release --example seed_sweep -- [first_seed] [count] [n]`

use inrclass::crossval::Execution;
use inrclass::experiments::{ablation, missing_class_run};
use inrclass::synth::{generate_patients, oracle_accuracy, CohortSpec, LatentResponseModel};
use inrclass::{FeatureSet, TherapeuticRange};

fn arg<T: std::str::FromStr>(index: usize, default: T) -> T {
    std::env::args()
        .nth(index)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let first: u64 = arg(1, 0);
    let count: u64 = arg(2, 10);
    let n: usize = arg(3, 300);
    let range = TherapeuticRange::default();
    let latent = LatentResponseModel::default();
    println!("seed  oracle   set1   set2   set3   set4   set5  variant");
    for seed in first..first + count {
        let spec = CohortSpec {
            n,
            seed,
            ..CohortSpec::default()
        };
        let patients = generate_patients(&spec, &latent)?;
        let raw: Vec<_> = patients.iter().map(|p| p.observed.clone()).collect();
        let oracle = oracle_accuracy(&latent, &patients, &range)?;
        let result = ablation(&raw, &range, 10, seed, Execution::Parallel)?;
        let variant = missing_class_run(&raw, &range, 10, seed, Execution::Parallel)?;
        let sets: Vec<String> = FeatureSet::ALL
            .iter()
            .map(|&s| format!("{:.3}", result.accuracy(s)))
            .collect();
        println!(
            "{seed:>4}  {oracle:.3}  {}  {:.3}",
            sets.join("  "),
            variant.average_accuracy
        );
    }
    Ok(())
}
