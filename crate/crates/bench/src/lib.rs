//! Shared fixtures for the benchmarks.

use provconf_core::{generate, replicate_rng, Family, FitConfig, ProviderSummary, SimScenario};

/// A no-outlier Poisson dataset with `n_providers` providers.
pub fn dataset(n_providers: usize) -> Vec<ProviderSummary> {
    let s = SimScenario { n_providers, ..SimScenario::default() };
    generate(&s, &mut replicate_rng(s.seed, 0)).expect("default scenario generates").providers
}

pub fn family() -> Family {
    Family::poisson()
}

pub fn config() -> FitConfig {
    FitConfig::default()
}
