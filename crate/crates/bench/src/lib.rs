//! Shared fixtures for the pipeline benchmarks.

use tptest_core::{compose, models, ComposedSystem};

/// Controller composed with each bundled environment, by name.
pub fn systems() -> Vec<(&'static str, ComposedSystem)> {
    let sut = models::controller();
    vec![
        ("user0", compose(&sut, &models::user(0)).expect("bundled models compose")),
        ("user2", compose(&sut, &models::user(2)).expect("bundled models compose")),
        ("pausing", compose(&sut, &models::pausing_user()).expect("bundled models compose")),
        ("tp2_env", compose(&sut, &models::tp2_env(0)).expect("bundled models compose")),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_compose() {
        assert_eq!(super::systems().len(), 4);
    }
}
