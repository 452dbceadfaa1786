// Separate binary: it sets a process-wide environment variable.

use orbidual::cli::{load_config, SEED_ENV};

#[test]
fn env_seed_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cfg.json");
    std::fs::write(&p, r#"{"spec_version": 1, "scenario": "lu-weinstein-su2", "seed": 4}"#).unwrap();
    assert_eq!(load_config(&p).unwrap().0.seed, 4);
    std::env::set_var(SEED_ENV, "17");
    assert_eq!(load_config(&p).unwrap().0.seed, 17);
    std::env::set_var(SEED_ENV, "not-a-number");
    assert!(load_config(&p).is_err());
    std::env::remove_var(SEED_ENV);
}
