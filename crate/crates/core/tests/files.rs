//! The instance and config files shipped with the crate.

use std::path::{Path, PathBuf};

use fcvi::harness::load_experiment;
use fcvi::problem::{canonical, instance_to_json, load_instance};
use fcvi::saddle::{cg1, load_saddle, saddle_to_json};

fn dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(name)
}

#[test]
fn instance_files_match_builders() {
    for (file, inst) in [
        ("qc1.json", canonical::qc1()),
        ("qc2.json", canonical::qc2()),
        ("qc1_ns.json", canonical::qc1_nonsmooth()),
    ] {
        let loaded = load_instance(dir("instances").join(file)).unwrap();
        assert_eq!(
            instance_to_json(&loaded).unwrap(),
            instance_to_json(&inst).unwrap(),
            "{file}"
        );
        assert!(loaded.known_solution_residuals().unwrap().max() <= 1e-12);
    }
    let game = load_saddle(dir("instances").join("cg1_saddle.json")).unwrap();
    assert_eq!(saddle_to_json(&game).unwrap(), saddle_to_json(&cg1()).unwrap());
}

#[test]
fn shipped_configs_resolve() {
    let mut count = 0;
    for entry in std::fs::read_dir(dir("configs")).unwrap() {
        let path = entry.unwrap().path();
        let exp = load_experiment(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(exp.config.out.is_some(), "{}", path.display());
        count += 1;
    }
    assert!(count >= 6);
}
