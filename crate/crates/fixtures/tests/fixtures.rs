use axe_core::bridge::{load_manifest_file, load_program};
use axe_fixtures::{all, fixtures_dir, random::random_bridge};

#[test]
fn committed_fixtures_are_current() {
    let root = fixtures_dir();
    for f in all() {
        for (file, text) in f.files() {
            let path = root.join(&f.name).join(&file);
            let on_disk = std::fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("{}: {e}; run gen-fixtures", path.display()));
            assert_eq!(on_disk, text, "{} is stale; run gen-fixtures", path.display());
        }
    }
}

#[test]
fn every_fixture_loads() {
    let dir = tempfile::tempdir().unwrap();
    for f in all() {
        let m = f.write(dir.path()).unwrap();
        let p = load_program(load_manifest_file(&m).unwrap()).unwrap();
        assert_eq!(p.programs.len(), f.source.len() + f.destination.len(), "{}", f.name);
    }
}

#[test]
fn random_bridges_are_reproducible() {
    for seed in 0..5 {
        assert_eq!(random_bridge(seed).files(), random_bridge(seed).files());
    }
    assert_ne!(random_bridge(1).files(), random_bridge(2).files());
}

#[test]
fn random_bridges_load() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let m = random_bridge(seed).write(dir.path()).unwrap();
        load_program(load_manifest_file(&m).unwrap()).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}
