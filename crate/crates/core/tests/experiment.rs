use std::fs;
use std::path::Path;

use popnetcod::csm::PolicyKind;
use popnetcod::experiment::{self, Capacity, Experiment, Seeds};
use popnetcod::Error;

const CONFIG: &str = r#"
topology = "topologies/small.toml"
policies = ["popnetcod", "nocache"]
capacities = [30, "10%"]
seeds = 2
output_dir = "ignored"

[library]
videos = 1
segments = 2
carried_payload_bytes = 8

[[library.representations]]
name = "only"
bitrate_kbps = 1500
packets = 60
generations = 3
"#;

fn setup(dir: &Path) -> std::path::PathBuf {
    let topo_dir = dir.join("topologies");
    fs::create_dir_all(&topo_dir).unwrap();
    let small = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/topologies/small.toml");
    fs::copy(small, topo_dir.join("small.toml")).unwrap();
    let path = dir.join("exp.toml");
    fs::write(&path, CONFIG).unwrap();
    path
}

#[test]
fn topology_path_is_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = Experiment::load(&setup(tmp.path())).unwrap();
    assert_eq!(exp.topology.nodes.len(), 4);
    assert_eq!(exp.config.capacities, [Capacity::Packets(30), Capacity::Percent(10.0)]);
    assert_eq!(exp.capacity_packets(Capacity::Percent(10.0)), 12);
}

#[test]
fn sweep_produces_every_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let mut exp = Experiment::load(&setup(tmp.path())).unwrap();
    exp.config.output_dir = tmp.path().join("out");
    let results = experiment::run_experiment(&exp).unwrap();
    let keys: Vec<(PolicyKind, usize, u64)> = results.iter().map(|r| (r.policy, r.capacity_packets, r.seed)).collect();
    assert_eq!(
        keys,
        [
            (PolicyKind::PopNetCod, 30, 0),
            (PolicyKind::PopNetCod, 30, 1),
            (PolicyKind::PopNetCod, 12, 0),
            (PolicyKind::PopNetCod, 12, 1),
            (PolicyKind::NoCache, 30, 0),
            (PolicyKind::NoCache, 30, 1),
            (PolicyKind::NoCache, 12, 0),
            (PolicyKind::NoCache, 12, 1),
        ]
    );
    for r in &results {
        assert_eq!(r.log.verified_segments, 4);
        assert!(r.log.all_done);
    }
    assert_eq!(experiment::aggregate(&results).len(), 4);
    let summary = fs::read_to_string(tmp.path().join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.lines().nth(1).unwrap().starts_with("popnetcod,30,2,"));
}

#[test]
fn emitting_nothing_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    assert!(matches!(experiment::emit_csv(&[], &out), Err(Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn malformed_config_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "policies = [\"popnetcod\"]\nseeds = \"many\"\n").unwrap();
    let err = Experiment::load(&path).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
    assert!(err.to_string().contains("bad.toml"));
}

#[test]
fn seed_lists_deserialize() {
    let cfg: Seeds = toml::from_str::<toml::Table>("s = [4, 2]").unwrap()["s"].clone().try_into().unwrap();
    assert_eq!(cfg.to_vec(), [4, 2]);
}
