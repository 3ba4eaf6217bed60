//! Experiment sweeps: every (policy, capacity, seed) combination of a config
//! is simulated and the results are written as CSV files.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{ContentLibrary, LibraryConfig};
use crate::csm::PolicyKind;
use crate::error::{Error, Result};
use crate::simnet::{self, MetricsLog, SimParams, Topology};

const DESK_CONFIG: &str = include_str!("../configs/desk.toml");
const DESK_TOPOLOGY: &str = include_str!("../configs/topologies/desk.toml");
const FULL_CONFIG: &str = include_str!("../configs/full_scale.toml");
const FULL_TOPOLOGY: &str = include_str!("../configs/topologies/full_scale.toml");

pub const CSV_FILES: [&str; 6] = [
    "cache_hit.csv",
    "goodput.csv",
    "representations.csv",
    "load_reduction.csv",
    "runs.csv",
    "summary.csv",
];

/// Content store size: an absolute packet count or a percentage of the
/// library's packets, written `"1.5%"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapacityRepr", into = "CapacityRepr")]
pub enum Capacity {
    Packets(usize),
    Percent(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CapacityRepr {
    Packets(usize),
    Text(String),
}

impl TryFrom<CapacityRepr> for Capacity {
    type Error = Error;

    fn try_from(r: CapacityRepr) -> Result<Self> {
        match r {
            CapacityRepr::Packets(n) => Ok(Capacity::Packets(n)),
            CapacityRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Capacity> for CapacityRepr {
    fn from(c: Capacity) -> Self {
        match c {
            Capacity::Packets(n) => CapacityRepr::Packets(n),
            Capacity::Percent(_) => CapacityRepr::Text(c.to_string()),
        }
    }
}

impl Capacity {
    /// Packet count for a library of `total_packets`.
    pub fn resolve(&self, total_packets: u64) -> usize {
        match *self {
            Capacity::Packets(n) => n,
            Capacity::Percent(p) => (p / 100.0 * total_packets as f64).floor() as usize,
        }
    }
}

impl FromStr for Capacity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("invalid capacity {s:?}"));
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::config(format!("capacity percentage {p} outside [0, 100]")));
            }
            Ok(Capacity::Percent(p))
        } else {
            s.parse().map(Capacity::Packets).map_err(|_| bad())
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Packets(n) => write!(f, "{n}"),
            Capacity::Percent(p) => write!(f, "{p}%"),
        }
    }
}

/// Seeds to sweep: a count `n` meaning `0..n`, or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

impl FromStr for Seeds {
    type Err = Error;

    /// `"5"` is a count; `"3,7"` or `"4,"` is a list.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("invalid seeds {s:?}"));
        if s.contains(',') {
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(Seeds::List)
        } else {
            s.trim().parse().map(Seeds::Count).map_err(|_| bad())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Topology file, relative to the config file's directory.
    pub topology: PathBuf,
    pub library: LibraryConfig,
    #[serde(default)]
    pub sim: SimParams,
    pub policies: Vec<PolicyKind>,
    pub capacities: Vec<Capacity>,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::config("at least one policy is required"));
        }
        if self.capacities.is_empty() {
            return Err(Error::config("at least one capacity is required"));
        }
        let seeds = self.seeds.to_vec();
        if seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        for (what, dup) in [
            ("policy", has_duplicates(self.policies.iter().map(|p| p.as_str().to_owned()))),
            ("capacity", has_duplicates(self.capacities.iter().map(|c| c.to_string()))),
            ("seed", has_duplicates(seeds.iter().map(|s| s.to_string()))),
        ] {
            if let Some(d) = dup {
                return Err(Error::config(format!("duplicate {what} {d}")));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir must not be empty"));
        }
        self.sim.validate()
    }
}

fn has_duplicates(items: impl Iterator<Item = String>) -> Option<String> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().find(|x| !seen.insert(x.clone()))
}

/// A validated config with its topology and library loaded.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub topology: Topology,
    pub library: Arc<ContentLibrary>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, topology: Topology) -> Result<Self> {
        config.validate()?;
        let library = Arc::new(ContentLibrary::new(config.library.clone())?);
        Ok(Experiment { config, topology, library })
    }

    /// Loads a config file and the topology file it names.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|source| Error::Parse { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let topology = Topology::load(&base.join(&config.topology))?;
        Experiment::new(config, topology)
    }

    /// The built-in desk-scale experiment.
    pub fn desk() -> Result<Self> {
        Experiment::new(ExperimentConfig::from_toml_str(DESK_CONFIG)?, Topology::from_toml_str(DESK_TOPOLOGY)?)
    }

    /// The built-in full-scale experiment.
    pub fn full_scale() -> Result<Self> {
        Experiment::new(ExperimentConfig::from_toml_str(FULL_CONFIG)?, Topology::from_toml_str(FULL_TOPOLOGY)?)
    }

    /// Swaps in the full-scale topology and library, keeping the sweep.
    pub fn with_full_scale(self) -> Result<Self> {
        let full = Experiment::full_scale()?;
        let mut config = self.config;
        config.topology = full.config.topology;
        config.library = full.config.library;
        Experiment::new(config, full.topology)
    }

    pub fn capacity_packets(&self, c: Capacity) -> usize {
        c.resolve(self.library.total_packets())
    }

    /// Runs every combination in policy, capacity, seed order.
    pub fn run(&self) -> Result<Vec<RunResult>> {
        self.run_with(|_| {})
    }

    /// Like [`Experiment::run`], calling `progress` after each finished run.
    pub fn run_with(&self, mut progress: impl FnMut(&RunResult)) -> Result<Vec<RunResult>> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for &policy in &cfg.policies {
            for &cap in &cfg.capacities {
                let capacity = self.capacity_packets(cap);
                for seed in cfg.seeds.to_vec() {
                    let log = simnet::run(&self.topology, self.library.clone(), policy, capacity, &cfg.sim, seed)?;
                    let r = RunResult::new(policy, cap, capacity, seed, log)?;
                    progress(&r);
                    out.push(r);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub capacity: Capacity,
    pub capacity_packets: usize,
    pub seed: u64,
    pub log: MetricsLog,
}

impl RunResult {
    /// Rejects runs in which some completed segment was not verified.
    pub fn new(policy: PolicyKind, capacity: Capacity, capacity_packets: usize, seed: u64, log: MetricsLog) -> Result<Self> {
        if log.verified_segments != log.segments_completed() {
            return Err(Error::DecodeMismatch(format!(
                "{policy} seed {seed}: {} of {} segments verified",
                log.verified_segments,
                log.segments_completed()
            )));
        }
        Ok(RunResult { policy, capacity, capacity_packets, seed, log })
    }

    /// Headline numbers; `None` when any of them is undefined.
    pub fn summary(&self) -> Option<RunSummary> {
        Some(RunSummary {
            hit_rate: self.log.mean_hit_rate()?,
            load_reduction: self.log.load_reduction()?,
            goodput_bps: self.log.mean_goodput_bps()?,
            shares: self.log.representation_shares(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub hit_rate: f64,
    pub load_reduction: f64,
    pub goodput_bps: f64,
    pub shares: Vec<f64>,
}

/// Seed-averaged summaries per (policy, capacity), in first-run order.
pub fn aggregate(results: &[RunResult]) -> Vec<(PolicyKind, usize, usize, RunSummary)> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<RunSummary>> = BTreeMap::new();
    for r in results {
        let key = (r.policy as usize, r.capacity_packets);
        if !groups.contains_key(&key) {
            order.push((r.policy, r.capacity_packets));
        }
        let g = groups.entry(key).or_default();
        if let Some(s) = r.summary() {
            g.push(s);
        }
    }
    order
        .into_iter()
        .filter_map(|(policy, cap)| {
            let g = &groups[&(policy as usize, cap)];
            let n = g.len();
            (n > 0).then(|| {
                let avg = |f: &dyn Fn(&RunSummary) -> f64| g.iter().map(f).sum::<f64>() / n as f64;
                let shares = (0..g[0].shares.len()).map(|i| avg(&|s| s.shares[i])).collect();
                let summary = RunSummary {
                    hit_rate: avg(&|s| s.hit_rate),
                    load_reduction: avg(&|s| s.load_reduction),
                    goodput_bps: avg(&|s| s.goodput_bps),
                    shares,
                };
                (policy, cap, n, summary)
            })
        })
        .collect()
}

/// Renders all CSV files as `(file name, contents)` pairs.
pub fn render_csv(results: &[RunResult]) -> Vec<(&'static str, String)> {
    let reps: Vec<String> = results.first().map(|r| r.log.representations.clone()).unwrap_or_default();
    let mut hit = String::from("policy,capacity,seed,router,rate\n");
    let mut goodput = String::from("policy,capacity,seed,client,bits_per_s\n");
    let mut shares = String::from("policy,capacity,seed,rep,segment_share\n");
    let mut load = String::from("policy,capacity,seed,value\n");
    let share_cols: String = reps.iter().map(|r| format!(",share_{r}")).collect();
    let mut runs = format!("policy,capacity,seed,hit_rate,load_reduction,goodput_bps{share_cols},segments,verified_segments,end_s\n");
    let mut summary = format!("policy,capacity,seeds,hit_rate,load_reduction,goodput_bps{share_cols}\n");

    for r in results {
        let key = format!("{},{},{}", r.policy, r.capacity_packets, r.seed);
        for router in &r.log.routers {
            if let Some(rate) = router.hits.overall() {
                writeln!(hit, "{key},{},{rate:.6}", router.name).unwrap();
            }
        }
        for c in &r.log.clients {
            if let Some(g) = c.goodput_bps {
                writeln!(goodput, "{key},{},{g:.6}", c.name).unwrap();
            }
        }
        let Some(s) = r.summary() else {
            continue;
        };
        for (name, share) in reps.iter().zip(&s.shares) {
            writeln!(shares, "{key},{name},{share:.6}").unwrap();
        }
        writeln!(load, "{key},{:.6}", s.load_reduction).unwrap();
        writeln!(
            runs,
            "{key},{:.6},{:.6},{:.6}{},{},{},{:.6}",
            s.hit_rate,
            s.load_reduction,
            s.goodput_bps,
            share_fields(&s.shares),
            r.log.segments_completed(),
            r.log.verified_segments,
            r.log.end_time.as_secs_f64()
        )
        .unwrap();
    }
    for (policy, cap, n, s) in aggregate(results) {
        writeln!(
            summary,
            "{policy},{cap},{n},{:.6},{:.6},{:.6}{}",
            s.hit_rate,
            s.load_reduction,
            s.goodput_bps,
            share_fields(&s.shares)
        )
        .unwrap();
    }
    vec![
        (CSV_FILES[0], hit),
        (CSV_FILES[1], goodput),
        (CSV_FILES[2], shares),
        (CSV_FILES[3], load),
        (CSV_FILES[4], runs),
        (CSV_FILES[5], summary),
    ]
}

fn share_fields(shares: &[f64]) -> String {
    shares.iter().map(|x| format!(",{x:.6}")).collect()
}

/// Writes the CSV files into `dir`, creating it if needed.
pub fn emit_csv(results: &[RunResult], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::config("no completed runs to write"));
    }
    let files = render_csv(results);
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| Error::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the experiment and writes its CSV files to `config.output_dir`.
/// Nothing is written unless every run succeeds.
pub fn run_experiment(exp: &Experiment) -> Result<Vec<RunResult>> {
    let results = exp.run()?;
    emit_csv(&results, &exp.config.output_dir)?;
    Ok(results)
}
