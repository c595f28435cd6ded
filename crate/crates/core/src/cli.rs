//! Library side of the `colorcode` command: sweep configuration, the
//! simulate / fit / selfcheck commands and their exit codes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_extraction_round, connectivity_audit, noiseless_round_is_sound, single_fault_audit};
use crate::decoder::{is_logical_failure, Decoder};
use crate::error::Error;
use crate::experiments::{curve_samples, fit_dataset, NoiseModel, Simulator, ThresholdFit, TrialConfig, TrialDataset};
use crate::lattice::{brute_force_distance, build_lattice, validate, DISTANCE_SEARCH_CAP};
use crate::matching::{brute_force_matching_weight, min_weight_perfect_matching_raw, MatchingEdge};
use crate::noise::{syndrome_of, CheckType, ErrorState, Pauli};

pub const SEED_ENV: &str = "COLORCODE_SEED";

/// Failure classes with distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("fit quality below acceptance: {0}")]
    FitQuality(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::FitQuality(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidDistance(_)
            | Error::InvalidProbability(_)
            | Error::InvalidArgument(_)
            | Error::Dataset(_)
            | Error::FitPrecondition(_)
            | Error::Csv(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Sweep configuration; every field can come from a JSON file or a flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: NoiseModel,
    pub distances: Vec<usize>,
    pub p_values: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub p_identity_ratio: f64,
    pub output: PathBuf,
    pub metadata: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: NoiseModel::CodeCapacity,
            distances: vec![9, 11, 13],
            p_values: vec![0.068, 0.072, 0.076, 0.080, 0.084],
            trials: 10_000,
            seed: 0,
            rounds: None,
            p_identity_ratio: 1.0,
            output: PathBuf::from("dataset.csv"),
            metadata: None,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.distances.is_empty() || self.p_values.is_empty() {
            return Err(CliError::Config("at least one distance and one p value are required".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if !(self.p_identity_ratio >= 0.0) {
            return Err(CliError::Config("p_identity_ratio must be non-negative".into()));
        }
        for &d in &self.distances {
            for &p in &self.p_values {
                self.point(d, p).validate()?;
            }
        }
        Ok(())
    }

    pub fn point(&self, d: usize, p: f64) -> TrialConfig {
        TrialConfig {
            rounds: self.rounds,
            p_identity_ratio: self.p_identity_ratio,
            ..TrialConfig::new(self.model, d, p, self.trials, self.seed)
        }
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.metadata.clone().unwrap_or_else(|| self.output.with_extension("meta.json"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub version: String,
    pub wall_time_seconds: f64,
    pub points: usize,
    pub config: RunConfig,
}

fn pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs the sweep, appending one CSV row per `(d, p)` as soon as it is done.
pub fn cmd_simulate(config: &RunConfig) -> CliResult<(TrialDataset, RunMetadata)> {
    config.validate()?;
    let start = Instant::now();
    let file = File::create(&config.output)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", config.output.display())))?;
    let mut wr = csv::Writer::from_writer(BufWriter::new(file));
    let mut records = Vec::new();
    let pool = pool(config.workers)?;
    for &d in &config.distances {
        let sim = Simulator::new(d)?;
        for &p in &config.p_values {
            let rec = pool.install(|| sim.run(&config.point(d, p)))?;
            wr.serialize(&rec).map_err(Error::from)?;
            wr.flush().map_err(Error::from)?;
            records.push(rec);
        }
    }
    let dataset = TrialDataset::new(records)?;
    let meta = RunMetadata {
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        points: dataset.records.len(),
        config: config.clone(),
    };
    let path = config.metadata_path();
    std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(Error::from)?)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok((dataset, meta))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: ThresholdFit,
    pub accepted: bool,
    /// Vertical marker for plots: the reported threshold.
    pub threshold_marker: f64,
    pub fit_json: PathBuf,
    pub curves_csv: PathBuf,
}

/// Fits a CSV dataset and writes `<stem>.fit.json` and `<stem>.curves.csv`
/// into `out_dir`. Returns the report even when the fit quality is too low,
/// together with the matching error.
pub fn cmd_fit(dataset_path: &Path, out_dir: &Path, curve_points: usize) -> (Option<FitReport>, CliResult<()>) {
    let run = || -> CliResult<FitReport> {
        let file = File::open(dataset_path)
            .map_err(|e| CliError::Config(format!("cannot open {}: {e}", dataset_path.display())))?;
        let ds = TrialDataset::read_csv(file)?;
        let fit = fit_dataset(&ds)?;
        let stem = dataset_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::Config(e.to_string()))?;
        let fit_json = out_dir.join(format!("{stem}.fit.json"));
        let curves_csv = out_dir.join(format!("{stem}.curves.csv"));
        let mut distances: Vec<usize> = ds.records.iter().map(|r| r.d).collect();
        distances.sort_unstable();
        distances.dedup();
        let p_lo = ds.records.iter().map(|r| r.p).fold(f64::INFINITY, f64::min);
        let p_hi = ds.records.iter().map(|r| r.p).fold(f64::NEG_INFINITY, f64::max);
        let mut wr = csv::Writer::from_path(&curves_csv).map_err(Error::from)?;
        wr.write_record(["component", "d", "p", "rate"]).map_err(Error::from)?;
        let mut comps = vec![("x", &fit.x)];
        if let Some(z) = &fit.z {
            comps.push(("z", z));
        }
        for (name, f) in comps {
            for (d, p, y) in curve_samples(&f.params, &distances, p_lo, p_hi, curve_points.max(2)) {
                wr.write_record([name.to_string(), d.to_string(), p.to_string(), y.to_string()])
                    .map_err(Error::from)?;
            }
        }
        wr.flush().map_err(Error::from)?;
        let report = FitReport {
            accepted: fit.accepted(),
            threshold_marker: fit.threshold,
            fit,
            fit_json: fit_json.clone(),
            curves_csv,
        };
        let mut w = BufWriter::new(File::create(&fit_json).map_err(Error::from)?);
        serde_json::to_writer_pretty(&mut w, &report).map_err(Error::from)?;
        w.flush().map_err(Error::from)?;
        Ok(report)
    };
    match run() {
        Ok(report) if report.accepted => (Some(report), Ok(())),
        Ok(report) => {
            let f = report.fit.limiting_fit();
            let msg = format!(
                "R^2 = {:.6}, converged = {}, threshold = {:.6}",
                f.r_squared, f.converged, report.fit.threshold
            );
            (Some(report), Err(CliError::FitQuality(msg)))
        }
        Err(e) => (None, Err(e)),
    }
}

/// Test hooks for the self-check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelfcheckHooks {
    /// Perturb matching weights before solving, which breaks optimality.
    pub corrupt_matching: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfcheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub items: Vec<SelfcheckItem>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.items.push(SelfcheckItem {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Random complete graphs checked against exhaustive enumeration; returns
/// the number of mismatches.
pub fn matching_oracle_mismatches(cases: usize, seed: u64, corrupt: bool) -> crate::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let n = 2 * rng.random_range(1..=5);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push(MatchingEdge {
                    a,
                    b,
                    weight: rng.random_range(0..20),
                });
            }
        }
        let solve_edges: Vec<MatchingEdge> = if corrupt {
            edges
                .iter()
                .map(|e| MatchingEdge {
                    weight: if (e.a + e.b) % 3 == 0 { e.weight + 7 } else { e.weight },
                    ..*e
                })
                .collect()
        } else {
            edges.clone()
        };
        let m = min_weight_perfect_matching_raw(n, &solve_edges)?;
        let true_weight: u64 = m
            .pairs
            .iter()
            .map(|&(a, b)| {
                edges
                    .iter()
                    .find(|e| (e.a, e.b) == (a.min(b), a.max(b)))
                    .map(|e| e.weight)
                    .expect("complete graph")
            })
            .sum();
        if Some(true_weight) != brute_force_matching_weight(n, &edges) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Fast invariant suite.
pub fn cmd_selfcheck(hooks: SelfcheckHooks) -> SelfcheckReport {
    let mut report = SelfcheckReport::default();

    let mut lattice_fail = Vec::new();
    for d in (3..=15).step_by(2) {
        match build_lattice(d) {
            Ok(lat) => {
                let v = validate(&lat);
                if !v.all_passed() {
                    lattice_fail.push(format!("d={d}: {:?}", v.failures()));
                }
            }
            Err(e) => lattice_fail.push(format!("d={d}: {e}")),
        }
    }
    report.push("lattice_validation", lattice_fail.is_empty(), lattice_fail.join("; "));

    let mut dist = Vec::new();
    for d in [3, 5] {
        let got = build_lattice(d).and_then(|l| brute_force_distance(&l, DISTANCE_SEARCH_CAP));
        dist.push((d, got.ok()));
    }
    report.push(
        "brute_force_distance",
        dist.iter().all(|&(d, g)| g == Some(d)),
        format!("{dist:?}"),
    );

    match matching_oracle_mismatches(300, 7, hooks.corrupt_matching) {
        Ok(bad) => report.push("matching_oracle", bad == 0, format!("{bad} of 300 graphs disagree")),
        Err(e) => report.push("matching_oracle", false, e.to_string()),
    }

    let mut w1 = Vec::new();
    for d in [3, 5, 7, 9] {
        let Ok(lat) = build_lattice(d) else { continue };
        let lat = Arc::new(lat);
        let dec = Decoder::new(lat.clone());
        for q in 0..lat.n() {
            let e = ErrorState::from_x(lat.n(), &[q]);
            let ok = dec
                .decode_2d(&syndrome_of(&lat, &e, CheckType::Z))
                .and_then(|r| is_logical_failure(&lat, &e, &r.correction, Pauli::X));
            if !matches!(ok, Ok(false)) {
                w1.push(format!("d={d} q={q}"));
            }
        }
    }
    report.push("weight_one_decode", w1.is_empty(), w1.join(", "));

    match build_lattice(3) {
        Ok(lat) => {
            let c = build_extraction_round(&lat);
            match single_fault_audit(&lat, &c) {
                Ok(r) => report.push(
                    "single_fault_audit_d3",
                    r.passed(),
                    format!(
                        "{} faults, {} undetected weight>=2, max flagged weight {}",
                        r.faults,
                        r.violations.len(),
                        r.max_flagged_weight
                    ),
                ),
                Err(e) => report.push("single_fault_audit_d3", false, e.to_string()),
            }
            let wf = c.check_well_formed().and_then(|_| connectivity_audit(&c, 5));
            report.push("circuit_structure", wf.is_ok(), format!("{wf:?}"));
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let sound = (0..50).all(|_| {
                let mut e = ErrorState::clean(lat.n());
                for q in 0..lat.n() {
                    e.x_errors[q] = rng.random_bool(0.3);
                    e.z_errors[q] = rng.random_bool(0.3);
                }
                noiseless_round_is_sound(&lat, &c, &e)
            });
            report.push("noiseless_soundness", sound, String::new());
        }
        Err(e) => report.push("circuit", false, e.to_string()),
    }

    let zero = TrialConfig::new(NoiseModel::Circuit, 3, 0.0, 20, 0);
    let z = Simulator::new(3).and_then(|s| s.run(&zero));
    report.push(
        "zero_noise_trials",
        matches!(&z, Ok(r) if r.failures_x == 0 && r.failures_z == 0),
        format!("{:?}", z.map(|r| (r.failures_x, r.failures_z))),
    );
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selfcheck_passes() {
        let r = cmd_selfcheck(SelfcheckHooks::default());
        assert!(r.passed(), "{:?}", r.items.iter().filter(|i| !i.passed).collect::<Vec<_>>());
    }

    #[test]
    fn corrupt_hook_fails_oracle() {
        assert_eq!(matching_oracle_mismatches(300, 7, false).unwrap(), 0);
        assert!(matching_oracle_mismatches(300, 7, true).unwrap() > 0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::InvalidDistance(4)).exit_code(), 2);
        assert_eq!(CliError::from(Error::NoPerfectMatching).exit_code(), 3);
        assert_eq!(CliError::FitQuality(String::new()).exit_code(), 4);
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = RunConfig {
            trials: 0,
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn simulate_then_fit() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            distances: vec![3, 5, 7],
            p_values: vec![0.06, 0.08, 0.10, 0.12],
            trials: 400,
            seed: 5,
            output: dir.path().join("cc.csv"),
            ..RunConfig::default()
        };
        let (ds, meta) = cmd_simulate(&cfg).unwrap();
        assert_eq!(ds.records.len(), 12);
        assert_eq!(meta.points, 12);
        assert!(cfg.metadata_path().exists());
        let (report, res) = cmd_fit(&cfg.output, dir.path(), 20);
        let report = report.expect("fit ran");
        assert!(report.fit_json.exists() && report.curves_csv.exists());
        assert_eq!(res.is_ok(), report.accepted);
    }

    #[test]
    fn fit_rejects_single_distance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(
            &path,
            "model,d,p,trials,failures_x,failures_z\ncode_capacity,9,0.07,10,1,1\ncode_capacity,9,0.08,10,2,2\n",
        )
        .unwrap();
        let (report, res) = cmd_fit(&path, dir.path(), 10);
        assert!(report.is_none());
        assert_eq!(res.unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"model": "circuit", "distances": [5, 7], "p_identity_ratio": 0.1}"#).unwrap();
        let cfg = RunConfig::from_json_file(&path).unwrap();
        assert_eq!(cfg.model, NoiseModel::Circuit);
        assert_eq!(cfg.distances, vec![5, 7]);
        assert_eq!(cfg.trials, RunConfig::default().trials);
        std::fs::write(&path, r#"{"modle": "circuit"}"#).unwrap();
        assert!(RunConfig::from_json_file(&path).is_err());
    }
}
