//! Monte Carlo sweeps and finite-size-scaling threshold fits.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_extraction_round, run_rounds, Circuit};
use crate::decoder::{is_logical_failure, Decoder, FailureDump};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, CodeLattice};
use crate::noise::{
    phenomenological_history, sample_code_capacity, sample_phenomenological, syndrome_of, CheckType, ErrorState,
    Pauli,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    CodeCapacity,
    Phenomenological,
    Circuit,
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::CodeCapacity => "code_capacity",
            NoiseModel::Phenomenological => "phenomenological",
            NoiseModel::Circuit => "circuit",
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "code_capacity" => Ok(NoiseModel::CodeCapacity),
            "phenomenological" => Ok(NoiseModel::Phenomenological),
            "circuit" => Ok(NoiseModel::Circuit),
            _ => Err(Error::InvalidArgument(format!("unknown noise model {s:?}"))),
        }
    }
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model: NoiseModel,
    pub d: usize,
    pub p: f64,
    pub trials: u64,
    pub seed: u64,
    /// Noisy rounds; defaults to `d` for the repeated-measurement models.
    pub rounds: Option<usize>,
    /// Identity-gate failure probability as a fraction of `p`.
    pub p_identity_ratio: f64,
}

impl TrialConfig {
    pub fn new(model: NoiseModel, d: usize, p: f64, trials: u64, seed: u64) -> Self {
        TrialConfig {
            model,
            d,
            p,
            trials,
            seed,
            rounds: None,
            p_identity_ratio: 1.0,
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds.unwrap_or(self.d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 || self.d.is_multiple_of(2) {
            return Err(Error::InvalidDistance(self.d));
        }
        for p in [self.p, self.p * self.p_identity_ratio] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability(p));
            }
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.rounds == Some(0) {
            return Err(Error::InvalidArgument("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Failure counts at one `(model, d, p)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model: NoiseModel,
    pub d: usize,
    pub p: f64,
    pub trials: u64,
    pub failures_x: u64,
    pub failures_z: u64,
    /// Trials failing in either component; not part of the CSV schema.
    #[serde(skip)]
    pub failures_any: Option<u64>,
}

impl TrialRecord {
    pub fn rate(&self, pauli: Pauli) -> f64 {
        self.failures(pauli) as f64 / self.trials as f64
    }

    pub fn failures(&self, pauli: Pauli) -> u64 {
        match pauli {
            Pauli::X => self.failures_x,
            Pauli::Z => self.failures_z,
        }
    }

    pub fn wilson(&self, pauli: Pauli) -> (f64, f64) {
        wilson_interval(self.failures(pauli), self.trials, 1.96)
    }
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let phat = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Shared per-distance state for running trials.
pub struct Simulator {
    pub lattice: Arc<CodeLattice>,
    pub decoder: Decoder,
    pub circuit: Circuit,
}

impl Simulator {
    pub fn new(d: usize) -> Result<Self> {
        let lattice = Arc::new(build_lattice(d)?);
        let circuit = build_extraction_round(&lattice);
        Ok(Simulator {
            decoder: Decoder::new(lattice.clone()),
            lattice,
            circuit,
        })
    }

    /// Runs one trial; returns `(x_failed, z_failed)`.
    pub fn trial(&self, cfg: &TrialConfig, trial: u64) -> Result<(bool, bool)> {
        let mut rng = trial_rng(cfg, trial);
        let lat = &*self.lattice;
        let dump = |error: ErrorState, history: Vec<Vec<bool>>, e: Error| Error::TrialFailure {
            message: e.to_string(),
            dump: Box::new(FailureDump {
                d: cfg.d,
                model: cfg.model.to_string(),
                seed: cfg.seed,
                trial,
                error,
                history,
                result: None,
                message: e.to_string(),
            }),
        };
        match cfg.model {
            NoiseModel::CodeCapacity => {
                let e = sample_code_capacity(lat, cfg.p, &mut rng)?;
                let s = syndrome_of(lat, &e, CheckType::Z);
                let r = self
                    .decoder
                    .decode_2d(&s)
                    .and_then(|r| is_logical_failure(lat, &e, &r.correction, Pauli::X));
                match r {
                    Ok(f) => Ok((f, f)),
                    Err(err) => Err(dump(e, vec![s], err)),
                }
            }
            NoiseModel::Phenomenological => {
                let e = sample_phenomenological(lat, cfg.p, cfg.rounds(), &mut rng)?;
                let h = phenomenological_history(lat, &e);
                let r = self
                    .decoder
                    .decode_3d(&h)
                    .and_then(|r| is_logical_failure(lat, &e, &r.correction, Pauli::X));
                match r {
                    Ok(f) => Ok((f, f)),
                    Err(err) => Err(dump(e, h, err)),
                }
            }
            NoiseModel::Circuit => {
                let (h, e) = run_rounds(&self.circuit, cfg.p, cfg.p * cfg.p_identity_ratio, cfg.rounds(), &mut rng)?;
                let mut out = [false; 2];
                for (i, pauli) in [Pauli::X, Pauli::Z].into_iter().enumerate() {
                    let hist = h.for_pauli(pauli);
                    let r = self
                        .decoder
                        .decode_3d(hist)
                        .and_then(|r| is_logical_failure(lat, &e, &r.correction, pauli));
                    match r {
                        Ok(f) => out[i] = f,
                        Err(err) => return Err(dump(e.clone(), hist.to_vec(), err)),
                    }
                }
                Ok((out[0], out[1]))
            }
        }
    }

    /// Runs `cfg.trials` trials in parallel.
    pub fn run(&self, cfg: &TrialConfig) -> Result<TrialRecord> {
        cfg.validate()?;
        if cfg.d != self.lattice.d {
            return Err(Error::InvalidArgument(format!(
                "simulator built for d={} but config has d={}",
                self.lattice.d, cfg.d
            )));
        }
        let (fx, fz, fa) = (0..cfg.trials)
            .into_par_iter()
            .map(|t| self.trial(cfg, t).map(|(x, z)| (x as u64, z as u64, (x || z) as u64)))
            .try_reduce(|| (0, 0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1, a.2 + b.2)))?;
        Ok(TrialRecord {
            model: cfg.model,
            d: cfg.d,
            p: cfg.p,
            trials: cfg.trials,
            failures_x: fx,
            failures_z: fz,
            failures_any: Some(fa),
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one trial: keyed by the point, streamed by the trial index.
pub fn trial_rng(cfg: &TrialConfig, trial: u64) -> ChaCha8Rng {
    let key = splitmix(
        cfg.seed ^ splitmix(cfg.d as u64 ^ splitmix(cfg.p.to_bits() ^ splitmix(cfg.model as u64 + 1))),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(trial);
    rng
}

/// Builds a simulator and runs one point.
pub fn run_trials(cfg: &TrialConfig) -> Result<TrialRecord> {
    cfg.validate()?;
    Simulator::new(cfg.d)?.run(cfg)
}

/// Records keyed uniquely by `(model, d, p)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub records: Vec<TrialRecord>,
}

impl TrialDataset {
    pub fn new(records: Vec<TrialRecord>) -> Result<Self> {
        let ds = TrialDataset { records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut keys = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.failures_x > r.trials || r.failures_z > r.trials {
                return Err(Error::Dataset(format!("record {}: failures exceed trials", i + 1)));
            }
            if r.trials == 0 {
                return Err(Error::Dataset(format!("record {}: zero trials", i + 1)));
            }
            if !keys.insert((r.model, r.d, r.p.to_bits())) {
                return Err(Error::Dataset(format!(
                    "record {}: duplicate point ({}, d={}, p={})",
                    i + 1,
                    r.model,
                    r.d,
                    r.p
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the CSV schema `model,d,p,trials,failures_x,failures_z`;
    /// errors carry the offending line number.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let expected = ["model", "d", "p", "trials", "failures_x", "failures_z"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Dataset(format!(
                "line 1: expected header {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for row in rd.deserialize::<TrialRecord>() {
            match row {
                Ok(r) => records.push(r),
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    return Err(Error::Dataset(format!("line {line}: {e}")));
                }
            }
        }
        let ds = TrialDataset { records };
        if let Err(Error::Dataset(msg)) = ds.validate() {
            // Record k sits on line k + 1.
            let msg = match msg.strip_prefix("record ").and_then(|m| m.split_once(':')) {
                Some((k, rest)) => match k.parse::<usize>() {
                    Ok(k) => format!("line {}:{rest}", k + 1),
                    Err(_) => msg,
                },
                None => msg,
            };
            return Err(Error::Dataset(msg));
        }
        Ok(ds)
    }

    pub fn models(&self) -> BTreeSet<NoiseModel> {
        self.records.iter().map(|r| r.model).collect()
    }

    pub fn filter_model(&self, model: NoiseModel) -> Vec<TrialRecord> {
        self.records.iter().filter(|r| r.model == model).cloned().collect()
    }
}

/// `A + B x + C x^2` with `x = (p - p_th) d^{1/nu}`.
pub fn ansatz_eval(params: &AnsatzParams, p: f64, d: usize) -> f64 {
    let x = (p - params.p_th) * (d as f64).powf(1.0 / params.nu);
    params.a + params.b * x + params.c * x * x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_th: f64,
    pub nu: f64,
}

impl AnsatzParams {
    fn from_slice(v: &[f64]) -> Self {
        AnsatzParams {
            a: v[0],
            b: v[1],
            c: v[2],
            p_th: v[3],
            nu: v[4],
        }
    }
}

/// One observation for the fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub d: usize,
    pub p: f64,
    pub rate: f64,
    pub variance: f64,
}

impl FitPoint {
    /// Binomial estimate with a half-count smoothing of the variance so that
    /// zero-failure points keep a finite weight.
    pub fn from_counts(d: usize, p: f64, failures: u64, trials: u64) -> Self {
        let n = trials as f64;
        let smoothed = (failures as f64 + 0.5) / (n + 1.0);
        FitPoint {
            d,
            p,
            rate: failures as f64 / n,
            variance: smoothed * (1.0 - smoothed) / n,
        }
    }
}

pub const R_SQUARED_MIN: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: AnsatzParams,
    /// Standard errors of `(A, B, C, p_th, nu)`.
    pub std_errors: [f64; 5],
    pub r_squared: f64,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub points: usize,
}

impl FitResult {
    pub fn p_th(&self) -> f64 {
        self.params.p_th
    }

    pub fn accepted(&self) -> bool {
        self.converged && self.r_squared > R_SQUARED_MIN
    }
}

/// Fits for both error components; the threshold is the smaller one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub model: NoiseModel,
    pub x: FitResult,
    pub z: Option<FitResult>,
    pub threshold: f64,
    pub limiting: Pauli,
}

impl ThresholdFit {
    pub fn accepted(&self) -> bool {
        self.x.accepted() && self.z.as_ref().is_none_or(FitResult::accepted)
    }

    pub fn limiting_fit(&self) -> &FitResult {
        match (self.limiting, &self.z) {
            (Pauli::Z, Some(z)) => z,
            _ => &self.x,
        }
    }
}

fn check_fit_preconditions(points: &[FitPoint]) -> Result<()> {
    let ds: BTreeSet<usize> = points.iter().map(|p| p.d).collect();
    if ds.len() < 3 {
        return Err(Error::FitPrecondition(format!(
            "need at least 3 distances, found {}",
            ds.len()
        )));
    }
    for d in ds {
        let k = points.iter().filter(|p| p.d == d).count();
        if k < 4 {
            return Err(Error::FitPrecondition(format!(
                "need at least 4 error rates per distance, d={d} has {k}"
            )));
        }
    }
    if points.iter().any(|p| !(p.variance > 0.0) || !p.rate.is_finite()) {
        return Err(Error::FitPrecondition("every point needs a finite rate and positive variance".into()));
    }
    Ok(())
}

fn residuals_and_jacobian(points: &[FitPoint], theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let params = AnsatzParams::from_slice(theta);
    let m = points.len();
    let mut r = DVector::zeros(m);
    let mut j = DMatrix::zeros(m, 5);
    for (i, pt) in points.iter().enumerate() {
        let w = 1.0 / pt.variance.sqrt();
        let ld = (pt.d as f64).ln();
        let scale = (ld / params.nu).exp();
        let dp = pt.p - params.p_th;
        let x = dp * scale;
        let f = params.a + params.b * x + params.c * x * x;
        let slope = params.b + 2.0 * params.c * x;
        r[i] = (pt.rate - f) * w;
        // Jacobian of the model, weighted; residual derivative is its negative.
        j[(i, 0)] = w;
        j[(i, 1)] = x * w;
        j[(i, 2)] = x * x * w;
        j[(i, 3)] = -slope * scale * w;
        j[(i, 4)] = -slope * x * ld / (params.nu * params.nu) * w;
    }
    (r, j)
}

/// Weighted linear least squares for `(A, B, C)` at fixed `(p_th, nu)`.
fn linear_abc(points: &[FitPoint], p_th: f64, nu: f64) -> Option<[f64; 3]> {
    let m = points.len();
    let mut a = DMatrix::zeros(m, 3);
    let mut b = DVector::zeros(m);
    for (i, pt) in points.iter().enumerate() {
        let w = 1.0 / pt.variance.sqrt();
        let x = (pt.p - p_th) * (pt.d as f64).powf(1.0 / nu);
        a[(i, 0)] = w;
        a[(i, 1)] = x * w;
        a[(i, 2)] = x * x * w;
        b[i] = pt.rate * w;
    }
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some([sol[0], sol[1], sol[2]])
}

struct LmOutcome {
    theta: [f64; 5],
    cost: f64,
    converged: bool,
}

fn levenberg_marquardt(points: &[FitPoint], start: [f64; 5]) -> LmOutcome {
    const MAX_ITER: usize = 1000;
    const TOL: f64 = 1e-10;
    let mut theta = start;
    let (mut r, mut j) = residuals_and_jacobian(points, &theta);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..5 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            // Residual is y - f, so the Gauss-Newton step is +(JtJ)^-1 Jt r.
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = theta;
            for k in 0..5 {
                cand[k] += step[k];
            }
            if !(cand[4] > 0.05) || !cand.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let (r2, j2) = residuals_and_jacobian(points, &cand);
            let c2 = r2.norm_squared();
            if c2 <= cost {
                let rel = (cost - c2) / cost.max(f64::MIN_POSITIVE);
                theta = cand;
                r = r2;
                j = j2;
                cost = c2;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    LmOutcome { theta, cost, converged }
}

/// Weighted least-squares fit of the scaling ansatz, multi-started over a
/// grid of `(p_th, nu)`.
pub fn fit_points(points: &[FitPoint]) -> Result<FitResult> {
    check_fit_preconditions(points)?;
    let pmin = points.iter().map(|p| p.p).fold(f64::INFINITY, f64::min);
    let pmax = points.iter().map(|p| p.p).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<LmOutcome> = None;
    for k in 0..9 {
        let p_th = pmin + (pmax - pmin) * k as f64 / 8.0;
        for nu in [0.8, 1.0, 1.3, 1.6, 2.0] {
            let Some([a, b, c]) = linear_abc(points, p_th, nu) else { continue };
            let out = levenberg_marquardt(points, [a, b, c, p_th, nu]);
            if best.as_ref().is_none_or(|bst| out.cost < bst.cost) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or_else(|| Error::FitPrecondition("no starting point produced a fit".into()))?;
    let (_, j) = residuals_and_jacobian(points, &best.theta);
    let dof = points.len().saturating_sub(5).max(1) as f64;
    let chi2_reduced = best.cost / dof;
    let cov = (j.transpose() * &j).try_inverse();
    let mut std_errors = [f64::NAN; 5];
    if let Some(cov) = cov {
        for k in 0..5 {
            std_errors[k] = (cov[(k, k)] * chi2_reduced).max(0.0).sqrt();
        }
    }
    let params = AnsatzParams::from_slice(&best.theta);
    let wsum: f64 = points.iter().map(|p| 1.0 / p.variance).sum();
    let mean: f64 = points.iter().map(|p| p.rate / p.variance).sum::<f64>() / wsum;
    let ss_tot: f64 = points.iter().map(|p| (p.rate - mean).powi(2) / p.variance).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - best.cost / ss_tot } else { 0.0 };
    Ok(FitResult {
        params,
        std_errors,
        r_squared,
        chi2_reduced,
        converged: best.converged,
        points: points.len(),
    })
}

/// Fits one error component of the records of a single model.
pub fn fit_threshold(records: &[TrialRecord], pauli: Pauli) -> Result<FitResult> {
    let points: Vec<FitPoint> = records
        .iter()
        .map(|r| FitPoint::from_counts(r.d, r.p, r.failures(pauli), r.trials))
        .collect();
    fit_points(&points)
}

/// Fits a single-model dataset. Under circuit noise both components are fit
/// and the smaller threshold is reported; otherwise Z mirrors X.
pub fn fit_dataset(dataset: &TrialDataset) -> Result<ThresholdFit> {
    dataset.validate()?;
    let models = dataset.models();
    let model = match models.len() {
        1 => *models.iter().next().expect("one model"),
        0 => return Err(Error::FitPrecondition("empty dataset".into())),
        _ => return Err(Error::FitPrecondition("dataset mixes noise models".into())),
    };
    let mut records = dataset.records.clone();
    // Fit results must not depend on record order.
    records.sort_by(|a, b| (a.d, a.p).partial_cmp(&(b.d, b.p)).expect("finite p"));
    let x = fit_threshold(&records, Pauli::X)?;
    let z = if model == NoiseModel::Circuit {
        Some(fit_threshold(&records, Pauli::Z)?)
    } else {
        None
    };
    let (threshold, limiting) = match &z {
        Some(zf) if zf.p_th() < x.p_th() => (zf.p_th(), Pauli::Z),
        _ => (x.p_th(), Pauli::X),
    };
    Ok(ThresholdFit {
        model,
        x,
        z,
        threshold,
        limiting,
    })
}

/// Fitted curve samples `(d, p, predicted rate)` over `[p_lo, p_hi]`.
pub fn curve_samples(params: &AnsatzParams, distances: &[usize], p_lo: f64, p_hi: f64, n: usize) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::with_capacity(distances.len() * n);
    for &d in distances {
        for k in 0..n {
            let p = if n == 1 { p_lo } else { p_lo + (p_hi - p_lo) * k as f64 / (n - 1) as f64 };
            out.push((d, p, ansatz_eval(params, p, d)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(truth: &AnsatzParams, noise: f64, seed: u64) -> Vec<FitPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut pts = Vec::new();
        for d in [9, 11, 13] {
            for k in 0..7 {
                let p = 0.068 + 0.016 * k as f64 / 6.0;
                let y = ansatz_eval(truth, p, d) * (1.0 + noise * normal.sample(&mut rng));
                let sd = (noise * y).max(1e-9);
                pts.push(FitPoint {
                    d,
                    p,
                    rate: y,
                    variance: sd * sd,
                });
            }
        }
        pts
    }

    const TRUTH: AnsatzParams = AnsatzParams {
        a: 0.18,
        b: 1.9,
        c: 6.0,
        p_th: 0.076,
        nu: 1.4,
    };

    #[test]
    fn ansatz_basics() {
        for d in [3, 9, 21] {
            assert_eq!(ansatz_eval(&TRUTH, TRUTH.p_th, d), TRUTH.a);
        }
        let lin = AnsatzParams { c: 0.0, ..TRUTH };
        for d in [5, 9] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..20 {
                let v = ansatz_eval(&lin, 0.05 + 0.003 * k as f64, d);
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn exact_data_recovered() {
        let fit = fit_points(&synthetic(&TRUTH, 0.0, 1).iter().map(|p| FitPoint { variance: 1e-6, ..*p }).collect::<Vec<_>>()).unwrap();
        assert!((fit.p_th() - TRUTH.p_th).abs() < 1e-8, "{fit:?}");
        assert!((fit.params.nu - TRUTH.nu).abs() < 1e-6);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn noisy_round_trip() {
        for seed in 0..5 {
            let fit = fit_points(&synthetic(&TRUTH, 0.01, seed)).unwrap();
            assert!((fit.p_th() - TRUTH.p_th).abs() < 1e-3, "seed {seed}: {fit:?}");
            assert!(fit.r_squared > R_SQUARED_MIN);
            assert!(fit.std_errors[3] > 0.0 && fit.std_errors[3] < 1e-3);
        }
    }

    #[test]
    fn preconditions() {
        let pts = synthetic(&TRUTH, 0.0, 1);
        let one_d: Vec<FitPoint> = pts.iter().filter(|p| p.d == 9).cloned().collect();
        assert!(matches!(fit_points(&one_d), Err(Error::FitPrecondition(_))));
        let sparse: Vec<FitPoint> = pts.iter().filter(|p| p.d != 13 || p.p < 0.072).cloned().collect();
        assert!(matches!(fit_points(&sparse), Err(Error::FitPrecondition(_))));
    }

    #[test]
    fn wilson_behaviour() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
        assert!(((lo + hi) / 2.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wilson_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (p, n, reps) = (0.03, 200u64, 2000);
        let mut covered = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| rng.random_bool(p)).count() as u64;
            let (lo, hi) = wilson_interval(k, n, 1.96);
            covered += (lo <= p && p <= hi) as usize;
        }
        let frac = covered as f64 / reps as f64;
        assert!(frac > 0.92 && frac < 0.98, "coverage {frac}");
    }

    #[test]
    fn zero_noise_never_fails() {
        for model in [NoiseModel::CodeCapacity, NoiseModel::Phenomenological, NoiseModel::Circuit] {
            let r = run_trials(&TrialConfig::new(model, 5, 0.0, 50, 1)).unwrap();
            assert_eq!((r.failures_x, r.failures_z), (0, 0));
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrialConfig::new(NoiseModel::CodeCapacity, 5, 0.1, 10, 1);
        assert!(ok.validate().is_ok());
        assert!(TrialConfig { trials: 0, ..ok }.validate().is_err());
        assert!(TrialConfig { d: 4, ..ok }.validate().is_err());
        assert!(TrialConfig { p: 1.5, ..ok }.validate().is_err());
        assert!(TrialConfig { rounds: Some(0), ..ok }.validate().is_err());
    }

    #[test]
    fn seed_determinism() {
        let cfg = TrialConfig::new(NoiseModel::Circuit, 3, 0.01, 200, 42);
        let a = run_trials(&cfg).unwrap();
        let b = run_trials(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_trials(&TrialConfig { seed: 43, ..cfg }).unwrap();
        assert_eq!(c.trials, 200);
    }

    #[test]
    fn below_vs_above_threshold() {
        let sim = Simulator::new(9).unwrap();
        let lo = sim.run(&TrialConfig::new(NoiseModel::CodeCapacity, 9, 0.05, 10_000, 3)).unwrap();
        let hi = sim.run(&TrialConfig::new(NoiseModel::CodeCapacity, 9, 0.10, 10_000, 3)).unwrap();
        let (a, b) = (lo.rate(Pauli::X), hi.rate(Pauli::X));
        let sigma = (a * (1.0 - a) / 1e4 + b * (1.0 - b) / 1e4).sqrt();
        assert!(b - a > 3.0 * sigma);
    }

    #[test]
    fn csv_round_trip() {
        let ds = TrialDataset::new(vec![
            TrialRecord {
                model: NoiseModel::Circuit,
                d: 5,
                p: 0.001,
                trials: 100,
                failures_x: 3,
                failures_z: 4,
                failures_any: None,
            },
            TrialRecord {
                model: NoiseModel::Circuit,
                d: 7,
                p: 0.1 + 0.2,
                trials: 100,
                failures_x: 1,
                failures_z: 0,
                failures_any: None,
            },
        ])
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,d,p,trials,failures_x,failures_z\ncircuit,5,"));
        assert_eq!(TrialDataset::read_csv(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn csv_errors_have_lines() {
        let bad = "model,d,p,trials,failures_x,failures_z\ncircuit,5,0.1,10,1,1\ncircuit,5,zz,10,1,1\n";
        let e = TrialDataset::read_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let dup = "model,d,p,trials,failures_x,failures_z\ncircuit,5,0.1,10,1,1\ncircuit,5,0.1,10,1,1\n";
        let e = TrialDataset::read_csv(dup.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let over = "model,d,p,trials,failures_x,failures_z\ncircuit,5,0.1,10,11,1\n";
        assert!(TrialDataset::read_csv(over.as_bytes()).is_err());
        let hdr = "model,d,p,trials\ncircuit,5,0.1,10\n";
        assert!(TrialDataset::read_csv(hdr.as_bytes()).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn fit_is_order_invariant() {
        let mut records = Vec::new();
        for (i, pt) in synthetic(&TRUTH, 0.01, 4).iter().enumerate() {
            let trials = 100_000u64;
            let f = (pt.rate * trials as f64).round() as u64;
            records.push(TrialRecord {
                model: NoiseModel::CodeCapacity,
                d: pt.d,
                p: pt.p,
                trials,
                failures_x: f,
                failures_z: f + (i as u64 % 2),
                failures_any: None,
            });
        }
        let a = fit_dataset(&TrialDataset::new(records.clone()).unwrap()).unwrap();
        records.reverse();
        records.swap(1, 7);
        let b = fit_dataset(&TrialDataset::new(records).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.z.is_none());
        assert!((a.threshold - TRUTH.p_th).abs() < 2e-3);
    }
}
