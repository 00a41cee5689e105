//! SNR sweeps over several rate methods, their TOML configuration, the
//! figure presets and the CSV output format.
//!
//! CSV layout: optional `#` metadata lines, then a header
//! `snr_db,method,user,rate_bits,ci_halfwidth,trials_used,trials_discarded`
//! and one row per `(snr_db, method, user)` with `user` one of `1..=K`,
//! `mean` (average per-user rate) or `sum`. Analytic methods have a zero
//! confidence half-width and empty trial columns.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{NetworkDims, PowerProfile};
use crate::error::{Error, Result};
use crate::feasibility;
use crate::montecarlo::{self, ErgodicEstimate, Estimate, GameOpts, McMethod, McOpts, GAME_SCHEDULE};
use crate::rates;
use crate::solver::SolverOpts;

pub const CSV_HEADER: [&str; 7] = [
    "snr_db",
    "method",
    "user",
    "rate_bits",
    "ci_halfwidth",
    "trials_used",
    "trials_discarded",
];

/// Default SNR grid in dB.
pub const DEFAULT_SNR_GRID: &str = "0:2.5:30";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IaOptimum,
    IaProjection,
    IaBoundThm2,
    IaProjectionAnalytic,
    WfGame,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::IaOptimum,
        Method::IaProjection,
        Method::IaBoundThm2,
        Method::IaProjectionAnalytic,
        Method::WfGame,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::IaOptimum => "ia_optimum",
            Method::IaProjection => "ia_projection",
            Method::IaBoundThm2 => "ia_bound_thm2",
            Method::IaProjectionAnalytic => "ia_projection_analytic",
            Method::WfGame => "wf_game",
        }
    }

    pub fn is_analytic(self) -> bool {
        matches!(self, Method::IaBoundThm2 | Method::IaProjectionAnalytic)
    }

    /// Methods whose meaning depends on an IA solution existing.
    pub fn needs_alignment(self) -> bool {
        self != Method::WfGame
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown method `{s}`")))
    }
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list of dB values.
pub fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Format(format!("invalid SNR value `{s}`")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (parse(start)?, parse(step)?, parse(stop)?);
            if !(step > 0.0) || stop < start {
                return Err(Error::Format(format!("invalid SNR range `{text}`")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        [_] => text.split(',').map(parse).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Format(format!("invalid SNR grid `{text}`"))),
    };
    if grid.is_empty() {
        return Err(Error::Format("empty SNR grid".into()));
    }
    Ok(grid)
}

/// A complete sweep: one network configuration, an SNR grid and a set of methods.
///
/// SNR is `P_k / sigma^2`, identical for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dims: NetworkDims,
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverOpts,
    pub game: GameOpts,
}

impl SweepSpec {
    /// A symmetric network with the default grid, trial count and options.
    pub fn symmetric(k: usize, nt: usize, nr: usize, d: usize, dprime: usize, methods: Vec<Method>) -> Result<Self> {
        Ok(SweepSpec {
            dims: NetworkDims::symmetric(k, nt, nr, d, dprime)?,
            snr_db: parse_snr_grid(DEFAULT_SNR_GRID)?,
            methods,
            trials: McOpts::default().trials,
            seed: McOpts::default().seed,
            solver: SolverOpts::default(),
            game: GameOpts::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.snr_db.is_empty() {
            return Err(Error::Domain("the SNR grid is empty".into()));
        }
        if self.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("SNR values must be finite".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no methods selected".into()));
        }
        if self.trials == 0 {
            return Err(Error::Domain("at least one trial is required".into()));
        }
        Ok(())
    }

    fn mc_opts(&self) -> McOpts {
        McOpts {
            trials: self.trials,
            seed: self.seed,
            solver: self.solver.clone(),
            game: self.game.clone(),
            ..McOpts::default()
        }
    }

    pub fn to_config(&self) -> SweepConfig {
        SweepConfig {
            m: self.dims.m.clone(),
            n: self.dims.n.clone(),
            d: self.dims.d.clone(),
            dprime: self.dims.dprime.clone(),
            snr_db: self.snr_db.clone(),
            methods: self.methods.clone(),
            trials: self.trials,
            seed: self.seed,
            solver_max_iters: self.solver.max_iters,
            solver_tol: self.solver.tol,
            solver_restarts: self.solver.restarts,
            solver_tol_rank: self.solver.tol_rank,
            game_max_iters: self.game.max_iters,
            game_tol: self.game.tol,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_config()).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.into_spec()
    }

    pub fn load(path: &Path) -> Result<Self> {
        SweepSpec::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// On-disk form of a [`SweepSpec`]: flat keys, per-user antenna and stream lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Transmit antennas per user.
    pub m: Vec<usize>,
    /// Receive antennas per user.
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub dprime: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_solver_max_iters")]
    pub solver_max_iters: usize,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_solver_restarts")]
    pub solver_restarts: usize,
    #[serde(default = "default_solver_tol_rank")]
    pub solver_tol_rank: f64,
    #[serde(default = "default_game_max_iters")]
    pub game_max_iters: usize,
    #[serde(default = "default_game_tol")]
    pub game_tol: f64,
}

fn default_trials() -> usize {
    McOpts::default().trials
}
fn default_seed() -> u64 {
    McOpts::default().seed
}
fn default_solver_max_iters() -> usize {
    SolverOpts::default().max_iters
}
fn default_solver_tol() -> f64 {
    SolverOpts::default().tol
}
fn default_solver_restarts() -> usize {
    SolverOpts::default().restarts
}
fn default_solver_tol_rank() -> f64 {
    SolverOpts::default().tol_rank
}
fn default_game_max_iters() -> usize {
    GameOpts::default().max_iters
}
fn default_game_tol() -> f64 {
    GameOpts::default().tol
}

impl SweepConfig {
    pub fn into_spec(self) -> Result<SweepSpec> {
        let spec = SweepSpec {
            dims: NetworkDims::new(self.m, self.n, self.d, self.dprime)?,
            snr_db: self.snr_db,
            methods: self.methods,
            trials: self.trials,
            seed: self.seed,
            solver: SolverOpts {
                max_iters: self.solver_max_iters,
                tol: self.solver_tol,
                restarts: self.solver_restarts,
                tol_rank: self.solver_tol_rank,
                ..SolverOpts::default()
            },
            game: GameOpts {
                max_iters: self.game_max_iters,
                tol: self.game_tol,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Named figure configurations; multi-run presets return one labelled spec per run.
pub fn preset(name: &str) -> Result<Vec<(String, SweepSpec)>> {
    let ia = vec![
        Method::IaOptimum,
        Method::IaProjection,
        Method::IaBoundThm2,
        Method::IaProjectionAnalytic,
    ];
    let mut with_game = ia.clone();
    with_game.push(Method::WfGame);
    let pair = |methods: &Vec<Method>| -> Result<Vec<(String, SweepSpec)>> {
        Ok(vec![
            ("k11_d1_dp1".to_string(), SweepSpec::symmetric(11, 7, 5, 1, 1, methods.clone())?),
            ("k7_d1_dp2".to_string(), SweepSpec::symmetric(7, 7, 5, 1, 2, methods.clone())?),
        ])
    };
    match name {
        "fig1" => Ok(vec![("k7_d1_dp2".to_string(), SweepSpec::symmetric(7, 7, 5, 1, 2, ia)?)]),
        "fig2" => pair(&ia),
        "fig3" => pair(&with_game),
        other => Err(Error::Format(format!("unknown preset `{other}` (expected fig1, fig2 or fig3)"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UserKey {
    /// One-based user index.
    User(usize),
    Mean,
    Sum,
}

impl fmt::Display for UserKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserKey::User(u) => write!(f, "{u}"),
            UserKey::Mean => f.write_str("mean"),
            UserKey::Sum => f.write_str("sum"),
        }
    }
}

impl FromStr for UserKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(UserKey::Mean),
            "sum" => Ok(UserKey::Sum),
            _ => s
                .parse::<usize>()
                .ok()
                .filter(|&u| u >= 1)
                .map(UserKey::User)
                .ok_or_else(|| Error::Format(format!("invalid user column `{s}`"))),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub snr_db: f64,
    pub method: Method,
    pub user: UserKey,
    pub rate_bits: f64,
    pub ci_halfwidth: f64,
    pub trials_used: Option<usize>,
    pub trials_discarded: Option<usize>,
}

impl Row {
    fn record(&self) -> [String; 7] {
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        [
            self.snr_db.to_string(),
            self.method.name().to_string(),
            self.user.to_string(),
            self.rate_bits.to_string(),
            self.ci_halfwidth.to_string(),
            opt(self.trials_used),
            opt(self.trials_discarded),
        ]
    }
}

/// Output of [`run_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<Row>,
}

impl SweepResult {
    /// Looks up the rate of `(snr_db, method, user)`.
    pub fn get(&self, snr_db: f64, method: Method, user: UserKey) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.method == method && r.user == user)
    }

    /// Metadata lines written above the CSV header.
    pub fn metadata(&self, timestamp: bool) -> Vec<String> {
        let s = &self.spec;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut lines = vec![
            "rxalign sweep".to_string(),
            format!("seed={}", s.seed),
            format!("trials={}", s.trials),
            format!(
                "dims: m=[{}] n=[{}] d=[{}] dprime=[{}]",
                list(&s.dims.m),
                list(&s.dims.n),
                list(&s.dims.d),
                list(&s.dims.dprime)
            ),
            "snr=P_k/sigma^2 equal for all users".to_string(),
            format!(
                "solver: max_iters={} tol={:e} restarts={} tol_rank={:e}",
                s.solver.max_iters, s.solver.tol, s.solver.restarts, s.solver.tol_rank
            ),
            format!(
                "game: schedule={} max_iters={} tol={:e}",
                GAME_SCHEDULE, s.game.max_iters, s.game.tol
            ),
        ];
        if timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            lines.push(format!("generated_unix={secs}"));
        }
        lines
    }

    pub fn write_csv<W: Write>(&self, mut out: W, timestamp: bool) -> Result<()> {
        for line in self.metadata(timestamp) {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, timestamp: bool) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, timestamp)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}

fn push_estimate(rows: &mut Vec<Row>, snr_db: f64, method: Method, est: &ErgodicEstimate) {
    let mut push = |user: UserKey, e: &Estimate| {
        rows.push(Row {
            snr_db,
            method,
            user,
            rate_bits: e.mean,
            ci_halfwidth: e.ci_halfwidth,
            trials_used: Some(e.trials_used),
            trials_discarded: Some(e.trials_discarded),
        })
    };
    for (u, e) in est.per_user.iter().enumerate() {
        push(UserKey::User(u + 1), e);
    }
    push(UserKey::Mean, &est.user_mean);
    push(UserKey::Sum, &est.sum);
}

fn push_analytic(rows: &mut Vec<Row>, snr_db: f64, method: Method, per_user: &[f64]) {
    let sum: f64 = per_user.iter().sum();
    let keyed = per_user
        .iter()
        .enumerate()
        .map(|(u, &r)| (UserKey::User(u + 1), r))
        .chain([(UserKey::Mean, sum / per_user.len() as f64), (UserKey::Sum, sum)]);
    for (user, rate_bits) in keyed {
        rows.push(Row {
            snr_db,
            method,
            user,
            rate_bits,
            ci_halfwidth: 0.0,
            trials_used: None,
            trials_discarded: None,
        });
    }
}

/// Closed-form per-user rates of an analytic method.
pub fn analytic_rates(method: Method, dims: &NetworkDims, powers: &PowerProfile) -> Result<Vec<f64>> {
    (0..dims.k)
        .map(|k| match method {
            Method::IaBoundThm2 => rates::theorem2_bound(dims, powers, k),
            Method::IaProjectionAnalytic => {
                let (d, dp) = (dims.d[k], dims.dprime[k]);
                rates::shin_lee_rate(d.min(dp), d.max(dp), powers.rho(k, d))
            }
            other => Err(Error::Domain(format!("{other} is not an analytic method"))),
        })
        .collect()
}

/// Runs every method of `spec` over its SNR grid.
///
/// IA methods require a proper configuration unless `force` is set. The
/// optimum and projection receivers share the same aligned draws, and every
/// draw is aligned once for the whole grid.
pub fn run_sweep(spec: &SweepSpec, force: bool) -> Result<SweepResult> {
    spec.validate()?;
    let dims = &spec.dims;
    if spec.methods.iter().any(|m| m.needs_alignment()) {
        let report = feasibility::check_dims(dims)?;
        if !report.proper {
            let msg = format!("configuration is not proper (margin {})", report.margin);
            if force {
                log::warn!("{msg}; continuing because force is set");
            } else {
                return Err(Error::Domain(format!("{msg}; IA methods need a proper configuration")));
            }
        }
    }
    let profiles: Vec<PowerProfile> = spec
        .snr_db
        .iter()
        .map(|&s| PowerProfile::from_snr_db(dims.k, s))
        .collect();
    let opts = spec.mc_opts();
    let mut per_method: BTreeMap<Method, Vec<Vec<Row>>> = BTreeMap::new();
    let wants = |m: Method| spec.methods.contains(&m);

    if wants(Method::IaOptimum) || wants(Method::IaProjection) {
        log::info!("aligning {} draws for {} SNR points", spec.trials, profiles.len());
        let ia = montecarlo::estimate_ia_sweep(dims, &profiles, &opts)?;
        for (method, ests) in [(Method::IaOptimum, &ia.optimum), (Method::IaProjection, &ia.projection)] {
            if wants(method) {
                let blocks = spec
                    .snr_db
                    .iter()
                    .zip(ests)
                    .map(|(&snr, est)| {
                        let mut rows = Vec::new();
                        push_estimate(&mut rows, snr, method, est);
                        rows
                    })
                    .collect();
                per_method.insert(method, blocks);
            }
        }
    }
    for method in [Method::IaBoundThm2, Method::IaProjectionAnalytic] {
        if wants(method) {
            let blocks = spec
                .snr_db
                .iter()
                .zip(&profiles)
                .map(|(&snr, p)| {
                    let mut rows = Vec::new();
                    push_analytic(&mut rows, snr, method, &analytic_rates(method, dims, p)?);
                    Ok(rows)
                })
                .collect::<Result<Vec<_>>>()?;
            per_method.insert(method, blocks);
        }
    }
    if wants(Method::WfGame) {
        let blocks = spec
            .snr_db
            .iter()
            .zip(&profiles)
            .map(|(&snr, p)| {
                let est = montecarlo::estimate_ergodic(McMethod::WfGame, dims, p, &opts)?;
                let total = est.sum.trials_used + est.sum.trials_discarded;
                log::info!(
                    "wf_game at {snr} dB: {} of {total} draws discarded",
                    est.sum.trials_discarded
                );
                let mut rows = Vec::new();
                push_estimate(&mut rows, snr, Method::WfGame, &est);
                Ok(rows)
            })
            .collect::<Result<Vec<_>>>()?;
        per_method.insert(Method::WfGame, blocks);
    }

    // rows ordered by SNR, then by the method order of the spec
    let mut rows = Vec::new();
    for idx in 0..spec.snr_db.len() {
        for method in &spec.methods {
            if let Some(blocks) = per_method.get(method) {
                rows.extend(blocks[idx].iter().cloned());
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    rows.retain(|r| seen.insert((r.snr_db.to_bits(), r.method, r.user)));
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
    })
}

/// Reads the rows of a sweep CSV, skipping `#` metadata lines.
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<Row>> {
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        if !line.starts_with('#') {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Format(format!(
            "unexpected columns {header:?}, expected {CSV_HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let rec = record?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("column {} is not a number: `{}`", CSV_HEADER[i], &rec[i])))
        };
        let count = |i: usize| -> Result<Option<usize>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i]
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|_| Error::Format(format!("column {} is not a count: `{}`", CSV_HEADER[i], &rec[i])))
            }
        };
        rows.push(Row {
            snr_db: num(0)?,
            method: rec[1].parse()?,
            user: rec[2].parse()?,
            rate_bits: num(3)?,
            ci_halfwidth: num(4)?,
            trials_used: count(5)?,
            trials_discarded: count(6)?,
        });
    }
    Ok(rows)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<Row>> {
    read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Difference `b - a` for a `(snr_db, method, user)` present in both files.
#[derive(Debug, Clone, PartialEq)]
pub struct Delta {
    pub snr_db: f64,
    pub method: Method,
    pub user: UserKey,
    pub a: f64,
    pub b: f64,
}

impl Delta {
    pub fn delta(&self) -> f64 {
        self.b - self.a
    }
}

/// A curve in a comparison, e.g. `a:ia_optimum` at user `sum`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Series {
    pub file: char,
    pub method: Method,
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.method)
    }
}

/// Ordering of two curves at one aggregate over the common SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub user: UserKey,
    pub first: Series,
    pub second: Series,
    /// SNR points where `first` exceeds `second`.
    pub first_ahead: Vec<f64>,
    /// SNR points where `second` exceeds `first`.
    pub second_ahead: Vec<f64>,
    /// Interpolated SNRs at which the sign of `first - second` changes.
    pub crossovers: Vec<f64>,
}

impl Ordering {
    /// Smallest SNR from which `first` stays ahead through the end of the grid.
    pub fn first_ahead_from(&self, grid: &[f64]) -> Option<f64> {
        ahead_from(&self.first_ahead, grid)
    }

    /// Smallest SNR from which `second` stays ahead through the end of the grid.
    pub fn second_ahead_from(&self, grid: &[f64]) -> Option<f64> {
        ahead_from(&self.second_ahead, grid)
    }

    fn summary(&self, grid: &[f64]) -> String {
        let all = |v: &[f64]| grid.iter().all(|s| v.contains(s));
        let head = if all(&self.first_ahead) {
            format!("{} > {} at every point", self.first, self.second)
        } else if all(&self.second_ahead) {
            format!("{} > {} at every point", self.second, self.first)
        } else if let Some(s) = self.first_ahead_from(grid) {
            format!("{} > {} from {s} dB on", self.first, self.second)
        } else if let Some(s) = self.second_ahead_from(grid) {
            format!("{} > {} from {s} dB on", self.second, self.first)
        } else {
            format!("{} and {} tie at the top of the grid", self.first, self.second)
        };
        if self.crossovers.is_empty() {
            format!("{head}; no crossover")
        } else {
            let list: Vec<String> = self.crossovers.iter().map(|c| format!("{c:.3}")).collect();
            format!("{head}; crossovers at {} dB", list.join(", "))
        }
    }
}

fn ahead_from(ahead: &[f64], grid: &[f64]) -> Option<f64> {
    let mut from = None;
    for &s in grid.iter().rev() {
        if ahead.contains(&s) {
            from = Some(s);
        } else {
            break;
        }
    }
    from
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub deltas: Vec<Delta>,
    pub orderings: Vec<Ordering>,
    pub grid: Vec<f64>,
}

impl Comparison {
    pub fn max_abs_delta(&self) -> f64 {
        self.deltas.iter().map(|d| d.delta().abs()).fold(0.0, f64::max)
    }

    pub fn ordering(&self, user: UserKey, first: &Series, second: &Series) -> Option<&Ordering> {
        self.orderings
            .iter()
            .find(|o| o.user == user && &o.first == first && &o.second == second)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "deltas (b - a) on {} common rows, max |delta| = {}", self.deltas.len(), self.max_abs_delta())?;
        for d in self.deltas.iter().filter(|d| matches!(d.user, UserKey::Mean | UserKey::Sum)) {
            writeln!(
                f,
                "  {:>6} dB {:<24} {:<5} a={:.6} b={:.6} delta={:+.6}",
                d.snr_db,
                d.method.name(),
                d.user.to_string(),
                d.a,
                d.b,
                d.delta()
            )?;
        }
        writeln!(f, "orderings:")?;
        for o in &self.orderings {
            writeln!(f, "  [{}] {}", o.user, o.summary(&self.grid))?;
        }
        Ok(())
    }
}

fn rows_by_key(rows: &[Row]) -> BTreeMap<(u64, Method, UserKey), f64> {
    rows.iter()
        .map(|r| ((r.snr_db.to_bits(), r.method, r.user), r.rate_bits))
        .collect()
}

/// Per-SNR deltas between two sweeps and the ordering of every pair of curves
/// (per-user mean and sum rate) over their common SNR points.
pub fn compare(a: &[Row], b: &[Row]) -> Comparison {
    let ka = rows_by_key(a);
    let kb = rows_by_key(b);
    let mut deltas: Vec<Delta> = ka
        .iter()
        .filter_map(|(key, &va)| {
            kb.get(key).map(|&vb| Delta {
                snr_db: f64::from_bits(key.0),
                method: key.1,
                user: key.2,
                a: va,
                b: vb,
            })
        })
        .collect();
    deltas.sort_by(|x, y| {
        x.snr_db
            .total_cmp(&y.snr_db)
            .then(x.method.cmp(&y.method))
            .then(x.user.cmp(&y.user))
    });

    let grid_of = |rows: &[Row]| -> Vec<f64> {
        let mut g: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    };
    let gb = grid_of(b);
    let grid: Vec<f64> = grid_of(a).into_iter().filter(|s| gb.contains(s)).collect();

    let mut curves: BTreeMap<(UserKey, Series), BTreeMap<u64, f64>> = BTreeMap::new();
    for (file, rows) in [('a', a), ('b', b)] {
        for r in rows.iter().filter(|r| matches!(r.user, UserKey::Mean | UserKey::Sum)) {
            curves
                .entry((r.user, Series { file, method: r.method }))
                .or_default()
                .insert(r.snr_db.to_bits(), r.rate_bits);
        }
    }
    let keys: Vec<(UserKey, Series)> = curves.keys().cloned().collect();
    let mut orderings = Vec::new();
    for (i, (user, first)) in keys.iter().enumerate() {
        for (user2, second) in &keys[i + 1..] {
            if user != user2 {
                continue;
            }
            let (c1, c2) = (&curves[&(*user, first.clone())], &curves[&(*user2, second.clone())]);
            let diffs: Vec<(f64, f64)> = grid
                .iter()
                .filter_map(|&s| Some((s, c1.get(&s.to_bits())? - c2.get(&s.to_bits())?)))
                .collect();
            if diffs.is_empty() || diffs.iter().all(|&(_, d)| d == 0.0) {
                continue;
            }
            let crossovers = diffs
                .windows(2)
                .filter(|w| w[0].1 * w[1].1 < 0.0)
                .map(|w| {
                    let ((s0, d0), (s1, d1)) = (w[0], w[1]);
                    s0 + (s1 - s0) * d0 / (d0 - d1)
                })
                .collect();
            orderings.push(Ordering {
                user: *user,
                first: first.clone(),
                second: second.clone(),
                first_ahead: diffs.iter().filter(|p| p.1 > 0.0).map(|p| p.0).collect(),
                second_ahead: diffs.iter().filter(|p| p.1 < 0.0).map(|p| p.0).collect(),
                crossovers,
            });
        }
    }
    Comparison {
        deltas,
        orderings,
        grid,
    }
}
