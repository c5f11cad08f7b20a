//! The staged pipeline: simulate, solve, pcm, prune, gate, evaluate.
//!
//! With an output directory every stage writes its artifacts there, and a
//! stage that is not run loads its predecessor's artifacts back from disk.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidates::{brute_force_candidate_set, build_candidate_set, evaluate, CandidateSet, EvalReport, GateParams};
use crate::error::{Error, Result};
use crate::factors::Realization;
use crate::io;
use crate::overlap::{anchored_positions, find_overlap_clusters, sigma_upper_bound, Cluster, SearchParams, SigmaBound};
use crate::pcm::build_realization;
use crate::pose_graph::{shared_from_realization, solve_mle, RouteTables, SharedEstimate, SolveSummary, Trajectory};
use crate::sim::{synthesize, ScenarioConfig, ScenarioData};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.json";
pub const REALIZATION_FILE: &str = "realization.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const CANDIDATES_FILE: &str = "candidates.json";
pub const CANDIDATES_CSV: &str = "candidates.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Solve,
    Pcm,
    Prune,
    Gate,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::Solve,
        Stage::Pcm,
        Stage::Prune,
        Stage::Gate,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Solve => "solve",
            Stage::Pcm => "pcm",
            Stage::Prune => "prune",
            Stage::Gate => "gate",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Parses a comma-separated stage list into pipeline order.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>> {
    let mut v = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Stage>>>()?;
    v.sort_unstable();
    v.dedup();
    if v.is_empty() {
        return Err(Error::Config("no stages selected".into()));
    }
    Ok(v)
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub stages: Vec<Stage>,
    pub out: Option<PathBuf>,
    /// Gate every pair instead of the clustered ones.
    pub brute_force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stages: Stage::ALL.to_vec(),
            out: None,
            brute_force: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolvedTrajectories {
    pub alpha: Trajectory,
    pub beta: Trajectory,
    pub alpha_summary: SolveSummary,
    pub beta_summary: SolveSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcmResult {
    pub realization: Realization,
    pub hypotheses: usize,
    pub consistent_pairs: usize,
    /// Direct-path modes known from simulation.
    pub truth: Realization,
    /// The realization equals `truth`.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub sigma: SigmaBound,
    pub params: SearchParams,
    pub buffer: f64,
    pub clusters: Vec<Cluster>,
}

/// Everything a run produced or loaded.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub data: Option<ScenarioData>,
    pub solved: Option<SolvedTrajectories>,
    pub pcm: Option<PcmResult>,
    pub shared: Option<SharedEstimate>,
    pub prune: Option<PruneResult>,
    pub candidates: Option<CandidateSet>,
    pub report: Option<EvalReport>,
    pub timings: BTreeMap<String, f64>,
    tables: Option<RouteTables>,
}

fn stage_err(stage: Stage) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Stage { .. } => e,
        e => Error::Stage {
            stage: stage.name().to_string(),
            source: Box::new(e),
        },
    }
}

struct Runner<'a> {
    config: &'a ScenarioConfig,
    opts: &'a RunOptions,
    a: Artifacts,
}

impl Runner<'_> {
    fn path(&self, name: &str) -> Option<PathBuf> {
        self.opts.out.as_ref().map(|d| d.join(name))
    }

    fn save<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        match self.path(name) {
            Some(p) => io::save_json(&p, v),
            None => Ok(()),
        }
    }

    fn save_text(&self, name: &str, text: &str) -> Result<()> {
        match self.path(name) {
            Some(p) => io::write_text(&p, text),
            None => Ok(()),
        }
    }

    fn load<T: serde::de::DeserializeOwned>(&self, name: &str, producer: Stage) -> Result<T> {
        match self.path(name).filter(|p| p.exists()) {
            Some(p) => io::load_json(&p),
            None => Err(Error::State(format!("{name} is missing; run the {producer} stage first"))),
        }
    }

    fn data(&mut self) -> Result<&ScenarioData> {
        if self.a.data.is_none() {
            self.a.data = Some(self.load(SCENARIO_FILE, Stage::Simulate)?);
        }
        Ok(self.a.data.as_ref().expect("set above"))
    }

    fn solved(&mut self) -> Result<&SolvedTrajectories> {
        if self.a.solved.is_none() {
            self.a.solved = Some(self.load(TRAJECTORIES_FILE, Stage::Solve)?);
        }
        Ok(self.a.solved.as_ref().expect("set above"))
    }

    fn pcm(&mut self) -> Result<&PcmResult> {
        if self.a.pcm.is_none() {
            self.a.pcm = Some(self.load(REALIZATION_FILE, Stage::Pcm)?);
        }
        Ok(self.a.pcm.as_ref().expect("set above"))
    }

    /// Builds the shared estimate and route tables; `false` when the
    /// realization is empty.
    fn ensure_tables(&mut self) -> Result<bool> {
        if self.a.tables.is_none() {
            let realization = self.pcm()?.realization.clone();
            if realization.is_empty() {
                return Ok(false);
            }
            let measurements = self.data()?.measurements.clone();
            let prior = self.config.link_prior;
            let s = self.solved()?;
            let shared = shared_from_realization(&s.alpha, &s.beta, &measurements, &realization, &prior)?;
            let tables = RouteTables::new(&s.alpha, &s.beta, &shared)?;
            self.a.shared = Some(shared);
            self.a.tables = Some(tables);
        }
        Ok(true)
    }

    fn simulate(&mut self) -> Result<()> {
        let data = synthesize(self.config)?;
        self.save(SCENARIO_FILE, &data)?;
        self.a.data = Some(data);
        Ok(())
    }

    fn solve(&mut self) -> Result<()> {
        let params = self.config.pipeline.solver;
        let (mut alpha, mut beta) = self.data()?.trajectories()?;
        let alpha_summary = solve_mle(&mut alpha, &params)?;
        let beta_summary = solve_mle(&mut beta, &params)?;
        let solved = SolvedTrajectories {
            alpha,
            beta,
            alpha_summary,
            beta_summary,
        };
        self.save(TRAJECTORIES_FILE, &solved)?;
        self.a.solved = Some(solved);
        self.a.tables = None;
        Ok(())
    }

    fn run_pcm(&mut self) -> Result<()> {
        let measurements = self.data()?.measurements.clone();
        let truth: Realization = measurements
            .iter()
            .filter_map(|m| m.truth_direct_index.map(|i| (m.id, i)))
            .collect();
        let gamma = self.config.pipeline.gamma;
        let prior = self.config.link_prior;
        let s = self.solved()?;
        let (realization, graph) = build_realization(&measurements, &s.alpha, &s.beta, &prior, gamma)?;
        let result = PcmResult {
            exact: realization == truth,
            hypotheses: graph.nodes.len(),
            consistent_pairs: graph.edge_count(),
            realization,
            truth,
        };
        self.save(REALIZATION_FILE, &result)?;
        self.a.pcm = Some(result);
        self.a.tables = None;
        Ok(())
    }

    fn prune(&mut self) -> Result<()> {
        if !self.ensure_tables()? {
            log::warn!("empty realization; nothing to prune");
            let empty = PruneResult {
                sigma: SigmaBound {
                    alpha: 0.0,
                    link: 0.0,
                    beta: 0.0,
                    sigma_ub: 0.0,
                },
                params: self.search_params(0.0, 0.0),
                buffer: 0.0,
                clusters: Vec::new(),
            };
            return self.finish_prune(empty);
        }
        let (shared, tables) = (self.a.shared.as_ref().expect("built"), self.a.tables.as_ref().expect("built"));
        let s = self.a.solved.as_ref().expect("loaded with tables");
        let sigma = sigma_upper_bound(&s.alpha, &s.beta, tables)?;
        let (beta_positions, spread) = anchored_positions(tables, shared)?;
        let alpha_positions = s.alpha.positions();
        let params = self.search_params(sigma.sigma_ub, spread);
        params.validate()?;
        let clusters = find_overlap_clusters(&alpha_positions, &beta_positions, &params);
        self.finish_prune(PruneResult {
            sigma,
            buffer: crate::overlap::buffer_distance(&params),
            params,
            clusters,
        })
    }

    fn search_params(&self, sigma_ub: f64, link_spread: f64) -> SearchParams {
        let p = &self.config.pipeline;
        SearchParams {
            d_threshold: p.d_threshold,
            sensor_range: self.config.sensor_range,
            sigma_ub,
            link_spread,
            k_split: p.k_split,
            min_cluster: p.min_cluster,
            max_depth: p.max_depth,
        }
    }

    fn finish_prune(&mut self, r: PruneResult) -> Result<()> {
        self.save(CLUSTERS_FILE, &r)?;
        self.save_text(CLUSTERS_CSV, &io::clusters_csv(&r.clusters))?;
        self.a.prune = Some(r);
        Ok(())
    }

    fn gate(&mut self) -> Result<()> {
        let params = GateParams {
            d_threshold: self.config.pipeline.d_threshold,
            sensor_range: self.config.sensor_range,
        };
        let realization = self.pcm()?.realization.clone();
        let set = match self.ensure_tables()? {
            false => CandidateSet {
                realization,
                pairs: Vec::new(),
                d_threshold: params.d_threshold,
                sensor_range: params.sensor_range,
                evaluated_pairs: 0,
                skipped_pairs: 0,
            },
            true if self.opts.brute_force => {
                brute_force_candidate_set(self.a.tables.as_ref().expect("built"), &realization, &params)?
            }
            true => {
                if self.a.prune.is_none() {
                    self.a.prune = Some(self.load(CLUSTERS_FILE, Stage::Prune)?);
                }
                let clusters = &self.a.prune.as_ref().expect("set above").clusters;
                build_candidate_set(clusters, self.a.tables.as_ref().expect("built"), &realization, &params)?
            }
        };
        if set.skipped_pairs > 0 {
            log::warn!("{} pairs skipped for singular gate covariance", set.skipped_pairs);
        }
        self.save(CANDIDATES_FILE, &set)?;
        self.save_text(CANDIDATES_CSV, &io::candidates_csv(&set))?;
        self.a.candidates = Some(set);
        Ok(())
    }

    fn evaluate(&mut self) -> Result<()> {
        if self.a.candidates.is_none() {
            self.a.candidates = Some(self.load(CANDIDATES_FILE, Stage::Gate)?);
        }
        let shared = if self.ensure_tables()? { self.a.shared.clone() } else { None };
        let truth = self.data()?.truth.clone();
        let seed = self.data()?.seed;
        let s = self.solved()?.clone();
        let g = self.a.candidates.as_ref().expect("set above");
        let mut report = evaluate(
            g,
            &s.alpha,
            &s.beta,
            shared.as_ref().map(|s| &s.relative),
            &truth,
            self.config.true_lc_radius,
        )?;
        report.seed = seed;
        let mut placed = vec![(s.alpha.robot, s.alpha.poses.clone())];
        if let Some(sh) = &shared {
            placed.push((s.beta.robot, s.beta.poses.iter().map(|p| sh.relative.then(p)).collect()));
        }
        self.save(REPORT_FILE, &report)?;
        self.save_text(TRAJECTORIES_CSV, &io::trajectories_csv(&placed))?;
        self.a.report = Some(report);
        Ok(())
    }
}

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "WICLOSURE_THREADS";

/// Sizes the global worker pool from `WICLOSURE_THREADS` when set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the selected stages of `config` in order.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> Result<Artifacts> {
    config.validate().map_err(stage_err(Stage::Simulate))?;
    let mut r = Runner {
        config,
        opts,
        a: Artifacts::default(),
    };
    let mut stages = opts.stages.clone();
    stages.sort_unstable();
    stages.dedup();
    for stage in stages {
        let t0 = Instant::now();
        match stage {
            Stage::Simulate => r.simulate(),
            Stage::Solve => r.solve(),
            Stage::Pcm => r.run_pcm(),
            Stage::Prune if opts.brute_force => Ok(()),
            Stage::Prune => r.prune(),
            Stage::Gate => r.gate(),
            Stage::Evaluate => r.evaluate(),
        }
        .map_err(stage_err(stage))?;
        let secs = t0.elapsed().as_secs_f64();
        log::info!("stage {stage} finished in {secs:.3} s");
        r.a.timings.insert(stage.name().to_string(), secs);
    }
    if let Some(report) = r.a.report.as_mut() {
        report.timings = r.a.timings.clone();
    }
    if r.opts.out.is_some() {
        r.save(TIMINGS_FILE, &r.a.timings)?;
    }
    Ok(r.a)
}

/// Per-stage wall-clock statistics over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub metric: String,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
    pub total_pairs: usize,
    pub clustered_pairs: usize,
    pub brute_force_pairs: usize,
}

fn stats(metric: &str, mut v: Vec<f64>) -> BenchRow {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    BenchRow {
        metric: metric.to_string(),
        median,
        min: v.first().copied().unwrap_or(0.0),
        max: v.last().copied().unwrap_or(0.0),
    }
}

/// Runs the full pipeline `repeats` times clustered, then once brute force
/// for the pair-evaluation baseline.
pub fn bench(config: &ScenarioConfig, repeats: usize) -> Result<BenchResult> {
    if repeats < 3 {
        return Err(Error::Config(format!("bench needs at least 3 repeats, got {repeats}")));
    }
    let mut per_stage: BTreeMap<Stage, Vec<f64>> = BTreeMap::new();
    let mut totals = Vec::new();
    let mut last = None;
    for _ in 0..repeats {
        let a = run(config, &RunOptions::default())?;
        for st in Stage::ALL {
            per_stage.entry(st).or_default().push(a.timings.get(st.name()).copied().unwrap_or(0.0));
        }
        totals.push(a.timings.values().sum());
        last = Some(a);
    }
    let last = last.expect("repeats ≥ 3");
    let brute = run(
        config,
        &RunOptions {
            brute_force: true,
            ..RunOptions::default()
        },
    )?;
    let mut rows: Vec<BenchRow> = per_stage.into_iter().map(|(st, v)| stats(st.name(), v)).collect();
    rows.push(stats("total", totals));
    let evaluated = |a: &Artifacts| a.candidates.as_ref().map_or(0, |c| c.evaluated_pairs);
    Ok(BenchResult {
        repeats,
        rows,
        total_pairs: last.report.as_ref().map_or(0, |r| if evaluated(&last) == 0 && evaluated(&brute) == 0 { 0 } else { r.total_pairs }),
        clustered_pairs: evaluated(&last),
        brute_force_pairs: evaluated(&brute),
    })
}

/// CSV with one row per stage timing plus the pair counts.
pub fn bench_csv(b: &BenchResult) -> String {
    let mut s = String::from("metric,median,min,max\n");
    for r in &b.rows {
        s.push_str(&format!("{}_s,{},{},{}\n", r.metric, r.median, r.min, r.max));
    }
    for (name, v) in [
        ("total_pairs", b.total_pairs),
        ("clustered_pairs", b.clustered_pairs),
        ("brute_force_pairs", b.brute_force_pairs),
    ] {
        s.push_str(&format!("{name},{v},{v},{v}\n"));
    }
    s
}

/// Loads a persisted artifact and pretty-prints it as JSON; CSV and TUM files
/// are returned as they are.
pub fn inspect(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.display().to_string(),
                source,
            })?;
            Ok(io::to_json(&v))
        }
        _ => Ok(text),
    }
}
