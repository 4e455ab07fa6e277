//! Experiment driver: JSON configs describing task grids and methods, result
//! records written as each cell finishes, replay, and CSV plot data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{save_checkpoint_file, train, write_learning_curve, CurvePoint, TrainConfig};
use crate::baselines::{exhaustive_search, grape_optimize, run_greedy, GrapeConfig, GreedyMode, EXHAUSTIVE_MAX_N};
use crate::env::{run_protocol, EnvConfig, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::lindblad::LadderModel;
use crate::parallel;
use crate::protocol::Protocol;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Named eigenenergy sets for four-level models.
pub fn named_energies(name: &str) -> Option<Vec<f64>> {
    match name {
        "appendixD-uniform" => Some(vec![0.40252154, 0.68846289, 0.8557115, 0.25471114]),
        "appendixD-degenerate" => Some(vec![1.0, 2.0, 2.0, 3.0]),
        _ => None,
    }
}

pub const DEFAULT_SWEEP: [f64; 6] = [0.05, 0.06, 0.07, 0.08, 0.09, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannel {
    Dephasing,
    Decay,
}

/// One fully resolved control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub n: usize,
    pub energies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_set: Option<String>,
    pub gamma: f64,
    pub dephasing: f64,
    pub decay: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub dt: f64,
    pub initial: usize,
    pub target: usize,
    /// Set on tasks expanded from a noise sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<NoiseChannel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_rate: Option<f64>,
}

impl TaskSpec {
    pub fn env_config(&self) -> Result<EnvConfig<f64>> {
        let model = LadderModel::new(self.energies.clone(), self.gamma, self.dephasing, self.decay)?;
        EnvConfig::new(model, self.steps, self.dt)?.with_levels(self.initial, self.target)
    }

    pub fn total_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Greedy,
    Lyapunov,
    Rl {
        #[serde(flatten)]
        train: TrainConfig,
        #[serde(default)]
        checkpoint: bool,
    },
    Grape(GrapeConfig),
    Exhaustive { max_n: usize },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Greedy => "greedy",
            MethodSpec::Lyapunov => "lyapunov",
            MethodSpec::Rl { .. } => "rl",
            MethodSpec::Grape(_) => "grape",
            MethodSpec::Exhaustive { .. } => "exhaustive",
        }
    }

    /// Seeded methods get one cell per seed plus a best-of-seeds summary.
    pub fn is_seeded(&self) -> bool {
        matches!(self, MethodSpec::Rl { .. } | MethodSpec::Grape(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub tasks: Vec<TaskSpec>,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_workers: Option<usize>,
}

fn cfg_err(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

fn get_f64(obj: &Map<String, Value>, key: &str, prefix: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| cfg_err(format!("{prefix}{key}"), "expected a finite number")),
    }
}

fn get_usize(obj: &Map<String, Value>, key: &str, prefix: &str) -> Result<Option<usize>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|x| Some(x as usize))
            .ok_or_else(|| cfg_err(format!("{prefix}{key}"), "expected a non-negative integer")),
    }
}

fn require<T>(v: Option<T>, key: &str, prefix: &str) -> Result<T> {
    v.ok_or_else(|| cfg_err(format!("{prefix}{key}"), "missing required key"))
}

const TASK_KEYS: [&str; 14] = [
    "id", "n", "energies", "gamma", "dephasing", "decay", "sqrt_dephasing", "sqrt_decay", "N", "dt", "initial",
    "target", "sweep", "T",
];

/// Parses one task object; a `sweep` expands it into one task per rate.
fn parse_task(obj: &Map<String, Value>, prefix: &str) -> Result<Vec<TaskSpec>> {
    let n = require(get_usize(obj, "n", prefix)?, "n", prefix)?;
    if n < 2 {
        return Err(cfg_err(format!("{prefix}n"), "need at least two levels"));
    }
    let gamma = require(get_f64(obj, "gamma", prefix)?, "gamma", prefix)?;
    let steps = require(get_usize(obj, "N", prefix)?, "N", prefix)?;
    let dt = get_f64(obj, "dt", prefix)?.unwrap_or(DEFAULT_DT);
    if let Some(t) = get_f64(obj, "T", prefix)? {
        if (t - steps as f64 * dt).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(cfg_err(format!("{prefix}T"), format!("T = {t} disagrees with N·dt = {}", steps as f64 * dt)));
        }
    }
    let (energies, energy_set) = match obj.get("energies") {
        None | Some(Value::Null) => ((1..=n).map(|k| k as f64).collect(), None),
        Some(Value::String(name)) => {
            let e = named_energies(name)
                .ok_or_else(|| cfg_err(format!("{prefix}energies"), format!("unknown energy set `{name}`")))?;
            (e, Some(name.clone()))
        }
        Some(Value::Array(a)) => {
            let e = a
                .iter()
                .map(|v| v.as_f64())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| cfg_err(format!("{prefix}energies"), "expected numbers"))?;
            (e, None)
        }
        Some(_) => return Err(cfg_err(format!("{prefix}energies"), "expected an array or a set name")),
    };
    if energies.len() != n {
        return Err(cfg_err(format!("{prefix}energies"), format!("{} energies for n = {n}", energies.len())));
    }
    let rate = |plain: &str, sqrt: &str| -> Result<f64> {
        match (get_f64(obj, plain, prefix)?, get_f64(obj, sqrt, prefix)?) {
            (Some(_), Some(_)) => Err(cfg_err(format!("{prefix}{sqrt}"), format!("give either {plain} or {sqrt}"))),
            (Some(r), None) => Ok(r),
            (None, Some(s)) => Ok(s * s),
            (None, None) => Ok(0.0),
        }
    };
    let dephasing = rate("dephasing", "sqrt_dephasing")?;
    let decay = rate("decay", "sqrt_decay")?;
    let initial = get_usize(obj, "initial", prefix)?.unwrap_or(1);
    let target = get_usize(obj, "target", prefix)?.unwrap_or(n);
    let id = match obj.get("id") {
        None => format!("n{n}-g{gamma}-N{steps}"),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => return Err(cfg_err(format!("{prefix}id"), "expected a non-empty string")),
    };
    let base = TaskSpec {
        id,
        n,
        energies,
        energy_set,
        gamma,
        dephasing,
        decay,
        steps,
        dt,
        initial,
        target,
        family: None,
        channel: None,
        sqrt_rate: None,
    };
    base.env_config().map_err(|e| cfg_err(prefix.trim_end_matches('.'), e.to_string()))?;
    let Some(sweep) = obj.get("sweep") else {
        return Ok(vec![base]);
    };
    let sp = format!("{prefix}sweep.");
    let sweep = sweep.as_object().ok_or_else(|| cfg_err(format!("{prefix}sweep"), "expected an object"))?;
    let channel: NoiseChannel = serde_json::from_value(
        sweep.get("channel").cloned().ok_or_else(|| cfg_err(format!("{sp}channel"), "missing required key"))?,
    )
    .map_err(|e| cfg_err(format!("{sp}channel"), e.to_string()))?;
    let rates = match sweep.get("sqrt_rates") {
        None => DEFAULT_SWEEP.to_vec(),
        Some(v) => serde_json::from_value::<Vec<f64>>(v.clone()).map_err(|e| cfg_err(format!("{sp}sqrt_rates"), e.to_string()))?,
    };
    rates
        .into_iter()
        .map(|s| {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(cfg_err(format!("{sp}sqrt_rates"), format!("bad rate {s}")));
            }
            let mut t = base.clone();
            match channel {
                NoiseChannel::Dephasing => t.dephasing = s * s,
                NoiseChannel::Decay => t.decay = s * s,
            }
            t.id = format!("{}-{}-{s}", base.id, serde_json::to_value(channel)?.as_str().unwrap_or("noise"));
            t.family = Some(base.id.clone());
            t.channel = Some(channel);
            t.sqrt_rate = Some(s);
            Ok(t)
        })
        .collect()
}

fn parse_method(v: &Value, idx: usize) -> Result<MethodSpec> {
    let key = format!("methods[{idx}]");
    let (name, settings) = match v {
        Value::String(s) => (s.clone(), Map::new()),
        Value::Object(o) => {
            let name = o
                .get("method")
                .and_then(Value::as_str)
                .ok_or_else(|| cfg_err(format!("{key}.method"), "missing method name"))?
                .to_string();
            let mut rest = o.clone();
            rest.remove("method");
            (name, rest)
        }
        _ => return Err(cfg_err(key, "expected a method name or object")),
    };
    let settings_err = |e: serde_json::Error| cfg_err(key.clone(), format!("{name} settings: {e}"));
    let no_settings = |spec: MethodSpec| {
        if let Some(k) = settings.keys().next() {
            Err(cfg_err(format!("{key}.{k}"), format!("`{name}` takes no settings")))
        } else {
            Ok(spec)
        }
    };
    match name.as_str() {
        "greedy" | "lookahead" => no_settings(MethodSpec::Greedy),
        "lyapunov" => no_settings(MethodSpec::Lyapunov),
        "rl" | "dppo" => {
            let mut s = settings.clone();
            let checkpoint = s.remove("checkpoint").and_then(|v| v.as_bool()).unwrap_or(false);
            for k in s.keys() {
                if !RL_KEYS.contains(&k.as_str()) {
                    return Err(cfg_err(format!("{key}.{k}"), "unknown rl setting"));
                }
            }
            let train: TrainConfig = serde_json::from_value(Value::Object(s)).map_err(settings_err)?;
            train.validate().map_err(|e| match e {
                Error::Config { key: k, reason } => cfg_err(format!("{key}.{k}"), reason),
                other => other,
            })?;
            Ok(MethodSpec::Rl { train, checkpoint })
        }
        "grape" => {
            for k in settings.keys() {
                if !GRAPE_KEYS.contains(&k.as_str()) {
                    return Err(cfg_err(format!("{key}.{k}"), "unknown grape setting"));
                }
            }
            let g: GrapeConfig = serde_json::from_value(Value::Object(settings.clone())).map_err(settings_err)?;
            g.validate().map_err(|e| match e {
                Error::Config { key: k, reason } => cfg_err(format!("{key}.{k}"), reason),
                other => other,
            })?;
            Ok(MethodSpec::Grape(g))
        }
        "exhaustive" => {
            let max_n = get_usize(&settings, "max_n", &format!("{key}."))?.unwrap_or(EXHAUSTIVE_MAX_N);
            if let Some(k) = settings.keys().find(|k| *k != "max_n") {
                return Err(cfg_err(format!("{key}.{k}"), "unknown exhaustive setting"));
            }
            Ok(MethodSpec::Exhaustive { max_n })
        }
        other => Err(cfg_err(format!("{key}.method"), format!("unknown method `{other}`"))),
    }
}

const RL_KEYS: [&str; 12] = [
    "workers", "clip_eps", "learning_rate", "discount", "update_epochs", "iterations", "hidden_width", "hidden_depth",
    "seed", "normalize_advantages", "stop_at_fidelity", "max_episodes",
];
const GRAPE_KEYS: [&str; 6] = ["max_iterations", "step_size", "restarts", "gradient_mode", "convergence_tol", "window"];

/// Validates a config document and fills defaults (`dt = 0.5`, initial
/// level 1, target level n, seeds 0..5).
pub fn parse_config(doc: &Value) -> Result<ExperimentConfig> {
    let obj = doc.as_object().ok_or_else(|| cfg_err("$", "config must be a JSON object"))?;
    let top_keys = ["name", "tasks", "methods", "seeds", "out_dir", "max_workers"];
    for k in obj.keys() {
        if !top_keys.contains(&k.as_str()) && !TASK_KEYS.contains(&k.as_str()) {
            return Err(cfg_err(k.clone(), "unknown key"));
        }
    }
    let tasks = match obj.get("tasks") {
        Some(Value::Array(list)) => {
            if let Some(k) = obj.keys().find(|k| TASK_KEYS.contains(&k.as_str())) {
                return Err(cfg_err(k.clone(), "task keys belong inside `tasks`"));
            }
            let mut out = Vec::new();
            for (i, t) in list.iter().enumerate() {
                let prefix = format!("tasks[{i}].");
                let to = t.as_object().ok_or_else(|| cfg_err(format!("tasks[{i}]"), "expected an object"))?;
                if let Some(k) = to.keys().find(|k| !TASK_KEYS.contains(&k.as_str())) {
                    return Err(cfg_err(format!("{prefix}{k}"), "unknown key"));
                }
                out.extend(parse_task(to, &prefix)?);
            }
            out
        }
        Some(_) => return Err(cfg_err("tasks", "expected an array")),
        None => parse_task(obj, "")?,
    };
    let mut seen = std::collections::HashSet::new();
    for t in &tasks {
        if !seen.insert(t.id.clone()) {
            return Err(cfg_err("tasks", format!("duplicate task id `{}`", t.id)));
        }
    }
    let methods = match obj.get("methods") {
        Some(Value::Array(list)) => list.iter().enumerate().map(|(i, m)| parse_method(m, i)).collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(cfg_err("methods", "expected an array")),
        None => return Err(cfg_err("methods", "missing required key")),
    };
    let seeds = match obj.get("seeds") {
        None => (0..5).collect(),
        Some(v) => serde_json::from_value::<Vec<u64>>(v.clone()).map_err(|e| cfg_err("seeds", e.to_string()))?,
    };
    if seeds.is_empty() && methods.iter().any(MethodSpec::is_seeded) {
        return Err(cfg_err("seeds", "seeded methods need at least one seed"));
    }
    let name = match obj.get("name") {
        None => tasks.first().map_or_else(|| "experiment".to_string(), |t| t.id.clone()),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(cfg_err("name", "expected a string")),
    };
    let out_dir = match obj.get("out_dir") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(cfg_err("out_dir", "expected a path string")),
    };
    let max_workers = get_usize(obj, "max_workers", "")?;
    Ok(ExperimentConfig { name, tasks, methods, seeds, out_dir, max_workers })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text)?;
    parse_config(&doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    pub task_id: String,
    /// `None` for deterministic methods and for best-of-seeds summaries.
    pub seed: Option<u64>,
    /// `"best_of_seeds"` on summary records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<String>,
    pub task: TaskSpec,
    pub best_fidelity: f64,
    /// RL only: argmax rollout of the final policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_policy_fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_fidelity: Option<f64>,
    pub protocol: Protocol<f64>,
    /// Fidelity before the first slice and after each slice.
    pub trajectory: Vec<f64>,
    /// Final density matrix as row-major `[re, im]` pairs.
    pub final_state: Vec<[f64; 2]>,
    pub episodes_or_iterations: usize,
    pub wall_seconds: f64,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_curve: Option<Vec<CurvePoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub task_id: String,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutcome {
    /// Best-of-seeds summary when present, else the single record.
    pub fn best(&self, task_id: &str, method: &str) -> Option<&ResultRecord> {
        let mut cands = self.records.iter().filter(|r| r.task_id == task_id && r.method == method);
        let all: Vec<_> = cands.by_ref().collect();
        all.iter().find(|r| r.aggregate.is_some()).or_else(|| all.first()).copied()
    }
}

#[derive(Debug, Clone)]
struct Cell {
    task: usize,
    method: usize,
    seed: Option<u64>,
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for task in 0..config.tasks.len() {
        for (method, m) in config.methods.iter().enumerate() {
            if m.is_seeded() {
                out.extend(config.seeds.iter().map(|&s| Cell { task, method, seed: Some(s) }));
            } else {
                out.push(Cell { task, method, seed: None });
            }
        }
    }
    out
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

fn record_name(r: &ResultRecord) -> String {
    let tag = match (r.seed, &r.aggregate) {
        (Some(s), _) => format!("seed{s}"),
        (None, Some(a)) => a.clone(),
        (None, None) => "single".into(),
    };
    format!("{}__{}__{}", file_stem(&r.task_id), r.method, tag)
}

/// Serialized output; one file per record, replaced atomically.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d.join("records"))?;
            fs::create_dir_all(d.join("curves"))?;
        }
        Ok(Self { dir })
    }

    fn write_record(&self, r: &ResultRecord) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let name = record_name(r);
        let path = dir.join("records").join(format!("{name}.json"));
        let tmp = path.with_extension("json.tmp");
        let mut bytes = serde_json::to_vec_pretty(r)?;
        bytes.push(b'\n');
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        if let Some(curve) = &r.learning_curve {
            let f = fs::File::create(dir.join("curves").join(format!("{name}.csv")))?;
            write_learning_curve(std::io::BufWriter::new(f), curve)?;
        }
        Ok(())
    }

    fn write_failure(&self, f: &CellFailure) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut file = fs::OpenOptions::new().create(true).append(true).open(dir.join("failures.jsonl"))?;
        writeln!(file, "{}", serde_json::to_string(f)?)?;
        Ok(())
    }
}

fn seconds(t: Instant) -> f64 {
    // Timing would make records differ between otherwise identical runs.
    if parallel::deterministic() {
        0.0
    } else {
        t.elapsed().as_secs_f64()
    }
}

fn run_cell(config: &ExperimentConfig, cell: &Cell, out_dir: Option<&Path>) -> Result<ResultRecord> {
    let task = &config.tasks[cell.task];
    let method = &config.methods[cell.method];
    let env = task.env_config()?;
    let started = Instant::now();
    let seed = cell.seed.unwrap_or(0);
    let (protocol, best, final_policy, used, curve) = match method {
        MethodSpec::Greedy | MethodSpec::Lyapunov => {
            let mode = if matches!(method, MethodSpec::Greedy) { GreedyMode::Lookahead } else { GreedyMode::Lyapunov };
            let run = run_greedy(&env, mode)?;
            let f = run.trajectory.final_fidelity();
            (run.protocol, f, None, task.steps, None)
        }
        MethodSpec::Rl { train: tc, checkpoint } => {
            let tc = TrainConfig { seed, ..tc.clone() };
            let res = train(&tc, &env)?;
            if *checkpoint {
                if let Some(dir) = out_dir {
                    let ck = dir.join("checkpoints");
                    fs::create_dir_all(&ck)?;
                    let path = ck.join(format!("{}__rl__seed{seed}.ckpt", file_stem(&task.id)));
                    save_checkpoint_file(&path, &res.agent, seed, res.iterations)?;
                }
            }
            let mut curve = res.curve.clone();
            if parallel::deterministic() {
                curve.iter_mut().for_each(|p| p.wall_seconds = 0.0);
            }
            (res.best_protocol, res.best_fidelity, Some(res.final_policy_fidelity), res.episodes, Some(curve))
        }
        MethodSpec::Grape(g) => {
            let res = grape_optimize(&env, g, seed)?;
            (res.protocol, res.fidelity, None, res.iterations, None)
        }
        MethodSpec::Exhaustive { max_n } => {
            let res = exhaustive_search(&env, *max_n)?;
            (res.protocol, res.fidelity, None, 1usize << task.steps, None)
        }
    };
    let played = run_protocol(&env, &protocol)?;
    let final_state = played.final_state.matrix().iter().map(|z| [z.re, z.im]).collect();
    let trajectory = played.fidelities;
    Ok(ResultRecord {
        method: method.name().into(),
        task_id: task.id.clone(),
        seed: cell.seed,
        aggregate: None,
        task: task.clone(),
        best_fidelity: best,
        final_policy_fidelity: final_policy,
        median_fidelity: None,
        protocol,
        trajectory,
        final_state,
        episodes_or_iterations: used,
        wall_seconds: seconds(started),
        version: VERSION.into(),
        learning_curve: curve,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Summary over the seeds of one (task, method): the best seed's record with
/// the median attached.
fn best_of_seeds(records: &[&ResultRecord]) -> Option<ResultRecord> {
    let best = records.iter().copied().reduce(|a, b| if b.best_fidelity > a.best_fidelity { b } else { a })?;
    let mut summary = best.clone();
    summary.seed = None;
    summary.aggregate = Some("best_of_seeds".into());
    summary.median_fidelity = Some(median(records.iter().map(|r| r.best_fidelity).collect()));
    summary.wall_seconds = records.iter().map(|r| r.wall_seconds).sum();
    summary.learning_curve = None;
    Some(summary)
}

/// Runs every (task, method, seed) cell. Each finished record is written
/// before the next result is reported; failed cells go to the failure log.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let sink = Mutex::new(Sink::new(config.out_dir.clone())?);
    let cells = cells(config);
    let results = parallel::with_worker_cap(config.max_workers, || {
        parallel::map_indexed(cells.len(), |i| {
            let cell = &cells[i];
            let out = run_cell(config, cell, config.out_dir.as_deref());
            let guard = sink.lock().expect("sink lock");
            match out {
                Ok(rec) => guard.write_record(&rec).map(|_| Ok(rec)),
                Err(e) => {
                    let fail = CellFailure {
                        method: config.methods[cell.method].name().into(),
                        task_id: config.tasks[cell.task].id.clone(),
                        seed: cell.seed,
                        error: e.to_string(),
                    };
                    guard.write_failure(&fail).map(|_| Err(fail))
                }
            }
        })
    });
    let mut outcome = ExperimentOutcome::default();
    for r in results {
        match r? {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    let sink = sink.into_inner().expect("sink lock");
    let mut summaries = Vec::new();
    for task in &config.tasks {
        for m in config.methods.iter().filter(|m| m.is_seeded()) {
            let per_seed: Vec<&ResultRecord> = outcome
                .records
                .iter()
                .filter(|r| r.task_id == task.id && r.method == m.name() && r.seed.is_some())
                .collect();
            if let Some(s) = best_of_seeds(&per_seed) {
                sink.write_record(&s)?;
                summaries.push(s);
            }
        }
    }
    outcome.records.extend(summaries);
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub task_id: String,
    pub final_fidelity: f64,
    pub trajectory: Vec<f64>,
    pub recorded_fidelity: Option<f64>,
    pub abs_error: Option<f64>,
}

#[derive(Deserialize)]
struct ReplayInput {
    task: TaskSpec,
    protocol: Protocol<f64>,
    #[serde(default)]
    best_fidelity: Option<f64>,
}

/// Plays back a record (or any `{task, protocol}` document).
pub fn replay_value(doc: &Value) -> Result<ReplayReport> {
    let input: ReplayInput = serde_json::from_value(doc.clone())?;
    let env = input.task.env_config()?;
    let traj = run_protocol(&env, &input.protocol)?;
    let f = traj.final_fidelity();
    Ok(ReplayReport {
        task_id: input.task.id,
        final_fidelity: f,
        trajectory: traj.fidelities,
        recorded_fidelity: input.best_fidelity,
        abs_error: input.best_fidelity.map(|b| (b - f).abs()),
    })
}

pub fn replay_file(path: &Path) -> Result<ReplayReport> {
    let doc: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    replay_value(&doc)
}

/// Reads every `*.json` record below `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<ResultRecord>> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    FidelityVsRate,
    FidelityVsTime,
    LearningCurve,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fidelity_vs_rate" => Ok(PlotKind::FidelityVsRate),
            "fidelity_vs_time" => Ok(PlotKind::FidelityVsTime),
            "learning_curve" => Ok(PlotKind::LearningCurve),
            _ => Err(cfg_err("kind", format!("unknown plot kind `{s}`"))),
        }
    }
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::FidelityVsRate => "fidelity_vs_rate",
            PlotKind::FidelityVsTime => "fidelity_vs_time",
            PlotKind::LearningCurve => "learning_curve",
        }
    }

    pub fn columns(self) -> &'static [(&'static str, &'static str)] {
        match self {
            PlotKind::FidelityVsRate => &[
                ("method", "optimizer name"),
                ("channel", "noise channel swept (dephasing or decay)"),
                ("n", "number of levels"),
                ("sqrt_rate", "square root of the swept rate"),
                ("best_fidelity", "best terminal fidelity (best of seeds for seeded methods)"),
            ],
            PlotKind::FidelityVsTime => &[
                ("method", "optimizer name"),
                ("step", "slice index, 0 is the initial state"),
                ("time", "step times dt"),
                ("fidelity", "target population after the step"),
            ],
            PlotKind::LearningCurve => &[
                ("seed", "training seed"),
                ("iteration", "PPO iteration"),
                ("episodes_so_far", "episodes collected up to this iteration"),
                ("mean_fidelity", "mean terminal fidelity of the sampled episodes"),
                ("best_fidelity", "best fidelity seen so far"),
                ("wall_seconds", "elapsed wall time"),
            ],
        }
    }
}

/// Keeps one record per (task, method): the best-of-seeds summary, else the
/// best seed.
fn best_per_method(records: &[ResultRecord]) -> BTreeMap<(String, String), &ResultRecord> {
    let mut map: BTreeMap<(String, String), &ResultRecord> = BTreeMap::new();
    for r in records {
        let key = (r.task_id.clone(), r.method.clone());
        let replace = match map.get(&key) {
            None => true,
            Some(cur) => match (cur.aggregate.is_some(), r.aggregate.is_some()) {
                (false, true) => true,
                (true, false) => false,
                _ => r.best_fidelity > cur.best_fidelity,
            },
        };
        if replace {
            map.insert(key, r);
        }
    }
    map
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// Writes one CSV per (kind, task or sweep family) plus `<kind>.schema.json`.
/// Returns the CSV paths in sorted order.
pub fn emit_plot_data(records: &[ResultRecord], kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let schema: Vec<Value> = kind
        .columns()
        .iter()
        .map(|(c, d)| serde_json::json!({ "name": c, "description": d }))
        .collect();
    let schema = serde_json::json!({ "kind": kind.name(), "file_pattern": format!("{}__<group>.csv", kind.name()), "columns": schema });
    fs::write(out_dir.join(format!("{}.schema.json", kind.name())), serde_json::to_string_pretty(&schema)? + "\n")?;
    let header: Vec<&str> = kind.columns().iter().map(|c| c.0).collect();
    let mut groups: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    match kind {
        PlotKind::FidelityVsRate => {
            for ((_, method), r) in best_per_method(records) {
                let (Some(fam), Some(ch), Some(s)) = (&r.task.family, r.task.channel, r.task.sqrt_rate) else { continue };
                let ch = serde_json::to_value(ch)?.as_str().unwrap_or_default().to_string();
                groups.entry(format!("{fam}-{ch}")).or_default().push(vec![
                    method.clone(),
                    ch,
                    r.task.n.to_string(),
                    s.to_string(),
                    r.best_fidelity.to_string(),
                ]);
            }
        }
        PlotKind::FidelityVsTime => {
            for ((task, method), r) in best_per_method(records) {
                let rows = groups.entry(task.clone()).or_default();
                for (k, f) in r.trajectory.iter().enumerate() {
                    rows.push(vec![method.clone(), k.to_string(), (k as f64 * r.task.dt).to_string(), f.to_string()]);
                }
            }
        }
        PlotKind::LearningCurve => {
            let mut rl: Vec<&ResultRecord> = records.iter().filter(|r| r.learning_curve.is_some() && r.seed.is_some()).collect();
            rl.sort_by(|a, b| (&a.task_id, a.seed).cmp(&(&b.task_id, b.seed)));
            for r in rl {
                let rows = groups.entry(r.task_id.clone()).or_default();
                for p in r.learning_curve.as_deref().unwrap_or_default() {
                    rows.push(vec![
                        r.seed.unwrap_or_default().to_string(),
                        p.iteration.to_string(),
                        p.episodes_so_far.to_string(),
                        p.mean_fidelity.to_string(),
                        p.best_fidelity.to_string(),
                        p.wall_seconds.to_string(),
                    ]);
                }
            }
        }
    }
    if kind == PlotKind::FidelityVsRate {
        for rows in groups.values_mut() {
            rows.sort_by(|a, b| {
                (&a[0], a[3].parse::<f64>().unwrap_or(0.0))
                    .partial_cmp(&(&b[0], b[3].parse::<f64>().unwrap_or(0.0)))
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
    }
    let mut written = Vec::new();
    if groups.is_empty() {
        let path = out_dir.join(format!("{}.csv", kind.name()));
        let mut w = csv_writer(&path)?;
        w.write_record(&header)?;
        w.flush()?;
        written.push(path);
    }
    for (group, rows) in groups {
        let path = out_dir.join(format!("{}__{}.csv", kind.name(), file_stem(&group)));
        let mut w = csv_writer(&path)?;
        w.write_record(&header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(&json!({"n": 2, "gamma": 0.1, "N": 110, "methods": ["greedy"]})).unwrap();
        let t = &c.tasks[0];
        assert_eq!((t.dt, t.initial, t.target), (0.5, 1, 2));
        assert_eq!(t.energies, vec![1.0, 2.0]);
        assert_eq!(c.methods, vec![MethodSpec::Greedy]);
        assert_eq!(c.seeds.len(), 5);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let key_of = |doc: Value| match parse_config(&doc) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(key_of(json!({"n": 2, "gamma": 0.1, "methods": []})), "N");
        assert_eq!(key_of(json!({"n": 2, "gamma": 0.1, "N": 4, "methods": ["magic"]})), "methods[0].method");
        assert_eq!(key_of(json!({"n": 2, "gamma": 0.1, "N": 4})), "methods");
        assert_eq!(key_of(json!({"n": 2, "gamma": 0.1, "N": 4, "methods": [], "colour": 1})), "colour");
        assert_eq!(
            key_of(json!({"tasks": [{"n": 3, "gamma": 0.1}], "methods": []})),
            "tasks[0].N"
        );
        assert_eq!(
            key_of(json!({"n": 2, "gamma": 0.1, "N": 4, "methods": [{"method": "rl", "discount": 2.0}]})),
            "methods[0].discount"
        );
        assert_eq!(
            key_of(json!({"n": 2, "gamma": 0.1, "N": 4, "methods": [{"method": "grape", "restart": 3}]})),
            "methods[0].restart"
        );
        assert_eq!(key_of(json!({"n": 4, "gamma": 0.1, "N": 4, "energies": "nope", "methods": []})), "energies");
        assert_eq!(key_of(json!({"n": 2, "gamma": 0.1, "N": 4, "T": 3.0, "methods": []})), "T");
    }

    #[test]
    fn named_energy_sets_and_sweeps() {
        let c = parse_config(&json!({
            "n": 4, "gamma": 0.8, "N": 82, "energies": "appendixD-uniform",
            "sweep": {"channel": "decay"}, "methods": ["greedy"], "seeds": [1]
        }))
        .unwrap();
        assert_eq!(c.tasks.len(), 6);
        assert_eq!(c.tasks[0].energies, vec![0.40252154, 0.68846289, 0.8557115, 0.25471114]);
        assert!((c.tasks[5].decay - 0.01).abs() < 1e-15);
        assert_eq!(c.tasks[5].sqrt_rate, Some(0.1));
        assert_eq!(c.tasks[2].family.as_deref(), Some("n4-g0.8-N82"));
        assert_eq!(named_energies("appendixD-degenerate").unwrap(), vec![1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn dephasing_grid_has_24_cells_per_method() {
        let tasks: Vec<Value> = [(4, 0.8, 82), (6, 1.1, 86), (8, 1.4, 88), (10, 1.9, 98)]
            .iter()
            .map(|&(n, g, s)| json!({"n": n, "gamma": g, "N": s, "sweep": {"channel": "dephasing"}}))
            .collect();
        let c = parse_config(&json!({"tasks": tasks, "methods": ["greedy", "lyapunov"], "seeds": []})).unwrap();
        assert_eq!(cells(&c).len(), 48);
    }

    #[test]
    fn empty_method_list_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(&json!({"n": 2, "gamma": 0.1, "N": 5, "methods": []})).unwrap();
        c.out_dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&c).unwrap();
        assert!(out.records.is_empty() && out.failures.is_empty());
    }

    #[test]
    fn records_replay_and_failures_are_logged() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(&json!({
            "n": 3, "gamma": 0.6, "N": 18,
            "methods": ["greedy", {"method": "exhaustive", "max_n": 10},
                        {"method": "grape", "restarts": 3, "max_iterations": 40},
                        {"method": "rl", "iterations": 2, "workers": 2, "hidden_width": 8, "hidden_depth": 1}],
            "seeds": [0, 1]
        }))
        .unwrap();
        c.out_dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&c).unwrap();
        // greedy + 2 grape + 2 rl cells, then two summaries.
        assert_eq!(out.records.len(), 7);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].method, "exhaustive");
        for r in &out.records {
            let rep = replay_value(&serde_json::to_value(r).unwrap()).unwrap();
            assert!(rep.abs_error.unwrap() < 1e-9, "{} {}", r.method, rep.abs_error.unwrap());
            assert_eq!(r.trajectory.len(), 19);
            assert!((0.0..=1.0).contains(&r.best_fidelity));
        }
        let on_disk = load_records(&dir.path().join("records")).unwrap();
        assert_eq!(on_disk.len(), 7);
        let failures = fs::read_to_string(dir.path().join("failures.jsonl")).unwrap();
        assert_eq!(failures.lines().count(), 1);
        assert!(dir.path().join("curves").read_dir().unwrap().count() == 2);

        let plots = dir.path().join("plots");
        let files = emit_plot_data(&on_disk, PlotKind::FidelityVsTime, &plots).unwrap();
        assert_eq!(files.len(), 1);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert!(!text.contains('\r'));
        // header + (N+1) rows for each of greedy, grape, rl
        assert_eq!(text.lines().count(), 1 + 3 * 19);
        assert!(plots.join("fidelity_vs_time.schema.json").exists());
        let lc = emit_plot_data(&on_disk, PlotKind::LearningCurve, &plots).unwrap();
        assert_eq!(fs::read_to_string(&lc[0]).unwrap().lines().count(), 1 + 2 * 2);
    }

    #[test]
    fn empty_records_give_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&[], PlotKind::FidelityVsRate, dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text, "method,channel,n,sqrt_rate,best_fidelity\n");
        assert!("scatter".parse::<PlotKind>().is_err());
    }

    #[test]
    fn rate_plot_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(&json!({
            "n": 2, "gamma": 0.3, "N": 6, "sweep": {"channel": "dephasing", "sqrt_rates": [0.1, 0.05]},
            "methods": ["greedy"]
        }))
        .unwrap();
        c.out_dir = Some(dir.path().join("run"));
        let out = run_experiment(&c).unwrap();
        let files = emit_plot_data(&out.records, PlotKind::FidelityVsRate, dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("greedy,dephasing,2,0.05,"));
        assert!(lines[2].starts_with("greedy,dephasing,2,0.1,"));
    }
}
