//! Run directories and the train, evaluate and report steps.
//!
//! ```text
//! <out>/<study>/
//!   config.toml  provenance.txt  results.csv  table.md  curves.csv  curves.svg
//!   <method>/seed_<s>/
//!     state.ckpt  trained.ckpt  metrics.csv
//!     archive/entry_<id>.ckpt
//!     gen_<t>/agents.ckpt  partners.ckpt  archive_manifest.tsv  metrics.csv
//! ```

use crate::bench::{self, cross_evaluate, EvalMatrix, Method, PartnerSuite, SuiteMember, Trained};
use crate::checkpoint::{self, CheckpointError};
use crate::coevo::{self, CoevoConfig, CoevoError, RunState};
use crate::config::{RunConfig, RunConfigError};
use crate::deploy::DeployError;
use crate::env::{Layout, RewardConfig, Role};
use crate::par::{derive_seed, Parallelism};
use crate::policy::{init_policy, InitScheme, PolicyError, PolicyParams};
use crate::report::{self, ReportError};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] RunConfigError),
    #[error(transparent)]
    Training(#[from] CoevoError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no trained runs under {0}")]
    NothingToReport(String),
}

const KIND_STATE: &str = "run-state";
const KIND_TRAINED: &str = "trained";
const KIND_POPULATION: &str = "population";
const KIND_POLICY: &str = "policy";

const STREAM_RANDOM_PARTNER: u64 = 21;

pub const SELF_PLAY_PARTNER: &str = "self-play";
pub const SWAPPED_MAZE_PARTNER: &str = "maze (role-swapped)";
pub const RANDOM_PARTNER: &str = "random-init";
const SWAPPED_MAZE_DIR: &str = "maze-role-swapped";

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?;
    }
    fs::write(path, text).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

/// `git describe` of the working directory plus the crate version. Falls
/// back to the source checkout the binary was built from.
pub fn provenance() -> String {
    let describe = |dir: &str| {
        std::process::Command::new("git")
            .args(["-C", dir, "describe", "--always", "--dirty", "--tags"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
    };
    let describe = describe(".")
        .or_else(|| describe(env!("CARGO_MANIFEST_DIR")))
        .unwrap_or_else(|| "unknown".into());
    format!("git {describe}\nmaze-core {}\n", env!("CARGO_PKG_VERSION"))
}

/// A finished training run together with the settings that produced it,
/// so a stale result is never reused.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Finished {
    base: CoevoConfig,
    layout: Layout,
    rewards: RewardConfig,
    trained: Trained,
}

/// One configured experiment rooted at `<out>/<study>`.
pub struct Study {
    pub config: RunConfig,
    pub layout: Layout,
    pub root: PathBuf,
    pub par: Parallelism,
    /// Progress lines go to stderr unless set.
    pub quiet: bool,
}

impl Study {
    pub fn new(config: RunConfig, par: Parallelism) -> Result<Self, PipelineError> {
        config.validate()?;
        let layout = config
            .build_layout()
            .map_err(|e| RunConfigError::Invalid { field: "layout".into(), reason: e.to_string() })?;
        let root = config.out.join(config.run_name());
        Ok(Self { config, layout, root, par, quiet: false })
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Writes the config snapshot and provenance string.
    pub fn prepare(&self) -> Result<(), PipelineError> {
        write(&self.root.join("config.toml"), &self.config.to_toml())?;
        write(&self.root.join("provenance.txt"), &provenance())
    }

    pub fn seed_dir(&self, label: &str, seed: u64) -> PathBuf {
        self.root.join(label).join(format!("seed_{seed}"))
    }

    /// Trains `method` for every configured seed, reusing finished runs and
    /// resuming interrupted ones.
    pub fn train(&self, method: Method) -> Result<Vec<Trained>, PipelineError> {
        self.train_as(method, Role::Agent, method.name())
    }

    fn train_as(&self, method: Method, focal: Role, label: &str) -> Result<Vec<Trained>, PipelineError> {
        self.config
            .seeds
            .iter()
            .map(|&seed| self.train_seed(method, focal, seed, &self.seed_dir(label, seed)))
            .collect()
    }

    pub fn train_seed(&self, method: Method, focal: Role, seed: u64, dir: &Path) -> Result<Trained, PipelineError> {
        let label = run_label(dir);
        let base = self.config.coevo_config(seed, focal);
        let rewards = self.config.rewards;
        let done_path = dir.join("trained.ckpt");
        if done_path.exists() {
            let f: Finished = checkpoint::load(&done_path, KIND_TRAINED)?;
            if f.base == base && f.layout == self.layout && f.rewards == rewards && f.trained.method == method {
                self.log(&format!("{label} seed {seed}: already trained"));
                return Ok(f.trained);
            }
            self.log(&format!("{label} seed {seed}: settings changed, retraining"));
        }
        let trained = match bench::method_config(method, &base) {
            Some(cfg) => {
                let state = self.run_population(cfg, &label, seed, dir)?;
                Trained {
                    method,
                    seed,
                    agents: state.agent_policies(),
                    partners: state.partner_policies(),
                    archive: state.archive,
                    metrics: state.metrics,
                }
            }
            None => {
                self.log(&format!("{label} seed {seed}: training"));
                bench::run_baseline(method, &base, &self.layout, &rewards, self.par)?
            }
        };
        write(&dir.join("metrics.csv"), &report::metrics_csv(&trained.metrics))?;
        let finished = Finished { base, layout: self.layout.clone(), rewards, trained };
        checkpoint::save(&done_path, KIND_TRAINED, &finished)?;
        Ok(finished.trained)
    }

    fn run_population(&self, cfg: CoevoConfig, label: &str, seed: u64, dir: &Path) -> Result<RunState, PipelineError> {
        let state_path = dir.join("state.ckpt");
        let rewards = self.config.rewards;
        let resumed = if state_path.exists() {
            let s: RunState = checkpoint::load(&state_path, KIND_STATE)?;
            (s.config == cfg && s.layout == self.layout && s.rewards == rewards).then_some(s)
        } else {
            None
        };
        let mut state = match resumed {
            Some(s) => {
                self.log(&format!("{label} seed {seed}: resuming at generation {}", s.generation));
                s
            }
            None => RunState::new(cfg, self.layout.clone(), rewards, self.par)?,
        };
        let total = state.config.generations;
        coevo::continue_run(&mut state, self.par, &mut |s| {
            write_generation(dir, s).map_err(|e| CoevoError::Observer(e.to_string()))?;
            let last = s.metrics.last().map_or(0.0, |m| m.mean_reward);
            self.log(&format!("{label} seed {seed}: generation {}/{total}, mean reward {last:.1}", s.generation));
            Ok(())
        })?;
        Ok(state)
    }

    /// Random-init, self-play and role-swapped MAZE partners plus the
    /// scripted player. Partner training runs are reused when present.
    pub fn partner_suite(&self) -> Result<PartnerSuite, PipelineError> {
        let arch = self.config.coevo_config(self.config.seeds[0], Role::Agent).architecture(&self.layout);
        let random = self
            .config
            .seeds
            .iter()
            .map(|&s| {
                init_policy(&arch, Role::Partner, derive_seed(s, &[STREAM_RANDOM_PARTNER]), InitScheme::Scaled)
                    .map(|p| vec![p])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sp = self.train(Method::Sp)?.into_iter().map(|t| t.partners).collect();
        let swapped = self
            .train_as(Method::Maze, Role::Partner, SWAPPED_MAZE_DIR)?
            .into_iter()
            .map(|t| t.agents)
            .collect();
        Ok(PartnerSuite {
            members: vec![
                SuiteMember::Policies { name: RANDOM_PARTNER.into(), per_seed: random },
                SuiteMember::Policies { name: SELF_PLAY_PARTNER.into(), per_seed: sp },
                SuiteMember::Policies { name: SWAPPED_MAZE_PARTNER.into(), per_seed: swapped },
                SuiteMember::scripted(),
            ],
        })
    }

    /// Trains what is missing, cross-evaluates `methods` against the partner
    /// suite and writes `results.csv` and `table.md`.
    pub fn evaluate(&self, methods: &[Method]) -> Result<EvalMatrix, PipelineError> {
        let suite = self.partner_suite()?;
        let mut agents = Vec::with_capacity(methods.len());
        for &m in methods {
            let per_seed = self.train(m)?.into_iter().map(|t| t.agents).collect();
            agents.push((m.name().to_string(), per_seed));
        }
        self.log("cross-evaluating");
        let matrix = cross_evaluate(
            &agents,
            &self.config.seeds,
            &suite,
            &Arc::new(self.layout.clone()),
            &self.config.rewards,
            self.config.eval.episodes,
            self.config.eval.mode,
            self.par,
        )?;
        write(&self.root.join("results.csv"), &report::results_csv(&matrix.records))?;
        write(&self.root.join("table.md"), &matrix.render_table())?;
        Ok(matrix)
    }

    /// Training curves of every trained method, plus the table when results
    /// exist. Never trains.
    pub fn report(&self) -> Result<Vec<report::Curve>, PipelineError> {
        let mut curves = Vec::new();
        for m in Method::ALL {
            let mut runs = Vec::new();
            for &seed in &self.config.seeds {
                let path = self.seed_dir(m.name(), seed).join("trained.ckpt");
                if path.exists() {
                    let f: Finished = checkpoint::load(&path, KIND_TRAINED)?;
                    runs.push(f.trained.metrics);
                }
            }
            if !runs.is_empty() {
                curves.push(report::mean_curve(m.name(), &runs));
            }
        }
        if curves.is_empty() {
            return Err(PipelineError::NothingToReport(self.root.display().to_string()));
        }
        write(&self.root.join("curves.csv"), &report::curves_csv(&curves))?;
        let title = format!("{}: mean training reward", self.layout.name());
        write(&self.root.join("curves.svg"), &report::curves_svg(&title, &curves))?;
        let results = self.root.join("results.csv");
        if results.exists() {
            let text = fs::read_to_string(&results)
                .map_err(|source| PipelineError::Io { path: results.display().to_string(), source })?;
            let records = report::parse_results_csv(&text)?;
            if !records.is_empty() {
                let m = report::matrix_from_records(self.layout.name(), &records)?;
                write(&self.root.join("table.md"), &m.render_table())?;
            }
        }
        Ok(curves)
    }
}

fn run_label(dir: &Path) -> String {
    dir.parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Per-generation outputs plus the resumable state.
pub fn write_generation(dir: &Path, state: &RunState) -> Result<(), PipelineError> {
    let gen_dir = dir.join(format!("gen_{}", state.generation));
    checkpoint::save(&gen_dir.join("agents.ckpt"), KIND_POPULATION, &state.agent_policies())?;
    checkpoint::save(&gen_dir.join("partners.ckpt"), KIND_POPULATION, &state.partner_policies())?;
    if let Some(archive) = &state.archive {
        let mut manifest = String::from("id\tinserted_at\tbehavior\tcheckpoint\n");
        for e in archive.entries() {
            let rel = format!("archive/entry_{}.ckpt", e.id);
            let path = dir.join(&rel);
            if !path.exists() {
                checkpoint::save(&path, KIND_POLICY, &e.partner.policy)?;
            }
            let b: Vec<String> = e.behavior.iter().map(|x| x.to_string()).collect();
            writeln!(manifest, "{}\t{}\t{}\t{rel}", e.id, e.inserted_at, b.join(",")).expect("string write");
        }
        write(&gen_dir.join("archive_manifest.tsv"), &manifest)?;
    }
    let last = state.metrics.last().cloned().into_iter().collect::<Vec<_>>();
    write(&gen_dir.join("metrics.csv"), &report::metrics_csv(&last))?;
    write(&dir.join("metrics.csv"), &report::metrics_csv(&state.metrics))?;
    Ok(checkpoint::save(&dir.join("state.ckpt"), KIND_STATE, state)?)
}

pub fn load_state(path: &Path) -> Result<RunState, CheckpointError> {
    checkpoint::load(path, KIND_STATE)
}

pub fn save_state(path: &Path, state: &RunState) -> Result<(), CheckpointError> {
    checkpoint::save(path, KIND_STATE, state)
}

pub fn load_population(path: &Path) -> Result<Vec<PolicyParams>, CheckpointError> {
    checkpoint::load(path, KIND_POPULATION)
}
