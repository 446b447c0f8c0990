//! Euler-discretized gradient flow on the CP model, averaged over seeds.

pub mod model;
pub mod probe;

use std::fmt::Write as _;
use std::hash::Hasher;

use rustc_hash::FxHasher;
use serde::{Deserialize, Serialize};

pub use model::{init_weights, loss_and_grad, EvalMode, Evaluation, ModelConfig, Target, WeightState};
pub use probe::{probe_ntk, Probe};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

fn default_batch() -> usize {
    1 << 16
}
fn default_stride() -> usize {
    1
}
fn default_divergence() -> f64 {
    1e12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelConfig,
    /// Final time; negative values run gradient ascent.
    pub t_max: f64,
    pub n_steps: usize,
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Index tuples per batch in dense and direct evaluation.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Observables recorded besides the loss.
    #[serde(default)]
    pub probes: Vec<Probe>,
    /// Record every this many steps (the last step is always recorded).
    #[serde(default = "default_stride")]
    pub probe_stride: usize,
    /// A seed diverges once its loss exceeds this multiple of its initial loss.
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
}

impl SimConfig {
    pub fn new(model: ModelConfig, t_max: f64, n_steps: usize, n_seeds: usize) -> Self {
        SimConfig {
            model,
            t_max,
            n_steps,
            n_seeds,
            base_seed: 0,
            batch_size: default_batch(),
            probes: Vec::new(),
            probe_stride: 1,
            divergence_factor: default_divergence(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_steps == 0 || self.n_seeds == 0 || self.batch_size == 0 || self.probe_stride == 0 {
            return Err(Error::InvalidSetting("n_steps, n_seeds, batch_size and probe_stride must be >= 1".into()));
        }
        if !self.t_max.is_finite() || self.t_max == 0.0 {
            return Err(Error::InvalidSetting(format!("t_max must be finite and nonzero, got {}", self.t_max)));
        }
        for p in &self.probes {
            p.validate(self.model.nu as usize, self.model.p, self.model.scenario)?;
        }
        Ok(())
    }

    /// Time step `τ`; the Euler step on the weights is `τ/T`.
    pub fn tau(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn record_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.probe_stride).collect();
        if *steps.last().unwrap() != self.n_steps {
            steps.push(self.n_steps);
        }
        steps
    }

    pub fn hash(&self) -> String {
        let mut h = FxHasher::default();
        h.write(serde_json::to_string(self).expect("config serializes").as_bytes());
        format!("{:016x}", h.finish())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One seed: loss and probe values at the recorded steps.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub times: Vec<f64>,
    pub loss: Vec<f64>,
    /// `probes[j][r]`: probe `j` at record `r`.
    pub probes: Vec<Vec<f64>>,
    /// Step at which the loss left the allowed range.
    pub diverged_at: Option<usize>,
}

impl SeedRun {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Explicit Euler from `init_weights(cfg, seed)`. After divergence the loss
/// reads `inf` and probes read `NaN`.
pub fn run(cfg: &SimConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let mut state = init_weights(&cfg.model, cfg.base_seed, seed);
    run_from(cfg, seed, &mut state)
}

/// Like [`run`] from a given state; the state is left at the last step reached.
pub fn run_from(cfg: &SimConfig, seed: u64, state: &mut WeightState) -> Result<SeedRun> {
    let records = cfg.record_steps();
    let step = cfg.tau() / cfg.model.t_scale;
    let mut out = SeedRun {
        seed,
        times: records.iter().map(|&k| k as f64 * cfg.tau()).collect(),
        loss: Vec::with_capacity(records.len()),
        probes: vec![Vec::with_capacity(records.len()); cfg.probes.len()],
        diverged_at: None,
    };
    let mut next = 0;
    let mut ceiling = f64::INFINITY;
    for k in 0..=cfg.n_steps {
        let eval = loss_and_grad(state, &cfg.model, cfg.batch_size)?;
        if k == 0 {
            ceiling = cfg.divergence_factor * eval.loss.abs().max(f64::MIN_POSITIVE);
        }
        let finite = eval.loss.is_finite() && eval.grad.iter().all(|g| g.iter().all(|x| x.is_finite()));
        if !finite || eval.loss > ceiling {
            out.diverged_at = Some(k);
            break;
        }
        if records[next] == k {
            out.loss.push(eval.loss);
            for (j, p) in cfg.probes.iter().enumerate() {
                out.probes[j].push(p.evaluate(state)?);
            }
            next += 1;
        }
        if k < cfg.n_steps {
            state.axpy(step, &eval.grad);
        }
    }
    while out.loss.len() < records.len() {
        out.loss.push(f64::INFINITY);
        for col in out.probes.iter_mut() {
            col.push(f64::NAN);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub loss: Column,
    pub probes: Vec<Column>,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Seeds that diverged, with the step.
    pub diverged: Vec<(u64, usize)>,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { f64::NAN });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn reduce(name: &str, runs: &[SeedRun], pick: impl Fn(&SeedRun) -> &Vec<f64>) -> Column {
    let len = pick(&runs[0]).len();
    let (mut mean, mut stderr) = (Vec::with_capacity(len), Vec::with_capacity(len));
    for r in 0..len {
        let vals: Vec<f64> = runs.iter().map(|run| pick(run)[r]).collect();
        let (m, s) = mean_stderr(&vals);
        mean.push(m);
        stderr.push(s);
    }
    Column { name: name.to_string(), mean, stderr }
}

/// Averages independent seed runs in seed order.
pub fn aggregate(cfg: &SimConfig, runs: &[SeedRun]) -> Trajectory {
    Trajectory {
        times: runs[0].times.clone(),
        loss: reduce("loss", runs, |r| &r.loss),
        probes: cfg.probes.iter().enumerate().map(|(j, p)| reduce(&p.name(), runs, |r| &r.probes[j])).collect(),
        config_hash: cfg.hash(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        diverged: runs.iter().filter_map(|r| r.diverged_at.map(|k| (r.seed, k))).collect(),
    }
}

/// All seed runs `0..n_seeds`, concurrently when `exec` allows.
pub fn run_seeds(cfg: &SimConfig, exec: Execution) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    exec::map_range(exec, cfg.n_seeds, |s| run(cfg, s as u64)).into_iter().collect()
}

pub fn monte_carlo(cfg: &SimConfig, exec: Execution) -> Result<Trajectory> {
    Ok(aggregate(cfg, &run_seeds(cfg, exec)?))
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{:.16e}", x)
    }
}

impl Trajectory {
    /// `t,mean,stderr` followed by a mean and stderr column per probe.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mean,stderr");
        for c in &self.probes {
            let _ = write!(s, ",{0}_mean,{0}_stderr", c.name);
        }
        s.push('\n');
        for (r, &t) in self.times.iter().enumerate() {
            let _ = write!(s, "{},{},{}", fmt_f64(t), fmt_f64(self.loss.mean[r]), fmt_f64(self.loss.stderr[r]));
            for c in &self.probes {
                let _ = write!(s, ",{},{}", fmt_f64(c.mean[r]), fmt_f64(c.stderr[r]));
            }
            s.push('\n');
        }
        s
    }

    /// Reads the output of [`Trajectory::to_csv`]. Seeds and the config hash
    /// are not part of the CSV and come back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty trajectory".into()))?.split(',').collect();
        if header.len() < 3 || header[..3] != ["t", "mean", "stderr"] || header.len() % 2 == 0 {
            return Err(Error::Parse("trajectory header must start with t,mean,stderr".into()));
        }
        let names: Vec<String> = header[3..]
            .chunks(2)
            .map(|c| {
                c[0].strip_suffix("_mean")
                    .filter(|n| c[1].strip_suffix("_stderr") == Some(*n))
                    .map(str::to_string)
                    .ok_or_else(|| Error::Parse(format!("bad probe columns {c:?}")))
            })
            .collect::<Result<_>>()?;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(Error::Parse(format!("row has {} cells, header has {}", cells.len(), header.len())));
            }
            for (col, cell) in cols.iter_mut().zip(&cells) {
                col.push(cell.trim().parse().map_err(|_| Error::Parse(format!("not a number: '{cell}'")))?);
            }
        }
        let mut it = cols.into_iter();
        let times = it.next().unwrap();
        let loss = Column { name: "loss".into(), mean: it.next().unwrap(), stderr: it.next().unwrap() };
        let probes = names
            .into_iter()
            .map(|name| Column { name, mean: it.next().unwrap(), stderr: it.next().unwrap() })
            .collect();
        Ok(Trajectory { times, loss, probes, config_hash: String::new(), seeds: Vec::new(), diverged: Vec::new() })
    }

    /// Nearest recorded index to time `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}
