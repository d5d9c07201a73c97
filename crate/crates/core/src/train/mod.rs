//! Iteration-based training: patch batches, l1 loss, Adam with step-halving
//! learning-rate schedules, periodic checkpoints and exact resume.

pub mod adam;
pub mod checkpoint;

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tape};
use crate::data::{normalize, sample_patch_batch, ChannelMeans, Dataset, BATCH_SIZE, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::model::{Arch, Model, ModelSpec};
use crate::tensor::Tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;

/// Iterations of the full training recipe.
pub const DEFAULT_TOTAL_ITERS: usize = 300_000;
/// Window of the moving average that defines the smoothed loss.
pub const SMOOTHING_WINDOW: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// 1e-4, halved once at 200K iterations.
    Edsr,
    /// 1.5e-4, halved every 100K iterations.
    SelfOnn,
}

impl Schedule {
    pub fn for_arch(arch: Arch) -> Schedule {
        match arch {
            Arch::Edsr => Schedule::Edsr,
            Arch::SelfOnn | Arch::Hybrid => Schedule::SelfOnn,
        }
    }

    pub fn lr_at(self, iter: usize) -> f32 {
        match self {
            Schedule::Edsr => {
                if iter < 200_000 {
                    1e-4
                } else {
                    5e-5
                }
            }
            Schedule::SelfOnn => 1.5e-4 * 0.5f32.powi((iter / 100_000) as i32),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Edsr => "edsr",
            Schedule::SelfOnn => "selfonn",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edsr" => Ok(Schedule::Edsr),
            "selfonn" => Ok(Schedule::SelfOnn),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

pub fn lr_at(iter: usize, schedule: Schedule) -> f32 {
    schedule.lr_at(iter)
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub seed: u64,
    pub total_iters: usize,
    pub schedule: Schedule,
    pub batch: usize,
    pub patch: usize,
    pub train_dir: PathBuf,
    pub run_dir: PathBuf,
    /// Save `ckpt_<iter>.bin` every this many iterations; 0 disables.
    pub checkpoint_interval: usize,
    /// Pretrained weights loaded before the first step.
    pub init_checkpoint: Option<PathBuf>,
    /// Parameter prefixes kept freshly initialized when loading `init_checkpoint`.
    pub skip_prefixes: Vec<String>,
    /// Continue a previous run from its checkpoint.
    pub resume: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(spec: ModelSpec, train_dir: impl Into<PathBuf>, run_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            schedule: Schedule::for_arch(spec.arch),
            spec,
            seed: 0,
            total_iters: DEFAULT_TOTAL_ITERS,
            batch: BATCH_SIZE,
            patch: PATCH_SIZE,
            train_dir: train_dir.into(),
            run_dir: run_dir.into(),
            checkpoint_interval: 10_000,
            init_checkpoint: None,
            skip_prefixes: Vec::new(),
            resume: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.total_iters == 0 {
            return Err(Error::Config("total_iters must be positive".into()));
        }
        if self.batch == 0 || self.patch == 0 {
            return Err(Error::Config("batch and patch must be positive".into()));
        }
        if self.schedule != Schedule::for_arch(self.spec.arch) {
            return Err(Error::Config(format!(
                "schedule '{}' does not match arch '{}' (expected '{}')",
                self.schedule,
                self.spec.arch,
                Schedule::for_arch(self.spec.arch)
            )));
        }
        if self.init_checkpoint.is_some() && self.resume.is_some() {
            return Err(Error::Config("init_checkpoint and resume are exclusive".into()));
        }
        Ok(())
    }
}

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub lr: f32,
    pub loss: f64,
}

impl LossRecord {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.iter, self.lr, self.loss)
    }

    pub fn parse(line: &str) -> Result<LossRecord> {
        let bad = || Error::Config(format!("malformed loss log line '{line}'"));
        let mut parts = line.split('\t');
        let mut next = || parts.next().ok_or_else(bad);
        let iter = next()?.parse().map_err(|_| bad())?;
        let lr = next()?.parse().map_err(|_| bad())?;
        let loss = next()?.parse().map_err(|_| bad())?;
        Ok(LossRecord { iter, lr, loss })
    }
}

pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<LossRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| LossRecord::parse(&l.map_err(|e| Error::io(path, e))?))
        .collect()
}

/// Trailing moving average with the given window (shorter at the start).
pub fn smoothed(losses: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(losses.len());
    let mut sum = 0.0;
    for (i, &l) in losses.iter().enumerate() {
        sum += l;
        if i >= window {
            sum -= losses[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Data-sampling stream: seed, stream and word position of the ChaCha state.
fn rng_to_meta(rng: &ChaCha8Rng, ckpt: &mut Checkpoint) {
    let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    ckpt.meta.insert("rng.seed".into(), seed);
    ckpt.meta.insert("rng.stream".into(), rng.get_stream().to_string());
    ckpt.meta.insert("rng.word_pos".into(), rng.get_word_pos().to_string());
}

fn rng_from_meta(ckpt: &Checkpoint) -> Result<ChaCha8Rng> {
    let hex: String = ckpt.meta_value("rng.seed")?;
    if hex.len() != 64 {
        return Err(Error::Config("checkpoint rng.seed must be 64 hex digits".into()));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::Config("checkpoint rng.seed is not hex".into()))?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(ckpt.meta_value("rng.stream")?);
    rng.set_word_pos(ckpt.meta_value("rng.word_pos")?);
    Ok(rng)
}

/// Packs model, optimizer and training position into a checkpoint.
pub fn make_checkpoint(
    model: &Model,
    adam: Option<&AdamState>,
    iteration: usize,
    means: &ChannelMeans,
    rng: Option<&ChaCha8Rng>,
) -> Checkpoint {
    let mut ckpt = Checkpoint::default();
    ckpt.meta.insert("iteration".into(), iteration.to_string());
    ckpt.set_section("spec", &model.spec().to_kv());
    ckpt.set_section("means", &means.to_kv());
    if let Some(rng) = rng {
        rng_to_meta(rng, &mut ckpt);
    }
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, t) in model.named_params() {
        ckpt.tensors.insert(name, t.clone());
    }
    if let Some(state) = adam {
        ckpt.meta.insert("adam.t".into(), state.t.to_string());
        for (i, name) in names.iter().enumerate() {
            ckpt.tensors.insert(format!("{}m.{name}", checkpoint::ADAM_PREFIX), state.m[i].clone());
            ckpt.tensors.insert(format!("{}v.{name}", checkpoint::ADAM_PREFIX), state.v[i].clone());
        }
    }
    ckpt
}

pub fn checkpoint_spec(ckpt: &Checkpoint) -> Result<ModelSpec> {
    ModelSpec::from_kv(&ckpt.meta_section("spec"))
}

pub fn checkpoint_means(ckpt: &Checkpoint) -> Result<ChannelMeans> {
    ChannelMeans::from_kv(&ckpt.meta_section("means"))
}

/// Rebuilds the model stored in a checkpoint.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<Model> {
    let spec = checkpoint_spec(ckpt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::build(&spec, &mut rng)?;
    model.load_partial(ckpt, &[])?;
    Ok(model)
}

fn adam_from_checkpoint(ckpt: &Checkpoint, model: &Model) -> Result<AdamState> {
    let mut state = AdamState::new(model.named_params().into_iter().map(|(_, t)| t));
    state.t = ckpt.meta_value("adam.t")?;
    for (i, (name, _)) in model.named_params().into_iter().enumerate() {
        for (slot, which) in [(&mut state.m[i], "m"), (&mut state.v[i], "v")] {
            let key = format!("{}{which}.{name}", checkpoint::ADAM_PREFIX);
            let t = ckpt.tensors.get(&key).ok_or_else(|| Error::Parameter {
                name: key.clone(),
                msg: "missing from checkpoint".into(),
            })?;
            if t.shape() != slot.shape() {
                return Err(Error::Parameter {
                    name: key,
                    msg: format!("shape {} does not match {}", t.shape(), slot.shape()),
                });
            }
            *slot = t.clone();
        }
    }
    Ok(state)
}

pub struct TrainOutcome {
    pub model: Model,
    pub means: ChannelMeans,
    pub losses: Vec<LossRecord>,
    pub final_checkpoint: PathBuf,
}

pub fn checkpoint_path(run_dir: &Path, iteration: usize) -> PathBuf {
    run_dir.join(format!("ckpt_{iteration:08}.bin"))
}

/// Loss, gradients and Adam update for one batch. Returns the `f64` loss.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    lr_batch: &Tensor,
    hr_batch: &Tensor,
    lr: f32,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let x = tape.constant(lr_batch.clone());
    let target = tape.constant(hr_batch.clone());
    let y = model.forward_bound(&mut tape, &bound, &x)?;
    let loss_var = tape.mean_abs(&y, &target)?;
    let loss = tape.scalar(loss_var)?;
    if !loss.is_finite() {
        return Ok(loss);
    }
    let mut grads = tape.backward(loss_var)?;
    let grads: Vec<Tensor> = bound
        .iter()
        .flat_map(|l| l.tensors().into_iter().copied().collect::<Vec<_>>())
        .map(|v| grads.take(v))
        .collect();
    drop(tape);
    adam_step(&mut model.params_mut(), &grads, adam, lr, &AdamConfig::default())?;
    Ok(loss)
}

/// Runs the training loop described by `cfg`, writing `loss.log` and
/// checkpoints into `cfg.run_dir`.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.run_dir).map_err(|e| Error::io(&cfg.run_dir, e))?;
    let dataset = Dataset::load(&cfg.train_dir, cfg.spec.scale, Some(cfg.patch))?;

    let (mut model, mut adam, mut rng, start, means) = match &cfg.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let spec = checkpoint_spec(&ckpt)?;
            if spec != cfg.spec {
                return Err(Error::Config(format!(
                    "resume checkpoint spec differs: {}",
                    spec.diff(&cfg.spec).join(", ")
                )));
            }
            let model = model_from_checkpoint(&ckpt)?;
            let adam = adam_from_checkpoint(&ckpt, &model)?;
            let rng = rng_from_meta(&ckpt)?;
            let start: usize = ckpt.meta_value("iteration")?;
            (model, adam, rng, start, checkpoint_means(&ckpt)?)
        }
        None => {
            let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut model = Model::build(&cfg.spec, &mut init_rng)?;
            if let Some(path) = &cfg.init_checkpoint {
                let ckpt = Checkpoint::load(path)?;
                model.load_partial(&ckpt, &cfg.skip_prefixes)?;
            }
            let adam = AdamState::new(model.named_params().into_iter().map(|(_, t)| t));
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            (model, adam, rng, 0, dataset.channel_means()?)
        }
    };

    let log_path = cfg.run_dir.join("loss.log");
    let mut previous = Vec::new();
    if start > 0 && log_path.exists() {
        previous = read_loss_log(&log_path)?
            .into_iter()
            .filter(|r| r.iter < start)
            .collect();
    }
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    for r in &previous {
        writeln!(log, "{}", r.to_line()).map_err(|e| Error::io(&log_path, e))?;
    }

    let mut losses = Vec::with_capacity(cfg.total_iters.saturating_sub(start));
    for iter in start..cfg.total_iters {
        let lr = cfg.schedule.lr_at(iter);
        let (lr_batch, hr_batch) =
            sample_patch_batch(&dataset.records, &mut rng, cfg.spec.scale, cfg.patch, cfg.batch)?;
        let lr_batch = normalize(&lr_batch, &means);
        let hr_batch = normalize(&hr_batch, &means);
        let loss = train_step(&mut model, &mut adam, &lr_batch, &hr_batch, lr)?;
        if !loss.is_finite() {
            let path = cfg.run_dir.join("ckpt_abort.bin");
            make_checkpoint(&model, Some(&adam), iter, &means, Some(&rng)).save(&path)?;
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} at iteration {iter}; state saved to {}",
                path.display()
            )));
        }
        let record = LossRecord { iter, lr, loss };
        writeln!(log, "{}", record.to_line()).map_err(|e| Error::io(&log_path, e))?;
        losses.push(record);
        let done = iter + 1;
        if cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 {
            make_checkpoint(&model, Some(&adam), done, &means, Some(&rng))
                .save(checkpoint_path(&cfg.run_dir, done))?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let final_checkpoint = cfg.run_dir.join("ckpt_final.bin");
    make_checkpoint(&model, Some(&adam), cfg.total_iters.max(start), &means, Some(&rng))
        .save(&final_checkpoint)?;
    Ok(TrainOutcome {
        model,
        means,
        losses,
        final_checkpoint,
    })
}
