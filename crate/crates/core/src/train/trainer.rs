use super::{latest_checkpoint, load_checkpoint, save_checkpoint, train_step, Checkpoint, OptimizerState, StepLog, TrainConfig};
use crate::dataio::{save_weights, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nets::{ModelBundle, NetConfig};
use crate::rawmodel::{RawImage, SamplerConfig};
use std::fs;
use std::path::{Path, PathBuf};

pub const LOG_FILE: &str = "metrics.csv";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Where the CSV log, checkpoints and final weights go.
    pub out_dir: Option<PathBuf>,
    /// Continue from the newest checkpoint in `out_dir`.
    pub resume: bool,
    pub exec: Exec,
    /// Print a progress line every this many iterations (0 = silent).
    pub progress_every: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub state: OptimizerState,
    pub log: Vec<StepLog>,
}

fn write_log(path: &Path, log: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<StepLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Fresh (or resumed) training run over clean RGGB-or-croppable scenes.
pub fn train(
    net: &NetConfig,
    scenes: &[RawImage],
    cfg: &TrainConfig,
    sampler: &SamplerConfig,
    opts: &RunOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    sampler.validate()?;
    let mut bundle = ModelBundle::new(cfg.model, net, cfg.fusion, cfg.seed)?;
    bundle.map_form = cfg.map_form;
    bundle.map_mode = cfg.map_mode;
    let mut state = OptimizerState::new(bundle.params().map(|p| p.value.len()));
    let mut log = Vec::new();
    let mut start = 0;

    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        if opts.resume {
            if let Some(stem) = latest_checkpoint(dir)? {
                let ck = load_checkpoint(&stem)?;
                if ck.bundle.kind() != bundle.kind() || ck.bundle.num_params() != bundle.num_params() {
                    return Err(Error::Data(format!("{} does not match the configured model", stem.display())));
                }
                start = ck.iter;
                bundle = ck.bundle;
                state = ck.state;
                let path = dir.join(LOG_FILE);
                if path.exists() {
                    log = read_log(&path)?.into_iter().filter(|r| r.iter < start).collect();
                }
            }
        }
    }

    for iter in start..cfg.iters {
        let row = match train_step(&mut bundle, &mut state, scenes, sampler, cfg, iter, opts.exec) {
            Ok(row) => row,
            Err(Error::NonFinite(msg)) => {
                let dump = match &opts.out_dir {
                    Some(dir) => {
                        let ck = Checkpoint { iter, bundle: bundle.clone(), state: state.clone() };
                        let stem = save_checkpoint(&dir.join("abort"), &ck)?;
                        write_log(&dir.join(LOG_FILE), &log)?;
                        format!("; state dumped to {}", stem.display())
                    }
                    None => String::new(),
                };
                return Err(Error::NonFinite(format!("training aborted: {msg}{dump}")));
            }
            Err(e) => return Err(e),
        };
        if opts.progress_every > 0 && (iter + 1) % opts.progress_every == 0 {
            eprintln!(
                "iter {:>6}  lr {:.3e}  loss {:.5}  raw {:.5}  srgb {:.5}",
                iter + 1,
                row.lr,
                row.loss,
                row.raw_term,
                row.srgb_term
            );
        }
        log.push(row);
        if let Some(dir) = &opts.out_dir {
            let done = iter + 1;
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.iters {
                let ck = Checkpoint { iter: done, bundle: bundle.clone(), state: state.clone() };
                save_checkpoint(dir, &ck)?;
                write_log(&dir.join(LOG_FILE), &log)?;
            }
        }
    }

    if let Some(dir) = &opts.out_dir {
        write_log(&dir.join(LOG_FILE), &log)?;
        save_weights(&dir.join("final"), &bundle)?;
        let ck = Checkpoint { iter: cfg.iters, bundle: bundle.clone(), state: state.clone() };
        save_checkpoint(dir, &ck)?;
    }
    Ok(TrainOutcome { bundle, state, log })
}

/// Trains the run an experiment document describes. The train/test split is
/// checked before any image is read.
pub fn train_experiment(exp: &ExperimentConfig, opts: &RunOptions) -> Result<TrainOutcome> {
    let (train_set, _) = exp.check_data()?;
    let scenes: Vec<RawImage> = train_set
        .load_images()?
        .into_iter()
        .map(|mut s| {
            s.params = exp.isp.apply(&s.params);
            s
        })
        .collect();
    let opts = RunOptions {
        out_dir: opts.out_dir.clone().or_else(|| exp.outputs.out_dir.clone()),
        ..opts.clone()
    };
    train(&exp.net, &scenes, &exp.train, &exp.sampler, &opts)
}
