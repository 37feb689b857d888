//! Training run directories.
//!
//! ```text
//! <run>/config.toml                 resolved configuration
//! <run>/curve.csv                   epoch,train_loss,val_mae,val_rmse
//! <run>/checkpoints/epoch_<k>.safetensors
//! <run>/best.safetensors            lowest validation MAE so far
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dinocount_core::sample::SampleSource;
use dinocount_core::train::{train, Checkpoint, CurveRow, TrainObserver, TrainOutcome};
use log::info;

use crate::checkpoint;
use crate::config::AppConfig;
use crate::{Error, Result};

pub const CURVE_HEADER: &str = "epoch,train_loss,val_mae,val_rmse";

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        let ck = root.join("checkpoints");
        std::fs::create_dir_all(&ck).map_err(Error::io(&ck))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("epoch_{epoch}.safetensors"))
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.root.join("best.safetensors")
    }

    pub fn curve_path(&self) -> PathBuf {
        self.root.join("curve.csv")
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.toml")
    }
}

pub fn render_curve(rows: &[CurveRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, opt(r.train_loss), opt(r.val_mae), opt(r.val_rmse));
    }
    s
}

/// Persists every validation checkpoint, the running best and the curve.
struct Persist<'a> {
    dir: &'a RunDir,
    config: &'a AppConfig,
    rows: Vec<CurveRow>,
    best: Option<(usize, f64)>,
}

impl TrainObserver for Persist<'_> {
    fn on_epoch(&mut self, row: &CurveRow) -> dinocount_core::Result<()> {
        self.rows.push(*row);
        match row.val_mae {
            Some(m) => info!(
                "epoch {} loss {:.6e} val_mae {:.4} val_rmse {:.4}",
                row.epoch,
                row.train_loss.unwrap_or(f64::NAN),
                m,
                row.val_rmse.unwrap_or(f64::NAN)
            ),
            None => info!("epoch {} loss {:.6e}", row.epoch, row.train_loss.unwrap_or(f64::NAN)),
        }
        let p = self.dir.curve_path();
        std::fs::write(&p, render_curve(&self.rows)).map_err(|e| external(&p, e))
    }

    fn on_eval(&mut self, ckpt: &Checkpoint) -> dinocount_core::Result<()> {
        let wrap = |e: Error| dinocount_core::Error::InvalidParameter(e.to_string());
        checkpoint::save_training(&self.dir.epoch_checkpoint(ckpt.epoch), ckpt, self.config).map_err(wrap)?;
        let better = match self.best {
            None => true,
            Some((_, m)) => ckpt.val_mae < m || (m.is_nan() && !ckpt.val_mae.is_nan()),
        };
        if better {
            self.best = Some((ckpt.epoch, ckpt.val_mae));
            checkpoint::save_training(&self.dir.best_checkpoint(), ckpt, self.config).map_err(wrap)?;
        }
        Ok(())
    }
}

fn external(path: &Path, e: std::io::Error) -> dinocount_core::Error {
    dinocount_core::Error::InvalidParameter(format!("{}: {e}", path.display()))
}

/// Trains from `config` and writes the run directory.
pub fn run_training(config: &AppConfig, train_data: &dyn SampleSource, val: &dyn SampleSource) -> Result<(RunDir, TrainOutcome)> {
    let dir = RunDir::create(&config.run_dir())?;
    std::fs::write(dir.config_path(), config.to_toml()).map_err(Error::io(dir.config_path()))?;
    let mut model = checkpoint::build_model(config)?;
    let tc = config.train_config()?;
    let pc = config.pipeline_config()?;
    let mut obs = Persist {
        dir: &dir,
        config,
        rows: Vec::new(),
        best: None,
    };
    let outcome = train(&mut model, train_data, val, &tc, &pc, &mut obs)?;
    info!(
        "best epoch {} val_mae {:.4} val_rmse {:.4} after {} steps",
        outcome.best.epoch, outcome.best.val_mae, outcome.best.val_rmse, outcome.steps
    );
    Ok((dir, outcome))
}
