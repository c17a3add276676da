#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ega_cli::config::ExperimentConfig;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn reference() -> ExperimentConfig {
    ExperimentConfig::load(&workspace_root().join("configs/reference.toml")).unwrap()
}

/// The reference task scaled down to run in well under a second.
pub fn quick() -> ExperimentConfig {
    let mut cfg = reference();
    cfg.label = "quick".into();
    cfg.num_seeds = 2;
    cfg.teacher.pool_per_class = 100;
    cfg.teacher.hidden_dims = vec![16];
    for stage in [&mut cfg.teacher.backbone, &mut cfg.teacher.head] {
        stage.epochs = 5;
        stage.sgd.total_epochs = 5;
        stage.sgd.decay_start_epoch = 3;
        stage.sgd.decay_every = 1;
    }
    cfg.train.sgd.total_epochs = 6;
    cfg.train.sgd.decay_start_epoch = 4;
    cfg.train.sgd.decay_every = 1;
    cfg
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join(format!("{}.toml", cfg.label));
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

pub fn ega(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ega"))
        .args(args)
        .env("EGA_OUT_ROOT", out_root)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
