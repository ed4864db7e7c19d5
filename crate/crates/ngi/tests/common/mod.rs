#![allow(dead_code)]
use std::path::Path;

use ngi::RunConfig;

/// A configuration small enough to generate, train and evaluate in seconds.
pub fn tiny_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.data.width = 32;
    c.data.height = 32;
    c.data.frames = 4;
    c.data.render.spp = 4;
    c.data.render.max_bounces = 2;
    c.model.width = 32;
    c.model.height = 32;
    c.model.levels = 2;
    c.model.base_width = 4;
    c.model.geometry_width = 2;
    c.model.discriminator_width = 2;
    c.model.heads = 2;
    c.model.key_dim = 2;
    c.train.epochs = 2;
    c.train.batch_size = 2;
    c.train.held_out = 1;
    c.train.extractor_widths = vec![3, 4];
    c
}

/// Relative path and bytes of every file under `root`, sorted.
pub fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
