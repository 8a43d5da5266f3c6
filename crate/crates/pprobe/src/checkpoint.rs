use std::path::Path;

use pprobe_core::autodiff::ParamSet;
use pprobe_core::checkpoint;

use crate::error::{io_err, Result};

pub fn save_checkpoint(path: &Path, params: &ParamSet) -> Result<()> {
    let bytes = checkpoint::encode(params)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(checkpoint::decode(&bytes)?)
}
