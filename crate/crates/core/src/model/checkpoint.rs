use std::path::Path;

use super::config::ModelConfig;
use super::network::{MicroModel, ParamStore};
use crate::error::{Error, Result};
use crate::io::{dim_u32, put_matrix, put_u32, Reader};
use crate::wholeword::Vocab;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ELMM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// `ELMM` layout: magic, version, config text block, then one block per
/// parameter (name, rows, cols, `f32` payload).
pub fn checkpoint_to_bytes(model: &MicroModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    let cfg = model.config.to_text();
    put_u32(&mut out, dim_u32(cfg.len(), "config length")?);
    out.extend_from_slice(cfg.as_bytes());
    put_u32(&mut out, dim_u32(model.params.len(), "parameter count")?);
    for (name, m) in model.params.names().iter().zip(model.params.values()) {
        put_u32(&mut out, dim_u32(name.len(), "name length")?);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, dim_u32(m.rows(), "rows")?);
        put_u32(&mut out, dim_u32(m.cols(), "cols")?);
        put_matrix(&mut out, m);
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<MicroModel> {
    let mut r = Reader::new(buf);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let text = |bytes: &[u8]| {
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format("non-UTF-8 text block".into()))
    };
    let n = r.u32()? as usize;
    let config = ModelConfig::from_text(&text(r.take(n)?)?)?;
    let count = r.u32()? as usize;
    let mut names = Vec::with_capacity(count.min(1024));
    let mut values = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let n = r.u32()? as usize;
        names.push(text(r.take(n)?)?);
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        values.push(r.matrix(rows, cols)?);
    }
    r.finish()?;
    MicroModel::from_params(config, Vocab::new(), ParamStore::from_parts(names, values)?)
}

pub fn save_checkpoint(path: &Path, model: &MicroModel) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MicroModel> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
