//! Model checkpoint file.
//!
//! Layout (all integers little-endian):
//!   bytes 0..4   magic "TEDG"
//!   u32          format version (1)
//!   u32 x 9      n_layers, model_dim, n_heads, mlp_layers, mlp_size,
//!                patch_size, image_size, n_classes, input_mode
//!                (0 = gaf_per_content, 1 = count_matrix)
//!   f32 ...      parameter tensors in declaration order, row-major,
//!                IEEE-754 little-endian

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::vit::config::ViTConfig;
use crate::vit::model::ViTModel;
use crate::vit::train::InputMode;

const MAGIC: &[u8; 4] = b"TEDG";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &ViTModel, mode: InputMode, mut writer: impl Write) -> Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&VERSION.to_le_bytes())?;
    let cfg = &model.config;
    let fields = [
        cfg.n_layers,
        cfg.model_dim,
        cfg.n_heads,
        cfg.mlp_layers,
        cfg.mlp_size,
        cfg.patch_size,
        cfg.image_size,
        cfg.n_classes,
        match mode {
            InputMode::GafPerContent => 0,
            InputMode::CountMatrix => 1,
        },
    ];
    for f in fields {
        writer.write_all(&(f as u32).to_le_bytes())?;
    }
    for tensor in model.tensors() {
        for &v in tensor.data() {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(mut reader: impl Read) -> Result<(ViTModel, InputMode)> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut buf = [0u8; 4];
    let mut next_u32 = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    };
    let version = next_u32(&mut reader)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut fields = [0u32; 9];
    for f in fields.iter_mut() {
        *f = next_u32(&mut reader)?;
    }
    let config = ViTConfig {
        n_layers: fields[0] as usize,
        model_dim: fields[1] as usize,
        n_heads: fields[2] as usize,
        mlp_layers: fields[3] as usize,
        mlp_size: fields[4] as usize,
        patch_size: fields[5] as usize,
        image_size: fields[6] as usize,
        n_classes: fields[7] as usize,
    };
    let mode = match fields[8] {
        0 => InputMode::GafPerContent,
        1 => InputMode::CountMatrix,
        other => return Err(Error::Checkpoint(format!("unknown input mode {other}"))),
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;

    let mut model = ViTModel::zeros(&config)?;
    let mut f32_buf = [0u8; 4];
    for tensor in model.tensors_mut() {
        for v in tensor.data_mut() {
            reader.read_exact(&mut f32_buf)?;
            *v = f32::from_le_bytes(f32_buf) as f64;
        }
    }
    // Trailing garbage means the file does not match the declared config.
    let mut probe = [0u8; 1];
    if reader.read(&mut probe)? != 0 {
        return Err(Error::Checkpoint("trailing data after parameters".into()));
    }
    Ok((model, mode))
}
