//! Checkpoint container: magic + version tag, a JSON meta blob (config echo),
//! then named tensors with raw little-endian f64 payloads. Write-then-read is
//! value-identical because the floats round-trip as bits.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Shape, Tensor};
use crate::error::{Error, Result};

use super::ModelConfig;

const MAGIC: &[u8; 8] = b"AMBKCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
}

pub fn write_checkpoint(
    path: &Path,
    config: &ModelConfig,
    params: &BTreeMap<String, Tensor>,
    stats: &BTreeMap<String, Tensor>,
) -> Result<()> {
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        config: config.clone(),
    };
    let meta_json = serde_json::to_vec(&meta)?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    write_tensor_section(&mut buf, params);
    write_tensor_section(&mut buf, stats);
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn write_tensor_section(buf: &mut Vec<u8>, tensors: &BTreeMap<String, Tensor>) {
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let dims = t.shape().dims();
        buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn read_checkpoint(
    path: &Path,
) -> Result<(CheckpointMeta, BTreeMap<String, Tensor>, BTreeMap<String, Tensor>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
    let params = read_tensor_section(&mut r)?;
    let stats = read_tensor_section(&mut r)?;
    Ok((meta, params, stats))
}

fn read_tensor_section(r: &mut Reader<'_>) -> Result<BTreeMap<String, Tensor>> {
    let count = r.u32()? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("non-utf8 tensor name".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 4 {
            return Err(Error::Checkpoint(format!("tensor `{name}` rank {rank} > 4")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let shape = Shape::new(&dims);
        let n = shape.numel();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        out.insert(name, Tensor::from_vec(shape, data).map_err(|_| Error::Checkpoint("tensor size".into()))?);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl super::MultiMaskNet {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, self.config(), self.params(), self.stats())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, params, stats) = read_checkpoint(path)?;
        let mut net = super::MultiMaskNet::new(meta.config)?;
        net.set_state(params, stats)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ModelConfig, MultiMaskNet, NetInput};
    use crate::diffcore::{Shape, Tensor};
    use rand::Rng;

    #[test]
    fn checkpoint_roundtrip_is_value_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = ModelConfig {
            input_h: 16,
            input_w: 16,
            encoder_widths: vec![4, 8],
            fusion_width: 8,
            heads: 2,
            seed: 77,
            ..ModelConfig::default()
        };
        let net = MultiMaskNet::new(cfg).unwrap();
        net.save(&path).unwrap();
        let restored = MultiMaskNet::load(&path).unwrap();
        assert_eq!(net.params(), restored.params());
        assert_eq!(net.stats(), restored.stats());
        assert_eq!(net.config(), restored.config());

        let mut rng = crate::util::rng_for(3, "ckpt", 0);
        let img = Tensor::from_vec(
            Shape::new(&[3, 16, 16]),
            (0..768).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let a = net.forward(&NetInput::Image(img.clone())).unwrap();
        let b = restored.forward(&NetInput::Image(img)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(super::read_checkpoint(&path).is_err());
    }
}
