//! `BLU1` weights file. All integers little-endian.
//!
//! ```text
//! magic        4 bytes  "BLU1"
//! version      u16      1
//! arch         7 × u32  in, classes, enc1, enc2, bottleneck, dec1, dec2
//! init seed    u64
//! input size   u32
//! clahe        u8 enabled, u32 tiles_x, u32 tiles_y, f32 clip_limit
//! norm         3 × f32 mean, 3 × f32 std
//! layers       u32 count, then per layer:
//!                u16 name_len, name (UTF-8), u8 dtype (0 = f32),
//!                u8 rank (4), 4 × u32 shape, f32 payload
//! crc          u32 CRC-32/IEEE of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::data::{ClaheConfig, Normalization, Preprocess};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, ModelParams};
use crate::tensor::{Shape, Tensor4};

pub const MAGIC: &[u8; 4] = b"BLU1";
pub const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

/// A deployable model: weights plus the preprocessing they were trained
/// with.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub params: ModelParams<f32>,
    pub preprocess: Preprocess,
}

fn u32_of(v: usize) -> u32 {
    u32::try_from(v).expect("dimension fits in u32")
}

impl WeightsFile {
    pub fn new(params: ModelParams<f32>, preprocess: Preprocess) -> Self {
        WeightsFile { params, preprocess }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.params.config();
        let pre = &self.preprocess;
        let mut b = Vec::with_capacity(64 + self.params.count() * 4 + self.params.params().len() * 48);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            cfg.in_channels,
            cfg.num_classes,
            cfg.enc_channels[0],
            cfg.enc_channels[1],
            cfg.bottleneck_channels,
            cfg.dec_channels[0],
            cfg.dec_channels[1],
        ] {
            b.extend_from_slice(&u32_of(v).to_le_bytes());
        }
        b.extend_from_slice(&self.params.seed().to_le_bytes());
        b.extend_from_slice(&pre.size.to_le_bytes());
        let clahe = pre.clahe.unwrap_or_default();
        b.push(u8::from(pre.clahe.is_some()));
        b.extend_from_slice(&clahe.tiles.0.to_le_bytes());
        b.extend_from_slice(&clahe.tiles.1.to_le_bytes());
        b.extend_from_slice(&(clahe.clip_limit as f32).to_le_bytes());
        for v in pre.norm.mean.iter().chain(&pre.norm.std) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&u32_of(self.params.params().len()).to_le_bytes());
        for p in self.params.params() {
            let name = p.name.as_bytes();
            b.extend_from_slice(&u16::try_from(name.len()).expect("short name").to_le_bytes());
            b.extend_from_slice(name);
            b.push(DTYPE_F32);
            b.push(4);
            let (n, c, h, w) = p.tensor.shape().as_tuple();
            for d in [n, c, h, w] {
                b.extend_from_slice(&u32_of(d).to_le_bytes());
            }
            for v in p.tensor.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic, not a BLU1 weights file"));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported weights version {version} (expected {VERSION})")));
        }
        let mut arch = [0usize; 7];
        for v in arch.iter_mut() {
            *v = r.u32("architecture")? as usize;
        }
        let config = ArchConfig {
            in_channels: arch[0],
            num_classes: arch[1],
            enc_channels: [arch[2], arch[3]],
            bottleneck_channels: arch[4],
            dec_channels: [arch[5], arch[6]],
        };
        let seed = r.u64("seed")?;
        let size = r.u32("input size")?;
        let clahe_on = r.u8("clahe flag")?;
        let tiles = (r.u32("clahe tiles")?, r.u32("clahe tiles")?);
        let clip = r.f32("clahe clip")?;
        let mut norm = Normalization::IMAGENET;
        for v in norm.mean.iter_mut().chain(norm.std.iter_mut()) {
            *v = r.f32("normalization")?;
        }
        let count_at = r.pos;
        let count = r.u32("layer count")? as usize;
        let expected = config.param_specs().len();
        if count != expected {
            return Err(Error::format(
                count_at as u64,
                format!("layer count {count} does not match architecture ({expected})"),
            ));
        }
        let mut parts = Vec::with_capacity(count);
        for i in 0..count {
            let start = r.pos;
            let ctx = format!("layer #{i}");
            let len = r.u16(&ctx)? as usize;
            let name = std::str::from_utf8(r.take(len, &ctx)?)
                .map_err(|_| Error::format(start as u64, format!("{ctx}: name is not UTF-8")))?
                .to_string();
            let ctx = format!("layer '{name}'");
            let dtype = r.u8(&ctx)?;
            if dtype != DTYPE_F32 {
                return Err(Error::format((r.pos - 1) as u64, format!("{ctx}: unknown dtype {dtype}")));
            }
            let rank = r.u8(&ctx)?;
            if rank != 4 {
                return Err(Error::format((r.pos - 1) as u64, format!("{ctx}: rank {rank}, expected 4")));
            }
            let dims_at = r.pos;
            let mut dims = [0usize; 4];
            for d in dims.iter_mut() {
                *d = r.u32(&ctx)? as usize;
            }
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])
                .map_err(|e| Error::format(dims_at as u64, format!("{ctx}: {e}")))?;
            let payload = r.take(shape.len() * 4, &ctx)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            parts.push((name, Tensor4::from_vec(shape, data)?));
        }
        let crc_at = r.pos;
        let stored = r.u32("checksum")?;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let actual = crc32fast::hash(&bytes[..crc_at]);
        if stored != actual {
            return Err(Error::format(
                crc_at as u64,
                format!("checksum mismatch (stored {stored:08x}, computed {actual:08x})"),
            ));
        }
        let params = ModelParams::from_parts(config, seed, parts)
            .map_err(|e| Error::format(count_at as u64, e.to_string()))?;
        let preprocess = Preprocess {
            size,
            clahe: (clahe_on != 0).then_some(ClaheConfig {
                tiles,
                clip_limit: f64::from(clip),
            }),
            norm,
        };
        Ok(WeightsFile { params, preprocess })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos as u64,
                format!("file truncated in {what} (need {n} bytes, {} left)", self.bytes.len() - self.pos),
            )),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }
}
