//! The `.gcdt` archive.
//!
//! ```text
//! magic            b"GCDT"
//! version          u16
//! codec            u8    0 diffusion, 1 autoencoder
//! block_shape      u32 x 3
//! latent_channels, embed_channels, encoder_width, unet_width, time_dim, norm_groups   u32 each
//! diffusion_steps  u32
//! beta_min         f64
//! beta_max         f64
//! latent quant     b u64, a u64
//! coeff quant      b u64, a u64
//! guarantee_block  u32 x 3
//! tau              f64
//! n_t              u32
//! tc_applied       u8
//! dtype            u8    0 f32, 1 f64
//! members          u32, then per member: id u32, shape u32 x 3, min f64, max f64
//! latent           u32 length + Huffman stream of quantized latents
//! corrections      u32 length + correction payload
//! basis            u32 length + basis blob
//! fingerprints     u8 count, then per file: name (u8 length + UTF-8), sha256 [32], size u64
//! crc32            u32 over every preceding byte
//! ```
//!
//! All integers are little-endian. Latent codes run over members in order,
//! then codec blocks in lexicographic origin order, then the flattened latent.

use sha2::{Digest, Sha256};

use super::metrics::ByteBreakdown;
use crate::bytes::{Reader, Writer};
use crate::data_io::Dtype;
use crate::diffusion::{CodecConfig, CodecKind};
use crate::entropy::{stream_table_bytes, QuantConfig};
use crate::error::{Error, Result};
use crate::guarantee::payload_table_bytes;
use crate::tensor::NormStats;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"GCDT";
pub const ARCHIVE_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemberHeader {
    pub member_id: u32,
    pub shape: [usize; 3],
    pub stats: NormStats,
}

/// Identity and size of one file the decoder needs besides the archive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub name: String,
    pub sha256: [u8; 32],
    pub size: u64,
}

impl Fingerprint {
    pub fn of(name: &str, bytes: &[u8]) -> Self {
        Self { name: name.to_owned(), sha256: Sha256::digest(bytes).into(), size: bytes.len() as u64 }
    }

    pub fn hex(&self) -> String {
        self.sha256.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub codec: CodecKind,
    pub model: CodecConfig,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub latent_quant: QuantConfig,
    pub coeff_quant: QuantConfig,
    pub guarantee_block: [usize; 3],
    pub tau: f64,
    pub n_t: usize,
    pub tc_applied: bool,
    pub dtype: Dtype,
    pub members: Vec<MemberHeader>,
    pub latent: Vec<u8>,
    pub corrections: Vec<u8>,
    pub basis: Vec<u8>,
    pub fingerprints: Vec<Fingerprint>,
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in 32 bits")))
}

fn shape3(w: &mut Writer, s: [usize; 3]) -> Result<()> {
    for d in s {
        w.u32(u32_of(d, "dimension")?);
    }
    Ok(())
}

fn read_shape3(r: &mut Reader<'_>) -> Result<[usize; 3]> {
    Ok([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize])
}

fn read_quant(r: &mut Reader<'_>) -> Result<QuantConfig> {
    let (b, a) = (r.u64()?, r.u64()?);
    QuantConfig::new(b, a).map_err(|e| Error::Format(format!("archive quantizer: {e}")))
}

impl Archive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(ARCHIVE_MAGIC);
        w.u16(ARCHIVE_VERSION);
        w.u8(self.codec.code());
        let m = &self.model;
        shape3(&mut w, m.block_shape)?;
        for v in [m.latent_channels, m.embed_channels, m.encoder_width, m.unet_width, m.time_dim, m.norm_groups] {
            w.u32(u32_of(v, "channel count")?);
        }
        w.u32(u32_of(self.diffusion_steps, "diffusion steps")?);
        w.f64(self.beta_min);
        w.f64(self.beta_max);
        for q in [self.latent_quant, self.coeff_quant] {
            w.u64(q.b);
            w.u64(q.a);
        }
        shape3(&mut w, self.guarantee_block)?;
        w.f64(self.tau);
        w.u32(u32_of(self.n_t, "trace length")?);
        w.u8(u8::from(self.tc_applied));
        w.u8(self.dtype.code() as u8);
        w.u32(u32_of(self.members.len(), "member count")?);
        for mem in &self.members {
            w.u32(mem.member_id);
            shape3(&mut w, mem.shape)?;
            w.f64(mem.stats.min);
            w.f64(mem.stats.max);
        }
        w.section(&self.latent)?;
        w.section(&self.corrections)?;
        w.section(&self.basis)?;
        let count = u8::try_from(self.fingerprints.len()).map_err(|_| Error::Format("too many fingerprints".into()))?;
        w.u8(count);
        for f in &self.fingerprints {
            let name = u8::try_from(f.name.len()).map_err(|_| Error::Format(format!("file name {} too long", f.name)))?;
            w.u8(name);
            w.bytes(f.name.as_bytes());
            w.bytes(&f.sha256);
            w.u64(f.size);
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ARCHIVE_MAGIC.len() + 6 {
            return Err(Error::Truncated(format!("archive of {} bytes", bytes.len())));
        }
        if &bytes[..4] != ARCHIVE_MAGIC {
            return Err(Error::Format("not a GCDT archive (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader::new(body, "archive");
        r.take(4)?;
        let version = r.u16()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Format(format!("unsupported archive version {version}")));
        }
        let codec = CodecKind::from_code(r.u8()?)?;
        let block_shape = read_shape3(&mut r)?;
        let mut ch = [0usize; 6];
        for c in &mut ch {
            *c = r.u32()? as usize;
        }
        let model = CodecConfig {
            block_shape,
            latent_channels: ch[0],
            embed_channels: ch[1],
            encoder_width: ch[2],
            unet_width: ch[3],
            time_dim: ch[4],
            norm_groups: ch[5],
        };
        let diffusion_steps = r.u32()? as usize;
        let (beta_min, beta_max) = (r.f64()?, r.f64()?);
        let latent_quant = read_quant(&mut r)?;
        let coeff_quant = read_quant(&mut r)?;
        let guarantee_block = read_shape3(&mut r)?;
        let tau = r.f64()?;
        let n_t = r.u32()? as usize;
        let tc_applied = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("bad correction flag {v}"))),
        };
        let dtype = Dtype::from_code(u32::from(r.u8()?))?;
        let count = r.u32()? as usize;
        if count > r.remaining() / 36 {
            return Err(Error::Truncated(format!("archive claims {count} members")));
        }
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            let member_id = r.u32()?;
            let shape = read_shape3(&mut r)?;
            let stats = NormStats::new(r.f64()?, r.f64()?)?;
            members.push(MemberHeader { member_id, shape, stats });
        }
        let latent = r.section()?.to_vec();
        let corrections = r.section()?.to_vec();
        let basis = r.section()?.to_vec();
        let mut fingerprints = Vec::new();
        for _ in 0..r.u8()? {
            let len = r.u8()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("file name is not UTF-8".into()))?.to_owned();
            let sha256 = r.take(32)?.try_into().unwrap();
            fingerprints.push(Fingerprint { name, sha256, size: r.u64()? });
        }
        r.finish()?;
        Ok(Self {
            codec,
            model,
            diffusion_steps,
            beta_min,
            beta_max,
            latent_quant,
            coeff_quant,
            guarantee_block,
            tau,
            n_t,
            tc_applied,
            dtype,
            members,
            latent,
            corrections,
            basis,
            fingerprints,
        })
    }

    pub fn model_bytes(&self) -> usize {
        self.fingerprints.iter().map(|f| f.size as usize).sum()
    }

    /// Size accounting of the serialized archive plus the model files it names.
    pub fn breakdown(&self) -> Result<ByteBreakdown> {
        let archive = self.to_bytes()?.len();
        let latent_tables = stream_table_bytes(&self.latent)?;
        let corr_tables = payload_table_bytes(&self.corrections)?;
        let latent = self.latent.len() - latent_tables;
        let corrections = self.corrections.len() - corr_tables;
        let tables = latent_tables + corr_tables;
        let basis = self.basis.len();
        Ok(ByteBreakdown {
            latent,
            corrections,
            basis,
            tables,
            models: self.model_bytes(),
            header: archive - latent - corrections - basis - tables,
        })
    }
}
