//! `.gsd` raw field files and the synthetic data generator.
//!
//! File layout, little-endian throughout:
//!
//! ```text
//! magic      b"GSD1"
//! dtype      u32   0 = f32, 1 = f64
//! members    u32
//! shapes     members x (T u32, H u32, W u32)
//! payload    members concatenated, samples row-major (t, y, x)
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::TensorField;

pub const GSD_MAGIC: &[u8; 4] = b"GSD1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            c => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }

    /// Value after a store/load round trip in this dtype.
    pub fn round(self, v: f64) -> f64 {
        match self {
            Dtype::F32 => v as f32 as f64,
            Dtype::F64 => v,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawHeader {
    pub dtype: Dtype,
    pub shapes: Vec<[usize; 3]>,
}

impl RawHeader {
    pub fn byte_len(&self) -> usize {
        12 + 12 * self.shapes.len()
    }

    pub fn payload_len(&self) -> usize {
        self.shapes
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum::<usize>()
            * self.dtype.width()
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Truncated("header shorter than 12 bytes".into()));
        }
        if &bytes[..4] != GSD_MAGIC {
            return Err(Error::Format("bad magic, expected GSD1".into()));
        }
        let dtype = Dtype::from_code(read_u32(bytes, 4))?;
        let members = read_u32(bytes, 8) as usize;
        if bytes.len() < 12 + 12 * members {
            return Err(Error::Truncated(format!("header declares {members} members")));
        }
        let shapes = (0..members)
            .map(|m| {
                let at = 12 + 12 * m;
                [
                    read_u32(bytes, at) as usize,
                    read_u32(bytes, at + 4) as usize,
                    read_u32(bytes, at + 8) as usize,
                ]
            })
            .collect();
        Ok(Self { dtype, shapes })
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Serializes fields into the `.gsd` layout.
pub fn encode_raw(fields: &[TensorField], dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(GSD_MAGIC);
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for f in fields {
        for &d in &f.shape {
            let d = u32::try_from(d).map_err(|_| Error::Shape(format!("axis {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    for f in fields {
        match dtype {
            Dtype::F32 => f
                .values
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            Dtype::F64 => f
                .values
                .iter()
                .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<(RawHeader, Vec<TensorField>)> {
    let header = RawHeader::parse(bytes)?;
    let body = &bytes[header.byte_len()..];
    let expected = header.payload_len();
    if body.len() < expected {
        return Err(Error::Truncated(format!(
            "header declares {expected} payload bytes, file has {}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after declared payload",
            body.len() - expected
        )));
    }
    let width = header.dtype.width();
    let mut offset = 0;
    let mut fields = Vec::with_capacity(header.shapes.len());
    for (m, &shape) in header.shapes.iter().enumerate() {
        let n: usize = shape.iter().product();
        let chunk = &body[offset..offset + n * width];
        offset += n * width;
        let values = match header.dtype {
            Dtype::F32 => chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        fields.push(TensorField::new(m as u32, shape, values)?);
    }
    Ok((header, fields))
}

/// Writes `fields` to `path`; returns the number of bytes written.
pub fn write_raw(fields: &[TensorField], dtype: Dtype, path: impl AsRef<Path>) -> Result<usize> {
    let bytes = encode_raw(fields, dtype)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<(RawHeader, Vec<TensorField>)> {
    decode_raw(&fs::read(path)?)
}

/// Parameters of the drifting-bump generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub shape: [usize; 3],
    pub bump_count: usize,
    pub amplitude: (f64, f64),
    /// Gaussian bump standard deviation in samples.
    pub width: (f64, f64),
    /// Per-axis center velocity in samples per time step.
    pub drift: (f64, f64),
    pub noise_amplitude: f64,
    pub noise_sigma: f64,
    pub offset: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shape: [16, 64, 64],
            bump_count: 6,
            amplitude: (10.0, 30.0),
            width: (3.0, 8.0),
            drift: (-0.3, 0.3),
            noise_amplitude: 0.5,
            noise_sigma: 2.0,
            offset: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let nonempty = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.shape.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!("shape {:?} must be positive", self.shape)));
        }
        if !nonempty(self.amplitude) || !nonempty(self.drift) || !nonempty(self.width) || self.width.0 <= 0.0 {
            return Err(Error::Config("amplitude, width and drift ranges must be nonempty".into()));
        }
        if !(self.noise_amplitude >= 0.0) || !(self.noise_sigma > 0.0) {
            return Err(Error::Config("noise amplitude must be >= 0 and sigma > 0".into()));
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Sum of drifting Gaussian bumps plus spatiotemporally smoothed noise.
pub fn generate_synthetic(config: &SynthConfig) -> Result<TensorField> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let [nt, ny, nx] = config.shape;
    let mut values = vec![config.offset; nt * ny * nx];

    for _ in 0..config.bump_count {
        let cy = rng.random_range(0.0..ny as f64);
        let cx = rng.random_range(0.0..nx as f64);
        let vy = sample(&mut rng, config.drift);
        let vx = sample(&mut rng, config.drift);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let amp = sign * sample(&mut rng, config.amplitude);
        let w = sample(&mut rng, config.width);
        let inv = 1.0 / (2.0 * w * w);
        for t in 0..nt {
            let (py, px) = (cy + vy * t as f64, cx + vx * t as f64);
            for y in 0..ny {
                let dy = y as f64 - py;
                let row = (t * ny + y) * nx;
                for x in 0..nx {
                    let dx = x as f64 - px;
                    values[row + x] += amp * (-(dy * dy + dx * dx) * inv).exp();
                }
            }
        }
    }

    if config.noise_amplitude > 0.0 {
        let mut noise: Vec<f64> = (0..nt * ny * nx).map(|_| rng.sample(StandardNormal)).collect();
        let kernel = gaussian_kernel(config.noise_sigma);
        for axis in 0..3 {
            noise = smooth_axis(&noise, config.shape, axis, &kernel);
        }
        for (v, n) in values.iter_mut().zip(&noise) {
            *v += config.noise_amplitude * n;
        }
    }
    TensorField::new(0, config.shape, values)
}

/// Taps normalized to unit energy so white noise keeps unit variance.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let energy = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter_mut().for_each(|v| *v /= energy);
    k
}

fn smooth_axis(src: &[f64], shape: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let strides = [shape[1] * shape[2], shape[2], 1];
    let len = shape[axis] as i64;
    let mut out = vec![0.0; src.len()];
    for t in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let pos = [t, y, x];
                let base = t * strides[0] + y * strides[1] + x - pos[axis] * strides[axis];
                let mut acc = 0.0;
                for (j, &w) in kernel.iter().enumerate() {
                    let i = (pos[axis] as i64 + j as i64 - radius).clamp(0, len - 1) as usize;
                    acc += w * src[base + i * strides[axis]];
                }
                out[t * strides[0] + y * strides[1] + x] = acc;
            }
        }
    }
    out
}

/// Pooled lag-1 Pearson correlation along time over `sites` random `(y, x)` locations.
pub fn lag1_autocorrelation(field: &TensorField, sites: usize, seed: u64) -> f64 {
    let [nt, ny, nx] = field.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for _ in 0..sites {
        let (y, x) = (rng.random_range(0..ny), rng.random_range(0..nx));
        for t in 0..nt.saturating_sub(1) {
            pairs.push((field.get(t, y, x), field.get(t + 1, y, x)));
        }
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(p, q)| (a + p / n, b + q / n));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for &(p, q) in &pairs {
        cov += (p - ma) * (q - mb);
        va += (p - ma) * (p - ma);
        vb += (q - mb) * (q - mb);
    }
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn field(member: u32, shape: [usize; 3], seed: u64) -> TensorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        TensorField::new(member, shape, (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn f64_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.gsd");
        let f = field(0, [16, 64, 64], 1);
        let written = write_raw(&[f.clone()], Dtype::F64, &path).unwrap();
        assert_eq!(written, 12 + 12 + 524_288);
        let (header, back) = read_raw(&path).unwrap();
        assert_eq!(header.dtype, Dtype::F64);
        assert_eq!(back, vec![f]);
    }

    #[test]
    fn empty_file_round_trip() {
        let bytes = encode_raw(&[], Dtype::F32).unwrap();
        assert_eq!(bytes.len(), 12);
        let (_, fields) = decode_raw(&bytes).unwrap();
        assert!(fields.is_empty());
    }

    #[test]
    fn two_members_keep_their_shapes() {
        let a = field(0, [2, 3, 4], 2);
        let b = field(1, [5, 1, 2], 3);
        let bytes = encode_raw(&[a.clone(), b.clone()], Dtype::F64).unwrap();
        let (_, back) = decode_raw(&bytes).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = encode_raw(&[field(0, [2, 2, 2], 4)], Dtype::F64).unwrap();
        let err = decode_raw(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn bad_magic_and_dtype_rejected() {
        let mut bytes = encode_raw(&[field(0, [1, 1, 1], 5)], Dtype::F64).unwrap();
        bytes[6] = 9;
        assert!(matches!(decode_raw(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_raw(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn f32_source_matches_f32_rounding(seed in 0u64..500) {
            let f = field(0, [2, 3, 3], seed);
            let bytes = encode_raw(&[f.clone()], Dtype::F32).unwrap();
            let (_, back) = decode_raw(&bytes).unwrap();
            for (a, b) in f.values.iter().zip(&back[0].values) {
                prop_assert_eq!(*b, *a as f32 as f64);
                prop_assert!((a - b).abs() <= a.abs() * f32::EPSILON as f64);
            }
        }
    }

    #[test]
    fn no_bumps_no_noise_is_zero() {
        let cfg = SynthConfig {
            bump_count: 0,
            noise_amplitude: 0.0,
            shape: [4, 8, 8],
            ..SynthConfig::default()
        };
        let f = generate_synthetic(&cfg).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SynthConfig { seed: 11, shape: [6, 12, 10], ..SynthConfig::default() };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 12, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn static_bump_keeps_argmax() {
        let cfg = SynthConfig {
            seed: 7,
            shape: [8, 24, 24],
            bump_count: 1,
            amplitude: (5.0, 5.0),
            drift: (0.0, 0.0),
            noise_amplitude: 0.0,
            ..SynthConfig::default()
        };
        let f = generate_synthetic(&cfg).unwrap();
        let frame = 24 * 24;
        let argext = |t: usize| {
            let s = &f.values[t * frame..(t + 1) * frame];
            s.iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0
        };
        let first = argext(0);
        assert!((1..8).all(|t| argext(t) == first));
    }

    #[test]
    fn temporal_autocorrelation_is_high() {
        for seed in 0..5 {
            let cfg = SynthConfig { seed, ..SynthConfig::default() };
            let f = generate_synthetic(&cfg).unwrap();
            let r = lag1_autocorrelation(&f, 200, seed);
            assert!(r >= 0.9, "seed {seed}: lag-1 autocorrelation {r}");
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig { amplitude: (3.0, 1.0), ..SynthConfig::default() };
        assert!(generate_synthetic(&cfg).is_err());
        let cfg = SynthConfig { shape: [0, 1, 1], ..SynthConfig::default() };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
