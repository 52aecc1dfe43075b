//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SSNN"  version:u16  width_bits:u8  timesteps:u8
//! threshold_count:u16  thresholds:[u16]
//! input_channels:u16  height:u16  width:u16
//! layer_count:u16
//! per layer:
//!   kernel_side:u8  in_channels:u16  out_channels:u16  height:u16  width:u16
//!   maxpool:u8  threshold:i16  bias:[i16; out]  kernels:[i16; out*in*side*side]
//! classes:u16  inputs:u32  weights:[i16; classes*inputs]  bias:[i16; classes]
//! crc32:u32   (over every preceding byte)
//! ```
//!
//! Kernels are stored in natural orientation, `[c_out][c_in][row][col]`.

use std::fmt;
use std::path::Path;

use aeqsim_core::{Classifier, FmapDims, KernelSize, LayerSpec, ModelError, NetworkSpec, ThresholdSchedule, Width};

pub const MAGIC: [u8; 4] = *b"SSNN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Header,
    Layer(usize),
    Classifier,
    Checksum,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Header => f.write_str("header"),
            Section::Layer(l) => write!(f, "layer {l}"),
            Section::Classifier => f.write_str("classifier"),
            Section::Checksum => f.write_str("checksum"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic {0:02x?}, not a model file")]
    BadMagic([u8; 4]),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported fixed-point width {0} bits")]
    BadWidth(u8),
    #[error("{section}: file ends inside `{field}` at byte {offset}")]
    Truncated { section: Section, field: &'static str, offset: usize },
    #[error("{section}: `{field}` has invalid value {value}")]
    BadField { section: Section, field: &'static str, value: u64 },
    #[error("header: {thresholds} thresholds cannot encode {timesteps} timesteps")]
    TimestepMismatch { timesteps: u8, thresholds: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0} unexpected bytes after checksum")]
    TrailingBytes(usize),
    #[error("invalid model: {0}")]
    Invalid(ModelError),
}

impl ModelFileError {
    /// I/O problems are the caller's environment; everything else is the file.
    pub fn is_io(&self) -> bool {
        matches!(self, ModelFileError::Io { .. })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: Section,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], ModelFileError> {
        if self.bytes.len() - self.pos < n {
            return Err(ModelFileError::Truncated { section: self.section, field, offset: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, ModelFileError> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, ModelFileError> {
        let b = self.take(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, ModelFileError> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i16(&mut self, field: &'static str) -> Result<i16, ModelFileError> {
        Ok(self.u16(field)? as i16)
    }

    /// Length-checked before allocating, so a corrupted count cannot ask for
    /// more memory than the file could hold.
    fn i16s(&mut self, n: usize, field: &'static str) -> Result<Vec<i16>, ModelFileError> {
        let bytes = n.checked_mul(2).ok_or(ModelFileError::BadField { section: self.section, field, value: n as u64 })?;
        let raw = self.take(bytes, field)?;
        Ok(raw.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
    }

    fn u16s(&mut self, n: usize, field: &'static str) -> Result<Vec<u16>, ModelFileError> {
        let raw = self.take(n * 2, field)?;
        Ok(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
    }
}

pub fn parse_model(bytes: &[u8]) -> Result<NetworkSpec, ModelFileError> {
    let mut r = Reader { bytes, pos: 0, section: Section::Header };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(ModelFileError::BadMagic(magic));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let bits = r.u8("width")?;
    let width = Width::from_bits(bits as u32).ok_or(ModelFileError::BadWidth(bits))?;
    let timesteps = r.u8("timesteps")?;
    let n_thresholds = r.u16("threshold_count")? as usize;
    let thresholds = r.u16s(n_thresholds, "thresholds")?;
    if timesteps as usize != n_thresholds + 1 {
        return Err(ModelFileError::TimestepMismatch { timesteps, thresholds: n_thresholds });
    }
    let schedule = ThresholdSchedule::new(thresholds).map_err(|e| ModelFileError::Invalid(ModelError::Schedule(e)))?;
    let input_channels = r.u16("input_channels")? as usize;
    let input = FmapDims::new(r.u16("height")? as usize, r.u16("width")? as usize);
    let n_layers = r.u16("layer_count")? as usize;

    let mut layers = Vec::with_capacity(n_layers.min(64));
    for l in 0..n_layers {
        r.section = Section::Layer(l);
        let side = r.u8("kernel_side")?;
        let kernel = match side {
            1 => KernelSize::One,
            3 => KernelSize::Three,
            v => return Err(ModelFileError::BadField { section: r.section, field: "kernel_side", value: v as u64 }),
        };
        let in_channels = r.u16("in_channels")? as usize;
        let out_channels = r.u16("out_channels")? as usize;
        let dims = FmapDims::new(r.u16("height")? as usize, r.u16("width")? as usize);
        let maxpool = match r.u8("maxpool")? {
            0 => false,
            1 => true,
            v => return Err(ModelFileError::BadField { section: r.section, field: "maxpool", value: v as u64 }),
        };
        let threshold = r.i16("threshold")?;
        let bias = r.i16s(out_channels, "bias")?;
        let kernels = r.i16s(out_channels * in_channels * kernel.taps(), "kernels")?;
        layers.push(LayerSpec { kernel, in_channels, out_channels, input: dims, kernels, bias, threshold, maxpool });
    }

    r.section = Section::Classifier;
    let classes = r.u16("classes")? as usize;
    let inputs = r.u32("inputs")? as usize;
    let weights = r.i16s(classes.saturating_mul(inputs), "weights")?;
    let bias = r.i16s(classes, "bias")?;

    let body = r.pos;
    r.section = Section::Checksum;
    let stored = r.u32("crc32")?;
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(ModelFileError::Checksum { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(ModelFileError::TrailingBytes(bytes.len() - r.pos));
    }

    let net = NetworkSpec { width, input_channels, input, schedule, layers, classifier: Classifier { classes, inputs, weights, bias } };
    net.validate().map_err(ModelFileError::Invalid)?;
    Ok(net)
}

fn put_i16s(out: &mut Vec<u8>, v: &[i16]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn dim16(v: usize, what: &str) -> u16 {
    u16::try_from(v).unwrap_or_else(|_| panic!("{what} = {v} does not fit the file format"))
}

/// Serializes `net`. Panics if a dimension exceeds the format's field widths.
pub fn encode_model(net: &NetworkSpec) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(net.width.bits() as u8);
    out.push(u8::try_from(net.timesteps()).expect("timesteps fit u8"));
    let th = net.schedule.thresholds();
    out.extend_from_slice(&dim16(th.len(), "threshold count").to_le_bytes());
    for t in th {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out.extend_from_slice(&dim16(net.input_channels, "input channels").to_le_bytes());
    out.extend_from_slice(&dim16(net.input.height, "height").to_le_bytes());
    out.extend_from_slice(&dim16(net.input.width, "width").to_le_bytes());
    out.extend_from_slice(&dim16(net.layers.len(), "layer count").to_le_bytes());
    for layer in &net.layers {
        out.push(layer.kernel.side() as u8);
        out.extend_from_slice(&dim16(layer.in_channels, "in channels").to_le_bytes());
        out.extend_from_slice(&dim16(layer.out_channels, "out channels").to_le_bytes());
        out.extend_from_slice(&dim16(layer.input.height, "height").to_le_bytes());
        out.extend_from_slice(&dim16(layer.input.width, "width").to_le_bytes());
        out.push(layer.maxpool as u8);
        out.extend_from_slice(&layer.threshold.to_le_bytes());
        put_i16s(&mut out, &layer.bias);
        put_i16s(&mut out, &layer.kernels);
    }
    let c = &net.classifier;
    out.extend_from_slice(&dim16(c.classes, "classes").to_le_bytes());
    out.extend_from_slice(&u32::try_from(c.inputs).expect("classifier inputs fit u32").to_le_bytes());
    put_i16s(&mut out, &c.weights);
    put_i16s(&mut out, &c.bias);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn load_model(path: &Path) -> Result<NetworkSpec, ModelFileError> {
    let bytes = std::fs::read(path).map_err(|source| ModelFileError::Io { path: path.display().to_string(), source })?;
    parse_model(&bytes)
}

pub fn save_model(net: &NetworkSpec, path: &Path) -> Result<(), ModelFileError> {
    std::fs::write(path, encode_model(net)).map_err(|source| ModelFileError::Io { path: path.display().to_string(), source })
}
