//! NFCK checkpoints: magic `NFCK`, u32 LE version (1), u32 LE entry count,
//! then per entry a u32 name length, UTF-8 name, u32 rank, rank × u64 dims
//! and row-major f64 LE values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layer::{CouplingMask, FlowLayer};
use super::mlp::{Activation, MlpSubnet};
use super::model::FlowModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NFCK_MAGIC: &[u8; 4] = b"NFCK";
pub const NFCK_VERSION: u32 = 1;

/// Ordered list of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        format: "NFCK",
        offset,
        message: message.into(),
    }
}

fn missing(name: &str) -> Error {
    format_err(0, format!("missing entry {name:?}"))
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                format_err(self.offset, format!("truncated while reading {what}"))
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.bytes(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    /// Appends or replaces an entry.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = t,
            None => self.entries.push((name, t)),
        }
    }

    pub fn insert_vec(&mut self, name: impl Into<String>, v: Vec<f64>) {
        let n = v.len();
        self.insert(name, Tensor::from_raw(vec![n], v).expect("vector shape"));
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.insert_vec(name, vec![v]);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| missing(name))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.require(name)?;
        if t.len() != 1 {
            return Err(format_err(0, format!("entry {name:?} is not a scalar")));
        }
        Ok(t.data()[0])
    }

    /// Stores a u64 exactly as two 32-bit halves.
    pub fn insert_u64(&mut self, name: impl Into<String>, v: u64) {
        self.insert_vec(name, vec![(v >> 32) as f64, (v & 0xffff_ffff) as f64]);
    }

    pub fn get_u64(&self, name: &str) -> Result<u64> {
        let t = self.require(name)?;
        match t.data() {
            [hi, lo] => Ok(((*hi as u64) << 32) | (*lo as u64)),
            _ => Err(format_err(0, format!("entry {name:?} is not a u64 pair"))),
        }
    }

    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|(n, _)| !n.starts_with(prefix));
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(NFCK_MAGIC)?;
        w.write_all(&NFCK_VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader { inner: r, offset: 0 };
        let magic = r.bytes(4, "magic")?;
        if magic != NFCK_MAGIC {
            return Err(format_err(0, format!("bad magic {magic:?}")));
        }
        let version = r.u32("version")?;
        if version != NFCK_VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let count = r.u32("entry count")?;
        let mut entries = Vec::with_capacity(count.min(1 << 16) as usize);
        for _ in 0..count {
            let at = r.offset;
            let len = r.u32("name length")? as usize;
            if len > 4096 {
                return Err(format_err(at, format!("name length {len} too large")));
            }
            let name = String::from_utf8(r.bytes(len, "name")?).map_err(|_| format_err(at + 4, "name is not UTF-8"))?;
            let at = r.offset;
            let ndim = r.u32("rank")? as usize;
            if ndim == 0 || ndim > 16 {
                return Err(format_err(at, format!("unsupported rank {ndim}")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64("dimension")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| format_err(at, "dimension product overflows"))?;
            let mut data = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                data.push(f64::from_bits(r.u64("payload")?));
            }
            let t = Tensor::from_raw(shape, data).map_err(|e| format_err(at, e.to_string()))?;
            entries.push((name, t));
        }
        Ok(Checkpoint { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn push_subnet(ck: &mut Checkpoint, prefix: &str, net: &MlpSubnet) {
    ck.insert_vec(
        format!("{prefix}widths"),
        net.widths().iter().map(|&w| w as f64).collect(),
    );
    for ((role, shape), p) in net.param_layout().into_iter().zip(net.params()) {
        ck.insert(
            format!("{prefix}{role}"),
            Tensor::from_raw(shape, p.to_vec()).expect("layout matches"),
        );
    }
}

fn read_subnet(ck: &Checkpoint, prefix: &str, activation: Activation) -> Result<MlpSubnet> {
    let widths: Vec<usize> = ck
        .require(&format!("{prefix}widths"))?
        .data()
        .iter()
        .map(|&w| w as usize)
        .collect();
    let n = widths.len().saturating_sub(1);
    let mut weights = Vec::with_capacity(n);
    let mut biases = Vec::with_capacity(n);
    for l in 0..n {
        weights.push(ck.require(&format!("{prefix}w{l}"))?.data().to_vec());
        biases.push(ck.require(&format!("{prefix}b{l}"))?.data().to_vec());
    }
    MlpSubnet::from_parts(widths, weights, biases, activation)
        .ok_or_else(|| format_err(0, format!("inconsistent subnet shapes under {prefix:?}")))
}

fn mask_vec(mask: &CouplingMask) -> Vec<f64> {
    mask.active().iter().map(|&a| if a { 1.0 } else { 0.0 }).collect()
}

fn read_mask(ck: &Checkpoint, name: &str) -> Result<CouplingMask> {
    CouplingMask::new(ck.require(name)?.data().iter().map(|&v| v != 0.0).collect())
}

fn read_activation(ck: &Checkpoint, name: &str) -> Result<Activation> {
    let c = ck.scalar(name)?;
    Activation::from_code(c).ok_or_else(|| format_err(0, format!("unknown activation code {c}")))
}

/// Serializes the model architecture and parameters.
pub fn flow_to_checkpoint(model: &FlowModel) -> Checkpoint {
    let mut ck = Checkpoint::new();
    ck.insert_scalar("flow.dim", model.dim() as f64);
    ck.insert_scalar("flow.n_layers", model.layers().len() as f64);
    for (i, layer) in model.layers().iter().enumerate() {
        let p = format!("layer{i:03}.{}.", layer.kind_name());
        match layer {
            FlowLayer::ActNorm {
                scale,
                bias,
                initialized,
            } => {
                ck.insert_vec(format!("{p}scale"), scale.clone());
                ck.insert_vec(format!("{p}bias"), bias.clone());
                ck.insert_scalar(format!("{p}initialized"), if *initialized { 1.0 } else { 0.0 });
            }
            FlowLayer::AdditiveCoupling { mask, subnet } => {
                ck.insert_vec(format!("{p}mask"), mask_vec(mask));
                ck.insert_scalar(format!("{p}act"), subnet.activation().code());
                push_subnet(&mut ck, &p, subnet);
            }
            FlowLayer::AffineCoupling {
                mask,
                scale_net,
                shift_net,
            } => {
                ck.insert_vec(format!("{p}mask"), mask_vec(mask));
                ck.insert_scalar(format!("{p}act"), scale_net.activation().code());
                push_subnet(&mut ck, &format!("{p}scale."), scale_net);
                push_subnet(&mut ck, &format!("{p}shift."), shift_net);
            }
            FlowLayer::Permutation { perm } => {
                ck.insert_vec(format!("{p}perm"), perm.iter().map(|&v| v as f64).collect());
            }
        }
    }
    ck
}

/// Rebuilds a model from the `flow.*`/`layer*` entries of a checkpoint.
pub fn flow_from_checkpoint(ck: &Checkpoint) -> Result<FlowModel> {
    let dim = ck.scalar("flow.dim")? as usize;
    let n_layers = ck.scalar("flow.n_layers")? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let prefix = format!("layer{i:03}.");
        let kind = ck
            .entries()
            .iter()
            .find_map(|(n, _)| n.strip_prefix(&prefix))
            .and_then(|rest| rest.split('.').next())
            .ok_or_else(|| missing(&prefix))?;
        let p = format!("{prefix}{kind}.");
        let layer = match kind {
            "actnorm" => {
                let scale = ck.require(&format!("{p}scale"))?.data().to_vec();
                let bias = ck.require(&format!("{p}bias"))?.data().to_vec();
                let initialized = ck.scalar(&format!("{p}initialized"))? != 0.0;
                if let Some((index, &value)) = scale.iter().enumerate().find(|(_, s)| s.abs() < 1e-12) {
                    return Err(Error::SingularScale { index, value });
                }
                FlowLayer::ActNorm {
                    scale,
                    bias,
                    initialized,
                }
            }
            "additive" => FlowLayer::AdditiveCoupling {
                mask: read_mask(ck, &format!("{p}mask"))?,
                subnet: read_subnet(ck, &p, read_activation(ck, &format!("{p}act"))?)?,
            },
            "affine" => {
                let act = read_activation(ck, &format!("{p}act"))?;
                FlowLayer::AffineCoupling {
                    mask: read_mask(ck, &format!("{p}mask"))?,
                    scale_net: read_subnet(ck, &format!("{p}scale."), act)?,
                    shift_net: read_subnet(ck, &format!("{p}shift."), act)?,
                }
            }
            "permutation" => FlowLayer::permutation(
                ck.require(&format!("{p}perm"))?
                    .data()
                    .iter()
                    .map(|&v| v as usize)
                    .collect(),
            )?,
            other => return Err(format_err(0, format!("unknown layer kind {other:?}"))),
        };
        if let FlowLayer::AdditiveCoupling { mask, subnet } = &layer {
            if subnet.input_width() != mask.n_passive() || subnet.output_width() != mask.n_active() {
                return Err(format_err(0, format!("layer {i}: subnet does not match mask")));
            }
        }
        if let FlowLayer::AffineCoupling {
            mask,
            scale_net,
            shift_net,
        } = &layer
        {
            for net in [scale_net, shift_net] {
                if net.input_width() != mask.n_passive() || net.output_width() != mask.n_active() {
                    return Err(format_err(0, format!("layer {i}: subnet does not match mask")));
                }
            }
        }
        layers.push(layer);
    }
    FlowModel::new(dim, layers)
}

pub fn save_flow(model: &FlowModel, path: impl AsRef<Path>) -> Result<()> {
    flow_to_checkpoint(model).save(path)
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowModel> {
    flow_from_checkpoint(&Checkpoint::load(path)?)
}
