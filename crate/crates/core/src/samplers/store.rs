use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{read_nft, write_nft, write_nft_to, Tensor};

pub const DEFAULT_MEMORY_BUDGET: usize = 512 << 20;

static SPILL_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Retained chain samples. Samples stay in memory until the buffer exceeds
/// the memory budget, after which full buffers are written as NFT1 chunks
/// of shape `[n, ...sample_shape]`.
#[derive(Debug)]
pub struct SampleStore {
    shape: Vec<usize>,
    sample_len: usize,
    buffer: Vec<f64>,
    chunks: Vec<(PathBuf, usize)>,
    spill_dir: Option<PathBuf>,
    owns_dir: bool,
    budget_bytes: usize,
    total: usize,
}

impl SampleStore {
    pub fn new(shape: &[usize]) -> Self {
        Self::with_budget(shape, DEFAULT_MEMORY_BUDGET, None)
    }

    /// `spill_dir = None` spills into a fresh directory under the system
    /// temp dir, removed when the store is dropped.
    pub fn with_budget(shape: &[usize], budget_bytes: usize, spill_dir: Option<PathBuf>) -> Self {
        SampleStore {
            shape: shape.to_vec(),
            sample_len: shape.iter().product(),
            buffer: Vec::new(),
            chunks: Vec::new(),
            spill_dir,
            owns_dir: false,
            budget_bytes,
            total: 0,
        }
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn n_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunk_paths(&self) -> Vec<&Path> {
        self.chunks.iter().map(|(p, _)| p.as_path()).collect()
    }

    /// Reopens the `chunk_*.nft` files of a spill directory, in name order.
    /// The directory is not removed on drop.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("chunk_") && n.ends_with(".nft"))
            })
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Empty);
        }
        let mut store: Option<SampleStore> = None;
        for p in paths {
            let t = read_nft(&p)?;
            let (n, shape) = t.shape().split_first().ok_or(Error::Empty)?;
            if shape.is_empty() {
                return Err(Error::BadShape {
                    shape: t.shape().to_vec(),
                    reason: format!("chunk {} lacks a sample axis", p.display()),
                });
            }
            let s = store.get_or_insert_with(|| {
                let mut s = SampleStore::with_budget(shape, DEFAULT_MEMORY_BUDGET, Some(dir.to_path_buf()));
                s.owns_dir = false;
                s
            });
            if s.shape != shape {
                return Err(Error::ShapeMismatch {
                    expected: s.shape.clone(),
                    got: shape.to_vec(),
                });
            }
            s.total += n;
            s.chunks.push((p, *n));
        }
        Ok(store.expect("at least one chunk"))
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.sample_len {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: vec![x.len()],
            });
        }
        self.buffer.extend_from_slice(x);
        self.total += 1;
        if self.buffer.len() * 8 > self.budget_bytes {
            self.spill()?;
        }
        Ok(())
    }

    fn spill_dir(&mut self) -> Result<PathBuf> {
        if let Some(d) = &self.spill_dir {
            return Ok(d.clone());
        }
        let d = std::env::temp_dir().join(format!(
            "nfula-spill-{}-{}",
            std::process::id(),
            SPILL_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        self.owns_dir = true;
        self.spill_dir = Some(d.clone());
        Ok(d)
    }

    /// Writes the in-memory buffer as a chunk.
    pub fn spill(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let dir = self.spill_dir()?;
        fs::create_dir_all(&dir)?;
        let n = self.buffer.len() / self.sample_len;
        let path = dir.join(format!("chunk_{:05}.nft", self.chunks.len()));
        let mut shape = vec![n];
        shape.extend_from_slice(&self.shape);
        write_nft(&path, &Tensor::from_raw(shape, std::mem::take(&mut self.buffer))?)?;
        self.chunks.push((path, n));
        Ok(())
    }

    /// Visits every sample in insertion order.
    pub fn for_each(&self, mut f: impl FnMut(&[f64])) -> Result<()> {
        for (path, n) in &self.chunks {
            let t = read_nft(path)?;
            if t.len() != n * self.sample_len {
                return Err(Error::Format {
                    format: "NFT1",
                    offset: 0,
                    message: format!("chunk {} has unexpected size", path.display()),
                });
            }
            t.data().chunks_exact(self.sample_len).for_each(&mut f);
        }
        self.buffer.chunks_exact(self.sample_len).for_each(f);
        Ok(())
    }

    /// Values of coordinate `i` across all samples.
    pub fn marginal(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.sample_len {
            return Err(Error::invalid(format!("coordinate {i} out of range")));
        }
        let mut out = Vec::with_capacity(self.total);
        self.for_each(|s| out.push(s[i]))?;
        Ok(out)
    }

    /// All samples as one `[n, ...shape]` tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::Empty);
        }
        let mut data = Vec::with_capacity(self.total * self.sample_len);
        self.for_each(|s| data.extend_from_slice(s))?;
        let mut shape = vec![self.total];
        shape.extend_from_slice(&self.shape);
        Tensor::from_raw(shape, data)
    }

    /// NFT1 serialization of [`SampleStore::to_tensor`].
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_nft_to(&mut buf, &self.to_tensor()?)?;
        Ok(buf)
    }
}

impl Drop for SampleStore {
    fn drop(&mut self) {
        if self.owns_dir {
            if let Some(d) = &self.spill_dir {
                let _ = fs::remove_dir_all(d);
            }
        }
    }
}

/// Per-coordinate mean and sample standard deviation (`n - 1` denominator;
/// zero for a single sample).
pub fn posterior_summaries(store: &SampleStore) -> Result<(Tensor, Tensor)> {
    if store.is_empty() {
        return Err(Error::Empty);
    }
    let d = store.sample_len;
    let n = store.len() as f64;
    let mut mean = vec![0.0; d];
    store.for_each(|s| {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    })?;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut ss = vec![0.0; d];
    store.for_each(|s| {
        for ((a, v), m) in ss.iter_mut().zip(s).zip(&mean) {
            *a += (v - m) * (v - m);
        }
    })?;
    let std: Vec<f64> = if store.len() > 1 {
        ss.iter().map(|a| (a / (n - 1.0)).sqrt()).collect()
    } else {
        vec![0.0; d]
    };
    Ok((
        Tensor::from_raw(store.shape.clone(), mean)?,
        Tensor::from_raw(store.shape.clone(), std)?,
    ))
}
