//! Patch scoring.
//!
//! A [`Scorer`] maps a batch of RGB patches to per-pixel tumour probabilities
//! of the same spatial size. Three built-in scorers cover testing and demos
//! (`constant`, `oracle`, `blobby`); `external` talks to any model process
//! over the binary protocol in [`wire`].

mod builtin;
mod external;
pub mod wire;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use builtin::{BlobbyScorer, ConstantScorer, OracleScorer};
pub use external::ExternalScorer;

use crate::error::{Error, Result};
use crate::io::read_mask_png;
use crate::sampler::AugmentSpec;

/// Where a patch came from: level-0 top-left and the geometric transform
/// already applied to its pixels. Never sent over the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOrigin {
    pub x: i64,
    pub y: i64,
    pub transform: AugmentSpec,
}

impl PatchOrigin {
    pub fn new(x: i64, y: i64) -> Self {
        PatchOrigin {
            x,
            y,
            transform: AugmentSpec::identity(),
        }
    }
}

/// `n` square RGB patches, 8-bit, row-major, patch after patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub n: usize,
    pub patch_size: u32,
    pub pixels: Vec<u8>,
    /// One per patch, or empty when provenance is unknown.
    pub origins: Vec<PatchOrigin>,
}

impl PatchBatch {
    pub fn new(patch_size: u32, pixels: Vec<u8>, origins: Vec<PatchOrigin>) -> Result<Self> {
        let per = 3 * patch_size as usize * patch_size as usize;
        if patch_size == 0 || pixels.is_empty() || pixels.len() % per != 0 {
            return Err(Error::invalid(format!(
                "batch of {} bytes is not a whole number of {patch_size}x{patch_size} RGB patches",
                pixels.len()
            )));
        }
        let n = pixels.len() / per;
        if !origins.is_empty() && origins.len() != n {
            return Err(Error::invalid(format!("{} origins for {n} patches", origins.len())));
        }
        Ok(PatchBatch {
            n,
            patch_size,
            pixels,
            origins,
        })
    }

    pub fn from_patches(patches: &[RgbImage], origins: Vec<PatchOrigin>) -> Result<Self> {
        let Some(first) = patches.first() else {
            return Err(Error::Empty("batch needs at least one patch".into()));
        };
        let s = first.width();
        let mut pixels = Vec::with_capacity(patches.len() * (s * s * 3) as usize);
        for p in patches {
            if p.width() != s || p.height() != s {
                return Err(Error::invalid("patches in a batch must share one square size"));
            }
            pixels.extend_from_slice(p.as_raw());
        }
        PatchBatch::new(s, pixels, origins)
    }

    pub fn patch_bytes(&self, i: usize) -> &[u8] {
        let per = 3 * self.patch_size as usize * self.patch_size as usize;
        &self.pixels[i * per..(i + 1) * per]
    }

    pub fn patch(&self, i: usize) -> RgbImage {
        RgbImage::from_raw(self.patch_size, self.patch_size, self.patch_bytes(i).to_vec())
            .expect("patch length matches")
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> PatchBatch {
        let per = 3 * self.patch_size as usize * self.patch_size as usize;
        PatchBatch {
            n: range.len(),
            patch_size: self.patch_size,
            pixels: self.pixels[range.start * per..range.end * per].to_vec(),
            origins: if self.origins.is_empty() {
                Vec::new()
            } else {
                self.origins[range].to_vec()
            },
        }
    }
}

/// `n` probability planes mirroring a [`PatchBatch`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbPatchBatch {
    pub n: usize,
    pub patch_size: u32,
    pub probs: Vec<f32>,
}

impl ProbPatchBatch {
    pub fn new(n: usize, patch_size: u32, probs: Vec<f32>) -> Result<Self> {
        if probs.len() != n * patch_size as usize * patch_size as usize {
            return Err(Error::invalid(format!(
                "{} probabilities for {n} patches of {patch_size}x{patch_size}",
                probs.len()
            )));
        }
        Ok(ProbPatchBatch {
            n,
            patch_size,
            probs,
        })
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        let per = self.patch_size as usize * self.patch_size as usize;
        &self.probs[i * per..(i + 1) * per]
    }

    pub fn concat(parts: Vec<ProbPatchBatch>) -> Result<ProbPatchBatch> {
        let Some(first) = parts.first() else {
            return Err(Error::Empty("no parts to concatenate".into()));
        };
        let s = first.patch_size;
        let mut n = 0;
        let mut probs = Vec::new();
        for p in parts {
            if p.patch_size != s {
                return Err(Error::invalid("parts disagree on patch size"));
            }
            n += p.n;
            probs.extend(p.probs);
        }
        ProbPatchBatch::new(n, s, probs)
    }
}

pub trait Scorer: Send + Sync {
    fn score(&self, batch: &PatchBatch) -> Result<ProbPatchBatch>;

    fn describe(&self) -> String {
        "scorer".into()
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_cell() -> u32 {
    256
}

/// Scorer configuration as found in job configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Constant {
        value: f32,
    },
    Oracle {
        /// Level-0 annotation mask (1-bit or 8-bit PNG, non-zero = tumour).
        annotation: PathBuf,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Blobby {
        #[serde(default)]
        seed: u64,
        /// Lattice spacing of blob centres, level-0 pixels.
        #[serde(default = "default_cell")]
        cell: u32,
    },
    External {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        address: Option<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

impl ScorerSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            ScorerSpec::Constant { value } if !(0.0..=1.0).contains(value) => {
                Err(format!("constant value {value} outside [0, 1]"))
            }
            ScorerSpec::Oracle { sigma, .. } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                Err(format!("oracle sigma {sigma} must be finite and >= 0"))
            }
            ScorerSpec::Blobby { cell, .. } if *cell == 0 => Err("blobby cell must be > 0".into()),
            ScorerSpec::External {
                command, address, ..
            } => match (command, address) {
                (Some(c), None) if !c.is_empty() => Ok(()),
                (None, Some(_)) => Ok(()),
                _ => Err("external scorer needs exactly one of `command` or `address`".into()),
            },
            _ => Ok(()),
        }
    }
}

pub fn open_scorer(spec: &ScorerSpec) -> Result<Arc<dyn Scorer>> {
    spec.validate().map_err(Error::InvalidArgument)?;
    Ok(match spec {
        ScorerSpec::Constant { value } => Arc::new(ConstantScorer::new(*value)),
        ScorerSpec::Oracle {
            annotation,
            sigma,
            seed,
        } => {
            let mask = read_mask_png(annotation)?;
            Arc::new(OracleScorer::new(Arc::new(mask), *sigma, *seed))
        }
        ScorerSpec::Blobby { seed, cell } => Arc::new(BlobbyScorer::new(*seed, *cell)),
        ScorerSpec::External {
            command,
            address,
            timeout_ms,
        } => {
            let timeout = Duration::from_millis(*timeout_ms);
            match (command, address) {
                (Some(cmd), _) => Arc::new(ExternalScorer::spawn(cmd, timeout)?),
                (None, Some(addr)) => Arc::new(ExternalScorer::connect(addr, timeout)?),
                (None, None) => unreachable!("validated above"),
            }
        }
    })
}

/// Ordered set of scorers whose outputs are averaged downstream.
#[derive(Clone)]
pub struct EnsembleHandle {
    members: Vec<Arc<dyn Scorer>>,
}

impl std::fmt::Debug for EnsembleHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.members.iter().map(|m| m.describe()))
            .finish()
    }
}

impl EnsembleHandle {
    pub fn new(members: Vec<Arc<dyn Scorer>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("ensemble needs at least one member".into()));
        }
        Ok(EnsembleHandle { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Arc<dyn Scorer>] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Arc<dyn Scorer> {
        &self.members[i]
    }
}

/// Open every member in order; the first failure names its index.
pub fn ensemble_spec(specs: &[ScorerSpec]) -> Result<EnsembleHandle> {
    let members = specs
        .iter()
        .enumerate()
        .map(|(member, spec)| {
            open_scorer(spec).map_err(|e| Error::MemberOpen {
                member,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleHandle::new(members)
}
