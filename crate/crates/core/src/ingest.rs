//! Model and architecture descriptions.
//!
//! Both documents are JSON. Parsing is strict: unknown fields are rejected,
//! integer fields must be written as integers, and every layer is checked
//! against its own output geometry before it is accepted.

use std::collections::HashSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),
    #[error("invalid architecture field `{field}`: {reason}")]
    InvalidArch { field: &'static str, reason: String },
}

impl From<serde_json::Error> for IngestError {
    fn from(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Syntax | Category::Eof => IngestError::Syntax {
                line: err.line(),
                column: err.column(),
                message: err.to_string(),
            },
            Category::Data | Category::Io => IngestError::Schema(err.to_string()),
        }
    }
}

/// Shape of one convolution as written in a model document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub name: String,
    /// Input channels.
    pub n: u64,
    /// Input height.
    pub h: u64,
    /// Input width.
    pub l: u64,
    /// Filter count.
    pub m: u64,
    /// Square kernel size.
    pub k: u64,
    pub s: u64,
    /// Symmetric zero padding.
    pub p: u64,
    /// Output height.
    pub r: u64,
    /// Output width.
    pub c: u64,
    pub elem_bytes: u64,
}

impl ConvLayerSpec {
    /// Builds a spec with `r` and `c` derived from the other dimensions.
    #[allow(clippy::too_many_arguments)]
    pub fn derived(
        name: impl Into<String>,
        n: u64,
        h: u64,
        l: u64,
        m: u64,
        k: u64,
        s: u64,
        p: u64,
        elem_bytes: u64,
    ) -> Self {
        let out = |len: u64| (len + 2 * p).saturating_sub(k) / s.max(1) + 1;
        ConvLayerSpec {
            name: name.into(),
            n,
            h,
            l,
            m,
            k,
            s,
            p,
            r: out(h),
            c: out(l),
            elem_bytes,
        }
    }
}

/// A convolution that passed [`validate_conv`], with its tensor sizes cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    spec: ConvLayerSpec,
    ifm_bytes: u64,
    ks_bytes: u64,
    ofm_bytes: u64,
}

impl Deref for ConvLayer {
    type Target = ConvLayerSpec;

    fn deref(&self) -> &ConvLayerSpec {
        &self.spec
    }
}

impl ConvLayer {
    pub fn spec(&self) -> &ConvLayerSpec {
        &self.spec
    }

    pub fn ifm_bytes(&self) -> u64 {
        self.ifm_bytes
    }

    pub fn ks_bytes(&self) -> u64 {
        self.ks_bytes
    }

    pub fn ofm_bytes(&self) -> u64 {
        self.ofm_bytes
    }

    /// Multiply-accumulate operations of the whole layer.
    pub fn total_macs(&self) -> u64 {
        self.m * self.n * self.r * self.c * self.k * self.k
    }
}

fn is_identifier(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '_' | '-' | '.' | '/' | ':'))
}

pub fn validate_conv(spec: ConvLayerSpec) -> Result<ConvLayer, IngestError> {
    let fail = |reason: String| IngestError::InvalidLayer {
        layer: spec.name.clone(),
        reason,
    };
    if !is_identifier(&spec.name) {
        return Err(fail("name must be a non-empty identifier".into()));
    }
    for (field, value) in [
        ("n", spec.n),
        ("h", spec.h),
        ("l", spec.l),
        ("m", spec.m),
        ("k", spec.k),
        ("s", spec.s),
        ("r", spec.r),
        ("c", spec.c),
    ] {
        if value == 0 {
            return Err(fail(format!("`{field}` must be at least 1")));
        }
    }
    if !matches!(spec.elem_bytes, 1 | 2) {
        return Err(fail(format!(
            "`elem_bytes` must be 1 or 2, got {}",
            spec.elem_bytes
        )));
    }
    let padded_h = spec.h + 2 * spec.p;
    let padded_l = spec.l + 2 * spec.p;
    if spec.k > padded_h || spec.k > padded_l {
        return Err(fail(format!(
            "kernel {} exceeds padded input {}x{}",
            spec.k, padded_h, padded_l
        )));
    }
    let expect_r = (padded_h - spec.k) / spec.s + 1;
    let expect_c = (padded_l - spec.k) / spec.s + 1;
    if spec.r != expect_r {
        return Err(fail(format!(
            "r = {} inconsistent with h, k, s, p (expected {expect_r})",
            spec.r
        )));
    }
    if spec.c != expect_c {
        return Err(fail(format!(
            "c = {} inconsistent with l, k, s, p (expected {expect_c})",
            spec.c
        )));
    }
    let e = spec.elem_bytes;
    Ok(ConvLayer {
        ifm_bytes: spec.n * spec.h * spec.l * e,
        ks_bytes: spec.m * spec.n * spec.k * spec.k * e,
        ofm_bytes: spec.m * spec.r * spec.c * e,
        spec,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    pub layers: Vec<ConvLayerSpec>,
}

/// An ordered, non-empty list of uniquely named convolutions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub layers: Vec<ConvLayer>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, layers: Vec<ConvLayerSpec>) -> Result<Self, IngestError> {
        let name = name.into();
        if layers.is_empty() {
            return Err(IngestError::Schema(
                "`layers` must contain at least one layer".into(),
            ));
        }
        let mut seen = HashSet::new();
        let mut checked = Vec::with_capacity(layers.len());
        for spec in layers {
            if !seen.insert(spec.name.clone()) {
                return Err(IngestError::DuplicateLayer(spec.name));
            }
            checked.push(validate_conv(spec)?);
        }
        Ok(ModelSpec {
            name,
            layers: checked,
        })
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            name: self.name.clone(),
            layers: self.layers.iter().map(|l| l.spec().clone()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn layer(&self, name: &str) -> Option<&ConvLayer> {
        self.layers.iter().find(|l| l.name == name)
    }
}

pub fn parse_model(text: &str) -> Result<ModelSpec, IngestError> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    ModelSpec::new(doc.name, doc.layers)
}

/// NPU topology, scratchpad capacities and DRAM timing.
///
/// Times are kept in nanoseconds as written in the document so that the
/// canonical form round-trips exactly; use [`ArchConfig::cas_s`] and
/// [`ArchConfig::sw_overhead_s`] for arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub n_tle: u64,
    pub n_tlt: u64,
    pub mb0_bytes: u64,
    pub mb1_bytes: u64,
    pub mb2_bytes: u64,
    pub datapath_bits: u64,
    pub freq_hz: f64,
    pub cas_ns: f64,
    pub bw_bytes_per_s: f64,
    pub burst_bytes: u64,
    #[serde(default)]
    pub sw_overhead_ns: f64,
}

impl ArchConfig {
    /// 4 TLEs of 8 TLTs, 8 KiB scratchpads, 128-bit MAC datapath at 1 GHz,
    /// DDR3-2133 with 14 ns CAS and 128-byte bursts.
    pub fn nmp() -> Self {
        ArchConfig {
            n_tle: 4,
            n_tlt: 8,
            mb0_bytes: 8192,
            mb1_bytes: 8192,
            mb2_bytes: 8192,
            datapath_bits: 128,
            freq_hz: 1e9,
            cas_ns: 14.0,
            bw_bytes_per_s: 17e9,
            burst_bytes: 128,
            sw_overhead_ns: 0.0,
        }
    }

    pub fn validate(self) -> Result<Self, IngestError> {
        let bad = |field: &'static str, reason: &str| {
            Err(IngestError::InvalidArch {
                field,
                reason: reason.to_string(),
            })
        };
        for (field, value) in [
            ("n_tle", self.n_tle),
            ("n_tlt", self.n_tlt),
            ("mb0_bytes", self.mb0_bytes),
            ("mb1_bytes", self.mb1_bytes),
            ("mb2_bytes", self.mb2_bytes),
            ("datapath_bits", self.datapath_bits),
            ("burst_bytes", self.burst_bytes),
        ] {
            if value == 0 {
                return bad(field, "must be at least 1");
            }
        }
        if !self.burst_bytes.is_power_of_two() {
            return bad("burst_bytes", "must be a power of two");
        }
        if !self.datapath_bits.is_multiple_of(16) {
            return bad(
                "datapath_bits",
                "must be divisible by 8 and 16 (one or two byte elements)",
            );
        }
        if !(self.freq_hz.is_finite() && self.freq_hz > 0.0) {
            return bad("freq_hz", "must be a positive finite number");
        }
        if !(self.bw_bytes_per_s.is_finite() && self.bw_bytes_per_s > 0.0) {
            return bad("bw_bytes_per_s", "must be a positive finite number");
        }
        if !(self.cas_ns.is_finite() && self.cas_ns >= 0.0) {
            return bad("cas_ns", "must be a non-negative finite number");
        }
        if !(self.sw_overhead_ns.is_finite() && self.sw_overhead_ns >= 0.0) {
            return bad("sw_overhead_ns", "must be a non-negative finite number");
        }
        Ok(self)
    }

    pub fn cas_s(&self) -> f64 {
        self.cas_ns * 1e-9
    }

    pub fn sw_overhead_s(&self) -> f64 {
        self.sw_overhead_ns * 1e-9
    }

    /// MACs a TLT issues per cycle for the given element width.
    pub fn macs_per_cycle(&self, elem_bytes: u64) -> u64 {
        self.datapath_bits / (8 * elem_bytes)
    }

    /// Peak MAC/s of all cores together.
    pub fn peak_macs_per_s(&self, elem_bytes: u64) -> f64 {
        (self.n_tle * self.n_tlt * self.macs_per_cycle(elem_bytes)) as f64 * self.freq_hz
    }

    pub fn capacity(&self, blob: MemoryBlob) -> u64 {
        match blob {
            MemoryBlob::Mb0 => self.mb0_bytes,
            MemoryBlob::Mb1 => self.mb1_bytes,
            MemoryBlob::Mb2 => self.mb2_bytes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("architecture serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// The three per-TLT scratchpads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryBlob {
    /// IN tiles.
    Mb0,
    /// W tiles.
    Mb1,
    /// OUT tiles.
    Mb2,
}

pub fn parse_arch(text: &str) -> Result<ArchConfig, IngestError> {
    let arch: ArchConfig = serde_json::from_str(text)?;
    arch.validate()
}
