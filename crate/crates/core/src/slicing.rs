//! TLE slicing and TLT tile generation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ArchConfig, ConvLayer, MemoryBlob};

/// How a layer's work is split across TLEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TlePartitionKind {
    /// Filters split across TLEs; every TLE computes all output rows.
    Ks,
    /// Filters and output rows both halved into groups.
    #[serde(rename = "ksofm")]
    KsOfm,
    /// Output rows split across TLEs; every TLE applies all filters.
    Ofm,
}

impl TlePartitionKind {
    pub const ALL: [TlePartitionKind; 3] = [Self::Ks, Self::KsOfm, Self::Ofm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ks => "ks",
            Self::KsOfm => "ksofm",
            Self::Ofm => "ofm",
        }
    }
}

/// Which tile class stays resident while the others stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Input stationary.
    Is,
    /// Output stationary.
    Os,
    /// Weight stationary.
    Ws,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [Self::Is, Self::Os, Self::Ws];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Is => "is",
            Self::Os => "os",
            Self::Ws => "ws",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {what} `{value}`")]
pub struct ParseKindError {
    what: &'static str,
    value: String,
}

impl FromStr for TlePartitionKind {
    type Err = ParseKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseKindError {
                what: "TLE partition",
                value: s.to_string(),
            })
    }
}

impl FromStr for ScheduleKind {
    type Err = ParseKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseKindError {
                what: "schedule",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for TlePartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SliceError {
    #[error("at least one TLE is required")]
    NoTles,
    #[error("KS&OFM partitioning needs 2 or 4 TLEs to cover the layer, got {0}")]
    UnsupportedPartition(u64),
}

/// Per-TLE workload: `tle_r` output rows and `tle_w` filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TleSlice {
    pub tle_r: u64,
    pub tle_w: u64,
    pub kind: TlePartitionKind,
}

impl TleSlice {
    /// First output row and first filter assigned to TLE `tle`.
    ///
    /// Slices are nominal: the last TLEs may start past the end of the
    /// layer when the division is uneven.
    pub fn tle_origin(&self, tle: u64, n_tle: u64) -> (u64, u64) {
        match self.kind {
            TlePartitionKind::Ks => (0, tle * self.tle_w),
            TlePartitionKind::Ofm => (tle * self.tle_r, 0),
            TlePartitionKind::KsOfm => {
                let groups = n_tle / 2;
                let cell = tle % (groups * groups);
                (
                    (cell / groups) * self.tle_r,
                    (cell % groups) * self.tle_w,
                )
            }
        }
    }
}

pub fn tle_slicing(
    kind: TlePartitionKind,
    conv: &ConvLayer,
    n_tle: u64,
) -> Result<TleSlice, SliceError> {
    if n_tle == 0 {
        return Err(SliceError::NoTles);
    }
    let (tle_r, tle_w) = match kind {
        TlePartitionKind::Ks => (conv.r, conv.m.div_ceil(n_tle)),
        TlePartitionKind::KsOfm => {
            // Halving only yields a (row group x filter group) grid that
            // covers the layer when groups^2 <= n_tle.
            if n_tle != 2 && n_tle != 4 {
                return Err(SliceError::UnsupportedPartition(n_tle));
            }
            let groups = n_tle / 2;
            (conv.r.div_ceil(groups), conv.m.div_ceil(groups))
        }
        TlePartitionKind::Ofm => (conv.r.div_ceil(n_tle), conv.m),
    };
    Ok(TleSlice { tle_r, tle_w, kind })
}

/// Input rows and columns needed for a `t_r` x `t_c` output tile.
pub fn ifm_tile_dims(t_r: u64, t_c: u64, k: u64, s: u64) -> (u64, u64) {
    ((t_r - 1) * s + k, (t_c - 1) * s + k)
}

/// Filters a W tile holds per TLT, or `None` when not even one fits MB1.
///
/// Every TLT is costed as if it carried the largest share,
/// `ceil(tle_w / n_tlt)`.
pub fn get_filters(
    q: ScheduleKind,
    tle_w: u64,
    n_tlt: u64,
    t_n: u64,
    conv: &ConvLayer,
    arch: &ArchConfig,
) -> Option<u64> {
    let per_tlt = tle_w.div_ceil(n_tlt);
    let kk = conv.k * conv.k * conv.elem_bytes;
    let t_m = match q {
        ScheduleKind::Is => {
            if per_tlt * t_n * kk <= arch.mb1_bytes {
                per_tlt
            } else {
                0
            }
        }
        ScheduleKind::Os => per_tlt.min(arch.mb1_bytes / (t_n * kk)),
        ScheduleKind::Ws => per_tlt.min(arch.mb1_bytes / (conv.n * kk)),
    };
    (t_m > 0).then_some(t_m)
}

/// A TLT tile together with its scratchpad footprints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub t_m: u64,
    pub t_n: u64,
    pub t_r: u64,
    pub t_c: u64,
    pub t_h: u64,
    pub t_l: u64,
    /// Channels per filter in the W tile: `t_n`, or `N` under WS.
    pub w_depth: u64,
    pub in_bytes: u64,
    pub w_bytes: u64,
    pub out_bytes: u64,
}

impl TileConfig {
    pub fn bytes(&self, blob: MemoryBlob) -> u64 {
        match blob {
            MemoryBlob::Mb0 => self.in_bytes,
            MemoryBlob::Mb1 => self.w_bytes,
            MemoryBlob::Mb2 => self.out_bytes,
        }
    }
}

/// Which scratchpad constraints a candidate tile violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitFailure {
    pub mb0: bool,
    pub mb1: bool,
    pub mb2: bool,
}

impl FitFailure {
    pub fn any(&self) -> bool {
        self.mb0 || self.mb1 || self.mb2
    }
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.mb0, "IN>MB0"), (self.mb1, "W>MB1"), (self.mb2, "OUT>MB2")]
            .into_iter()
            .filter_map(|(hit, name)| hit.then_some(name))
            .collect();
        write!(f, "{}", names.join(", "))
    }
}

/// Depth of the W tile: WS keeps whole filters resident.
pub fn weight_depth(q: ScheduleKind, t_n: u64, conv: &ConvLayer) -> u64 {
    match q {
        ScheduleKind::Is | ScheduleKind::Os => t_n,
        ScheduleKind::Ws => conv.n,
    }
}

/// Builds the tile for one candidate and checks it against MB0/MB1/MB2.
///
/// `t_h` and `t_l` are clamped to the padded input extent.
pub fn gen_tile(
    t_m: u64,
    t_n: u64,
    t_r: u64,
    t_c: u64,
    q: ScheduleKind,
    conv: &ConvLayer,
    arch: &ArchConfig,
) -> Result<TileConfig, FitFailure> {
    let (t_h, t_l) = ifm_tile_dims(t_r, t_c, conv.k, conv.s);
    let t_h = t_h.min(conv.h + 2 * conv.p);
    let t_l = t_l.min(conv.l + 2 * conv.p);
    let e = conv.elem_bytes;
    let w_depth = weight_depth(q, t_n, conv);
    let tile = TileConfig {
        t_m,
        t_n,
        t_r,
        t_c,
        t_h,
        t_l,
        w_depth,
        in_bytes: t_n * t_h * t_l * e,
        w_bytes: t_m * w_depth * conv.k * conv.k * e,
        out_bytes: t_m * t_r * t_c * e,
    };
    let failure = FitFailure {
        mb0: tile.in_bytes > arch.mb0_bytes,
        mb1: tile.w_bytes > arch.mb1_bytes,
        mb2: tile.out_bytes > arch.mb2_bytes,
    };
    if failure.any() {
        Err(failure)
    } else {
        Ok(tile)
    }
}
