//! Analytic execution-time model.
//!
//! A candidate's time is `t_mac + t_dram + t_sw`. DRAM time multiplies the
//! per-tile transfer time of each tile class by how often that class moves
//! (its alpha). Per-tile transfer time is either volume-only or, in burst
//! mode, also pays one CAS latency per DRAM burst the tile touches.
//!
//! Tensors are NCHW row-major: IFM is `N x H x L`, the weights are
//! `M x N x K*K`, the OFM is `M x R x C`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{ArchConfig, ConvLayer};
use crate::slicing::{ScheduleKind, TileConfig, TleSlice};

/// DRAM transfer model used to cost a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    Burst,
    #[serde(rename = "noburst")]
    NoBurst,
}

impl CostModel {
    pub fn as_str(self) -> &'static str {
        match self {
            CostModel::Burst => "burst",
            CostModel::NoBurst => "noburst",
        }
    }
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "burst" => Ok(CostModel::Burst),
            "noburst" => Ok(CostModel::NoBurst),
            other => Err(format!("unknown cost model `{other}`")),
        }
    }
}

/// How bursts per contiguous run are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstMode {
    /// `ceil(len / burst)` per run, as if every run started on a burst boundary.
    Aligned,
    /// Bursts actually overlapped given the run's byte address.
    AddressAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TileKind {
    In,
    W,
    Out,
}

/// Whole-layer, all-TLE transfer counts per tile class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alphas {
    pub a_in: u64,
    pub a_w: u64,
    pub a_out: u64,
}

impl Alphas {
    pub fn total(&self) -> u64 {
        self.a_in + self.a_w + self.a_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub t_mac: f64,
    /// Sum of the three per-class DRAM components below.
    pub t_dram: f64,
    pub t_dram_in: f64,
    pub t_dram_w: f64,
    pub t_dram_out: f64,
    pub t_sw: f64,
    pub t_total: f64,
    pub alphas: Alphas,
    pub bursts_in: u64,
    pub bursts_w: u64,
    pub bursts_out: u64,
    pub mode: CostModel,
}

impl CostBreakdown {
    /// Time spent loading IN and W tiles.
    pub fn t_load(&self) -> f64 {
        self.t_dram_in + self.t_dram_w
    }

    /// DRAM bytes moved over the whole layer.
    pub fn transferred_bytes(&self, tile: &TileConfig) -> u64 {
        self.alphas.a_in * tile.in_bytes
            + self.alphas.a_w * tile.w_bytes
            + self.alphas.a_out * tile.out_bytes
    }
}

pub fn compute_alphas(
    q: ScheduleKind,
    conv: &ConvLayer,
    slice: &TleSlice,
    tile: &TileConfig,
    n_tle: u64,
) -> Alphas {
    let row_tiles = slice.tle_r.div_ceil(tile.t_r);
    let col_tiles = conv.c.div_ceil(tile.t_c);
    let chan_tiles = conv.n.div_ceil(tile.t_n);
    let filter_groups = slice.tle_w.div_ceil(tile.t_m);
    let spatial_out = conv.r.div_ceil(tile.t_r) * col_tiles;
    let per_tle_in = row_tiles * col_tiles * chan_tiles;
    match q {
        ScheduleKind::Is => Alphas {
            a_in: n_tle * per_tle_in,
            a_w: n_tle * per_tle_in,
            a_out: spatial_out,
        },
        ScheduleKind::Os => Alphas {
            a_in: n_tle * per_tle_in * filter_groups,
            a_w: n_tle * per_tle_in * filter_groups,
            a_out: spatial_out * conv.m.div_ceil(tile.t_m),
        },
        ScheduleKind::Ws => Alphas {
            a_in: n_tle * per_tle_in * filter_groups,
            a_w: n_tle * filter_groups,
            a_out: spatial_out * conv.m.div_ceil(tile.t_m),
        },
    }
}

/// MAC-unit cycles for one tile: each (channel, filter) pair is rounded up
/// to whole cycles.
pub fn tile_mac_cycles(tile: &TileConfig, conv: &ConvLayer, arch: &ArchConfig) -> u64 {
    let per_channel = (tile.t_r * tile.t_c * conv.k * conv.k).div_ceil(arch.macs_per_cycle(conv.elem_bytes));
    tile.t_n * tile.t_m * per_channel
}

pub fn tile_mac_time(tile: &TileConfig, conv: &ConvLayer, arch: &ArchConfig) -> f64 {
    tile_mac_cycles(tile, conv, arch) as f64 / arch.freq_hz
}

/// Tiles needed to cover the layer, before division among TLTs.
pub fn layer_tile_count(tile: &TileConfig, conv: &ConvLayer) -> u64 {
    conv.m.div_ceil(tile.t_m)
        * conv.n.div_ceil(tile.t_n)
        * conv.r.div_ceil(tile.t_r)
        * conv.c.div_ceil(tile.t_c)
}

pub fn conv_mac_time(tile: &TileConfig, conv: &ConvLayer, arch: &ArchConfig) -> f64 {
    let cycles = layer_tile_count(tile, conv) * tile_mac_cycles(tile, conv, arch);
    cycles as f64 / (arch.n_tlt as f64 * arch.freq_hz)
}

/// An axis-aligned box inside a row-major 3-D tensor, in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorBox {
    pub dims: [u64; 3],
    pub origin: [u64; 3],
    pub extent: [u64; 3],
}

impl TensorBox {
    /// Box of nominal `extent` at `origin`, cut back to the tensor bounds.
    pub fn clipped(dims: [u64; 3], origin: [u64; 3], extent: [u64; 3]) -> Self {
        let mut cut = [0; 3];
        for axis in 0..3 {
            cut[axis] = extent[axis].min(dims[axis].saturating_sub(origin[axis]));
        }
        TensorBox {
            dims,
            origin,
            extent: cut,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.extent.contains(&0)
    }

    pub fn elements(&self) -> u64 {
        self.extent.iter().product()
    }

    /// Number of maximal contiguous runs and their common length in elements.
    pub fn run_shape(&self) -> (u64, u64) {
        let [d0, d1, d2] = self.dims;
        let [e0, e1, e2] = self.extent;
        let _ = d0;
        if self.is_empty() {
            (0, 0)
        } else if e2 == d2 && e1 == d1 {
            (1, e0 * d1 * d2)
        } else if e2 == d2 {
            (e0, e1 * d2)
        } else {
            (e0 * e1, e2)
        }
    }

    /// Element offset of every run start, in address order.
    fn run_starts(&self) -> impl Iterator<Item = u64> + '_ {
        let [_, d1, d2] = self.dims;
        let [o0, o1, o2] = self.origin;
        let [e0, e1, e2] = self.extent;
        let (outer, inner) = if self.is_empty() {
            (0, 0)
        } else if e2 == d2 && e1 == d1 {
            (1, 1)
        } else if e2 == d2 {
            (e0, 1)
        } else {
            (e0, e1)
        };
        (0..outer).flat_map(move |i| (0..inner).map(move |j| ((o0 + i) * d1 + o1 + j) * d2 + o2))
    }
}

/// Bursts needed to move `bx`; tensor bases are burst aligned.
pub fn box_burst_count(bx: &TensorBox, elem_bytes: u64, burst_bytes: u64, mode: BurstMode) -> u64 {
    let (runs, run_elems) = bx.run_shape();
    let len = run_elems * elem_bytes;
    match mode {
        BurstMode::Aligned => runs * len.div_ceil(burst_bytes),
        BurstMode::AddressAware => bx
            .run_starts()
            .map(|start| {
                let first = start * elem_bytes;
                (first + len - 1) / burst_bytes - first / burst_bytes + 1
            })
            .sum(),
    }
}

/// Dimensions of the tensor a tile class is cut from.
pub fn tensor_dims(kind: TileKind, conv: &ConvLayer) -> [u64; 3] {
    match kind {
        TileKind::In => [conv.n, conv.h, conv.l],
        TileKind::W => [conv.m, conv.n, conv.k * conv.k],
        TileKind::Out => [conv.m, conv.r, conv.c],
    }
}

/// Nominal tile extent in its tensor's coordinates.
pub fn tile_extent(kind: TileKind, tile: &TileConfig, conv: &ConvLayer) -> [u64; 3] {
    match kind {
        TileKind::In => [tile.t_n, tile.t_h, tile.t_l],
        TileKind::W => [tile.t_m, tile.w_depth, conv.k * conv.k],
        TileKind::Out => [tile.t_m, tile.t_r, tile.t_c],
    }
}

pub fn tile_box(kind: TileKind, tile: &TileConfig, conv: &ConvLayer, origin: [u64; 3]) -> TensorBox {
    TensorBox::clipped(tensor_dims(kind, conv), origin, tile_extent(kind, tile, conv))
}

/// Bursts for one tile of `kind` placed at `origin`, clipped to the tensor.
pub fn calc_burst_count(
    kind: TileKind,
    tile: &TileConfig,
    conv: &ConvLayer,
    arch: &ArchConfig,
    mode: BurstMode,
    origin: [u64; 3],
) -> u64 {
    box_burst_count(
        &tile_box(kind, tile, conv, origin),
        conv.elem_bytes,
        arch.burst_bytes,
        mode,
    )
}

fn tile_bytes(kind: TileKind, tile: &TileConfig) -> u64 {
    match kind {
        TileKind::In => tile.in_bytes,
        TileKind::W => tile.w_bytes,
        TileKind::Out => tile.out_bytes,
    }
}

fn transfer_time(bytes: u64, bursts: u64, arch: &ArchConfig, model: CostModel) -> f64 {
    let volume = bytes as f64 / arch.bw_bytes_per_s;
    match model {
        CostModel::Burst => bursts as f64 * arch.cas_s() + volume,
        CostModel::NoBurst => volume,
    }
}

/// Time to move one tile of `kind` between DRAM and its scratchpad.
pub fn calc_data_transfer(
    kind: TileKind,
    tile: &TileConfig,
    conv: &ConvLayer,
    arch: &ArchConfig,
    model: CostModel,
) -> f64 {
    let bursts = calc_burst_count(kind, tile, conv, arch, BurstMode::Aligned, [0; 3]);
    transfer_time(tile_bytes(kind, tile), bursts, arch, model)
}

pub fn calc_time(
    tile: &TileConfig,
    q: ScheduleKind,
    conv: &ConvLayer,
    slice: &TleSlice,
    arch: &ArchConfig,
    model: CostModel,
) -> CostBreakdown {
    let alphas = compute_alphas(q, conv, slice, tile, arch.n_tle);
    let bursts = |kind| calc_burst_count(kind, tile, conv, arch, BurstMode::Aligned, [0; 3]);
    let (bursts_in, bursts_w, bursts_out) = (bursts(TileKind::In), bursts(TileKind::W), bursts(TileKind::Out));
    let t_dram_in = alphas.a_in as f64 * transfer_time(tile.in_bytes, bursts_in, arch, model);
    let t_dram_w = alphas.a_w as f64 * transfer_time(tile.w_bytes, bursts_w, arch, model);
    let t_dram_out = alphas.a_out as f64 * transfer_time(tile.out_bytes, bursts_out, arch, model);
    let t_dram = t_dram_in + t_dram_w + t_dram_out;
    let t_mac = conv_mac_time(tile, conv, arch);
    let t_sw = arch.sw_overhead_s() * alphas.total() as f64;
    CostBreakdown {
        t_mac,
        t_dram,
        t_dram_in,
        t_dram_w,
        t_dram_out,
        t_sw,
        t_total: t_mac + t_dram + t_sw,
        alphas,
        bursts_in,
        bursts_w,
        bursts_out,
        mode: model,
    }
}
