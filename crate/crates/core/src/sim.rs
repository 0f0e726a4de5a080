//! Brute-force replay of a mapping's loop nest.
//!
//! Every tile transfer becomes an event with the exact DRAM byte ranges it
//! touches. Nothing here shares code with the analytic cost model, so the
//! two can check each other. No tensor data is stored.
//!
//! TLEs are replayed one after another (TLE-major). Slices are nominal:
//! blocks that fall past the end of the layer still produce (empty) events,
//! the same way the closed-form transfer counts include them.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::cost::TensorBox;
use crate::ingest::{ArchConfig, ConvLayer};
use crate::slicing::{ScheduleKind, TileConfig, TleSlice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    LoadIn,
    LoadW,
    StoreOut,
}

impl TransferKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransferKind::LoadIn => "load_in",
            TransferKind::LoadW => "load_w",
            TransferKind::StoreOut => "store_out",
        }
    }
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open DRAM byte range `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteRange {
    pub start: u64,
    pub len: u64,
}

impl ByteRange {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    /// Burst-aligned blocks this range overlaps.
    pub fn bursts(&self, burst_bytes: u64) -> u64 {
        if self.len == 0 {
            return 0;
        }
        (self.start / burst_bytes..=(self.end() - 1) / burst_bytes).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub kind: TransferKind,
    pub tle: u64,
    /// Element coordinates of the box corner in the source/destination tensor.
    pub origin: [u64; 3],
    /// Extent after clipping to the tensor; zero on some axis for empty events.
    pub extent: [u64; 3],
    /// Maximal contiguous runs, ascending.
    pub ranges: Vec<ByteRange>,
}

impl TransferEvent {
    pub fn bytes(&self) -> u64 {
        self.ranges.iter().map(|r| r.len).sum()
    }

    pub fn bursts(&self, burst_bytes: u64) -> u64 {
        self.ranges.iter().map(|r| r.bursts(burst_bytes)).sum()
    }

    /// Bursts if every run were burst aligned.
    pub fn aligned_bursts(&self, burst_bytes: u64) -> u64 {
        self.ranges.iter().map(|r| r.len.div_ceil(burst_bytes)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceTotals {
    pub loads_in: u64,
    pub loads_w: u64,
    pub stores_out: u64,
    pub bursts_in: u64,
    pub bursts_w: u64,
    pub bursts_out: u64,
    pub bytes_in: u64,
    pub bytes_w: u64,
    pub bytes_out: u64,
    /// Bursts counted as if each run started on a burst boundary.
    pub aligned_in: u64,
    pub aligned_w: u64,
    pub aligned_out: u64,
}

impl TraceTotals {
    pub fn bursts(&self) -> u64 {
        self.bursts_in + self.bursts_w + self.bursts_out
    }

    pub fn aligned_bursts(&self) -> u64 {
        self.aligned_in + self.aligned_w + self.aligned_out
    }

    fn add(&mut self, kind: TransferKind, ranges: &[ByteRange], burst_bytes: u64) {
        let bursts: u64 = ranges.iter().map(|r| r.bursts(burst_bytes)).sum();
        let bytes: u64 = ranges.iter().map(|r| r.len).sum();
        let aligned: u64 = ranges.iter().map(|r| r.len.div_ceil(burst_bytes)).sum();
        let (count, b, v, a) = match kind {
            TransferKind::LoadIn => (&mut self.loads_in, &mut self.bursts_in, &mut self.bytes_in, &mut self.aligned_in),
            TransferKind::LoadW => (&mut self.loads_w, &mut self.bursts_w, &mut self.bytes_w, &mut self.aligned_w),
            TransferKind::StoreOut => (
                &mut self.stores_out,
                &mut self.bursts_out,
                &mut self.bytes_out,
                &mut self.aligned_out,
            ),
        };
        *count += 1;
        *b += bursts;
        *v += bytes;
        *a += aligned;
    }
}

/// Receives events in replay order.
pub trait TraceSink {
    fn record(&mut self, kind: TransferKind, tle: u64, bx: &TensorBox, ranges: Vec<ByteRange>);
}

/// Keeps every event.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransferTrace {
    pub burst_bytes: u64,
    pub events: Vec<TransferEvent>,
    pub totals: TraceTotals,
}

impl TraceSink for TransferTrace {
    fn record(&mut self, kind: TransferKind, tle: u64, bx: &TensorBox, ranges: Vec<ByteRange>) {
        self.totals.add(kind, &ranges, self.burst_bytes);
        self.events.push(TransferEvent {
            kind,
            tle,
            origin: bx.origin,
            extent: bx.extent,
            ranges,
        });
    }
}

impl TransferTrace {
    /// One line per contiguous run: `seq kind tle o0,o1,o2 start len`.
    /// Empty events print `-` for the start and 0 for the length.
    pub fn write_text(&self, mut out: impl Write) -> io::Result<()> {
        for (seq, ev) in self.events.iter().enumerate() {
            let [a, b, c] = ev.origin;
            if ev.ranges.is_empty() {
                writeln!(out, "{seq} {} {} {a},{b},{c} - 0", ev.kind, ev.tle)?;
            }
            for r in &ev.ranges {
                writeln!(out, "{seq} {} {} {a},{b},{c} {} {}", ev.kind, ev.tle, r.start, r.len)?;
            }
        }
        Ok(())
    }
}

/// Tallies only; for layers too large to keep every event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountingSink {
    pub burst_bytes: u64,
    pub totals: TraceTotals,
}

impl TraceSink for CountingSink {
    fn record(&mut self, kind: TransferKind, _tle: u64, _bx: &TensorBox, ranges: Vec<ByteRange>) {
        self.totals.add(kind, &ranges, self.burst_bytes);
    }
}

/// Byte ranges of a row-major box, built one innermost row at a time and
/// merged where rows abut.
pub fn box_ranges(bx: &TensorBox, elem_bytes: u64) -> Vec<ByteRange> {
    let mut ranges: Vec<ByteRange> = Vec::new();
    if bx.is_empty() {
        return ranges;
    }
    let [_, d1, d2] = bx.dims;
    let row_len = bx.extent[2] * elem_bytes;
    for i in 0..bx.extent[0] {
        for j in 0..bx.extent[1] {
            let start = (((bx.origin[0] + i) * d1 + bx.origin[1] + j) * d2 + bx.origin[2]) * elem_bytes;
            match ranges.last_mut() {
                Some(last) if last.end() == start => last.len += row_len,
                _ => ranges.push(ByteRange { start, len: row_len }),
            }
        }
    }
    ranges
}

/// `[lo, hi)` intersected with `[0, bound)`, as (start, len).
fn clip(lo: u64, hi: u64, bound: u64) -> (u64, u64) {
    let hi = hi.min(bound);
    if lo >= hi {
        (lo.min(bound), 0)
    } else {
        (lo, hi - lo)
    }
}

/// Input span feeding output positions `[start, start + len)` along one axis.
fn input_span(start: u64, len: u64, conv: &ConvLayer, bound: u64) -> (u64, u64) {
    if len == 0 {
        return (0, 0);
    }
    let lo = (start * conv.s).saturating_sub(conv.p);
    let hi = ((start + len - 1) * conv.s + conv.k).saturating_sub(conv.p);
    clip(lo, hi, bound)
}

struct Replay<'a, S: TraceSink> {
    conv: &'a ConvLayer,
    tile: &'a TileConfig,
    sink: &'a mut S,
    /// Filters per store tile: all of them under IS, `t_m` otherwise.
    store_m: u64,
    done: Vec<bool>,
    remaining: Vec<u64>,
    grid: [u64; 3],
}

impl<'a, S: TraceSink> Replay<'a, S> {
    fn new(conv: &'a ConvLayer, tile: &'a TileConfig, q: ScheduleKind, sink: &'a mut S) -> Self {
        let store_m = match q {
            ScheduleKind::Is => conv.m,
            ScheduleKind::Os | ScheduleKind::Ws => tile.t_m,
        };
        let grid = [
            conv.m.div_ceil(store_m),
            conv.r.div_ceil(tile.t_r),
            conv.c.div_ceil(tile.t_c),
        ];
        let mut remaining = Vec::with_capacity((grid[0] * grid[1] * grid[2]) as usize);
        for gm in 0..grid[0] {
            for gr in 0..grid[1] {
                for gc in 0..grid[2] {
                    let bx = Self::store_box(conv, tile, store_m, [gm, gr, gc]);
                    remaining.push(bx.elements());
                }
            }
        }
        Replay {
            conv,
            tile,
            sink,
            store_m,
            done: vec![false; (conv.m * conv.r * conv.c) as usize],
            remaining,
            grid,
        }
    }

    fn store_box(conv: &ConvLayer, tile: &TileConfig, store_m: u64, g: [u64; 3]) -> TensorBox {
        TensorBox::clipped(
            [conv.m, conv.r, conv.c],
            [g[0] * store_m, g[1] * tile.t_r, g[2] * tile.t_c],
            [store_m, tile.t_r, tile.t_c],
        )
    }

    fn emit(&mut self, kind: TransferKind, tle: u64, bx: TensorBox) {
        let ranges = box_ranges(&bx, self.conv.elem_bytes);
        self.sink.record(kind, tle, &bx, ranges);
    }

    /// IN tile for output rows/cols and a channel block.
    fn load_in(&mut self, tle: u64, rows: (u64, u64), cols: (u64, u64), chan0: u64) {
        let c = self.conv;
        let (h0, hn) = input_span(rows.0, rows.1, c, c.h);
        let (l0, ln) = input_span(cols.0, cols.1, c, c.l);
        let (n0, nn) = clip(chan0, chan0 + self.tile.t_n, c.n);
        let bx = TensorBox {
            dims: [c.n, c.h, c.l],
            origin: [n0, h0, l0],
            extent: [nn, hn, ln],
        };
        self.emit(TransferKind::LoadIn, tle, bx);
    }

    fn load_w(&mut self, tle: u64, filter0: u64, filter_end: u64, chan0: u64, depth: u64) {
        let c = self.conv;
        let (m0, mn) = clip(filter0, (filter0 + self.tile.t_m).min(filter_end), c.m);
        let (n0, nn) = clip(chan0, chan0 + depth, c.n);
        let kk = c.k * c.k;
        let bx = TensorBox {
            dims: [c.m, c.n, kk],
            origin: [m0, n0, 0],
            extent: [mn, nn, kk],
        };
        self.emit(TransferKind::LoadW, tle, bx);
    }

    /// Marks an output block final and stores every store tile it completes.
    fn complete(&mut self, tle: u64, filters: (u64, u64), rows: (u64, u64), cols: (u64, u64)) {
        let c = self.conv;
        let mut ready = Vec::new();
        for m in filters.0..filters.0 + filters.1 {
            for r in rows.0..rows.0 + rows.1 {
                for x in cols.0..cols.0 + cols.1 {
                    let at = ((m * c.r + r) * c.c + x) as usize;
                    if self.done[at] {
                        continue;
                    }
                    self.done[at] = true;
                    let g = [m / self.store_m, r / self.tile.t_r, x / self.tile.t_c];
                    let gi = ((g[0] * self.grid[1] + g[1]) * self.grid[2] + g[2]) as usize;
                    self.remaining[gi] -= 1;
                    if self.remaining[gi] == 0 {
                        ready.push(g);
                    }
                }
            }
        }
        ready.sort_unstable();
        for g in ready {
            let bx = Self::store_box(c, self.tile, self.store_m, g);
            self.emit(TransferKind::StoreOut, tle, bx);
        }
    }
}

/// Replays `q` over every TLE of `slice` into `sink`.
pub fn simulate_into<S: TraceSink>(
    q: ScheduleKind,
    conv: &ConvLayer,
    slice: &TleSlice,
    tile: &TileConfig,
    arch: &ArchConfig,
    sink: &mut S,
) {
    let mut replay = Replay::new(conv, tile, q, sink);
    let t = *tile;
    let row_blocks = slice.tle_r.div_ceil(t.t_r);
    let col_blocks = conv.c.div_ceil(t.t_c);
    let chan_blocks = conv.n.div_ceil(t.t_n);
    let groups = slice.tle_w.div_ceil(t.t_m);
    for tle in 0..arch.n_tle {
        let (row0, filter0) = slice.tle_origin(tle, arch.n_tle);
        let row_end = (row0 + slice.tle_r).min(conv.r);
        let filter_end = filter0 + slice.tle_w;
        let out_rows = |rb: u64| {
            let lo = row0 + rb * t.t_r;
            clip(lo, (lo + t.t_r).min(row_end), conv.r)
        };
        let out_cols = |cb: u64| clip(cb * t.t_c, (cb + 1) * t.t_c, conv.c);
        let filters = |lo: u64, hi: u64| clip(lo, hi.min(filter_end), conv.m);
        match q {
            ScheduleKind::Is => {
                for rb in 0..row_blocks {
                    for cb in 0..col_blocks {
                        let (rows, cols) = (out_rows(rb), out_cols(cb));
                        for nb in 0..chan_blocks {
                            replay.load_in(tle, rows, cols, nb * t.t_n);
                            replay.load_w(tle, filter0, filter_end, nb * t.t_n, t.t_n);
                        }
                        replay.complete(tle, filters(filter0, filter_end), rows, cols);
                    }
                }
            }
            ScheduleKind::Os => {
                for rb in 0..row_blocks {
                    for cb in 0..col_blocks {
                        let (rows, cols) = (out_rows(rb), out_cols(cb));
                        for g in 0..groups {
                            let m0 = filter0 + g * t.t_m;
                            for nb in 0..chan_blocks {
                                replay.load_in(tle, rows, cols, nb * t.t_n);
                                replay.load_w(tle, m0, filter_end, nb * t.t_n, t.t_n);
                            }
                            replay.complete(tle, filters(m0, m0 + t.t_m), rows, cols);
                        }
                    }
                }
            }
            ScheduleKind::Ws => {
                for g in 0..groups {
                    let m0 = filter0 + g * t.t_m;
                    replay.load_w(tle, m0, filter_end, 0, conv.n);
                    for rb in 0..row_blocks {
                        for cb in 0..col_blocks {
                            let (rows, cols) = (out_rows(rb), out_cols(cb));
                            for nb in 0..chan_blocks {
                                replay.load_in(tle, rows, cols, nb * t.t_n);
                            }
                            replay.complete(tle, filters(m0, m0 + t.t_m), rows, cols);
                        }
                    }
                }
            }
        }
    }
}

pub fn simulate_schedule(
    q: ScheduleKind,
    conv: &ConvLayer,
    slice: &TleSlice,
    tile: &TileConfig,
    arch: &ArchConfig,
) -> TransferTrace {
    let mut trace = TransferTrace {
        burst_bytes: arch.burst_bytes,
        ..Default::default()
    };
    simulate_into(q, conv, slice, tile, arch, &mut trace);
    trace
}

/// Totals only, without keeping events.
pub fn simulate_totals(
    q: ScheduleKind,
    conv: &ConvLayer,
    slice: &TleSlice,
    tile: &TileConfig,
    arch: &ArchConfig,
) -> TraceTotals {
    let mut sink = CountingSink {
        burst_bytes: arch.burst_bytes,
        ..Default::default()
    };
    simulate_into(q, conv, slice, tile, arch, &mut sink);
    sink.totals
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BurstTotals {
    pub bursts_in: u64,
    pub bursts_w: u64,
    pub bursts_out: u64,
}

/// Re-derives per-kind bursts from a trace's byte ranges.
pub fn count_bursts_exact(trace: &TransferTrace, arch: &ArchConfig) -> BurstTotals {
    let mut out = BurstTotals::default();
    for ev in &trace.events {
        let n = ev.bursts(arch.burst_bytes);
        match ev.kind {
            TransferKind::LoadIn => out.bursts_in += n,
            TransferKind::LoadW => out.bursts_w += n,
            TransferKind::StoreOut => out.bursts_out += n,
        }
    }
    out
}
