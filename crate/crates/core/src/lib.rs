//! Tensor slicing, tiling and scheduling planner for multicore NPUs with a
//! burst-aware DRAM cost model.
//!
//! A layer is split across TLEs (engines) by output rows and/or filters,
//! then each TLE's share is tiled for its TLTs under an input-, output- or
//! weight-stationary schedule. [`search::tso`] tries every combination and
//! keeps the cheapest per layer; [`sim`] replays a chosen mapping transfer
//! by transfer to cross-check the closed forms.

pub mod cost;
pub mod ingest;
pub mod report;
pub mod search;
pub mod sim;
pub mod slicing;

pub use cost::{calc_time, Alphas, BurstMode, CostBreakdown, CostModel, TensorBox, TileKind};
pub use ingest::{
    parse_arch, parse_model, validate_conv, ArchConfig, ConvLayer, ConvLayerSpec, IngestError, MemoryBlob,
    ModelSpec,
};
pub use report::{PlanFile, ReportError};
pub use search::{
    compare_strategies, plan_layer, tso, ComparisonTable, PlanEntry, PlanMap, Restriction, SearchError,
    SearchOptions, SearchStats, Strategy,
};
pub use sim::{simulate_schedule, TransferTrace};
pub use slicing::{ScheduleKind, TileConfig, TlePartitionKind, TleSlice};
