//! Plan files, verification against the replay, and tabular reports.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{calc_time, compute_alphas, Alphas, CostModel};
use crate::ingest::{ArchConfig, ConvLayer, ModelSpec};
use crate::search::{ComparisonTable, PlanEntry, PlanMap};
use crate::sim::{simulate_totals, TraceTotals};
use crate::slicing::{gen_tile, get_filters, tle_slicing, ScheduleKind, TlePartitionKind};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("plan file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plan was made for arch {found}, not {expected}")]
    ArchMismatch { expected: String, found: String },
    #[error("plan is for model `{found}`, not `{expected}`")]
    ModelMismatch { expected: String, found: String },
    #[error("plan layers differ from model (missing: [{}], extra: [{}])", .missing.join(", "), .extra.join(", "))]
    LayerSet { missing: Vec<String>, extra: Vec<String> },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

const US: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFileEntry {
    pub layer: String,
    pub tle_partition: TlePartitionKind,
    pub schedule: ScheduleKind,
    pub t_m: u64,
    pub t_n: u64,
    pub t_r: u64,
    pub t_c: u64,
    pub t_h: u64,
    pub t_l: u64,
    pub alpha_in: u64,
    pub alpha_w: u64,
    pub alpha_out: u64,
    pub bursts_in: u64,
    pub bursts_w: u64,
    pub bursts_out: u64,
    pub t_mac_us: f64,
    pub t_dram_us: f64,
    pub t_sw_us: f64,
    pub t_total_us: f64,
}

impl From<&PlanEntry> for PlanFileEntry {
    fn from(e: &PlanEntry) -> Self {
        let c = &e.cost;
        PlanFileEntry {
            layer: e.layer.clone(),
            tle_partition: e.slice.kind,
            schedule: e.schedule,
            t_m: e.tile.t_m,
            t_n: e.tile.t_n,
            t_r: e.tile.t_r,
            t_c: e.tile.t_c,
            t_h: e.tile.t_h,
            t_l: e.tile.t_l,
            alpha_in: c.alphas.a_in,
            alpha_w: c.alphas.a_w,
            alpha_out: c.alphas.a_out,
            bursts_in: c.bursts_in,
            bursts_w: c.bursts_w,
            bursts_out: c.bursts_out,
            t_mac_us: c.t_mac * US,
            t_dram_us: c.t_dram * US,
            t_sw_us: c.t_sw * US,
            t_total_us: c.t_total * US,
        }
    }
}

impl PlanFileEntry {
    pub fn alphas(&self) -> Alphas {
        Alphas {
            a_in: self.alpha_in,
            a_w: self.alpha_w,
            a_out: self.alpha_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub model: String,
    pub arch_digest: String,
    pub entries: Vec<PlanFileEntry>,
}

impl PlanFile {
    pub fn new(model: &ModelSpec, arch: &ArchConfig, plan: &PlanMap) -> Self {
        PlanFile {
            model: model.name.clone(),
            arch_digest: arch.digest(),
            entries: plan.entries.iter().map(PlanFileEntry::from).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("plan serializes");
        text.push('\n');
        text
    }
}

pub fn parse_plan(text: &str) -> Result<PlanFile, ReportError> {
    Ok(serde_json::from_str(text)?)
}

/// Human-readable plan summary, one line per layer.
pub fn plan_table(plan: &PlanMap) -> String {
    let mut out = format!(
        "{:<24} {:<6} {:<4} {:>18} {:>14}\n",
        "layer", "tle", "tlt", "t_m,t_n,t_r,t_c", "t_total_us"
    );
    for e in &plan.entries {
        let t = &e.tile;
        out.push_str(&format!(
            "{:<24} {:<6} {:<4} {:>18} {:>14.3}\n",
            e.layer,
            e.slice.kind,
            e.schedule,
            format!("{},{},{},{}", t.t_m, t.t_n, t.t_r, t.t_c),
            e.cost.t_total * US
        ));
    }
    out.push_str(&format!("{:<24} {:>45.3}\n", "total", plan.total_time() * US));
    out
}

/// Replay check for one plan entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: String,
    pub file_alphas: Alphas,
    pub analytic: Option<Alphas>,
    pub simulated: Option<TraceTotals>,
    pub issues: Vec<String>,
}

impl LayerCheck {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }

    /// Address-aware minus aligned bursts over the replayed layer.
    pub fn burst_delta(&self) -> Option<i64> {
        self.simulated
            .map(|s| s.bursts() as i64 - s.aligned_bursts() as i64)
    }
}

fn check_layer(entry: &PlanFileEntry, conv: &ConvLayer, arch: &ArchConfig) -> LayerCheck {
    let mut check = LayerCheck {
        layer: entry.layer.clone(),
        file_alphas: entry.alphas(),
        analytic: None,
        simulated: None,
        issues: Vec::new(),
    };
    let slice = match tle_slicing(entry.tle_partition, conv, arch.n_tle) {
        Ok(slice) => slice,
        Err(err) => {
            check.issues.push(err.to_string());
            return check;
        }
    };
    let q = entry.schedule;
    let (t_m, t_n, t_r, t_c) = (entry.t_m, entry.t_n, entry.t_r, entry.t_c);
    if t_n == 0 || t_n > conv.n || t_r == 0 || t_r > slice.tle_r || t_c == 0 || t_c > conv.c {
        check.issues.push(format!("tile ({t_m},{t_n},{t_r},{t_c}) outside the layer"));
        return check;
    }
    let expected_m = get_filters(q, slice.tle_w, arch.n_tlt, t_n, conv, arch);
    if expected_m != Some(t_m) {
        check
            .issues
            .push(format!("t_m={t_m} but the filter rule gives {expected_m:?}"));
    }
    let tile = match gen_tile(t_m.max(1), t_n, t_r, t_c, q, conv, arch) {
        Ok(tile) => tile,
        Err(fail) => {
            check.issues.push(format!("tile does not fit: {fail}"));
            return check;
        }
    };
    if (tile.t_h, tile.t_l) != (entry.t_h, entry.t_l) {
        check.issues.push(format!(
            "t_h,t_l={},{} but tile gives {},{}",
            entry.t_h, entry.t_l, tile.t_h, tile.t_l
        ));
    }
    let analytic = compute_alphas(q, conv, &slice, &tile, arch.n_tle);
    let sim = simulate_totals(q, conv, &slice, &tile, arch);
    let simulated = Alphas {
        a_in: sim.loads_in,
        a_w: sim.loads_w,
        a_out: sim.stores_out,
    };
    if simulated != entry.alphas() {
        check.issues.push(format!(
            "plan alphas {:?} but replay counts {:?}",
            (entry.alpha_in, entry.alpha_w, entry.alpha_out),
            (simulated.a_in, simulated.a_w, simulated.a_out)
        ));
    }
    if simulated != analytic {
        check.issues.push(format!(
            "closed-form alphas {:?} but replay counts {:?}",
            (analytic.a_in, analytic.a_w, analytic.a_out),
            (simulated.a_in, simulated.a_w, simulated.a_out)
        ));
    }
    let cost = calc_time(&tile, q, conv, &slice, arch, CostModel::Burst);
    if (cost.bursts_in, cost.bursts_w, cost.bursts_out) != (entry.bursts_in, entry.bursts_w, entry.bursts_out) {
        check.issues.push(format!(
            "plan bursts {:?} but tile gives {:?}",
            (entry.bursts_in, entry.bursts_w, entry.bursts_out),
            (cost.bursts_in, cost.bursts_w, cost.bursts_out)
        ));
    }
    check.analytic = Some(analytic);
    check.simulated = Some(sim);
    check
}

/// Replays every entry of `plan`, which must match `model` and `arch`.
pub fn verify_plan(model: &ModelSpec, arch: &ArchConfig, plan: &PlanFile) -> Result<Vec<LayerCheck>, ReportError> {
    if plan.arch_digest != arch.digest() {
        return Err(ReportError::ArchMismatch {
            expected: arch.digest(),
            found: plan.arch_digest.clone(),
        });
    }
    if plan.model != model.name {
        return Err(ReportError::ModelMismatch {
            expected: model.name.clone(),
            found: plan.model.clone(),
        });
    }
    let want: BTreeSet<&str> = model.layers.iter().map(|l| l.name.as_str()).collect();
    let have: BTreeSet<&str> = plan.entries.iter().map(|e| e.layer.as_str()).collect();
    if want != have || plan.entries.len() != model.layers.len() {
        return Err(ReportError::LayerSet {
            missing: want.difference(&have).map(|s| s.to_string()).collect(),
            extra: have.difference(&want).map(|s| s.to_string()).collect(),
        });
    }
    Ok(plan
        .entries
        .iter()
        .map(|e| check_layer(e, model.layer(&e.layer).expect("layer set checked"), arch))
        .collect())
}

pub fn verification_table(checks: &[LayerCheck]) -> String {
    let mut out = format!(
        "{:<24} {:>22} {:>22} {:>10} {:>10} {:>7}  status\n",
        "layer", "alphas(in,w,out)", "replayed", "aligned", "aware", "delta"
    );
    for c in checks {
        let fmt_a = |a: Alphas| format!("{},{},{}", a.a_in, a.a_w, a.a_out);
        let replayed = c
            .simulated
            .map(|s| format!("{},{},{}", s.loads_in, s.loads_w, s.stores_out))
            .unwrap_or_else(|| "-".into());
        let (aligned, aware) = c
            .simulated
            .map(|s| (s.aligned_bursts().to_string(), s.bursts().to_string()))
            .unwrap_or_else(|| ("-".into(), "-".into()));
        let delta = c.burst_delta().map_or("-".into(), |d| d.to_string());
        let status = if c.ok() { "ok".to_string() } else { format!("MISMATCH: {}", c.issues.join("; ")) };
        out.push_str(&format!(
            "{:<24} {:>22} {:>22} {:>10} {:>10} {:>7}  {status}\n",
            c.layer,
            fmt_a(c.file_alphas),
            replayed,
            aligned,
            aware,
            delta
        ));
    }
    out
}

fn us(x: f64) -> String {
    format!("{:.3}", x * US)
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, ReportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Strategy comparison as CSV, in microseconds; infeasible cells are empty.
pub fn compare_csv(table: &ComparisonTable) -> Result<String, ReportError> {
    let cell = |v: Option<f64>| v.map(us).unwrap_or_default();
    let mut rows = vec![std::iter::once("layer".to_string())
        .chain(table.strategies.iter().map(|s| s.column()))
        .collect::<Vec<_>>()];
    for r in &table.rows {
        rows.push(std::iter::once(r.layer.clone()).chain(r.cells.iter().map(|&v| cell(v))).collect());
    }
    rows.push(std::iter::once("total".to_string()).chain(table.totals.iter().map(|&v| cell(v))).collect());
    rows.push(
        std::iter::once("speedup".to_string())
            .chain(table.speedups().iter().map(|v| v.map(|s| format!("{s:.3}")).unwrap_or_default()))
            .collect(),
    );
    csv_string(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub layer: String,
    pub elem_bytes: u64,
    pub total_macs: u64,
    pub transferred_bytes: u64,
    /// MACs per DRAM byte.
    pub operational_intensity: f64,
    /// MAC/s implied by the plan's `t_total`.
    pub throughput: f64,
    pub compute_roof: f64,
    pub bandwidth_roof: f64,
}

impl RooflinePoint {
    pub fn attainable(&self) -> f64 {
        self.compute_roof.min(self.operational_intensity * self.bandwidth_roof)
    }

    pub fn under_roof(&self) -> bool {
        self.throughput <= self.attainable()
    }
}

pub fn roofline_points(model: &ModelSpec, arch: &ArchConfig, plan: &PlanMap) -> Vec<RooflinePoint> {
    plan.entries
        .iter()
        .zip(&model.layers)
        .map(|(e, conv)| {
            let macs = conv.total_macs();
            let bytes = e.cost.transferred_bytes(&e.tile);
            RooflinePoint {
                layer: e.layer.clone(),
                elem_bytes: conv.elem_bytes,
                total_macs: macs,
                transferred_bytes: bytes,
                operational_intensity: macs as f64 / bytes as f64,
                throughput: macs as f64 / e.cost.t_total,
                compute_roof: arch.peak_macs_per_s(conv.elem_bytes),
                bandwidth_roof: arch.bw_bytes_per_s,
            }
        })
        .collect()
}

pub fn roofline_csv(points: &[RooflinePoint]) -> Result<String, ReportError> {
    let mut rows = vec![[
        "layer",
        "elem_bytes",
        "total_macs",
        "transferred_bytes",
        "operational_intensity",
        "throughput_mac_per_s",
        "compute_roof",
        "bandwidth_roof",
    ]
    .map(String::from)
    .to_vec()];
    for p in points {
        rows.push(vec![
            p.layer.clone(),
            p.elem_bytes.to_string(),
            p.total_macs.to_string(),
            p.transferred_bytes.to_string(),
            format!("{:.6}", p.operational_intensity),
            format!("{:.3}", p.throughput),
            format!("{:.3}", p.compute_roof),
            format!("{:.3}", p.bandwidth_roof),
        ]);
    }
    csv_string(rows)
}

/// Time split of one plan's layer, against a reference total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub layer: String,
    pub plan: String,
    pub load_us: f64,
    pub store_us: f64,
    pub mac_us: f64,
    pub sw_us: f64,
    pub total_us: f64,
    pub reference_us: f64,
    pub pct_load: f64,
    pub pct_store: f64,
    pub pct_mac: f64,
    pub pct_sw: f64,
}

impl BreakdownRow {
    fn new(layer: &str, plan: &str, cost: &crate::cost::CostBreakdown, reference: f64) -> Self {
        let pct = |x: f64| 100.0 * x / reference;
        BreakdownRow {
            layer: layer.to_string(),
            plan: plan.to_string(),
            load_us: cost.t_load() * US,
            store_us: cost.t_dram_out * US,
            mac_us: cost.t_mac * US,
            sw_us: cost.t_sw * US,
            total_us: cost.t_total * US,
            reference_us: reference * US,
            pct_load: pct(cost.t_load()),
            pct_store: pct(cost.t_dram_out),
            pct_mac: pct(cost.t_mac),
            pct_sw: pct(cost.t_sw),
        }
    }
}

/// Both plans re-costed under the burst model, as percentages of the
/// noburst plan's total so the two rows of a layer compare directly.
pub fn breakdown_rows(
    model: &ModelSpec,
    arch: &ArchConfig,
    burst: &PlanMap,
    noburst: &PlanMap,
) -> Vec<BreakdownRow> {
    let mut rows = Vec::new();
    for ((conv, b), n) in model.layers.iter().zip(&burst.entries).zip(&noburst.entries) {
        let nb = n.recost(conv, arch, CostModel::Burst);
        let bb = b.recost(conv, arch, CostModel::Burst);
        rows.push(BreakdownRow::new(&conv.name, "tso_noburst", &nb, nb.t_total));
        rows.push(BreakdownRow::new(&conv.name, "tso_burst", &bb, nb.t_total));
    }
    rows
}

pub fn breakdown_csv(rows: &[BreakdownRow]) -> Result<String, ReportError> {
    let mut out = vec![[
        "layer",
        "plan",
        "load_us",
        "store_us",
        "mac_us",
        "sw_us",
        "total_us",
        "reference_us",
        "pct_load",
        "pct_store",
        "pct_mac",
        "pct_sw",
    ]
    .map(String::from)
    .to_vec()];
    for r in rows {
        out.push(vec![
            r.layer.clone(),
            r.plan.clone(),
            format!("{:.3}", r.load_us),
            format!("{:.3}", r.store_us),
            format!("{:.3}", r.mac_us),
            format!("{:.3}", r.sw_us),
            format!("{:.3}", r.total_us),
            format!("{:.3}", r.reference_us),
            format!("{:.3}", r.pct_load),
            format!("{:.3}", r.pct_store),
            format!("{:.3}", r.pct_mac),
            format!("{:.3}", r.pct_sw),
        ]);
    }
    csv_string(out)
}
