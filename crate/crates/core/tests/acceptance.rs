//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.
//!
//! Run with `cargo test -p tso-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tso_core::cost::{
    box_burst_count, calc_burst_count, calc_data_transfer, compute_alphas, tile_box, tile_mac_cycles, BurstMode,
    CostModel, TensorBox, TileKind,
};
use tso_core::ingest::{parse_model, validate_conv, ArchConfig, ConvLayer, ConvLayerSpec, ModelSpec};
use tso_core::report::{roofline_points, PlanFile};
use tso_core::search::{compare_strategies, plan_layer, tso, PlanMap, Restriction, SearchOptions};
use tso_core::sim::{simulate_schedule, TransferKind};
use tso_core::slicing::{
    gen_tile, get_filters, ifm_tile_dims, tle_slicing, ScheduleKind, TileConfig, TlePartitionKind, TleSlice,
};

const SUITE_SEED: u64 = 0x7e5_0001;
const SUITE_MODELS: usize = 20;

type Outcome = Result<String, String>;

fn layer(name: &str, n: u64, h: u64, l: u64, m: u64, k: u64, s: u64, p: u64) -> ConvLayer {
    validate_conv(ConvLayerSpec::derived(name, n, h, l, m, k, s, p, 2)).unwrap()
}

fn unbounded(n_tle: u64, n_tlt: u64) -> ArchConfig {
    let mut a = ArchConfig::nmp();
    a.n_tle = n_tle;
    a.n_tlt = n_tlt;
    a.mb0_bytes = u64::MAX / 4;
    a.mb1_bytes = u64::MAX / 4;
    a.mb2_bytes = u64::MAX / 4;
    a
}

fn tile_of(c: &ConvLayer, t_m: u64, t_n: u64, t_r: u64, t_c: u64) -> TileConfig {
    gen_tile(t_m, t_n, t_r, t_c, ScheduleKind::Os, c, &unbounded(1, 1)).unwrap()
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn map128() -> ConvLayer {
    layer("map128", 1, 128, 128, 1, 1, 1, 0)
}

/// (rows, elements per row, tile count, expected total bursts)
const MAP128_SLICINGS: [(u64, u64, u64, u64); 3] = [(128, 16, 8, 1024), (128, 32, 4, 512), (64, 64, 4, 256)];

fn criterion_1() -> Outcome {
    let map = map128();
    let arch = ArchConfig::nmp();
    let mut got = Vec::new();
    for (rows, cols, tiles, want) in MAP128_SLICINGS {
        let t = tile_of(&map, 1, 1, rows, cols);
        let per = calc_burst_count(TileKind::In, &t, &map, &arch, BurstMode::Aligned, [0; 3]);
        check(per * tiles == want, || format!("{rows}x{cols}: {} bursts, want {want}", per * tiles))?;
        // Same count from the replay over all tiles.
        let slice = tle_slicing(TlePartitionKind::Ofm, &map, 1).unwrap();
        let trace = simulate_schedule(ScheduleKind::Is, &map, &slice, &t, &unbounded(1, 1));
        check(trace.totals.loads_in == tiles && trace.totals.bursts_in == want, || {
            format!("{rows}x{cols}: replay {} loads {} bursts", trace.totals.loads_in, trace.totals.bursts_in)
        })?;
        got.push(want.to_string());
    }
    Ok(format!("bursts {}", got.join("/")))
}

fn criterion_2() -> Outcome {
    let arch = ArchConfig::nmp();
    let l5 = layer("conv5", 80, 73, 73, 192, 3, 1, 0);
    let wide = tile_of(&l5, 1, 14, 2, 71);
    let narrow = tile_of(&l5, 1, 16, 9, 18);
    check((wide.t_n, wide.t_h, wide.t_l) == (14, 4, 73), || format!("wide tile {wide:?}"))?;
    check((narrow.t_n, narrow.t_h, narrow.t_l) == (16, 11, 20), || format!("narrow tile {narrow:?}"))?;
    let a = calc_burst_count(TileKind::In, &wide, &l5, &arch, BurstMode::Aligned, [0; 3]);
    let b = calc_burst_count(TileKind::In, &narrow, &l5, &arch, BurstMode::Aligned, [0; 3]);
    check((a, b) == (70, 176), || format!("got {a} and {b}"))?;
    Ok(format!("14x4x73 -> {a}, 16x11x20 -> {b}"))
}

fn criterion_3() -> Outcome {
    let mut arch = ArchConfig::nmp();
    arch.n_tle = 1;
    arch.n_tlt = 1;
    let map = map128();
    let slice = tle_slicing(TlePartitionKind::Ofm, &map, 1).unwrap();
    let mut dram = Vec::new();
    for (rows, cols, _, _) in MAP128_SLICINGS {
        let t = gen_tile(1, 1, rows, cols, ScheduleKind::Is, &map, &arch).map_err(|f| f.to_string())?;
        let cost = tso_core::calc_time(&t, ScheduleKind::Is, &map, &slice, &arch, CostModel::Burst);
        dram.push(cost.t_dram_in);
    }
    check(dram[2] < dram[1] && dram[2] < dram[0], || format!("IN DRAM times {dram:?}"))?;

    // Plan-level preference for full rows.
    let plan = plan_layer(&map, &arch, CostModel::Burst, Restriction::none()).map_err(|e| e.to_string())?;
    let total = plan.cost.alphas.a_in * plan.cost.bursts_in;
    check(total == 256, || format!("128-wide map plan needs {total} IN bursts, full rows need 256"))?;
    let nmp = ArchConfig::nmp();
    let l5 = layer("conv5", 80, 73, 73, 192, 3, 1, 0);
    let p5 = plan_layer(&l5, &nmp, CostModel::Burst, Restriction::none()).map_err(|e| e.to_string())?;
    check(p5.tile.t_l == 73, || format!("conv5 burst plan t_l={}", p5.tile.t_l))?;
    let mut widths = Vec::new();
    for width in [20u64, 50, 73, 100, 147] {
        let m = layer("ragged", 1, 64, width, 1, 1, 1, 0);
        let p = plan_layer(&m, &arch, CostModel::Burst, Restriction::none()).map_err(|e| e.to_string())?;
        check(p.tile.t_l == width, || format!("{width}-wide map plan t_l={}", p.tile.t_l))?;
        widths.push(width.to_string());
    }
    Ok(format!(
        "IN DRAM {:.2}/{:.2}/{:.2} us; full-width plans on conv5 and {}-wide maps",
        dram[0] * 1e6,
        dram[1] * 1e6,
        dram[2] * 1e6,
        widths.join("/")
    ))
}

/// Simulator vs closed forms for one feasible tile. Returns the number of
/// events whose box is the cost model's representative tile.
fn oracle_case(
    q: ScheduleKind,
    conv: &ConvLayer,
    slice: &TleSlice,
    tile: &TileConfig,
    arch: &ArchConfig,
) -> Result<u64, String> {
    let trace = simulate_schedule(q, conv, slice, tile, arch);
    let alphas = compute_alphas(q, conv, slice, tile, arch.n_tle);
    let t = trace.totals;
    check((t.loads_in, t.loads_w, t.stores_out) == (alphas.a_in, alphas.a_w, alphas.a_out), || {
        format!(
            "{q} {:?} {:?} {:?}: replay {:?} vs closed form {:?}",
            conv.spec(),
            slice,
            tile,
            (t.loads_in, t.loads_w, t.stores_out),
            alphas
        )
    })?;
    let e = conv.elem_bytes;
    let b = arch.burst_bytes;
    let mut representative = 0;
    for ev in &trace.events {
        let (kind, dims) = match ev.kind {
            TransferKind::LoadIn => (TileKind::In, [conv.n, conv.h, conv.l]),
            TransferKind::LoadW => (TileKind::W, [conv.m, conv.n, conv.k * conv.k]),
            TransferKind::StoreOut => (TileKind::Out, [conv.m, conv.r, conv.c]),
        };
        let bx = TensorBox {
            dims,
            origin: ev.origin,
            extent: ev.extent,
        };
        let aware = box_burst_count(&bx, e, b, BurstMode::AddressAware);
        let aligned = box_burst_count(&bx, e, b, BurstMode::Aligned);
        check(aware == ev.bursts(b) && aligned == ev.aligned_bursts(b), || {
            format!("{q} {:?}: event {ev:?} counted {aware}/{aligned}", conv.spec())
        })?;
        if tile_box(kind, tile, conv, ev.origin) == bx {
            representative += 1;
            for mode in [BurstMode::Aligned, BurstMode::AddressAware] {
                let analytic = calc_burst_count(kind, tile, conv, arch, mode, ev.origin);
                let want = if mode == BurstMode::Aligned { ev.aligned_bursts(b) } else { ev.bursts(b) };
                check(analytic == want, || format!("{mode:?} {kind:?} at {:?}: {analytic} vs {want}", ev.origin))?;
            }
        }
    }
    Ok(representative)
}

fn criterion_4() -> Outcome {
    let mut cases = 0u64;
    let mut events_checked = 0u64;
    for n in 1..=4 {
        for m in 1..=4 {
            for h in 1..=8 {
                for l in 1..=8 {
                    for k in 1..=3u64 {
                        if k > h || k > l {
                            continue;
                        }
                        for s in 1..=2 {
                            let conv = layer("g", n, h, l, m, k, s, 0);
                            for n_tle in [1, 2, 4] {
                                for n_tlt in [1, 2] {
                                    let mut arch = ArchConfig::nmp();
                                    arch.n_tle = n_tle;
                                    arch.n_tlt = n_tlt;
                                    for p in TlePartitionKind::ALL {
                                        let Ok(slice) = tle_slicing(p, &conv, n_tle) else { continue };
                                        for q in ScheduleKind::ALL {
                                            for t_r in 1..=slice.tle_r {
                                                for t_c in 1..=conv.c {
                                                    for t_n in 1..=conv.n {
                                                        let Some(t_m) =
                                                            get_filters(q, slice.tle_w, n_tlt, t_n, &conv, &arch)
                                                        else {
                                                            continue;
                                                        };
                                                        let Ok(tile) = gen_tile(t_m, t_n, t_r, t_c, q, &conv, &arch)
                                                        else {
                                                            continue;
                                                        };
                                                        events_checked += oracle_case(q, &conv, &slice, &tile, &arch)?;
                                                        cases += 1;
                                                    }
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{cases} tiles replayed, {events_checked} representative tile transfers matched"))
}

fn random_model(rng: &mut ChaCha8Rng, index: usize) -> ModelSpec {
    let count = rng.gen_range(1..=4);
    let mut layers = Vec::new();
    for i in 0..count {
        let k = [1u64, 3, 5][rng.gen_range(0..3)];
        let hl = rng.gen_range(k.max(4)..=40);
        let s = rng.gen_range(1..=2);
        let p = if rng.gen_bool(0.5) { (k - 1) / 2 } else { 0 };
        let n = rng.gen_range(1..=48);
        let m = rng.gen_range(1..=96);
        let name = format!("m{index}_l{i}");
        layers.push(ConvLayerSpec::derived(&name, n, hl, hl, m, k, s, p, 2));
    }
    ModelSpec::new(format!("random{index}"), layers).unwrap()
}

fn random_suite() -> Vec<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    (0..SUITE_MODELS).map(|i| random_model(&mut rng, i)).collect()
}

fn criterion_5() -> Outcome {
    let arch = ArchConfig::nmp();
    let mut cells = 0;
    for model in random_suite() {
        let table = compare_strategies(&model, &arch, 1).map_err(|e| e.to_string())?;
        for row in &table.rows {
            let tso = row.cells[0].ok_or_else(|| format!("{}: no TSO plan", row.layer))?;
            for (strategy, cell) in table.strategies.iter().zip(&row.cells).skip(2) {
                if let Some(v) = cell {
                    check(tso <= *v, || format!("{}: tso {tso} > {} {v}", row.layer, strategy.column()))?;
                    cells += 1;
                }
            }
        }
    }
    Ok(format!("{cells} fixed-strategy layer plans, none cheaper than TSO"))
}

fn plan(model: &ModelSpec, arch: &ArchConfig, mode: CostModel, threads: usize) -> Result<PlanMap, String> {
    let opts = SearchOptions {
        model: mode,
        restrict: Restriction::none(),
        threads,
    };
    tso(model, arch, &opts).map_err(|e| e.to_string())
}

fn criterion_6() -> Outcome {
    let arch = ArchConfig::nmp();
    let mut layers = 0;
    let mut strict = 0;
    let mut best_gain: f64 = 0.0;
    for model in random_suite() {
        let b = plan(&model, &arch, CostModel::Burst, 1)?;
        let n = plan(&model, &arch, CostModel::NoBurst, 1)?;
        for ((conv, be), ne) in model.layers.iter().zip(&b.entries).zip(&n.entries) {
            let bc = be.recost(conv, &arch, CostModel::Burst).t_total;
            let nc = ne.recost(conv, &arch, CostModel::Burst).t_total;
            check(bc <= nc, || format!("{}: burst plan {bc} > noburst plan {nc}", conv.name))?;
            layers += 1;
            if bc < nc {
                strict += 1;
            }
            best_gain = best_gain.max(1.0 - bc / nc);
        }
    }
    Ok(format!(
        "{layers} layers, {strict} strictly better, best gain {:.1}%",
        best_gain * 100.0
    ))
}

fn criterion_7() -> Outcome {
    let arch = ArchConfig::nmp();
    let roof = arch.peak_macs_per_s(2);
    check(roof == 256e9, || format!("16-bit compute roof {roof}"))?;
    check(arch.peak_macs_per_s(1) == 512e9, || "8-bit compute roof".into())?;
    let mut points = 0;
    let mut models = random_suite();
    models.push(parse_model(include_str!("data/toy.json")).map_err(|e| e.to_string())?);
    for model in models {
        let p = plan(&model, &arch, CostModel::Burst, 1)?;
        for pt in roofline_points(&model, &arch, &p) {
            check(pt.compute_roof == arch.peak_macs_per_s(pt.elem_bytes), || format!("{}: roof", pt.layer))?;
            check(pt.under_roof(), || {
                format!("{}: {} MAC/s above attainable {}", pt.layer, pt.throughput, pt.attainable())
            })?;
            points += 1;
        }
    }
    Ok(format!("roof 256 GMAC/s, {points} points under the roofline"))
}

fn criterion_8() -> Outcome {
    let model = parse_model(include_str!("data/inception_v3.json")).map_err(|e| e.to_string())?;
    check(model.layers.len() == 94, || format!("{} layers", model.layers.len()))?;
    let arch = ArchConfig::nmp();
    let start = Instant::now();
    let serial = plan(&model, &arch, CostModel::Burst, 1)?;
    let serial_time = start.elapsed();
    let parallel = plan(&model, &arch, CostModel::Burst, 8)?;
    let a = PlanFile::new(&model, &arch, &serial).to_json();
    let b = PlanFile::new(&model, &arch, &parallel).to_json();
    check(a == b, || "plan files differ between 1 and 8 threads".into())?;
    check(serial_time < Duration::from_secs(600), || format!("serial search took {serial_time:?}"))?;
    Ok(format!(
        "94 layers, identical plans, serial search {:.1} s",
        serial_time.as_secs_f64()
    ))
}

fn criterion_9() -> Outcome {
    for t_r in 1..=64 {
        for t_c in 1..=64 {
            check(ifm_tile_dims(t_r, t_c, 1, 1) == (t_r, t_c), || format!("K=S=1 at {t_r}x{t_c}"))?;
        }
    }
    let arch = ArchConfig::nmp();
    let c = layer("mac", 1, 8, 10, 1, 3, 1, 0);
    let t = tile_of(&c, 1, 1, 4, 8);
    let cycles = tile_mac_cycles(&t, &c, &arch);
    check(cycles == 36, || format!("{cycles} cycles"))?;

    // One channel of a 4x73 16-bit window: a single 584-byte run in 5 bursts.
    let l5 = layer("conv5", 80, 73, 73, 192, 3, 1, 0);
    let run = tile_of(&l5, 1, 1, 2, 71);
    let ns = calc_data_transfer(TileKind::In, &run, &l5, &arch, CostModel::Burst) * 1e9;
    let by_hand = 5.0 * 14.0 + 584.0 / 17.0;
    check((ns - by_hand).abs() < 1e-9 && (ns * 10.0).round() == 1044.0, || format!("{ns} ns"))?;

    // Closed forms against hand-counted loop trips.
    let c = layer("a", 4, 32, 8, 8, 1, 1, 0);
    let slice = tle_slicing(TlePartitionKind::Ofm, &c, 4).unwrap();
    let t = tile_of(&c, 2, 2, 4, 8);
    let is = compute_alphas(ScheduleKind::Is, &c, &slice, &t, 4);
    // 4 TLEs x 2 row blocks x 1 col block x 2 channel blocks; 8x1 spatial stores.
    check((is.a_in, is.a_w, is.a_out) == (16, 16, 8), || format!("IS {is:?}"))?;
    let os = compute_alphas(ScheduleKind::Os, &c, &slice, &t, 4);
    // ... times 4 filter groups; stores also split into 4 filter groups.
    check((os.a_in, os.a_w, os.a_out) == (64, 64, 32), || format!("OS {os:?}"))?;
    let ws = compute_alphas(ScheduleKind::Ws, &c, &slice, &t, 4);
    // W loaded once per TLE and filter group.
    check((ws.a_in, ws.a_w, ws.a_out) == (64, 16, 32), || format!("WS {ws:?}"))?;
    Ok(format!("36 cycles, {ns:.2} ns, IS/OS/WS transfer counts"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("128x128 map burst counts", criterion_1, Duration::from_secs(1)),
        ("conv5 burst counts", criterion_2, Duration::from_secs(1)),
        ("128x128 map timing order and full-width preference", criterion_3, Duration::from_secs(60)),
        ("replay equivalence grid", criterion_4, Duration::from_secs(300)),
        ("dominance over fixed strategies", criterion_5, Duration::from_secs(60)),
        ("burst plan never worse than noburst plan", criterion_6, Duration::from_secs(60)),
        ("roofline", criterion_7, Duration::from_secs(10)),
        ("determinism across thread counts", criterion_8, Duration::from_secs(1200)),
        ("closed-form unit checks", criterion_9, Duration::from_secs(1)),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = match result {
            Ok(msg) if took > *budget => Err(format!("{msg}; took {took:?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(msg) => println!("PASS {id} {name}: {msg} ({:.2} s)", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {id} {name}: {msg} ({:.2} s)", took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
