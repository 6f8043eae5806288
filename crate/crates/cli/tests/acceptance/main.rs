//! Acceptance gate. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails. Tolerances and limits are the constants
//! below.

mod oracles;
mod support;

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, ensure, Result};
use crowdlens_core::analytics::{sum_series, timeline_hues};
use crowdlens_core::expr::{evaluate, parse_expression};
use crowdlens_core::geo::{ring_contains, LonLat};
use crowdlens_core::{Catalog, Geometry, MetricDef, Place, Region, Sample, Series, Store, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use oracles::Pt;
use support::{cli_json, gen_scenario, serve_dir, LogBuffer, SseReader};

const HUE_SERIES: usize = 1000;
const HUE_INTERIOR_TOL: f64 = 1e-9;
const HUE_RUNTIME_LIMIT: Duration = Duration::from_secs(1);

const AFFINE_CASES: usize = 100;
const AFFINE_TOL: f64 = 1e-9;

const AGG_STORES: usize = 10;
const AGG_MIN_SAMPLES: usize = 10_000;
const AGG_MIN_PLACES: usize = 50;
const AGG_TOL: f64 = 1e-9;
const AGG_RUNTIME_LIMIT: Duration = Duration::from_secs(10);

const EXPR_CASES: usize = 100;
const EXPR_MAX_DEPTH: u32 = 6;

const PIP_POINTS: usize = 1000;

const NYE_PLACES: usize = 93;
const NYE_CADENCE_SECS: i64 = 600;
const NYE_PEAK_VALUE: f64 = 75_000.0;
const NYE_NEXT_DAY_LIMIT: f64 = 30_000.0;

const REPLAY_FRAMES: usize = 12;
const REPLAY_SPEED: f64 = 60.0;
const REPLAY_CADENCE_SECS: i64 = 60;
/// Allowed deviation of a frame's arrival from its paced due time.
const REPLAY_PACING_TOL: Duration = Duration::from_millis(750);

const IDEMPOTENT_BATCH: usize = 10_000;

const SCALE_SAMPLES: usize = 1_000_000;
const SCALE_TIMES: usize = 1_000;
const SCALE_LIMIT: Duration = Duration::from_secs(5);
const SCALE_DOUBLING_RATIO: f64 = 2.5;
const SCALE_REPEATS: usize = 7;

fn main() {
    let logs = support::capture_logs();
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    type Check<'a> = Box<dyn Fn() -> Result<String> + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("hue-anchors", Box::new(hue_anchors)),
        ("hue-affine-invariance", Box::new(hue_affine_invariance)),
        ("aggregation-oracle", Box::new(aggregation_oracle)),
        ("expression-oracle", Box::new(expression_oracle)),
        ("point-in-polygon-oracle", Box::new(point_in_polygon_oracle)),
        ("scenario-melbourne-nye", Box::new(|| rt.block_on(scenario_melbourne()))),
        ("scenario-rir-weekend", Box::new(scenario_rir)),
        ("replay-stream-fidelity", Box::new(|| rt.block_on(replay_stream()))),
        ("idempotent-ingest", Box::new(idempotent_ingest)),
        ("auth", Box::new(|| rt.block_on(auth(&logs)))),
        ("scalability", Box::new(scalability)),
    ];
    let mut failed = 0;
    println!("acceptance: {} criteria", criteria.len());
    for (name, check) in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(anyhow!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2} s): {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2} s): {e:#}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

fn hue_anchors() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0102);
    let mut series_list = Vec::with_capacity(HUE_SERIES);
    for i in 0..HUE_SERIES {
        let n = rng.random_range(1..120);
        let constant = (i % 20 == 0).then(|| rng.random_range(-100.0..100.0));
        let mut pairs: Vec<(i64, Option<f64>)> = (0..n)
            .map(|k| {
                let v = constant.unwrap_or_else(|| rng.random_range(-1e4..1e4));
                (k as i64 * 300, rng.random_bool(0.9).then_some(v))
            })
            .collect();
        pairs[0].1.get_or_insert(constant.unwrap_or(1.0));
        series_list.push(Series::from_pairs("m", &pairs));
    }

    let started = Instant::now();
    let hues: Vec<_> = series_list.iter().map(timeline_hues).collect::<Result<_, _>>()?;
    let elapsed = started.elapsed();

    let (mut constants, mut worst) = (0, 0.0_f64);
    for (series, stops) in series_list.iter().zip(&hues) {
        let present: Vec<(Timestamp, f64)> = series.present().collect();
        ensure!(stops.len() == present.len(), "one stop per present value");
        let min = present.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max = present.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            constants += 1;
        }
        for (stop, &(t, v)) in stops.iter().zip(&present) {
            ensure!(stop.t == t && stop.sum == v, "stop mismatch at {t}");
            ensure!((0.0..=120.0).contains(&stop.hue), "hue {} out of range", stop.hue);
            if min == max || v == min {
                ensure!(stop.hue == 120.0, "hue at minimum is {}, not exactly 120", stop.hue);
            } else if v == max {
                ensure!(stop.hue == 0.0, "hue at maximum is {}, not exactly 0", stop.hue);
            } else {
                let err = (stop.hue - oracles::reference_hue(v, min, max)).abs();
                worst = worst.max(err);
                ensure!(err <= HUE_INTERIOR_TOL, "interior hue off by {err}");
            }
        }
    }
    ensure!(elapsed < HUE_RUNTIME_LIMIT, "took {elapsed:?}, limit {HUE_RUNTIME_LIMIT:?}");
    Ok(format!(
        "{HUE_SERIES} series ({constants} constant): anchors exact, worst interior error {worst:.1e} (tol {HUE_INTERIOR_TOL:e}), {:.1} ms (limit {HUE_RUNTIME_LIMIT:?})",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn hue_affine_invariance() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAFF1);
    let mut worst = 0.0_f64;
    for _ in 0..AFFINE_CASES {
        let n = rng.random_range(2..100);
        let (a, b) = (rng.random_range(0.1..10.0), rng.random_range(-1e3..1e3));
        let pairs: Vec<(i64, Option<f64>)> = (0..n).map(|k| (k * 60, Some(rng.random_range(0.0..1e3)))).collect();
        let moved: Vec<(i64, Option<f64>)> = pairs.iter().map(|&(t, v)| (t, v.map(|v| a * v + b))).collect();
        let h1 = timeline_hues(&Series::from_pairs("m", &pairs))?;
        let h2 = timeline_hues(&Series::from_pairs("m", &moved))?;
        ensure!(h1.len() == h2.len());
        for (x, y) in h1.iter().zip(&h2) {
            worst = worst.max((x.hue - y.hue).abs());
        }
    }
    ensure!(worst <= AFFINE_TOL, "worst difference {worst:e} exceeds {AFFINE_TOL:e}");
    Ok(format!("{AFFINE_CASES} cases, worst difference {worst:.1e} (tol {AFFINE_TOL:e})"))
}

// ---------------------------------------------------------------------------

struct RandomStore {
    store: Store,
    points: Vec<Pt>,
    samples: Vec<(i64, usize, f64)>,
}

fn random_store(rng: &mut ChaCha8Rng) -> Result<RandomStore> {
    let n_places = rng.random_range(60..80);
    let n_times = rng.random_range(220..260);
    let mut places = Vec::new();
    let mut points = Vec::new();
    for i in 0..n_places {
        let (x, y) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let geometry = if i % 3 == 0 {
            let r = rng.random_range(0.05..0.3);
            let ring = oracles::convex_polygon(rng, x, y, r);
            points.push(oracles::vertex_mean(&ring));
            Geometry::Polygon(ring.iter().map(|&(a, b)| LonLat::new(a, b)).collect())
        } else {
            points.push((x, y));
            Geometry::Point(LonLat::new(x, y))
        };
        places.push(Place { id: format!("p{i:03}"), name: format!("P{i}"), geometry, capacity: None });
    }
    let t0 = Timestamp::ymd_hms(2022, 6, 1, 0, 0, 0).unix();
    let mut samples = Vec::new();
    for k in 0..n_times {
        for p in 0..n_places {
            if rng.random_bool(0.85) {
                samples.push((t0 + 300 * k as i64, p, rng.random_range(0.0..1000.0)));
            }
        }
    }
    let cat = Catalog::new(places, vec![MetricDef::base("total", "Total", "devices", 1000.0)])?;
    let store = Store::new(Arc::new(cat));
    let batch: Vec<Sample> = samples
        .iter()
        .map(|&(t, p, v)| Sample::new(format!("p{p:03}"), Timestamp::from_unix(t), "total", v))
        .collect();
    store.upsert(&batch)?;
    Ok(RandomStore { store, points, samples })
}

fn compare_series(got: &Series, want: &[(i64, Option<f64>)]) -> Result<f64> {
    ensure!(got.points.len() == want.len(), "{} points, oracle has {}", got.points.len(), want.len());
    let mut worst = 0.0_f64;
    for (g, &(t, w)) in got.points.iter().zip(want) {
        ensure!(g.t.unix() == t, "timestamp {} vs {t}", g.t);
        match (g.value, w) {
            (Some(a), Some(b)) => {
                worst = worst.max((a - b).abs());
                ensure!((a - b).abs() <= AGG_TOL, "{a} vs {b} at {}", g.t);
            }
            (a, b) => ensure!(a.is_none() && b.is_none(), "{a:?} vs {b:?} at {}", g.t),
        }
    }
    Ok(worst)
}

fn aggregation_oracle() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA66);
    let started = Instant::now();
    let (mut queries, mut worst, mut min_samples, mut min_places) = (0, 0.0_f64, usize::MAX, usize::MAX);
    for _ in 0..AGG_STORES {
        let w = random_store(&mut rng)?;
        min_samples = min_samples.min(w.samples.len());
        min_places = min_places.min(w.points.len());
        ensure!(w.samples.len() >= AGG_MIN_SAMPLES && w.points.len() >= AGG_MIN_PLACES, "store too small");
        let (t_lo, t_hi) = (w.samples[0].0, w.samples[w.samples.len() - 1].0);
        for q in 0..6 {
            let (from, to) = if q == 0 {
                (t_lo, t_hi)
            } else {
                let a = rng.random_range(t_lo - 600..t_hi + 600);
                let b = rng.random_range(t_lo - 600..t_hi + 600);
                (a.min(b), a.max(b))
            };
            let (f, t) = (Timestamp::from_unix(from), Timestamp::from_unix(to));
            let whole = sum_series(&w.store, "total", f, t, None)?;
            worst = worst.max(compare_series(&whole, &oracles::brute_force_sums(&w.samples, from, to, |_| true))?);

            let (x0, y0) = (rng.random_range(0.0..7.0), rng.random_range(0.0..7.0));
            let rect = (x0, y0, x0 + rng.random_range(1.0..5.0), y0 + rng.random_range(1.0..5.0));
            let region = Region::from_ring(vec![
                LonLat::new(rect.0, rect.1),
                LonLat::new(rect.2, rect.1),
                LonLat::new(rect.2, rect.3),
                LonLat::new(rect.0, rect.3),
            ])?;
            let got = sum_series(&w.store, "total", f, t, Some(&region))?;
            worst = worst.max(compare_series(&got, &oracles::brute_force_sums(&w.samples, from, to, |p| oracles::rect_contains(rect, w.points[p])))?);

            let (cx, cy, r) = (rng.random_range(3.0..7.0), rng.random_range(3.0..7.0), rng.random_range(1.0..4.0));
            let ring = oracles::convex_polygon(&mut rng, cx, cy, r);
            let region = Region::from_ring(ring.iter().map(|&(a, b)| LonLat::new(a, b)).collect())?;
            let got = sum_series(&w.store, "total", f, t, Some(&region))?;
            worst = worst.max(compare_series(&got, &oracles::brute_force_sums(&w.samples, from, to, |p| oracles::half_plane_contains(&ring, w.points[p])))?);
            queries += 3;
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < AGG_RUNTIME_LIMIT, "took {elapsed:?}, limit {AGG_RUNTIME_LIMIT:?}");
    Ok(format!(
        "{AGG_STORES} stores (>= {min_samples} samples, >= {min_places} places), {queries} queries incl. region filters, worst error {worst:.1e} (tol {AGG_TOL:e}), limit {AGG_RUNTIME_LIMIT:?}"
    ))
}

fn expression_oracle() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE4);
    let mut stats = oracles::ExprStats::default();
    let (mut missing, mut present) = (0, 0);
    for _ in 0..EXPR_CASES {
        let env = oracles::random_env(&mut rng);
        let (text, expected) = oracles::gen_expr(&mut rng, EXPR_MAX_DEPTH, &env, &mut stats);
        let got = evaluate(&parse_expression(&text).map_err(|e| anyhow!("{text}: {e}"))?, &env)?;
        ensure!(got.map(f64::to_bits) == expected.map(f64::to_bits), "{text}: got {got:?}, oracle {expected:?}");
        if expected.is_some() {
            present += 1;
        } else {
            missing += 1;
        }
    }
    ensure!(stats.missing_operand > 0 && stats.division_by_zero > 0, "missing and division-by-zero paths not both exercised");
    Ok(format!(
        "{EXPR_CASES} expressions (depth <= {EXPR_MAX_DEPTH}) identical to oracle: {present} values, {missing} missing; {} missing operands, {} divisions by zero",
        stats.missing_operand, stats.division_by_zero
    ))
}

fn point_in_polygon_oracle() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x919);
    let (mut inside, mut outside, mut boundary) = (0, 0, 0);
    let mut checked = 0;
    while checked < PIP_POINTS {
        let r = rng.random_range(0.5..3.0);
        let (cx, cy) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let ring = oracles::convex_polygon(&mut rng, cx, cy, r);
        let lon_lat: Vec<LonLat> = ring.iter().map(|&(a, b)| LonLat::new(a, b)).collect();
        let c = oracles::vertex_mean(&ring);
        for _ in 0..20 {
            let p = (c.0 + rng.random_range(-1.3 * r..1.3 * r), c.1 + rng.random_range(-1.3 * r..1.3 * r));
            let expected = oracles::half_plane_contains(&ring, p);
            ensure!(ring_contains(&lon_lat, LonLat::new(p.0, p.1)) == expected, "{p:?} in {ring:?}: oracle says {expected}");
            if expected {
                inside += 1;
            } else {
                outside += 1;
            }
            checked += 1;
        }
        for e in ring.windows(2) {
            let s = rng.random_range(0.0..1.0);
            let on_edge = (e[0].0 + s * (e[1].0 - e[0].0), e[0].1 + s * (e[1].1 - e[0].1));
            for p in [e[0], on_edge] {
                ensure!(ring_contains(&lon_lat, LonLat::new(p.0, p.1)), "boundary point {p:?} not inside");
                boundary += 1;
            }
        }
    }
    Ok(format!("{checked} random points match half-plane containment ({inside} in, {outside} out); {boundary} boundary points inside"))
}

// ---------------------------------------------------------------------------

async fn scenario_melbourne() -> Result<String> {
    let dir = tempfile::tempdir()?;
    gen_scenario("melbourne-nye", 2022, dir.path())?;
    let cfg = dir.path().join("crowdlens.toml");
    let cfg = cfg.to_str().unwrap();

    let peak = cli_json(&["--config", cfg, "query", "peak", "--metric", "pedestrians"])?;
    let spike = Timestamp::ymd_hms(2022, 12, 31, 22, 0, 0);
    ensure!(peak["t"] == json!(spike.to_iso()), "query peak at {}, expected {spike}", peak["t"]);
    ensure!(peak["value"] == json!(NYE_PEAK_VALUE), "query peak value {}, expected {NYE_PEAK_VALUE}", peak["value"]);
    let next_day = cli_json(&["--config", cfg, "query", "peak", "--metric", "pedestrians", "--from", "2023-01-01T00:00:00Z"])?;
    let next_day_value = next_day["value"].as_f64().unwrap_or(f64::NAN);
    ensure!(next_day_value < NYE_NEXT_DAY_LIMIT, "next-day peak {next_day_value} not below {NYE_NEXT_DAY_LIMIT}");

    let served = serve_dir(dir.path()).await?;
    let key = served.issue_key("acceptance")?;
    let places = served.get_json("/api/places", &key).await?;
    let n_places = places["features"].as_array().map_or(0, Vec::len);
    ensure!(n_places == NYE_PLACES, "{n_places} places, expected {NYE_PLACES}");
    let timeline = served.get_json("/api/timeline?metric=pedestrians", &key).await?;
    let hues = timeline["hues"].as_array().ok_or_else(|| anyhow!("no hues"))?;
    let times: Vec<i64> = hues.iter().map(|h| h["t"].as_str().unwrap().parse::<Timestamp>().unwrap().unix()).collect();
    ensure!(times.windows(2).all(|w| w[1] - w[0] == NYE_CADENCE_SECS), "timeline cadence is not {NYE_CADENCE_SECS} s");
    let zeros: Vec<&Value> = hues.iter().filter(|h| h["hue"] == json!(0.0)).collect();
    ensure!(zeros.len() == 1 && zeros[0]["t"] == json!(spike.to_iso()), "hue 0 at {zeros:?}, expected only {spike}");
    served.server.shutdown().await?;
    Ok(format!(
        "query peak = {spike} / {NYE_PEAK_VALUE}; next-day peak {next_day_value} < {NYE_NEXT_DAY_LIMIT}; {n_places} places, {NYE_CADENCE_SECS} s cadence; /api/timeline hue 0 only at the spike"
    ))
}

fn scenario_rir() -> Result<String> {
    let dir = tempfile::tempdir()?;
    gen_scenario("rir-weekend", 2022, dir.path())?;
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json"))?)?;
    let region_file = dir.path().join("park.geojson");
    std::fs::write(&region_file, json!({"type": "Polygon", "coordinates": truth["region_rings"]}).to_string())?;
    let cfg = dir.path().join("crowdlens.toml");
    let (cfg, region) = (cfg.to_str().unwrap(), region_file.to_str().unwrap());
    let metric = truth["metric_id"].as_str().ok_or_else(|| anyhow!("truth has no metric"))?;

    let peak = cli_json(&["--config", cfg, "query", "peak", "--metric", metric, "--region-file", region])?;
    ensure!(peak["t"] == truth["peak_t"], "region peak at {}, generator maximum at {}", peak["t"], truth["peak_t"]);
    let (got, want) = (peak["value"].as_f64().unwrap_or(f64::NAN), truth["peak_value"].as_f64().unwrap_or(f64::NAN));
    ensure!((got - want).abs() <= 1e-9, "region peak value {got}, generator {want}");

    // Weekends: 18-19 and 25-26 June 2022, each peak landing before 01:00 the following day.
    let first = cli_json(&["--config", cfg, "query", "peak", "--metric", metric, "--region-file", region, "--to", "2022-06-21T00:00:00Z"])?;
    let second = cli_json(&["--config", cfg, "query", "peak", "--metric", metric, "--region-file", region, "--from", "2022-06-24T00:00:00Z"])?;
    let (v1, v2) = (first["value"].as_f64().unwrap_or(f64::NAN), second["value"].as_f64().unwrap_or(f64::NAN));
    ensure!(second["t"] == peak["t"], "overall peak is not in the second weekend");
    ensure!(v2 > v1, "second weekend peak {v2} not above first {v1}");
    Ok(format!("region peak {} = {got} matches generator maximum; second weekend {v2} > first {v1}", peak["t"].as_str().unwrap_or("?")))
}

// ---------------------------------------------------------------------------

fn write_replay_fixture(dir: &std::path::Path) -> Result<Vec<(Timestamp, BTreeMap<String, f64>)>> {
    let ids = ["north", "south", "east", "west"];
    let features: Vec<Value> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| json!({"type": "Feature", "geometry": {"type": "Point", "coordinates": [144.96 + 0.01 * i as f64, -37.81]}, "properties": {"id": id, "name": id}}))
        .collect();
    std::fs::write(dir.join("places.geojson"), json!({"type": "FeatureCollection", "features": features}).to_string())?;
    let t0 = Timestamp::ymd_hms(2022, 12, 31, 21, 0, 0);
    let mut csv = String::from("place_id,timestamp,metric_id,value\n");
    let mut frames = Vec::new();
    for k in 0..REPLAY_FRAMES as i64 {
        let t = t0.plus_secs(REPLAY_CADENCE_SECS * k);
        let mut values = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            let v = (100 * (k + 1) + i as i64) as f64;
            csv.push_str(&format!("{id},{t},pedestrians,{v}\n"));
            values.insert(id.to_string(), v);
        }
        frames.push((t, values));
    }
    std::fs::write(dir.join("fixture.csv"), csv)?;
    std::fs::write(
        dir.join("crowdlens.toml"),
        format!(
            r#"[service]
bind = "127.0.0.1:8080"
heartbeat_secs = 1

[[metrics]]
id = "pedestrians"
cap = 1000

[[sources]]
name = "sensors"
kind = "places"
driver = "geojson-file"
params = {{ path = "places.geojson" }}

[[sources]]
name = "replay"
kind = "realtime"
driver = "replay"
metrics = ["pedestrians"]
params = {{ path = "fixture.csv", speed = {REPLAY_SPEED}, cadence_secs = {REPLAY_CADENCE_SECS} }}
"#
        ),
    )?;
    Ok(frames)
}

/// A frame's timestamp, values and arrival time since ingest started.
type Arrival = (Timestamp, BTreeMap<String, f64>, Duration);

async fn replay_stream() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let fixture = write_replay_fixture(dir.path())?;
    let mut served = serve_dir(dir.path()).await?;
    let key = served.issue_key("stream")?;
    let mut subscribers = [SseReader::open(&served.base, "pedestrians", &key).await?, SseReader::open(&served.base, "pedestrians", &key).await?];
    let started = Instant::now();
    served.server.start_ingest(&served.registry)?;

    let wait = Duration::from_secs(5);
    let mut received: [Vec<Arrival>; 2] = [Vec::new(), Vec::new()];
    for (sub, out) in subscribers.iter_mut().zip(received.iter_mut()) {
        while out.len() < REPLAY_FRAMES {
            let (name, data) = sub.next(wait).await?.ok_or_else(|| anyhow!("stream ended after {} frames", out.len()))?;
            if name != "frame" {
                continue;
            }
            let t: Timestamp = data["t"].as_str().unwrap_or_default().parse()?;
            let values: BTreeMap<String, f64> = serde_json::from_value(data["values"].clone())?;
            out.push((t, values, started.elapsed()));
        }
    }
    served.server.shutdown().await?;

    let expected: Vec<(Timestamp, BTreeMap<String, f64>)> = fixture;
    for (i, got) in received.iter().enumerate() {
        let seq: Vec<(Timestamp, BTreeMap<String, f64>)> = got.iter().map(|(t, v, _)| (*t, v.clone())).collect();
        ensure!(seq == expected, "subscriber {i} sequence differs from the fixture");
    }
    // Arrival pacing, measured on the first subscriber (read first, so not delayed by the other).
    let t0 = expected[0].0.unix();
    let first_arrival = received[0][0].2;
    let mut worst = Duration::ZERO;
    for (t, _, at) in &received[0] {
        let due = first_arrival + Duration::from_secs_f64((t.unix() - t0) as f64 / REPLAY_SPEED);
        worst = worst.max(at.abs_diff(due));
    }
    ensure!(worst <= REPLAY_PACING_TOL, "frame arrival deviates {worst:?} from pacing (tol {REPLAY_PACING_TOL:?})");
    let span = received[0][REPLAY_FRAMES - 1].2 - first_arrival;
    Ok(format!(
        "2 subscribers x {REPLAY_FRAMES} frames in timestamp order, identical to the fixture; delivered over {:.2} s at {REPLAY_SPEED}x, worst pacing deviation {:.0} ms",
        span.as_secs_f64(),
        worst.as_secs_f64() * 1e3
    ))
}

fn idempotent_ingest() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D3);
    let places: Vec<Place> = (0..100)
        .map(|i| Place { id: format!("s{i:02}"), name: format!("S{i}"), geometry: Geometry::Point(LonLat::new(i as f64, 0.0)), capacity: None })
        .collect();
    let cat = Arc::new(Catalog::new(places, vec![MetricDef::base("pedestrians", "Pedestrians", "people", 1500.0)])?);
    let t0 = Timestamp::ymd_hms(2022, 12, 31, 0, 0, 0);
    let mut batch: Vec<Sample> = (0..IDEMPOTENT_BATCH)
        .map(|k| Sample::new(format!("s{:02}", k % 100), t0.plus_secs(600 * (k / 100) as i64), "pedestrians", rng.random_range(0..3000) as f64 + 0.25))
        .collect();
    // Arrival order should not matter either.
    for i in (1..batch.len()).rev() {
        batch.swap(i, rng.random_range(0..=i));
    }
    let dir = tempfile::tempdir()?;
    let store = Store::new(cat);
    store.upsert(&batch)?;
    store.snapshot_save(&dir.path().join("once.csv"))?;
    store.upsert(&batch)?;
    let stats = store.snapshot_save(&dir.path().join("twice.csv"))?;
    let once = std::fs::read(dir.path().join("once.csv"))?;
    let twice = std::fs::read(dir.path().join("twice.csv"))?;
    ensure!(stats.sample_count == IDEMPOTENT_BATCH, "{} samples after double upsert", stats.sample_count);
    ensure!(once == twice, "snapshots differ");
    Ok(format!("{IDEMPOTENT_BATCH}-sample batch upserted twice: {} samples, snapshots byte-identical ({} bytes)", stats.sample_count, once.len()))
}

async fn auth(logs: &LogBuffer) -> Result<String> {
    let dir = tempfile::tempdir()?;
    gen_scenario("melbourne-nye", 1, dir.path())?;
    let served = serve_dir(dir.path()).await?;
    let valid = served.issue_key("analyst-1")?;
    let revoked = served.issue_key("former")?;
    let revoked_id = revoked.split_once('.').unwrap().0.to_string();
    crowdlens_service::KeyStore::open(&served.config.service.auth_store)?.revoke(&revoked_id)?;
    let (valid_id, valid_secret) = valid.split_once('.').unwrap();
    let wrong_secret = format!("{valid_id}.{}", "0".repeat(valid_secret.len()));
    let unknown = format!("ck00000000000000ff.{valid_secret}");

    let (status, _, body) = served.get("/api/peak?metric=pedestrians", Some(&valid)).await?;
    ensure!(status == 200, "valid key: HTTP {status}");
    let mut rejections = Vec::new();
    for (label, key) in [("missing", None), ("unknown", Some(unknown.as_str())), ("revoked", Some(revoked.as_str())), ("wrong secret", Some(wrong_secret.as_str()))] {
        let (status, ctype, body) = served.get("/api/peak?metric=pedestrians", key).await?;
        ensure!(status == 401, "{label} key: HTTP {status}");
        rejections.push((status, ctype, body));
    }
    ensure!(rejections.windows(2).all(|w| w[0] == w[1]), "401 responses differ: {rejections:?}");
    served.server.shutdown().await?;

    let store_text = std::fs::read_to_string(&served.config.service.auth_store)?;
    let log_text = logs.text();
    let revoked_secret = revoked.split_once('.').unwrap().1;
    for secret in [valid_secret, revoked_secret] {
        ensure!(!store_text.contains(secret), "plaintext secret in the auth store");
        ensure!(!log_text.contains(secret), "plaintext secret in the logs");
        ensure!(!body.contains(secret), "plaintext secret in a response");
    }
    ensure!(log_text.contains(&format!("key_id={valid_id}")), "authorized key id not logged");
    Ok(format!(
        "valid key 200; missing/unknown/revoked/wrong-secret 401 with identical bodies; no secret in auth store or {} bytes of logs",
        log_text.len()
    ))
}

// ---------------------------------------------------------------------------

fn scale_store(n_places: usize) -> Result<(Store, Vec<Sample>)> {
    let places: Vec<Place> = (0..n_places)
        .map(|i| Place {
            id: format!("c{i:05}"),
            name: format!("Cell {i}"),
            geometry: Geometry::Point(LonLat::new((i % 100) as f64 * 0.01, (i / 100) as f64 * 0.01)),
            capacity: Some(1000.0),
        })
        .collect();
    let ids: Vec<String> = places.iter().map(|p| p.id.clone()).collect();
    let cat = Catalog::new(places, vec![MetricDef::base("total", "Total", "devices", 1000.0)])?;
    let t0 = Timestamp::ymd_hms(2022, 6, 1, 0, 0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(n_places as u64);
    let mut samples = Vec::with_capacity(n_places * SCALE_TIMES);
    for k in 0..SCALE_TIMES {
        let t = t0.plus_secs(300 * k as i64);
        for id in &ids {
            samples.push(Sample::new(id.clone(), t, "total", rng.random_range(0..500) as f64));
        }
    }
    Ok((Store::new(Arc::new(cat)), samples))
}

fn median_query(store: &Store) -> Result<Duration> {
    let mut runs = Vec::new();
    for _ in 0..SCALE_REPEATS {
        let started = Instant::now();
        let s = sum_series(store, "total", Timestamp::MIN, Timestamp::MAX, None)?;
        runs.push(started.elapsed());
        ensure!(s.points.len() == SCALE_TIMES, "result size {}", s.points.len());
    }
    runs.sort();
    Ok(runs[SCALE_REPEATS / 2])
}

fn scalability() -> Result<String> {
    let (store, samples) = scale_store(SCALE_SAMPLES / SCALE_TIMES)?;
    ensure!(samples.len() == SCALE_SAMPLES);
    let started = Instant::now();
    store.upsert(&samples)?;
    let ingested = started.elapsed();
    let series = sum_series(&store, "total", Timestamp::MIN, Timestamp::MAX, None)?;
    let total = started.elapsed();
    ensure!(series.points.len() == SCALE_TIMES);
    if total >= SCALE_LIMIT {
        bail!("ingest {ingested:?} + query took {total:?}, limit {SCALE_LIMIT:?}");
    }
    drop(samples);

    let base = median_query(&store)?;
    drop(store);
    let (double, samples) = scale_store(2 * SCALE_SAMPLES / SCALE_TIMES)?;
    double.upsert(&samples)?;
    drop(samples);
    let doubled = median_query(&double)?;
    let ratio = doubled.as_secs_f64() / base.as_secs_f64();
    ensure!(ratio < SCALE_DOUBLING_RATIO, "doubling samples raised query latency {ratio:.2}x (limit {SCALE_DOUBLING_RATIO}x)");
    Ok(format!(
        "{SCALE_SAMPLES} samples ingested in {:.0} ms, full-range sum {:.0} ms, total {:.2} s (limit {SCALE_LIMIT:?}); query {:.1} ms -> {:.1} ms at 2x samples, ratio {ratio:.2} (limit {SCALE_DOUBLING_RATIO})",
        ingested.as_secs_f64() * 1e3,
        (total - ingested).as_secs_f64() * 1e3,
        total.as_secs_f64(),
        base.as_secs_f64() * 1e3,
        doubled.as_secs_f64() * 1e3
    ))
}
