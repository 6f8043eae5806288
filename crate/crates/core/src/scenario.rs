//! Deterministic synthetic crowd data.
//!
//! [`synthesize`] produces a seeded daily waveform per place with explicit
//! spikes; the presets build complete case-study scenarios (places,
//! metrics, samples and the ground truth the generator injected).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geo::LonLat;
use crate::model::{places_to_geojson, Geometry, MetricDef, MetricKind, Place, Region, Sample};
use crate::time::Timestamp;

/// A value forced at one `(place, t)` on the first metric of a waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spike {
    pub place_id: String,
    pub t: Timestamp,
    pub magnitude: f64,
}

impl FromStr for Spike {
    type Err = String;

    /// `place@timestamp=magnitude`, e.g. `sensor_042@2022-12-31T22:00:00Z=75000`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (place, rest) = s.split_once('@').ok_or_else(|| format!("spike {s:?}: expected place@time=magnitude"))?;
        let (t, mag) = rest.rsplit_once('=').ok_or_else(|| format!("spike {s:?}: expected place@time=magnitude"))?;
        let t: Timestamp = t.trim().parse().map_err(|e| format!("spike {s:?}: {e}"))?;
        let magnitude: f64 = mag.trim().parse().map_err(|_| format!("spike {s:?}: invalid magnitude"))?;
        if place.trim().is_empty() || !magnitude.is_finite() {
            return Err(format!("spike {s:?}: expected place@time=magnitude"));
        }
        Ok(Spike { place_id: place.trim().to_string(), t, magnitude })
    }
}

/// Per-place daily sinusoid with multiplicative seeded noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub seed: u64,
    pub start: Timestamp,
    /// Inclusive.
    pub end: Timestamp,
    pub cadence_secs: i64,
    pub places: Vec<String>,
    pub metrics: Vec<String>,
    /// Mean level per place before the per-place scale.
    pub base: f64,
    /// Relative daily swing, 0 = flat.
    pub amplitude: f64,
    /// Relative noise half-width, 0 = none.
    pub noise: f64,
    /// Hour of day (UTC) at which the sinusoid peaks.
    pub peak_hour: f64,
    /// Round values to whole counts.
    pub integer: bool,
    pub spikes: Vec<Spike>,
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform {
            seed: 0,
            start: Timestamp::from_unix(0),
            end: Timestamp::from_unix(0),
            cadence_secs: 600,
            places: Vec::new(),
            metrics: Vec::new(),
            base: 100.0,
            amplitude: 0.5,
            noise: 0.1,
            peak_hour: 14.0,
            integer: true,
            spikes: Vec::new(),
        }
    }
}

fn daily_cycle(t: Timestamp, peak_hour: f64) -> f64 {
    let hour = t.seconds_of_day() as f64 / 3600.0;
    (2.0 * PI * (hour - peak_hour) / 24.0).cos()
}

/// Samples ordered by time, then place order, then metric order. A pure
/// function of the waveform parameters.
pub fn synthesize(w: &Waveform) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let scales: Vec<f64> = w.places.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let cadence = w.cadence_secs.max(1);
    let mut out = Vec::new();
    let mut t = w.start;
    while t <= w.end {
        let cycle = daily_cycle(t, w.peak_hour);
        for (p, place) in w.places.iter().enumerate() {
            for metric in &w.metrics {
                let jitter = if w.noise > 0.0 { rng.random_range(-w.noise..=w.noise) } else { 0.0 };
                let mut v = (w.base * scales[p] * (1.0 + w.amplitude * cycle) * (1.0 + jitter)).max(0.0);
                if w.integer {
                    v = v.round();
                }
                out.push(Sample::new(place.clone(), t, metric.clone(), v));
            }
        }
        t = t.plus_secs(cadence);
    }
    if let Some(first_metric) = w.metrics.first() {
        for spike in &w.spikes {
            match out.iter_mut().find(|s| s.place_id == spike.place_id && s.t == spike.t && &s.metric_id == first_metric) {
                Some(s) => s.value = spike.magnitude,
                None => out.push(Sample::new(spike.place_id.clone(), spike.t, first_metric.clone(), spike.magnitude)),
            }
        }
        out.sort_by_key(|s| s.t);
    }
    out
}

/// The three case-study presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Lisbon 200 m grid over the June 2022 festival week, 5-minute cadence.
    LisbonFestival,
    /// Lisbon grid around a festival park over two concert weekends.
    RirWeekend,
    /// 93 pedestrian sensors over New Year's Eve 2022, 10-minute cadence.
    MelbourneNye,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::LisbonFestival, Preset::RirWeekend, Preset::MelbourneNye];

    pub fn name(self) -> &'static str {
        match self {
            Preset::LisbonFestival => "lisbon-festival",
            Preset::RirWeekend => "rir-weekend",
            Preset::MelbourneNye => "melbourne-nye",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset {s:?} (expected lisbon-festival, rir-weekend or melbourne-nye)"))
    }
}

/// What the generator put into a scenario, for checking recovery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioTruth {
    pub preset: String,
    pub metric_id: String,
    /// Area the peak refers to; `None` means the whole map.
    #[serde(skip)]
    pub region: Option<Region>,
    pub region_rings: Option<Vec<Vec<[f64; 2]>>>,
    pub peak_t: Timestamp,
    pub peak_value: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub preset: Preset,
    pub places: Vec<Place>,
    pub metrics: Vec<MetricDef>,
    pub cadence_secs: i64,
    pub samples: Vec<Sample>,
    pub truth: ScenarioTruth,
}

pub fn generate(preset: Preset, seed: u64) -> Scenario {
    match preset {
        Preset::LisbonFestival => lisbon_festival(seed),
        Preset::RirWeekend => rir_weekend(seed),
        Preset::MelbourneNye => melbourne_nye(seed),
    }
}

/// Metres to degrees at a latitude, flat-earth approximation.
fn metres_to_deg(lat: f64, dx: f64, dy: f64) -> (f64, f64) {
    let dlat = dy / 111_320.0;
    let dlon = dx / (111_320.0 * lat.to_radians().cos());
    (dlon, dlat)
}

/// Square grid cells of `size_m` metres, row-major from the south-west corner.
fn grid(rng: &mut ChaCha8Rng, origin: LonLat, rows: usize, cols: usize, size_m: f64, cap_range: (f64, f64)) -> Vec<Place> {
    let (dlon, dlat) = metres_to_deg(origin.lat, size_m, size_m);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x0 = origin.lon + c as f64 * dlon;
            let y0 = origin.lat + r as f64 * dlat;
            let ring = vec![
                LonLat::new(x0, y0),
                LonLat::new(x0 + dlon, y0),
                LonLat::new(x0 + dlon, y0 + dlat),
                LonLat::new(x0, y0 + dlat),
                LonLat::new(x0, y0),
            ];
            let capacity = (rng.random_range(cap_range.0..cap_range.1) / 10.0_f64).round() * 10.0;
            out.push(Place {
                id: format!("cell_{r:02}_{c:02}"),
                name: format!("Cell {r}/{c}"),
                geometry: Geometry::Polygon(ring),
                capacity: Some(capacity),
            });
        }
    }
    out
}

/// Ring enclosing grid cells `rows x cols` (inclusive ranges), padded inward
/// from the outer cell edges so only those cells' centroids fall inside.
fn grid_block_ring(origin: LonLat, size_m: f64, rows: (usize, usize), cols: (usize, usize)) -> Vec<LonLat> {
    let (dlon, dlat) = metres_to_deg(origin.lat, size_m, size_m);
    let x0 = origin.lon + (cols.0 as f64 + 0.1) * dlon;
    let x1 = origin.lon + (cols.1 as f64 + 0.9) * dlon;
    let y0 = origin.lat + (rows.0 as f64 + 0.1) * dlat;
    let y1 = origin.lat + (rows.1 as f64 + 0.9) * dlat;
    vec![LonLat::new(x0, y0), LonLat::new(x1, y0), LonLat::new(x1, y1), LonLat::new(x0, y1), LonLat::new(x0, y0)]
}

/// Tent profile: 1 at `centre`, falling linearly to 0 at `half_width_secs`.
fn tent(t: Timestamp, centre: Timestamp, half_width_secs: i64) -> f64 {
    let d = (t.unix() - centre.unix()).abs() as f64;
    (1.0 - d / half_width_secs as f64).max(0.0)
}

/// Smooth daytime activity profile in [floor, 1], peaking at `peak_hour`.
fn day_profile(t: Timestamp, peak_hour: f64, floor: f64) -> f64 {
    let c = daily_cycle(t, peak_hour);
    floor + (1.0 - floor) * ((1.0 + c) / 2.0).powi(2)
}

fn lisbon_metrics() -> Vec<MetricDef> {
    vec![
        MetricDef::base("total", "Devices detected", "devices", 3000.0),
        MetricDef::base("roaming", "Roaming devices", "devices", 600.0),
        MetricDef::base("dwell", "Mean dwell time", "minutes", 60.0),
        MetricDef::derived("density", "Device density", "devices/capacity", 1.5, "total / capacity"),
        MetricDef::derived("roaming_density", "Roaming density", "devices/capacity", 0.3, "roaming / capacity"),
    ]
}

fn ring_pairs(ring: &[LonLat]) -> Vec<[f64; 2]> {
    ring.iter().map(|p| [p.lon, p.lat]).collect()
}

fn region_sum(samples: &[Sample], metric: &str, t: Timestamp, ids: &[&str]) -> f64 {
    samples
        .iter()
        .filter(|s| s.t == t && s.metric_id == metric && ids.contains(&s.place_id.as_str()))
        .map(|s| s.value)
        .sum()
}

const GRID_M: f64 = 200.0;

fn lisbon_festival(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = LonLat::new(-9.1520, 38.7080);
    let (rows, cols) = (8, 8);
    let places = grid(&mut rng, origin, rows, cols, GRID_M, (800.0, 4000.0));
    // Avenue cells down column 2 and old-quarter cells in the south-east.
    let festival: Vec<usize> = [(4, 2), (5, 2), (6, 2), (1, 5), (1, 6), (2, 6)].iter().map(|(r, c)| r * cols + c).collect();
    let weights: Vec<f64> = places.iter().map(|_| rng.random_range(0.4..1.6)).collect();
    let roaming_share: Vec<f64> = places.iter().map(|_| rng.random_range(0.05..0.2)).collect();

    let start = Timestamp::ymd_hms(2022, 6, 8, 0, 0, 0);
    let end = Timestamp::ymd_hms(2022, 6, 14, 23, 55, 0);
    let cadence = 300;
    // Weekday busiest before the long weekend; holidays and weekend quieter.
    let day_factor = |t: Timestamp| match t.to_iso().get(8..10) {
        Some("08") => 1.0,
        Some("09") => 1.12,
        Some("10") => 0.78,
        Some("11") => 0.72,
        Some("12") => 0.76,
        Some("13") => 0.8,
        _ => 0.98,
    };
    let party = Timestamp::ymd_hms(2022, 6, 13, 0, 0, 0);

    let mut samples = Vec::new();
    let mut t = start;
    while t <= end {
        let activity = day_profile(t, 15.0, 0.12) * day_factor(t);
        let hump = tent(t, party, 4 * 3600);
        for (i, place) in places.iter().enumerate() {
            let noise = 1.0 + rng.random_range(-0.05..0.05);
            let mut total = 900.0 * weights[i] * activity * noise;
            let mut dwell = 35.0 + 10.0 * weights[i] + rng.random_range(-3.0..3.0);
            if festival.contains(&i) && hump > 0.0 {
                total += 2600.0 * hump;
                dwell = dwell * (1.0 - hump) + 18.0 * hump;
            }
            let roaming = total * roaming_share[i] * (1.0 + 0.5 * hump * festival.contains(&i) as u8 as f64);
            samples.push(Sample::new(place.id.clone(), t, "total", total.round()));
            samples.push(Sample::new(place.id.clone(), t, "roaming", roaming.round()));
            samples.push(Sample::new(place.id.clone(), t, "dwell", (dwell * 10.0).round() / 10.0));
        }
        t = t.plus_secs(cadence);
    }

    let festival_ids: Vec<&str> = festival.iter().map(|&i| places[i].id.as_str()).collect();
    let fest_ring = festival_ring(&places, &festival);
    let peak_value = region_sum(&samples, "total", party, &festival_ids);
    Scenario {
        preset: Preset::LisbonFestival,
        truth: ScenarioTruth {
            preset: Preset::LisbonFestival.name().into(),
            metric_id: "total".into(),
            region_rings: Some(fest_ring.iter().map(|r| ring_pairs(r)).collect()),
            region: Region::new(fest_ring).ok(),
            peak_t: party,
            peak_value,
            notes: vec![
                "whole-map total peaks on 2022-06-09, the weekday before the long weekend".into(),
                "festival cells (avenue and old quarter) peak near midnight of 12-13 June".into(),
                format!("festival cells: {}", festival_ids.join(", ")),
            ],
        },
        places,
        metrics: lisbon_metrics(),
        cadence_secs: cadence,
        samples,
    }
}

/// One small square ring per selected polygon cell, shrunk around its centroid.
fn festival_ring(places: &[Place], cells: &[usize]) -> Vec<Vec<LonLat>> {
    cells
        .iter()
        .map(|&i| {
            let c = places[i].representative_point();
            let d = 0.0005;
            vec![
                LonLat::new(c.lon - d, c.lat - d),
                LonLat::new(c.lon + d, c.lat - d),
                LonLat::new(c.lon + d, c.lat + d),
                LonLat::new(c.lon - d, c.lat + d),
                LonLat::new(c.lon - d, c.lat - d),
            ]
        })
        .collect()
}

fn rir_weekend(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = LonLat::new(-9.1270, 38.7505);
    let (rows, cols) = (8, 8);
    let places = grid(&mut rng, origin, rows, cols, GRID_M, (800.0, 4000.0));
    // The park: rows 3..=4, cols 3..=5.
    let (park_rows, park_cols) = ((3, 4), (3, 5));
    let park: Vec<usize> = (park_rows.0..=park_rows.1)
        .flat_map(|r| (park_cols.0..=park_cols.1).map(move |c| r * cols + c))
        .collect();
    let weights: Vec<f64> = places
        .iter()
        .enumerate()
        .map(|(i, _)| if park.contains(&i) { 0.15 } else { rng.random_range(0.4..1.6) })
        .collect();
    let crowd_share: Vec<f64> = park.iter().map(|_| rng.random_range(0.8..1.2)).collect();

    let start = Timestamp::ymd_hms(2022, 6, 18, 0, 0, 0);
    let end = Timestamp::ymd_hms(2022, 6, 27, 23, 55, 0);
    let cadence = 300;
    // Concert nights; the second weekend draws bigger crowds.
    let nights = [
        (Timestamp::ymd_hms(2022, 6, 18, 23, 30, 0), 0.70),
        (Timestamp::ymd_hms(2022, 6, 19, 23, 30, 0), 0.76),
        (Timestamp::ymd_hms(2022, 6, 25, 23, 30, 0), 0.90),
        (Timestamp::ymd_hms(2022, 6, 26, 23, 30, 0), 1.00),
    ];
    let half_width = 4 * 3600;
    let crowd = 9000.0;

    let mut samples = Vec::new();
    let mut t = start;
    while t <= end {
        let activity = day_profile(t, 14.0, 0.15);
        let hump: f64 = nights.iter().map(|&(c, a)| a * tent(t, c, half_width)).sum();
        for (i, place) in places.iter().enumerate() {
            let noise = 1.0 + rng.random_range(-0.05..0.05);
            let mut total = 700.0 * weights[i] * activity * noise;
            let mut dwell = 30.0 + 8.0 * weights[i] + rng.random_range(-2.0..2.0);
            if let Some(k) = park.iter().position(|&p| p == i) {
                if hump > 0.0 {
                    total += crowd / park.len() as f64 * crowd_share[k] * hump;
                    // Heavy movement between cells during concerts keeps dwell short.
                    let busy = (hump / 0.3).min(1.0);
                    dwell = dwell * (1.0 - busy) + (9.0 + rng.random_range(-0.5..0.5)) * busy;
                }
            }
            let roaming = total * 0.12;
            samples.push(Sample::new(place.id.clone(), t, "total", total.round()));
            samples.push(Sample::new(place.id.clone(), t, "roaming", roaming.round()));
            samples.push(Sample::new(place.id.clone(), t, "dwell", (dwell * 10.0).round() / 10.0));
        }
        t = t.plus_secs(cadence);
    }

    let ring = grid_block_ring(origin, GRID_M, park_rows, park_cols);
    let park_ids: Vec<&str> = park.iter().map(|&i| places[i].id.as_str()).collect();
    let peak_t = nights[3].0;
    let peak_value = region_sum(&samples, "total", peak_t, &park_ids);
    Scenario {
        preset: Preset::RirWeekend,
        truth: ScenarioTruth {
            preset: Preset::RirWeekend.name().into(),
            metric_id: "total".into(),
            region: Region::from_ring(ring.clone()).ok(),
            region_rings: Some(vec![ring_pairs(&ring)]),
            peak_t,
            peak_value,
            notes: vec![
                "four concert nights (18, 19, 25, 26 June); second-weekend humps are higher".into(),
                "park dwell time stays near 9 minutes while concerts run".into(),
                format!("park cells: {}", park_ids.join(", ")),
            ],
        },
        places,
        metrics: lisbon_metrics(),
        cadence_secs: cadence,
        samples,
    }
}

/// Splits `total` into integer parts proportional to `weights`
/// (largest-remainder rounding), so the parts sum to `total` exactly.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut left = total - parts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[i] += 1;
        left -= 1;
    }
    parts
}

pub const NYE_SENSORS: usize = 93;
pub const NYE_PEAK: f64 = 75_000.0;

fn melbourne_nye(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = LonLat::new(144.9631, -37.8136);
    let places: Vec<Place> = (0..NYE_SENSORS)
        .map(|i| {
            let (dlon, dlat) = metres_to_deg(centre.lat, rng.random_range(-1200.0..1200.0), rng.random_range(-900.0..900.0));
            let capacity = (rng.random_range(300.0..2500.0_f64) / 10.0).round() * 10.0;
            Place {
                id: format!("sensor_{:03}", i + 1),
                name: format!("Pedestrian sensor {}", i + 1),
                geometry: Geometry::Point(LonLat::new(
                    ((centre.lon + dlon) * 1e6).round() / 1e6,
                    ((centre.lat + dlat) * 1e6).round() / 1e6,
                )),
                capacity: Some(capacity),
            }
        })
        .collect();
    let weights: Vec<f64> = places.iter().map(|_| rng.random_range(0.5..1.5)).collect();

    let start = Timestamp::ymd_hms(2022, 12, 30, 0, 0, 0);
    let end = Timestamp::ymd_hms(2023, 1, 1, 23, 50, 0);
    let cadence = 600;
    let spike_t = Timestamp::ymd_hms(2022, 12, 31, 22, 0, 0);
    let eve_start = Timestamp::ymd_hms(2022, 12, 31, 16, 0, 0);
    let eve_end = Timestamp::ymd_hms(2022, 12, 31, 23, 50, 0);
    let spike_parts = apportion(NYE_PEAK as u64, &weights);

    // Per-sensor ceiling of 150 * 1.5 * 1.1 keeps ordinary days under 30000 in total.
    let mut samples = Vec::new();
    let mut t = start;
    while t <= end {
        let activity = day_profile(t, 13.0, 0.08);
        let eve = if t >= eve_start && t <= eve_end { 1.0 + 1.4 * tent(t, spike_t, 6 * 3600) } else { 1.0 };
        for (i, place) in places.iter().enumerate() {
            let noise = 1.0 + rng.random_range(-0.1..0.1);
            let value = if t == spike_t {
                spike_parts[i] as f64
            } else {
                (150.0 * weights[i] * activity * eve * noise).round()
            };
            samples.push(Sample::new(place.id.clone(), t, "pedestrians", value));
        }
        t = t.plus_secs(cadence);
    }

    Scenario {
        preset: Preset::MelbourneNye,
        truth: ScenarioTruth {
            preset: Preset::MelbourneNye.name().into(),
            metric_id: "pedestrians".into(),
            region: None,
            region_rings: None,
            peak_t: spike_t,
            peak_value: NYE_PEAK,
            notes: vec![
                format!("{NYE_SENSORS} point sensors, 10-minute counts"),
                "whole-map total of 75000 injected at 2022-12-31T22:00:00Z".into(),
                "every 2023-01-01 total stays below 30000".into(),
            ],
        },
        places,
        metrics: vec![
            MetricDef::base("pedestrians", "Pedestrians counted", "persons", 1500.0),
            MetricDef::derived("density", "Pedestrian density", "persons/capacity", 1.0, "pedestrians / capacity"),
        ],
        cadence_secs: cadence,
        samples,
    }
}

impl Scenario {
    pub fn base_metric_ids(&self) -> Vec<&str> {
        self.metrics.iter().filter(|m| m.is_base()).map(|m| m.id.as_str()).collect()
    }

    /// Config file serving this scenario from `places.geojson` and `samples.csv`.
    pub fn config_toml(&self) -> String {
        let mut out = String::new();
        out.push_str("# Generated scenario configuration.\n");
        out.push_str("[service]\nbind = \"127.0.0.1:8080\"\nauth_store = \"keys.json\"\n\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "[[metrics]]\nid = {:?}\nlabel = {:?}\nunit = {:?}\ncap = {:?}\n",
                m.id, m.label, m.unit, m.cap
            ));
            if let MetricKind::Derived { expr } = &m.kind {
                out.push_str(&format!("expr = {expr:?}\n"));
            }
            out.push('\n');
        }
        let metrics = self.base_metric_ids().iter().map(|m| format!("{m:?}")).collect::<Vec<_>>().join(", ");
        out.push_str("[[sources]]\nname = \"places\"\nkind = \"places\"\ndriver = \"geojson-file\"\nparams = { path = \"places.geojson\" }\n\n");
        out.push_str(&format!(
            "[[sources]]\nname = \"history\"\nkind = \"historical\"\ndriver = \"csv-file\"\nmetrics = [{metrics}]\nparams = {{ path = \"samples.csv\", cadence_secs = {} }}\n\n",
            self.cadence_secs
        ));
        out.push_str(&format!(
            "[[sources]]\nname = \"replay\"\nkind = \"realtime\"\ndriver = \"replay\"\nmetrics = [{metrics}]\nparams = {{ path = \"samples.csv\", cadence_secs = {}, speed = 60 }}\n",
            self.cadence_secs
        ));
        out
    }

    /// Writes `places.geojson`, `samples.csv`, `crowdlens.toml` and
    /// `truth.json` into `dir`. Every file is staged under a temporary name
    /// and renamed only once all of them were written.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        crate::csvio::write_samples(&mut csv, &self.samples).map_err(|e| std::io::Error::other(e.to_string()))?;
        let geojson = serde_json::to_string_pretty(&places_to_geojson(&self.places))?;
        let truth = serde_json::to_string_pretty(&self.truth)?;
        let files: [(&str, Vec<u8>); 4] = [
            ("places.geojson", geojson.into_bytes()),
            ("samples.csv", csv),
            ("crowdlens.toml", self.config_toml().into_bytes()),
            ("truth.json", truth.into_bytes()),
        ];
        let staged: Vec<_> = files.iter().map(|(name, _)| dir.join(format!(".{name}.partial"))).collect();
        let result = (|| {
            for ((_, bytes), tmp) in files.iter().zip(&staged) {
                std::fs::write(tmp, bytes)?;
            }
            for ((name, _), tmp) in files.iter().zip(&staged) {
                std::fs::rename(tmp, dir.join(name))?;
            }
            Ok(())
        })();
        if result.is_err() {
            for tmp in &staged {
                let _ = std::fs::remove_file(tmp);
            }
        }
        result
    }
}
