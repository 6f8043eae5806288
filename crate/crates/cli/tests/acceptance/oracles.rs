//! Reference computations that share no code with the library.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Expressions: text and value are produced together by the generator.

pub const VARS: [&str; 5] = ["a", "b", "c", "dwell", "capacity"];

pub type Env = HashMap<String, Option<f64>>;

#[derive(Default)]
pub struct ExprStats {
    pub missing_operand: usize,
    pub division_by_zero: usize,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn random_env(rng: &mut ChaCha8Rng) -> Env {
    VARS.iter()
        .map(|v| {
            let x = match rng.random_range(0..8) {
                0 => None,
                1 => Some(0.0),
                _ => Some(rng.random_range(-50.0..50.0)),
            };
            (v.to_string(), x)
        })
        .collect()
}

/// Expression text of depth at most `depth` and its value under `env`.
pub fn gen_expr(rng: &mut ChaCha8Rng, depth: u32, env: &Env, stats: &mut ExprStats) -> (String, Option<f64>) {
    if depth == 0 || rng.random_bool(0.2) {
        if rng.random_bool(0.35) {
            let n = rng.random_range(0..40) as f64 / 4.0;
            return (format!("{n}"), Some(n));
        }
        let v = VARS[rng.random_range(0..VARS.len())];
        return (v.to_string(), env[v]);
    }
    if rng.random_bool(0.1) {
        let (t, v) = gen_expr(rng, depth - 1, env, stats);
        return (format!("-({t})"), v.map(|x| -x));
    }
    let (lt, lv) = gen_expr(rng, depth - 1, env, stats);
    let (rt, rv) = gen_expr(rng, depth - 1, env, stats);
    let op = ["+", "-", "*", "/"][rng.random_range(0..4)];
    let value = match (lv, rv) {
        (Some(a), Some(b)) => match op {
            "+" => finite(a + b),
            "-" => finite(a - b),
            "*" => finite(a * b),
            _ if b == 0.0 => {
                stats.division_by_zero += 1;
                None
            }
            _ => finite(a / b),
        },
        _ => {
            stats.missing_operand += 1;
            None
        }
    };
    (format!("({lt} {op} {rt})"), value)
}

// ---------------------------------------------------------------------------
// Geometry.

pub type Pt = (f64, f64);

/// Vertices on a circle at sorted angles: convex, counter-clockwise, closed.
pub fn convex_polygon(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64) -> Vec<Pt> {
    loop {
        let n = rng.random_range(3..9);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        if angles.len() < 3 || (angles[0] + std::f64::consts::TAU - angles[angles.len() - 1]) < 0.05 {
            continue;
        }
        let mut ring: Vec<Pt> = angles.iter().map(|a| (cx + r * a.cos(), cy + r * a.sin())).collect();
        ring.push(ring[0]);
        return ring;
    }
}

/// Inside or on every edge of a counter-clockwise convex ring.
pub fn half_plane_contains(ring: &[Pt], p: Pt) -> bool {
    ring.windows(2).all(|e| {
        let ((ax, ay), (bx, by)) = (e[0], e[1]);
        let cross = (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax);
        let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        cross >= -1e-9 * len.max(1.0)
    })
}

pub fn rect_contains(r: (f64, f64, f64, f64), p: Pt) -> bool {
    p.0 >= r.0 && p.0 <= r.2 && p.1 >= r.1 && p.1 <= r.3
}

/// Mean of a closed ring's vertices, closing vertex excluded.
pub fn vertex_mean(ring: &[Pt]) -> Pt {
    let open = &ring[..ring.len() - 1];
    let n = open.len() as f64;
    (open.iter().map(|p| p.0).sum::<f64>() / n, open.iter().map(|p| p.1).sum::<f64>() / n)
}

// ---------------------------------------------------------------------------
// Aggregation.

/// Per timestamp in `[from, to]` with any sample: the sum of the values of
/// places accepted by `keep`, or None if none of them has a value. Values
/// are added in place order, the order a columnar store sums in.
pub fn brute_force_sums(
    samples: &[(i64, usize, f64)],
    from: i64,
    to: i64,
    keep: impl Fn(usize) -> bool,
) -> Vec<(i64, Option<f64>)> {
    let mut by_t: BTreeMap<i64, Vec<(usize, f64)>> = BTreeMap::new();
    for &(t, p, v) in samples {
        if t >= from && t <= to {
            by_t.entry(t).or_default().push((p, v));
        }
    }
    by_t.into_iter()
        .map(|(t, mut vals)| {
            vals.sort_by_key(|x| x.0);
            let mut sum: Option<f64> = None;
            for (p, v) in vals {
                if keep(p) {
                    sum = Some(sum.unwrap_or(0.0) + v);
                }
            }
            (t, sum)
        })
        .collect()
}

/// `120 * (max - v) / (max - min)`, or 120 for a constant series.
pub fn reference_hue(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        120.0 * (max - v) / (max - min)
    } else {
        120.0
    }
}
