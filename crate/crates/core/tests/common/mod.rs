//! Independent reference computations used by the integration tests. Each
//! oracle works from dense feature vectors or exhaustive enumeration and
//! shares no code path with the library routines it checks.
#![allow(dead_code)]

use rand::Rng;
use rment::{
    build_feature_map, demo_stats, weighted_mixture, ActionId, DemoStats, Demonstration,
    FeatureMap, FeatureSpec, StateId, TaskSpec, WeightVector, WeightedStats,
};

pub struct Instance {
    pub task: TaskSpec,
    pub fm: FeatureMap,
    pub stats: Vec<DemoStats>,
    pub ws: WeightedStats,
}

pub fn random_demo<R: Rng>(rng: &mut R, id: &str, n_s: usize, n_a: usize, len: usize) -> Demonstration {
    let pairs: Vec<(usize, usize)> = (0..len)
        .map(|_| (rng.gen_range(0..n_s), rng.gen_range(0..n_a)))
        .collect();
    Demonstration::from_pairs(id, &pairs)
}

/// Random weights in [0, 1] with Σ w = M, built by clipping a scaled
/// random direction and redistributing.
pub fn random_weights<R: Rng>(rng: &mut R, d: usize) -> WeightVector {
    let m = rng.gen_range(0.3..=d as f64);
    let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..1.0)).collect();
    let mut w: Vec<f64> = raw.iter().map(|v| v * m / raw.iter().sum::<f64>()).collect();
    // Push overflow above 1 onto the demos that still have room.
    for _ in 0..d {
        let excess: f64 = w.iter().map(|v| (v - 1.0).max(0.0)).sum();
        if excess <= 0.0 {
            break;
        }
        w.iter_mut().for_each(|v| *v = v.min(1.0));
        let room: f64 = w.iter().map(|v| 1.0 - v).sum();
        w.iter_mut().for_each(|v| *v += excess * (1.0 - *v) / room);
    }
    let sum: f64 = w.iter().sum();
    WeightVector::new(w, sum).unwrap()
}

pub fn random_instance<R: Rng>(rng: &mut R, tiled: bool) -> Instance {
    let n_s = rng.gen_range(1..=6);
    let n_a = rng.gen_range(2..=4);
    let task = TaskSpec::tabular("rand", n_s, n_a).unwrap();
    let spec = if tiled && n_s >= 2 {
        FeatureSpec::TiledIndicator {
            tiles: vec![rng.gen_range(1..=n_s)],
        }
    } else {
        FeatureSpec::TabularIndicator
    };
    let fm = build_feature_map(&spec, &task).unwrap();
    let d = rng.gen_range(1..=4);
    let stats: Vec<DemoStats> = (0..d)
        .map(|i| {
            let len = rng.gen_range(1..=12);
            demo_stats(&random_demo(rng, &format!("d{i}"), n_s, n_a, len), &task, &fm).unwrap()
        })
        .collect();
    let w = random_weights(rng, d);
    let ws = weighted_mixture(&stats, &w).unwrap();
    Instance { task, fm, stats, ws }
}

pub fn dense_features(fm: &FeatureMap, s: usize, a: usize) -> Vec<f64> {
    fm.feature_vector(StateId(s), ActionId(a)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// −Σ_s p(s)·log Σ_a exp(λ·f(s,a)) + Σ_i λ_i Σ_{s,a} joint(s,a) f_i(s,a),
/// evaluated with dense feature vectors and naive exponentials.
pub fn brute_dual(lambda: &[f64], ws: &WeightedStats, fm: &FeatureMap) -> f64 {
    let n_a = fm.n_actions();
    let mut value = 0.0;
    for s in 0..fm.n_states() {
        let z: f64 = (0..n_a).map(|a| dot(lambda, &dense_features(fm, s, a)).exp()).sum();
        value -= ws.p_w[s] * z.ln();
        for a in 0..n_a {
            value += ws.joint_w[s * n_a + a] * dot(lambda, &dense_features(fm, s, a));
        }
    }
    value
}

pub fn brute_policy(lambda: &[f64], fm: &FeatureMap, s: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..fm.n_actions())
        .map(|a| dot(lambda, &dense_features(fm, s, a)).exp())
        .collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Σ_s p(s) Σ_a π(a|s) f(s,a) by direct double summation.
pub fn brute_model_expectation(policy: &rment::Policy, p: &[f64], fm: &FeatureMap) -> Vec<f64> {
    let mut fe = vec![0.0; fm.n_features()];
    for s in 0..fm.n_states() {
        for a in 0..fm.n_actions() {
            let f = dense_features(fm, s, a);
            for i in 0..fe.len() {
                fe[i] += p[s] * policy.prob(s, a) * f[i];
            }
        }
    }
    fe
}

/// (a_d, b_d) straight from the definitions.
pub fn brute_terms(lambda: &[f64], d: &DemoStats, fm: &FeatureMap) -> (f64, f64) {
    let n_a = fm.n_actions();
    let mut a_term = 0.0;
    let mut b_term = 0.0;
    for s in 0..fm.n_states() {
        let z: f64 = (0..n_a).map(|a| dot(lambda, &dense_features(fm, s, a)).exp()).sum();
        a_term += d.state_dist[s] * z.ln();
        for a in 0..n_a {
            b_term += d.joint[s * n_a + a] * dot(lambda, &dense_features(fm, s, a));
        }
    }
    (a_term, b_term)
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += h;
            lo[i] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect()
}

/// Vertex enumeration of `{0 ≤ w ≤ 1, Σ w = M}` for the objective
/// `−(1/M)·Σ w_d c_d`. Every vertex has ⌊M⌋ ones plus, for fractional M,
/// one coordinate at frac(M). Returns the optimal value and the average of
/// all optimal vertices, which is the symmetric tie-split solution.
pub fn lp_oracle(c: &[f64], m: f64) -> (f64, Vec<f64>) {
    let d = c.len();
    let whole = m.floor() as usize;
    let frac = m - m.floor();
    let objective = |w: &[f64]| -w.iter().zip(c).map(|(w, c)| w * c).sum::<f64>() / m;
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << d) {
        if mask.count_ones() as usize != whole {
            continue;
        }
        let base: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { 0.0 }).collect();
        if frac > 1e-12 {
            for j in (0..d).filter(|j| mask >> j & 1 == 0) {
                let mut v = base.clone();
                v[j] = frac;
                vertices.push(v);
            }
        } else {
            vertices.push(base);
        }
    }
    let best = vertices
        .iter()
        .map(|v| objective(v))
        .fold(f64::INFINITY, f64::min);
    let optimal: Vec<&Vec<f64>> = vertices
        .iter()
        .filter(|v| objective(v) <= best + 1e-12)
        .collect();
    let mut avg = vec![0.0; d];
    for v in &optimal {
        for i in 0..d {
            avg[i] += v[i] / optimal.len() as f64;
        }
    }
    (best, avg)
}
