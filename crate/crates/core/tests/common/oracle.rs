//! Straightforward reimplementations used as test oracles. They work on
//! plain nested vectors and share no code with the library beyond reading
//! parameter values.

use std::f64::consts::PI;

use contimo::motion::{Channel, Skeleton};
use contimo::ParamStore;

pub type Grid = Vec<Vec<f64>>;

pub fn to_grid(t: &contimo::Tensor) -> Grid {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn psnr(pred: &Grid, truth: &Grid) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut se = 0.0;
    let mut n = 0.0;
    for (pr, tr) in pred.iter().zip(truth) {
        for (p, t) in pr.iter().zip(tr) {
            lo = lo.min(*t);
            hi = hi.max(*t);
            se += (p - t) * (p - t);
            n += 1.0;
        }
    }
    let mse = se / n;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (hi - lo).log10() - 10.0 * mse.log10()
}

/// Textbook SSIM: Gaussian 11×11 window over every valid position, local
/// statistics from raw moments (E[x²] − μ²). Arrays below 11 in either
/// axis are one window with uniform weights.
pub fn ssim(x: &Grid, y: &Grid, range: f64) -> f64 {
    let (h, w) = (x.len(), x[0].len());
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);
    let stats = |r0: usize, c0: usize, wh: usize, ww: usize, weight: &dyn Fn(usize, usize) -> f64| {
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..wh {
            for j in 0..ww {
                let k = weight(i, j);
                let (a, b) = (x[r0 + i][c0 + j], y[r0 + i][c0 + j]);
                sx += k * a;
                sy += k * b;
                sxx += k * a * a;
                syy += k * b * b;
                sxy += k * a * b;
            }
        }
        let (vx, vy, cov) = (sxx - sx * sx, syy - sy * sy, sxy - sx * sy);
        ((2.0 * sx * sy + c1) * (2.0 * cov + c2)) / ((sx * sx + sy * sy + c1) * (vx + vy + c2))
    };
    if h < 11 || w < 11 {
        let u = 1.0 / (h * w) as f64;
        return stats(0, 0, h, w, &|_, _| u);
    }
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    let weight = |i: usize, j: usize| g[i] * g[j] / total;
    let mut acc = 0.0;
    let mut count = 0.0;
    for r in 0..=h - 11 {
        for c in 0..=w - 11 {
            acc += stats(r, c, 11, 11, &weight);
            count += 1.0;
        }
    }
    acc / count
}

/// Power spectrum by direct summation over every DFT bin.
pub fn dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Channels are columns of the grids.
pub fn npss(pred: &Grid, truth: &Grid) -> f64 {
    let cols = truth[0].len();
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..cols {
        let p: Vec<f64> = pred.iter().map(|r| r[c]).collect();
        let t: Vec<f64> = truth.iter().map(|r| r[c]).collect();
        let (pp, tp) = (dft_power(&p), dft_power(&t));
        let (ps, ts): (f64, f64) = (pp.iter().sum(), tp.iter().sum());
        if ts == 0.0 {
            continue;
        }
        let mut gap = 0.0;
        for k in 0..pp.len() {
            let cp: f64 = if ps == 0.0 { 0.0 } else { pp[..=k].iter().sum::<f64>() / ps };
            let ct: f64 = tp[..=k].iter().sum::<f64>() / ts;
            gap += (cp - ct).abs();
        }
        num += ts * gap;
        den += ts;
    }
    num / den
}

pub type Mat4 = [[f64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn axis_rotation(axis: usize, degrees: f64) -> Mat4 {
    let (s, c) = degrees.to_radians().sin_cos();
    let mut m = identity();
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    m[i][i] = c;
    m[i][j] = -s;
    m[j][i] = s;
    m[j][j] = c;
    m
}

fn translation(v: [f64; 3]) -> Mat4 {
    let mut m = identity();
    for i in 0..3 {
        m[i][3] = v[i];
    }
    m
}

/// Unit quaternion `[w, x, y, z]` with `w ≥ 0` from a rotation matrix.
fn matrix_to_quat(m: &Mat4) -> [f64; 4] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
    };
    if q[0] < 0.0 {
        [-q[0], -q[1], -q[2], -q[3]]
    } else {
        q
    }
}

/// Global 4×4 transforms of every joint for one row of BVH channel values.
pub fn fk_matrices(skeleton: &Skeleton, values: &[f64]) -> Vec<Mat4> {
    let mut out: Vec<Mat4> = Vec::new();
    let mut cursor = 0;
    for (j, joint) in skeleton.joints().iter().enumerate() {
        let mut offset = joint.offset;
        let mut rot = identity();
        for ch in &joint.channels {
            let v = values[cursor];
            cursor += 1;
            match ch {
                Channel::Xposition if j == 0 => offset[0] += v,
                Channel::Yposition if j == 0 => offset[1] += v,
                Channel::Zposition if j == 0 => offset[2] += v,
                Channel::Xrotation => rot = mat_mul(&rot, &axis_rotation(0, v)),
                Channel::Yrotation => rot = mat_mul(&rot, &axis_rotation(1, v)),
                Channel::Zrotation => rot = mat_mul(&rot, &axis_rotation(2, v)),
                _ => {}
            }
        }
        let local = mat_mul(&translation(offset), &rot);
        let global = match joint.parent {
            Some(p) => mat_mul(&out[p], &local),
            None => local,
        };
        out.push(global);
    }
    out
}

/// Global positions and `w ≥ 0` quaternions for one frame.
pub fn fk(skeleton: &Skeleton, values: &[f64]) -> (Vec<[f64; 3]>, Vec<[f64; 4]>) {
    let mats = fk_matrices(skeleton, values);
    let pos = mats.iter().map(|m| [m[0][3], m[1][3], m[2][3]]).collect();
    let rot = mats.iter().map(matrix_to_quat).collect();
    (pos, rot)
}

/// Mean per-joint-per-frame position and quaternion distances.
pub fn l2p_l2q(skeleton: &Skeleton, pred: &Grid, truth: &Grid) -> (f64, f64) {
    let (mut dp, mut dq, mut n) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (pp, pq) = fk(skeleton, p);
        let (tp, tq) = fk(skeleton, t);
        for j in 0..pp.len() {
            dp += (0..3).map(|k| (pp[j][k] - tp[j][k]).powi(2)).sum::<f64>().sqrt();
            let dot: f64 = (0..4).map(|k| pq[j][k] * tq[j][k]).sum();
            let sign = if dot < 0.0 { -1.0 } else { 1.0 };
            dq += (0..4).map(|k| (sign * pq[j][k] - tq[j][k]).powi(2)).sum::<f64>().sqrt();
            n += 1.0;
        }
    }
    (dp / n, dq / n)
}

// --- Network forward pass on plain vectors -------------------------------

fn param(store: &ParamStore, name: &str) -> Vec<f64> {
    store.get(name).unwrap_or_else(|| panic!("missing parameter {name}")).data().to_vec()
}

/// One row through a PaidMlp whose parameters are named `{prefix}.l{i}.*`
/// and `{prefix}.act{i}.*` (or `{prefix}.act.*` when shared).
pub fn mlp_row(store: &ParamStore, prefix: &str, layers: usize, shared: bool, relu: bool, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for l in 0..layers {
        let w = store.get(&format!("{prefix}.l{l}.weight")).unwrap();
        let b = param(store, &format!("{prefix}.l{l}.bias"));
        let (rows, cols) = (w.rows(), w.cols());
        assert_eq!(rows, h.len());
        let mut z = b.clone();
        for (j, zj) in z.iter_mut().enumerate() {
            for (i, hi) in h.iter().enumerate() {
                *zj += hi * w.data()[i * cols + j];
            }
        }
        if l + 1 < layers {
            if relu {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                let tag = if shared { "act".to_string() } else { format!("act{l}") };
                let a = param(store, &format!("{prefix}.{tag}.amplitude"));
                let f = param(store, &format!("{prefix}.{tag}.frequency"));
                let p = param(store, &format!("{prefix}.{tag}.phase"));
                for v in z.iter_mut() {
                    let mut s = 0.0;
                    for i in 0..a.len() {
                        s += a[i] * (f[i] * *v + p[i]).sin();
                    }
                    *v = s;
                }
            }
        }
        h = z;
    }
    h
}

/// One cross-scale block for a single query: query tokens from `prev`,
/// key/value tokens from `cur`, output projection plus residual.
pub fn attention_row(store: &ParamStore, block: usize, d: usize, prev: &[f64], cur: &[f64]) -> Vec<f64> {
    let tokens = cur.len() / d;
    let proj = |name: &str, x: &[f64]| -> Vec<Vec<f64>> {
        let w = param(store, &format!("att.b{block}.{name}"));
        (0..tokens)
            .map(|t| (0..d).map(|j| (0..d).map(|i| x[t * d + i] * w[i * d + j]).sum()).collect())
            .collect()
    };
    let q = proj("query", prev);
    let k = proj("key", cur);
    let v = proj("value", cur);
    let mut attended = vec![0.0; cur.len()];
    for t in 0..tokens {
        let scores: Vec<f64> =
            (0..tokens).map(|u| (0..d).map(|i| q[t][i] * k[u][i]).sum::<f64>() / (d as f64).sqrt()).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for u in 0..tokens {
            for i in 0..d {
                attended[t * d + i] += e[u] / z * v[u][i];
            }
        }
    }
    let o = param(store, &format!("att.b{block}.output"));
    let mut out = cur.to_vec();
    for t in 0..tokens {
        for j in 0..d {
            out[t * d + j] += (0..d).map(|i| attended[t * d + i] * o[i * d + j]).sum::<f64>();
        }
    }
    out
}
