//! Straightforward scalar implementations used as test oracles. They share no
//! code with the library.

#![allow(dead_code)]

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x · W[:, col] + b[col]` for a row-major `W` with `cols` columns.
fn affine(x: &[f64], w: &[f64], b: &[f64], cols: usize, col: usize) -> f64 {
    let mut s = b[col];
    for (i, &xi) in x.iter().enumerate() {
        s += xi * w[i * cols + col];
    }
    s
}

fn recur(h: &[f64], u: &[f64], cols: usize, col: usize) -> f64 {
    h.iter()
        .enumerate()
        .map(|(i, &hi)| hi * u[i * cols + col])
        .sum()
}

/// One LSTM step for a single example. Gate blocks `[i, f, g, o]`.
pub fn lstm(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    w: &[f64],
    u: &[f64],
    b: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let cols = 4 * n;
    let pre = |col: usize| affine(x, w, b, cols, col) + recur(h, u, cols, col);
    let mut h_new = vec![0.0; n];
    let mut c_new = vec![0.0; n];
    for j in 0..n {
        let i = sigmoid(pre(j));
        let f = sigmoid(pre(n + j));
        let g = pre(2 * n + j).tanh();
        let o = sigmoid(pre(3 * n + j));
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    (h_new, c_new)
}

/// One GRU step for a single example. Gate blocks `[z, r, n]`; the reset
/// gate multiplies the previous state before the recurrent product.
pub fn gru(x: &[f64], h: &[f64], w: &[f64], u: &[f64], b: &[f64]) -> Vec<f64> {
    let n = h.len();
    let cols = 3 * n;
    let z: Vec<f64> = (0..n)
        .map(|j| sigmoid(affine(x, w, b, cols, j) + recur(h, u, cols, j)))
        .collect();
    let r: Vec<f64> = (0..n)
        .map(|j| sigmoid(affine(x, w, b, cols, n + j) + recur(h, u, cols, n + j)))
        .collect();
    let rh: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a * b).collect();
    (0..n)
        .map(|j| {
            let cand = (affine(x, w, b, cols, 2 * n + j) + recur(&rh, u, cols, 2 * n + j)).tanh();
            (1.0 - z[j]) * h[j] + z[j] * cand
        })
        .collect()
}

/// Sliding-window "same" convolution with relu for one sequence `x[t][d]`.
/// Filter `w` is `[k·d_in × channels]`, window row `j` uses rows `j·d_in..`.
pub fn conv_same(x: &[Vec<f64>], k: usize, w: &[f64], b: &[f64], channels: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let d_in = x[0].len();
    let left = (k - 1) / 2;
    (0..n)
        .map(|t| {
            (0..channels)
                .map(|c| {
                    let mut s = b[c];
                    for j in 0..k {
                        let pos = t as isize + j as isize - left as isize;
                        if pos < 0 || pos >= n as isize {
                            continue;
                        }
                        for d in 0..d_in {
                            s += x[pos as usize][d] * w[(j * d_in + d) * channels + c];
                        }
                    }
                    s.max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Pairwise AUC: P(score_pos > score_neg) + ½ P(tie), as an exact ratio
/// `(2·wins + ties) / (2·P·N)`.
pub fn auc_pairs(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let mut twice = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &ti) in truth.iter().enumerate() {
        if ti {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    (p > 0 && n > 0).then(|| twice as f64 / (2 * p * n) as f64)
}
