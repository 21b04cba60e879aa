//! Parameter generation: the smooth static trajectory whose static, delta
//! and delta-delta values best match predicted means under fixed variances.

use super::acoustic::{AcousticLayout, Trajectories};
use crate::error::{Error, Result};

pub const DELTA_WINDOW: [f64; 3] = [-0.5, 0.0, 0.5];
pub const ACCEL_WINDOW: [f64; 3] = [1.0, -2.0, 1.0];
const BAND: usize = 2;

/// Window taps at frame `t` over `len` frames, edges replicated, equal
/// indices merged.
fn taps(window: &[f64; 3], t: usize, len: usize) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
    for (k, &c) in window.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let idx = (t + k).saturating_sub(1).min(len - 1);
        match out.iter_mut().find(|(i, _)| *i == idx) {
            Some(slot) => slot.1 += c,
            None => out.push((idx, c)),
        }
    }
    out
}

fn apply_window(window: &[f64; 3], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| taps(window, t, x.len()).iter().map(|&(i, c)| c * x[i]).sum())
        .collect()
}

/// Delta and delta-delta of `x` with replicated edges.
pub fn dynamic_features(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (apply_window(&DELTA_WINDOW, x), apply_window(&ACCEL_WINDOW, x))
}

/// Solves one stream. `means` holds the static, delta and delta-delta
/// means per frame; `variances` the matching global variances.
pub fn mlpg_stream(means: [&[f64]; 3], variances: [f64; 3]) -> Result<Vec<f64>> {
    let len = means[0].len();
    if means[1].len() != len || means[2].len() != len {
        return Err(Error::invalid("static and dynamic means differ in length"));
    }
    if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("parameter generation needs positive finite variances"));
    }
    if means.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("parameter generation means"));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let windows: [&[f64; 3]; 3] = [&[0.0, 1.0, 0.0], &DELTA_WINDOW, &ACCEL_WINDOW];

    // lower band: band[i][k] = A(i, i - k)
    let mut band = vec![[0.0; BAND + 1]; len];
    let mut rhs = vec![0.0; len];
    for (s, window) in windows.iter().enumerate() {
        let precision = 1.0 / variances[s];
        for (t, &mean) in means[s].iter().enumerate().take(len) {
            let tp = taps(window, t, len);
            for &(i, ci) in &tp {
                rhs[i] += precision * ci * mean;
                for &(j, cj) in &tp {
                    if i >= j {
                        band[i][i - j] += precision * ci * cj;
                    }
                }
            }
        }
    }

    // banded Cholesky, in place
    for i in 0..len {
        for k in i.saturating_sub(BAND)..=i {
            let mut s = band[i][i - k];
            for m in i.saturating_sub(BAND).max(k.saturating_sub(BAND))..k {
                s -= band[i][i - m] * band[k][k - m];
            }
            if k == i {
                if s.is_nan() || s <= 0.0 {
                    return Err(Error::Training("parameter generation system is not positive definite".into()));
                }
                band[i][0] = s.sqrt();
            } else {
                band[i][i - k] = s / band[k][0];
            }
        }
    }
    let mut y = rhs;
    for i in 0..len {
        let mut s = y[i];
        for m in i.saturating_sub(BAND)..i {
            s -= band[i][i - m] * y[m];
        }
        y[i] = s / band[i][0];
    }
    for i in (0..len).rev() {
        let mut s = y[i];
        for m in i + 1..(i + BAND + 1).min(len) {
            s -= band[m][m - i] * y[m];
        }
        y[i] = s / band[i][0];
    }
    Ok(y)
}

/// Static trajectories for every continuous stream of `seq`; the voicing
/// stream is thresholded at 0.5.
pub fn mlpg_generate(seq: &[Vec<f64>], variances: &[f64], layout: &AcousticLayout) -> Result<Trajectories> {
    let dim = layout.dim();
    if variances.len() != dim {
        return Err(Error::Dimension { expected: dim, got: variances.len() });
    }
    if let Some(row) = seq.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension { expected: dim, got: row.len() });
    }
    let s_dim = layout.static_dim();
    let mut statics = vec![vec![0.0; s_dim]; seq.len()];
    for s in 0..s_dim {
        let cols: Vec<Vec<f64>> = (0..3).map(|k| seq.iter().map(|r| r[k * s_dim + s]).collect()).collect();
        let vars = [variances[s], variances[s_dim + s], variances[2 * s_dim + s]];
        let traj = mlpg_stream([&cols[0], &cols[1], &cols[2]], vars)?;
        for (row, v) in statics.iter_mut().zip(traj) {
            row[s] = v;
        }
    }
    let voiced = seq.iter().map(|r| r[layout.vuv_index()] >= 0.5).collect();
    Ok(Trajectories::from_statics(&statics, voiced, layout))
}
