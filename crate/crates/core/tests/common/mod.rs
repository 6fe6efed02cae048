//! Independent oracles shared by the integration tests. Nothing here calls
//! into the operators it is used to check.
#![allow(dead_code)]

pub mod brute;
pub mod toy;

/// Mean of `plane[r0..r1, c0..c1]`, summed with explicit loops.
pub fn block_mean(plane: &[f64], width: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in r0..r1 {
        for c in c0..c1 {
            total += plane[r * width + c];
            count += 1;
        }
    }
    total / count as f64
}

/// Brute-force adaptive average pooling of one `h × w` plane onto a `k × k`
/// grid. Bin `i` spans `[floor(i·h/k), ceil((i+1)·h/k))`, computed with
/// floating-point floor/ceil rather than integer arithmetic.
pub fn pool_plane(plane: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let bounds = |i: usize, len: usize| {
        let lo = ((i * len) as f64 / k as f64).floor() as usize;
        let hi = (((i + 1) * len) as f64 / k as f64).ceil() as usize;
        (lo, hi)
    };
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let (r0, r1) = bounds(i, h);
            let (c0, c1) = bounds(j, w);
            out.push(block_mean(plane, w, r0, r1, c0, c1));
        }
    }
    out
}

/// Pyramid context of `[n, c, h, w]` data as nested `[n][c][f]` vectors.
pub fn pyramid(data: &[f64], n: usize, c: usize, h: usize, w: usize, sizes: &[usize]) -> Vec<Vec<Vec<f64>>> {
    (0..n)
        .map(|b| {
            (0..c)
                .map(|ch| {
                    let start = (b * c + ch) * h * w;
                    let plane = &data[start..start + h * w];
                    sizes.iter().flat_map(|&k| pool_plane(plane, h, w, k)).collect()
                })
                .collect()
        })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Training-mode batch norm of `z[n][c]` over the batch axis, no affine.
pub fn batch_standardize(z: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    let n = z.len();
    let c = z[0].len();
    let mut out = vec![vec![0.0; c]; n];
    for ch in 0..c {
        let mean = (0..n).map(|b| z[b][ch]).sum::<f64>() / n as f64;
        let var = (0..n).map(|b| (z[b][ch] - mean).powi(2)).sum::<f64>() / n as f64;
        for b in 0..n {
            out[b][ch] = (z[b][ch] - mean) / (var + eps).sqrt();
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bilinear resampling at pixel centres with edge clamping, one plane.
pub fn upsample(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |o: usize, out_len: usize, in_len: usize| {
        let s = ((o as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(in_len - 1);
        let i1 = if i0 + 1 < in_len { i0 + 1 } else { i0 };
        (i0, i1, s - i0 as f64)
    };
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        let (y0, y1, ty) = coord(y, oh, h);
        for x in 0..ow {
            let (x0, x1, tx) = coord(x, ow, w);
            let v = |r: usize, c: usize| plane[r * w + c];
            out[y * ow + x] = (1.0 - ty) * ((1.0 - tx) * v(y0, x0) + tx * v(y0, x1))
                + ty * ((1.0 - tx) * v(y1, x0) + tx * v(y1, x1));
        }
    }
    out
}
