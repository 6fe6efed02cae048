/// Bilinear resampling of one `h × w` plane to `oh × ow`, sampling at pixel
/// centres (`align_corners = false`) with edge clamping.
pub fn bilinear(plane: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(oh * ow);
    let axis = |o: usize, out_len: usize, in_len: usize| {
        let src = ((o as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5).max(0.0);
        let lo = (src.floor() as usize).min(in_len - 1);
        let hi = (lo + 1).min(in_len - 1);
        (lo, hi, (src - lo as f64) as f32)
    };
    for oy in 0..oh {
        let (y0, y1, fy) = axis(oy, oh, h);
        for ox in 0..ow {
            let (x0, x1, fx) = axis(ox, ow, w);
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Resizes every plane of a `[C, H, W]` buffer.
pub fn bilinear_planes(data: &[f32], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    if (h, w) == (oh, ow) {
        return data.to_vec();
    }
    data.chunks(h * w).take(c).flat_map(|p| bilinear(p, h, w, oh, ow)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let out = bilinear(&[0.25; 12], 3, 4, 7, 5);
        assert!(out.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn upsampling_two_pixels() {
        // centres of 4 output pixels map to -0.25, 0.25, 0.75, 1.25
        let out = bilinear(&[0.0, 1.0], 1, 2, 1, 4);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
