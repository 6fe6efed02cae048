use rand::Rng;

/// Mirrors every row of a planar image `w` pixels wide.
pub fn hflip(image: &mut [f32], w: usize) {
    for row in image.chunks_mut(w) {
        row.reverse();
    }
}

/// Rotates every plane by `degrees` (counter-clockwise, about the image
/// centre) with bilinear sampling; points falling outside are zero.
pub fn rotate(image: &[f32], c: usize, h: usize, w: usize, degrees: f64) -> Vec<f32> {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            // inverse map: output pixel → source coordinates
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let plane = &image[ch * h * w..(ch + 1) * h * w];
                let at = |yy: isize, xx: isize| -> f32 {
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        0.0
                    } else {
                        plane[yy as usize * w + xx as usize]
                    }
                };
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                out[ch * h * w + y * w + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub hflip: bool,
    /// Rotation drawn uniformly from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { hflip: true, rotation_deg: 10.0 }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig { hflip: false, rotation_deg: 0.0 }
    }

    /// Random flip (probability ½) then random rotation, in place.
    pub fn apply<R: Rng + ?Sized>(&self, image: &mut [f32], c: usize, h: usize, w: usize, rng: &mut R) {
        if self.hflip && rng.random_bool(0.5) {
            hflip(image, w);
        }
        if self.rotation_deg > 0.0 {
            let angle = rng.random_range(-self.rotation_deg..=self.rotation_deg);
            let rotated = rotate(image, c, h, w, angle);
            image.copy_from_slice(&rotated);
        }
    }
}
