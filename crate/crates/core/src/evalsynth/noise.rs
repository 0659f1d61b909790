/// Smooth 2-D lattice noise: hashed values on an integer grid of spacing
/// `scale`, blended with a quintic fade. Output lies in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct ValueNoise {
    seed: u64,
    inv_scale: f64,
}

impl ValueNoise {
    pub fn new(seed: u64, scale: f64) -> Self {
        Self {
            seed,
            inv_scale: 1.0 / scale.max(1e-9),
        }
    }

    #[inline]
    fn lattice(&self, ix: i64, iy: i64) -> f64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        h ^= (ix as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = h.rotate_left(31).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= (iy as u64).wrapping_mul(0xd6e8_feb8_6659_fd93);
        h ^= h >> 32;
        h = h.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 29;
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (sx, sy) = (x * self.inv_scale, y * self.inv_scale);
        let (fx, fy) = (sx.floor(), sy.floor());
        let (ix, iy) = (fx as i64, fy as i64);
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (tx, ty) = (fade(sx - fx), fade(sy - fy));
        let a = self.lattice(ix, iy);
        let b = self.lattice(ix + 1, iy);
        let c = self.lattice(ix, iy + 1);
        let d = self.lattice(ix + 1, iy + 1);
        let top = a + tx * (b - a);
        let bottom = c + tx * (d - c);
        top + ty * (bottom - top)
    }
}
