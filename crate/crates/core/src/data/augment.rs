//! The eight axis-aligned symmetries of a square image.

use rand::Rng;

/// Horizontal flip, then vertical flip, then `rot90` quarter turns
/// counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Transform {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: u8,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        hflip: false,
        vflip: false,
        rot90: 0,
    };

    /// Each flip with probability 0.5, rotation uniform over `{0, 1, 2, 3}`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Transform {
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            rot90: rng.random_range(0..4u8),
        }
    }

    /// All 16 parameter combinations (covering the 8 distinct symmetries twice).
    pub fn all() -> Vec<Transform> {
        let mut out = Vec::with_capacity(16);
        for hflip in [false, true] {
            for vflip in [false, true] {
                for rot90 in 0..4 {
                    out.push(Transform { hflip, vflip, rot90 });
                }
            }
        }
        out
    }

    /// Where the pixel at `(row, col)` lands in a `size × size` image.
    pub fn map_coord(&self, (mut r, mut c): (usize, usize), size: usize) -> (usize, usize) {
        let last = size - 1;
        if self.hflip {
            c = last - c;
        }
        if self.vflip {
            r = last - r;
        }
        for _ in 0..self.rot90 % 4 {
            (r, c) = (last - c, r);
        }
        (r, c)
    }

    /// Applies the transform to a row-major `size × size` plane.
    pub fn apply<V: Copy + Default>(&self, plane: &[V], size: usize) -> Vec<V> {
        assert_eq!(plane.len(), size * size, "plane is not size × size");
        if *self == Transform::IDENTITY {
            return plane.to_vec();
        }
        let mut out = vec![V::default(); plane.len()];
        for r in 0..size {
            for c in 0..size {
                let (nr, nc) = self.map_coord((r, c), size);
                out[nr * size + nc] = plane[r * size + c];
            }
        }
        out
    }
}
