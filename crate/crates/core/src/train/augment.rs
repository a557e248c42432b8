use crate::array::Array;
use crate::error::{Error, Result};
use crate::rawmodel::{Bayer, RawImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flip {
    pub horizontal: bool,
    pub vertical: bool,
}

impl Flip {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::draw(&mut rng)
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            horizontal: rng.random(),
            vertical: rng.random(),
        }
    }
}

/// Mirror index `i` in 2-pixel strides: whole 2×2 tiles swap places while
/// each tile keeps its internal order, so a Bayer phase is preserved.
fn stride_mirror(i: usize, n: usize) -> usize {
    n - 2 - (i - i % 2) + i % 2
}

/// Flip the trailing H×W axes of an array in 2-pixel strides.
pub fn flip_mosaic<T: Copy>(a: &Array<T>, flip: Flip) -> Result<Array<T>> {
    let s = a.shape();
    if s.len() < 2 {
        return Err(Error::Dimension(format!("cannot flip shape {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!("mosaic {h}×{w} must have even sides")));
    }
    let hw = h * w;
    let d = a.data();
    Array::new(
        s.to_vec(),
        (0..a.len())
            .map(|i| {
                let (plane, y, x) = (i / hw, (i % hw) / w, i % w);
                let sy = if flip.vertical { stride_mirror(y, h) } else { y };
                let sx = if flip.horizontal { stride_mirror(x, w) } else { x };
                d[plane * hw + sy * w + sx]
            })
            .collect(),
    )
}

/// Seeded random flips of an RGGB patch; the result is still RGGB.
pub fn augment(patch: &RawImage, seed: u64) -> Result<RawImage> {
    if patch.bayer() != Bayer::Rggb {
        return Err(Error::Layout(format!("augmentation expects an RGGB patch, got {}", patch.bayer())));
    }
    let plane = flip_mosaic(&patch.plane, Flip::from_seed(seed))?;
    RawImage::new(plane, patch.params.clone())
}
