use super::params::DemosaicKind;
use crate::adcore::{stencil, Real, StencilKernel, Tap, Tensor};
use std::sync::{Arc, OnceLock};

// Phases of an RGGB tile: 0 = R, 1 = G on a red row, 2 = G on a blue row, 3 = B.

fn cross(w: f64) -> Vec<Tap> {
    vec![(-1, 0, w), (1, 0, w), (0, -1, w), (0, 1, w)]
}

fn diag(w: f64) -> Vec<Tap> {
    vec![(-1, -1, w), (-1, 1, w), (1, -1, w), (1, 1, w)]
}

fn horiz(w: f64) -> Vec<Tap> {
    vec![(0, -1, w), (0, 1, w)]
}

fn vert(w: f64) -> Vec<Tap> {
    vec![(-1, 0, w), (1, 0, w)]
}

fn center() -> Vec<Tap> {
    vec![(0, 0, 1.0)]
}

fn bilinear() -> StencilKernel {
    StencilKernel {
        channels: 3,
        taps: [
            vec![center(), cross(0.25), diag(0.25)],
            vec![horiz(0.5), center(), vert(0.5)],
            vec![vert(0.5), center(), horiz(0.5)],
            vec![diag(0.25), cross(0.25), center()],
        ],
    }
}

fn scaled(taps: &[(isize, isize, f64)]) -> Vec<Tap> {
    taps.iter().map(|&(dy, dx, w)| (dy, dx, w / 8.0)).collect()
}

// Malvar-He-Cutler 5×5 filters, weights in eighths.
fn gradient_corrected() -> StencilKernel {
    let g_at_rb = scaled(&[
        (0, 0, 4.0),
        (-1, 0, 2.0),
        (1, 0, 2.0),
        (0, -1, 2.0),
        (0, 1, 2.0),
        (-2, 0, -1.0),
        (2, 0, -1.0),
        (0, -2, -1.0),
        (0, 2, -1.0),
    ]);
    // Colour whose samples sit left/right of a green site.
    let along_row = scaled(&[
        (0, 0, 5.0),
        (0, -1, 4.0),
        (0, 1, 4.0),
        (0, -2, -1.0),
        (0, 2, -1.0),
        (-1, -1, -1.0),
        (-1, 1, -1.0),
        (1, -1, -1.0),
        (1, 1, -1.0),
        (-2, 0, 0.5),
        (2, 0, 0.5),
    ]);
    let along_col: Vec<Tap> = along_row.iter().map(|&(dy, dx, w)| (dx, dy, w)).collect();
    let opposite = scaled(&[
        (0, 0, 6.0),
        (-1, -1, 2.0),
        (-1, 1, 2.0),
        (1, -1, 2.0),
        (1, 1, 2.0),
        (-2, 0, -1.5),
        (2, 0, -1.5),
        (0, -2, -1.5),
        (0, 2, -1.5),
    ]);
    StencilKernel {
        channels: 3,
        taps: [
            vec![center(), g_at_rb.clone(), opposite.clone()],
            vec![along_row.clone(), center(), along_col.clone()],
            vec![along_col, center(), along_row],
            vec![opposite, g_at_rb, center()],
        ],
    }
}

pub fn kernel(kind: DemosaicKind) -> Arc<StencilKernel> {
    static BILINEAR: OnceLock<Arc<StencilKernel>> = OnceLock::new();
    static GC: OnceLock<Arc<StencilKernel>> = OnceLock::new();
    match kind {
        DemosaicKind::Bilinear => BILINEAR.get_or_init(|| Arc::new(bilinear())).clone(),
        DemosaicKind::GradientCorrected => GC.get_or_init(|| Arc::new(gradient_corrected())).clone(),
    }
}

pub(crate) fn apply<'t, T: Real>(mosaic: Tensor<'t, T>, kind: DemosaicKind) -> crate::Result<Tensor<'t, T>> {
    stencil(mosaic, kernel(kind))
}
