use super::AdapterError;
use crate::tokens::GridCoords;

fn bin(i: usize, extent: usize, g: usize) -> (usize, usize) {
    (i * extent / g, (i + 1) * extent / g)
}

/// Adaptive average pooling of an `h x w` grid of `d`-dim tokens (row-major)
/// onto `g x g` cells. Cell `(i, j)` averages rows `[i*h/g, (i+1)*h/g)` and
/// columns `[j*w/g, (j+1)*w/g)`, so bins never overlap.
pub fn adaptive_avg_pool(
    values: &[f32],
    h: usize,
    w: usize,
    d: usize,
    g: usize,
) -> Result<(Vec<f32>, GridCoords), AdapterError> {
    assert_eq!(values.len(), h * w * d, "grid is not {h}x{w}x{d}");
    if g == 0 || g > h || g > w {
        return Err(AdapterError::PoolTooLarge { h, w, g });
    }
    let mut out = vec![0f32; g * g * d];
    let mut acc = vec![0f64; d];
    for i in 0..g {
        let (r0, r1) = bin(i, h, g);
        for j in 0..g {
            let (c0, c1) = bin(j, w, g);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for r in r0..r1 {
                for c in c0..c1 {
                    let token = &values[(r * w + c) * d..(r * w + c + 1) * d];
                    for (a, &v) in acc.iter_mut().zip(token) {
                        *a += v as f64;
                    }
                }
            }
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            let cell = &mut out[(i * g + j) * d..(i * g + j + 1) * d];
            for (o, a) in cell.iter_mut().zip(&acc) {
                *o = (a / count) as f32;
            }
        }
    }
    Ok((out, GridCoords::full(g, g)))
}
