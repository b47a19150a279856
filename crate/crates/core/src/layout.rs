//! Precomputed index maps between image, patch, and cell layouts.
//!
//! Images are stored channel-major as [3, H, W]; features cell-major as
//! [n, h*w] with h = H/8, w = W/8. All per-patch linear maps and
//! up/down-sampling steps are expressed as gathers over these maps so
//! the same permutations serve both forward evaluation and backprop.

use std::rc::Rc;

pub const PATCH: usize = 8;
/// Flattened 8x8x3 patch length.
pub const PATCH_LEN: usize = PATCH * PATCH * 3;

#[derive(Debug, Clone)]
pub struct Layout {
    pub height: usize,
    pub width: usize,
    /// Downscaled grid height (H/8).
    pub grid_h: usize,
    /// Downscaled grid width (W/8).
    pub grid_w: usize,
    /// [3*H*W] -> [cells, 192]: per-cell flattened patches (c, di, dj).
    pub image_to_patches: Rc<Vec<usize>>,
    /// [cells, 192] -> [3*H*W]: inverse of `image_to_patches`.
    pub patches_to_image: Rc<Vec<usize>>,
    /// [cells] -> [3*H*W]: broadcast one value per cell over its pixels
    /// and the three channels.
    pub cell_to_image: Rc<Vec<usize>>,
    /// [cells, 2] -> two [3*H*W]-shaped maps selecting channel 0/1.
    pub cell_pair_to_image: [Rc<Vec<usize>>; 2],
    /// Four [3*(H/2)*(W/2)] maps whose average is a 2x2 mean pool.
    pub pool_quads: [Rc<Vec<usize>>; 4],
}

impl Layout {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height % PATCH == 0 && width % PATCH == 0, "H, W must be divisible by 8");
        let grid_h = height / PATCH;
        let grid_w = width / PATCH;
        let cells = grid_h * grid_w;
        let pix = |c: usize, i: usize, j: usize| c * height * width + i * width + j;

        let mut image_to_patches = vec![0usize; cells * PATCH_LEN];
        for u in 0..grid_h {
            for v in 0..grid_w {
                let cell = u * grid_w + v;
                let mut k = 0;
                for c in 0..3 {
                    for di in 0..PATCH {
                        for dj in 0..PATCH {
                            image_to_patches[cell * PATCH_LEN + k] =
                                pix(c, u * PATCH + di, v * PATCH + dj);
                            k += 1;
                        }
                    }
                }
            }
        }
        let mut patches_to_image = vec![0usize; 3 * height * width];
        for (patch_idx, &img_idx) in image_to_patches.iter().enumerate() {
            patches_to_image[img_idx] = patch_idx;
        }

        let mut cell_to_image = vec![0usize; 3 * height * width];
        let mut cell_pair_a = vec![0usize; 3 * height * width];
        let mut cell_pair_b = vec![0usize; 3 * height * width];
        for c in 0..3 {
            for i in 0..height {
                for j in 0..width {
                    let cell = (i / PATCH) * grid_w + (j / PATCH);
                    let p = pix(c, i, j);
                    cell_to_image[p] = cell;
                    cell_pair_a[p] = cell * 2;
                    cell_pair_b[p] = cell * 2 + 1;
                }
            }
        }

        let (hh, hw) = (height / 2, width / 2);
        let mut quads: [Vec<usize>; 4] = [
            vec![0; 3 * hh * hw],
            vec![0; 3 * hh * hw],
            vec![0; 3 * hh * hw],
            vec![0; 3 * hh * hw],
        ];
        for c in 0..3 {
            for i in 0..hh {
                for j in 0..hw {
                    let out = c * hh * hw + i * hw + j;
                    quads[0][out] = pix(c, 2 * i, 2 * j);
                    quads[1][out] = pix(c, 2 * i, 2 * j + 1);
                    quads[2][out] = pix(c, 2 * i + 1, 2 * j);
                    quads[3][out] = pix(c, 2 * i + 1, 2 * j + 1);
                }
            }
        }
        let [q0, q1, q2, q3] = quads;

        Self {
            height,
            width,
            grid_h,
            grid_w,
            image_to_patches: Rc::new(image_to_patches),
            patches_to_image: Rc::new(patches_to_image),
            cell_to_image: Rc::new(cell_to_image),
            cell_pair_to_image: [Rc::new(cell_pair_a), Rc::new(cell_pair_b)],
            pool_quads: [Rc::new(q0), Rc::new(q1), Rc::new(q2), Rc::new(q3)],
        }
    }

    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// [channels, h, w] -> [cells, channels*64] patch gather for an
    /// arbitrary channel count (the 3-channel case is `image_to_patches`).
    pub fn patch_map(channels: usize, height: usize, width: usize) -> Rc<Vec<usize>> {
        assert!(height % PATCH == 0 && width % PATCH == 0);
        let (gh, gw) = (height / PATCH, width / PATCH);
        let mut idx = Vec::with_capacity(gh * gw * channels * PATCH * PATCH);
        for u in 0..gh {
            for v in 0..gw {
                for c in 0..channels {
                    for di in 0..PATCH {
                        for dj in 0..PATCH {
                            idx.push(c * height * width + (u * PATCH + di) * width + v * PATCH + dj);
                        }
                    }
                }
            }
        }
        Rc::new(idx)
    }

    /// [r, c] -> [c, r] transpose as a gather map.
    pub fn transpose_map(rows: usize, cols: usize) -> Rc<Vec<usize>> {
        let mut idx = vec![0usize; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                idx[j * rows + i] = i * cols + j;
            }
        }
        Rc::new(idx)
    }

    /// Broadcast map repeating a length-`len` vector across `reps` rows.
    pub fn row_broadcast_map(reps: usize, len: usize) -> Rc<Vec<usize>> {
        Rc::new((0..reps * len).map(|i| i % len).collect())
    }
}
