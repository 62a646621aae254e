use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Number of region rows and columns the consistency loss pools into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionGrid {
    pub rows: usize,
    pub cols: usize,
}

impl RegionGrid {
    pub const DEFAULT: RegionGrid = RegionGrid::square(4);

    pub const fn square(n: usize) -> Self {
        RegionGrid { rows: n, cols: n }
    }

    pub fn regions(&self) -> usize {
        self.rows * self.cols
    }
}

/// A scalar loss with its gradient w.r.t. the first argument.
#[derive(Clone, Debug)]
pub struct LossGrad<S> {
    pub loss: S,
    pub grad: Tensor<S>,
}

/// Per-pixel channel mean of `|b − a|`, as a `1×H×W` map.
pub fn rgb_diff<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    a.same_shape(b, "rgb_diff")?;
    a.zip_map(b, "rgb_diff", |x, y| (y - x).abs())?.channel_mean()
}

fn bounds(n: usize, parts: usize, i: usize) -> (usize, usize) {
    (i * n / parts, (i + 1) * n / parts)
}

fn check_grid(h: usize, w: usize, grid: RegionGrid) -> Result<()> {
    if grid.rows == 0 || grid.cols == 0 {
        return Err(Error::invalid("l_scf", "grid must be >= 1"));
    }
    if grid.rows > h || grid.cols > w {
        return Err(Error::invalid(
            "l_scf",
            format!("{}x{} grid exceeds {h}x{w} map", grid.rows, grid.cols),
        ));
    }
    Ok(())
}

/// Mean of a single-channel `1×H×W` map over each grid cell, row-major.
pub fn region_means<S: Scalar>(map: &Tensor<S>, grid: RegionGrid) -> Result<Vec<S>> {
    let (c, h, w) = map.chw()?;
    if c != 1 {
        return Err(Error::Shape {
            op: "region_means",
            axis: "channels",
            expected: 1,
            found: c,
        });
    }
    check_grid(h, w, grid)?;
    let d = map.data();
    let mut out = Vec::with_capacity(grid.regions());
    for r in 0..grid.rows {
        let (y0, y1) = bounds(h, grid.rows, r);
        for q in 0..grid.cols {
            let (x0, x1) = bounds(w, grid.cols, q);
            let sum: S = (y0..y1).flat_map(|y| d[y * w + x0..y * w + x1].iter().copied()).sum();
            out.push(sum / S::from_usize_lossy((y1 - y0) * (x1 - x0)));
        }
    }
    Ok(out)
}

fn sign<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        S::one()
    } else if v < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

/// Spatial consistency on region values laid out `rows × cols`:
/// `(1/K) Σ_i Σ_{j ∈ 8-nbhd(i)} (|Y_i − Y_j| − |P_i − P_j|)²`.
/// Returns the loss and its gradient w.r.t. the `Y` region values.
pub fn scf_on_regions<S: Scalar>(y: &[S], p: &[S], rows: usize, cols: usize) -> (S, Vec<S>) {
    let k = S::from_usize_lossy(rows * cols);
    let two = S::lit(2.0);
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); y.len()];
    for r in 0..rows {
        for q in 0..cols {
            let i = r * cols + q;
            for dr in -1isize..=1 {
                for dq in -1isize..=1 {
                    if dr == 0 && dq == 0 {
                        continue;
                    }
                    let (nr, nq) = (r as isize + dr, q as isize + dq);
                    if nr < 0 || nq < 0 || nr >= rows as isize || nq >= cols as isize {
                        continue;
                    }
                    let j = nr as usize * cols + nq as usize;
                    let dy = y[i] - y[j];
                    let d = dy.abs() - (p[i] - p[j]).abs();
                    loss = loss + d * d;
                    let g = two * d * sign(dy) / k;
                    grad[i] = grad[i] + g;
                    grad[j] = grad[j] - g;
                }
            }
        }
    }
    (loss / k, grad)
}

/// Spatial-consistency loss between two single-channel maps, pooled onto
/// `grid`; gradient is w.r.t. `y` at pixel resolution.
pub fn l_scf<S: Scalar>(y: &Tensor<S>, p: &Tensor<S>, grid: RegionGrid) -> Result<LossGrad<S>> {
    y.same_shape(p, "l_scf")?;
    let (_, h, w) = y.chw()?;
    let yr = region_means(y, grid)?;
    let pr = region_means(p, grid)?;
    let (loss, gr) = scf_on_regions(&yr, &pr, grid.rows, grid.cols);
    let mut grad = vec![S::zero(); h * w];
    for r in 0..grid.rows {
        let (y0, y1) = bounds(h, grid.rows, r);
        for q in 0..grid.cols {
            let (x0, x1) = bounds(w, grid.cols, q);
            let share = gr[r * grid.cols + q] / S::from_usize_lossy((y1 - y0) * (x1 - x0));
            for yy in y0..y1 {
                grad[yy * w + x0..yy * w + x1].iter_mut().for_each(|g| *g = share);
            }
        }
    }
    Ok(LossGrad {
        loss,
        grad: Tensor::from_parts(vec![1, h, w], grad),
    })
}

/// Temporal-consistency loss between an enhanced `T×C×H×W` sequence and its
/// input: the mean over consecutive pairs of `l_scf` applied to the two RGB
/// differences. Gradient is w.r.t. `enhanced`.
pub fn l_tc<S: Scalar>(enhanced: &Tensor<S>, input: &Tensor<S>, grid: RegionGrid) -> Result<LossGrad<S>> {
    enhanced.same_shape(input, "l_tc")?;
    let (t, c, h, w) = enhanced.tchw()?;
    if t < 2 {
        return Err(Error::invalid("l_tc", format!("need T >= 2 frames, got {t}")));
    }
    let pairs = S::from_usize_lossy(t - 1);
    let inv_c = S::one() / S::from_usize_lossy(c);
    let n = c * h * w;
    let e = enhanced.data();
    let mut grad = vec![S::zero(); e.len()];
    let mut total = S::zero();
    for i in 0..t - 1 {
        let dy = rgb_diff(&enhanced.frame(i), &enhanced.frame(i + 1))?;
        let di = rgb_diff(&input.frame(i), &input.frame(i + 1))?;
        let term = l_scf(&dy, &di, grid)?;
        total = total + term.loss;
        for ch in 0..c {
            for px in 0..h * w {
                let (a, b) = (i * n + ch * h * w + px, (i + 1) * n + ch * h * w + px);
                let g = term.grad.data()[px] / pairs * inv_c * sign(e[b] - e[a]);
                grad[b] = grad[b] + g;
                grad[a] = grad[a] - g;
            }
        }
    }
    Ok(LossGrad {
        loss: total / pairs,
        grad: Tensor::from_parts(enhanced.shape().to_vec(), grad),
    })
}
