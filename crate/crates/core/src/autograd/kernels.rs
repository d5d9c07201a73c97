//! Forward and backward kernels shared by the recording tape and the
//! inference evaluator. Both paths call exactly these functions, so a value
//! computed under a tape is bitwise equal to the one computed without.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Validates conv operands and returns `(cout, cin, kh, kw)`.
fn conv_dims(x: Shape, w: Shape, bias: Option<Shape>) -> Result<(usize, usize, usize, usize)> {
    let [cout, cin, kh, kw] = w.dims();
    if cin != x.c() {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: x,
            right: w,
        });
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::invalid(
            "conv2d",
            format!("kernel {w} must have odd spatial size"),
        ));
    }
    if let Some(b) = bias {
        if b != Shape::new(1, cout, 1, 1) {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                left: w,
                right: b,
            });
        }
    }
    Ok((cout, cin, kh, kw))
}

/// Reorders `[Cout, Cin, kh, kw]` into a row-major `[Cout, kh*kw*Cin]`
/// matrix so that the reduction runs kernel-row, kernel-col, in-channel.
fn weight_matrix(w: &Tensor) -> Vec<f32> {
    let [cout, cin, kh, kw] = w.shape().dims();
    let k = cin * kh * kw;
    let mut m = vec![0.0; cout * k];
    let src = w.data();
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let col = (ky * kw + kx) * cin + ci;
                    m[co * k + col] = src[((co * cin + ci) * kh + ky) * kw + kx];
                }
            }
        }
    }
    m
}

fn weight_from_matrix(m: &[f32], shape: Shape) -> Tensor {
    let [cout, cin, kh, kw] = shape.dims();
    let k = cin * kh * kw;
    let mut w = Tensor::zeros(shape);
    let dst = w.data_mut();
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let col = (ky * kw + kx) * cin + ci;
                    dst[((co * cin + ci) * kh + ky) * kw + kx] = m[co * k + col];
                }
            }
        }
    }
    w
}

/// Unfolds one `[Cin, H, W]` image into a `[kh*kw*Cin, H*W]` column matrix
/// with zero padding.
fn im2col(img: &[f32], cin: usize, h: usize, w: usize, kh: usize, kw: usize, cols: &mut [f32]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for ky in 0..kh {
        for kx in 0..kw {
            for ci in 0..cin {
                let row = &mut cols[((ky * kw + kx) * cin + ci) * hw..][..hw];
                let plane = &img[ci * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let shift = kx as isize - pw as isize;
                    copy_shifted(src, out, shift);
                }
            }
        }
    }
}

/// `out[x] = src[x + shift]`, zero where out of range.
fn copy_shifted(src: &[f32], out: &mut [f32], shift: isize) {
    let w = out.len() as isize;
    let lo = (-shift).clamp(0, w) as usize;
    let hi = (w - shift).clamp(0, w) as usize;
    out[..lo].fill(0.0);
    out[hi..].fill(0.0);
    if lo < hi {
        let s0 = (lo as isize + shift) as usize;
        out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
    }
}

/// Folds a column matrix back onto a `[Cin, H, W]` gradient image.
fn col2im(cols: &[f32], cin: usize, h: usize, w: usize, kh: usize, kw: usize, img: &mut [f32]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * w;
    for ky in 0..kh {
        for kx in 0..kw {
            for ci in 0..cin {
                let row = &cols[((ky * kw + kx) * cin + ci) * hw..][..hw];
                let plane = &mut img[ci * hw..][..hw];
                let shift = kx as isize - pw as isize;
                for y in 0..h {
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..(y + 1) * w];
                    let lo = (-shift).clamp(0, w as isize) as usize;
                    let hi = (w as isize - shift).clamp(0, w as isize) as usize;
                    for x in lo..hi {
                        dst[(x as isize + shift) as usize] += src[x];
                    }
                }
            }
        }
    }
}

/// `c = a · b` for row-major matrices `a: [m, k]`, `b: [k, n]`, with explicit
/// strides so transposed views need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass buffers sized for the given dims and strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Same-size, stride-1 cross-correlation with zero padding.
pub fn conv2d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (cout, cin, kh, kw) = conv_dims(x.shape(), w.shape(), bias.map(|b| b.shape()))?;
    let (n, h, wd) = (x.shape().n(), x.shape().h(), x.shape().w());
    let hw = h * wd;
    let k = cin * kh * kw;
    let wm = weight_matrix(w);
    let mut out = Tensor::zeros(Shape::new(n, cout, h, wd));
    let x_per = cin * hw;
    let y_per = cout * hw;
    out.data_mut()
        .par_chunks_mut(y_per.max(1))
        .zip(x.data().par_chunks(x_per.max(1)))
        .for_each(|(y, img)| {
            if let Some(b) = bias {
                for (co, plane) in y.chunks_mut(hw).enumerate() {
                    plane.fill(b.data()[co]);
                }
            }
            let mut cols = vec![0.0; k * hw];
            im2col(img, cin, h, wd, kh, kw, &mut cols);
            gemm(cout, k, hw, &wm, k as isize, 1, &cols, hw as isize, 1, 1.0, y);
        });
    Ok(out)
}

pub struct ConvGrads {
    pub dx: Option<Tensor>,
    pub dw: Tensor,
    pub db: Option<Tensor>,
}

/// Gradients of [`conv2d`]. Per-image weight gradients are reduced in batch
/// order, so the result does not depend on the worker count.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    with_bias: bool,
    dy: &Tensor,
    need_dx: bool,
) -> Result<ConvGrads> {
    let (cout, cin, kh, kw) = conv_dims(x.shape(), w.shape(), None)?;
    let (n, h, wd) = (x.shape().n(), x.shape().h(), x.shape().w());
    let hw = h * wd;
    let k = cin * kh * kw;
    let wm = weight_matrix(w);
    let x_per = cin * hw;
    let y_per = cout * hw;

    let per_image: Vec<(Vec<f32>, Option<Vec<f32>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let img = &x.data()[i * x_per..][..x_per];
            let g = &dy.data()[i * y_per..][..y_per];
            let mut cols = vec![0.0; k * hw];
            im2col(img, cin, h, wd, kh, kw, &mut cols);
            let mut dwm = vec![0.0; cout * k];
            // dW = dY · colsᵀ
            gemm(cout, hw, k, g, hw as isize, 1, &cols, 1, hw as isize, 0.0, &mut dwm);
            let dx = need_dx.then(|| {
                // dcols = Wᵀ · dY
                gemm(k, cout, hw, &wm, 1, k as isize, g, hw as isize, 1, 0.0, &mut cols);
                let mut dimg = vec![0.0; x_per];
                col2im(&cols, cin, h, wd, kh, kw, &mut dimg);
                dimg
            });
            (dwm, dx)
        })
        .collect();

    let mut dwm = vec![0.0f32; cout * k];
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    for (i, (part, dimg)) in per_image.into_iter().enumerate() {
        for (acc, v) in dwm.iter_mut().zip(&part) {
            *acc += v;
        }
        if let (Some(dx), Some(dimg)) = (dx.as_mut(), dimg) {
            dx.data_mut()[i * x_per..][..x_per].copy_from_slice(&dimg);
        }
    }

    let db = with_bias.then(|| {
        let mut db = Tensor::zeros(Shape::new(1, cout, 1, 1));
        for co in 0..cout {
            let mut s = 0.0f32;
            for i in 0..n {
                s += dy.data()[i * y_per + co * hw..][..hw].iter().sum::<f32>();
            }
            db.data_mut()[co] = s;
        }
        db
    });

    Ok(ConvGrads {
        dx,
        dw: weight_from_matrix(&dwm, w.shape()),
        db,
    })
}

pub fn pow(x: &Tensor, n: u32) -> Result<Tensor> {
    match n {
        0 => Err(Error::invalid(
            "elem_pow",
            "exponent 0 is not a power op; the constant term is the bias",
        )),
        1 => Ok(x.clone()),
        2 => Ok(x.map(|v| v * v)),
        3 => Ok(x.map(|v| v * v * v)),
        _ => Ok(x.map(|v| v.powi(n as i32))),
    }
}

pub fn pow_backward(x: &Tensor, n: u32, dy: &Tensor) -> Tensor {
    let nf = n as f32;
    match n {
        1 => dy.clone(),
        2 => x.zip_map(dy, "pow", |v, g| 2.0 * v * g).unwrap(),
        _ => x
            .zip_map(dy, "pow", |v, g| nf * v.powi(n as i32 - 1) * g)
            .unwrap(),
    }
}

pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.shape().dims();
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::invalid(
            "pixel_shuffle",
            format!("{c} channels not divisible by r² = {}", r * r),
        ));
    }
    let oc = c / (r * r);
    let mut out = Tensor::zeros(Shape::new(n, oc, h * r, w * r));
    let (oh, ow) = (h * r, w * r);
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for co in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let ci = co * r * r + i * r + j;
                    let plane = &src[((b * c + ci) * h) * w..][..h * w];
                    for y in 0..h {
                        let drow = ((b * oc + co) * oh + y * r + i) * ow;
                        for xx in 0..w {
                            dst[drow + xx * r + j] = plane[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse permutation of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.shape().dims();
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::invalid(
            "pixel_unshuffle",
            format!("spatial size {h}x{w} not divisible by {r}"),
        ));
    }
    let (ih, iw) = (h / r, w / r);
    let oc = c * r * r;
    let mut out = Tensor::zeros(Shape::new(n, oc, ih, iw));
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for co in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let ci = co * r * r + i * r + j;
                    let plane = &mut dst[((b * oc + ci) * ih) * iw..][..ih * iw];
                    for y in 0..ih {
                        let srow = ((b * c + co) * h + y * r + i) * w;
                        for xx in 0..iw {
                            plane[y * iw + xx] = src[srow + xx * r + j];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mean absolute difference, accumulated in `f64`.
pub fn mean_abs(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_same_shape(b, "mean_abs")?;
    if a.numel() == 0 {
        return Err(Error::invalid("mean_abs", "empty tensors"));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(s / a.numel() as f64)
}

/// Subgradient of [`mean_abs`] w.r.t. `a`; zero where `a == b`.
pub fn mean_abs_grad(a: &Tensor, b: &Tensor, upstream: f32) -> Tensor {
    let scale = upstream / a.numel() as f32;
    a.zip_map(b, "mean_abs", |x, y| {
        if x > y {
            scale
        } else if x < y {
            -scale
        } else {
            0.0
        }
    })
    .unwrap()
}

pub fn weighted_sum(x: &Tensor, weights: &Tensor) -> Result<f64> {
    x.expect_same_shape(weights, "weighted_sum")?;
    Ok(x
        .data()
        .iter()
        .zip(weights.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct cross-correlation: loops over n, cout, y, x, cin, ky, kx.
    fn naive_conv(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Tensor {
        let [n, cin, h, wd] = x.shape().dims();
        let [cout, _, kh, kw] = w.shape().dims();
        let mut out = Tensor::zeros(Shape::new(n, cout, h, wd));
        for b in 0..n {
            for co in 0..cout {
                for y in 0..h {
                    for xx in 0..wd {
                        let mut acc = bias.map_or(0.0, |t| t.data()[co] as f64);
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = y as isize + ky as isize - (kh / 2) as isize;
                                    let ix = xx as isize + kx as isize - (kw / 2) as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w.at(co, ci, ky, kx) as f64
                                        * x.at(b, ci, iy as usize, ix as usize) as f64;
                                }
                            }
                        }
                        out.set(b, co, y, xx, acc as f32);
                    }
                }
            }
        }
        out
    }

    /// Gradients of `Σ dy·conv(x, w)` by direct accumulation.
    fn naive_conv_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
        let [n, cin, h, wd] = x.shape().dims();
        let [cout, _, kh, kw] = w.shape().dims();
        let mut dx = Tensor::zeros(x.shape());
        let mut dw = Tensor::zeros(w.shape());
        let mut db = Tensor::zeros(Shape::new(1, cout, 1, 1));
        for b in 0..n {
            for co in 0..cout {
                for y in 0..h {
                    for xx in 0..wd {
                        let g = dy.at(b, co, y, xx);
                        db.data_mut()[co] += g;
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = y as isize + ky as isize - (kh / 2) as isize;
                                    let ix = xx as isize + kx as isize - (kw / 2) as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let (iy, ix) = (iy as usize, ix as usize);
                                    let i = dw.index(co, ci, ky, kx);
                                    dw.data_mut()[i] += g * x.at(b, ci, iy, ix);
                                    let j = dx.index(b, ci, iy, ix);
                                    dx.data_mut()[j] += g * w.at(co, ci, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }

    fn rand_t(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
        Tensor::uniform(shape, -1.0, 1.0, rng)
    }

    #[test]
    fn all_ones_padding_pattern() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d(&x, &w, None).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_t(&mut rng, Shape::new(2, 3, 4, 5));
        let w = Tensor::zeros(Shape::new(2, 3, 3, 3));
        let b = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.5, -2.0]).unwrap();
        let y = conv2d(&x, &w, Some(&b)).unwrap();
        for n in 0..2 {
            for (c, want) in [0.5, -2.0].into_iter().enumerate() {
                for i in 0..4 {
                    for j in 0..5 {
                        assert_eq!(y.at(n, c, i, j), want);
                    }
                }
            }
        }
    }

    #[test]
    fn matches_naive_on_fixture_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_t(&mut rng, Shape::new(1, 2, 5, 5));
        let w = rand_t(&mut rng, Shape::new(3, 2, 3, 3));
        let diff = conv2d(&x, &w, None).unwrap().max_abs_diff(&naive_conv(&x, &w, None)).unwrap();
        assert!(diff <= 1e-5, "{diff}");
    }

    #[test]
    fn matches_naive_on_200_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..=3);
            let cin = rng.gen_range(1..=4);
            let cout = rng.gen_range(1..=4);
            let h = rng.gen_range(1..=7);
            let w = rng.gen_range(1..=7);
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let x = rand_t(&mut rng, Shape::new(n, cin, h, w));
            let kern = rand_t(&mut rng, Shape::new(cout, cin, k, k));
            let b = rand_t(&mut rng, Shape::new(1, cout, 1, 1));
            let got = conv2d(&x, &kern, Some(&b)).unwrap();
            let diff = got.max_abs_diff(&naive_conv(&x, &kern, Some(&b))).unwrap();
            assert!(diff <= 1e-5, "{n}x{cin}x{h}x{w} k{k}: {diff}");
        }
    }

    #[test]
    fn backward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(1..=3);
            let cin = rng.gen_range(1..=3);
            let cout = rng.gen_range(1..=3);
            let (h, w) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let x = rand_t(&mut rng, Shape::new(n, cin, h, w));
            let kern = rand_t(&mut rng, Shape::new(cout, cin, 3, 3));
            let dy = rand_t(&mut rng, Shape::new(n, cout, h, w));
            let g = conv2d_backward(&x, &kern, true, &dy, true).unwrap();
            let (dx, dw, db) = naive_conv_backward(&x, &kern, &dy);
            assert!(g.dx.unwrap().max_abs_diff(&dx).unwrap() < 1e-4);
            assert!(g.dw.max_abs_diff(&dw).unwrap() < 1e-4);
            assert!(g.db.unwrap().max_abs_diff(&db).unwrap() < 1e-4);
        }
    }

    #[test]
    fn backward_skips_unrequested_parts() {
        let x = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let dy = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let g = conv2d_backward(&x, &w, false, &dy, false).unwrap();
        assert!(g.dx.is_none() && g.db.is_none());
    }

    #[test]
    fn backward_is_bitwise_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_t(&mut rng, Shape::new(4, 3, 6, 6));
        let w = rand_t(&mut rng, Shape::new(5, 3, 3, 3));
        let dy = rand_t(&mut rng, Shape::new(4, 5, 6, 6));
        let a = conv2d_backward(&x, &w, true, &dy, true).unwrap();
        let b = conv2d_backward(&x, &w, true, &dy, true).unwrap();
        assert_eq!(a.dw, b.dw);
        assert_eq!(a.dx, b.dx);
        assert_eq!(a.db, b.db);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let err = conv2d(&x, &Tensor::zeros(Shape::new(1, 3, 3, 3)), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("[1, 2, 3, 3]") && err.contains("[1, 3, 3, 3]"), "{err}");
        assert!(conv2d(&x, &Tensor::zeros(Shape::new(1, 2, 2, 2)), None).is_err());
        let bad_bias = Tensor::zeros(Shape::new(1, 2, 1, 1));
        assert!(conv2d(&x, &Tensor::zeros(Shape::new(1, 2, 3, 3)), Some(&bad_bias)).is_err());
    }

    #[test]
    fn pow_values() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.5, -2.0, 1.5]).unwrap();
        assert_eq!(pow(&x, 3).unwrap().data(), &[0.125, -8.0, 3.375]);
        assert_eq!(pow(&x, 1).unwrap(), x);
        assert_eq!(pow(&x, 4).unwrap().data(), &[0.0625, 16.0, 5.0625]);
        assert!(pow(&x, 0).is_err());
        let g = pow_backward(&x, 3, &Tensor::full(x.shape(), 1.0));
        assert_eq!(g.data()[0], 0.75);
    }

    #[test]
    fn pixel_shuffle_fixture() {
        let x = Tensor::from_vec(Shape::new(1, 4, 1, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(pixel_shuffle(&Tensor::zeros(Shape::new(1, 6, 1, 1)), 2).is_err());
    }

    #[test]
    fn pixel_shuffle_follows_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = 2;
        let x = rand_t(&mut rng, Shape::new(2, 8, 3, 4));
        let y = pixel_shuffle(&x, r).unwrap();
        for n in 0..2 {
            for c in 0..2 {
                for h in 0..3 {
                    for w in 0..4 {
                        for i in 0..r {
                            for j in 0..r {
                                assert_eq!(
                                    y.at(n, c, h * r + i, w * r + j),
                                    x.at(n, c * r * r + i * r + j, h, w)
                                );
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(pixel_unshuffle(&y, r).unwrap(), x);
    }

    #[test]
    fn mean_abs_values_and_grad() {
        let a = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, -1.0]).unwrap();
        let z = Tensor::zeros(a.shape());
        assert_eq!(mean_abs(&a, &z).unwrap(), 1.0);
        assert_eq!(mean_abs(&a, &a).unwrap(), 0.0);
        let b = Tensor::from_vec(a.shape(), vec![0.0, -1.0]).unwrap();
        assert_eq!(mean_abs_grad(&a, &b, 1.0).data(), &[0.5, 0.0]);
        assert!(mean_abs(&a, &Tensor::zeros(Shape::new(1, 1, 1, 3))).is_err());
    }

    #[test]
    fn weighted_sum_is_dot_product() {
        let a = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(a.shape(), vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(weighted_sum(&a, &w).unwrap(), 4.5);
    }
}
