//! Dense NCHW tensors of `f32`.
//!
//! Every value flowing through the network (activations, kernels, biases,
//! gradients) is a rank-4 [`Tensor`]. Kernels use `[Cout, Cin, kh, kw]`,
//! biases use `[1, Cout, 1, 1]`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }
    pub fn c(&self) -> usize {
        self.0[1]
    }
    pub fn h(&self) -> usize {
        self.0[2]
    }
    pub fn w(&self) -> usize {
        self.0[3]
    }

    pub fn dims(&self) -> [usize; 4] {
        self.0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "[{n}, {c}, {h}, {w}]")
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::invalid(
                "tensor",
                format!(
                    "data length {} does not match shape {shape} ({} elements)",
                    data.len(),
                    shape.numel()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    /// One-element tensor, the shape used for losses.
    pub fn scalar(value: f32) -> Self {
        Tensor::full(Shape::new(1, 1, 1, 1), value)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: Shape, lo: f32, hi: f32, rng: &mut R) -> Self {
        let data = (0..shape.numel()).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape.0;
        ((n * cs + c) * hs + h) * ws + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f32) {
        let i = self.index(n, c, h, w);
        self.data[i] = v;
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.data.len() != 1 {
            return Err(Error::invalid(
                "item",
                format!("tensor of shape {} is not a scalar", self.shape),
            ));
        }
        Ok(self.data[0])
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Copies out image `n` as a `[1, C, H, W]` tensor.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let per = self.shape.c() * self.shape.h() * self.shape.w();
        Tensor {
            shape: Shape::new(1, self.shape.c(), self.shape.h(), self.shape.w()),
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Concatenates `[1, C, H, W]` tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors"))?;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        let mut n = 0;
        for t in items {
            let s = t.shape;
            if s.c() != first.shape.c() || s.h() != first.shape.h() || s.w() != first.shape.w() {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    left: first.shape,
                    right: s,
                });
            }
            n += s.n();
            data.extend_from_slice(&t.data);
        }
        let s = first.shape;
        Ok(Tensor {
            shape: Shape::new(n, s.c(), s.h(), s.w()),
            data,
        })
    }

    /// Copies a spatial window `[top..top+h, left..left+w]` of every plane.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
        let s = self.shape;
        if top + h > s.h() || left + w > s.w() {
            return Err(Error::invalid(
                "crop",
                format!("window {h}x{w} at ({top}, {left}) exceeds {s}"),
            ));
        }
        let mut data = Vec::with_capacity(s.n() * s.c() * h * w);
        for plane in self.data.chunks(s.h() * s.w()) {
            for y in top..top + h {
                let row = y * s.w();
                data.extend_from_slice(&plane[row + left..row + left + w]);
            }
        }
        Ok(Tensor {
            shape: Shape::new(s.n(), s.c(), h, w),
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, data: &[f32]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 7]).is_err());
        assert_eq!(Tensor::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 8]).unwrap().numel(), 8);
    }

    #[test]
    fn indexing_is_row_major_nchw() {
        let s = Shape::new(2, 3, 4, 5);
        let x = Tensor::from_vec(s, (0..s.numel()).map(|v| v as f32).collect()).unwrap();
        assert_eq!(x.at(1, 2, 3, 4), 119.0);
        assert_eq!(x.at(1, 0, 0, 0), 60.0);
        assert_eq!(x.at(0, 1, 2, 3), 33.0);
    }

    #[test]
    fn zip_map_rejects_mismatched_shapes() {
        let a = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::zeros(Shape::new(1, 1, 2, 3));
        let err = a.zip_map(&b, "add", |x, y| x + y).unwrap_err().to_string();
        assert!(err.contains("[1, 1, 2, 2]") && err.contains("[1, 1, 2, 3]"), "{err}");
    }

    #[test]
    fn item_needs_one_element() {
        assert_eq!(Tensor::scalar(2.5).item().unwrap(), 2.5);
        assert!(Tensor::zeros(Shape::new(1, 1, 1, 2)).item().is_err());
    }

    #[test]
    fn stack_and_batch_item_round_trip() {
        let a = t(Shape::new(1, 1, 1, 2), &[1.0, 2.0]);
        let b = t(Shape::new(1, 1, 1, 2), &[3.0, 4.0]);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 1, 1, 2));
        assert_eq!(s.batch_item(0), a);
        assert_eq!(s.batch_item(1), b);
        let c = t(Shape::new(1, 2, 1, 1), &[1.0, 2.0]);
        assert!(Tensor::stack(&[a, c]).is_err());
    }

    #[test]
    fn crop_cuts_every_plane() {
        let s = Shape::new(1, 2, 3, 3);
        let x = Tensor::from_vec(s, (0..18).map(|v| v as f32).collect()).unwrap();
        let c = x.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[4.0, 5.0, 7.0, 8.0, 13.0, 14.0, 16.0, 17.0]);
        assert!(x.crop(2, 2, 2, 2).is_err());
    }

    #[test]
    fn reshape_keeps_data() {
        let x = t(Shape::new(1, 4, 1, 1), &[1.0, 2.0, 3.0, 4.0]);
        let y = x.clone().reshape(Shape::new(1, 1, 2, 2)).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(x.reshape(Shape::new(1, 1, 2, 3)).is_err());
    }

    #[test]
    fn finiteness_and_diff() {
        let a = t(Shape::new(1, 1, 1, 3), &[0.0, 1.0, 2.0]);
        let b = t(Shape::new(1, 1, 1, 3), &[0.0, 1.5, 1.0]);
        assert_eq!(a.max_abs_diff(&b).unwrap(), 1.0);
        assert!(a.is_finite());
        assert!(!t(Shape::new(1, 1, 1, 1), &[f32::NAN]).is_finite());
    }
}
