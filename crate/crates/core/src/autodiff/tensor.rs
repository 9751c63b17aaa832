/// Dense row-major f64 tensor. Rank is dynamic; most of the codebase
/// uses rank 1 (vectors), rank 3 (C,H,W feature maps), or rank 4
/// (Cout,Cin,Kh,Kw convolution kernels).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {shape:?} does not match data length {}", data.len());
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(v: &[f64]) -> Self {
        Tensor {
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Flat index for a (c, y, x) coordinate in a rank-3 tensor.
    #[inline]
    pub fn idx3(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        (c * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx3(c, y, x)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Bilinear resize of a rank-2 map. Sample points use the half-pixel
/// convention; convex interpolation keeps outputs inside the input's
/// value range. Returns a clone when the size is unchanged.
pub fn resize_bilinear(t: &Tensor, oh: usize, ow: usize) -> Tensor {
    assert_eq!(t.shape().len(), 2, "resize_bilinear wants a rank-2 map");
    assert!(oh > 0 && ow > 0);
    let (h, w) = (t.shape()[0], t.shape()[1]);
    if (h, w) == (oh, ow) {
        return t.clone();
    }
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for x in 0..ow {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            let top = t.data()[y0 * w + x0] * (1.0 - dx) + t.data()[y0 * w + x1] * dx;
            let bot = t.data()[y1 * w + x0] * (1.0 - dx) + t.data()[y1 * w + x1] * dx;
            out.push(top * (1.0 - dy) + bot * dy);
        }
    }
    Tensor::new(&[oh, ow], out)
}

#[cfg(test)]
mod resize_tests {
    use super::*;

    #[test]
    fn resize_identity_and_range() {
        let t = Tensor::new(&[2, 3], vec![0.0, 0.5, 1.0, 0.2, 0.8, 0.4]);
        assert_eq!(resize_bilinear(&t, 2, 3), t);
        let up = resize_bilinear(&t, 5, 7);
        assert_eq!(up.shape(), &[5, 7]);
        assert!(up.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let down = resize_bilinear(&up, 1, 1);
        assert!(down.item() > 0.0 && down.item() < 1.0);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let t = Tensor::full(&[3, 4], 0.7);
        let r = resize_bilinear(&t, 9, 2);
        assert!(r.iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }
}
