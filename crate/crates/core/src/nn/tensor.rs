use super::Scalar;

/// Dense NCHW tensor. Fully-connected activations use `[n, features, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Panics if `data.len()` does not match the shape.
    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "tensor data does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn reshape(mut self, shape: [usize; 4]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Channel-wise concatenation `[a | b]`.
    pub fn concat_channels(a: &Self, b: &Self) -> Self {
        assert_eq!(a.shape[0], b.shape[0], "concat: batch mismatch");
        assert_eq!(a.shape[2..], b.shape[2..], "concat: spatial mismatch");
        let (la, lb) = (a.sample_len(), b.sample_len());
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for n in 0..a.shape[0] {
            data.extend_from_slice(&a.data[n * la..(n + 1) * la]);
            data.extend_from_slice(&b.data[n * lb..(n + 1) * lb]);
        }
        Self {
            shape: [a.shape[0], a.shape[1] + b.shape[1], a.shape[2], a.shape[3]],
            data,
        }
    }

    /// Inverse of [`Tensor::concat_channels`]: split after `first` channels.
    pub fn split_channels(&self, first: usize) -> (Self, Self) {
        let [n, c, h, w] = self.shape;
        assert!(first <= c);
        let hw = h * w;
        let mut a = Vec::with_capacity(n * first * hw);
        let mut b = Vec::with_capacity(n * (c - first) * hw);
        for s in self.data.chunks(c * hw) {
            a.extend_from_slice(&s[..first * hw]);
            b.extend_from_slice(&s[first * hw..]);
        }
        (
            Self::from_vec([n, first, h, w], a),
            Self::from_vec([n, c - first, h, w], b),
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Stack single samples `[1, c, h, w]` (or flat slices of one sample) into a batch.
    pub fn stack(samples: &[&[T]], chw: [usize; 3]) -> Self {
        let len = chw[0] * chw[1] * chw[2];
        let mut data = Vec::with_capacity(samples.len() * len);
        for s in samples {
            assert_eq!(s.len(), len, "stack: sample size mismatch");
            data.extend_from_slice(s);
        }
        Self::from_vec([samples.len(), chw[0], chw[1], chw[2]], data)
    }
}
