use super::scalar::Scalar;

/// Dense row-major tensor. Everything in this crate is rank 1 or 2;
/// vectors are stored as 1×d rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
    pub requires_grad: bool,
    pub grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length must equal product of shape"
        );
        assert!(shape.iter().all(|&d| d > 0), "dims must be positive");
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(vec![rows, cols], vec![F::zero(); rows * cols])
    }

    pub fn scalar(x: F) -> Self {
        Tensor::new(vec![1, 1], vec![x])
    }

    pub fn row(data: Vec<F>) -> Self {
        let n = data.len();
        Tensor::new(vec![1, n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        Tensor::matrix(rows, cols, data.iter().map(|&x| F::of(x)).collect())
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn row_slice(&self, r: usize) -> &[F] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols() + c]
    }

    /// Grad buffer, allocating zeros on first touch.
    pub(crate) fn grad_mut(&mut self) -> &mut Vec<F> {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![F::zero(); n])
    }
}
