use crate::error::{Error, Result};

/// Dense row-major array of doubles with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&s| s == 0) || numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} does not hold {} values", data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Product of the extents after the first `axis` axes.
    pub fn inner(&self, axis: usize) -> usize {
        self.shape[axis..].iter().product()
    }
}
