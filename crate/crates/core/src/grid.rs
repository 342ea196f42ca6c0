use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::scalar::Scalar;

/// Row-major 2-D grid of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<S> {
    height: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Copy> Grid<S> {
    pub fn new(height: usize, width: usize, data: Vec<S>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("grid dimensions must be positive"));
        }
        if data.len() != height * width {
            return Err(shape(format!("{} values for a {height}x{width} grid", data.len())));
        }
        Ok(Grid { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: S) -> Self {
        Grid { height, width, data: vec![value; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> S {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: S) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn map<T: Copy>(&self, f: impl Fn(S) -> T) -> Grid<T> {
        Grid { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn ensure_same_dims<T: Copy>(&self, other: &Grid<T>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

impl<S: Scalar> Grid<S> {
    pub fn cast<T: Scalar>(&self) -> Grid<T> {
        self.map(|v| T::lit(v.re()))
    }
}
