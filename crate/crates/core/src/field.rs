//! Velocity fields sampled on the regular periodic grid.

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec2};

/// Anything that can report a 2D velocity at a point of the torus.
pub trait VelocityField<T: Real>: Sync {
    fn velocity(&self, p: Vec2<T>) -> Vec2<T>;
}

/// Spatially uniform current.
#[derive(Debug, Clone, Copy)]
pub struct UniformField<T>(pub Vec2<T>);

impl<T: Real> VelocityField<T> for UniformField<T> {
    fn velocity(&self, _p: Vec2<T>) -> Vec2<T> {
        self.0
    }
}

/// A 2-component velocity field on the `n × n` grid with nodes
/// `x_i = 2π i / n`, `y_j = 2π j / n`.
///
/// Storage is row-major over `(j, i, component)`: node `(i, j)` lives at
/// `values[j * n + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid<T> {
    n: usize,
    time: T,
    values: Vec<Vec2<T>>,
}

impl<T: Real> FieldGrid<T> {
    pub fn zeros(n: usize, time: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("grid_n", format!("need at least 2 nodes per axis, got {n}")));
        }
        Ok(Self {
            n,
            time,
            values: vec![[T::zero(); 2]; n * n],
        })
    }

    pub fn from_values(n: usize, time: T, values: Vec<Vec2<T>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("grid_n", format!("need at least 2 nodes per axis, got {n}")));
        }
        crate::error::ensure_dim("field grid values", n * n, values.len())?;
        Ok(Self { n, time, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(n: usize, time: T, mut f: impl FnMut(Vec2<T>) -> Vec2<T>) -> Result<Self> {
        let mut grid = Self::zeros(n, time)?;
        for j in 0..n {
            for i in 0..n {
                grid.values[j * n + i] = f(grid.node(i, j));
            }
        }
        Ok(grid)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn time(&self) -> T {
        self.time
    }

    pub fn set_time(&mut self, time: T) {
        self.time = time;
    }

    #[inline]
    pub fn spacing(&self) -> T {
        T::period() / T::from_count(self.n)
    }

    /// Physical coordinates of node `(i, j)`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2<T> {
        let h = self.spacing();
        [h * T::from_count(i), h * T::from_count(j)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Vec2<T> {
        self.values[j * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Vec2<T>) {
        self.values[j * self.n + i] = v;
    }

    pub fn values(&self) -> &[Vec2<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec2<T>] {
        &mut self.values
    }

    /// Flattened `(u, v)` pairs in storage order.
    pub fn flat(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().flat_map(|v| v.iter().copied())
    }

    pub fn max_speed(&self) -> T {
        self.values
            .iter()
            .map(|v| crate::scalar::norm2(*v))
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|x| x.is_finite())
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        crate::error::ensure_dim(context, self.n, other.n)
    }
}

impl<T: Real> VelocityField<T> for FieldGrid<T> {
    fn velocity(&self, p: Vec2<T>) -> Vec2<T> {
        crate::decomposition::interp_bilinear(self, p)
    }
}
