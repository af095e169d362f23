//! Feature fields on the torus and the scalar abstraction shared by the
//! 32- and 64-bit runtimes.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rand::Rng;

use crate::capsules::FiberSpec;
use crate::error::{Error, Result};
use crate::group::TorusGrid;

/// Floating-point type the runtime is generic over (`f32` or `f64`).
pub trait Scalar: Float + Sum + Debug + Default + Send + Sync + 'static {
    fn lift(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn lift(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn lift(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// `N×N×K` array over the torus, tagged with its fiber.
///
/// Layout is `data[(x0 * N + x1) * K + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField<T> {
    grid: TorusGrid,
    fiber: FiberSpec,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureField<T> {
    pub fn zeros(grid: TorusGrid, fiber: FiberSpec) -> Result<Self> {
        let channels = fiber.channels()?;
        Ok(FeatureField {
            grid,
            fiber,
            channels,
            data: vec![T::zero(); grid.num_points() * channels],
        })
    }

    pub fn from_data(grid: TorusGrid, fiber: FiberSpec, data: Vec<T>) -> Result<Self> {
        let channels = fiber.channels()?;
        if data.len() != grid.num_points() * channels {
            return Err(Error::Shape(format!(
                "field data has {} values, expected {}x{}x{}",
                data.len(),
                grid.side(),
                grid.side(),
                channels
            )));
        }
        Ok(FeatureField {
            grid,
            fiber,
            channels,
            data,
        })
    }

    /// Uniform entries in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(grid: TorusGrid, fiber: FiberSpec, rng: &mut R) -> Result<Self> {
        let mut f = Self::zeros(grid, fiber)?;
        for v in f.data.iter_mut() {
            *v = T::lift(rng.gen_range(-1.0..1.0));
        }
        Ok(f)
    }

    /// Small integers in `-3..=3`, for exact-arithmetic checks.
    pub fn random_integer<R: Rng + ?Sized>(
        grid: TorusGrid,
        fiber: FiberSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let mut f = Self::zeros(grid, fiber)?;
        for v in f.data.iter_mut() {
            *v = T::lift(rng.gen_range(-3i32..=3) as f64);
        }
        Ok(f)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn fiber(&self) -> &FiberSpec {
        &self.fiber
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Fiber vector at a grid point.
    pub fn at(&self, p: [usize; 2]) -> &[T] {
        let base = self.grid.linear(p) * self.channels;
        &self.data[base..base + self.channels]
    }

    pub fn at_mut(&mut self, p: [usize; 2]) -> &mut [T] {
        let base = self.grid.linear(p) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance to a field of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Same data, new precision.
    pub fn cast<U: Scalar>(&self) -> FeatureField<U> {
        FeatureField {
            grid: self.grid,
            fiber: self.fiber.clone(),
            channels: self.channels,
            data: self.data.iter().map(|v| U::lift(v.as_f64())).collect(),
        }
    }

    pub fn with_fiber(self, fiber: FiberSpec) -> Result<Self> {
        Self::from_data(self.grid, fiber, self.data)
    }
}
