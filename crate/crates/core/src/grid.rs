//! Row-major 2D grids used for images, masks and label maps.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// A dense `height × width` row-major grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Boolean pixel mask.
pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} values for a {}x{} grid",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(alloc::format!(
                "{what}: {}x{} vs {}x{}",
                self.width,
                self.height,
                other.width,
                other.height
            )))
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Grid<V>> {
        self.check_same_shape(other, "zip_map")?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn iter(&self) -> core::slice::Iter<'_, T> {
        self.data.iter()
    }
}

impl Grid<f64> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Pixel values at the positions where `mask` is set.
    pub fn masked_values(&self, mask: &Mask) -> Result<Vec<f64>> {
        self.check_same_shape(mask, "mask")?;
        Ok(self
            .data
            .iter()
            .zip(mask.data.iter())
            .filter_map(|(v, m)| m.then_some(*v))
            .collect())
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|v| *v)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.zip_map(other, |a, b| *a && *b)
    }

    pub fn and_not(&self, other: &Mask) -> Result<Mask> {
        self.zip_map(other, |a, b| *a && !*b)
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.zip_map(other, |a, b| *a || *b)
    }

    pub fn not(&self) -> Mask {
        self.map(|v| !*v)
    }

    /// Dilation with a disc of the given radius.
    pub fn dilate(&self, radius: usize) -> Mask {
        let r = radius as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        Grid::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy > r * r {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h && self.data[(ny * w + nx) as usize] {
                        return true;
                    }
                }
            }
            false
        })
    }

    /// Erosion with a disc of the given radius; pixels outside the grid count as unset.
    pub fn erode(&self, radius: usize) -> Mask {
        self.not().dilate_with_border(radius).not()
    }

    fn dilate_with_border(&self, radius: usize) -> Mask {
        let r = radius as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        Grid::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as isize, y as isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy > r * r {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h || self.data[(ny * w + nx) as usize] {
                        return true;
                    }
                }
            }
            false
        })
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (x, y): (usize, usize)) -> &T {
        &self.data[y * self.width + x]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        &mut self.data[y * self.width + x]
    }
}
