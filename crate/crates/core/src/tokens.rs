use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Visual,
}

/// An `N x d` matrix of feature tokens (row-major f32). Grid-derived visual
/// tokens carry their `(row, col)` coordinate; object tokens and text do not.
/// `validity` marks padding rows (e.g. absent objects) that must be masked.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub modality: Modality,
    pub n: usize,
    pub d: usize,
    pub values: Vec<f32>,
    pub grid: Option<GridCoords>,
    pub validity: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCoords {
    pub h: usize,
    pub w: usize,
    /// `(row, col)` per token.
    pub coords: Vec<(u16, u16)>,
}

impl GridCoords {
    pub fn full(h: usize, w: usize) -> Self {
        let coords = (0..h)
            .flat_map(|i| (0..w).map(move |j| (i as u16, j as u16)))
            .collect();
        Self { h, w, coords }
    }
}

impl TokenSequence {
    pub fn new(modality: Modality, n: usize, d: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), n * d, "token matrix is not {n}x{d}");
        Self {
            modality,
            n,
            d,
            values,
            grid: None,
            validity: vec![true; n],
        }
    }

    pub fn with_grid(mut self, grid: GridCoords) -> Self {
        assert_eq!(grid.coords.len(), self.n);
        self.grid = Some(grid);
        self
    }

    pub fn with_validity(mut self, validity: Vec<bool>) -> Self {
        assert_eq!(validity.len(), self.n);
        self.validity = validity;
        self
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }
}
