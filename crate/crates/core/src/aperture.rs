//! Element layouts on rectangular or triangular grids.
//!
//! Elements are stored row-major with row 0 at minimum y, and the whole
//! layout is translated so its centroid sits at the origin. On triangular
//! grids odd rows are offset by half the column pitch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Rectangular,
    Triangular,
}

/// Immutable element layout with row/column indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureLayout {
    rows: usize,
    cols: usize,
    dx: f64,
    dy: f64,
    grid_kind: GridKind,
    positions: Vec<(f64, f64)>,
}

impl ApertureLayout {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn grid_kind(&self) -> GridKind {
        self.grid_kind
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Element positions (x, y) in meters, row-major, centroid at origin.
    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    /// Column index (bias group) of an element.
    pub fn column_of(&self, element: usize) -> usize {
        element % self.cols
    }

    /// Row index of an element.
    pub fn row_of(&self, element: usize) -> usize {
        element / self.cols
    }

    /// Build a layout from explicit positions (row-major, length rows*cols).
    /// Intended for imported or transformed geometries.
    pub fn from_positions(
        rows: usize,
        cols: usize,
        dx: f64,
        dy: f64,
        grid_kind: GridKind,
        positions: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("layout dimensions must be at least 1x1".into()));
        }
        if positions.len() != rows * cols {
            return Err(Error::Domain(format!(
                "expected {} positions, got {}",
                rows * cols,
                positions.len()
            )));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in positions.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::Domain(format!(
                        "duplicate element position ({}, {})",
                        a.0, a.1
                    )));
                }
            }
        }
        Ok(ApertureLayout {
            rows,
            cols,
            dx,
            dy,
            grid_kind,
            positions,
        })
    }
}

/// Build a centered layout of `rows x cols` elements with pitches `dx`, `dy`.
pub fn build_layout(
    rows: usize,
    cols: usize,
    dx: f64,
    dy: f64,
    grid_kind: GridKind,
) -> Result<ApertureLayout> {
    if rows == 0 || cols == 0 {
        return Err(Error::Domain(format!(
            "layout dimensions must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if dx <= 0.0 || dy <= 0.0 {
        return Err(Error::Domain(format!(
            "element spacings must be positive, got dx = {dx}, dy = {dy}"
        )));
    }
    let mut positions = Vec::with_capacity(rows * cols);
    for m in 0..rows {
        let row_offset = match grid_kind {
            GridKind::Triangular if m % 2 == 1 => dx / 2.0,
            _ => 0.0,
        };
        for n in 0..cols {
            positions.push((n as f64 * dx + row_offset, m as f64 * dy));
        }
    }
    let count = positions.len() as f64;
    let cx = positions.iter().map(|p| p.0).sum::<f64>() / count;
    let cy = positions.iter().map(|p| p.1).sum::<f64>() / count;
    for p in &mut positions {
        p.0 -= cx;
        p.1 -= cy;
    }
    Ok(ApertureLayout {
        rows,
        cols,
        dx,
        dy,
        grid_kind,
        positions,
    })
}

/// Aperture area dx * dy * M * N (m^2).
pub fn aperture_area(layout: &ApertureLayout) -> f64 {
    layout.dx * layout.dy * layout.rows as f64 * layout.cols as f64
}

/// Partition of element indices into column bias groups, ordered by x.
pub fn column_groups(layout: &ApertureLayout) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::with_capacity(layout.rows); layout.cols];
    for idx in 0..layout.len() {
        groups[layout.column_of(idx)].push(idx);
    }
    groups
}

/// Mean x-coordinate of each column group (m), ordered like the groups.
pub fn column_centroids(layout: &ApertureLayout) -> Vec<f64> {
    column_groups(layout)
        .iter()
        .map(|g| g.iter().map(|&i| layout.positions()[i].0).sum::<f64>() / g.len() as f64)
        .collect()
}

/// Serialize positions as CSV: index, x_m, y_m, column.
pub fn positions_csv(layout: &ApertureLayout) -> String {
    let mut out = String::from("index,x_m,y_m,column\n");
    for (i, (x, y)) in layout.positions().iter().enumerate() {
        out.push_str(&format!("{i},{x:.12e},{y:.12e},{}\n", layout.column_of(i)));
    }
    out
}
