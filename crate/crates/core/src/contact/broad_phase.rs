//! Uniform spatial hash over axis-aligned boxes.

use nalgebra::Vector3;

/// Upper bound on the total number of (cell, primitive) entries; the cell
/// size is doubled until a set of boxes fits.
const CELL_BUDGET: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn inflated(mut self, r: f64) -> Self {
        self.min.add_scalar_mut(-r);
        self.max.add_scalar_mut(r);
        self
    }

    pub fn merged(&self, other: &Self) -> Self {
        Self {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }
}

#[derive(Debug, Clone)]
pub struct BroadPhaseGrid {
    cell_size: f64,
    /// `(cell, id)` entries sorted by cell, then id.
    entries: Vec<([i64; 3], usize)>,
}

impl BroadPhaseGrid {
    /// Hash `boxes[i]` under id `i`. The cell size starts at `cell_size` and
    /// grows if the boxes would occupy too many cells.
    pub fn build(cell_size: f64, boxes: &[Aabb]) -> Self {
        Self::build_subset(cell_size, boxes, 0..boxes.len())
    }

    /// Like [`BroadPhaseGrid::build`] but only hashes the listed ids.
    pub fn build_subset(
        cell_size: f64,
        boxes: &[Aabb],
        ids: impl IntoIterator<Item = usize>,
    ) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let ids: Vec<usize> = ids.into_iter().collect();
        let mut cell = cell_size;
        loop {
            let total: f64 = ids
                .iter()
                .map(|&id| {
                    let (lo, hi) = cell_range(cell, &boxes[id]);
                    (0..3).map(|i| (hi[i] - lo[i] + 1) as f64).product::<f64>()
                })
                .sum();
            if total <= CELL_BUDGET as f64 {
                break;
            }
            cell *= 2.0;
        }
        let mut grid = Self {
            cell_size: cell,
            entries: Vec::new(),
        };
        for id in ids {
            grid.push(id, &boxes[id]);
        }
        grid.entries.sort_unstable();
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn push(&mut self, id: usize, b: &Aabb) {
        let (lo, hi) = cell_range(self.cell_size, b);
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    self.entries.push(([i, j, k], id));
                }
            }
        }
    }

    /// Ids stored in a single cell, ascending.
    pub fn cell(&self, key: [i64; 3]) -> Vec<usize> {
        let mut out = Vec::new();
        self.extend_cell(key, &mut out);
        out
    }

    fn extend_cell(&self, key: [i64; 3], out: &mut Vec<usize>) {
        let start = self.entries.partition_point(|e| e.0 < key);
        out.extend(
            self.entries[start..]
                .iter()
                .take_while(|e| e.0 == key)
                .map(|e| e.1),
        );
    }

    pub fn key_of(&self, p: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|i| (p[i] / self.cell_size).floor() as i64)
    }

    /// Ids of every box sharing a cell with `b`, sorted and deduplicated.
    pub fn query(&self, b: &Aabb, out: &mut Vec<usize>) {
        out.clear();
        let (lo, hi) = cell_range(self.cell_size, b);
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    self.extend_cell([i, j, k], out);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

fn cell_range(cell: f64, b: &Aabb) -> ([i64; 3], [i64; 3]) {
    let lo = [0, 1, 2].map(|i| (b.min[i] / cell).floor() as i64);
    let hi = [0, 1, 2].map(|i| (b.max[i] / cell).floor() as i64);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inflated_box_lands_in_every_overlapped_cell() {
        let b = Aabb::from_points(&[Vector3::new(0.05, 0.05, 0.05)]).inflated(0.01);
        let grid = BroadPhaseGrid::build(0.1, &[b]);
        // box spans [0.04, 0.06]: a single cell
        assert_eq!(grid.cell([0, 0, 0]), vec![0]);
        let b = Aabb::from_points(&[Vector3::new(0.099, 0.0, 0.0)]).inflated(0.01);
        let grid = BroadPhaseGrid::build(0.1, &[b]);
        assert_eq!(grid.cell([0, -1, -1]), vec![0]);
        assert_eq!(grid.cell([1, 0, 0]), vec![0]);
    }

    #[test]
    fn query_returns_sorted_unique_ids() {
        let boxes = vec![
            Aabb::from_points(&[Vector3::zeros(), Vector3::new(0.3, 0.3, 0.0)]),
            Aabb::from_points(&[Vector3::new(5.0, 5.0, 5.0)]),
            Aabb::from_points(&[Vector3::new(0.25, 0.25, 0.0)]),
        ];
        let grid = BroadPhaseGrid::build(0.1, &boxes);
        let mut out = Vec::new();
        grid.query(
            &Aabb::from_points(&[Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.3, 0.3, 0.0)]),
            &mut out,
        );
        assert_eq!(out, vec![0, 2]);
    }

    #[test]
    fn oversized_boxes_coarsen_the_grid() {
        let b = Aabb::from_points(&[Vector3::zeros(), Vector3::repeat(1000.0)]);
        let grid = BroadPhaseGrid::build(1e-3, &[b]);
        assert!(grid.cell_size() > 1e-3);
    }
}
