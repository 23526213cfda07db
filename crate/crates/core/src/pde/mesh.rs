//! Structured P1 triangulation of the unit square.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::pde::flow::Point;
use crate::scalar::Real;

/// Precomputed element geometry.
#[derive(Debug, Clone)]
pub struct Element<T> {
    pub nodes: [usize; 3],
    pub area: T,
    pub centroid: Point<T>,
    /// Gradients of the three P1 basis functions.
    pub grads: [Point<T>; 3],
}

/// Compressed-row sparsity pattern shared by every assembled operator.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    /// Position of the diagonal entry of each row.
    pub diag: Vec<usize>,
    /// Slot of local entry `(i, j)` of each element at `3·i + j`.
    pub element_slots: Vec<[usize; 9]>,
}

impl Pattern {
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Union-jack triangulation: each grid cell is split along the diagonal
/// whose orientation alternates in a checkerboard, which keeps the mesh
/// mirror-symmetric about both mid-lines when the cell count per side is
/// even.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub n_side: usize,
    pub coords: Vec<Point<T>>,
    pub elements: Vec<Element<T>>,
    pub lumped_mass: Vec<T>,
    pub boundary: Vec<bool>,
    pub pattern: Pattern,
}

impl<T: Real> Mesh<T> {
    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.n_side + i
    }

    /// Spacing between grid lines.
    pub fn spacing(&self) -> T {
        T::one() / T::from_usize_lossy(self.n_side - 1)
    }

    /// `Σ m_i f_i`: lumped-mass quadrature of a nodal field.
    pub fn integrate(&self, f: &[T]) -> T {
        self.lumped_mass.iter().zip(f).map(|(&m, &v)| m * v).sum()
    }

    /// Node mirrored across `x = ½`.
    pub fn mirror_x(&self, node: usize) -> usize {
        let (i, j) = (node % self.n_side, node / self.n_side);
        self.node_index(self.n_side - 1 - i, j)
    }
}

pub fn build_mesh<T: Real>(n_side: usize) -> Result<Mesh<T>> {
    if n_side < 3 {
        return Err(Error::invalid(format!("n_side must be >= 3, got {n_side}")));
    }
    let n = n_side;
    let last = T::from_usize_lossy(n - 1);
    let mut coords = Vec::with_capacity(n * n);
    let mut boundary = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            coords.push([T::from_usize_lossy(i) / last, T::from_usize_lossy(j) / last]);
            boundary.push(i == 0 || j == 0 || i == n - 1 || j == n - 1);
        }
    }
    let idx = |i: usize, j: usize| j * n + i;
    let mut tris = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (n00, n10, n01, n11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                tris.push([n00, n10, n11]);
                tris.push([n00, n11, n01]);
            } else {
                tris.push([n00, n10, n01]);
                tris.push([n10, n11, n01]);
            }
        }
    }

    let third = T::one() / T::lit(3.0);
    let mut lumped_mass = vec![T::zero(); n * n];
    let mut elements = Vec::with_capacity(tris.len());
    for nodes in tris {
        let [p1, p2, p3] = nodes.map(|k| coords[k]);
        let det = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1]);
        let area = det / T::lit(2.0);
        debug_assert!(area > T::zero());
        let grads = [
            [(p2[1] - p3[1]) / det, (p3[0] - p2[0]) / det],
            [(p3[1] - p1[1]) / det, (p1[0] - p3[0]) / det],
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        ];
        let centroid = [
            (p1[0] + p2[0] + p3[0]) * third,
            (p1[1] + p2[1] + p3[1]) * third,
        ];
        for &k in &nodes {
            lumped_mass[k] = lumped_mass[k] + area * third;
        }
        elements.push(Element { nodes, area, centroid, grads });
    }

    let pattern = build_pattern(n * n, &elements);
    Ok(Mesh {
        n_side,
        coords,
        elements,
        lumped_mass,
        boundary,
        pattern,
    })
}

fn build_pattern<T>(n_nodes: usize, elements: &[Element<T>]) -> Pattern {
    let mut rows: Vec<BTreeSet<usize>> = (0..n_nodes).map(|i| BTreeSet::from([i])).collect();
    for e in elements {
        for &a in &e.nodes {
            for &b in &e.nodes {
                rows[a].insert(b);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n_nodes + 1);
    let mut cols = Vec::new();
    let mut diag = Vec::with_capacity(n_nodes);
    row_ptr.push(0);
    for (i, r) in rows.iter().enumerate() {
        for &c in r {
            if c == i {
                diag.push(cols.len());
            }
            cols.push(c);
        }
        row_ptr.push(cols.len());
    }
    let slot = |r: usize, c: usize| {
        let seg = &cols[row_ptr[r]..row_ptr[r + 1]];
        row_ptr[r] + seg.binary_search(&c).expect("entry in pattern")
    };
    let element_slots = elements
        .iter()
        .map(|e| {
            let mut s = [0usize; 9];
            for a in 0..3 {
                for b in 0..3 {
                    s[3 * a + b] = slot(e.nodes[a], e.nodes[b]);
                }
            }
            s
        })
        .collect();
    Pattern {
        row_ptr,
        cols,
        diag,
        element_slots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_mesh_counts() {
        let m = build_mesh::<f64>(3).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.elements.len(), 8);
        assert_eq!(m.boundary.iter().filter(|&&b| !b).count(), 1);
    }

    #[test]
    fn paper_mesh_has_6561_nodes() {
        let m = build_mesh::<f64>(81).unwrap();
        assert_eq!(m.node_count(), 6561);
    }

    #[test]
    fn rejects_tiny_mesh() {
        assert!(build_mesh::<f64>(2).is_err());
    }

    #[test]
    fn lumped_mass_sums_to_one_and_areas_positive() {
        for n in [3, 4, 10, 41] {
            let m = build_mesh::<f64>(n).unwrap();
            let total: f64 = m.lumped_mass.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "n = {n}: {total}");
            assert!(m.lumped_mass.iter().all(|&w| w > 0.0));
            assert!(m.elements.iter().all(|e| e.area > 0.0));
        }
    }

    #[test]
    fn basis_gradients_sum_to_zero() {
        let m = build_mesh::<f64>(5).unwrap();
        for e in &m.elements {
            let gx: f64 = e.grads.iter().map(|g| g[0]).sum();
            let gy: f64 = e.grads.iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-12 && gy.abs() < 1e-12);
        }
    }

    #[test]
    fn triangulation_is_mirror_symmetric_for_even_cell_count() {
        let m = build_mesh::<f64>(9).unwrap();
        let key = |e: &[usize; 3]| {
            let mut k = *e;
            k.sort_unstable();
            k
        };
        let tris: BTreeSet<[usize; 3]> = m.elements.iter().map(|e| key(&e.nodes)).collect();
        for e in &m.elements {
            let mirrored = key(&e.nodes.map(|k| m.mirror_x(k)));
            assert!(tris.contains(&mirrored));
        }
    }
}
