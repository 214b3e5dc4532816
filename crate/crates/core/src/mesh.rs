//! Quadtree meshes of the unit square.
//!
//! Leaves are axis-aligned squares addressed by `(level, i, j)`. Vertices are
//! stored in integer coordinates on a `2^MAX_DEPTH` lattice so that equality
//! tests are exact. Every mesh produced by [`uniform_mesh`] or
//! [`QuadMesh::refine`] is 1-irregular: edge neighbours differ by at most one
//! level, so a hanging vertex always has two regular parents.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};

/// Deepest admissible refinement level.
pub const MAX_DEPTH: u8 = 20;
const SCALE: u32 = 1 << MAX_DEPTH;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("point ({0}, {1}) lies outside the closed unit square")]
    OutsideDomain(f64, f64),
    #[error("cell index {0} is not a leaf of this mesh")]
    BadCell(usize),
    #[error("cannot refine beyond level {MAX_DEPTH}")]
    DepthLimit,
    #[error("meshes do not belong to one nested refinement family")]
    NonNested,
    #[error("invalid leaf set: {0}")]
    InvalidLeaves(String),
}

/// A square cell `[i h, (i+1) h] x [j h, (j+1) h]` with `h = 2^-level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub level: u8,
    pub i: u32,
    pub j: u32,
}

impl Cell {
    pub const ROOT: Cell = Cell { level: 0, i: 0, j: 0 };

    pub fn new(level: u8, i: u32, j: u32) -> Self {
        Cell { level, i, j }
    }

    pub fn size(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    pub fn origin(&self) -> [f64; 2] {
        let h = self.size();
        [self.i as f64 * h, self.j as f64 * h]
    }

    pub fn parent(&self) -> Option<Cell> {
        (self.level > 0).then(|| Cell::new(self.level - 1, self.i / 2, self.j / 2))
    }

    /// Children ordered `(0,0), (1,0), (0,1), (1,1)`.
    pub fn children(&self) -> [Cell; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [
            Cell::new(l, i, j),
            Cell::new(l, i + 1, j),
            Cell::new(l, i, j + 1),
            Cell::new(l, i + 1, j + 1),
        ]
    }

    /// Position of this cell among its siblings, `(i % 2, j % 2)`.
    pub fn child_offset(&self) -> (u32, u32) {
        (self.i % 2, self.j % 2)
    }

    /// The ancestor at `level` (or `self` when the levels agree).
    pub fn ancestor(&self, level: u8) -> Cell {
        debug_assert!(level <= self.level);
        let s = self.level - level;
        Cell::new(level, self.i >> s, self.j >> s)
    }

    /// True if `other` is contained in `self`.
    pub fn contains(&self, other: &Cell) -> bool {
        other.level >= self.level && other.ancestor(self.level) == *self
    }

    fn span(&self) -> u32 {
        SCALE >> self.level
    }

    /// Integer corners in the order (x0,y0), (x1,y0), (x1,y1), (x0,y1).
    pub fn corners(&self) -> [[u32; 2]; 4] {
        let s = self.span();
        let (x0, y0) = (self.i * s, self.j * s);
        [[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]
    }

    /// Same-level neighbour in direction `d` (0:-x, 1:+x, 2:-y, 3:+y).
    fn neighbor(&self, d: usize) -> Option<Cell> {
        let n = 1u32 << self.level;
        let (i, j) = (self.i, self.j);
        match d {
            0 if i > 0 => Some(Cell::new(self.level, i - 1, j)),
            1 if i + 1 < n => Some(Cell::new(self.level, i + 1, j)),
            2 if j > 0 => Some(Cell::new(self.level, i, j - 1)),
            3 if j + 1 < n => Some(Cell::new(self.level, i, j + 1)),
            _ => None,
        }
    }
}

/// Converts an integer lattice coordinate to a real coordinate.
pub fn lattice_to_real(p: [u32; 2]) -> [f64; 2] {
    [p[0] as f64 / SCALE as f64, p[1] as f64 / SCALE as f64]
}

#[derive(Debug, Clone)]
pub struct QuadMesh {
    cells: Vec<Cell>,
    cell_index: HashMap<Cell, usize>,
    vertices: Vec<[u32; 2]>,
    vertex_index: HashMap<[u32; 2], usize>,
    cell_vertices: Vec<[usize; 4]>,
    hanging: Vec<Option<[usize; 2]>>,
    generation: u64,
    max_level: u8,
}

/// `4^levels` equal squares.
pub fn uniform_mesh(levels: u8) -> QuadMesh {
    assert!(levels <= MAX_DEPTH, "uniform_mesh: level {levels} exceeds {MAX_DEPTH}");
    let n = 1u32 << levels;
    let mut cells = Vec::with_capacity((n * n) as usize);
    for j in 0..n {
        for i in 0..n {
            cells.push(Cell::new(levels, i, j));
        }
    }
    QuadMesh::build(cells, true)
}

impl QuadMesh {
    /// Builds a mesh from an explicit leaf list, keeping the given cell order.
    ///
    /// Vertices are numbered by first appearance. The leaves must tile the
    /// unit square and be 1-irregular.
    pub fn from_leaves(cells: Vec<Cell>) -> Result<QuadMesh, MeshError> {
        let set: HashSet<Cell> = cells.iter().copied().collect();
        if set.len() != cells.len() {
            return Err(MeshError::InvalidLeaves("duplicate leaves".into()));
        }
        let mut area: u128 = 0;
        for c in &cells {
            if c.level > MAX_DEPTH || c.i >= (1 << c.level) || c.j >= (1 << c.level) {
                return Err(MeshError::InvalidLeaves(format!("cell {c:?} out of range")));
            }
            let mut a = *c;
            while let Some(p) = a.parent() {
                if set.contains(&p) {
                    return Err(MeshError::InvalidLeaves(format!("{c:?} overlaps {p:?}")));
                }
                a = p;
            }
            area += 1u128 << (2 * (MAX_DEPTH - c.level) as u32);
        }
        if area != 1u128 << (2 * MAX_DEPTH as u32) {
            return Err(MeshError::InvalidLeaves("leaves do not cover the unit square".into()));
        }
        let mesh = QuadMesh::build(cells, false);
        if !mesh.is_one_irregular() {
            return Err(MeshError::InvalidLeaves("mesh is not 1-irregular".into()));
        }
        Ok(mesh)
    }

    fn build(mut cells: Vec<Cell>, canonical: bool) -> QuadMesh {
        if canonical {
            cells.sort_by_key(|c| (c.level, c.j, c.i));
        }
        let cell_index: HashMap<Cell, usize> =
            cells.iter().enumerate().map(|(k, c)| (*c, k)).collect();

        let mut vertices: Vec<[u32; 2]> = Vec::new();
        if canonical {
            let set: HashSet<[u32; 2]> = cells.iter().flat_map(|c| c.corners()).collect();
            vertices = set.into_iter().collect();
            vertices.sort_by_key(|p| (p[1], p[0]));
        } else {
            let mut seen = HashSet::new();
            for c in &cells {
                for p in c.corners() {
                    if seen.insert(p) {
                        vertices.push(p);
                    }
                }
            }
        }
        let vertex_index: HashMap<[u32; 2], usize> =
            vertices.iter().enumerate().map(|(k, p)| (*p, k)).collect();
        let cell_vertices: Vec<[usize; 4]> = cells
            .iter()
            .map(|c| c.corners().map(|p| vertex_index[&p]))
            .collect();

        let mut hanging = vec![None; vertices.len()];
        for (c, cv) in cells.iter().zip(&cell_vertices) {
            if c.level == MAX_DEPTH {
                continue;
            }
            for e in 0..4 {
                let (a, b) = (cv[e], cv[(e + 1) % 4]);
                let (pa, pb) = (vertices[a], vertices[b]);
                let mid = [(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2];
                if let Some(&m) = vertex_index.get(&mid) {
                    hanging[m] = Some([a.min(b), a.max(b)]);
                }
            }
        }
        let max_level = cells.iter().map(|c| c.level).max().unwrap_or(0);
        QuadMesh {
            cells,
            cell_index,
            vertices,
            vertex_index,
            cell_vertices,
            hanging,
            generation: next_generation(),
            max_level,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, k: usize) -> Cell {
        self.cells[k]
    }

    pub fn cell_id(&self, c: &Cell) -> Option<usize> {
        self.cell_index.get(c).copied()
    }

    pub fn cell_vertices(&self, k: usize) -> [usize; 4] {
        self.cell_vertices[k]
    }

    pub fn vertex_lattice(&self, v: usize) -> [u32; 2] {
        self.vertices[v]
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        lattice_to_real(self.vertices[v])
    }

    pub fn vertex_id(&self, p: [u32; 2]) -> Option<usize> {
        self.vertex_index.get(&p).copied()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let p = self.vertices[v];
        p[0] == 0 || p[1] == 0 || p[0] == SCALE || p[1] == SCALE
    }

    /// Parents of a hanging vertex, `None` for regular vertices.
    pub fn hanging_parents(&self, v: usize) -> Option<[usize; 2]> {
        self.hanging[v]
    }

    pub fn num_hanging(&self) -> usize {
        self.hanging.iter().filter(|h| h.is_some()).count()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.size() * c.size()).sum()
    }

    /// Index of the leaf containing `c` (or equal to it), if any.
    pub fn leaf_containing(&self, c: &Cell) -> Option<usize> {
        let mut a = *c;
        loop {
            if let Some(&k) = self.cell_index.get(&a) {
                return Some(k);
            }
            a = a.parent()?;
        }
    }

    /// True if every leaf of `self` lies inside a leaf of `coarser`.
    pub fn refines(&self, coarser: &QuadMesh) -> bool {
        if self.generation == coarser.generation {
            return true;
        }
        self.cells.iter().all(|c| coarser.leaf_containing(c).is_some())
    }

    /// Exhaustive check of the level jump across every leaf edge.
    pub fn is_one_irregular(&self) -> bool {
        for c in &self.cells {
            for d in 0..4 {
                let Some(n) = c.neighbor(d) else { continue };
                if let Some(k) = self.leaf_containing(&n) {
                    if c.level - self.cells[k].level > 1 {
                        return false;
                    }
                } else {
                    // neighbour region is subdivided; the children touching
                    // our edge must themselves be leaves
                    let ch = n.children();
                    let touching = match d {
                        0 => [ch[1], ch[3]],
                        1 => [ch[0], ch[2]],
                        2 => [ch[2], ch[3]],
                        _ => [ch[0], ch[1]],
                    };
                    if touching.iter().any(|t| !self.cell_index.contains_key(t)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Splits the marked leaves, adding closure splits to keep 1-irregularity.
    ///
    /// An empty mark set returns a copy with the same generation id.
    pub fn refine(&self, marked: &[usize]) -> Result<QuadMesh, MeshError> {
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut leaves: HashSet<Cell> = self.cells.iter().copied().collect();
        for &m in marked {
            let c = *self.cells.get(m).ok_or(MeshError::BadCell(m))?;
            split(c, &mut leaves)?;
        }
        Ok(QuadMesh::build(leaves.into_iter().collect(), true))
    }

    /// Splits every leaf once.
    pub fn refine_all(&self) -> Result<QuadMesh, MeshError> {
        let all: Vec<usize> = (0..self.num_cells()).collect();
        self.refine(&all)
    }

    /// Leaf containing `point` and the local coordinates in `[0,1]^2`.
    ///
    /// Points on interfaces resolve to the smallest containing leaf index.
    pub fn locate(&self, point: [f64; 2]) -> Result<(usize, [f64; 2]), MeshError> {
        let [x, y] = point;
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(MeshError::OutsideDomain(x, y));
        }
        let mut best: Option<(usize, u8, u32, u32)> = None;
        for level in 0..=self.max_level {
            let n = 1u32 << level;
            let (sx, sy) = (x * n as f64, y * n as f64);
            for i in candidates(sx, n) {
                for j in candidates(sy, n) {
                    if let Some(&k) = self.cell_index.get(&Cell::new(level, i, j)) {
                        if best.is_none_or(|b| k < b.0) {
                            best = Some((k, level, i, j));
                        }
                    }
                }
            }
        }
        let (k, level, i, j) = best.expect("leaves tile the unit square");
        let n = (1u64 << level) as f64;
        Ok((k, [x * n - i as f64, y * n - j as f64]))
    }
}

fn candidates(s: f64, n: u32) -> impl Iterator<Item = u32> {
    let f = s.floor();
    let a = if (f as u64) < n as u64 { Some(f as u32) } else { None };
    let b = if s == f && f >= 1.0 { Some(f as u32 - 1) } else { None };
    a.into_iter().chain(b)
}

fn split(c: Cell, leaves: &mut HashSet<Cell>) -> Result<(), MeshError> {
    if !leaves.contains(&c) {
        return Ok(());
    }
    if c.level >= MAX_DEPTH {
        return Err(MeshError::DepthLimit);
    }
    for d in 0..4 {
        let Some(n) = c.neighbor(d) else { continue };
        let mut a = n;
        while let Some(p) = a.parent() {
            if leaves.contains(&p) {
                split(p, leaves)?;
                break;
            }
            a = p;
        }
    }
    leaves.remove(&c);
    leaves.extend(c.children());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_counts() {
        let m = uniform_mesh(2);
        assert_eq!((m.num_cells(), m.num_vertices()), (16, 25));
        let m = uniform_mesh(0);
        assert_eq!((m.num_cells(), m.num_vertices()), (1, 4));
        let m = uniform_mesh(4);
        assert_eq!((m.num_cells(), m.num_vertices()), (256, 289));
        assert_eq!(m.num_hanging(), 0);
    }

    #[test]
    fn vertex_count_formula_by_enumeration() {
        for l in 0..6u8 {
            let m = uniform_mesh(l);
            let n = (1usize << l) + 1;
            let mut distinct = HashSet::new();
            for k in 0..m.num_cells() {
                for v in m.cell_vertices(k) {
                    distinct.insert(m.vertex_lattice(v));
                }
            }
            assert_eq!(distinct.len(), n * n);
            assert_eq!(m.num_vertices(), n * n);
        }
    }

    #[test]
    fn single_mark_gives_nineteen_cells() {
        let m = uniform_mesh(2);
        let r = m.refine(&[5]).unwrap();
        assert_eq!(r.num_cells(), 19);
        assert!(r.is_one_irregular());
        assert!(r.num_hanging() > 0);
        assert!(r.refines(&m));
    }

    #[test]
    fn closure_splits_coarse_neighbours() {
        let m = uniform_mesh(2);
        let r = m.refine(&[0]).unwrap();
        let k = r.cell_id(&Cell::new(3, 1, 1)).unwrap();
        let r2 = r.refine(&[k]).unwrap();
        assert!(r2.is_one_irregular());
        // splitting (3,1,1) forces its level-2 neighbours (2,1,0) and (2,0,1)
        assert!(r2.cell_id(&Cell::new(2, 1, 0)).is_none());
        assert!(r2.cell_id(&Cell::new(2, 0, 1)).is_none());
        assert_eq!(r2.num_cells(), 28);
    }

    #[test]
    fn mark_all_is_uniform() {
        let m = uniform_mesh(2).refine_all().unwrap();
        assert_eq!((m.num_cells(), m.num_vertices(), m.num_hanging()), (64, 81, 0));
    }

    #[test]
    fn empty_mark_keeps_generation() {
        let m = uniform_mesh(2);
        let r = m.refine(&[]).unwrap();
        assert_eq!(r.generation(), m.generation());
        assert_eq!(r.num_cells(), 16);
        assert_ne!(m.refine(&[0]).unwrap().generation(), m.generation());
    }

    #[test]
    fn hanging_vertex_sits_on_parent_midpoint() {
        let r = uniform_mesh(2).refine(&[5]).unwrap();
        for v in 0..r.num_vertices() {
            if let Some([a, b]) = r.hanging_parents(v) {
                let (pa, pb, pv) = (r.vertex(a), r.vertex(b), r.vertex(v));
                assert_eq!(pv, [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                assert!(r.hanging_parents(a).is_none() && r.hanging_parents(b).is_none());
            }
        }
        assert_eq!(r.num_hanging(), 4);
    }

    #[test]
    fn locate_examples() {
        let m = uniform_mesh(2);
        let (k, local) = m.locate([0.1, 0.1]).unwrap();
        assert_eq!(m.cell(k).origin(), [0.0, 0.0]);
        assert!((local[0] - 0.4).abs() < 1e-12 && (local[1] - 0.4).abs() < 1e-12);

        let (k, local) = m.locate([1.0, 1.0]).unwrap();
        assert_eq!(m.cell(k), Cell::new(2, 3, 3));
        assert_eq!(local, [1.0, 1.0]);

        let (k, local) = m.locate([0.5, 0.5]).unwrap();
        assert_eq!(m.cell(k), Cell::new(2, 1, 1));
        assert_eq!(local, [1.0, 1.0]);
        for _ in 0..3 {
            assert_eq!(m.locate([0.5, 0.5]).unwrap().0, k);
        }
        assert!(matches!(m.locate([1.2, 0.5]), Err(MeshError::OutsideDomain(..))));
        assert!(m.locate([f64::NAN, 0.5]).is_err());
    }

    #[test]
    fn from_leaves_validates() {
        assert!(QuadMesh::from_leaves(vec![Cell::ROOT]).is_ok());
        let bad = Cell::ROOT.children()[..3].to_vec();
        assert!(QuadMesh::from_leaves(bad).is_err());
        let mut overl = Cell::ROOT.children().to_vec();
        overl.push(Cell::ROOT);
        assert!(QuadMesh::from_leaves(overl).is_err());
        // two-level jump across an edge
        let mut jump: Vec<Cell> = Cell::ROOT.children()[1..].to_vec();
        let c0 = Cell::ROOT.children()[0];
        let c01 = c0.children()[3];
        jump.extend(c0.children()[..3].iter().copied());
        jump.extend(c01.children());
        assert!(QuadMesh::from_leaves(jump).is_err());
    }

    #[test]
    fn area_sums_to_one() {
        let r = uniform_mesh(2).refine(&[0, 7, 9]).unwrap();
        assert!((r.total_area() - 1.0).abs() < 1e-12);
    }
}
