//! Mesh incidence (Hasse diagram) with cone/support/closure/star queries,
//! structured 2D mesh builders and uniform refinement.
//!
//! Points are numbered cells first, then vertices, then edges. The cone of a
//! cell lists its edges in reference-element order, the cone of an edge its
//! two vertices with the lower id first.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use crate::error::{Error, Result};

pub type Point = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellType {
    Triangle,
    Quadrilateral,
}

impl CellType {
    pub fn num_vertices(self) -> usize {
        match self {
            CellType::Triangle => 3,
            CellType::Quadrilateral => 4,
        }
    }

    pub fn num_edges(self) -> usize {
        self.num_vertices()
    }

    /// Local vertex pairs of each reference edge, lower local index first.
    ///
    /// Triangle: edge `i` is opposite vertex `i`. Quadrilateral (tensor
    /// vertex order `(0,0) (1,0) (0,1) (1,1)`): bottom, left, right, top.
    pub fn edge_vertices(self) -> &'static [[usize; 2]] {
        match self {
            CellType::Triangle => &[[1, 2], [0, 2], [0, 1]],
            CellType::Quadrilateral => &[[0, 1], [0, 2], [1, 3], [2, 3]],
        }
    }

    pub fn reference_vertices(self) -> &'static [[f64; 2]] {
        match self {
            CellType::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            CellType::Quadrilateral => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        }
    }

    /// Reference cell measure.
    pub fn reference_volume(self) -> f64 {
        match self {
            CellType::Triangle => 0.5,
            CellType::Quadrilateral => 1.0,
        }
    }
}

/// Hasse diagram of a 2D mesh.
#[derive(Clone, Debug)]
pub struct PlexTopology {
    cell_type: CellType,
    num_points: usize,
    strata: [Range<Point>; 3],
    cone_offsets: Vec<usize>,
    cones: Vec<Point>,
    cone_orientations: Vec<i8>,
    support_offsets: Vec<usize>,
    supports: Vec<Point>,
    cell_vertices: Vec<Point>,
}

impl PlexTopology {
    /// Builds the incidence structure from cell-to-vertex lists given in
    /// reference vertex order. Vertex `v` of the input becomes point
    /// `num_cells + v`.
    pub fn from_cells(cell_type: CellType, num_vertices: usize, cells: &[Vec<usize>]) -> Result<Self> {
        let nv_cell = cell_type.num_vertices();
        let num_cells = cells.len();
        let vstart = num_cells;
        let estart = num_cells + num_vertices;

        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_verts: Vec<(usize, usize)> = Vec::new();
        let mut cell_vertices = Vec::with_capacity(num_cells * nv_cell);
        let mut cell_edges = Vec::with_capacity(num_cells * nv_cell);
        let mut cell_orients = Vec::with_capacity(num_cells * nv_cell);
        for (c, verts) in cells.iter().enumerate() {
            if verts.len() != nv_cell {
                return Err(Error::InvalidArgument(format!(
                    "cell {c} has {} vertices, expected {nv_cell}",
                    verts.len()
                )));
            }
            if let Some(&v) = verts.iter().find(|&&v| v >= num_vertices) {
                return Err(Error::InvalidArgument(format!("cell {c} references vertex {v}")));
            }
            cell_vertices.extend(verts.iter().map(|&v| vstart + v));
            for &[la, lb] in cell_type.edge_vertices() {
                let (a, b) = (verts[la], verts[lb]);
                let key = (a.min(b), a.max(b));
                let next = edge_verts.len();
                let e = *edge_ids.entry(key).or_insert_with(|| {
                    edge_verts.push(key);
                    next
                });
                cell_edges.push(estart + e);
                cell_orients.push(if a < b { 1 } else { -1 });
            }
        }
        let num_edges = edge_verts.len();
        let num_points = estart + num_edges;

        let mut cone_offsets = Vec::with_capacity(num_points + 1);
        let mut cones = Vec::with_capacity(num_cells * nv_cell + 2 * num_edges);
        let mut cone_orientations = Vec::with_capacity(cones.capacity());
        cone_offsets.push(0);
        for c in 0..num_cells {
            cones.extend_from_slice(&cell_edges[c * nv_cell..(c + 1) * nv_cell]);
            cone_orientations.extend_from_slice(&cell_orients[c * nv_cell..(c + 1) * nv_cell]);
            cone_offsets.push(cones.len());
        }
        for _ in 0..num_vertices {
            cone_offsets.push(cones.len());
        }
        for &(a, b) in &edge_verts {
            cones.push(vstart + a);
            cones.push(vstart + b);
            cone_orientations.extend_from_slice(&[1, 1]);
            cone_offsets.push(cones.len());
        }

        let mut support_lists: Vec<Vec<Point>> = vec![Vec::new(); num_points];
        for p in 0..num_points {
            for &q in &cones[cone_offsets[p]..cone_offsets[p + 1]] {
                support_lists[q].push(p);
            }
        }
        let mut support_offsets = Vec::with_capacity(num_points + 1);
        let mut supports = Vec::new();
        support_offsets.push(0);
        for list in support_lists {
            supports.extend(list);
            support_offsets.push(supports.len());
        }

        Ok(Self {
            cell_type,
            num_points,
            strata: [vstart..estart, estart..num_points, 0..num_cells],
            cone_offsets,
            cones,
            cone_orientations,
            support_offsets,
            supports,
            cell_vertices,
        })
    }

    pub fn cell_type(&self) -> CellType {
        self.cell_type
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_cells(&self) -> usize {
        self.strata[2].len()
    }

    pub fn num_vertices(&self) -> usize {
        self.strata[0].len()
    }

    pub fn num_edges(&self) -> usize {
        self.strata[1].len()
    }

    /// Point ids of the entities of dimension `dim`.
    pub fn entities(&self, dim: usize) -> Result<Range<Point>> {
        self.strata
            .get(dim)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("entity dimension {dim} > 2")))
    }

    pub(crate) fn stratum(&self, dim: usize) -> Range<Point> {
        self.strata[dim].clone()
    }

    pub fn dimension(&self, p: Point) -> usize {
        if self.strata[2].contains(&p) {
            2
        } else if self.strata[0].contains(&p) {
            0
        } else {
            1
        }
    }

    fn check(&self, p: Point) -> Result<()> {
        if p < self.num_points {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("point {p} out of range (num_points = {})", self.num_points)))
        }
    }

    pub fn cone(&self, p: Point) -> Result<&[Point]> {
        self.check(p)?;
        Ok(self.cone_of(p))
    }

    pub fn support(&self, p: Point) -> Result<&[Point]> {
        self.check(p)?;
        Ok(self.support_of(p))
    }

    pub(crate) fn cone_of(&self, p: Point) -> &[Point] {
        &self.cones[self.cone_offsets[p]..self.cone_offsets[p + 1]]
    }

    pub fn cone_orientation(&self, p: Point) -> &[i8] {
        &self.cone_orientations[self.cone_offsets[p]..self.cone_offsets[p + 1]]
    }

    pub(crate) fn support_of(&self, p: Point) -> &[Point] {
        &self.supports[self.support_offsets[p]..self.support_offsets[p + 1]]
    }

    /// Vertices of a cell in reference order.
    pub fn cell_vertices(&self, c: Point) -> &[Point] {
        let n = self.cell_type.num_vertices();
        &self.cell_vertices[c * n..(c + 1) * n]
    }

    /// Index of a vertex point within the vertex stratum.
    pub fn vertex_index(&self, v: Point) -> usize {
        v - self.strata[0].start
    }

    /// Transitive closure under `cone`.
    pub fn closure(&self, points: &BTreeSet<Point>) -> Result<BTreeSet<Point>> {
        for &p in points {
            self.check(p)?;
        }
        Ok(self.closure_of(points.iter().copied()))
    }

    /// Transitive closure under `support`.
    pub fn star(&self, points: &BTreeSet<Point>) -> Result<BTreeSet<Point>> {
        for &p in points {
            self.check(p)?;
        }
        Ok(self.star_of(points.iter().copied()))
    }

    pub(crate) fn closure_of(&self, points: impl IntoIterator<Item = Point>) -> BTreeSet<Point> {
        self.transitive(points, |p| self.cone_of(p))
    }

    pub(crate) fn star_of(&self, points: impl IntoIterator<Item = Point>) -> BTreeSet<Point> {
        self.transitive(points, |p| self.support_of(p))
    }

    fn transitive<'a>(
        &'a self,
        points: impl IntoIterator<Item = Point>,
        next: impl Fn(Point) -> &'a [Point],
    ) -> BTreeSet<Point> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<Point> = points.into_iter().collect();
        while let Some(p) = stack.pop() {
            if out.insert(p) {
                stack.extend_from_slice(next(p));
            }
        }
        out
    }

    /// Edges with exactly one adjacent cell.
    pub fn boundary_edges(&self) -> Vec<Point> {
        self.strata[1].clone().filter(|&e| self.support_of(e).len() == 1).collect()
    }
}

/// Vertex coordinates, indexed by position in the vertex stratum.
#[derive(Clone, Debug)]
pub struct MeshGeometry {
    coordinates: Vec<[f64; 2]>,
}

impl MeshGeometry {
    pub fn new(coordinates: Vec<[f64; 2]>) -> Self {
        Self { coordinates }
    }

    pub fn coordinates(&self) -> &[[f64; 2]] {
        &self.coordinates
    }

    pub fn translate(&mut self, shift: [f64; 2]) {
        for x in &mut self.coordinates {
            x[0] += shift[0];
            x[1] += shift[1];
        }
    }
}

/// Topology plus geometry.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub topology: PlexTopology,
    pub geometry: MeshGeometry,
}

impl Mesh {
    pub fn cell_type(&self) -> CellType {
        self.topology.cell_type
    }

    pub fn vertex_coords(&self, v: Point) -> [f64; 2] {
        self.geometry.coordinates[self.topology.vertex_index(v)]
    }

    pub fn cell_coords(&self, c: Point) -> Vec<[f64; 2]> {
        self.topology.cell_vertices(c).iter().map(|&v| self.vertex_coords(v)).collect()
    }

    /// Maps a reference point into the physical cell.
    pub fn map_point(&self, c: Point, xi: [f64; 2]) -> [f64; 2] {
        let x = self.cell_coords(c);
        match self.cell_type() {
            CellType::Triangle => [
                x[0][0] + (x[1][0] - x[0][0]) * xi[0] + (x[2][0] - x[0][0]) * xi[1],
                x[0][1] + (x[1][1] - x[0][1]) * xi[0] + (x[2][1] - x[0][1]) * xi[1],
            ],
            CellType::Quadrilateral => {
                let n = bilinear_weights(xi);
                let mut out = [0.0; 2];
                for (w, xv) in n.iter().zip(&x) {
                    out[0] += w * xv[0];
                    out[1] += w * xv[1];
                }
                out
            }
        }
    }

    /// Jacobian `d x / d xi` at a reference point, as `[[dx/dxi, dx/deta], [dy/dxi, dy/deta]]`.
    pub fn jacobian(&self, c: Point, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let x = self.cell_coords(c);
        match self.cell_type() {
            CellType::Triangle => [
                [x[1][0] - x[0][0], x[2][0] - x[0][0]],
                [x[1][1] - x[0][1], x[2][1] - x[0][1]],
            ],
            CellType::Quadrilateral => {
                let (s, t) = (xi[0], xi[1]);
                let ds = [-(1.0 - t), 1.0 - t, -t, t];
                let dt = [-(1.0 - s), -s, 1.0 - s, s];
                let mut j = [[0.0; 2]; 2];
                for k in 0..4 {
                    for d in 0..2 {
                        j[d][0] += ds[k] * x[k][d];
                        j[d][1] += dt[k] * x[k][d];
                    }
                }
                j
            }
        }
    }

    /// Reference coordinates of a physical point with respect to cell `c`
    /// (Newton iteration; exact after one step on affine cells).
    pub fn reference_coords(&self, c: Point, x: [f64; 2]) -> [f64; 2] {
        let mut xi = match self.cell_type() {
            CellType::Triangle => [1.0 / 3.0; 2],
            CellType::Quadrilateral => [0.5; 2],
        };
        for _ in 0..20 {
            let y = self.map_point(c, xi);
            let j = self.jacobian(c, xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let (rx, ry) = (x[0] - y[0], x[1] - y[1]);
            let d = [(j[1][1] * rx - j[0][1] * ry) / det, (-j[1][0] * rx + j[0][0] * ry) / det];
            xi[0] += d[0];
            xi[1] += d[1];
            if d[0].abs() + d[1].abs() < 1e-15 {
                break;
            }
        }
        xi
    }

    /// First cell containing `x` (brute force) with its reference coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Option<(Point, [f64; 2])> {
        let tol = 1e-12;
        self.topology.stratum(2).find_map(|c| {
            let xi = self.reference_coords(c, x);
            let inside = match self.cell_type() {
                CellType::Triangle => xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol,
                CellType::Quadrilateral => xi.iter().all(|&t| (-tol..=1.0 + tol).contains(&t)),
            };
            inside.then_some((c, xi))
        })
    }

    pub fn cell_area(&self, c: Point) -> f64 {
        let x = self.cell_coords(c);
        let cross = |a: [f64; 2], b: [f64; 2], o: [f64; 2]| {
            (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        };
        match self.cell_type() {
            CellType::Triangle => 0.5 * cross(x[1], x[2], x[0]),
            CellType::Quadrilateral => 0.5 * (cross(x[1], x[3], x[0]) + cross(x[3], x[2], x[0])),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for x in &self.geometry.coordinates {
            for d in 0..2 {
                lo[d] = lo[d].min(x[d]);
                hi[d] = hi[d].max(x[d]);
            }
        }
        (lo, hi)
    }

    /// Midpoint of an edge or centroid of a cell or the vertex itself.
    pub fn point_center(&self, p: Point) -> [f64; 2] {
        let verts: Vec<Point> = match self.topology.dimension(p) {
            0 => vec![p],
            1 => self.topology.cone_of(p).to_vec(),
            _ => self.topology.cell_vertices(p).to_vec(),
        };
        let n = verts.len() as f64;
        let mut c = [0.0; 2];
        for v in verts {
            let x = self.vertex_coords(v);
            c[0] += x[0] / n;
            c[1] += x[1] / n;
        }
        c
    }
}

pub(crate) fn bilinear_weights(xi: [f64; 2]) -> [f64; 4] {
    let (s, t) = (xi[0], xi[1]);
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t]
}

/// Structured mesh of `[0, extent_x] x [0, extent_y]` with `nx * ny` squares.
/// Triangle meshes split every square along its lower-left to upper-right
/// diagonal.
pub fn build_structured(nx: usize, ny: usize, cell: CellType, extent: [f64; 2]) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!("structured mesh needs nx, ny >= 1, got {nx}x{ny}")));
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push([extent[0] * i as f64 / nx as f64, extent[1] * j as f64 / ny as f64]);
        }
    }
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            match cell {
                CellType::Triangle => {
                    cells.push(vec![v00, v10, v11]);
                    cells.push(vec![v00, v11, v01]);
                }
                CellType::Quadrilateral => cells.push(vec![v00, v10, v01, v11]),
            }
        }
    }
    let topology = PlexTopology::from_cells(cell, coords.len(), &cells)?;
    Ok(Mesh { topology, geometry: MeshGeometry::new(coords) })
}

/// Parent/child relation between the points of a mesh and its refinement.
#[derive(Clone, Debug)]
pub struct RefinementMap {
    /// Per fine point: the coarse point it subdivides or lies interior to.
    pub parent: Vec<Point>,
    /// Per coarse point: the fine points with that parent.
    pub children: Vec<Vec<Point>>,
}

/// Uniform refinement: triangles by edge-midpoint subdivision, quadrilaterals
/// into four quadrilaterals through edge midpoints and the centroid.
pub fn uniform_refine(mesh: &Mesh) -> (Mesh, RefinementMap) {
    let topo = &mesh.topology;
    let ct = topo.cell_type;
    let nv = topo.num_vertices();
    let ne = topo.num_edges();
    let nc = topo.num_cells();

    // fine vertex numbering: coarse vertices, then edge midpoints, then quad centroids
    let mut coords = mesh.geometry.coordinates.clone();
    let mut vertex_parent: Vec<Point> = topo.stratum(0).collect();
    for e in topo.stratum(1) {
        coords.push(mesh.point_center(e));
        vertex_parent.push(e);
    }
    if ct == CellType::Quadrilateral {
        for c in topo.stratum(2) {
            coords.push(mesh.point_center(c));
            vertex_parent.push(c);
        }
    }
    let vstart = topo.stratum(0).start;
    let estart = topo.stratum(1).start;
    let mid = |e: Point| nv + (e - estart);

    let mut fine_cells = Vec::with_capacity(4 * nc);
    let mut cell_parent = Vec::with_capacity(4 * nc);
    for c in topo.stratum(2) {
        let v: Vec<usize> = topo.cell_vertices(c).iter().map(|&p| p - vstart).collect();
        let m: Vec<usize> = topo.cone_of(c).iter().map(|&e| mid(e)).collect();
        let children: Vec<Vec<usize>> = match ct {
            CellType::Triangle => vec![
                vec![v[0], m[2], m[1]],
                vec![m[2], v[1], m[0]],
                vec![m[1], m[0], v[2]],
                vec![m[0], m[1], m[2]],
            ],
            CellType::Quadrilateral => {
                let center = nv + ne + c;
                vec![
                    vec![v[0], m[0], m[1], center],
                    vec![m[0], v[1], center, m[2]],
                    vec![m[1], center, v[2], m[3]],
                    vec![center, m[2], m[3], v[3]],
                ]
            }
        };
        for child in children {
            fine_cells.push(child);
            cell_parent.push(c);
        }
    }
    let fine_topo = PlexTopology::from_cells(ct, coords.len(), &fine_cells)
        .expect("refined cells reference valid vertices");

    let mut parent = vec![usize::MAX; fine_topo.num_points];
    for (fc, &pc) in cell_parent.iter().enumerate() {
        parent[fc] = pc;
    }
    let fvstart = fine_topo.stratum(0).start;
    for (i, &p) in vertex_parent.iter().enumerate() {
        parent[fvstart + i] = p;
    }
    for fe in fine_topo.stratum(1) {
        let cone = fine_topo.cone_of(fe);
        let (pa, pb) = (parent[cone[0]], parent[cone[1]]);
        // half of a coarse edge: one end is a coarse vertex, the other that edge's midpoint
        let halves = |v: Point, e: Point| topo.dimension(v) == 0 && topo.dimension(e) == 1 && topo.cone_of(e).contains(&v);
        parent[fe] = if halves(pa, pb) {
            pb
        } else if halves(pb, pa) {
            pa
        } else {
            let fc = fine_topo.support_of(fe)[0];
            parent[fc]
        };
    }
    let mut children = vec![Vec::new(); topo.num_points];
    for (fp, &cp) in parent.iter().enumerate() {
        children[cp].push(fp);
    }
    (
        Mesh { topology: fine_topo, geometry: MeshGeometry::new(coords) },
        RefinementMap { parent, children },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[Point]) -> BTreeSet<Point> {
        v.iter().copied().collect()
    }

    #[test]
    fn counts_structured() {
        let m = build_structured(1, 1, CellType::Triangle, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        assert_eq!((t.num_vertices(), t.num_edges(), t.num_cells(), t.num_points()), (4, 5, 2, 11));
        let m = build_structured(2, 2, CellType::Triangle, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        assert_eq!((t.num_vertices(), t.num_edges(), t.num_cells()), (9, 16, 8));
        assert_eq!(9 - 16 + 8, 1);
        let m = build_structured(2, 2, CellType::Quadrilateral, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        assert_eq!((t.num_vertices(), t.num_edges(), t.num_cells()), (9, 12, 4));
        assert_eq!(t.entities(0).unwrap().len(), 9);
    }

    #[test]
    fn zero_size_rejected() {
        assert!(build_structured(0, 3, CellType::Triangle, [1.0, 1.0]).is_err());
    }

    #[test]
    fn cone_and_support_basics() {
        let m = build_structured(2, 2, CellType::Triangle, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        for c in t.stratum(2) {
            assert_eq!(t.cone(c).unwrap().len(), 3);
            assert!(t.support(c).unwrap().is_empty());
        }
        for e in t.stratum(1) {
            assert_eq!(t.cone(e).unwrap().len(), 2);
            let s = t.support(e).unwrap().len();
            assert!(s == 1 || s == 2);
        }
        for v in t.stratum(0) {
            assert!(t.cone(v).unwrap().is_empty());
        }
        assert!(t.cone(t.num_points()).is_err());
        assert!(t.entities(3).is_err());
    }

    #[test]
    fn closure_and_star_examples() {
        let m = build_structured(1, 1, CellType::Triangle, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        assert_eq!(t.closure(&set(&[0])).unwrap().len(), 7);
        let interior_edge = t.stratum(1).find(|&e| t.support_of(e).len() == 2).unwrap();
        assert_eq!(t.closure(&set(&[interior_edge])).unwrap().len(), 3);
        assert_eq!(t.star(&set(&[1])).unwrap(), set(&[1]));

        let m = build_structured(2, 2, CellType::Triangle, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        let center = t.stratum(0).start + 4;
        assert_eq!(t.star(&set(&[center])).unwrap().len(), 13);
        // corners (0,0) and (1,1) lie on the split diagonal
        let ll = t.stratum(0).start;
        let ur = t.stratum(0).start + 8;
        assert_eq!(t.star(&set(&[ll])).unwrap().len(), 6);
        assert_eq!(t.star(&set(&[ur])).unwrap().len(), 6);
        let lr = t.stratum(0).start + 2;
        assert_eq!(t.star(&set(&[lr])).unwrap().len(), 4);
    }

    #[test]
    fn orientation_follows_vertex_order() {
        let m = build_structured(3, 2, CellType::Triangle, [1.0, 1.0]).unwrap();
        let t = &m.topology;
        for c in t.stratum(2) {
            let verts = t.cell_vertices(c);
            for (k, &[la, lb]) in CellType::Triangle.edge_vertices().iter().enumerate() {
                let e = t.cone_of(c)[k];
                let cone = t.cone_of(e);
                let expected = if verts[la] < verts[lb] { 1 } else { -1 };
                assert_eq!(t.cone_orientation(c)[k], expected);
                assert_eq!(set(cone), set(&[verts[la], verts[lb]]));
                assert!(cone[0] < cone[1]);
            }
        }
    }

    #[test]
    fn positive_jacobians() {
        for ct in [CellType::Triangle, CellType::Quadrilateral] {
            let m = build_structured(3, 2, ct, [2.0, 1.0]).unwrap();
            let (m, _) = uniform_refine(&m);
            for c in m.topology.stratum(2) {
                let j = m.jacobian(c, [0.3, 0.3]);
                assert!(j[0][0] * j[1][1] - j[0][1] * j[1][0] > 0.0);
                assert!(m.cell_area(c) > 0.0);
            }
        }
    }

    #[test]
    fn refinement_counts() {
        let m = build_structured(1, 1, CellType::Quadrilateral, [1.0, 1.0]).unwrap();
        let (f, _) = uniform_refine(&m);
        let t = &f.topology;
        assert_eq!((t.num_vertices(), t.num_edges(), t.num_cells()), (9, 12, 4));

        let m = build_structured(2, 2, CellType::Triangle, [1.0, 1.0]).unwrap();
        let (f, _) = uniform_refine(&m);
        let t = &f.topology;
        assert_eq!((t.num_vertices(), t.num_edges(), t.num_cells()), (25, 56, 32));
        assert_eq!(25 - 56 + 32, 1);

        for ct in [CellType::Triangle, CellType::Quadrilateral] {
            let m = build_structured(3, 2, ct, [1.0, 1.0]).unwrap();
            let (f, _) = uniform_refine(&m);
            let (ff, _) = uniform_refine(&f);
            let s = build_structured(12, 8, ct, [1.0, 1.0]).unwrap();
            let (a, b) = (&ff.topology, &s.topology);
            assert_eq!(
                (a.num_vertices(), a.num_edges(), a.num_cells()),
                (b.num_vertices(), b.num_edges(), b.num_cells())
            );
        }
    }

    #[test]
    fn refinement_map_consistency() {
        for ct in [CellType::Triangle, CellType::Quadrilateral] {
            let m = build_structured(2, 3, ct, [1.0, 1.5]).unwrap();
            let (f, map) = uniform_refine(&m);
            assert_eq!(map.parent.len(), f.topology.num_points());
            for (cp, kids) in map.children.iter().enumerate() {
                for &k in kids {
                    assert_eq!(map.parent[k], cp);
                }
            }
            // each coarse vertex has exactly one fine vertex child at the same spot
            for v in m.topology.stratum(0) {
                let kids: Vec<_> = map.children[v].iter().filter(|&&k| f.topology.dimension(k) == 0).collect();
                assert_eq!(kids.len(), 1);
                assert_eq!(f.vertex_coords(*kids[0]), m.vertex_coords(v));
            }
            for c in m.topology.stratum(2) {
                let cells = map.children[c].iter().filter(|&&k| f.topology.dimension(k) == 2).count();
                assert_eq!(cells, 4);
            }
            for e in m.topology.stratum(1) {
                let edges = map.children[e].iter().filter(|&&k| f.topology.dimension(k) == 1).count();
                assert_eq!(edges, 2);
            }
            let area = |m: &Mesh| m.topology.stratum(2).map(|c| m.cell_area(c)).sum::<f64>();
            assert!((area(&m) - area(&f)).abs() <= 1e-12 * area(&m));
        }
    }
}
