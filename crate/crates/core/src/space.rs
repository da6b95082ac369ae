//! Global function spaces: per-point dof sections, signed cell-to-dof maps,
//! mixed spaces and Dirichlet constraint sets.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::reference::{Family, Mapping, ReferenceElement};
use crate::topology::{Mesh, Point};

/// Per-point dof counts and offsets.
#[derive(Clone, Debug)]
pub struct Section {
    counts: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Section {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(counts.len());
        let mut total = 0;
        for &c in &counts {
            offsets.push(total);
            total += c;
        }
        Self { counts, offsets, total }
    }

    pub fn dof_count(&self, p: Point) -> usize {
        self.counts[p]
    }

    pub fn offset(&self, p: Point) -> usize {
        self.offsets[p]
    }

    pub fn total_dofs(&self) -> usize {
        self.total
    }
}

/// A (possibly vector-valued, by component blocking) finite element space.
///
/// Global dofs are numbered point by point; for blocked spaces the
/// components of one node are adjacent. Cell-local dof `basis * components
/// + component` maps to `cell_dofs`.
#[derive(Clone, Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    element: Arc<ReferenceElement>,
    components: usize,
    section: Section,
    cell_dofs: Vec<usize>,
    cell_signs: Vec<f64>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, element: Arc<ReferenceElement>) -> Result<Self> {
        Self::blocked(mesh, element, 1)
    }

    /// `components` copies of a scalar element (vector Lagrange).
    pub fn blocked(mesh: Arc<Mesh>, element: Arc<ReferenceElement>, components: usize) -> Result<Self> {
        if element.cell() != mesh.cell_type() {
            return Err(Error::CellTypeMismatch);
        }
        if components == 0 || (components > 1 && element.value_size() != 1) {
            return Err(Error::InvalidArgument("only scalar elements can be blocked".into()));
        }
        let topo = &mesh.topology;
        let mut counts = vec![0usize; topo.num_points()];
        let per_dim = [
            element.entity_dofs(0, 0).len(),
            element.entity_dofs(1, 0).len(),
            element.entity_dofs(2, 0).len(),
        ];
        for p in 0..topo.num_points() {
            counts[p] = per_dim[topo.dimension(p)] * components;
        }
        let section = Section::from_counts(counts);

        let nb = element.n_basis();
        let nloc = nb * components;
        let piola = element.mapping() != Mapping::Identity;
        let mut cell_dofs = vec![usize::MAX; topo.num_cells() * nloc];
        let mut cell_signs = vec![1.0; topo.num_cells() * nloc];
        for c in topo.stratum(2) {
            let base = c * nloc;
            let mut place = |local_basis: usize, point: Point, entity_index: usize, sign: f64| {
                for comp in 0..components {
                    let l = local_basis * components + comp;
                    cell_dofs[base + l] = section.offset(point) + entity_index * components + comp;
                    cell_signs[base + l] = sign;
                }
            };
            for (lv, &v) in topo.cell_vertices(c).iter().enumerate() {
                for (k, &b) in element.entity_dofs(0, lv).iter().enumerate() {
                    place(b, v, k, 1.0);
                }
            }
            let orient = topo.cone_orientation(c);
            for (le, &e) in topo.cone_of(c).iter().enumerate() {
                let dofs = element.entity_dofs(1, le);
                let n = dofs.len();
                for (k, &b) in dofs.iter().enumerate() {
                    if piola {
                        place(b, e, k, orient[le] as f64);
                    } else {
                        // edge nodes run along the global edge direction
                        let kk = if orient[le] > 0 { k } else { n - 1 - k };
                        place(b, e, kk, 1.0);
                    }
                }
            }
            for (k, &b) in element.entity_dofs(2, 0).iter().enumerate() {
                place(b, c, k, 1.0);
            }
        }
        Ok(Self { mesh, element, components, section, cell_dofs, cell_signs })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn element(&self) -> &Arc<ReferenceElement> {
        &self.element
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn section(&self) -> &Section {
        &self.section
    }

    pub fn num_dofs(&self) -> usize {
        self.section.total_dofs()
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.element.n_basis() * self.components
    }

    pub fn cell_dofs(&self, c: Point) -> &[usize] {
        let n = self.dofs_per_cell();
        &self.cell_dofs[c * n..(c + 1) * n]
    }

    pub fn cell_signs(&self, c: Point) -> &[f64] {
        let n = self.dofs_per_cell();
        &self.cell_signs[c * n..(c + 1) * n]
    }

    /// Dofs attached to the given points, in ascending point order.
    pub fn dofs_on_points<'a>(&self, points: impl IntoIterator<Item = &'a Point>) -> Vec<usize> {
        let mut out = Vec::new();
        for &p in points {
            let off = self.section.offset(p);
            out.extend(off..off + self.section.dof_count(p));
        }
        out
    }

    /// Value of the field with global coefficients `coeffs` at reference
    /// point `xi` of cell `c`, mapped to the physical cell.
    pub fn evaluate(&self, coeffs: &[f64], c: Point, xi: [f64; 2]) -> [f64; 2] {
        let tab = self.element.tabulate(&[xi], 0);
        let mut v = [0.0; 2];
        for (l, (&d, &s)) in self.cell_dofs(c).iter().zip(self.cell_signs(c)).enumerate() {
            let b = l / self.components;
            if self.components > 1 {
                v[l % self.components] += coeffs[d] * tab.value(0, b, 0);
            } else {
                for comp in 0..self.element.value_size() {
                    v[comp] += s * coeffs[d] * tab.value(0, b, comp);
                }
            }
        }
        let j = self.mesh.jacobian(c, xi);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        match self.element.mapping() {
            Mapping::Identity => v,
            Mapping::ContravariantPiola => {
                [(j[0][0] * v[0] + j[0][1] * v[1]) / det, (j[1][0] * v[0] + j[1][1] * v[1]) / det]
            }
            Mapping::CovariantPiola => {
                [(j[1][1] * v[0] - j[1][0] * v[1]) / det, (-j[0][1] * v[0] + j[0][0] * v[1]) / det]
            }
        }
    }

    /// Physical node location of every dof (Lagrange only).
    pub fn dof_coordinates(&self) -> Option<Vec<[f64; 2]>> {
        let nodes = self.element.nodes()?;
        let mut x = vec![[f64::NAN; 2]; self.num_dofs()];
        for c in self.mesh.topology.stratum(2) {
            for (l, &d) in self.cell_dofs(c).iter().enumerate() {
                x[d] = self.mesh.map_point(c, nodes[l / self.components]);
            }
        }
        Some(x)
    }
}

/// Ordered list of subspaces numbered block-wise.
#[derive(Clone, Debug)]
pub struct MixedSpace {
    subspaces: Vec<FunctionSpace>,
    block_offsets: Vec<usize>,
    total: usize,
}

impl From<FunctionSpace> for MixedSpace {
    fn from(space: FunctionSpace) -> Self {
        MixedSpace::new(vec![space]).expect("single subspace")
    }
}

impl MixedSpace {
    pub fn new(subspaces: Vec<FunctionSpace>) -> Result<Self> {
        let first = subspaces
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixed space needs at least one subspace".into()))?;
        if subspaces.iter().any(|s| !Arc::ptr_eq(s.mesh(), first.mesh())) {
            return Err(Error::InvalidArgument("subspaces must share one mesh".into()));
        }
        let mut block_offsets = Vec::with_capacity(subspaces.len());
        let mut total = 0;
        for s in &subspaces {
            block_offsets.push(total);
            total += s.num_dofs();
        }
        Ok(Self { subspaces, block_offsets, total })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.subspaces[0].mesh()
    }

    pub fn subspaces(&self) -> &[FunctionSpace] {
        &self.subspaces
    }

    pub fn subspace(&self, i: usize) -> &FunctionSpace {
        &self.subspaces[i]
    }

    pub fn num_subspaces(&self) -> usize {
        self.subspaces.len()
    }

    pub fn block_offset(&self, i: usize) -> usize {
        self.block_offsets[i]
    }

    pub fn num_dofs(&self) -> usize {
        self.total
    }

    /// Subspace owning a global dof.
    pub fn subspace_of(&self, dof: usize) -> usize {
        self.block_offsets.partition_point(|&o| o <= dof) - 1
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.subspaces.iter().map(FunctionSpace::dofs_per_cell).sum()
    }

    /// Global dofs and signs of a cell, subspace blocks concatenated.
    pub fn cell_dofs(&self, c: Point) -> (Vec<usize>, Vec<f64>) {
        let mut dofs = Vec::with_capacity(self.dofs_per_cell());
        let mut signs = Vec::with_capacity(self.dofs_per_cell());
        for (s, off) in self.subspaces.iter().zip(&self.block_offsets) {
            dofs.extend(s.cell_dofs(c).iter().map(|d| d + off));
            signs.extend_from_slice(s.cell_signs(c));
        }
        (dofs, signs)
    }

    /// Global dofs of subspace `sub` on the points.
    pub fn dofs_on_points<'a>(&self, sub: usize, points: impl IntoIterator<Item = &'a Point>) -> Vec<usize> {
        let off = self.block_offsets[sub];
        self.subspaces[sub].dofs_on_points(points).into_iter().map(|d| d + off).collect()
    }

    /// Global dofs of all subspaces on the points, ascending.
    pub fn all_dofs_on_points(&self, points: &BTreeSet<Point>) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.num_subspaces()).flat_map(|s| self.dofs_on_points(s, points)).collect();
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundarySelector {
    Empty,
    All,
    Sides(Vec<Side>),
}

pub type BoundaryValue = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Dirichlet condition on one subspace. Values are taken per component from
/// `value` at the node location (zero when absent).
#[derive(Clone)]
pub struct DirichletBC {
    pub subspace: usize,
    pub selector: BoundarySelector,
    pub value: Option<BoundaryValue>,
}

impl std::fmt::Debug for DirichletBC {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletBC")
            .field("subspace", &self.subspace)
            .field("selector", &self.selector)
            .field("value", &self.value.as_ref().map(|_| "fn"))
            .finish()
    }
}

impl DirichletBC {
    pub fn homogeneous(subspace: usize, selector: BoundarySelector) -> Self {
        Self { subspace, selector, value: None }
    }

    pub fn with_value(subspace: usize, selector: BoundarySelector, value: BoundaryValue) -> Self {
        Self { subspace, selector, value: Some(value) }
    }

    /// Points in the closure of the selected boundary edges.
    pub fn boundary_points(&self, mesh: &Mesh) -> BTreeSet<Point> {
        let topo = &mesh.topology;
        let (lo, hi) = mesh.bounding_box();
        let tol = 1e-10 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let on_side = |e: Point, side: Side| {
            topo.cone_of(e).iter().all(|&v| {
                let x = mesh.vertex_coords(v);
                match side {
                    Side::Left => (x[0] - lo[0]).abs() < tol,
                    Side::Right => (x[0] - hi[0]).abs() < tol,
                    Side::Bottom => (x[1] - lo[1]).abs() < tol,
                    Side::Top => (x[1] - hi[1]).abs() < tol,
                }
            })
        };
        let edges: Vec<Point> = match &self.selector {
            BoundarySelector::Empty => Vec::new(),
            BoundarySelector::All => topo.boundary_edges(),
            BoundarySelector::Sides(sides) => topo
                .boundary_edges()
                .into_iter()
                .filter(|&e| sides.iter().any(|&s| on_side(e, s)))
                .collect(),
        };
        topo.closure_of(edges)
    }

    /// Constrained global dofs with their values, ascending by dof.
    pub fn constrained(&self, space: &MixedSpace) -> Result<Vec<(usize, f64)>> {
        if self.subspace >= space.num_subspaces() {
            return Err(Error::InvalidArgument(format!("no subspace {}", self.subspace)));
        }
        let sub = space.subspace(self.subspace);
        let points = self.boundary_points(sub.mesh());
        let dofs = space.dofs_on_points(self.subspace, &points);
        let off = space.block_offset(self.subspace);
        let coords = match (&self.value, sub.element().family()) {
            (Some(_), Family::Lagrange) => sub.dof_coordinates(),
            (Some(_), _) => {
                return Err(Error::InvalidArgument("nonzero boundary values need a Lagrange space".into()))
            }
            _ => None,
        };
        Ok(dofs
            .into_iter()
            .map(|d| {
                let v = match (&self.value, &coords) {
                    (Some(f), Some(x)) => f(x[d - off])[(d - off) % sub.components()],
                    _ => 0.0,
                };
                (d, v)
            })
            .collect())
    }
}

/// Sorted global dof list with a global-to-local lookup.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalNumbering {
    dofs: Vec<usize>,
}

impl LocalNumbering {
    pub fn new(mut dofs: Vec<usize>) -> Self {
        dofs.sort_unstable();
        dofs.dedup();
        Self { dofs }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        self.dofs.binary_search(&global).ok()
    }
}

/// Union of the constrained dofs of several conditions (later ones win).
pub fn dirichlet_dofs(space: &MixedSpace, bcs: &[DirichletBC]) -> Result<Vec<(usize, f64)>> {
    let mut all = std::collections::BTreeMap::new();
    for bc in bcs {
        for (d, v) in bc.constrained(space)? {
            all.insert(d, v);
        }
    }
    Ok(all.into_iter().collect())
}

/// Boolean mask of constrained dofs.
pub fn dirichlet_mask(space: &MixedSpace, bcs: &[DirichletBC]) -> Result<Vec<bool>> {
    let mut mask = vec![false; space.num_dofs()];
    for (d, _) in dirichlet_dofs(space, bcs)? {
        mask[d] = true;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{lagrange, nedelec_0, raviart_thomas_0};
    use crate::topology::{build_structured, CellType};

    fn mesh(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured(n, n, CellType::Triangle, [1.0, 1.0]).unwrap())
    }

    #[test]
    fn dof_counts() {
        let m = mesh(2);
        let p1 = FunctionSpace::new(m.clone(), Arc::new(lagrange(CellType::Triangle, 1).unwrap())).unwrap();
        assert_eq!(p1.num_dofs(), 9);
        let rt = FunctionSpace::new(m.clone(), Arc::new(raviart_thomas_0(CellType::Triangle).unwrap())).unwrap();
        assert_eq!(rt.num_dofs(), 16);
        let p4 = FunctionSpace::new(m.clone(), Arc::new(lagrange(CellType::Triangle, 4).unwrap())).unwrap();
        assert_eq!(p4.num_dofs(), 9 + 16 * 3 + 8 * 3);
        let q = Arc::new(lagrange(CellType::Quadrilateral, 1).unwrap());
        assert!(matches!(FunctionSpace::new(m, q), Err(Error::CellTypeMismatch)));
    }

    #[test]
    fn shared_edge_dofs_agree_and_lagrange_signs_positive() {
        let m = mesh(3);
        for k in 1..=4 {
            let s = FunctionSpace::new(m.clone(), Arc::new(lagrange(CellType::Triangle, k).unwrap())).unwrap();
            let x = s.dof_coordinates().unwrap();
            // every cell-local node lands on its global node location
            let nodes = s.element().nodes().unwrap();
            for c in m.topology.stratum(2) {
                assert!(s.cell_signs(c).iter().all(|&v| v == 1.0));
                for (l, &d) in s.cell_dofs(c).iter().enumerate() {
                    let y = m.map_point(c, nodes[l]);
                    assert!((x[d][0] - y[0]).abs() < 1e-14 && (x[d][1] - y[1]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn boundary_selection() {
        let m = mesh(2);
        let p1: MixedSpace =
            FunctionSpace::new(m.clone(), Arc::new(lagrange(CellType::Triangle, 1).unwrap())).unwrap().into();
        let all = DirichletBC::homogeneous(0, BoundarySelector::All);
        assert_eq!(all.constrained(&p1).unwrap().len(), 8);
        let rt: MixedSpace =
            FunctionSpace::new(m.clone(), Arc::new(raviart_thomas_0(CellType::Triangle).unwrap())).unwrap().into();
        assert_eq!(all.constrained(&rt).unwrap().len(), 8);
        let none = DirichletBC::homogeneous(0, BoundarySelector::Empty);
        assert!(none.constrained(&p1).unwrap().is_empty());
        let top_left = DirichletBC::homogeneous(0, BoundarySelector::Sides(vec![Side::Top, Side::Left]));
        assert_eq!(top_left.constrained(&p1).unwrap().len(), 5);
    }

    #[test]
    fn dofs_on_center_star() {
        let m = mesh(2);
        let center = m.topology.stratum(0).start + 4;
        let star = m.topology.star_of([center]);
        let p1 = FunctionSpace::new(m.clone(), Arc::new(lagrange(CellType::Triangle, 1).unwrap())).unwrap();
        assert_eq!(p1.dofs_on_points(&star).len(), 1);
        let rt = FunctionSpace::new(m.clone(), Arc::new(raviart_thomas_0(CellType::Triangle).unwrap())).unwrap();
        assert_eq!(rt.dofs_on_points(&star).len(), 6);
        let ned = FunctionSpace::new(m.clone(), Arc::new(nedelec_0(CellType::Triangle).unwrap())).unwrap();
        assert!(ned.dofs_on_points(&BTreeSet::new()).is_empty());
    }

    #[test]
    fn mixed_blocks() {
        let m = Arc::new(build_structured(2, 2, CellType::Quadrilateral, [1.0, 1.0]).unwrap());
        let v = FunctionSpace::blocked(m.clone(), Arc::new(lagrange(CellType::Quadrilateral, 2).unwrap()), 2).unwrap();
        let p = FunctionSpace::new(m.clone(), Arc::new(lagrange(CellType::Quadrilateral, 1).unwrap())).unwrap();
        assert_eq!(v.num_dofs(), 2 * 25);
        let w = MixedSpace::new(vec![v, p]).unwrap();
        assert_eq!(w.num_dofs(), 59);
        assert_eq!(w.block_offset(1), 50);
        assert_eq!(w.subspace_of(49), 0);
        assert_eq!(w.subspace_of(50), 1);
        let (dofs, _) = w.cell_dofs(0);
        assert_eq!(dofs.len(), 18 + 4);
    }
}
