mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::Reachability;
use patchmg::topology::{build_structured, uniform_refine, CellType};

#[test]
fn star_and_closure_match_reachability_oracle() {
    for n in [2, 4] {
        let mesh = build_structured(n, n, CellType::Triangle, [1.0, 1.0]).unwrap();
        let topo = &mesh.topology;
        let oracle = Reachability::new(topo);
        for p in 0..topo.num_points() {
            let s = BTreeSet::from([p]);
            assert_eq!(topo.closure(&s).unwrap(), oracle.closure(&s));
            assert_eq!(topo.star(&s).unwrap(), oracle.star(&s));
        }
    }
}

#[test]
fn euler_characteristic_of_square() {
    for ct in [CellType::Triangle, CellType::Quadrilateral] {
        let mesh = build_structured(3, 5, ct, [1.0, 1.0]).unwrap();
        let t = &mesh.topology;
        assert_eq!(t.num_vertices() as i64 - t.num_edges() as i64 + t.num_cells() as i64, 1);
        let fine = uniform_refine(&mesh).0;
        assert_eq!(fine.topology.num_cells(), 4 * t.num_cells());
    }
}

#[test]
fn interior_vertex_star_has_six_triangles() {
    let mesh = build_structured(4, 4, CellType::Triangle, [1.0, 1.0]).unwrap();
    let t = &mesh.topology;
    let v = t.entities(0).unwrap().start + 2 * 5 + 2;
    let st = t.star(&BTreeSet::from([v])).unwrap();
    assert_eq!(st.iter().filter(|&&p| t.dimension(p) == 2).count(), 6);
    assert_eq!(st.iter().filter(|&&p| t.dimension(p) == 1).count(), 6);
}

fn mesh_strategy() -> impl Strategy<Value = (usize, usize, bool)> {
    (1usize..5, 1usize..5, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cone_support_duality((nx, ny, quad) in mesh_strategy()) {
        let ct = if quad { CellType::Quadrilateral } else { CellType::Triangle };
        let mesh = build_structured(nx, ny, ct, [1.0, 1.0]).unwrap();
        let t = &mesh.topology;
        for p in 0..t.num_points() {
            for &q in t.cone(p).unwrap() {
                prop_assert!(t.support(q).unwrap().contains(&p));
            }
            for &q in t.support(p).unwrap() {
                prop_assert!(t.cone(q).unwrap().contains(&p));
            }
        }
    }

    #[test]
    fn closure_and_star_are_closure_operators(
        (nx, ny, quad) in mesh_strategy(),
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..6),
        extra in any::<prop::sample::Index>(),
    ) {
        let ct = if quad { CellType::Quadrilateral } else { CellType::Triangle };
        let mesh = build_structured(nx, ny, ct, [1.0, 1.0]).unwrap();
        let t = &mesh.topology;
        let n = t.num_points();
        let s: BTreeSet<usize> = picks.iter().map(|i| i.index(n)).collect();
        let mut bigger = s.clone();
        bigger.insert(extra.index(n));
        for op in [0, 1] {
            let f = |x: &BTreeSet<usize>| if op == 0 { t.closure(x).unwrap() } else { t.star(x).unwrap() };
            let fs = f(&s);
            prop_assert!(s.is_subset(&fs));
            prop_assert_eq!(f(&fs), fs.clone());
            prop_assert!(fs.is_subset(&f(&bigger)));
        }
    }
}
