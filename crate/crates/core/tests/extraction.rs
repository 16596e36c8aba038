use std::time::Instant;

use chainrep::complex::{check_dependencies, topology_residuals};
use chainrep::extraction::{extract_complex, ExtractOptions};
use chainrep::synth::{corrupt, generate_gt, CorruptionParams, Shape};
use chainrep::Complex;

#[test]
fn round_trip_all_shapes_mild() {
    for shape in Shape::FAMILIES {
        let gt: Complex = generate_gt(shape).unwrap();
        let t = Instant::now();
        let p = corrupt(&gt, &CorruptionParams { seed: 7, ..CorruptionParams::default() });
        let ex = extract_complex(&p, &ExtractOptions::default()).unwrap();
        eprintln!(
            "{shape}: vars {} cons {} nodes {} {:?} -> {}/{}/{} in {:?}",
            ex.num_vars,
            ex.num_constraints,
            ex.solution.nodes,
            ex.solution.method,
            ex.complex.num_patches(),
            ex.complex.num_curves(),
            ex.complex.num_corners(),
            t.elapsed()
        );
        assert!(topology_residuals(&ex.complex).unwrap().is_zero());
        assert!(check_dependencies(&ex.complex));
        assert_eq!(ex.complex.fe, gt.fe, "{shape}");
        assert_eq!(ex.complex.ev, gt.ev, "{shape}");
        assert_eq!(ex.complex.fv, gt.fv, "{shape}");
    }
}

mod linearization {
    use chainrep::complex::is_valid_topology;
    use chainrep::extraction::{
        build_ilp, combine_probabilities, nms, proximity_matrices, solve_ilp, IlpWeights, SolveOptions, VarKind,
    };
    use chainrep::geometry::FITNESS_EPSILON;
    use chainrep::synth::{corrupt, generate_gt, CorruptionParams, Shape};
    use chainrep::Complex;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

        #[test]
        fn auxiliaries_equal_products(shape in 0usize..4, beta in 0.0f64..0.45, seed in 0u64..1000) {
            let shape = [Shape::Cube, Shape::CappedCylinder, Shape::Prism(3), Shape::Sphere][shape];
            let gt: Complex = generate_gt(shape).unwrap();
            let params = CorruptionParams {
                sigma_g: 0.01,
                validness_blur: beta,
                topology_blur: beta,
                spurious: 1,
                outliers: 1,
                seed,
            };
            let p = corrupt(&gt, &params);
            let (d, _) = nms(&p, 0.05);
            let c = combine_probabilities(&d);
            let s = proximity_matrices(&d, FITNESS_EPSILON);
            let em = build_ilp(&c, &s, &IlpWeights::default(), 0.3).unwrap();
            let m = &em.model;
            let sol = solve_ilp(m, &SolveOptions::default()).unwrap();
            prop_assert!(m.is_feasible(&sol.values));
            let on = |k| sol.value(m, k);
            for b in 0..em.edges.len() {
                prop_assert_eq!(on(VarKind::Y(b)), on(VarKind::E(b)) && on(VarKind::O(b)));
                for a in 0..em.faces.len() {
                    for k in 0..em.verts.len() {
                        prop_assert_eq!(
                            on(VarKind::Z(a, b, k)),
                            on(VarKind::FE(a, b)) && on(VarKind::EV(b, k))
                        );
                    }
                }
            }
            let ex = chainrep::extract_complex(&p, &Default::default()).unwrap();
            prop_assert!(is_valid_topology(&ex.complex));
        }
    }
}
