mod common;

use common::{general_vertex_enumeration, rel_diff, vertex_enumeration};
use lpdiff::lp::{presolve, to_standard_form, GeneralProblem, Sense};
use lpdiff::solver::{solve, SolverConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Bounded feasible problem: every inequality row has positive coefficients, so
/// `x` lives in a box, and a nonnegative point `x0` satisfies every row.
fn general_problem() -> impl Strategy<Value = GeneralProblem> {
    (1usize..=4, 0usize..=2, 1usize..=3, any::<bool>()).prop_flat_map(|(n, m_eq, m_ub, max)| {
        let m_eq = m_eq.min(n - 1);
        (
            prop::collection::vec(0.0..2.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, m_eq * n),
            prop::collection::vec(0.1..2.0f64, m_ub * n),
            prop::collection::vec(0.1..1.0f64, m_ub),
        )
            .prop_map(move |(x0, c, aeq, aub, slack)| {
                let x0 = DVector::from_vec(x0);
                let a_eq = DMatrix::from_row_slice(m_eq, n, &aeq);
                let a_ub = DMatrix::from_row_slice(m_ub, n, &aub);
                let b_eq = &a_eq * &x0;
                let b_ub = &a_ub * &x0 + DVector::from_vec(slack);
                let sense = if max { Sense::Max } else { Sense::Min };
                GeneralProblem::new(sense, DVector::from_vec(c), a_eq, b_eq, a_ub, b_ub).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_survives_the_variable_map(p in general_problem()) {
        let lp = to_standard_form(&p).unwrap();
        let (lp, _) = presolve(&lp).unwrap();
        let sol = solve(&lp, &SolverConfig::default()).unwrap();
        let back = p.objective(&lp.original_x(&sol.x));
        let fwd = lp.original_objective(&sol.x);
        prop_assert!((back - fwd).abs() <= 1e-12 * fwd.abs().max(1.0), "{back} vs {fwd}");
    }

    #[test]
    fn standard_form_keeps_the_feasible_region(p in general_problem()) {
        let (x_own, obj_own) = general_vertex_enumeration(&p).expect("bounded feasible problem");
        let lp = to_standard_form(&p).unwrap();
        let (x_std, _) = vertex_enumeration(&lp).expect("standard form is feasible too");
        let x_std = lp.original_x(&x_std);
        prop_assert!(rel_diff(p.objective(&x_std), obj_own) < 1e-9, "{} vs {obj_own}", p.objective(&x_std));
        // Ties have probability zero under continuous costs.
        prop_assert!((&x_std - &x_own).amax() < 1e-7, "{x_std} vs {x_own}");
    }
}
