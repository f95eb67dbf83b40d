use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use slcl_core::innersolve::{bound_solve, solve_lc, verify_relaxed_kkt, BoundSolveOptions, BoundStatus, InnerOptions, InnerStatus};
use slcl_core::linearize::{assemble_elastic, linearize_constraints, optimal_elastics};
use slcl_core::merit::{aug_lagrangian, aug_lagrangian_grad};
use slcl_core::model::{build_slack_form, catalog_get, Bounds, SlackForm};

fn slack_form(name: &str) -> SlackForm {
    build_slack_form(&catalog_get(name).unwrap().problem).unwrap()
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn central_difference(sf: &SlackForm, x: &DVector<f64>, y: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-5 * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (aug_lagrangian(sf, &xp, y, rho).unwrap() - aug_lagrangian(sf, &xm, y, rho).unwrap()) / (2.0 * h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn al_gradient_matches_differences(x1 in 0.0..3.0f64, x2 in 0.0..3.0f64, s in -1.0..1.0f64, y in -5.0..5.0f64, rho in 0.0..100.0f64) {
        let sf = slack_form("circle-proj");
        let x = v(&[x1, x2, s]);
        let y = v(&[y]);
        let g = aug_lagrangian_grad(&sf, &x, &y, rho).unwrap();
        let fd = central_difference(&sf, &x, &y, rho);
        prop_assert!((&g - &fd).amax() <= 1e-6 * g.amax().max(1.0), "{g} vs {fd}");
    }

    #[test]
    fn rho_shift_identity(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, y in -5.0..5.0f64, rho in 0.0..100.0f64) {
        // grad L(x, y, rho) == grad L(x, y - rho c(x), 0)
        let sf = slack_form("hs006");
        let x = sf.extend(&v(&[x1, x2]));
        let y = v(&[y]);
        let c = sf.residual(&x).unwrap();
        let shifted = &y - &c * rho;
        let a = aug_lagrangian_grad(&sf, &x, &y, rho).unwrap();
        let b = aug_lagrangian_grad(&sf, &x, &shifted, 0.0).unwrap();
        prop_assert!((&a - &b).amax() <= 1e-10 * a.amax().max(1.0));
    }

    #[test]
    fn optimal_elastics_beat_every_split(cbar in prop::collection::vec(-10.0..10.0f64, 1..5)) {
        let cbar = DVector::from_vec(cbar);
        let (ev, ew) = optimal_elastics(&cbar);
        prop_assert!((&cbar + &ev - &ew).amax() == 0.0);
        prop_assert!((ev.sum() + ew.sum() - cbar.lp_norm(1)).abs() <= 1e-12 * (1.0 + cbar.lp_norm(1)));
        for i in 0..cbar.len() {
            prop_assert!(ev[i].min(ew[i]) == 0.0);
            // every feasible split is v = t, w = cbar + t with t >= max(0, -cbar)
            for k in 0..=200 {
                let t = (-cbar[i]).max(0.0) + 0.05 * k as f64;
                prop_assert!(ev[i] + ew[i] <= t + (cbar[i] + t) + 1e-12);
            }
        }
    }

    #[test]
    fn affine_rows_linearize_exactly(a1 in -3.0..3.0f64, a2 in -3.0..3.0f64, b1 in -3.0..3.0f64, b2 in -3.0..3.0f64) {
        let sf = slack_form("linear-as-nl");
        let base = sf.extend(&v(&[a1.abs(), a2.abs()]));
        let lin = linearize_constraints(&sf, &base).unwrap();
        let x = sf.extend(&v(&[b1, b2]));
        let exact = sf.residual(&x).unwrap();
        prop_assert!((lin.value(&x) - exact).amax() <= 1e-12);
    }

    #[test]
    fn lifted_objective_with_optimal_elastics(x1 in 0.0..2.0f64, x2 in 0.0..2.0f64, y in -3.0..3.0f64, rho in 1.0..100.0f64, sigma in 0.0..50.0f64) {
        let sf = slack_form("circle-proj");
        let base = sf.extend(&v(&[1.0, 1.0]));
        let sub = assemble_elastic(&sf, linearize_constraints(&sf, &base).unwrap(), &v(&[y]), rho, sigma);
        let x = sf.extend(&v(&[x1, x2]));
        let u = sub.lift_with_optimal_elastics(&x);
        let (value, _) = sub.objective(&u).unwrap();
        let expected = sub.lagrangian_value(&x).unwrap() + sigma * sub.lin.value(&x).lp_norm(1);
        prop_assert!((value - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn bound_solve_matches_grid(h11 in 0.5..4.0f64, h22 in 0.5..4.0f64, h12 in -0.4..0.4f64, g1 in -5.0..5.0f64, g2 in -5.0..5.0f64) {
        let h = DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22]);
        let g = v(&[g1, g2]);
        let q = |x: &DVector<f64>| 0.5 * x.dot(&(&h * x)) + g.dot(x);
        let bounds = Bounds::from_vecs(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let r = bound_solve(
            |x: &DVector<f64>| Ok((q(x), &h * x + &g)),
            &bounds,
            &v(&[0.0, 0.0]),
            &BoundSolveOptions { tol: 1e-9, ..Default::default() },
        )
        .unwrap();
        prop_assert_eq!(r.status, BoundStatus::Converged);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let p = v(&[-1.0 + i as f64 / 200.0, -1.0 + j as f64 / 200.0]);
                best = best.min(q(&p));
            }
        }
        prop_assert!(r.f <= best + 1e-12, "{} vs grid {}", r.f, best);
        prop_assert!(best - r.f <= 1e-3);
    }

    #[test]
    fn converged_subproblems_pass_relaxed_kkt(x1 in 0.2..2.0f64, x2 in 0.2..2.0f64, y in -3.0..3.0f64, rho in 1.0..1e3f64, sigma in 0.1..100.0f64) {
        let sf = slack_form("circle-proj");
        let base = sf.extend(&v(&[x1, x2]));
        let sub = assemble_elastic(&sf, linearize_constraints(&sf, &base).unwrap(), &v(&[y]), rho, sigma);
        let opts = InnerOptions::default();
        let sol = solve_lc(&sub, &opts, None).unwrap();
        if sol.status == InnerStatus::Converged {
            prop_assert!(verify_relaxed_kkt(&sub, &sol, opts.omega, opts.delta_lin));
            prop_assert!(sol.delta_y.amax() <= sigma + opts.omega);
            for i in 0..sol.v_star.len() {
                prop_assert!(sol.v_star[i].min(sol.w_star[i]) <= 1e-8);
            }
        }
    }
}
