//! Stencil operators against an independently assembled dense oracle
//! (different quadrature order and basis evaluation code).

mod common;

use common::*;
use nalgebra::DVector;
use stokeslab::assembly::{assemble_operators_raw, assemble_problem, build_interpolation, l2_errors};
use stokeslab::counters::Counters;
use stokeslab::mesh::StructuredGrid;
use stokeslab::stencil::stokes_dense;
use stokeslab::vector::BlockVector;

#[test]
fn stencil_matvecs_match_dense_oracle() {
    for n in [2usize, 4, 8] {
        let grid = StructuredGrid::new(n);
        let (ops, _) = assemble_problem(&grid, 1.0);
        let dense = assemble_dense_system(&grid, 1.0);
        let nvel = grid.n_vel_per_comp();
        let mut ctr = Counters::new();

        let x = seeded_block_vector(&grid, 42 + n as u64);

        // L per component.
        let mut y = vec![0.0; nvel];
        ops.l.apply(&x.ux, &mut y, &mut ctr);
        let oracle = &dense.l * DVector::from_column_slice(&x.ux);
        assert!(
            max_rel_diff(&y, oracle.as_slice()) < 1e-13,
            "L matvec mismatch at N={n}"
        );

        // B.
        let mut yp = vec![0.0; grid.n_pressure()];
        ops.b.apply(&x.ux, &x.uy, &mut yp, &mut ctr);
        let mut uflat = DVector::zeros(2 * nvel);
        for k in 0..nvel {
            uflat[k] = x.ux[k];
            uflat[nvel + k] = x.uy[k];
        }
        let oracle_p = &dense.b * &uflat;
        assert!(
            max_rel_diff(&yp, oracle_p.as_slice()) < 1e-13,
            "B matvec mismatch at N={n}"
        );

        // Bᵀ.
        let mut gx = vec![0.0; nvel];
        let mut gy = vec![0.0; nvel];
        ops.b.apply_transpose(&x.p, &mut gx, &mut gy, &mut ctr);
        let oracle_g = dense.b.transpose() * DVector::from_column_slice(&x.p);
        assert!(
            max_rel_diff(&gx, &oracle_g.as_slice()[..nvel]) < 1e-13,
            "Bᵀ (x) mismatch at N={n}"
        );
        assert!(
            max_rel_diff(&gy, &oracle_g.as_slice()[nvel..]) < 1e-13,
            "Bᵀ (y) mismatch at N={n}"
        );

        // M (no boundary treatment).
        let raw = assemble_operators_raw(&grid, 1.0);
        let dense_raw = assemble_dense_raw(&grid, 1.0);
        let mut ym = vec![0.0; grid.n_pressure()];
        raw.m.apply(&x.p, &mut ym, &mut ctr);
        let oracle_m = &dense_raw.m * DVector::from_column_slice(&x.p);
        assert!(
            max_rel_diff(&ym, oracle_m.as_slice()) < 1e-13,
            "M matvec mismatch at N={n}"
        );
    }
}

#[test]
fn assembled_rhs_matches_dense_oracle() {
    for n in [2usize, 4] {
        let grid = StructuredGrid::new(n);
        let (_, rhs) = assemble_problem(&grid, 1.0);
        let dense = assemble_dense_system(&grid, 1.0);
        assert!(
            max_rel_diff(&rhs.to_flat(), dense.rhs.as_slice()) < 1e-12,
            "rhs mismatch at N={n}"
        );
    }
}

#[test]
fn monolithic_operator_is_symmetric() {
    for n in [2usize, 4, 8] {
        let grid = StructuredGrid::new(n);
        let (ops, _) = assemble_problem(&grid, 1.0);
        let mut ctr = Counters::new();
        let z = seeded_block_vector(&grid, 7);
        let w = seeded_block_vector(&grid, 8);
        let mut az = BlockVector::zeros(&grid);
        let mut aw = BlockVector::zeros(&grid);
        stokeslab::stencil::apply_stokes(&ops.l, &ops.b, &z, &mut az, &mut ctr);
        stokeslab::stencil::apply_stokes(&ops.l, &ops.b, &w, &mut aw, &mut ctr);
        let lhs = BlockVector::dot(&az, &w, &mut ctr);
        let rhs = BlockVector::dot(&z, &aw, &mut ctr);
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(
            (lhs - rhs).abs() / scale < 1e-12,
            "symmetry violated at N={n}: {lhs} vs {rhs}"
        );
    }
}

#[test]
fn adjoint_identity_for_divergence_pair() {
    let grid = StructuredGrid::new(6);
    let (ops, _) = assemble_problem(&grid, 1.0);
    let mut ctr = Counters::new();
    let u = seeded_block_vector(&grid, 21);
    let p = seeded_vec(grid.n_pressure(), 22);
    let mut bu = vec![0.0; grid.n_pressure()];
    ops.b.apply(&u.ux, &u.uy, &mut bu, &mut ctr);
    let lhs: f64 = bu.iter().zip(&p).map(|(a, b)| a * b).sum();
    let n = grid.n_vel_per_comp();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    ops.b.apply_transpose(&p, &mut gx, &mut gy, &mut ctr);
    let rhs: f64 = gx.iter().zip(&u.ux).map(|(a, b)| a * b).sum::<f64>()
        + gy.iter().zip(&u.uy).map(|(a, b)| a * b).sum::<f64>();
    let scale = lhs.abs().max(rhs.abs()).max(1e-30);
    assert!((lhs - rhs).abs() / scale < 1e-13);
}

#[test]
fn galerkin_consistency_of_rediscretized_coarse_operators() {
    // Pᵀ A_fine P = A_coarse entrywise for the raw (untreated) operators.
    let coarse = StructuredGrid::new(4);
    let fine = StructuredGrid::new(8);
    let raw_c = assemble_operators_raw(&coarse, 1.0);
    let raw_f = assemble_operators_raw(&fine, 1.0);
    let ac = stokes_dense(&raw_c.l, &raw_c.b);
    let af = stokes_dense(&raw_f.l, &raw_f.b);

    // Dense prolongation from unit vectors.
    let interp = build_interpolation(&coarse, &fine);
    let size_c = 2 * coarse.n_vel_per_comp() + coarse.n_pressure();
    let size_f = 2 * fine.n_vel_per_comp() + fine.n_pressure();
    let mut p = nalgebra::DMatrix::zeros(size_f, size_c);
    let mut ctr = Counters::new();
    for c in 0..size_c {
        let mut e = vec![0.0; size_c];
        e[c] = 1.0;
        let ev = BlockVector::from_flat(&coarse, &e);
        let mut out = BlockVector::zeros(&fine);
        interp.prolong_into(&ev, &mut out, &mut ctr);
        let flat = out.to_flat();
        for r in 0..size_f {
            p[(r, c)] = flat[r];
        }
    }

    let galerkin = p.transpose() * af * &p;
    let scale = ac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_diff = 0.0f64;
    for r in 0..size_c {
        for c in 0..size_c {
            max_diff = max_diff.max((galerkin[(r, c)] - ac[(r, c)]).abs());
        }
    }
    assert!(
        max_diff / scale < 1e-11,
        "Galerkin mismatch: {max_diff:e} (scale {scale:e})"
    );
}

#[test]
fn dense_direct_solve_shows_discretization_orders() {
    // Direct (oracle) solves at N = 8 and 16: the L2 errors must fall at
    // roughly third (velocity) and second (pressure) order.
    let mut errs = Vec::new();
    for n in [8usize, 16] {
        let grid = StructuredGrid::new(n);
        let dense = assemble_dense_system(&grid, 1.0);
        let nvel = grid.n_vel_per_comp();
        let m = grid.n_pressure();
        let x = solve_pinned(&dense.a, &dense.rhs, 2 * nvel, m);
        let xb = BlockVector::from_flat(&grid, x.as_slice());
        let e = l2_errors(&grid, &xb);
        assert!(e.velocity_l2.is_finite() && e.velocity_l2 > 0.0);
        errs.push(e);
    }
    let v_order = (errs[0].velocity_l2 / errs[1].velocity_l2).log2();
    let p_order = (errs[0].pressure_l2 / errs[1].pressure_l2).log2();
    assert!(v_order > 2.6, "velocity order {v_order}");
    assert!(p_order > 1.6, "pressure order {p_order}");
}
