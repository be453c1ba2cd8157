import numpy as np
import pytest
import scipy.linalg as la

from bregrates.core import ConvergenceError
from bregrates.penalty import make_penalty, subgradient
from bregrates.phantom import ellipses_phantom
from bregrates.radon import RadonOperator
from bregrates.source_condition import (
    cgls_ridge,
    default_lambda_sc,
    image_from_dual,
    project_to_source_condition,
)


@pytest.fixture(scope="module")
def desk_op():
    return RadonOperator(64, 180)


def test_cgls_matches_dense_ridge():
    gen = np.random.default_rng(8)
    k = gen.standard_normal((6, 6))
    b = gen.standard_normal(6)
    lam = 0.3
    # min 1/2 ||K x - b||^2 + lam ||x||^2  <=>  (K^T K + 2 lam I) x = K^T b
    ref = la.solve(k.T @ k + 2 * lam * np.eye(6), k.T @ b)
    sol = cgls_ridge(k, b, lam, tol=1e-14)
    assert np.allclose(sol.x, ref, rtol=0, atol=1e-8 * np.abs(ref).max())


def test_cgls_residual_trace_nonincreasing():
    gen = np.random.default_rng(9)
    k = gen.standard_normal((40, 25))
    sol = cgls_ridge(k, gen.standard_normal(40), 1e-3, tol=1e-12)
    assert np.all(np.diff(sol.residual_trace) <= 1e-12 * sol.residual_trace[0])


def test_cgls_huge_lambda_vanishes():
    gen = np.random.default_rng(10)
    k = gen.standard_normal((8, 5))
    b = gen.standard_normal(8)
    lam = 1e12
    sol = cgls_ridge(k, b, lam)
    assert np.allclose(sol.x, k.T @ b / (2 * lam), rtol=1e-6)
    assert np.abs(sol.x).max() < 1e-10


def test_cgls_errors():
    k = np.random.default_rng(1).standard_normal((30, 30))
    with pytest.raises(ValueError):
        cgls_ridge(k, np.ones(30), 0.0)
    with pytest.raises(ConvergenceError) as err:
        cgls_ridge(k, np.ones(30), 1e-9, tol=1e-15, max_iters=2)
    assert err.value.residual is not None


def test_rejects_nonpositive_lambda(desk_op):
    pen = make_penalty(1.5, 64)
    with pytest.raises(ValueError):
        project_to_source_condition(ellipses_phantom(64), desk_op, pen, lam_sc=-1.0)


@pytest.mark.parametrize("p", [2.0, 1.5, 4.0 / 3.0])
def test_source_condition_exact(desk_op, p):
    pen = make_penalty(p, 64)
    sc = project_to_source_condition(ellipses_phantom(64), desk_op, pen)
    assert sc.lam_sc == pytest.approx(default_lambda_sc(desk_op), rel=1e-6)
    assert sc.relative_sc_residual <= 1e-8
    assert sc.rel_change <= 0.15


def test_quadratic_case_is_range_of_adjoint(desk_op):
    pen = make_penalty(2.0, 64)
    sc = project_to_source_condition(ellipses_phantom(64), desk_op, pen)
    assert np.array_equal(sc.f_dagger, desk_op.adjoint(sc.w))


def test_reassembly_is_exact_for_any_dual(small_op, rng):
    for p in (1.5, 4.0 / 3.0, 1.7):
        pen = make_penalty(p, 16)
        w = rng.standard_normal((24, small_op.n_dtc))
        f = image_from_dual(pen, small_op, w)
        atw = small_op.adjoint(w)
        assert np.linalg.norm(subgradient(pen, f) - atw) <= 1e-10 * np.linalg.norm(atw)


def test_range_element_is_recovered(small_op, rng):
    pen = make_penalty(2.0, 16)
    f0 = small_op.adjoint(rng.standard_normal((24, small_op.n_dtc)))
    sc = project_to_source_condition(f0, small_op, pen, lam_sc=1e-10, tol=1e-13)
    assert sc.rel_change < 1e-4


def test_rel_change_shrinks_with_lambda(op32):
    pen = make_penalty(1.5, 32)
    f0 = ellipses_phantom(32)
    norm_sq = op32.norm_estimate**2
    changes = [project_to_source_condition(f0, op32, pen, lam_sc=c * norm_sq).rel_change
               for c in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(changes, changes[1:]))


def test_weaker_ridge_gives_five_percent_change(desk_op):
    # with a ridge ten times weaker than the default the change drops to about 5%
    pen = make_penalty(1.5, 64)
    sc = project_to_source_condition(ellipses_phantom(64), desk_op, pen,
                                     lam_sc=1e-4 * desk_op.norm_estimate**2)
    assert 0.04 <= sc.rel_change <= 0.06
    assert sc.relative_sc_residual <= 1e-8


def test_provenance_fields(small_op):
    pen = make_penalty(1.5, 16)
    sc = project_to_source_condition(ellipses_phantom(16), small_op, pen)
    prov = sc.provenance(pen)
    for key in ("p", "lambda_sc", "sc_residual", "rel_change", "R_f_dagger", "w_norm"):
        assert key in prov
