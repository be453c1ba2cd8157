import numpy as np
import pytest
import scipy.sparse.linalg as spla

from bregrates.core import AngleSet, DimensionError
from bregrates.diagnostics import adjoint_mismatch, mass_defect
from bregrates.phantom import ellipses_phantom
from bregrates.radon import RadonOperator, default_n_dtc, estimate_op_norm


def test_detector_spans_diagonal():
    assert default_n_dtc(64) == 92
    assert default_n_dtc(16) == 24


def test_zero_in_zero_out(small_op):
    assert not small_op.apply(np.zeros((16, 16))).any()
    assert not small_op.adjoint(np.zeros((24, small_op.n_dtc))).any()


def test_shape_errors(small_op):
    with pytest.raises(DimensionError):
        small_op.apply(np.zeros((8, 8)))
    with pytest.raises(DimensionError):
        small_op.adjoint(np.zeros((3, small_op.n_dtc)))


def test_adjoint_identity(op32):
    assert adjoint_mismatch(op32, 20, seed=1) <= 1e-8


def test_linearity(small_op, rng):
    f, g = rng.standard_normal((2, 16, 16))
    a, b = 1.7, -0.3
    lhs = small_op.apply(a * f + b * g)
    rhs = a * small_op.apply(f) + b * small_op.apply(g)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_mass_preservation():
    op = RadonOperator(64, 180)
    assert mass_defect(op, ellipses_phantom(64)) <= 1e-6


def test_zero_degrees_vs_transposed_at_ninety(rng):
    op = RadonOperator(32, 4)  # angles 0, 45, 90, 135 degrees
    f = rng.random((32, 32))
    at0 = op.apply(f)[0]
    at90 = op.apply(f.T)[2]
    assert np.allclose(at0, at90, rtol=0, atol=1e-10 * np.abs(at0).max())


def test_opposite_angles_mirror(rng):
    side = 24
    thetas = np.array([0.3, 0.3 + np.pi, 1.1, 1.1 + np.pi])
    op = RadonOperator(side, 4, thetas=thetas)
    g = op.apply(rng.random((side, side)))
    scale = np.abs(g).max()
    assert np.abs(g[0] - g[1][::-1]).max() <= 1e-10 * scale
    assert np.abs(g[2] - g[3][::-1]).max() <= 1e-10 * scale


def test_backprojection_of_delta_peaks_at_delta():
    op = RadonOperator(32, 60)
    f = np.zeros((32, 32))
    f[11, 20] = 1.0
    b = op.adjoint(op.apply(f))
    assert b.min() >= 0
    assert np.unravel_index(np.argmax(b), b.shape) == (11, 20)


def test_full_subsample_equals_full(small_op, rng):
    f = rng.standard_normal((16, 16))
    sub = small_op.subsample(AngleSet.full(24))
    assert np.array_equal(sub.apply(f), small_op.apply(f))


def test_singleton_subsample_is_row_block(small_op, rng):
    f = rng.standard_normal((16, 16))
    sub = small_op.subsample(AngleSet((7,), 24))
    assert np.array_equal(sub.apply(f)[0], small_op.apply(f)[7])


def test_subsample_keeps_angle_order(small_op, rng):
    f = rng.standard_normal((16, 16))
    idx = (1, 5, 6, 19)
    g = small_op.subsample(AngleSet(idx, 24)).apply(f)
    assert np.array_equal(g, small_op.apply(f)[list(idx)])


def test_subsample_adjoint(small_op):
    sub = small_op.subsample(AngleSet((0, 3, 11, 17), 24))
    assert adjoint_mismatch(sub, 20, seed=2) <= 1e-8


def test_subsample_grid_mismatch(small_op):
    with pytest.raises(ValueError):
        small_op.subsample(AngleSet((1, 2), 30))


def test_subsampled_norm_not_larger(small_op):
    sub = small_op.subsample(AngleSet((2, 9, 10, 20), 24))
    assert estimate_op_norm(sub) <= estimate_op_norm(small_op) * (1 + 1e-3)


def test_norm_estimates():
    assert estimate_op_norm(np.eye(5)) == pytest.approx(1.0, rel=1e-4)
    assert estimate_op_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-4)
    a = np.random.default_rng(4).standard_normal((10, 10))
    assert estimate_op_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-4)


def test_norm_estimate_matches_svds(op32):
    top = spla.svds(op32.matrix, k=1, return_singular_vectors=False)[0]
    assert op32.norm_estimate == pytest.approx(top, rel=1e-4)


def test_norm_estimate_deterministic(small_op):
    assert estimate_op_norm(small_op, seed=3) == estimate_op_norm(small_op, seed=3)


def test_per_angle_bound_is_largest_block_norm(small_op):
    blocks = [np.linalg.norm(small_op.toarray()[k * small_op.n_dtc:(k + 1) * small_op.n_dtc], 2)
              for k in range(24)]
    assert small_op.per_angle_norm_bound == pytest.approx(max(blocks), rel=1e-12)
