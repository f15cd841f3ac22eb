import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sharp_interface.errors import ShapeError, SingularityError
from sharp_interface.linop import LineOperator, analytic_L_dv, assemble, decay_estimate
from sharp_interface.model import ModelFunctions, reference_model
from sharp_interface.profile import XiGrid, solve_profile


@pytest.fixture(scope="module")
def small():
    m = reference_model()
    prof = solve_profile(m, XiGrid(40.0, 513))
    return prof, assemble(prof, m)


def test_constants_give_unit_mass(ref_op):
    out = -ref_op.apply(np.ones(ref_op.grid.n))
    assert np.allclose(out[1:-1], 1.0, atol=1e-12)


def test_zero_in_zero_out(ref_op):
    z = np.zeros(ref_op.grid.n)
    assert not np.any(ref_op.apply(z))
    assert not np.any(ref_op.solve(z))


def test_apply_on_dv_matches_closed_form(ref_profile, ref_model, ref_op):
    exact = ref_profile.dddv - ref_profile.dv
    assert np.max(np.abs(ref_op.apply(ref_profile.dv)[1:-1] - exact[1:-1])) < 1e-6
    assert np.max(np.abs(analytic_L_dv(ref_profile, ref_model) - exact)) < 1e-14


def test_apply_error_is_second_order(ref_model):
    errs = []
    for n in (1025, 2049, 4097):
        p = solve_profile(ref_model, XiGrid(40.0, n))
        op = assemble(p, ref_model)
        errs.append(np.max(np.abs(op.apply(p.dv) - (p.dddv - p.dv))[1:-1]))
    assert np.log2(errs[0] / errs[1]) > 1.9 and np.log2(errs[1] / errs[2]) > 1.9


@given(arrays(np.float64, 513, elements=st.floats(-1, 1)), arrays(np.float64, 513, elements=st.floats(-1, 1)))
@settings(max_examples=30, deadline=None)
def test_self_adjoint(small, psi, phi):
    _, op = small
    a = op.inner(op.apply(psi), phi)
    b = op.inner(psi, op.apply(phi))
    assert abs(a - b) <= 1e-12 * max(np.linalg.norm(psi) * np.linalg.norm(phi), 1e-300) * op.h + 1e-14


@given(arrays(np.float64, 513, elements=st.floats(-1, 1)))
@settings(max_examples=30, deadline=None)
def test_coercive(small, psi):
    _, op = small
    q = -op.inner(op.apply(psi), psi)
    assert q >= (op.coercivity_bound - 1e-10) * op.inner(psi, psi)


@given(arrays(np.float64, 513, elements=st.floats(-1, 1)))
@settings(max_examples=30, deadline=None)
def test_solve_roundtrip_and_bound(small, w):
    _, op = small
    psi = op.solve(w)
    scale = max(np.max(np.abs(w)), 1e-300)
    assert np.max(np.abs(op.apply(psi) - w)) <= 1e-8 * scale
    assert np.sqrt(op.inner(psi, psi)) <= np.sqrt(op.inner(w, w)) / op.coercivity_bound * (1 + 1e-12) + 1e-300


def test_roundtrip_recovers_dv(ref_profile, ref_op):
    back = ref_op.solve(ref_op.apply(ref_profile.dv))
    assert np.max(np.abs(back - ref_profile.dv)) < 1e-8


def test_solve_accepts_matrix_right_hand_sides(small):
    _, op = small
    W = np.random.default_rng(0).normal(size=(513, 3))
    assert np.allclose(op.apply(op.solve(W)), W, atol=1e-10)


def test_shape_errors(ref_op):
    with pytest.raises(ShapeError):
        ref_op.apply(np.ones(7))
    with pytest.raises(ShapeError):
        ref_op.solve(np.ones(7))


def test_nonpositive_mass_is_singular():
    m = reference_model()
    bad = ModelFunctions(m.P, m.B - 0.5, m.D - 0.5, m.sigma)
    with pytest.raises(SingularityError):
        assemble(solve_profile(m, XiGrid(20.0, 257)), bad)


def test_decay_of_dv_response(ref_profile, ref_op):
    est = decay_estimate(ref_op, ref_profile.dv, 0.5)
    assert est.satisfied and est.gamma >= 0.5 - 0.02


def test_compact_source_decays_at_green_rate(ref_profile, ref_op):
    w = np.where(np.abs(ref_profile.xi) <= 1.0, 1.0, 0.0)
    est = decay_estimate(ref_op, w, np.inf)
    assert ref_op.tail_rate == pytest.approx(1.0)
    assert est.gamma == pytest.approx(1.0, abs=0.02)


def test_decay_of_zero_source(ref_op):
    est = decay_estimate(ref_op, np.zeros(ref_op.grid.n), 0.5)
    assert est.C == 0.0 and est.satisfied


def test_exponentially_weighted_source(ref_profile, ref_op):
    w = ref_profile.du * np.exp(-np.abs(ref_profile.xi) / 4)
    est = decay_estimate(ref_op, w, 0.75)
    assert est.gamma >= min(ref_op.tail_rate / 2, 0.75) - 0.02


def test_truncation_insensitivity(ref_model, ref_profile, ref_op):
    long = solve_profile(ref_model, ref_profile.grid.extended(10.0))
    op_long = assemble(long, ref_model)
    w_long = long.du * np.exp(-np.abs(long.xi) / 4)
    w = ref_profile.du * np.exp(-np.abs(ref_profile.xi) / 4)
    shift = (long.grid.n - ref_profile.grid.n) // 2
    a = ref_op.solve(w)
    b = op_long.solve(w_long)[shift : shift + ref_profile.grid.n]
    inner = np.abs(ref_profile.xi) <= 20
    assert np.max(np.abs(a - b)[inner]) <= 1e-8


def test_triplets_form_symmetric_matrix(small):
    _, op = small
    t = op.to_triplets()
    import scipy.sparse as sp

    A = sp.coo_matrix((t[:, 2], (t[:, 0].astype(int), t[:, 1].astype(int)))).toarray()
    assert np.allclose(A, A.T)
    x = np.random.default_rng(2).normal(size=op.grid.n)
    assert np.allclose(A @ x, op.apply(x))


def test_operator_is_frozen(small):
    _, op = small
    assert isinstance(op, LineOperator)
    with pytest.raises(AttributeError):
        op.mass_coeff = None
