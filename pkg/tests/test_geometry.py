import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharp_interface.errors import ConfigError, CutLocusError, ResolutionError
from sharp_interface.geometry import (
    FlowField, Path1D, coarea_check, coarea_target, finite_difference_check, fit_order, flow_from_dict, s_ac,
    saturation, signed_distance, time_nodes,
)


def test_paths():
    assert Path1D.linear(0.25, 0.3)(0.1)[0] == pytest.approx(0.28)
    r, rd, rdd = Path1D.mcf(0.2, 1.0)(0.01)
    assert r == pytest.approx(np.sqrt(0.02))
    assert rd == pytest.approx(-1.0 / r)
    assert rdd == pytest.approx(-1.0 / r**3)
    with pytest.raises(CutLocusError):
        Path1D.mcf(0.15, 1.0)(0.05)


def test_path_dict_roundtrip():
    for p in (Path1D.static(0.1), Path1D.linear(0.2, 0.3), Path1D.polynomial((0.1, 0.2, 0.3)), Path1D.mcf(0.2, 1.0)):
        assert Path1D.from_dict(p.to_dict()) == p
    with pytest.raises(ConfigError):
        Path1D.from_dict({"kind": "mcf", "r0": 0.2})
    assert Path1D.from_dict({"kind": "mcf", "r0": 0.2}, theta=0.5).params == (0.2, 0.5)


@given(st.floats(-0.3, 0.3))
@settings(max_examples=60, deadline=None)
def test_saturation_derivatives_match_differences(s):
    k, h = 0.05, 1e-6
    G, G1, G2, G3, _ = saturation(np.array([s - h, s, s + h]), k)
    assert (G[2] - G[0]) / (2 * h) == pytest.approx(G1[1], abs=1e-6)
    assert (G1[2] - G1[0]) / (2 * h) == pytest.approx(G2[1], abs=1e-4)
    # G jumps at the blend ends, so this difference is only O(h |G|) accurate there
    assert (G2[2] - G2[0]) / (2 * h) == pytest.approx(G3[1], abs=h * 60 / k**3)


def test_saturation_shape():
    k = 0.1
    G, G1, *_ = saturation(np.array([0.05, -0.05, 0.25, -0.3]), k)
    assert G[:2] == pytest.approx([0.05, -0.05])
    assert G[2:] == pytest.approx([1.5 * k, -1.5 * k])
    assert G1[2:] == pytest.approx([0.0, 0.0])


def test_circle_distance_values(still_circle):
    d, grad, lap, dt = signed_distance(still_circle, 0.0, np.array([[0.5, 0.6], [0.5 + 0.15, 0.5], [0.5, 0.7]]))
    assert d[:2] == pytest.approx([-0.05, 0.0], abs=1e-15)
    assert lap[1] == pytest.approx(1 / 0.15)
    assert lap[0] == pytest.approx(1 / 0.1)
    assert np.allclose(np.linalg.norm(grad, axis=1)[:2], 1.0)
    assert not np.any(dt)


def test_pair_distance_sign_and_speed(moving_pair):
    d, grad, lap, dt = signed_distance(moving_pair, 0.0, np.array([[0.3], [0.2], [0.7], [0.8]]))
    # the phase between the fronts is inside (d < 0); both fronts move right
    assert d == pytest.approx([-0.05, 0.05, -0.05, 0.05])
    assert dt == pytest.approx([0.3, 0.3, -0.3, -0.3])
    assert not np.any(lap)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(-2, 2), st.integers(-2, 2))
@settings(max_examples=40, deadline=None)
def test_distance_is_periodic(still_circle, x, y, i, j):
    a = still_circle.jet(0.0, np.array([[x, y]]))
    b = still_circle.jet(0.0, np.array([[x + i, y + j]]))
    assert a.d[0] == pytest.approx(b.d[0], abs=1e-12)
    assert a.lap_d[0] == pytest.approx(b.lap_d[0], rel=1e-9, abs=1e-9)


def test_jet_gradients_by_differences(shrinking_circle, rng):
    f, h = shrinking_circle, 1e-5
    for _ in range(20):
        t = rng.uniform(0, f.T * 0.9)
        x = np.array([0.5, 0.5]) + rng.uniform(0.1, 0.18) * np.array([np.cos(a := rng.uniform(0, 6.28)), np.sin(a)])
        j = f.jet(t, x[None])
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            jp, jm = f.jet(t, (x + e)[None]), f.jet(t, (x - e)[None])
            assert (jp.d[0] - jm.d[0]) / (2 * h) == pytest.approx(j.grad_d[0, k], abs=1e-7)
            assert (jp.dt_d[0] - jm.dt_d[0]) / (2 * h) == pytest.approx(j.grad_a[0, k], abs=1e-5)
            assert (jp.lap_d[0] - jm.lap_d[0]) / (2 * h) == pytest.approx(j.grad_b[0, k], abs=1e-3)
        jp, jm = f.jet(t + h, x[None]), f.jet(t - h, x[None])
        assert (jp.dt_d[0] - jm.dt_d[0]) / (2 * h) == pytest.approx(j.dt_a[0], rel=1e-5, abs=1e-4)
        assert (jp.lap_d[0] - jm.lap_d[0]) / (2 * h) == pytest.approx(j.dt_b[0], rel=1e-5, abs=1e-4)


def test_finite_difference_order(shrinking_circle, rng):
    res = finite_difference_check(shrinking_circle, rng)
    (h1, (l1, t1)), (h2, (l2, t2)) = sorted(res.items(), reverse=True)
    assert np.log2(l1 / l2) > 1.8 and np.log2(t1 / t2) > 1.8


def test_cut_locus_rejected():
    with pytest.raises(CutLocusError):
        FlowField.circle(Path1D.static(0.3), 0.05)
    with pytest.raises(CutLocusError):
        FlowField.circle(Path1D.static(0.1), 0.05, kappa=0.08)
    with pytest.raises(CutLocusError):
        FlowField.front_pair(Path1D.static(0.25), Path1D.static(0.75), 0.05, kappa=0.2)


def test_limit_energy_closed_forms(ref_ctx, moving_pair, still_circle, shrinking_circle, still_pair):
    k = ref_ctx.coeffs
    assert s_ac(moving_pair, k) == pytest.approx(0.05 * 0.09 / (2 * 25.2), rel=1e-6)
    assert s_ac(still_circle, k) == pytest.approx(np.pi * 0.05 / (2 * 25.2 * 0.15), rel=1e-6)
    assert s_ac(still_pair, k) == 0.0
    assert abs(s_ac(shrinking_circle, k)) < 1e-12


def test_time_nodes_integrate_polynomials():
    t, w = time_nodes(0.3, 16, 2)
    assert np.sum(w * t**5) == pytest.approx(0.3**6 / 6, rel=1e-13)


def test_fit_order():
    eps = np.array([0.04, 0.02, 0.01])
    assert fit_order(eps, 3 * eps**2) == pytest.approx(2.0)


def exp_kernel(x, xi):
    return np.exp(-np.abs(xi))


def test_coarea_targets(moving_pair, still_circle):
    assert coarea_target(moving_pair, 0.0, exp_kernel) == pytest.approx(4.0, rel=1e-12)
    assert coarea_target(still_circle, 0.0, exp_kernel) == pytest.approx(2 * np.pi * 0.15 * 2, rel=1e-12)


def test_coarea_ladders(moving_pair, still_circle):
    pair = coarea_check(moving_pair, 0.01, exp_kernel, [0.02, 0.01, 0.005])
    assert pair.errors[-1] < 0.01
    circ = coarea_check(still_circle, 0.0, lambda x, xi: np.exp(-np.abs(xi) / 2), [0.02, 0.01, 0.005])
    assert circ.errors[-1] < 0.01
    assert circ.order > 1


def test_coarea_guards(moving_pair):
    with pytest.raises(ValueError):
        coarea_check(moving_pair, 0.0, lambda x, xi: np.ones_like(xi), [0.01])
    with pytest.raises(ResolutionError):
        coarea_check(moving_pair, 0.0, exp_kernel, [0.01], cells_per_eps=4)


def test_flow_documents(still_circle):
    doc = {"kind": "circle-2d", "center": [0.5, 0.5], "radius": {"kind": "mcf", "r0": 0.2}, "T": 0.01}
    f = flow_from_dict(doc, theta=1.0)
    assert f.dim == 2 and f.paths[0].kind == "mcf"
    back = flow_from_dict(still_circle.to_dict())
    assert back.kappa == still_circle.kappa and back.paths == still_circle.paths
    with pytest.raises(ConfigError):
        flow_from_dict({"kind": "sphere", "T": 1.0})
