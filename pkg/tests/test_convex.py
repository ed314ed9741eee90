import math

import numpy as np
import pytest

from bolzakit import convex as cx

from oracles import project_polyhedron_active_set


def _set_zoo():
    return [
        cx.Reals(2),
        cx.Box([0.0, -1.0], [1.0, 2.0]),
        cx.Box([-np.inf, 0.0], [1.0, np.inf]),
        cx.Ball([0.5, -0.5], 1.5),
        cx.Singleton([1.0, 1.0]),
        cx.Polyhedron([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [1.0, 1.0, 0.0]),
        cx.Product([cx.Box([0.0], [1.0]), cx.Ball([0.0], 2.0)]),
    ]


# ---------------------------------------------------------------------------
# projection


def test_project_box_clamps():
    assert cx.project(cx.Box([0.0], [1.0]), [2.5]) == pytest.approx([1.0])


def test_project_ball_scales_radially():
    out = cx.project(cx.Ball([0.0, 0.0], 1.0), [3.0, 4.0])
    assert out == pytest.approx([0.6, 0.8])


def test_project_polyhedron_matches_active_set_oracle():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    b = np.array([1.0, 1.0, 0.0])
    S = cx.Polyhedron(A, b)
    got = cx.project(S, [2.0, 2.0])
    want = project_polyhedron_active_set(A, b, np.array([2.0, 2.0]))
    assert got == pytest.approx([1.0, 1.0], abs=1e-8)
    assert got == pytest.approx(want, abs=1e-8)


def test_project_batch_rows():
    S = cx.Box([0.0], [1.0])
    out = cx.project(S, [[-1.0], [0.25], [9.0]])
    assert np.allclose(out, [[0.0], [0.25], [1.0]])


def test_dykstra_matches_oracle_on_random_small_polyhedra():
    rng = np.random.default_rng(5)
    trials = 0
    while trials < 60:
        m = int(rng.integers(1, 4))
        A = rng.standard_normal((m, 2))
        b = rng.standard_normal(m) + 0.5
        try:
            S = cx.Polyhedron(A, b)
        except cx.EmptySetError:
            continue
        y = 3.0 * rng.standard_normal(2)
        got = cx.project(S, y)
        want = project_polyhedron_active_set(A, b, y)
        assert np.linalg.norm(got - want) <= 1e-8
        trials += 1


def test_empty_polyhedron_detected_at_load():
    with pytest.raises(cx.EmptySetError):
        cx.Polyhedron([[1.0], [-1.0]], [-1.0, -2.0])  # y <= -1 and y >= 2


def test_zero_row_infeasible_detected():
    with pytest.raises(cx.EmptySetError):
        cx.Polyhedron([[0.0, 0.0]], [-1.0])


# ---------------------------------------------------------------------------
# distance


def test_distance_examples():
    assert cx.distance(cx.Reals(2), [17.0, -3.0]) == 0.0
    assert cx.distance(cx.Singleton([1.0, 1.0]), [1.0, 2.0]) == pytest.approx(1.0)
    assert cx.distance(cx.Box([0.0], [1.0]), [-0.25]) == pytest.approx(0.25)


def test_contains_tolerance():
    S = cx.Box([0.0], [1.0])
    assert cx.contains(S, [1.0 + 5e-8])
    assert not cx.contains(S, [1.1])


# ---------------------------------------------------------------------------
# support


def test_support_box_upper_bound_active():
    assert cx.support(cx.Box([-np.inf], [1.0]), [1.0]) == pytest.approx(1.0)


def test_support_box_unbounded_direction():
    assert cx.support(cx.Box([-np.inf], [1.0]), [-1.0]) == math.inf


def test_support_ball():
    assert cx.support(cx.Ball([0.0, 0.0], 2.0), [3.0, 4.0]) == pytest.approx(10.0)


def test_support_reals():
    assert cx.support(cx.Reals(3), [0.0, 0.0, 0.0]) == 0.0
    assert cx.support(cx.Reals(3), [0.0, 1e-12, 0.0]) == math.inf
    assert cx.support(cx.Reals(3), [0.0, 1e-12, 0.0], zero_tol=1e-9) == 0.0


def test_support_simplex_vertex_enumeration():
    # unit simplex {y >= 0, y1 + y2 <= 1}: vertices (0,0), (1,0), (0,1)
    S = cx.Polyhedron(
        [[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0]
    )
    assert cx.support(S, [2.0, 5.0]) == pytest.approx(5.0)
    assert cx.support(S, [2.0, -1.0]) == pytest.approx(2.0)
    assert cx.support(S, [-1.0, -1.0]) == pytest.approx(0.0)


def test_support_polyhedron_with_recession_ray():
    # half-line x >= 0 in 1D: {-x <= 0}
    S = cx.Polyhedron([[-1.0]], [0.0])
    assert cx.support(S, [1.0]) == math.inf
    assert cx.support(S, [-2.0]) == pytest.approx(0.0)


def test_support_polyhedron_with_lineality():
    # slab {|y1| <= 1} in R^2: unbounded along y2
    S = cx.Polyhedron([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0])
    assert cx.support(S, [1.0, 0.0]) == pytest.approx(1.0)
    assert cx.support(S, [0.0, 1.0]) == math.inf


def test_support_scale_cap():
    with pytest.raises(cx.SupportScaleError, match="enumeration scale exceeded"):
        cx.support(cx.Polyhedron(np.eye(7), np.ones(7)), np.ones(7))
    A = np.vstack([np.eye(2)] * 17)  # 34 facets
    with pytest.raises(cx.SupportScaleError):
        cx.support(cx.Polyhedron(A, np.ones(34)), [1.0, 1.0])


def test_support_product_sums_factors():
    S = cx.Product([cx.Box([0.0], [1.0]), cx.Ball([0.0], 2.0)])
    assert cx.support(S, [1.0, 1.0]) == pytest.approx(1.0 + 2.0)
    S2 = cx.Product([cx.Reals(1), cx.Box([0.0], [1.0])])
    assert cx.support(S2, [1.0, 1.0]) == math.inf


# ---------------------------------------------------------------------------
# normal cone


def test_normal_cone_outward_at_face():
    assert cx.normal_cone_residual(cx.Box([0.0], [1.0]), [1.0], [5.0]) == 0.0


def test_normal_cone_interior_is_zero_only():
    res = cx.normal_cone_residual(cx.Box([0.0], [1.0]), [0.5], [1.0])
    assert res == pytest.approx(0.5)  # min(distance to face, |xi|)


def test_normal_cone_whole_space():
    assert cx.normal_cone_residual(cx.Reals(3), [1.0, 2.0, 3.0], [0.0, 0.0, 0.0]) == 0.0


def test_normal_cone_requires_feasible_point():
    with pytest.raises(cx.InfeasiblePointError):
        cx.normal_cone_residual(cx.Box([0.0], [1.0]), [2.0], [1.0])


# ---------------------------------------------------------------------------
# invariants


def _sample_point(S, rng):
    return 3.0 * rng.standard_normal(S.dim)


def test_projection_characterization():
    # <y - Py, z - Py> <= 0 for all z in S
    rng = np.random.default_rng(11)
    count = 0
    sets = _set_zoo()
    while count < 1000:
        S = sets[count % len(sets)]
        y = _sample_point(S, rng)
        z = cx.project(S, _sample_point(S, rng))
        p = cx.project(S, y)
        assert float((y - p) @ (z - p)) <= 1e-8
        count += 1


def test_projection_nonexpansive():
    rng = np.random.default_rng(12)
    for S in _set_zoo():
        for _ in range(60):
            y1 = _sample_point(S, rng)
            y2 = _sample_point(S, rng)
            lhs = np.linalg.norm(cx.project(S, y1) - cx.project(S, y2))
            assert lhs <= np.linalg.norm(y1 - y2) + 1e-8


def test_support_dominates_members():
    rng = np.random.default_rng(13)
    for S in _set_zoo():
        for _ in range(40):
            xi = rng.standard_normal(S.dim)
            z = cx.project(S, _sample_point(S, rng))
            sigma = cx.support(S, xi)
            if math.isinf(sigma):
                continue
            assert sigma >= float(xi @ z) - 1e-8


def test_support_attained_on_compact_sets():
    rng = np.random.default_rng(14)
    compact = [
        cx.Box([0.0, -1.0], [1.0, 2.0]),
        cx.Ball([0.5, -0.5], 1.5),
        cx.Singleton([1.0, 1.0]),
        cx.Polyhedron([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [1.0, 1.0, 0.0]),
    ]
    for S in compact:
        for _ in range(25):
            xi = rng.standard_normal(S.dim)
            sigma = cx.support(S, xi)
            # the support value is attained: projecting a far point along xi
            # lands on a maximizer
            far = cx.project(S, 1e6 * xi)
            assert sigma >= float(xi @ far) - 1e-6
            assert sigma <= float(xi @ far) + 1e-3 * (1 + abs(sigma))


def test_product_decomposition():
    rng = np.random.default_rng(15)
    f1 = cx.Box([0.0], [1.0])
    f2 = cx.Ball([0.0, 0.0], 1.0)
    S = cx.Product([f1, f2])
    for _ in range(50):
        y = 2.0 * rng.standard_normal(3)
        p = cx.project(S, y)
        assert p[:1] == pytest.approx(cx.project(f1, y[:1]))
        assert p[1:] == pytest.approx(cx.project(f2, y[1:]))
        # Euclidean distance combines factor distances in quadrature
        d = cx.distance(S, y)
        d1 = cx.distance(f1, y[:1])
        d2 = cx.distance(f2, y[1:])
        assert d == pytest.approx(np.hypot(d1, d2), abs=1e-10)
        xi = rng.standard_normal(3)
        s = cx.support(S, xi)
        assert s == pytest.approx(
            cx.support(f1, xi[:1]) + cx.support(f2, xi[1:]), abs=1e-9
        )
        x = cx.project(S, 2.0 * rng.standard_normal(3))
        r = cx.normal_cone_residual(S, x, xi)
        r1 = cx.normal_cone_residual(f1, x[:1], xi[:1])
        r2 = cx.normal_cone_residual(f2, x[1:], xi[1:])
        assert r == pytest.approx(np.hypot(r1, r2), abs=1e-10)


# ---------------------------------------------------------------------------
# tangent cones and cone sums


def test_tangent_cone_box():
    S = cx.Box([0.0, 0.0], [1.0, 1.0])
    T = cx.tangent_cone(S, [0.0, 0.5])
    assert cx.distance(T, [1.0, -5.0]) == 0.0  # inward / free
    assert cx.distance(T, [-1.0, 0.0]) == pytest.approx(1.0)  # outward blocked


def test_tangent_cone_ball_boundary():
    S = cx.Ball([0.0, 0.0], 1.0)
    T = cx.tangent_cone(S, [1.0, 0.0])
    assert cx.distance(T, [-2.0, 3.0]) == pytest.approx(0.0)
    assert cx.distance(T, [1.0, 0.0]) == pytest.approx(1.0)


def test_dykstra_cycle_cap_error_carries_residual():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    b = np.array([1.0, 1.0, 0.0])
    with pytest.raises(cx.DykstraError) as err:
        cx._dykstra_halfspaces(A, b, np.array([[5.0, 7.0]]), tol=1e-14,
                               max_cycles=1)
    assert err.value.residual > 0


def test_neg_normal_sum_distance_boxes():
    # at the lower face of [0,1], N = (-inf, 0], so -N1 - N2 = [0, inf)
    S = cx.Box([0.0], [1.0])
    assert cx.neg_normal_sum_distance(S, [0.0], S, [0.0], [0.0]) == pytest.approx(0.0)
    assert cx.neg_normal_sum_distance(S, [0.0], S, [0.0], [3.0]) == pytest.approx(0.0)
    assert cx.neg_normal_sum_distance(S, [0.0], S, [0.0], [-2.0]) == pytest.approx(2.0)
    # at interior points both cones are {0}
    assert cx.neg_normal_sum_distance(S, [0.5], S, [0.5], [1.5]) == pytest.approx(1.5)
