import math

import numpy as np
import pytest

import randopt as r
from randopt.errors import EmptyFeasible, IncompatibleRepresentation, NotSymmetric
from randopt.optimize import (
    Definiteness,
    LocalMinFailure,
    SolverOptions,
    jacobi_eigenvalues,
    leading_principal_minors,
)


@pytest.fixture
def space3():
    return r.make_space([1, 2, 3], [0.25, 0.25, 0.5], [[1, 2], [3]])


def make_rf(space, text, n=1, params=None):
    k = 0 if params is None else len(next(iter(params.values())))
    if params is None:
        params = {s: () for s in space.scenarios}
    return r.RandomFunction(space, n, r.parse(text, n, k), params)


# --- leading principal minors ------------------------------------------------------


def test_minors_paper_value():
    assert leading_principal_minors(np.array([[8.0]])).tolist() == [8.0]


def test_minors_identity():
    assert leading_principal_minors(np.eye(3)).tolist() == [1.0, 1.0, 1.0]


def test_minors_2x2_hand_value():
    assert leading_principal_minors(np.array([[2.0, 1.0], [1.0, 2.0]])).tolist() == [
        2.0,
        3.0,
    ]


def test_minors_large_matches_numpy_det():
    rng = np.random.default_rng(3)
    A = rng.uniform(-2, 2, size=(6, 6))
    H = (A + A.T) / 2
    minors = leading_principal_minors(H)
    for k in range(1, 7):
        assert minors[k - 1] == pytest.approx(np.linalg.det(H[:k, :k]), rel=1e-10)


def test_minors_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        leading_principal_minors(np.array([[1.0, 2.0], [0.0, 1.0]]))


# --- Jacobi eigenvalues --------------------------------------------------------------


def test_jacobi_hand_eigenvalues():
    lam = jacobi_eigenvalues(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert lam == pytest.approx([-1.0, 3.0], abs=1e-12)


def test_jacobi_matches_numpy_on_random_matrices():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = rng.integers(1, 7)
        A = rng.uniform(-5, 5, size=(n, n))
        H = (A + A.T) / 2
        lam = jacobi_eigenvalues(H)
        ref = np.linalg.eigvalsh(H)
        assert np.max(np.abs(lam - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


# --- definiteness classification -------------------------------------------------------


def test_classify_paper_examples():
    assert r.classify_definiteness(np.array([[8.0]])) is Definiteness.PD
    assert r.classify_definiteness(np.array([[-4.0]])) is Definiteness.ND
    assert (
        r.classify_definiteness(np.array([[1.0, 2.0], [2.0, 1.0]]))
        is Definiteness.INDEFINITE
    )


def test_classify_degenerate_cases():
    assert (
        r.classify_definiteness(np.diag([1.0, 0.0])) is Definiteness.PSD_DEGENERATE
    )
    assert (
        r.classify_definiteness(np.diag([-1.0, 0.0])) is Definiteness.NSD_DEGENERATE
    )
    assert r.classify_definiteness(np.zeros((2, 2))) is Definiteness.PSD_DEGENERATE


def _cholesky_pivots_ok(H: np.ndarray, tau: float) -> bool:
    """Independent oracle: Cholesky succeeds with every pivot above tau."""
    H = np.array(H, dtype=float)
    n = H.shape[0]
    L = np.zeros_like(H)
    for j in range(n):
        s = H[j, j] - np.dot(L[j, :j], L[j, :j])
        if s <= tau:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            L[i, j] = (H[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
    return True


def test_sylvester_equals_cholesky_and_eigen_oracles():
    rng = np.random.default_rng(5)
    tol_rel = 1e-10
    for trial in range(300):
        n = int(rng.integers(1, 7))
        if trial % 3 == 2:
            M = rng.uniform(-2, 2, size=(n, n))
            H = M.T @ M + 0.5 * np.eye(n)  # constructed PD
        else:
            A = rng.uniform(-5, 5, size=(n, n))
            H = (A + A.T) / 2
        tau = tol_rel * (1.0 + float(np.max(np.sum(np.abs(H), axis=1))))
        pd_sylvester = r.classify_definiteness(H, tol_rel) is Definiteness.PD
        pd_cholesky = _cholesky_pivots_ok(H, tau)
        pd_jacobi = float(jacobi_eigenvalues(H)[0]) > tau
        assert pd_sylvester == pd_cholesky == pd_jacobi


# --- stationary point search --------------------------------------------------------------


def test_find_stationary_quartic(space3):
    rf = make_rf(space3, "x1^4 - 2*x1^2")
    search = r.find_stationary_points(
        rf, 1, r.Box((-2.0,), (2.0,)), SolverOptions(newton_grid_m=9)
    )
    xs = [sp.x[0] for sp in search.points]
    assert len(xs) == 3
    assert xs == pytest.approx([-1.0, 0.0, 1.0], abs=1e-8)
    assert [sp.classification for sp in search.points] == [
        Definiteness.PD,
        Definiteness.ND,
        Definiteness.PD,
    ]
    assert search.points[0].minors[0] == pytest.approx(8.0, abs=1e-6)
    assert search.points[1].minors[0] == pytest.approx(-4.0, abs=1e-6)
    assert all(sp.grad_norm <= 1e-10 for sp in search.points)


def test_find_stationary_bowl(space3):
    rf = make_rf(space3, "x1^2 + x2^2", n=2)
    search = r.find_stationary_points(
        rf, 1, r.Box((-1.0, -1.0), (1.0, 1.0)), SolverOptions(newton_grid_m=5)
    )
    assert len(search.points) == 1
    assert search.points[0].x == (0.0, 0.0)
    assert search.points[0].classification is Definiteness.PD


def test_find_stationary_linear_has_none(space3):
    rf = make_rf(space3, "x1")
    search = r.find_stationary_points(rf, 1, r.Box((-1.0,), (1.0,)))
    assert search.points == ()
    # linear gradient, zero Hessian: every start is a singular skip
    assert search.skipped_singular == search.starts


def test_find_stationary_discards_outside_region(space3):
    rf = make_rf(space3, "(x1 - 10)^2")
    search = r.find_stationary_points(rf, 1, r.Box((-1.0,), (1.0,)))
    assert search.points == ()


# --- local minimality certificates -----------------------------------------------------------


def test_verify_local_min_quartic_at_one(space3):
    rf = make_rf(space3, "x1^4 - 2*x1^2")
    cert = r.verify_local_min(rf, 1, (1.0,))
    assert isinstance(cert, r.LocalMinCertificate)
    assert cert.delta >= 0.25
    assert cert.min_margin >= 0.0
    # independent oracle: dense sweep of the certified ball
    xs = np.linspace(1.0 - cert.delta, 1.0 + cert.delta, 20001)
    f = xs**4 - 2 * xs**2
    assert f.min() >= -1.0 - 1e-12


def test_verify_local_min_quartic_at_zero_fails(space3):
    rf = make_rf(space3, "x1^4 - 2*x1^2")
    out = r.verify_local_min(rf, 1, (0.0,))
    assert isinstance(out, LocalMinFailure)
    d = out.witness[0]
    assert d**4 - 2 * d**2 < -1e-12  # the witness really descends


def test_verify_local_min_parabola_delta_one(space3):
    rf = make_rf(space3, "x1^2")
    cert = r.verify_local_min(rf, 1, (0.0,))
    assert cert.delta == 1.0
    assert cert.min_margin >= 0.0


def test_verify_local_min_requires_stationarity(space3):
    rf = make_rf(space3, "x1^2")
    with pytest.raises(ValueError):
        r.verify_local_min(rf, 1, (0.5,))


def test_verify_local_min_flat_quartic_degenerate(space3):
    # x^4 at 0: true minimum but Hessian 0, no descent witness either
    rf = make_rf(space3, "x1^4")
    with pytest.raises(r.NoRadiusFound):
        r.verify_local_min(rf, 1, (0.0,))


def test_verify_local_min_cubic_failure_witness(space3):
    rf = make_rf(space3, "x1^3")
    out = r.verify_local_min(rf, 1, (0.0,))
    assert isinstance(out, LocalMinFailure)
    assert out.witness[0] < 0.0


def test_verify_never_fails_at_pd_stationary_points(space3):
    # a certified-PD stationary point always earns a certificate
    import random

    rng = random.Random(23)
    certified = 0
    while certified < 25:
        body = (
            f"{rng.uniform(0.3, 1.5)}*x1^4 + {rng.uniform(-2, 2)}*x1^2"
            f" + {rng.uniform(-1, 1)}*x1"
        )
        rf = make_rf(space3, body)
        search = r.find_stationary_points(rf, 1, r.Box((-3.0,), (3.0,)))
        for sp in search.points:
            if sp.classification is not Definiteness.PD:
                continue
            out = r.verify_local_min(rf, 1, sp.x)
            assert isinstance(out, r.LocalMinCertificate), (body, sp.x)
            assert out.min_margin >= -1e-12
            certified += 1


# --- grid global minimization -------------------------------------------------------------------


def test_global_min_quartic_tie_breaks_left(space3):
    rf = make_rf(space3, "x1^4 - 2*x1^2")
    res = r.global_min_compact(rf, 1, r.Box((-2.0,), (2.0,)), 401)
    assert res.x == (-1.0,)
    assert res.value == -1.0
    assert res.excluded == 0


def test_global_min_boundary(space3):
    rf = make_rf(space3, "(x1 - 3)^2")
    res = r.global_min_compact(rf, 1, r.Box((0.0,), (1.0,)), 101)
    assert res.x == (1.0,)
    assert res.value == 4.0


def test_global_min_point_cloud(space3):
    rf = make_rf(space3, "x1^2")
    res = r.global_min_compact(rf, 1, r.PointCloud(((0.0,), (2.0,))), 11)
    assert res.x == (0.0,)
    assert res.value == 0.0


def test_global_min_excludes_undefined_points(space3):
    rf = make_rf(space3, "log(x1)")
    res = r.global_min_compact(rf, 1, r.Box((-1.0,), (1.0,)), 11)
    assert res.excluded == 6  # nodes -1.0 .. 0.0 are outside log's domain
    assert res.x[0] == pytest.approx(0.2)  # smallest strictly positive node
    assert res.value == math.log(res.x[0])


def test_global_min_polish_improves_value(space3):
    rf = make_rf(space3, "(x1 - 0.333)^2")
    res = r.global_min_compact(
        rf, 1, r.Box((-1.0,), (1.0,)), 51, polish=True
    )
    assert res.polished
    assert abs(res.x[0] - 0.333) < 1e-9
    assert res.value <= res.grid_value


def test_global_min_rejects_level_set(space3):
    rf = make_rf(space3, "x1^2")
    ls = r.LevelSet((r.parse("x1", 1, 0),), (), r.Box((-1.0,), (1.0,)))
    with pytest.raises(IncompatibleRepresentation):
        r.global_min_compact(rf, 1, ls, 11)


def test_affine_invariance_of_argmin(space3):
    rf = make_rf(space3, "x1^4 - 2*x1^2")
    rf_affine = make_rf(space3, "3*(x1^4 - 2*x1^2) + 5")
    box = r.Box((-2.0,), (2.0,))
    base = r.global_min_compact(rf, 1, box, 401)
    scaled = r.global_min_compact(rf_affine, 1, box, 401)
    assert base.x == scaled.x
    assert scaled.value == 3.0 * base.value + 5.0
    s1 = r.find_stationary_points(rf, 1, box)
    s2 = r.find_stationary_points(rf_affine, 1, box)
    assert [sp.x for sp in s1.points] == pytest.approx(
        [sp.x for sp in s2.points], abs=1e-9
    )


# --- optimal value ---------------------------------------------------------------------------------


def test_optimal_value_quartic(space3):
    rf = make_rf(space3, "x1^4 - 2*x1^2")
    C = r.RandomSet(space3, {s: r.Box((-2.0,), (2.0,)) for s in space3.scenarios})
    ov = r.optimal_value(rf, space3, C, 401)
    assert all(ov.eta.values[s] == (-1.0,) for s in space3.scenarios)
    assert ov.verdict.measurable


def test_optimal_value_vertex_reachable(space3):
    rf = make_rf(space3, "(x1 - p1)^2", params={s: (3.0,) for s in space3.scenarios})
    C = r.RandomSet(space3, {s: r.Box((0.0,), (5.0,)) for s in space3.scenarios})
    ov = r.optimal_value(rf, space3, C, 101)
    assert all(ov.eta.values[s] == (0.0,) for s in space3.scenarios)
    assert ov.verdict.measurable


def test_optimal_value_non_measurable_example(space3):
    # spec example: params (1, 2) inside atom [1,2], box [5,6]
    rf = make_rf(space3, "(x1 - p1)^2", params={1: (1.0,), 2: (2.0,), 3: (3.0,)})
    C = r.RandomSet(space3, {s: r.Box((5.0,), (6.0,)) for s in space3.scenarios})
    ov = r.optimal_value(rf, space3, C, 101)
    assert ov.eta.values[1] == (16.0,)
    assert ov.eta.values[2] == (9.0,)
    assert not ov.verdict.measurable
    # consistent: f itself fails joint measurability, so no measurable
    # optimal value was promised in the first place
    assert not r.check_joint_measurability(rf, [(5.0,)]).measurable


def test_optimal_value_empty_feasible(space3):
    rf = make_rf(space3, "x1^2")
    A = r.RandomSet(space3, {s: r.Box((0.0,), (1.0,)) for s in space3.scenarios})
    B = r.RandomSet(space3, {s: r.Box((2.0,), (3.0,)) for s in space3.scenarios})
    C = r.intersect_setmaps([A, B])
    with pytest.raises(EmptyFeasible):
        r.optimal_value(rf, space3, C, 11)
