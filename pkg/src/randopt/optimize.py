"""Per-scenario numerical optimization.

Positive definiteness is decided by Sylvester's criterion (leading
principal minors); the semidefinite and indefinite cases fall back to a
cyclic Jacobi eigenvalue sweep.  Stationary points come from damped
Newton iterations started on a grid; local minimality is certified by
finding a ball on which the Hessian stays positive definite and then
sampling the objective inside it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DomainMismatch,
    DomainViolation,
    EmptyFeasible,
    EvalError,
    IncompatibleRepresentation,
    NoRadiusFound,
    NotSymmetric,
)
from .probspace import (
    MeasurabilityVerdict,
    Point,
    ProbSpace,
    RandomVariableRn,
    Scenario,
    is_measurable_rv,
)
from .randfunc import (
    Box,
    EmptySet,
    PointCloud,
    RandomFunction,
    RandomSet,
    eval_f,
    eval_f_batch,
    gradient,
    hessian,
)

SYMMETRY_TOL = 1e-9
STATIONARITY_TOL = 1e-8
JACOBI_OFF_TOL = 1e-12
MARGIN_TOL = 1e-12
MAX_GRID_POINTS = 20_000_000


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by the search and certification routines."""

    grid_m: int = 101          # points per dimension for exhaustive scans
    newton_grid_m: int = 9     # starts per dimension for multistart Newton
    newton_tol: float = 1e-10  # sup-norm gradient tolerance for convergence
    newton_max_iters: int = 60
    dedup_radius: float = 1e-6
    tol_rel: float = 1e-10     # definiteness tolerance scale
    seed: int = 0
    polish: bool = False

    def with_(self, **kw) -> "SolverOptions":
        return replace(self, **kw)


# --- definiteness ---------------------------------------------------------------


class Definiteness(enum.Enum):
    PD = "PD"
    PSD_DEGENERATE = "PSD_degenerate"
    INDEFINITE = "indefinite"
    ND = "ND"
    NSD_DEGENERATE = "NSD_degenerate"


def _as_symmetric(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NotSymmetric(f"matrix has shape {H.shape}, expected square")
    asym = float(np.max(np.abs(H - H.T))) if H.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"asymmetry {asym:g} exceeds {SYMMETRY_TOL:g}")
    return (H + H.T) / 2.0


def leading_principal_minors(H: np.ndarray) -> np.ndarray:
    """Determinants of the top-left k x k submatrices, k = 1..n.

    Closed form up to 3x3; LU with partial pivoting (LAPACK) above.
    """
    H = _as_symmetric(H)
    n = H.shape[0]
    minors = np.empty(n)
    for k in range(1, n + 1):
        A = H[:k, :k]
        if k == 1:
            minors[0] = A[0, 0]
        elif k == 2:
            minors[1] = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        elif k == 3:
            minors[2] = (
                A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
            )
        else:
            minors[k - 1] = float(np.linalg.det(A))
    return minors


def jacobi_eigenvalues(
    H: np.ndarray, off_tol: float = JACOBI_OFF_TOL, max_sweeps: int = 100
) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the Frobenius norm of the off-diagonal part drops to
    ``off_tol``; returns eigenvalues sorted ascending.
    """
    A = _as_symmetric(H).copy()
    n = A.shape[0]
    if n == 1:
        return A.diagonal().copy()
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(A * A) - np.sum(A.diagonal() ** 2)), 0.0))
        if off <= off_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(A[p, q])
                if apq == 0.0:
                    continue
                diff = float(A[q, q] - A[p, p])
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(theta * theta + 1.0)
                    )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                A[p, q] = A[q, p] = 0.0
    return np.sort(A.diagonal())


def classify_definiteness(H: np.ndarray, tol_rel: float = 1e-10) -> Definiteness:
    """Sylvester's criterion for PD; Jacobi eigenvalues for the rest.

    Minor k is compared against tol_rel * (1 + |H|_inf)^k so the test is
    scale-invariant; eigenvalues against tol_rel * (1 + |H|_inf).
    """
    H = _as_symmetric(H)
    norm = float(np.max(np.sum(np.abs(H), axis=1)))
    minors = leading_principal_minors(H)
    scale = 1.0 + norm
    if all(minors[k] > tol_rel * scale ** (k + 1) for k in range(len(minors))):
        return Definiteness.PD
    lam = jacobi_eigenvalues(H)
    tau = tol_rel * scale
    lmin, lmax = float(lam[0]), float(lam[-1])
    if lmin > tau:
        return Definiteness.PD
    if lmax < -tau:
        return Definiteness.ND
    if lmin < -tau and lmax > tau:
        return Definiteness.INDEFINITE
    if lmin >= -tau and lmax > tau:
        return Definiteness.PSD_DEGENERATE
    if lmax <= tau and lmin < -tau:
        return Definiteness.NSD_DEGENERATE
    return Definiteness.PSD_DEGENERATE  # numerically zero matrix


# --- stationary points ------------------------------------------------------------


@dataclass(frozen=True)
class StationaryPoint:
    omega: Scenario
    x: Point
    grad_norm: float
    minors: tuple[float, ...]
    classification: Definiteness
    newton_iters: int


@dataclass(frozen=True)
class StationarySearch:
    points: tuple[StationaryPoint, ...]
    starts: int
    skipped_singular: int  # singular Hessian or undefined derivative at a start
    stalled: int           # damping exhausted or iteration cap hit


def _grid_axes(region: Box, m: int) -> list[np.ndarray]:
    axes = []
    for lo, hi in zip(region.lower, region.upper):
        axes.append(np.array([lo]) if lo == hi else np.linspace(lo, hi, max(m, 2)))
    return axes


def _newton_from(
    rf: RandomFunction,
    omega: Scenario,
    x0: Sequence[float],
    opts: SolverOptions,
) -> tuple[Optional[np.ndarray], int, str]:
    """Damped Newton on the gradient; returns (point or None, iters, status).

    Iteration continues past the convergence tolerance as long as steps
    keep shrinking the gradient, so degenerate roots (vanishing Hessian)
    are driven to the numerical limit instead of stopping at a point whose
    Hessian still looks definite.
    """
    x = np.asarray(x0, dtype=float).copy()
    try:
        g = gradient(rf, omega, x)
    except EvalError:
        return None, 0, "singular"
    reason = "limit"
    it = 0
    for it in range(opts.newton_max_iters):
        gn = float(np.max(np.abs(g)))
        if gn == 0.0:
            break
        if float(np.max(np.abs(x))) > 1e8:
            reason = "runaway"
            break
        try:
            H = hessian(rf, omega, x)
            d = np.linalg.solve(H, -g)
        except (EvalError, np.linalg.LinAlgError):
            reason = "singular"
            break
        lam = 1.0
        moved = False
        attempts = 2 if gn <= opts.newton_tol else 30
        for _ in range(attempts):
            xn = x + lam * d
            try:
                gnew = gradient(rf, omega, xn)
            except EvalError:
                lam /= 2.0
                continue
            if float(np.max(np.abs(gnew))) < gn:
                x, g = xn, gnew
                moved = True
                break
            lam /= 2.0
        if not moved:
            reason = "nodecrease"
            break
    gn = float(np.max(np.abs(g)))
    if gn <= opts.newton_tol and reason != "runaway":
        return x, it, "converged"
    if reason == "singular":
        return None, it, "singular"
    return None, it, "stalled"


def find_stationary_points(
    rf: RandomFunction,
    omega: Scenario,
    region: Box,
    opts: SolverOptions = SolverOptions(),
) -> StationarySearch:
    """Multistart damped Newton on the gradient over ``region``.

    Converged points outside the region are discarded; duplicates merge at
    ``opts.dedup_radius``.  Singular or undefined starts are skipped and
    counted, never fatal.
    """
    if region.dim != rf.n:
        raise IncompatibleRepresentation("region dimension differs from function")
    axes = _grid_axes(region, opts.newton_grid_m)
    mesh = np.meshgrid(*axes, indexing="ij")
    starts = np.stack([g.ravel() for g in mesh], axis=-1)
    converged: list[tuple[np.ndarray, int]] = []
    skipped = stalled = 0
    for x0 in starts:
        x, iters, status = _newton_from(rf, omega, x0, opts)
        if status == "singular":
            skipped += 1
        elif status == "stalled":
            stalled += 1
        elif region.contains(x, tol=1e-9):
            converged.append((x, iters))
    converged.sort(key=lambda pair: tuple(pair[0]))
    kept: list[tuple[np.ndarray, int]] = []
    for x, iters in converged:
        if all(float(np.max(np.abs(x - y))) > opts.dedup_radius for y, _ in kept):
            kept.append((x, iters))
    points = []
    for x, iters in kept:
        try:
            g = gradient(rf, omega, x)
            H = hessian(rf, omega, x)
        except EvalError:
            skipped += 1
            continue
        points.append(
            StationaryPoint(
                omega=omega,
                x=tuple(float(v) for v in x),
                grad_norm=float(np.max(np.abs(g))),
                minors=tuple(float(v) for v in leading_principal_minors(H)),
                classification=classify_definiteness(H, opts.tol_rel),
                newton_iters=iters,
            )
        )
    return StationarySearch(tuple(points), len(starts), skipped, stalled)


# --- local minimality certificates ---------------------------------------------------


@dataclass(frozen=True)
class LocalMinCertificate:
    omega: Scenario
    x: Point
    delta: float          # verified ball radius
    samples_checked: int
    min_margin: float     # min over samples of f(x + d) - f(x)


@dataclass(frozen=True)
class LocalMinFailure:
    omega: Scenario
    x: Point
    witness: Point        # direction d with f(x + d) < f(x) - MARGIN_TOL
    margin: float


def _unit_directions(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    d = rng.standard_normal((count, n))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return d / norms


def verify_local_min(
    rf: RandomFunction,
    omega: Scenario,
    x: Sequence[float],
    opts: SolverOptions = SolverOptions(),
) -> Union[LocalMinCertificate, LocalMinFailure]:
    """Certify local minimality of a stationary point.

    Halves delta from 1 until the Hessian is positive definite at 8n
    deterministic sample points of the closed ball (center included), then
    samples 200n objective values inside the certified ball.  When no ball
    works, hunts for an explicit descent witness; if even that fails the
    situation is degenerate and NoRadiusFound is raised.
    """
    x = np.asarray(x, dtype=float)
    n = rf.n
    g = gradient(rf, omega, x)
    if float(np.max(np.abs(g))) > STATIONARITY_TOL:
        raise ValueError(
            f"point is not stationary: |g|_inf = {float(np.max(np.abs(g))):g}"
        )
    f0 = eval_f(rf, omega, x)

    rng = np.random.default_rng([opts.seed, 0xB0A1])
    count = 8 * n
    dirs = np.concatenate([np.eye(n), -np.eye(n), _unit_directions(rng, count - 2 * n, n)])
    radii = np.array([(1.0, 0.75, 0.5, 0.25)[i % 4] for i in range(len(dirs))])

    def ball_is_pd(delta: float) -> bool:
        try:
            if classify_definiteness(hessian(rf, omega, x), opts.tol_rel) is not Definiteness.PD:
                return False
            for d, r in zip(dirs, radii):
                H = hessian(rf, omega, x + delta * r * d)
                if classify_definiteness(H, opts.tol_rel) is not Definiteness.PD:
                    return False
        except EvalError:
            return False
        return True

    delta = None
    for halving in range(41):
        cand = 2.0 ** -halving
        if ball_is_pd(cand):
            delta = cand
            break

    if delta is None:
        # no PD ball: look for an explicit descent direction instead
        hunt_dirs = np.concatenate([np.eye(n), -np.eye(n), _unit_directions(rng, 10 * n, n)])
        best_margin = math.inf
        best_d = None
        for j in range(41):
            r = 2.0 ** -j
            for d in hunt_dirs:
                try:
                    margin = eval_f(rf, omega, x + r * d) - f0
                except EvalError:
                    continue
                if margin < best_margin:
                    best_margin = margin
                    best_d = r * d
        if best_d is not None and best_margin < -MARGIN_TOL:
            return LocalMinFailure(
                omega,
                tuple(float(v) for v in x),
                tuple(float(v) for v in best_d),
                float(best_margin),
            )
        raise NoRadiusFound(
            "no ball with positive definite Hessian after 40 halvings, "
            "and sampling found no descent direction"
        )

    rng2 = np.random.default_rng([opts.seed, 0xF00D])
    K = 200 * n
    exponents = np.arange(K) / max(K - 1, 1)
    sample_radii = delta * (1.0 / 1024.0) ** exponents
    sample_dirs = _unit_directions(rng2, K, n)
    min_margin = math.inf
    for r, d in zip(sample_radii, sample_dirs):
        margin = eval_f(rf, omega, x + r * d) - f0
        if margin < min_margin:
            min_margin = margin
            if min_margin < -MARGIN_TOL:
                return LocalMinFailure(
                    omega,
                    tuple(float(v) for v in x),
                    tuple(float(v) for v in r * d),
                    float(min_margin),
                )
    return LocalMinCertificate(
        omega, tuple(float(v) for v in x), delta, K, float(min_margin)
    )


# --- global minimization on compact sets ----------------------------------------------


@dataclass(frozen=True)
class GlobalMinResult:
    x: Point
    value: float
    grid_x: Point        # unpolished grid argmin (the oracle value)
    grid_value: float
    excluded: int        # grid points where evaluation failed
    polished: bool = False


def polish_point(
    rf: RandomFunction,
    omega: Scenario,
    x0: Sequence[float],
    region: Box,
    opts: SolverOptions = SolverOptions(),
) -> Optional[Point]:
    """Newton-refine a near-stationary point; None unless it stays in the
    region, reaches stationarity, and does not increase f."""
    x, _, status = _newton_from(rf, omega, x0, opts)
    if status != "converged" or x is None:
        return None
    if not region.contains(x, tol=1e-9):
        return None
    try:
        if eval_f(rf, omega, x) > eval_f(rf, omega, x0) + MARGIN_TOL:
            return None
    except EvalError:
        return None
    return tuple(float(v) for v in x)


def global_min_compact(
    rf: RandomFunction,
    omega: Scenario,
    C_omega: Union[Box, PointCloud],
    grid_m: int,
    polish: bool = False,
    opts: SolverOptions = SolverOptions(),
) -> GlobalMinResult:
    """Exhaustive evaluation over a grid (Box) or all points (PointCloud).

    Exact value ties break to the lexicographically smallest point.  Grid
    points where evaluation fails are excluded and counted.
    """
    if isinstance(C_omega, EmptySet):
        raise EmptyFeasible(omega)
    if isinstance(C_omega, Box):
        if C_omega.dim != rf.n:
            raise IncompatibleRepresentation("set dimension differs from function")
        axes = _grid_axes(C_omega, grid_m)
        total = math.prod(len(a) for a in axes)
        if total > MAX_GRID_POINTS:
            raise ValueError(f"grid of {total} points exceeds cap {MAX_GRID_POINTS}")
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([g.ravel() for g in mesh], axis=-1)
    elif isinstance(C_omega, PointCloud):
        if C_omega.dim != rf.n:
            raise IncompatibleRepresentation("set dimension differs from function")
        X = np.asarray(sorted(C_omega.points), dtype=float)
    else:
        raise IncompatibleRepresentation(
            f"grid minimization needs a Box or PointCloud, got {type(C_omega).__name__}"
        )
    values, valid = eval_f_batch(rf, omega, X)
    excluded = int(np.count_nonzero(~valid))
    if excluded == len(X):
        raise DomainViolation(
            f"objective undefined at every point of the set for scenario {omega!r}"
        )
    masked = np.where(valid, values, np.inf)
    idx = int(np.argmin(masked))  # first occurrence = lexicographically smallest
    grid_x = tuple(float(v) for v in X[idx])
    grid_value = float(masked[idx])

    x_best, v_best, polished = grid_x, grid_value, False
    if polish and isinstance(C_omega, Box):
        refined = polish_point(rf, omega, grid_x, C_omega, opts)
        if refined is not None:
            v_ref = eval_f(rf, omega, refined)
            if v_ref <= grid_value + MARGIN_TOL:
                x_best, v_best, polished = refined, float(v_ref), True
    return GlobalMinResult(x_best, v_best, grid_x, grid_value, excluded, polished)


# --- the optimal-value random variable --------------------------------------------------


@dataclass(frozen=True)
class OptimalValue:
    eta: RandomVariableRn                    # scenario -> (min value,)
    verdict: MeasurabilityVerdict            # measurability of eta, tol 1e-9
    per_scenario: dict[Scenario, GlobalMinResult] = field(repr=False, default=None)


def optimal_value(
    rf: RandomFunction, space: ProbSpace, C: RandomSet, grid_m: int
) -> OptimalValue:
    """Minimum value per scenario and the measurability verdict of that map.

    No measurability hypothesis is enforced here: the verdict reports what
    actually happened, which is how the counterexamples are exhibited.
    """
    if C.space != space or rf.space != space:
        raise DomainMismatch("function, set, and space must agree")
    results: dict[Scenario, GlobalMinResult] = {}
    values: dict[Scenario, Point] = {}
    for omega in space.scenarios:
        res = global_min_compact(rf, omega, C.descriptions[omega], grid_m)
        results[omega] = res
        values[omega] = (res.grid_value,)
    eta = RandomVariableRn(space, values)
    verdict = is_measurable_rv(space, eta, tol=1e-9)
    return OptimalValue(eta, verdict, results)
