"""Closed convex sets with projection, distance, support and normal-cone
oracles.

Supported set forms: the whole space, boxes with infinite bounds, Euclidean
balls, H-polyhedra {y : Ay <= b}, singletons, and finite products.  All
forms are closed and convex by construction and immutable after __init__.

Projections are closed-form except for polyhedra, which use Dykstra's
cyclic projection over the defining halfspaces.  Polyhedral support
functions are evaluated by enumerating vertices and recession rays at
desk scale (dimension <= 6, at most 32 facets).

Normal-cone membership is always tested through the projection identity
xi in N_S(x)  <=>  project(S, x + xi) = x,
which stays valid for unbounded sets.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

FEASIBILITY_TOL = 1e-7
DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_CYCLES = 100_000

SUPPORT_MAX_DIM = 6
SUPPORT_MAX_FACETS = 32


class ConvexSetError(ValueError):
    """Base class for convex-set failures."""


class DykstraError(ConvexSetError):
    """Cyclic projection failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class EmptySetError(ConvexSetError):
    """A polyhedron was found (or suspected) empty at load time."""


class SupportScaleError(ConvexSetError):
    """Polyhedron too large for exact vertex/ray enumeration."""


class InfeasiblePointError(ConvexSetError):
    """Normal-cone query at a point outside the set."""


def _vec(y, dim: int, what: str = "vector") -> np.ndarray:
    arr = np.asarray(y, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise ConvexSetError(f"{what} has dimension {arr.shape[0]}, expected {dim}")
    return arr


def _rows(y, dim: int) -> tuple[np.ndarray, bool]:
    """Input as a (B, dim) batch; flag says whether it was a single vector."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ConvexSetError(
                f"point has dimension {arr.shape[0]}, expected {dim}"
            )
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ConvexSetError(f"points must have shape (*, {dim}), got {arr.shape}")
    return arr, False


class Reals:
    """The whole space R^dim."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ConvexSetError("dimension must be positive")
        self.dim = int(dim)

    def __repr__(self):
        return f"Reals({self.dim})"


class Box:
    """Axis-aligned box; bounds may be -inf/+inf componentwise."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float).reshape(-1)
        self.upper = np.asarray(upper, dtype=float).reshape(-1)
        if self.lower.shape != self.upper.shape:
            raise ConvexSetError("box bounds must have equal length")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ConvexSetError("box bounds must not be NaN")
        if np.any(self.lower > self.upper):
            raise ConvexSetError("box requires lower <= upper componentwise")
        self.dim = self.lower.shape[0]
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class Ball:
    """Closed Euclidean ball."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float).reshape(-1)
        self.radius = float(radius)
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ConvexSetError("ball radius must be a positive real")
        if not np.all(np.isfinite(self.center)):
            raise ConvexSetError("ball center must be finite")
        self.dim = self.center.shape[0]
        self.center.setflags(write=False)

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Singleton:
    """A single point."""

    def __init__(self, point):
        self.point = np.asarray(point, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.point)):
            raise ConvexSetError("singleton point must be finite")
        self.dim = self.point.shape[0]
        self.point.setflags(write=False)

    def __repr__(self):
        return f"Singleton({self.point.tolist()})"


class Polyhedron:
    """H-polyhedron {y : A y <= b}; certified nonempty at construction."""

    def __init__(self, A, b, *, _skip_feasibility_check: bool = False):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise ConvexSetError("A and b must have the same number of rows")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ConvexSetError("polyhedron data must be finite")
        self.dim = self.A.shape[1]
        row_norms = np.linalg.norm(self.A, axis=1)
        trivial = row_norms <= 0.0
        if np.any(trivial & (self.b < 0.0)):
            raise EmptySetError("polyhedron has an unsatisfiable zero row")
        # drop 0 <= b rows; they carry no geometry
        keep = ~trivial
        self.A = self.A[keep]
        self.b = self.b[keep]
        self.A.setflags(write=False)
        self.b.setflags(write=False)
        self._enumeration = None  # cached (vertices, rays) in reduced frame
        if self.A.shape[0] and not _skip_feasibility_check:
            self._certify_nonempty()

    def _certify_nonempty(self):
        probe = np.zeros((1, self.dim))
        try:
            point = _dykstra_halfspaces(
                self.A, self.b, probe, tol=1e-9, max_cycles=20_000
            )
        except DykstraError as err:
            raise EmptySetError(
                "polyhedron feasibility could not be certified "
                f"(cyclic projection stalled at residual {err.residual:.3e}); "
                "the set is likely empty"
            ) from err
        violation = float((self.A @ point[0] - self.b).max(initial=0.0))
        if violation > 1e-6:
            raise EmptySetError(
                f"polyhedron is empty (best point violates constraints by "
                f"{violation:.3e})"
            )

    def __repr__(self):
        return f"Polyhedron(A={self.A.tolist()}, b={self.b.tolist()})"


class Product:
    """Finite product of convex sets, concatenating coordinates."""

    def __init__(self, factors):
        self.factors = tuple(factors)
        if not self.factors:
            raise ConvexSetError("product needs at least one factor")
        self.dim = sum(f.dim for f in self.factors)

    def _split(self, arr: np.ndarray) -> list[np.ndarray]:
        out = []
        offset = 0
        for f in self.factors:
            out.append(arr[..., offset : offset + f.dim])
            offset += f.dim
        return out

    def __repr__(self):
        return f"Product({list(self.factors)})"


ConvexSet = Reals | Box | Ball | Singleton | Polyhedron | Product


# ---------------------------------------------------------------------------
# Dykstra's cyclic projection over halfspaces (batched over points)


def _dykstra_halfspaces(
    A: np.ndarray,
    b: np.ndarray,
    Y: np.ndarray,
    tol: float = DYKSTRA_TOL,
    max_cycles: int = DYKSTRA_MAX_CYCLES,
) -> np.ndarray:
    """Project each row of Y onto {y : Ay <= b} by Dykstra's method.

    Stops when the worst per-point displacement over a full cycle drops
    below ``tol``.  Raises DykstraError with the last displacement if the
    cycle cap is hit (which is also how inconsistent families surface).
    """
    m = A.shape[0]
    if m == 0:
        return Y.copy()
    X = Y.astype(float).copy()
    corrections = np.zeros((m,) + X.shape)
    sq = np.einsum("ij,ij->i", A, A)
    disp = np.inf
    for _ in range(max_cycles):
        X_prev = X.copy()
        for i in range(m):
            Z = X + corrections[i]
            gap = (Z @ A[i] - b[i]) / sq[i]
            proj = Z - np.maximum(gap, 0.0)[:, None] * A[i]
            corrections[i] = Z - proj
            X = proj
        disp = float(np.linalg.norm(X - X_prev, axis=1).max())
        if disp <= tol:
            return X
    raise DykstraError(
        f"Dykstra projection did not converge within {max_cycles} cycles "
        f"(last cycle displacement {disp:.3e})",
        disp,
    )


def dykstra_intersection(project_fns, y, tol: float = DYKSTRA_TOL,
                         max_cycles: int = DYKSTRA_MAX_CYCLES) -> np.ndarray:
    """Dykstra's method over a finite family of projection oracles."""
    y = np.asarray(y, dtype=float).reshape(-1)
    m = len(project_fns)
    X = y.copy()
    corrections = [np.zeros_like(y) for _ in range(m)]
    disp = np.inf
    for _ in range(max_cycles):
        X_prev = X.copy()
        for i, proj_fn in enumerate(project_fns):
            Z = X + corrections[i]
            P = proj_fn(Z)
            corrections[i] = Z - P
            X = P
        disp = float(np.linalg.norm(X - X_prev))
        if disp <= tol:
            return X
    raise DykstraError(
        f"Dykstra intersection projection did not converge within "
        f"{max_cycles} cycles (last displacement {disp:.3e})",
        disp,
    )


# ---------------------------------------------------------------------------
# projection / distance


def project(S: ConvexSet, y) -> np.ndarray:
    """Euclidean projection onto S.

    Accepts a single vector or a (B, dim) batch of row vectors and returns
    the same shape.
    """
    Y, single = _rows(y, S.dim)
    out = _project_rows(S, Y)
    return out[0] if single else out


def _project_rows(S: ConvexSet, Y: np.ndarray) -> np.ndarray:
    if isinstance(S, Reals):
        return Y.copy()
    if isinstance(S, Box):
        return np.clip(Y, S.lower, S.upper)
    if isinstance(S, Ball):
        delta = Y - S.center
        dist = np.linalg.norm(delta, axis=1)
        scale = np.ones_like(dist)
        outside = dist > S.radius
        scale[outside] = S.radius / dist[outside]
        return S.center + delta * scale[:, None]
    if isinstance(S, Singleton):
        return np.tile(S.point, (Y.shape[0], 1))
    if isinstance(S, Polyhedron):
        violation = (Y @ S.A.T - S.b) if S.A.shape[0] else np.zeros((Y.shape[0], 0))
        if violation.size == 0 or float(violation.max()) <= 0.0:
            return Y.copy()
        return _dykstra_halfspaces(S.A, S.b, Y)
    if isinstance(S, Product):
        parts = [_project_rows(f, block) for f, block in zip(S.factors, S._split(Y))]
        return np.concatenate(parts, axis=1)
    raise ConvexSetError(f"unknown set form {type(S).__name__}")


def distance(S: ConvexSet, y) -> float | np.ndarray:
    """Euclidean distance ||y - project(S, y)||; zero iff y in S."""
    Y, single = _rows(y, S.dim)
    if isinstance(S, Reals):
        d = np.zeros(Y.shape[0])
    else:
        d = np.linalg.norm(Y - _project_rows(S, Y), axis=1)
    return float(d[0]) if single else d


def contains(S: ConvexSet, y, tol: float = FEASIBILITY_TOL) -> bool:
    return bool(np.all(np.asarray(distance(S, y)) <= tol))


# ---------------------------------------------------------------------------
# support functions


def support(S: ConvexSet, xi, zero_tol: float = 0.0) -> float:
    """Support value sup{<xi, w> : w in S}; +inf when the supremum is
    unattained along a recession direction.

    ``zero_tol`` treats components of xi within tolerance of zero as zero
    before testing unbounded directions, which lets callers with noisy
    inputs query sets such as the whole space without spurious infinities.
    """
    x = _vec(xi, S.dim, "support direction")
    if isinstance(S, Reals):
        return 0.0 if np.linalg.norm(x) <= zero_tol else math.inf
    if isinstance(S, Box):
        total = 0.0
        for xi_i, lo, hi in zip(x, S.lower, S.upper):
            if abs(xi_i) <= zero_tol:
                continue
            bound = hi if xi_i > 0 else lo
            if not math.isfinite(bound):
                return math.inf
            total += xi_i * bound
        return float(total)
    if isinstance(S, Ball):
        return float(S.center @ x + S.radius * np.linalg.norm(x))
    if isinstance(S, Singleton):
        return float(S.point @ x)
    if isinstance(S, Polyhedron):
        return _polyhedron_support(S, x, zero_tol)
    if isinstance(S, Product):
        total = 0.0
        for f, block in zip(S.factors, S._split(x)):
            val = support(f, block, zero_tol=zero_tol)
            if math.isinf(val):
                return math.inf
            total += val
        return float(total)
    raise ConvexSetError(f"unknown set form {type(S).__name__}")


def _polyhedron_support(S: Polyhedron, xi: np.ndarray, zero_tol: float) -> float:
    if S.dim > SUPPORT_MAX_DIM or S.A.shape[0] > SUPPORT_MAX_FACETS:
        raise SupportScaleError(
            "enumeration scale exceeded: polyhedral support is computed "
            f"exactly only up to dimension {SUPPORT_MAX_DIM} and "
            f"{SUPPORT_MAX_FACETS} facets (got dim {S.dim}, "
            f"{S.A.shape[0]} facets)"
        )
    basis, vertices, rays = _enumerate(S)
    # lineality directions (null space of A) recede both ways
    if basis.shape[1] < S.dim:
        residual = xi - basis @ (basis.T @ xi)
        if np.linalg.norm(residual) > max(zero_tol, 1e-12 * (1 + np.linalg.norm(xi))):
            return math.inf
    xi_red = basis.T @ xi
    xi_scale = max(1.0, float(np.linalg.norm(xi_red)))
    for r in rays:
        if float(r @ xi_red) > max(zero_tol, 1e-10) * xi_scale:
            return math.inf
    if vertices.shape[0] == 0:  # reduced cone with apex only
        return 0.0
    return float((vertices @ xi_red).max())


def _enumerate(S: Polyhedron):
    """Vertices and extreme rays of the polyhedron, in an orthonormal
    frame of the orthogonal complement of its lineality space.

    Returns (basis, vertices, rays): basis has shape (dim, d_red); vertex
    and ray rows are coordinates w.r.t. that basis.  Cached per instance.
    """
    if S._enumeration is not None:
        return S._enumeration
    A, b = S.A, S.b
    dim = S.dim
    if A.shape[0] == 0:
        basis = np.zeros((dim, 0))
        result = (basis, np.zeros((0, 0)), np.zeros((0, 0)))
        S._enumeration = result
        return result
    # orthonormal basis of row space; its complement is the lineality space
    _, sing, vt = np.linalg.svd(A)
    rank = int((sing > 1e-10 * sing[0]).sum())
    basis = vt[:rank].T  # (dim, rank)
    B = A @ basis  # reduced, pointed description {z : Bz <= b}
    d = rank
    m = B.shape[0]

    vertices = []
    for subset in itertools.combinations(range(m), d):
        sub = B[list(subset)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        z = np.linalg.solve(sub, b[list(subset)])
        if np.all(B @ z <= b + 1e-8 * (1 + np.abs(b))):
            vertices.append(z)
    vertices = _dedupe(np.array(vertices).reshape(-1, d))

    if vertices.shape[0] == 0:
        raise ConvexSetError(
            "vertex enumeration found no vertices of a pointed polyhedron; "
            "the description is numerically degenerate"
        )

    row_scale = 1.0 + np.linalg.norm(B, axis=1)
    rays = []
    if d == 1:
        for cand in (np.array([1.0]), np.array([-1.0])):
            if np.all(B @ cand <= 1e-9 * row_scale):
                rays.append(cand)
    else:
        for subset in itertools.combinations(range(m), d - 1):
            sub = B[list(subset)]
            _, s2, vt2 = np.linalg.svd(sub)
            null_dim = d - int((s2 > 1e-10 * max(s2[0], 1e-300)).sum())
            if null_dim != 1:
                continue
            cand = vt2[-1]
            for direction in (cand, -cand):
                if np.all(B @ direction <= 1e-9 * row_scale):
                    rays.append(direction / np.linalg.norm(direction))
    rays = _dedupe(np.array(rays).reshape(-1, d))

    result = (basis, vertices, rays)
    S._enumeration = result
    return result


def _dedupe(points: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    width = points.shape[1] if points.ndim == 2 else 0
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol for q in kept):
            kept.append(p)
    if not kept:
        return np.zeros((0, width))
    return np.array(kept)


# ---------------------------------------------------------------------------
# normal and tangent cones


def normal_cone_residual(
    S: ConvexSet, x, xi, feas_tol: float = FEASIBILITY_TOL
) -> float | np.ndarray:
    """Membership defect of xi in the normal cone to S at x, via the
    projection identity: returns ||project(S, x + xi) - x||.

    x must belong to S up to ``feas_tol`` (the normal cone is empty
    elsewhere).  Accepts batched rows for x and xi.
    """
    X, single = _rows(x, S.dim)
    XI, single_xi = _rows(xi, S.dim)
    if X.shape != XI.shape:
        raise ConvexSetError("x and xi batches must have matching shapes")
    dist = np.asarray(distance(S, X)).reshape(-1)
    worst = float(dist.max())
    if worst > feas_tol:
        raise InfeasiblePointError(
            f"normal-cone query at an infeasible point: distance {worst:.3e} "
            f"exceeds tolerance {feas_tol:.1e}"
        )
    res = np.linalg.norm(_project_rows(S, X + XI) - X, axis=1)
    return float(res[0]) if (single and single_xi) else res


def tangent_cone(S: ConvexSet, x, tol: float = 1e-9) -> ConvexSet:
    """Tangent cone to S at a point of S, expressed as another set."""
    p = _vec(x, S.dim, "point")
    if isinstance(S, Reals):
        return Reals(S.dim)
    if isinstance(S, Box):
        lower = np.full(S.dim, -math.inf)
        upper = np.full(S.dim, math.inf)
        at_lower = p <= S.lower + tol
        at_upper = p >= S.upper - tol
        lower[at_lower] = 0.0
        upper[at_upper] = 0.0
        return Box(lower, upper)
    if isinstance(S, Ball):
        gap = S.radius - np.linalg.norm(p - S.center)
        if gap > tol:
            return Reals(S.dim)
        normal = (p - S.center)[None, :]
        return Polyhedron(normal, np.zeros(1), _skip_feasibility_check=True)
    if isinstance(S, Singleton):
        return Singleton(np.zeros(S.dim))
    if isinstance(S, Polyhedron):
        slack = S.b - S.A @ p
        active = slack <= tol * (1.0 + np.abs(S.b))
        if not np.any(active):
            return Reals(S.dim)
        return Polyhedron(
            S.A[active], np.zeros(int(active.sum())), _skip_feasibility_check=True
        )
    if isinstance(S, Product):
        return Product(
            tangent_cone(f, block, tol) for f, block in zip(S.factors, S._split(p))
        )
    raise ConvexSetError(f"unknown set form {type(S).__name__}")


def project_normal_cone(S: ConvexSet, x, xi) -> np.ndarray:
    """Projection of xi onto the normal cone to S at x (Moreau split
    against the tangent cone)."""
    v = _vec(xi, S.dim, "vector")
    T = tangent_cone(S, x)
    return v - project(T, v)


def neg_normal_sum_distance(S1: ConvexSet, x1, S2: ConvexSet, x2, v) -> float:
    """Distance from v to -N_{S1}(x1) - N_{S2}(x2).

    By Moreau's decomposition against the polar cone, the distance from v
    to -(N1 + N2) equals the norm of the projection of -v onto the
    intersection of the tangent cones T1 and T2 (the polars of N1, N2).
    The intersection projection runs Dykstra over the two tangent-cone
    projectors.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    T1 = tangent_cone(S1, x1)
    T2 = tangent_cone(S2, x2)
    inter = dykstra_intersection(
        [lambda z, K=T1: project(K, z), lambda z, K=T2: project(K, z)], -v
    )
    return float(np.linalg.norm(inter))
