"""Built-in benchmark problems with known first-order data.

Each case carries the problem instance together with the analytic
trajectory, adjoint arc, multiplier density, endpoint multipliers and
optimal value where these are known in closed form.  The closed-form
data satisfies the optimality system exactly on every grid, which makes
the cases usable both as solver targets and as certificate fixtures.

  p1  "line":          min int v^2/2, endpoints pinned to (0, 1).
                       Optimum x(t) = t, adjoint p = 1, value 1/2.
  p2  "capped-speed":  min int (v-2)^2/2, speed capped at 1, x(0) = 0.
                       The cap binds: x(t) = t, p = 0, density mu = 1.
  p3  "state-cost":    min int x^2/2, endpoints in [0,1]^2, free speed.
                       Optimum x = 0 with p = 0, mu = 0, value 0.
  p4  "drift":         min int v^2/2 with x' + x in [-1,1], x(0) = 1.
                       Sitting still is feasible: x = 1, p = 0, value 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as ex
from .convex import Box, Product, Reals, Singleton
from .funspace import CellPath, Grid, Trajectory
from .problem import ProblemSpec


@dataclass(frozen=True)
class BenchmarkCase:
    id: str
    problem: ProblemSpec
    x_star: Callable[[Grid], Trajectory]
    p_star: Callable[[Grid], Trajectory]
    mu_star: Callable[[Grid], CellPath]
    s1_star: np.ndarray
    s2_star: np.ndarray
    J_star: float
    note: str


def _traj(fn) -> Callable[[Grid], Trajectory]:
    return lambda grid: Trajectory(grid, fn(grid.nodes())[:, None])


def _cells(value: float) -> Callable[[Grid], CellPath]:
    return lambda grid: CellPath(grid, np.full((grid.N, 1), value))


def _p1() -> BenchmarkCase:
    problem = ProblemSpec(
        n=1,
        T=1.0,
        phi=ex.parse("0", 1, ex.PROFILE_TERMINAL),
        theta=ex.parse("v1^2/2", 1, ex.PROFILE_RUNNING),
        g=[ex.parse("0", 1, ex.PROFILE_DRIFT)],
        omega1=Reals(1),
        omega2=Singleton([0.0, 1.0]),
    )
    return BenchmarkCase(
        id="p1",
        problem=problem,
        x_star=_traj(lambda t: t),
        p_star=_traj(lambda t: np.ones_like(t)),
        mu_star=_cells(0.0),
        s1_star=np.array([1.0]),
        s2_star=np.array([-1.0]),
        J_star=0.5,
        note="shortest quadratic action between pinned endpoints",
    )


def _p2() -> BenchmarkCase:
    problem = ProblemSpec(
        n=1,
        T=1.0,
        phi=ex.parse("0", 1, ex.PROFILE_TERMINAL),
        theta=ex.parse("(v1-2)^2/2", 1, ex.PROFILE_RUNNING),
        g=[ex.parse("0", 1, ex.PROFILE_DRIFT)],
        omega1=Box([-np.inf], [1.0]),
        omega2=Product([Singleton([0.0]), Reals(1)]),
    )
    return BenchmarkCase(
        id="p2",
        problem=problem,
        x_star=_traj(lambda t: t),
        p_star=_traj(lambda t: np.zeros_like(t)),
        mu_star=_cells(1.0),
        s1_star=np.array([0.0]),
        s2_star=np.array([0.0]),
        J_star=0.5,
        note="speed cap binds everywhere; constant unit multiplier density",
    )


def _p3() -> BenchmarkCase:
    problem = ProblemSpec(
        n=1,
        T=1.0,
        phi=ex.parse("0", 1, ex.PROFILE_TERMINAL),
        theta=ex.parse("x1^2/2", 1, ex.PROFILE_RUNNING),
        g=[ex.parse("0", 1, ex.PROFILE_DRIFT)],
        omega1=Reals(1),
        omega2=Box([0.0, 0.0], [1.0, 1.0]),
    )
    return BenchmarkCase(
        id="p3",
        problem=problem,
        x_star=_traj(lambda t: np.zeros_like(t)),
        p_star=_traj(lambda t: np.zeros_like(t)),
        mu_star=_cells(0.0),
        s1_star=np.array([0.0]),
        s2_star=np.array([0.0]),
        J_star=0.0,
        note="pure state cost with box endpoints; reduced endpoint "
        "inclusion applies",
    )


def _p4() -> BenchmarkCase:
    problem = ProblemSpec(
        n=1,
        T=1.0,
        phi=ex.parse("0", 1, ex.PROFILE_TERMINAL),
        theta=ex.parse("v1^2/2", 1, ex.PROFILE_RUNNING),
        g=[ex.parse("x1", 1, ex.PROFILE_DRIFT)],
        omega1=Box([-1.0], [1.0]),
        omega2=Product([Singleton([1.0]), Reals(1)]),
    )
    return BenchmarkCase(
        id="p4",
        problem=problem,
        x_star=_traj(lambda t: np.ones_like(t)),
        p_star=_traj(lambda t: np.zeros_like(t)),
        mu_star=_cells(0.0),
        s1_star=np.array([0.0]),
        s2_star=np.array([0.0]),
        J_star=0.0,
        note="state-dependent velocity window, inactive at the optimum",
    )


_BUILDERS = {"p1": _p1, "p2": _p2, "p3": _p3, "p4": _p4}


def case_ids() -> list[str]:
    return sorted(_BUILDERS)


def get_case(case_id: str) -> BenchmarkCase:
    try:
        return _BUILDERS[case_id.lower()]()
    except KeyError:
        raise KeyError(
            f"unknown benchmark case {case_id!r}; available: {case_ids()}"
        ) from None


def all_cases() -> list[BenchmarkCase]:
    return [get_case(cid) for cid in case_ids()]
