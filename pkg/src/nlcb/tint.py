"""Implicit Newmark-beta integration with Newton-Raphson iterations.

One integrator drives any second-order system exposing

* ``M`` and ``D`` (mass and damping, dense or sparse),
* ``internal_force(x)`` and ``tangent(x)``,
* ``potential(x)`` for the energy audit,
* ``factor(S)`` returning a solver for the iteration matrix and
  ``solve_mass(r)`` for the initial acceleration,
* ``linear``, true when the tangent is constant so one factorization
  serves the whole run.

The residual is ``r = M a + D v + f_int(x) - f_ext(t)`` and the unknown
of every step is the end-of-step displacement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe import assemble_global
from .rom import ReducedModel, reduced_force, reduced_jacobian, reduced_potential


class NewtonDivergence(RuntimeError):
    """Newton iterations failed; ``residuals`` holds the relative norms."""

    def __init__(self, step, time, residuals):
        self.step = step
        self.time = time
        self.residuals = list(residuals)
        tail = ", ".join(f"{r:.3e}" for r in self.residuals[-5:])
        super().__init__(
            f"Newton did not converge at step {step} (t={time:.6g} s) after "
            f"{len(self.residuals)} iterations; last relative residuals: {tail}"
        )


@dataclass(frozen=True)
class IntegratorConfig:
    """Newmark parameters and Newton controls.

    The defaults select the average acceleration rule.
    """

    dt: float
    t_end: float
    gamma: float = 0.5
    beta: float = 0.25
    newton_tol: float = 1e-6
    max_iter: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if not (2 * self.beta >= self.gamma >= 0.5):
            raise ValueError(
                f"gamma={self.gamma}, beta={self.beta} outside the unconditionally "
                "stable region 2 beta >= gamma >= 1/2"
            )
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class TimeHistory:
    """States on a uniform grid plus per-step Newton counts and energy audit.

    Row ``k`` of every array refers to ``times[k]``; ``iterations[0]``
    is zero. ``work_ext`` and ``dissipated`` are cumulative from zero.
    ``audit`` is the per-step discrete power-balance residual
    ``dT + dx.(f_int0 + f_int1)/2 - dx.(f_ext0 + f_ext1)/2 + dx.D(v0 + v1)/2``.
    """

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    iterations: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    work_ext: np.ndarray
    dissipated: np.ndarray
    audit: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def energy(self):
        return self.kinetic + self.potential

    def to_csv(self, path, probes=None, values=None):
        """Write one row per step.

        ``probes`` maps column names to state indices of ``x``; ``values``
        optionally supplies those columns directly as ``(steps, k)``.
        """
        probes = dict(probes or {})
        names = list(probes)
        cols = values if values is not None else self.x[:, list(probes.values())] if names else None
        header = ["t", *names, "kinetic", "potential", "work_ext", "dissipated", "audit", "iterations"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [repr(float(t))]
                if names:
                    row += [repr(float(c)) for c in cols[k]]
                row += [
                    repr(float(self.kinetic[k])),
                    repr(float(self.potential[k])),
                    repr(float(self.work_ext[k])),
                    repr(float(self.dissipated[k])),
                    repr(float(self.audit[k])),
                    int(self.iterations[k]),
                ]
                w.writerow(row)


class FullOrderSystem:
    """Finite-element model over its free DoFs."""

    def __init__(self, model, nonlinear=True):
        self.model = model
        self.M, self.K, self.D, _ = assemble_global(model)
        self.M, self.K, self.D = (sp.csc_matrix(A) for A in (self.M, self.K, self.D))
        self.linear = not nonlinear
        self.n = self.M.shape[0]

    def internal_force(self, x):
        return self.K @ x if self.linear else self.model.kernel.force(x)

    def tangent(self, x):
        return self.K if self.linear else self.model.kernel.tangent(x)

    def potential(self, x):
        return 0.5 * x @ (self.K @ x) if self.linear else self.model.kernel.strain_energy(x)

    def factor(self, S):
        return spla.splu(sp.csc_matrix(S)).solve

    def solve_mass(self, r):
        return spla.spsolve(self.M, r)


class ReducedSystem:
    """Cubic reduced model; ``nonlinear=False`` keeps only ``K_r``."""

    def __init__(self, rm: ReducedModel, nonlinear=True):
        self.rm = rm
        self.M = rm.M_r
        self.D = rm.D_r
        self.linear = not nonlinear
        self.n = rm.m

    def internal_force(self, x):
        return self.rm.K_r @ x if self.linear else reduced_force(self.rm, x)

    def tangent(self, x):
        return self.rm.K_r if self.linear else reduced_jacobian(self.rm, x)

    def potential(self, x):
        return 0.5 * x @ self.rm.K_r @ x if self.linear else reduced_potential(self.rm, x)

    def factor(self, S):
        lu = la.lu_factor(S)
        return lambda r: la.lu_solve(lu, r)

    def solve_mass(self, r):
        return la.solve(self.M, r, assume_a="pos")


def _zero_load(n):
    zero = np.zeros(n)
    return lambda t: zero


def integrate(system, config: IntegratorConfig, x0=None, v0=None, load=None) -> TimeHistory:
    """March ``system`` from ``(x0, v0)`` over ``config.n_steps`` steps.

    ``load(t)`` returns the external force in system coordinates. Each
    step starts from the previous displacement and iterates until the
    residual norm falls below ``newton_tol`` times the largest of the
    inertia, damping, internal and external force norms.

    Raises
    ------
    NewtonDivergence
        If a step needs more than ``max_iter`` iterations or produces
        non-finite values.
    """
    n = system.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    load = _zero_load(n) if load is None else load
    dt, g, b = config.dt, config.gamma, config.beta
    c_a = 1.0 / (b * dt * dt)
    c_v = g / (b * dt)
    steps = config.n_steps
    M, D = system.M, system.D

    f_ext = np.asarray(load(0.0), dtype=float)
    f_int = system.internal_force(x)
    a = system.solve_mass(f_ext - D @ v - f_int)

    shape = (steps + 1, n)
    X, V, A = np.empty(shape), np.empty(shape), np.empty(shape)
    X[0], V[0], A[0] = x, v, a
    iters = np.zeros(steps + 1, dtype=np.int64)
    kin = np.empty(steps + 1)
    pot = np.empty(steps + 1)
    kin[0] = 0.5 * v @ (M @ v)
    pot[0] = system.potential(x)
    work = np.zeros(steps + 1)
    diss = np.zeros(steps + 1)
    audit = np.zeros(steps + 1)
    times = dt * np.arange(steps + 1)

    linear_solve = system.factor(system.tangent(x) + c_v * D + c_a * M) if system.linear else None

    for k in range(1, steps + 1):
        t = times[k]
        f_next = np.asarray(load(t), dtype=float)
        # constant-displacement predictor
        x_new = x.copy()
        history = []
        for it in range(config.max_iter + 1):
            a_new = c_a * (x_new - x - dt * v) - (0.5 / b - 1.0) * a
            v_new = v + dt * ((1.0 - g) * a + g * a_new)
            f_int_new = system.internal_force(x_new)
            inert, damp = M @ a_new, D @ v_new
            r = inert + damp + f_int_new - f_next
            ref = max(map(np.linalg.norm, (inert, damp, f_int_new, f_next)))
            rel = np.linalg.norm(r) / ref if ref > 0 else 0.0
            history.append(rel)
            if not np.isfinite(rel):
                raise NewtonDivergence(k, t, history)
            # a linear system is exact after its first correction
            if rel < config.newton_tol or (system.linear and it > 0):
                break
            if it == config.max_iter:
                raise NewtonDivergence(k, t, history)
            solve = linear_solve or system.factor(system.tangent(x_new) + c_v * D + c_a * M)
            x_new = x_new - solve(r)
        iters[k] = len(history) - 1

        dx = x_new - x
        kin[k] = 0.5 * v_new @ (M @ v_new)
        pot[k] = system.potential(x_new)
        w_ext = 0.5 * dx @ (f_ext + f_next)
        w_damp = 0.5 * dx @ (D @ (v + v_new))
        work[k] = work[k - 1] + w_ext
        diss[k] = diss[k - 1] + w_damp
        audit[k] = (kin[k] - kin[k - 1]) + 0.5 * dx @ (f_int + f_int_new) - w_ext + w_damp

        x, v, a, f_int, f_ext = x_new, v_new, a_new, f_int_new, f_next
        X[k], V[k], A[k] = x, v, a

    return TimeHistory(
        times=times,
        x=X,
        v=V,
        a=A,
        iterations=iters,
        kinetic=kin,
        potential=pot,
        work_ext=work,
        dissipated=diss,
        audit=audit,
        meta={"dt": dt, "gamma": g, "beta": b, "newton_tol": config.newton_tol},
    )
