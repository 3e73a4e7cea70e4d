"""Time integration of M u' + A u + M_L f(u) = 0 on the free nodes.

The reaction term is always weighted by the lumped mass ``M_L`` (nodal
quadrature of f); the time derivative uses whichever mass matrix the caller
passes, consistent or lumped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledOperator, lump
from .errors import BasisError, BlowUpError, ConfigError, PreconditionError, SolverError, StepError

BLOWUP_LINF = 1e6


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term f with derivative and primitive F (F(0) = 0).

    ``p`` is the growth exponent with C|s|^p - c <= f(s)s, ``liminf`` the
    value of liminf f(s)/s at infinity and ``C_f`` a bound with
    f'(s) >= -C_f.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    p: float | None
    liminf: float
    C_f: float
    params: dict = field(default_factory=dict)


def _zero(s):
    return np.zeros_like(np.asarray(s, dtype=float))


def chaffee_infante() -> Nonlinearity:
    return Nonlinearity(
        "chaffee_infante",
        lambda s: s ** 3 - s,
        lambda s: 3.0 * s ** 2 - 1.0,
        lambda s: 0.25 * s ** 4 - 0.5 * s ** 2,
        p=4.0, liminf=math.inf, C_f=1.0,
    )


def cubic_plus() -> Nonlinearity:
    return Nonlinearity("cubic_plus", lambda s: s ** 3, lambda s: 3.0 * s ** 2,
                        lambda s: 0.25 * s ** 4, p=4.0, liminf=math.inf, C_f=0.0)


def linear(kappa: float = 1.0) -> Nonlinearity:
    return Nonlinearity(
        "linear",
        lambda s: kappa * np.asarray(s, dtype=float),
        lambda s: np.full_like(np.asarray(s, dtype=float), kappa),
        lambda s: 0.5 * kappa * np.asarray(s, dtype=float) ** 2,
        p=2.0 if kappa > 0 else None, liminf=kappa, C_f=max(0.0, -kappa),
        params={"kappa": kappa},
    )


def zero() -> Nonlinearity:
    return Nonlinearity("zero", _zero, _zero, _zero, p=None, liminf=0.0, C_f=0.0)


REGISTRY = {
    "zero": zero,
    "chaffee_infante": chaffee_infante,
    "cubic_plus": cubic_plus,
    "linear": linear,
}


def get_nonlinearity(name: str, **params) -> Nonlinearity:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown nonlinearity {name!r}; known: {', '.join(REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for nonlinearity {name!r}: {exc}") from None


def check_nonlinearity(f: Nonlinearity, samples: int = 200, h: float = 1e-6, seed: int = 0) -> dict:
    """Finite-difference consistency of F' = f and of f' against f."""
    s = np.random.default_rng(seed).uniform(-3.0, 3.0, samples)
    prim = np.max(np.abs((f.F(s + h) - f.F(s - h)) / (2 * h) - f.f(s)) / (1 + np.abs(f.f(s))))
    deriv = np.max(np.abs((f.f(s + h) - f.f(s - h)) / (2 * h) - f.df(s)) / (1 + np.abs(f.df(s))))
    return {"primitive": float(prim), "derivative": float(deriv), "F0": float(f.F(np.zeros(1))[0])}


@dataclass
class TrajectoryRecord:
    """Scalar time series (row 0 is the initial state) plus snapshots."""

    t: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    energy: np.ndarray
    lyapunov: np.ndarray
    en_residual: np.ndarray
    newton_iters: np.ndarray
    dudt: np.ndarray
    snapshots: dict
    dt: float
    scheme: str
    final: np.ndarray

    COLUMNS = ("t", "l2", "linf", "energy", "lyapunov", "en_residual", "newton_iters")

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    def snapshot_times(self) -> np.ndarray:
        return np.array([self.t[k] for k in sorted(self.snapshots)])

    def snapshot_array(self) -> np.ndarray:
        return np.array([self.snapshots[k] for k in sorted(self.snapshots)])


def _reaction_mass(op: AssembledOperator, M) -> np.ndarray:
    return lump(M).diagonal()[op.free]


class ImexStepper:
    """(M + dt A) u_{n+1} = M u_n - dt M_L f(u_n), factorized once."""

    scheme = "imex"

    def __init__(self, op: AssembledOperator, M, f: Nonlinearity, dt: float):
        if not dt > 0:
            raise PreconditionError(f"time step must be positive, got {dt}")
        self.op, self.f, self.dt = op, f, dt
        self.M = op.reduce(M)
        self.A = op.A_free
        self.ml = _reaction_mass(op, M)
        self._solve = spla.factorized((self.M + dt * self.A).tocsc())
        self.iterations = 0

    def step_free(self, u):
        rhs = self.M @ u - self.dt * self.ml * self.f.f(u)
        out = self._solve(rhs)
        if not np.all(np.isfinite(out)):
            raise SolverError("linear solve produced non-finite values")
        return out


class ImplicitStepper:
    """Backward Euler: M (u - u_n)/dt + A u + M_L f(u) = 0, solved by damped
    Newton from u_n."""

    scheme = "implicit"

    def __init__(self, op: AssembledOperator, M, f: Nonlinearity, dt: float,
                 newton_tol: float = 1e-10, newton_max: int = 50):
        if not dt > 0:
            raise PreconditionError(f"time step must be positive, got {dt}")
        if dt * f.C_f >= 1.0:
            raise ConfigError(f"dt * C_f = {dt * f.C_f:g} must be < 1 for a well-posed implicit step")
        self.op, self.f, self.dt = op, f, dt
        self.newton_tol, self.newton_max = newton_tol, newton_max
        self.M = op.reduce(M).tocsr()
        self.A = op.A_free.tocsr()
        self.ml = _reaction_mass(op, M)
        self.base = (self.M / dt + self.A).tocsc()
        self.iterations = 0

    def residual(self, u, u_prev):
        return self.M @ (u - u_prev) / self.dt + self.A @ u + self.ml * self.f.f(u)

    def step_free(self, u_prev):
        u = u_prev.copy()
        scale = 1.0 + np.linalg.norm(self.M @ u_prev) / self.dt
        G = self.residual(u, u_prev)
        res = np.linalg.norm(G)
        its = 0
        while res > self.newton_tol * scale:
            if its >= self.newton_max:
                raise StepError(f"Newton did not converge in {self.newton_max} iterations "
                                f"(residual {res:.3e})", residual=res)
            J = self.base + sp.diags(self.ml * self.f.df(u))
            du = spla.spsolve(J.tocsc(), -G)
            lam = 1.0
            for _ in range(30):
                trial = u + lam * du
                G_trial = self.residual(trial, u_prev)
                r_trial = np.linalg.norm(G_trial)
                if r_trial < res:
                    break
                lam *= 0.5
            else:
                raise StepError(f"Newton line search failed (residual {res:.3e})", residual=res)
            u, G, res = trial, G_trial, r_trial
            its += 1
        self.iterations = its
        return u


def step_imex(op: AssembledOperator, M, u_n, f: Nonlinearity, dt: float) -> np.ndarray:
    st = ImexStepper(op, M, f, dt)
    return op.prolong(st.step_free(op.restrict(u_n)))


def step_implicit(op: AssembledOperator, M, u_n, f: Nonlinearity, dt: float,
                  newton_tol: float = 1e-10, newton_max: int = 50) -> np.ndarray:
    st = ImplicitStepper(op, M, f, dt, newton_tol, newton_max)
    return op.prolong(st.step_free(op.restrict(u_n)))


def make_stepper(op, M, f, dt, scheme, **newton):
    if scheme == "imex":
        return ImexStepper(op, M, f, dt)
    if scheme == "implicit":
        return ImplicitStepper(op, M, f, dt, **newton)
    raise ConfigError(f"unknown scheme {scheme!r}; expected 'imex' or 'implicit'")


def lyapunov_parts(A, ml, f: Nonlinearity, u) -> tuple[float, float]:
    return 0.5 * float(u @ (A @ u)), float(ml @ f.F(u))


def evolve(op: AssembledOperator, M, u0, f: Nonlinearity, dt: float, T: float, scheme: str = "imex",
           snapshot_stride: int = 1, newton_tol: float = 1e-10, newton_max: int = 50) -> TrajectoryRecord:
    """Integrate ceil(T/dt) uniform steps, recording per-step diagnostics.

    ``en_residual`` is the per-unit-time defect of the discrete energy
    identity evaluated at the new state.
    """
    if not T > 0:
        raise PreconditionError(f"final time must be positive, got {T}")
    if not dt < T:
        raise PreconditionError(f"dt={dt} must be smaller than T={T}")
    if snapshot_stride < 1:
        raise PreconditionError("snapshot stride must be >= 1")
    kw = {"newton_tol": newton_tol, "newton_max": newton_max} if scheme == "implicit" else {}
    stepper = make_stepper(op, M, f, dt, scheme, **kw)
    A, Mf, ml = stepper.A, stepper.M, stepper.ml
    n_steps = int(math.ceil(T / dt - 1e-12))
    u = op.restrict(np.asarray(u0, dtype=float)).copy()

    cols = {k: np.zeros(n_steps + 1) for k in ("t", "l2", "linf", "energy", "lyapunov", "en_residual", "dudt")}
    iters = np.zeros(n_steps + 1, dtype=int)

    def record(k, u):
        cols["t"][k] = k * dt
        cols["l2"][k] = math.sqrt(max(float(u @ (Mf @ u)), 0.0))
        cols["linf"][k] = float(np.abs(u).max()) if u.size else 0.0
        form, pot = lyapunov_parts(A, ml, f, u)
        cols["energy"][k] = 2.0 * form
        cols["lyapunov"][k] = form + pot

    record(0, u)
    snapshots = {0: op.prolong(u)}
    for k in range(1, n_steps + 1):
        try:
            u_new = stepper.step_free(u)
        except StepError as exc:
            exc.step = k
            raise StepError(f"step {k}: {exc}", residual=exc.residual, step=k) from exc
        linf = float(np.abs(u_new).max()) if u_new.size else 0.0
        if not np.isfinite(linf) or linf > BLOWUP_LINF:
            raise BlowUpError(f"sup norm exceeded {BLOWUP_LINF:g} at step {k}", last_time=(k - 1) * dt)
        record(k, u_new)
        diff = u_new - u
        cols["dudt"][k] = math.sqrt(max(float(diff @ (Mf @ diff)), 0.0)) / dt
        cols["en_residual"][k] = abs(
            (cols["l2"][k] ** 2 - cols["l2"][k - 1] ** 2) / (2.0 * dt)
            + cols["energy"][k] + float((ml * f.f(u_new)) @ u_new)
        )
        iters[k] = stepper.iterations
        u = u_new
        if k % snapshot_stride == 0 or k == n_steps:
            snapshots[k] = op.prolong(u)
    return TrajectoryRecord(cols["t"], cols["l2"], cols["linf"], cols["energy"], cols["lyapunov"],
                            cols["en_residual"], iters, cols["dudt"], snapshots, dt, scheme, op.prolong(u))


def variational_residual(op: AssembledOperator, M, u_n, u_next, f: Nonlinearity, dt: float, scheme: str,
                         tests) -> float:
    """Largest |<M (u_next - u_n)/dt, xi> + a(u_a, xi) + <f(u_b), xi>_L|
    over the test vectors, scaled by ||xi||; (u_a, u_b) = (u_next, u_n) for
    IMEX and (u_next, u_next) for the implicit scheme."""
    Mf, A, ml = op.reduce(M), op.A_free, _reaction_mass(op, M)
    un, up = op.restrict(u_n), op.restrict(u_next)
    ub = un if scheme == "imex" else up
    r = Mf @ (up - un) / dt + A @ up + ml * f.f(ub)
    T = np.atleast_2d(np.asarray(tests))[:, op.free]
    return float(np.max(np.abs(T @ r) / np.linalg.norm(T, axis=1)))


def default_dt(op: AssembledOperator, M, iters: int = 20, seed: int = 0) -> float:
    """0.1 / lambda_max with lambda_max from power iteration on M^-1 A."""
    A, Mf = op.A_free, op.reduce(M)
    solve = spla.factorized(Mf.tocsc())
    x = np.random.default_rng(seed).uniform(0.5, 1.5, A.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = solve(A @ x)
        lam = float(np.linalg.norm(y))
        x = y / lam
    lam = float(x @ (A @ x)) / float(x @ (Mf @ x))
    return 0.1 / lam


def evolve_spectral_galerkin(pairs, M, u0, f: Nonlinearity, dt: float, T: float, snapshot_stride: int = 1,
                             free=None) -> TrajectoryRecord:
    """IMEX integration of the projection onto the span of ``pairs``:
    (1 + dt lambda_i) e_i^{n+1} = e_i^n - dt <M_L f(u^n), xi_i>."""
    Xi = np.array([p.vector for p in pairs]).T
    lam = np.array([p.value for p in pairs])
    gram = Xi.T @ (M @ Xi)
    if np.abs(gram - np.eye(len(lam))).max() > 1e-8:
        raise BasisError(f"eigenbasis is not M-orthonormal (Gram residual {np.abs(gram - np.eye(len(lam))).max():.2e})")
    if not T > 0 or not 0 < dt < T:
        raise PreconditionError("need 0 < dt < T")
    ml = lump(M).diagonal()
    mask = np.ones(len(ml), dtype=bool) if free is None else np.isin(np.arange(len(ml)), free)
    ml = np.where(mask, ml, 0.0)
    n_steps = int(math.ceil(T / dt - 1e-12))
    e = Xi.T @ (M @ np.asarray(u0, dtype=float))
    cols = {k: np.zeros(n_steps + 1) for k in ("t", "l2", "linf", "energy", "lyapunov", "en_residual", "dudt")}

    def record(k, e, u):
        cols["t"][k] = k * dt
        cols["l2"][k] = float(np.linalg.norm(e))
        cols["linf"][k] = float(np.abs(u).max())
        cols["energy"][k] = float(lam @ e ** 2)
        cols["lyapunov"][k] = 0.5 * cols["energy"][k] + float(ml @ f.F(u))

    u = Xi @ e
    record(0, e, u)
    snapshots = {0: u}
    for k in range(1, n_steps + 1):
        e_new = (e - dt * (Xi.T @ (ml * f.f(u)))) / (1.0 + dt * lam)
        u_new = Xi @ e_new
        if not np.all(np.isfinite(u_new)) or np.abs(u_new).max() > BLOWUP_LINF:
            raise BlowUpError(f"sup norm exceeded {BLOWUP_LINF:g} at step {k}", last_time=(k - 1) * dt)
        record(k, e_new, u_new)
        cols["dudt"][k] = float(np.linalg.norm(e_new - e)) / dt
        cols["en_residual"][k] = abs((cols["l2"][k] ** 2 - cols["l2"][k - 1] ** 2) / (2 * dt)
                                     + cols["energy"][k] + float((ml * f.f(u_new)) @ u_new))
        e, u = e_new, u_new
        if k % snapshot_stride == 0 or k == n_steps:
            snapshots[k] = u
    return TrajectoryRecord(cols["t"], cols["l2"], cols["linf"], cols["energy"], cols["lyapunov"],
                            cols["en_residual"], np.zeros(n_steps + 1, dtype=int), cols["dudt"], snapshots,
                            dt, "spectral-galerkin", u)
