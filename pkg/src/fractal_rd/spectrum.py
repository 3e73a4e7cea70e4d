"""Generalized symmetric eigenproblem A x = lambda M x on the free nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import AssembledOperator
from .errors import AssemblyError, ConfigError, HypothesisViolation

DENSE_LIMIT = 5000


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float

    def sign_changes(self, tol: float = 1e-10) -> int:
        """Components of sign opposite to the dominant (positive) one."""
        x = self.vector
        return int(np.count_nonzero(x < -tol * np.abs(x).max()))


def _normalize_sign(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def solve_eigs(op: AssembledOperator, M=None, k: int = 6, method: str = "dense") -> list[EigenPair]:
    """The ``k`` smallest eigenpairs, M-orthonormal, largest component positive.

    ``dense`` solves the reduced system exactly (default, n <= 5000);
    ``shift-invert`` uses ARPACK around zero.
    """
    M = op.M if M is None else M
    A_f = op.A_free
    M_f = op.reduce(M)
    nfree = A_f.shape[0]
    if not 1 <= k <= nfree:
        raise ConfigError(f"k={k} eigenpairs requested but only {nfree} free nodes")
    if method == "dense":
        if nfree > DENSE_LIMIT:
            raise ConfigError(f"dense eigensolve limited to {DENSE_LIMIT} unknowns, have {nfree}")
        try:
            w, V = sla.eigh(A_f.toarray(), M_f.toarray(), subset_by_index=[0, k - 1])
        except np.linalg.LinAlgError as exc:
            raise AssemblyError(f"mass matrix is not positive definite: {exc}") from exc
    elif method == "shift-invert":
        w, V = spla.eigsh(A_f.tocsc(), k=k, M=M_f.tocsc(), sigma=0.0, which="LM")
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        V = V / np.sqrt(np.einsum("ij,ij->j", V, M_f @ V))
    else:
        raise ConfigError(f"unknown eigensolver method {method!r}")
    V = _normalize_sign(V)
    norm_a = spla.norm(A_f, 1)
    pairs = []
    for i in range(k):
        x = V[:, i]
        r = np.linalg.norm(A_f @ x - w[i] * (M_f @ x)) / (norm_a * np.linalg.norm(x))
        pairs.append(EigenPair(float(w[i]), op.prolong(x), float(r)))
    return pairs


def check_principal_positivity(pairs: list[EigenPair], free=None, tol: float = 1e-10) -> dict:
    """Report whether the first eigenvector keeps one sign on the free nodes
    while every other eigenvector changes sign."""
    checks = []
    for i, pair in enumerate(pairs):
        x = pair.vector if free is None else pair.vector[free]
        scale = np.abs(x).max()
        if i == 0:
            ok = bool(x.min() > tol * scale) if free is not None else bool(x.min() >= -tol * scale)
            checks.append({"index": 1, "property": "fixed sign", "status": "pass" if ok else "fail",
                           "min_component": float(x.min() / scale)})
        else:
            ok = bool(x.min() < -tol * scale and x.max() > tol * scale)
            checks.append({"index": i + 1, "property": "changes sign", "status": "pass" if ok else "fail",
                           "negative_components": pair.sign_changes(tol)})
    report = {"checks": checks}
    if len(pairs) >= 2:
        gap = pairs[1].value - pairs[0].value
        report["simple_gap"] = {"value": gap, "status": "pass" if gap > 0 else "fail"}
    else:
        report["simple_gap"] = {"value": None, "status": "untestable",
                                "note": "only one eigenpair given; simplicity of the first eigenvalue not checked"}
    report["status"] = "pass" if all(c["status"] == "pass" for c in checks) and \
        report["simple_gap"]["status"] != "fail" else "fail"
    return report


def coercivity_constant(op: AssembledOperator, M, pairs: list[EigenPair], tol: float = 1e-12) -> float:
    """Optimal C in ||u||^2_M <= C a(u, u), i.e. 1 / lambda_1."""
    lam1 = pairs[0].value
    if not lam1 > tol:
        raise HypothesisViolation(f"first eigenvalue {lam1:.3e} is not positive; the form is not coercive")
    return 1.0 / lam1


def robin_root(coefficient: float = 1.0, length: float = 1.0) -> float:
    """Smallest eta > 0 with X'' + eta^2 X = 0 on (0, length),
    -X'(0) + c X(0) = 0 and X'(L) + c X(L) = 0, found by shooting."""
    from scipy.integrate import solve_ivp
    from scipy.optimize import brentq

    def mismatch(eta):
        sol = solve_ivp(lambda t, y: [y[1], -eta * eta * y[0]], (0.0, length), [1.0, coefficient],
                        rtol=1e-12, atol=1e-13)
        x, dx = sol.y[:, -1]
        return dx + coefficient * x

    grid = np.linspace(1e-3, np.pi / length, 200)
    vals = [mismatch(e) for e in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb < 0:
            return brentq(mismatch, a, b, xtol=1e-14)
    raise RuntimeError("no Robin root bracketed below pi / length")
