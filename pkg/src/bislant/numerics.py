"""Small dense linear algebra and finite-difference directional derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NumericsError",
    "RankDeficiencyError",
    "NotSymmetricError",
    "ConvergenceError",
    "NotOrthonormalError",
    "StencilError",
    "ToleranceProfile",
    "InnerProduct",
    "gram_schmidt",
    "sym_eigen",
    "project",
    "fd_directional",
]


class NumericsError(ArithmeticError):
    pass


class RankDeficiencyError(NumericsError):
    def __init__(self, index: int):
        super().__init__(f"rank deficiency at index {index}")
        self.index = index


class NotSymmetricError(NumericsError):
    pass


class ConvergenceError(NumericsError):
    pass


class NotOrthonormalError(NumericsError):
    pass


class StencilError(NumericsError):
    """A sampler failed at one of the finite-difference stencil points."""

    def __init__(self, location, cause: Exception):
        loc = ", ".join(f"{c:.17g}" for c in np.atleast_1d(location))
        super().__init__(f"sampler failed at stencil point ({loc}): {cause}")
        self.location = np.array(location, dtype=float)
        self.cause = cause


@dataclass(frozen=True)
class ToleranceProfile:
    """Every gate used by the checks; nothing else hides a tolerance."""

    tol_first: float = 1e-6
    tol_second: float = 1e-4
    tol_eig: float = 1e-6
    fd_step: float = 1e-5

    def __post_init__(self):
        for name in ("tol_first", "tol_second", "tol_eig", "fd_step"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive, got {val}")
        if self.tol_second < self.tol_first:
            raise ValueError("tol_second must be >= tol_first")

    def as_dict(self) -> dict[str, float]:
        return {
            "tol_first": self.tol_first,
            "tol_second": self.tol_second,
            "tol_eig": self.tol_eig,
            "fd_step": self.fd_step,
        }


class InnerProduct:
    """Symmetric positive-definite bilinear form ``(u, v) -> u^T G v``."""

    def __init__(self, gram: np.ndarray):
        self.gram = np.asarray(gram, dtype=float)

    @classmethod
    def euclidean(cls, dim: int) -> "InnerProduct":
        return cls(np.eye(dim))

    @classmethod
    def conformal(cls, factor: float, dim: int) -> "InnerProduct":
        return cls(factor * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    def __call__(self, u, v) -> float:
        return float(np.asarray(u, dtype=float) @ self.gram @ np.asarray(v, dtype=float))

    def norm(self, u) -> float:
        return math.sqrt(max(self(u, u), 0.0))

    def matrix(self, vectors: Sequence) -> np.ndarray:
        """Gram matrix of a list of vectors."""
        a = np.array(vectors, dtype=float).reshape(len(vectors), -1)
        return a @ self.gram @ a.T


def gram_schmidt(vectors: Sequence, ip: InnerProduct) -> list[np.ndarray]:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Output k has positive ``ip``-component along input k once the earlier
    directions are removed.  Raises ``RankDeficiencyError`` (1-based index)
    when a pivot norm drops below 1e-12 of the input norm.
    """
    out: list[np.ndarray] = []
    for k, v in enumerate(vectors):
        w = np.array(v, dtype=float)
        scale = ip.norm(w)
        for _ in range(2):
            for q in out:
                w = w - ip(q, w) * q
        nrm = ip.norm(w)
        if scale == 0.0 or nrm < 1e-12 * scale:
            raise RankDeficiencyError(k + 1)
        out.append(w / nrm)
    return out


def sym_eigen(a, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for small symmetric matrices.

    Returns ascending eigenvalues and the matrix whose columns are the
    matching orthonormal eigenvectors.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetricError("matrix must be square")
    n = a.shape[0]
    if n > 16:
        raise ValueError("sym_eigen supports dimension <= 16")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise NotSymmetricError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    q = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= 1e-15 * scale or off == 0.0:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                tau = (a[r, r] - a[p, p]) / (2.0 * apr)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[r, r] = c
                rot[p, r] = s
                rot[r, p] = -s
                a = rot.T @ a @ rot
                a[p, r] = a[r, p] = 0.0
                q = q @ rot
    else:
        raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    vals = np.diag(a).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], q[:, order]


def project(v, basis: Sequence, ip: InnerProduct, check: bool = True) -> np.ndarray:
    """Orthogonal projection of ``v`` onto the span of an orthonormal basis."""
    v = np.asarray(v, dtype=float)
    if not len(basis):
        return np.zeros_like(v)
    if check:
        resid = np.max(np.abs(ip.matrix(basis) - np.eye(len(basis))))
        if resid > 1e-8:
            raise NotOrthonormalError(f"basis Gram residual {resid:.3e} exceeds 1e-8")
    out = np.zeros_like(v)
    for b in basis:
        b = np.asarray(b, dtype=float)
        out = out + ip(v, b) * b
    return out


def fd_directional(
    field: Callable[[np.ndarray], np.ndarray],
    at,
    direction,
    profile: ToleranceProfile | None = None,
) -> np.ndarray:
    """Central difference along ``direction`` with one Richardson step.

    Step ``h = fd_step * (1 + |at|)``; combines ``h`` and ``h/2`` as
    ``(4 D(h/2) - D(h)) / 3``.
    """
    profile = profile or ToleranceProfile()
    at = np.asarray(at, dtype=float)
    d = np.asarray(direction, dtype=float)
    h = profile.fd_step * (1.0 + float(np.linalg.norm(at)))

    def sample(p):
        try:
            return np.asarray(field(p), dtype=float)
        except NumericsError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with stencil location
            raise StencilError(p, exc) from exc

    def central(step):
        return (sample(at + step * d) - sample(at - step * d)) / (2.0 * step)

    return (4.0 * central(0.5 * h) - central(h)) / 3.0
