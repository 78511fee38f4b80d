"""Globally conformal Kähler ambient space ``(R^{2n}, J, g = e^sigma g0)``.

Coordinates are ``(x_1..x_n, y_1..y_n)``; inside sigma they are named
``x1..x{2n}`` with ``y{k}`` accepted as an alias of ``x{n+k}``.

Conventions, all forced by ``dOmega = Omega ^ omega`` and the Weyl
connection formula:

* Lee form ``omega = d sigma``; Lee vector ``B = e^{-sigma} grad_0 sigma``.
* anti-Lee form ``Theta = omega o J``; anti-Lee vector ``A = -J B``, the
  g-dual of ``Theta``.
* Levi-Civita ``nabla_U V = D_U V + 1/2 {omega(U) V + omega(V) U - g(U,V) B}``
  where ``D`` is the flat connection of ``g0`` (the Weyl connection here).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exprlang import Expression, parse
from .numerics import InnerProduct, ToleranceProfile, fd_directional
from .report import CheckResult, gate

__all__ = ["AmbientSpace", "ambient_variables"]

Sampler = Callable[[np.ndarray], np.ndarray]


def ambient_variables(n: int) -> list[str]:
    return [f"x{k}" for k in range(1, 2 * n + 1)] + [f"y{k}" for k in range(1, n + 1)]


@dataclass(frozen=True, eq=False)
class AmbientSpace:
    """Ambient data at complex dimension ``n``.

    ``lee_sign`` exists for negative controls only: ``-1`` declares
    ``omega = -d sigma``, which the structure checks must reject.
    """

    n: int
    sigma: Expression
    lee_sign: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_source(cls, n: int, sigma: str = "0", lee_sign: float = 1.0) -> "AmbientSpace":
        if n < 1:
            raise ValueError("complex dimension must be >= 1")
        return cls(n, parse(sigma, ambient_variables(n)), lee_sign)

    @property
    def dim(self) -> int:
        return 2 * self.n

    # ------------------------------------------------------------------
    # pointwise algebra
    # ------------------------------------------------------------------

    def _check_len(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"expected vector of length {self.dim}, got {v.shape[-1]}")
        return v

    def apply_J(self, v) -> np.ndarray:
        v = self._check_len(v)
        return np.concatenate([-v[..., self.n:], v[..., : self.n]], axis=-1)

    def J_matrix(self) -> np.ndarray:
        return self.apply_J(np.eye(self.dim)).T

    def _bindings(self, p) -> dict[str, float]:
        b = {f"x{k + 1}": float(p[k]) for k in range(self.dim)}
        b.update({f"y{k + 1}": float(p[self.n + k]) for k in range(self.n)})
        return b

    def sigma_data(self, p) -> tuple[float, np.ndarray]:
        """``(sigma(p), d sigma(p))`` by dual numbers, memoized per point."""
        p = self._check_len(p)
        key = tuple(p.tolist())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        used = self.sigma.uses()
        b = self._bindings(p)
        names = [f"x{k + 1}" for k in range(self.dim)]
        grad = np.zeros(self.dim)
        val = self.sigma.eval(b)
        for k, name in enumerate(names):
            alias = f"y{k - self.n + 1}" if k >= self.n else None
            if name in used or (alias and alias in used):
                # an alias shares the coordinate, so seed both names
                env = dict(b)
                d = _partial(self.sigma, env, name, alias)
                grad[k] = d
        if len(self._cache) > 20000:
            self._cache.clear()
        self._cache[key] = (val, grad)
        return val, grad

    def conformal_factor(self, p) -> float:
        return math.exp(self.sigma_data(p)[0])

    def metric(self, p) -> InnerProduct:
        return InnerProduct.conformal(self.conformal_factor(p), self.dim)

    def lee_data(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Lee form components and Lee vector at ``p``."""
        sig, dsig = self.sigma_data(p)
        omega = self.lee_sign * dsig
        return omega, math.exp(-sig) * omega

    def anti_lee_data(self, p) -> tuple[np.ndarray, np.ndarray]:
        """``Theta = omega o J`` (components) and ``A = -J B``."""
        omega, B = self.lee_data(p)
        return self.J_matrix().T @ omega, -self.apply_J(B)

    def fundamental_form(self, p) -> np.ndarray:
        """Matrix ``Omega_ij = g(J e_i, e_j)``."""
        return self.conformal_factor(p) * self.J_matrix().T

    def christoffel_term(self, p, U, V) -> np.ndarray:
        """``1/2 {omega(U) V + omega(V) U - g(U,V) B}``."""
        omega, B = self.lee_data(p)
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        g_uv = self.conformal_factor(p) * float(U @ V)
        return 0.5 * (float(omega @ U) * V + float(omega @ V) * U - g_uv * B)

    # ------------------------------------------------------------------
    # connections
    # ------------------------------------------------------------------

    def weyl_derivative(self, vfield: Sampler, at, direction, profile: ToleranceProfile | None = None) -> np.ndarray:
        """Flat directional derivative ``D_U V``; the Weyl connection of this model."""
        return fd_directional(vfield, self._check_len(at), self._check_len(direction), profile)

    def levi_civita(self, vfield: Sampler, at, direction, profile: ToleranceProfile | None = None) -> np.ndarray:
        at = self._check_len(at)
        V = np.asarray(vfield(at), dtype=float)
        return self.weyl_derivative(vfield, at, direction, profile) + self.christoffel_term(at, direction, V)

    # ------------------------------------------------------------------
    # structure-equation self checks
    # ------------------------------------------------------------------

    def check_structure(self, p, profile: ToleranceProfile | None = None, prefix: str = "ambient") -> list[CheckResult]:
        profile = profile or ToleranceProfile()
        p = self._check_len(p)
        dim = self.dim
        basis = np.eye(dim)
        g = self.metric(p)
        omega, B = self.lee_data(p)
        theta, A = self.anti_lee_data(p)
        Om = self.fundamental_form(p)
        J = self.J_matrix()

        # (a) dOmega = Omega ^ omega on coordinate triples
        dOm = [
            fd_directional(lambda x: self.fundamental_form(x).ravel(), p, basis[i], profile).reshape(dim, dim)
            for i in range(dim)
        ]
        res_a = 0.0
        for i, j, k in itertools.combinations(range(dim), 3):
            d = dOm[i][j, k] - dOm[j][i, k] + dOm[k][i, j]
            w = Om[i, j] * omega[k] - Om[i, k] * omega[j] + Om[j, k] * omega[i]
            res_a = max(res_a, abs(d - w))

        # (b) nabla_U(JV) - J nabla_U V against Theta/A formula
        slope = np.linspace(0.5, 1.5, dim) / dim
        res_b = 0.0
        for j in range(dim):
            def vfield(x, j=j):
                return basis[j] * (1.0 + float(slope @ (x - p))) + 0.25 * (x - p)

            def jvfield(x, j=j):
                return self.apply_J(vfield(x))

            V = vfield(p)
            for i in range(dim):
                U = basis[i]
                lhs = self.levi_civita(jvfield, p, U, profile) - self.apply_J(self.levi_civita(vfield, p, U, profile))
                rhs = 0.5 * (
                    float(theta @ V) * U
                    - float(omega @ V) * self.apply_J(U)
                    - g(U, V) * A
                    + float(U @ Om @ V) * B
                )
                res_b = max(res_b, g.norm(lhs - rhs))

        # (c) (nabla_U omega) V symmetric in U, V
        domega = [fd_directional(lambda x: self.lee_data(x)[0], p, basis[i], profile) for i in range(dim)]
        res_c = 0.0
        for i, j in itertools.combinations(range(dim), 2):
            gamma_ij = float(omega @ self.christoffel_term(p, basis[i], basis[j]))
            gamma_ji = float(omega @ self.christoffel_term(p, basis[j], basis[i]))
            res_c = max(res_c, abs((domega[i][j] - gamma_ij) - (domega[j][i] - gamma_ji)))

        # (d) Weyl connection: (D_U g)(V, W) = omega(U) g(V, W)
        res_d = 0.0
        for i in range(dim):
            dg = fd_directional(lambda x: self.metric(x).gram.ravel(), p, basis[i], profile).reshape(dim, dim)
            res_d = max(res_d, float(np.max(np.abs(dg - omega[i] * g.gram))))

        # J is a g-isometry and B is the g-dual of omega (pointwise algebra)
        res_iso = float(np.max(np.abs(J.T @ g.gram @ J - g.gram)))
        res_dual = float(np.max(np.abs(g.gram @ B - omega)))
        return [
            gate(f"{prefix}.dOmega", res_a, profile.tol_second),
            gate(f"{prefix}.nablaJ", res_b, profile.tol_second),
            gate(f"{prefix}.lee_closed", res_c, profile.tol_second),
            gate(f"{prefix}.weyl_metric", res_d, profile.tol_second),
            gate(f"{prefix}.J_isometry", res_iso, profile.tol_first),
            gate(f"{prefix}.lee_duality", res_dual, profile.tol_first),
        ]


def _partial(expr: Expression, bindings: dict[str, float], name: str, alias: str | None) -> float:
    """Partial derivative w.r.t. a coordinate that may appear under two names."""
    total = 0.0
    for v in (name, alias):
        if v is not None and v in expr.variables:
            total += expr.derivative(bindings, v)
    return total
