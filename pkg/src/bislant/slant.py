"""Slant distributions: pointwise angles and the leaf-condition battery."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ambient import AmbientSpace
from .exprlang import Expression
from .immersion import Chart, Immersion, PointState, _frame_lifts, immersion
from .numerics import ToleranceProfile, gram_schmidt, sym_eigen
from .report import CheckResult, gate

__all__ = [
    "NotInvariantError",
    "DistributionSplit",
    "SlantRecord",
    "ConditionBattery",
    "LeafTensors",
    "leaf_tensors",
    "distribution_frame",
    "slant_angle",
    "check_d1_conditions",
    "check_d2_conditions",
    "mixed_tg_check",
]


class NotInvariantError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"distribution is not P-invariant (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DistributionSplit:
    """Coordinate-aligned split ``TM = D1 + D2`` (0-based parameter indices).

    The optional declared values are expressions for ``cos^2(theta_i)``.
    """

    I1: tuple[int, ...]
    I2: tuple[int, ...]
    declared_cos2_theta1: Expression | None = None
    declared_cos2_theta2: Expression | None = None

    def __post_init__(self):
        if not self.I1 or not self.I2:
            raise ValueError("both distributions must be nonempty")
        if set(self.I1) & set(self.I2):
            raise ValueError("index sets must be disjoint")
        for name, idx in (("I1", self.I1), ("I2", self.I2)):
            if len(idx) % 2:
                raise ValueError(f"{name} has odd cardinality {len(idx)}; slant distributions are even-dimensional")

    @property
    def n1(self) -> int:
        return len(self.I1) // 2

    @property
    def n2(self) -> int:
        return len(self.I2) // 2

    def validate(self, m: int) -> None:
        if sorted(self.I1 + self.I2) != list(range(m)):
            raise ValueError("I1 and I2 must partition the parameter directions")

    def swapped(self) -> "DistributionSplit":
        return DistributionSplit(self.I2, self.I1, self.declared_cos2_theta2, self.declared_cos2_theta1)


@dataclass(frozen=True)
class SlantRecord:
    theta: float
    cos2: float
    eig_spread: float
    invariance: float
    proper: bool


def distribution_frame(st: PointState, indices: Sequence[int]) -> list[np.ndarray]:
    """g-orthonormal basis of the span of the coordinate directions ``indices``."""
    return gram_schmidt([st.coord_frame[:, i] for i in indices], st.ip)


def slant_angle(st: PointState, indices: Sequence[int], profile: ToleranceProfile | None = None) -> SlantRecord:
    """Pointwise slant angle from the eigenvalues of ``-(P|_D)^2``."""
    profile = profile or ToleranceProfile()
    D = distribution_frame(st, indices)
    PD = np.array([[st.g(a, st.Pv(b)) for b in D] for a in D])
    invariance = max(
        st.norm(st.Pv(b) - sum(PD[a, j] * D[a] for a in range(len(D)))) for j, b in enumerate(D)
    )
    if invariance > profile.tol_first:
        raise NotInvariantError(invariance)
    M = -PD @ PD
    vals, _ = sym_eigen(0.5 * (M + M.T))
    cos2 = float(np.clip(np.mean(vals), 0.0, 1.0))
    theta = math.acos(math.sqrt(cos2))
    spread = float(max(vals[-1] - vals[0], 0.0))
    proper = 0.0 < theta < 0.5 * math.pi and spread <= profile.tol_eig
    return SlantRecord(theta, cos2, spread, invariance, proper)


@dataclass
class ConditionBattery:
    checks: list[CheckResult]
    umbilic_vector: np.ndarray  # fitted mean curvature of the leaves, ambient
    umbilic_residual: float


def _umbilic_fit(values, gxy, sin2: float, others):
    """Least-squares fit of ``values[x, y, z] = sin2 * g(X,Y) * k_z``."""
    k = np.zeros(len(others))
    if sin2 > 1e-12:
        w = sin2 * gxy
        denom = float(np.sum(w * w))
        if denom > 0:
            k = np.einsum("xy,xyz->z", w, values) / denom
    resid = float(np.max(np.abs(values - sin2 * gxy[:, :, None] * k[None, None, :]), initial=0.0))
    vec = sum((kz * z for kz, z in zip(k, others)), np.zeros_like(others[0]))
    return vec, resid


@dataclass
class LeafTensors:
    """Frame data and the two sides of the leaf identity for one distribution.

    ``X`` spans the own distribution, ``Z`` the other one (g-orthonormal);
    ``T[i, j, k]`` is the shape-operator/normal-connection expression and
    ``G[i, j, k] = g(nabla_{X_j} X_i, Z_k)``.
    """

    X: list
    X_coeffs: list
    Z: list
    T: np.ndarray
    G: np.ndarray
    gxy: np.ndarray
    omega_z: np.ndarray


def leaf_tensors(imm: Immersion, st: PointState, own: Sequence[int], other: Sequence[int]) -> LeafTensors:
    """With X, Y in the own distribution and Z in the other one,

        T(X, Y, Z) = g(A_{FPX} Z - A_{FX} PZ, Y) + g(nabla^perp_Y FX, FZ).
    """
    u = st.u
    X, cX = _frame_lifts(imm, st, own)
    Z, _ = _frame_lifts(imm, st, other)
    nx, nz = len(X), len(Z)
    T = np.zeros((nx, nx, nz))
    G = np.zeros((nx, nx, nz))
    gxy = np.array([[st.g(a, b) for b in X] for a in X])
    omega_z = np.array([float(st.omega @ z) for z in Z])
    FZ = [st.Fv(z) for z in Z]
    PZ = [st.Pv(z) for z in Z]
    for i in range(nx):
        FX = st.Fv(X[i])
        FPX = st.Fv(st.Pv(X[i]))
        ffield = imm.F_field(cX[i])
        tfield = imm.tangent_field(cX[i])
        for j in range(nx):
            perp = imm.nabla_perp(ffield, u, cX[j])
            nab = imm.nabla(tfield, u, cX[j])
            for k in range(nz):
                T[i, j, k] = (
                    st.g(st.shape(FPX, Z[k]) - st.shape(FX, PZ[k]), X[j]) + st.g(perp, FZ[k])
                )
                G[i, j, k] = st.g(nab, Z[k])
    return LeafTensors(X, cX, Z, T, G, gxy, omega_z)


def _battery(
    imm: Immersion,
    st: PointState,
    own: Sequence[int],
    other: Sequence[int],
    theta: float,
    label: str,
) -> ConditionBattery:
    """Leaf conditions of the distribution spanned by ``own``.

    ``T`` must equal ``sin^2(theta) (g(nabla_Y X, Z) + omega(Z) g(X, Y) / 2)``;
    the three leaf conditions are read off ``T`` and compared with the same
    properties measured directly from ``nabla``.
    """
    lt = leaf_tensors(imm, st, own, other)
    T, G, gxy, omega_z = lt.T, lt.G, lt.gxy, lt.omega_z
    sin2 = math.sin(theta) ** 2
    predicted = sin2 * (G + 0.5 * gxy[:, :, None] * omega_z[None, None, :])
    identity = float(np.max(np.abs(T - predicted)))

    tol = imm.profile.tol_second
    involutive = float(np.max(np.abs(T - T.transpose(1, 0, 2))))
    geodesic = max(float(np.max(np.abs(omega_z), initial=0.0)), float(np.max(np.abs(T))))
    shifted = T - 0.5 * sin2 * gxy[:, :, None] * omega_z[None, None, :]
    hvec, umbilic = _umbilic_fit(shifted, gxy, sin2, lt.Z)

    bracket = float(np.max(np.abs(G - G.transpose(1, 0, 2))))
    geo_geodesic = float(np.max(np.abs(G)))
    _, geo_umbilic = _umbilic_fit(G, gxy, 1.0, lt.Z)

    def agree(a, b):
        return 0.0 if (a <= tol) == (b <= tol) else 1.0

    checks = [
        gate(f"slant.{label}.identity", identity, tol),
        gate(f"slant.{label}.involutive", involutive, tol, gating=False),
        gate(f"slant.{label}.totally_geodesic", geodesic, tol, gating=False),
        gate(f"slant.{label}.totally_umbilic", umbilic, tol, gating=False),
        gate(f"slant.{label}.involutive_geometry", bracket, tol, gating=False),
        gate(f"slant.{label}.totally_geodesic_geometry", geo_geodesic, tol, gating=False),
        gate(f"slant.{label}.totally_umbilic_geometry", geo_umbilic, tol, gating=False),
        gate(f"slant.{label}.involutive_agreement", agree(involutive, bracket), 0.5),
        gate(f"slant.{label}.totally_geodesic_agreement", agree(geodesic, geo_geodesic), 0.5),
        gate(f"slant.{label}.totally_umbilic_agreement", agree(umbilic, geo_umbilic), 0.5),
    ]
    return ConditionBattery(checks, hvec, umbilic)


def _theta_for(st: PointState, indices, profile) -> float:
    return slant_angle(st, indices, profile).theta


def check_d1_conditions(
    chart: Chart,
    space: AmbientSpace,
    split: DistributionSplit,
    u,
    profile: ToleranceProfile | None = None,
) -> ConditionBattery:
    imm = immersion(chart, space, profile)
    st = imm.state(u)
    theta = _theta_for(st, split.I1, imm.profile)
    return _battery(imm, st, split.I1, split.I2, theta, "d1")


def check_d2_conditions(
    chart: Chart,
    space: AmbientSpace,
    split: DistributionSplit,
    u,
    profile: ToleranceProfile | None = None,
) -> ConditionBattery:
    imm = immersion(chart, space, profile)
    st = imm.state(u)
    theta = _theta_for(st, split.I2, imm.profile)
    return _battery(imm, st, split.I2, split.I1, theta, "d2")


def mixed_tg_check(st: PointState, split: DistributionSplit, profile: ToleranceProfile | None = None) -> float:
    """Largest ``|h(X, Z)|`` over orthonormal frames of the two distributions."""
    X = distribution_frame(st, split.I1)
    Z = distribution_frame(st, split.I2)
    return max(st.norm(st.hv(x, z)) for x in X for z in Z)
