"""Warped-product structure: warp validation, identities, characterization,
the adapted frame and the second-fundamental-form inequality."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ambient import AmbientSpace
from .exprlang import Expression, parse
from .immersion import Chart, PointState, _frame_lifts, immersion
from .numerics import ToleranceProfile, gram_schmidt, project
from .report import CheckResult, gate
from .slant import DistributionSplit, _umbilic_fit, distribution_frame, leaf_tensors, mixed_tg_check, slant_angle

__all__ = [
    "DegenerateAngleError",
    "InvalidWarpError",
    "WarpDeclaration",
    "check_warp",
    "check_lemma_identities",
    "check_characterization",
    "AdaptedFrame",
    "adapted_frame",
    "ChenRecord",
    "chen_inequality",
    "chen_checks",
    "Diagnosis",
    "equality_case",
]

ANGLE_GATE = 1e-3


class DegenerateAngleError(ArithmeticError):
    def __init__(self, theta: float, which: str):
        super().__init__(f"slant angle {which} = {theta:.6g} rad is too close to 0 or pi/2 for csc/sec scaling")
        self.theta = theta
        self.which = which


class InvalidWarpError(ValueError):
    pass


def _gate_angle(theta: float, which: str) -> None:
    if abs(math.cos(theta)) < ANGLE_GATE or abs(math.sin(theta)) < ANGLE_GATE:
        raise DegenerateAngleError(theta, which)


@dataclass(frozen=True)
class WarpDeclaration:
    """Declared warping function over the base parameters."""

    lam: Expression

    @classmethod
    def from_source(cls, source: str, params: Sequence[str], split: DistributionSplit) -> "WarpDeclaration":
        expr = parse(source, list(params))
        fiber = {params[i] for i in split.I2}
        bad = sorted(expr.uses() & fiber)
        if bad:
            raise InvalidWarpError(f"warping function depends on fiber parameter(s) {', '.join(bad)}")
        return cls(expr)

    def value(self, chart: Chart, u) -> float:
        return self.lam.eval(chart.bindings(u))

    def dlog(self, chart: Chart, u) -> np.ndarray:
        """Coordinate differential of ``ln(lambda)``."""
        val, grad = self.lam.value_and_gradient(chart.bindings(u), chart.params)
        if val <= 0:
            raise InvalidWarpError(f"warping function is not positive ({val:.6g})")
        return np.array(grad) / val


def _base_shifts(chart: Chart, split: DistributionSplit, u, step: float = 1e-2):
    u = np.asarray(u, dtype=float)
    for i in split.I1:
        for s in (step, -step):
            v = u.copy()
            v[i] += s
            if chart.admitted(v):
                yield v


def check_warp(
    chart: Chart,
    space: AmbientSpace,
    split: DistributionSplit,
    warp: WarpDeclaration,
    u,
    profile: ToleranceProfile | None = None,
) -> list[CheckResult]:
    """Positivity, block-diagonal metric and separable fiber block."""
    imm = immersion(chart, space, profile)
    profile = imm.profile
    st = imm.frame(u)
    G = st.induced_metric
    I1, I2 = list(split.I1), list(split.I2)
    lam = warp.value(chart, u)
    scale = float(np.max(np.abs(G)))
    block = float(np.max(np.abs(G[np.ix_(I1, I2)]))) / scale
    sep = 0.0
    if lam > 0:
        fiber = G[np.ix_(I2, I2)] / lam**2
        for v in _base_shifts(chart, split, u):
            lv = warp.value(chart, v)
            if lv <= 0:
                sep = math.inf
                break
            other = imm.frame(v).induced_metric[np.ix_(I2, I2)] / lv**2
            sep = max(sep, float(np.max(np.abs(other - fiber))) / float(np.max(np.abs(fiber))))
    return [
        gate("warp.positive", 0.0 if lam > 0 else 1.0 + abs(lam), 0.5),
        gate("warp.block_diagonal", block, profile.tol_first),
        gate("warp.fiber_separable", sep if lam > 0 else math.inf, profile.tol_first),
    ]


def check_lemma_identities(
    chart: Chart,
    space: AmbientSpace,
    split: DistributionSplit,
    warp: WarpDeclaration,
    u,
    profile: ToleranceProfile | None = None,
) -> list[CheckResult]:
    """The six pointwise identities of a bi-slant warped product.

    With X, Y in D1 and Z, W in D2 (orthonormal frames):

    1. g(h(X,Z),FY) = g(h(Y,Z),FX)
    2. g(h(X,Z),FW) = g(h(X,W),FZ)
    3. g(h(X,Y),FZ) = g(h(X,Z),FY) - g(X,Y) g(B,FZ) / 2
    4. g(h(Z,W),FX) = g(h(X,Z),FW) - g(Z,W) g(B,FX) / 2
    5. X(ln lambda) = g(B,X) / 2
    6. g(B,Z) = 0
    """
    imm = immersion(chart, space, profile)
    profile = imm.profile
    st = imm.state(u)
    X, cX = _frame_lifts(imm, st, split.I1)
    Z, _ = _frame_lifts(imm, st, split.I2)
    g, h, F, B = st.g, st.hv, st.Fv, st.B
    FX = [F(x) for x in X]
    FZ = [F(z) for z in Z]
    r1 = r2 = r3 = r4 = 0.0
    for i, x in enumerate(X):
        for j, y in enumerate(X):
            for k, z in enumerate(Z):
                r1 = max(r1, abs(g(h(x, z), FX[j]) - g(h(y, z), FX[i])))
                r3 = max(r3, abs(g(h(x, y), FZ[k]) - g(h(x, z), FX[j]) + 0.5 * g(x, y) * g(B, FZ[k])))
    for i, x in enumerate(X):
        for k, z in enumerate(Z):
            for l, w in enumerate(Z):
                r2 = max(r2, abs(g(h(x, z), FZ[l]) - g(h(x, w), FZ[k])))
                r4 = max(r4, abs(g(h(z, w), FX[i]) - g(h(x, z), FZ[l]) + 0.5 * g(z, w) * g(B, FX[i])))
    dlog = warp.dlog(chart, u)
    r5 = max(abs(float(c @ dlog) - 0.5 * g(B, x)) for x, c in zip(X, cX))
    r6 = max(abs(g(B, z)) for z in Z)
    return [
        gate("lemma.1_hXZ_FY", r1, profile.tol_second),
        gate("lemma.2_hXZ_FW", r2, profile.tol_second),
        gate("lemma.3_hXY_FZ", r3, profile.tol_second),
        gate("lemma.4_hZW_FX", r4, profile.tol_second),
        gate("lemma.5_dlog_lambda", r5, profile.tol_first),
        gate("lemma.6_B_fiber", r6, profile.tol_first),
    ]


def _gradient(st: PointState, d: np.ndarray) -> np.ndarray:
    """Tangent gradient of a function with coordinate differential ``d``."""
    return st.coord_frame @ np.linalg.solve(st.induced_metric, d)


def check_characterization(
    chart: Chart,
    space: AmbientSpace,
    split: DistributionSplit,
    warp: WarpDeclaration,
    u,
    profile: ToleranceProfile | None = None,
) -> list[CheckResult]:
    """Equivalent warped-product conditions and the warping-function relations."""
    imm = immersion(chart, space, profile)
    profile = imm.profile
    st = imm.state(u)
    theta2 = slant_angle(st, split.I2, profile).theta
    sin2 = math.sin(theta2) ** 2
    dlog = warp.dlog(chart, u)

    lt1 = leaf_tensors(imm, st, split.I1, split.I2)
    lt2 = leaf_tensors(imm, st, split.I2, split.I1)
    X, cX, Z, cZ = lt1.X, lt1.X_coeffs, lt2.X, lt2.X_coeffs
    omega_x = lt2.omega_z
    xlog = np.array([float(c @ dlog) for c in cX])

    omega_d2 = float(np.max(np.abs(lt1.omega_z)))
    cond_d1 = float(np.max(np.abs(lt1.T)))
    expected = sin2 * (0.5 * omega_x - xlog)[None, None, :] * lt2.gxy[:, :, None]
    cond_d2 = float(np.max(np.abs(lt2.T - expected)))

    r_xz = r_zx = 0.0
    for x, c_x, wx in zip(X, cX, omega_x):
        for z, c_z in zip(Z, cZ):
            target = 0.5 * wx * z
            r_xz = max(r_xz, st.norm(imm.nabla(imm.tangent_field(c_z), u, c_x) - target))
            r_zx = max(r_zx, st.norm(imm.nabla(imm.tangent_field(c_x), u, c_z) - target))

    grad = _gradient(st, dlog)
    half_bt = 0.5 * st.B_T
    r_grad = st.norm(grad - half_bt)
    # the same difference assembled in an orthonormal frame
    E, cE = _frame_lifts(imm, st)
    grad_on = sum((float(c @ dlog) * e for e, c in zip(E, cE)), np.zeros_like(grad))
    r_frame = abs(st.norm(grad_on - half_bt) - r_grad)

    shifted = lt2.T - 0.5 * sin2 * lt2.gxy[:, :, None] * omega_x[None, None, :]
    hvec, _ = _umbilic_fit(shifted, lt2.gxy, sin2, X)
    r_mean = st.norm(hvec + half_bt)

    tol1, tol2 = profile.tol_first, profile.tol_second
    return [
        gate("char.omega_fiber", omega_d2, tol1),
        gate("char.cond2_base", cond_d1, tol2),
        gate("char.cond2_fiber", cond_d2, tol2),
        gate("char.nabla_XZ", r_xz, tol2),
        gate("char.nabla_ZX", r_zx, tol2),
        gate("char.grad_log_lambda", r_grad, tol1),
        gate("char.grad_frame_invariance", r_frame, 1e-9),
        gate("char.fiber_mean_curvature", r_mean, tol2),
    ]


# --------------------------------------------------------------------------
# adapted frame
# --------------------------------------------------------------------------


@dataclass
class AdaptedFrame:
    theta1: float
    theta2: float
    vectors: dict[str, list[np.ndarray]]
    gram_residual: float
    j_residuals: dict[str, float]

    def all_vectors(self) -> list[np.ndarray]:
        return [v for vs in self.vectors.values() for v in vs]


def _slant_pairs(st: PointState, frame: list[np.ndarray], theta: float):
    """Orthonormal ``{V, sec(theta) PV}`` pairs spanning the distribution of ``frame``."""
    sec = 1.0 / math.cos(theta)
    base, partner = [], []
    chosen: list[np.ndarray] = []
    for cand in frame:
        v = cand - sum((st.g(cand, c) * c for c in chosen), np.zeros_like(cand))
        if st.norm(v) < 1e-8:
            continue
        v = v / st.norm(v)
        pv = sec * st.Pv(v)
        base.append(v)
        partner.append(pv)
        chosen.extend([v, pv])
        if len(chosen) == len(frame):
            break
    return base, partner


def adapted_frame(st: PointState, split: DistributionSplit, profile: ToleranceProfile | None = None) -> AdaptedFrame:
    """Ambient orthonormal frame built from the slant structure.

    ``Xh = X``, ``PXh = sec(t1) PX``, ``FXh = csc(t1) FX``, ``FPXh = csc(t1) F(PXh)``
    and likewise for the fiber; the rest of the normal space is filled by
    ``{xi, J xi}`` pairs.
    """
    profile = profile or ToleranceProfile()
    t1 = slant_angle(st, split.I1, profile).theta
    t2 = slant_angle(st, split.I2, profile).theta
    _gate_angle(t1, "theta1")
    _gate_angle(t2, "theta2")
    vec: dict[str, list[np.ndarray]] = {}
    res: dict[str, float] = {}
    for tag, idx, th in (("X", split.I1, t1), ("Z", split.I2, t2)):
        c, s = math.cos(th), math.sin(th)
        V, PV = _slant_pairs(st, distribution_frame(st, idx), th)
        FV = [st.Fv(v) / s for v in V]
        FPV = [st.Fv(p) / s for p in PV]
        vec[tag], vec[f"P{tag}"], vec[f"F{tag}"], vec[f"FP{tag}"] = V, PV, FV, FPV
        res[f"J{tag}"] = max(st.norm(st.Jv(v) - c * p - s * fv) for v, p, fv in zip(V, PV, FV))
        res[f"JP{tag}"] = max(st.norm(st.Jv(p) + c * v - s * fp) for v, p, fp in zip(V, PV, FPV))

    used = [v for vs in vec.values() for v in vs]
    xi, jxi = [], []
    for cand in st.N.T:
        w = cand - sum((st.g(cand, q) * q for q in used), np.zeros_like(cand))
        if st.norm(w) < 1e-8:
            continue
        w = w / st.norm(w)
        jw = st.Jv(w)
        xi.append(w)
        jxi.append(jw)
        used.extend([w, jw])
    vec["xi"], vec["Jxi"] = xi, jxi

    allv = [v for vs in vec.values() for v in vs]
    gram = st.ip.matrix(allv)
    gram_res = float(np.max(np.abs(gram - np.eye(len(allv)))))
    if len(allv) != st.x.size:
        gram_res = max(gram_res, 1.0)
    return AdaptedFrame(t1, t2, vec, gram_res, res)


# --------------------------------------------------------------------------
# norm inequality for the second fundamental form
# --------------------------------------------------------------------------


BLOCKS = ("d1d1", "d1d2", "d2d2")
TARGETS = ("fd1", "fd2", "mu")


@dataclass
class ChenRecord:
    theta1: float
    theta2: float
    lhs: float
    rhs: float
    slack: float
    terms: dict[str, float]
    component_norms: dict[str, float]
    mu_norm: float
    mean_curvature_norm: float
    mixed_tg: float

    @property
    def block_sum(self) -> float:
        return float(sum(self.component_norms.values()))


def _complement(st: PointState, taken: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for cand in st.N.T:
        w = cand - sum((st.g(cand, q) * q for q in taken + out), np.zeros_like(cand))
        if st.norm(w) > 1e-8:
            out.append(w / st.norm(w))
    return out


def chen_inequality(
    chart: Chart,
    space: AmbientSpace,
    split: DistributionSplit,
    u,
    profile: ToleranceProfile | None = None,
) -> ChenRecord:
    """Both sides of the lower bound for ``|h|^2`` at one point.

    Mixed blocks ``h(D1, D2)`` are summed over both argument orders so the
    nine block norms add up to ``|h|^2``.
    """
    imm = immersion(chart, space, profile)
    profile = imm.profile
    st = imm.state(u)
    t1 = slant_angle(st, split.I1, profile).theta
    t2 = slant_angle(st, split.I2, profile).theta
    _gate_angle(t1, "theta1")
    _gate_angle(t2, "theta2")
    s1, s2 = math.sin(t1), math.sin(t2)
    n1, n2 = split.n1, split.n2

    X = distribution_frame(st, split.I1)
    Z = distribution_frame(st, split.I2)
    ip = st.ip
    fd1 = gram_schmidt([st.Fv(x) for x in X], ip)
    fd2 = gram_schmidt([st.Fv(z) for z in Z], ip)
    mu = _complement(st, fd1 + fd2)
    bases = {"fd1": fd1, "fd2": fd2, "mu": mu}

    m = st.m
    lhs = float(sum(st.g(st.h[a, b], st.h[a, b]) for a in range(m) for b in range(m)))

    pairs = {
        "d1d1": [(x, y) for x in X for y in X],
        "d1d2": [(x, z) for x in X for z in Z] + [(z, x) for x in X for z in Z],
        "d2d2": [(z, w) for z in Z for w in Z],
    }
    comps: dict[str, float] = {}
    for blk, plist in pairs.items():
        hs = [st.hv(a, b) for a, b in plist]
        for tgt, basis in bases.items():
            comps[f"{blk}.{tgt}"] = float(
                sum(sum(st.g(hv, e) ** 2 for e in basis) for hv in hs)
            )

    def restrict(v, basis):
        return project(v, basis, ip, check=False)

    B = st.B
    B1, B2 = restrict(B, fd1), restrict(B, fd2)
    H1 = sum((st.hv(x, x) for x in X), np.zeros_like(B))
    H2 = sum((st.hv(z, z) for z in Z), np.zeros_like(B))
    terms = {
        "B_fd2": 0.5 * n1 * s2**2 * st.g(B2, B2),
        "B_fd1": 0.5 * n2 * s1**2 * st.g(B1, B1),
        "H1_B_fd2": s2 * st.g(restrict(H1, fd2), B2),
        "H2_B_fd1": s1 * st.g(restrict(H2, fd1), B1),
    }
    rhs = float(sum(terms.values()))
    mu_norm = math.sqrt(sum(v for k, v in comps.items() if k.endswith(".mu")))
    return ChenRecord(
        theta1=t1,
        theta2=t2,
        lhs=lhs,
        rhs=rhs,
        slack=lhs - rhs,
        terms=terms,
        component_norms=comps,
        mu_norm=mu_norm,
        mean_curvature_norm=st.norm(st.H),
        mixed_tg=mixed_tg_check(st, split, profile),
    )


@dataclass
class Diagnosis:
    status: str  # "strict", "equality", "violation" or "inequality-violated"
    message: str
    checks: list[CheckResult] = field(default_factory=list)


def equality_case(record: ChenRecord, profile: ToleranceProfile | None = None) -> Diagnosis:
    profile = profile or ToleranceProfile()
    tol = profile.tol_second
    if record.slack > tol:
        return Diagnosis("strict", "strict inequality: equality-case assertions not applicable")
    if record.slack < -tol:
        return Diagnosis("inequality-violated", f"bound exceeded by {-record.slack:.3e}")
    minimal = record.mean_curvature_norm <= tol
    mixed = record.mixed_tg <= tol
    checks = [
        gate("chen.equality.image_in_F", record.mu_norm, tol),
        gate("chen.equality.minimal_iff_mixed_tg", 0.0 if minimal == mixed else 1.0, 0.5),
    ]
    ok = all(c.passed for c in checks)
    msg = (
        f"equality: mu-block {record.mu_norm:.3e}, minimal={minimal} "
        f"(|H|={record.mean_curvature_norm:.3e}), mixed totally geodesic={mixed} "
        f"(max|h(X,Z)|={record.mixed_tg:.3e})"
    )
    return Diagnosis("equality" if ok else "violation", msg, checks)


def chen_checks(record: ChenRecord, profile: ToleranceProfile | None = None) -> tuple[list[CheckResult], Diagnosis]:
    """Gate records for one point: bound, block completeness and equality case."""
    profile = profile or ToleranceProfile()
    scale = max(record.lhs, 1e-300)
    completeness = abs(record.block_sum - record.lhs) / scale if record.lhs > 1e-14 else abs(record.block_sum - record.lhs)
    diag = equality_case(record, profile)
    checks = [
        gate("chen.slack", max(0.0, -record.slack), profile.tol_second),
        gate("chen.block_sum", completeness, 1e-8),
        *diag.checks,
    ]
    return checks, diag
