"""Pointwise extrinsic geometry of a parametric immersion ``u -> x(u)``.

Tangent vector fields are extended with constant coefficients in the
coordinate frame; normal fields are projections of constant ambient vectors.
Every identity checked here is tensorial, so any smooth extension works and
these are the cheapest ones.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ambient import AmbientSpace
from .exprlang import ExprError, Expression, parse
from .numerics import (
    InnerProduct,
    RankDeficiencyError,
    StencilError,
    ToleranceProfile,
    gram_schmidt,
)
from .report import CheckResult, gate

__all__ = [
    "GuardViolation",
    "NotNormalError",
    "Chart",
    "PointState",
    "Immersion",
    "frame",
    "second_fundamental",
    "normal_connection",
    "check_frame_identities",
    "check_weyl_relations",
    "check_PFtf_derivatives",
]


class GuardViolation(ValueError):
    pass


class NotNormalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Chart:
    """Parametric immersion given componentwise by expressions over ``params``.

    ``guards`` are expressions that must all be strictly positive for a
    parameter point to be admitted.
    """

    params: tuple[str, ...]
    components: tuple[Expression, ...]
    guards: tuple[Expression, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_sources(
        cls,
        components: Sequence[str],
        params: Sequence[str] | None = None,
        guards: Sequence[str] | str | None = None,
    ) -> "Chart":
        if params is None:
            raise ValueError("parameter names are required")
        params = tuple(params)
        comps = tuple(parse(src, params) for src in components)
        if isinstance(guards, str):
            guards = [guards]
        gexprs = tuple(parse(src, params) for src in (guards or ()))
        return cls(params, comps, gexprs)

    @property
    def m(self) -> int:
        return len(self.params)

    @property
    def dim(self) -> int:
        return len(self.components)

    def bindings(self, u) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.params, u)}

    def admitted(self, u) -> bool:
        if not self.guards:
            return True
        key = ("guard", *(float(v) for v in u))
        hit = self._cache.get(key)
        if hit is None:
            b = self.bindings(u)
            try:
                hit = all(gx.eval(b) > 0.0 for gx in self.guards)
            except ExprError:
                hit = False
            self._cache[key] = hit
        return hit

    def evaluate(self, u) -> tuple[np.ndarray, np.ndarray]:
        """Position and exact Jacobian (``dim x m``) at ``u``."""
        key = tuple(float(v) for v in u)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        b = self.bindings(key)
        x = np.empty(self.dim)
        jac = np.zeros((self.dim, self.m))
        for r, comp in enumerate(self.components):
            used = comp.uses()
            x[r] = comp.eval(b)
            for c, name in enumerate(self.params):
                if name in used:
                    jac[r, c] = comp.derivative(b, name)
        if len(self._cache) > 50000:
            self._cache.clear()
        self._cache[key] = (x, jac)
        return x, jac


@dataclass(frozen=True)
class _Basic:
    """Frame-free data at one parameter point."""

    x: np.ndarray
    jac: np.ndarray
    factor: float  # e^sigma
    omega: np.ndarray
    B: np.ndarray
    pi_t: np.ndarray  # tangential projector (ambient)
    pi_n: np.ndarray
    coord_inv: np.ndarray  # (jac^T jac)^{-1}


@dataclass(frozen=True, eq=False)
class PointState:
    """All pointwise geometry at one parameter value.

    Frames are stored as ambient column matrices; operator matrices are
    expressed in the orthonormal frames ``E`` (tangent) and ``N`` (normal).
    ``h[a, b]`` is the ambient normal vector ``h(E_a, E_b)``.
    """

    u: np.ndarray
    x: np.ndarray
    coord_frame: np.ndarray
    E: np.ndarray
    N: np.ndarray
    induced_metric: np.ndarray
    P: np.ndarray
    F: np.ndarray
    t: np.ndarray
    f: np.ndarray
    factor: float
    omega: np.ndarray
    B: np.ndarray
    theta: np.ndarray
    A: np.ndarray
    J: np.ndarray
    pi_t: np.ndarray
    pi_n: np.ndarray
    h: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.E.shape[1]

    @property
    def ip(self) -> InnerProduct:
        return InnerProduct.conformal(self.factor, self.x.size)

    def g(self, a, b) -> float:
        return self.factor * float(np.dot(a, b))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.g(a, a), 0.0)))

    # J decomposition ---------------------------------------------------
    def Jv(self, v) -> np.ndarray:
        return self.J @ v

    def tan(self, v) -> np.ndarray:
        return self.pi_t @ v

    def nor(self, v) -> np.ndarray:
        return self.pi_n @ v

    def Pv(self, v) -> np.ndarray:
        return self.pi_t @ (self.J @ v)

    def Fv(self, v) -> np.ndarray:
        return self.pi_n @ (self.J @ v)

    tv = Pv
    fv = Fv

    @property
    def B_T(self) -> np.ndarray:
        return self.tan(self.B)

    @property
    def B_N(self) -> np.ndarray:
        return self.nor(self.B)

    @property
    def A_T(self) -> np.ndarray:
        return self.tan(self.A)

    @property
    def A_N(self) -> np.ndarray:
        return self.nor(self.A)

    def coeffs(self, v) -> np.ndarray:
        """Components of a tangent vector in the orthonormal frame ``E``."""
        return self.factor * (self.E.T @ v)

    def coord_coeffs(self, v) -> np.ndarray:
        """Components of a tangent vector in the coordinate frame."""
        return np.linalg.lstsq(self.coord_frame, self.tan(v), rcond=None)[0]

    # second fundamental form ------------------------------------------
    def hv(self, U, V) -> np.ndarray:
        a = self.coeffs(U)
        b = self.coeffs(V)
        return np.einsum("i,j,ijk->k", a, b, self.h)

    def shape(self, xi, U) -> np.ndarray:
        """``A_xi U`` with ``g(A_xi U, V) = g(h(U, V), xi)``."""
        a = self.coeffs(U)
        hu = np.einsum("i,ijk->jk", a, self.h)
        return self.E @ (self.factor * (hu @ xi))

    @property
    def H(self) -> np.ndarray:
        """Unnormalized trace of ``h``."""
        return sum(self.h[a, a] for a in range(self.m))

    def h_coefficients(self) -> np.ndarray:
        """``h_ab^alpha`` against the orthonormal normal frame."""
        return self.factor * np.einsum("abk,kc->abc", self.h, self.N)


class Immersion:
    """Chart, ambient space and tolerance profile bound together.

    Holds per-point caches so repeated finite-difference stencils are shared
    between checks.
    """

    def __init__(self, chart: Chart, space: AmbientSpace, profile: ToleranceProfile | None = None):
        if chart.dim != space.dim:
            raise ValueError(f"chart has {chart.dim} components, ambient needs {space.dim}")
        self.chart = chart
        self.space = space
        self.profile = profile or ToleranceProfile()
        self._basic: dict[tuple, _Basic] = {}
        self._states: dict[tuple, PointState] = {}

    # --------------------------------------------------------------
    def basic(self, u) -> _Basic:
        key = tuple(float(v) for v in u)
        hit = self._basic.get(key)
        if hit is not None:
            return hit
        x, jac = self.chart.evaluate(key)
        gram0 = jac.T @ jac
        try:
            cinv = np.linalg.inv(gram0)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError(0) from None
        if np.linalg.matrix_rank(jac) < self.chart.m:
            raise RankDeficiencyError(int(np.linalg.matrix_rank(jac)) + 1)
        pi_t = jac @ cinv @ jac.T
        omega, B = self.space.lee_data(x)
        out = _Basic(x, jac, self.space.conformal_factor(x), omega, B, pi_t, np.eye(x.size) - pi_t, cinv)
        if len(self._basic) > 20000:
            self._basic.clear()
        self._basic[key] = out
        return out

    def step(self, u) -> float:
        return self.profile.fd_step * (1.0 + float(np.linalg.norm(u)))

    def d_coord(self, fieldfn: Callable[[np.ndarray], np.ndarray], u, i: int) -> np.ndarray:
        """Flat derivative of an ambient-valued field along ``d/du_i``."""
        u = np.asarray(u, dtype=float)
        h = self.step(u)
        e = np.zeros_like(u)
        e[i] = 1.0

        def sample(p):
            if not self.chart.admitted(p):
                raise StencilError(p, GuardViolation("stencil point violates the domain guard"))
            try:
                return np.asarray(fieldfn(p), dtype=float)
            except (StencilError, RankDeficiencyError):
                raise
            except Exception as exc:  # noqa: BLE001
                raise StencilError(p, exc) from exc

        def central(s):
            return (sample(u + s * e) - sample(u - s * e)) / (2.0 * s)

        return (4.0 * central(0.5 * h) - central(h)) / 3.0

    def flat_derivative(self, fieldfn, u, coeffs) -> np.ndarray:
        """``D_U xi`` for ``U`` with coordinate components ``coeffs``."""
        out = 0.0
        for i, c in enumerate(coeffs):
            if c != 0.0:
                out = out + c * self.d_coord(fieldfn, u, i)
        if isinstance(out, float):
            return np.zeros(self.space.dim)
        return out

    def nabla_bar(self, fieldfn, u, coeffs) -> np.ndarray:
        """Ambient Levi-Civita derivative of a field along a tangent direction."""
        b = self.basic(u)
        U = b.jac @ coeffs
        return self.flat_derivative(fieldfn, u, coeffs) + self.space.christoffel_term(b.x, U, fieldfn(u))

    def nabla(self, fieldfn, u, coeffs) -> np.ndarray:
        return self.basic(u).pi_t @ self.nabla_bar(fieldfn, u, coeffs)

    def nabla_perp(self, fieldfn, u, coeffs) -> np.ndarray:
        return self.basic(u).pi_n @ self.nabla_bar(fieldfn, u, coeffs)

    # field factories -------------------------------------------------
    def tangent_field(self, coeffs) -> Callable:
        c = np.array(coeffs, dtype=float)
        return lambda p: self.basic(p).jac @ c

    def P_field(self, coeffs) -> Callable:
        c = np.array(coeffs, dtype=float)

        def fn(p):
            b = self.basic(p)
            return b.pi_t @ self.space.apply_J(b.jac @ c)

        return fn

    def F_field(self, coeffs) -> Callable:
        c = np.array(coeffs, dtype=float)

        def fn(p):
            b = self.basic(p)
            return b.pi_n @ self.space.apply_J(b.jac @ c)

        return fn

    def normal_field(self, vec) -> Callable:
        v = np.array(vec, dtype=float)
        return lambda p: self.basic(p).pi_n @ v

    def t_field(self, vec) -> Callable:
        v = np.array(vec, dtype=float)

        def fn(p):
            b = self.basic(p)
            return b.pi_t @ self.space.apply_J(b.pi_n @ v)

        return fn

    def f_field(self, vec) -> Callable:
        v = np.array(vec, dtype=float)

        def fn(p):
            b = self.basic(p)
            return b.pi_n @ self.space.apply_J(b.pi_n @ v)

        return fn

    # --------------------------------------------------------------
    def frame(self, u) -> PointState:
        u = np.asarray(u, dtype=float)
        if not self.chart.admitted(u):
            raise GuardViolation(f"parameter point {u.tolist()} violates the domain guard")
        b = self.basic(u)
        space = self.space
        ip = InnerProduct.conformal(b.factor, space.dim)
        E = np.array(gram_schmidt(list(b.jac.T), ip)).T
        seeds = []
        accepted: list[np.ndarray] = []
        for k in range(space.dim):
            if len(accepted) == space.dim - self.chart.m:
                break
            w = b.pi_n[:, k].copy()
            for q in accepted:
                w = w - ip(q, w) * q
            nrm = ip.norm(w)
            if nrm > 1e-6 * np.sqrt(b.factor):
                accepted.append(w / nrm)
                seeds.append(b.pi_n[:, k])
        N = (
            np.array(gram_schmidt(seeds, ip)).T
            if seeds
            else np.zeros((space.dim, 0))
        )
        J = space.J_matrix()
        g = b.factor
        P = g * E.T @ J @ E
        F = g * N.T @ J @ E
        t = g * E.T @ J @ N
        f = g * N.T @ J @ N
        theta, A = space.anti_lee_data(b.x)
        return PointState(
            u=u,
            x=b.x,
            coord_frame=b.jac,
            E=E,
            N=N,
            induced_metric=g * b.jac.T @ b.jac,
            P=P,
            F=F,
            t=t,
            f=f,
            factor=g,
            omega=b.omega,
            B=b.B,
            theta=theta,
            A=A,
            J=J,
            pi_t=b.pi_t,
            pi_n=b.pi_n,
        )

    def second_derivatives(self, u) -> np.ndarray:
        """``d^2 x / du_i du_j`` as an ``m x m x dim`` array (FD of exact Jacobians)."""
        m = self.chart.m
        cols = [self.d_coord(lambda p: self.basic(p).jac.T.ravel(), u, i).reshape(m, -1) for i in range(m)]
        d2 = np.array(cols)  # d2[i, j] = d/du_i (dx/du_j)
        return 0.5 * (d2 + d2.transpose(1, 0, 2))

    def state(self, u) -> PointState:
        key = tuple(float(v) for v in u)
        hit = self._states.get(key)
        if hit is not None:
            return hit
        st = self.frame(u)
        b = self.basic(u)
        d2 = self.second_derivatives(u)
        m = self.chart.m
        hcoord = np.empty((m, m, self.space.dim))
        for i, j in itertools.product(range(m), repeat=2):
            corr = self.space.christoffel_term(b.x, b.jac[:, i], b.jac[:, j])
            hcoord[i, j] = b.pi_n @ (d2[i, j] + corr)
        C = np.linalg.lstsq(b.jac, st.E, rcond=None)[0]  # E = jac @ C
        h = np.einsum("ia,jb,ijk->abk", C, C, hcoord)
        st = _with_h(st, h)
        self._states[key] = st
        return st

    def frame_coeffs(self, st: PointState, vectors) -> list[np.ndarray]:
        """Coordinate components of tangent vectors (used to build lifts)."""
        return [st.coord_coeffs(v) for v in vectors]


def _with_h(st: PointState, h: np.ndarray) -> PointState:
    kw = {k: getattr(st, k) for k in st.__dataclass_fields__}
    kw["h"] = h
    return PointState(**kw)


@functools.lru_cache(maxsize=64)
def _immersion(chart: Chart, space: AmbientSpace, profile: ToleranceProfile) -> Immersion:
    return Immersion(chart, space, profile)


def immersion(chart: Chart, space: AmbientSpace, profile: ToleranceProfile | None = None) -> Immersion:
    return _immersion(chart, space, profile or ToleranceProfile())


# --------------------------------------------------------------------------
# module-level operations
# --------------------------------------------------------------------------


def frame(chart: Chart, space: AmbientSpace, u, profile: ToleranceProfile | None = None) -> PointState:
    return immersion(chart, space, profile).frame(u)


def second_fundamental(chart: Chart, space: AmbientSpace, u, profile: ToleranceProfile | None = None) -> PointState:
    return immersion(chart, space, profile).state(u)


def normal_connection(
    chart: Chart,
    space: AmbientSpace,
    u,
    xi_field: Callable[[np.ndarray], np.ndarray],
    direction: int,
    profile: ToleranceProfile | None = None,
) -> tuple[np.ndarray, float]:
    """``nabla^perp_{d/du_i} xi`` and the Weingarten cross-check residual.

    The residual compares the tangential part of ``nabla_{d/du_i} xi`` with
    ``-A_xi d/du_i`` computed from ``h``.
    """
    imm = immersion(chart, space, profile)
    u = np.asarray(u, dtype=float)
    for p in (u,):
        b = imm.basic(p)
        xi = np.asarray(xi_field(p), dtype=float)
        scale = max(1.0, float(np.linalg.norm(xi)))
        if np.linalg.norm(b.pi_t @ xi) > 1e-6 * scale:
            raise NotNormalError("xi_field is not normal to the submanifold")
    coeffs = np.zeros(chart.m)
    coeffs[direction] = 1.0
    full = imm.nabla_bar(xi_field, u, coeffs)
    st = imm.state(u)
    U = st.coord_frame[:, direction]
    resid = st.norm(st.tan(full) + st.shape(xi_field(u), U))
    return st.nor(full), resid


def _frame_lifts(imm: Immersion, st: PointState, indices: Sequence[int] | None = None):
    """Orthonormal tangent vectors (over ``indices`` or all) with their lift coefficients."""
    b = imm.basic(st.u)
    idx = list(range(imm.chart.m)) if indices is None else list(indices)
    vecs = gram_schmidt([b.jac[:, i] for i in idx], st.ip)
    coeffs = []
    for v in vecs:
        c = np.zeros(imm.chart.m)
        c[idx] = np.linalg.lstsq(b.jac[:, idx], v, rcond=None)[0]
        coeffs.append(c)
    return vecs, coeffs


def check_frame_identities(st: PointState, profile: ToleranceProfile | None = None, prefix: str = "frame") -> list[CheckResult]:
    """Block identities of ``J = P + F`` / ``t + f`` and frame orthonormality."""
    profile = profile or ToleranceProfile()
    m = st.m
    k = st.N.shape[1]
    Im, Ik = np.eye(m), np.eye(k)
    P, F, t, f = st.P, st.F, st.t, st.f
    ip = st.ip
    frame_all = [*st.E.T, *st.N.T]
    out = [
        gate(f"{prefix}.P2_tF", np.max(np.abs(P @ P + t @ F + Im), initial=0.0), profile.tol_first),
        gate(f"{prefix}.f2_Ft", np.max(np.abs(f @ f + F @ t + Ik), initial=0.0), profile.tol_first),
        gate(f"{prefix}.FP_fF", np.max(np.abs(F @ P + f @ F), initial=0.0), profile.tol_first),
        gate(f"{prefix}.tf_Pt", np.max(np.abs(t @ f + P @ t), initial=0.0), profile.tol_first),
        gate(f"{prefix}.P_skew", np.max(np.abs(P + P.T), initial=0.0), profile.tol_first),
        gate(f"{prefix}.orthonormal", np.max(np.abs(ip.matrix(frame_all) - np.eye(len(frame_all)))), 1e-8),
    ]
    if st.h is not None:
        asym = max(
            (st.norm(st.h[a, b] - st.h[b, a]) for a in range(m) for b in range(m)), default=0.0
        )
        out.append(gate(f"{prefix}.h_symmetric", asym, profile.tol_second))
    return out


def check_weyl_relations(
    chart: Chart, space: AmbientSpace, u, profile: ToleranceProfile | None = None
) -> list[CheckResult]:
    """Riemannian versus Weyl-side induced objects.

    Weyl-side quantities come from flat derivatives only; Riemannian ones
    from the Levi-Civita connection of ``g``; both split with the same
    tangent/normal projectors.
    """
    imm = immersion(chart, space, profile)
    profile = imm.profile
    u = np.asarray(u, dtype=float)
    st = imm.state(u)
    vecs, lifts = _frame_lifts(imm, st)
    normals = list(st.N.T)
    omega, B = st.omega, st.B
    r11 = r12 = r13 = r14 = 0.0
    for (U, cu), (V, cv) in itertools.product(zip(vecs, lifts), repeat=2):
        vf = imm.tangent_field(cv)
        flat = imm.flat_derivative(vf, u, cu)
        riem = flat + space.christoffel_term(st.x, U, V)
        weyl_tan, weyl_nor = st.tan(flat), st.nor(flat)
        lc_tan, lc_nor = st.tan(riem), st.nor(riem)
        guv = st.g(U, V)
        rel11 = lc_tan - 0.5 * (float(omega @ U) * V + float(omega @ V) * U - guv * st.B_T)
        r11 = max(r11, st.norm(weyl_tan - rel11))
        r12 = max(r12, st.norm(weyl_nor - (lc_nor + 0.5 * guv * st.B_N)))
    for (U, cu), xi in itertools.product(zip(vecs, lifts), normals):
        xf = imm.normal_field(xi)
        flat = imm.flat_derivative(xf, u, cu)
        riem = flat + space.christoffel_term(st.x, U, xi)
        shape_weyl = -st.tan(flat)
        shape_riem = -st.tan(riem)
        r13 = max(r13, st.norm(shape_weyl - (shape_riem + 0.5 * float(omega @ xi) * U)))
        r14 = max(r14, st.norm(st.nor(flat) - (st.nor(riem) - 0.5 * float(omega @ U) * xi)))
    return [
        gate("weyl.induced_connection", r11, profile.tol_second),
        gate("weyl.second_fundamental", r12, profile.tol_second),
        gate("weyl.shape_operator", r13, profile.tol_second),
        gate("weyl.normal_connection", r14, profile.tol_second),
    ]


def check_PFtf_derivatives(
    chart: Chart, space: AmbientSpace, u, profile: ToleranceProfile | None = None
) -> list[CheckResult]:
    """Covariant derivatives of ``P, F, t, f`` against their closed forms."""
    imm = immersion(chart, space, profile)
    profile = imm.profile
    u = np.asarray(u, dtype=float)
    st = imm.state(u)
    vecs, lifts = _frame_lifts(imm, st)
    normals = list(st.N.T)
    omega, theta = st.omega, st.theta
    BT, BN, AT, AN = st.B_T, st.B_N, st.A_T, st.A_N
    r = [0.0, 0.0, 0.0, 0.0]
    w = [0.0, 0.0]
    for (U, cu), (V, cv) in itertools.product(zip(vecs, lifts), repeat=2):
        vf = imm.tangent_field(cv)
        nabla_v = imm.nabla_bar(vf, u, cu)
        nabla_uv = st.tan(nabla_v)
        huv = st.hv(U, V)
        PU, FU, PV, FV = st.Pv(U), st.Fv(U), st.Pv(V), st.Fv(V)
        gPUV, guv = st.g(PU, V), st.g(U, V)
        lhs1 = imm.nabla(imm.P_field(cv), u, cu) - st.Pv(nabla_uv)
        rhs1 = (
            st.shape(FV, U)
            + st.tv(huv)
            + 0.5 * (float(theta @ V) * U - float(omega @ V) * PU + gPUV * BT - guv * AT)
        )
        lhs2 = imm.nabla_perp(imm.F_field(cv), u, cu) - st.Fv(nabla_uv)
        rhs2 = st.fv(huv) - st.hv(U, PV) + 0.5 * (gPUV * BN - guv * AN - float(omega @ V) * FU)
        r[0] = max(r[0], st.norm(lhs1 - rhs1))
        r[1] = max(r[1], st.norm(lhs2 - rhs2))
        # Gauss formula from the field derivative vs h from the state
        w[0] = max(w[0], st.norm(st.nor(nabla_v) - huv))
    for (U, cu), xi in itertools.product(zip(vecs, lifts), normals):
        xf = imm.normal_field(xi)
        nabla_xi = imm.nabla_bar(xf, u, cu)
        perp_xi = st.nor(nabla_xi)
        FU, PU = st.Fv(U), st.Pv(U)
        gFUxi = st.g(FU, xi)
        lhs3 = imm.nabla(imm.t_field(xi), u, cu) - st.tv(perp_xi)
        rhs3 = (
            st.shape(st.fv(xi), U)
            - st.Pv(st.shape(xi, U))
            + 0.5 * (gFUxi * BT - float(omega @ xi) * PU + float(theta @ xi) * U)
        )
        lhs4 = imm.nabla_perp(imm.f_field(xi), u, cu) - st.fv(perp_xi)
        rhs4 = (
            -st.hv(U, st.tv(xi))
            - st.Fv(st.shape(xi, U))
            + 0.5 * (gFUxi * BN - float(omega @ xi) * FU)
        )
        r[2] = max(r[2], st.norm(lhs3 - rhs3))
        r[3] = max(r[3], st.norm(lhs4 - rhs4))
        # Weingarten formula: tangential part of nabla xi is -A_xi U
        w[1] = max(w[1], st.norm(st.tan(nabla_xi) + st.shape(xi, U)))
    return [
        gate("derivatives.P", r[0], profile.tol_second),
        gate("derivatives.F", r[1], profile.tol_second),
        gate("derivatives.t", r[2], profile.tol_second),
        gate("derivatives.f", r[3], profile.tol_second),
        gate("derivatives.gauss", w[0], profile.tol_second),
        gate("derivatives.weingarten", w[1], profile.tol_second),
    ]
