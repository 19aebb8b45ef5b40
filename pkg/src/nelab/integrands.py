"""Integrand families with exact gradients, Hessians and eigenvalue envelopes.

Every family here is radial in the gradient variable, F(x, z) = phi(x, |z|),
so the Hessian in z has the closed-form eigenvalues phi_tt (radial direction)
and phi_t / t (tangential).  The ellipticity machinery (pointwise and
nonlocal ratios, growth envelopes, regime predicates) is built on top of
those two profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice import Ball, Grid, GridFunction


class ParameterError(ValueError):
    """Integrand parameters outside their declared ranges."""


class SingularityError(ValueError):
    """Evaluation requested at a genuinely singular point (z = 0)."""


FAMILIES = (
    "PPower",
    "DoublePhase",
    "MultiPhase",
    "VariableExponent",
    "NearlyLinearLog",
    "NestedExponential",
    "GenericPQ",
)


# ---------------------------------------------------------------------------
# coefficient fields and moduli of continuity


@dataclass
class Field:
    """Closed-form scalar coefficient field on the plane.

    kinds: const c | abs_x1_pow alpha scale | plus_x1_pow alpha scale |
           affine a0 ax ay | checkerboard lo hi | grid (table-backed)
    """

    kind: str
    params: tuple = ()
    table: GridFunction | None = None

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "const":
            return np.full(np.broadcast(x, y).shape, self.params[0])
        if self.kind == "abs_x1_pow":
            alpha, scale = self.params
            return scale * np.abs(x) ** alpha
        if self.kind == "plus_x1_pow":
            alpha, scale = self.params
            return scale * np.maximum(x, 0.0) ** alpha
        if self.kind == "affine":
            a0, ax, ay = self.params
            return a0 + ax * x + ay * y
        if self.kind == "checkerboard":
            lo, hi = self.params
            return np.where(x * y > 0, lo, hi)
        if self.kind == "grid":
            return self.table.interpolate(np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape)
        raise ParameterError(f"unknown field kind {self.kind!r}")

    def bounds(self) -> tuple[float, float]:
        """Declared (inf, sup) where it is known in closed form."""
        if self.kind == "const":
            v = self.params[0]
            return v, v
        if self.kind == "checkerboard":
            lo, hi = self.params
            return min(lo, hi), max(lo, hi)
        if self.kind in ("abs_x1_pow", "plus_x1_pow"):
            return 0.0, math.inf
        if self.kind == "grid":
            return float(self.table.values.min()), float(self.table.values.max())
        return -math.inf, math.inf

    def canonical(self) -> str:
        parts = [self.kind] + [f"{p:.17g}" for p in self.params]
        return " ".join(parts)

    @classmethod
    def parse(cls, text: str) -> "Field":
        parts = text.split()
        return cls(parts[0], tuple(float(p) for p in parts[1:]))


def const_field(v: float) -> Field:
    return Field("const", (float(v),))


@dataclass(frozen=True)
class Omega:
    """Symbolic modulus of continuity for a variable exponent field.

    The borderline condition limsup_{rho -> 0} omega(rho) log(1/rho) is
    decided from the descriptor, never by sampling.
    """

    kind: str  # holder | log_lipschitz | discontinuous | table
    params: tuple = ()

    def log_limsup(self) -> float:
        if self.kind == "holder":
            return 0.0
        if self.kind == "log_lipschitz":
            return float(self.params[0])
        if self.kind == "discontinuous":
            return math.inf
        return math.nan  # table: undecidable

    def log_condition(self) -> bool | None:
        v = self.log_limsup()
        if math.isnan(v):
            return None
        return bool(v < math.inf)

    def canonical(self) -> str:
        return " ".join([self.kind] + [f"{p:.17g}" for p in self.params])

    @classmethod
    def parse(cls, text: str) -> "Omega":
        parts = text.split()
        return cls(parts[0], tuple(float(p) for p in parts[1:]))


# ---------------------------------------------------------------------------
# integrand descriptions


@dataclass
class IntegrandSpec:
    family: str
    p: float
    q: float
    nu: float = 1.0
    L: float = 1.0
    s: float = 0.0
    alpha: float = 1.0
    a: Field = dc_field(default_factory=lambda: const_field(0.0))
    c: Field = dc_field(default_factory=lambda: const_field(1.0))
    pfield: Field | None = None
    omega: Omega | None = None
    # MultiPhase: phases ((a_k field, q_k, alpha_k), ...)
    phases: tuple = ()
    # NestedExponential: depth = number of exponentials beyond the first
    depth: int = 0
    p_fields: tuple = ()
    c_fields: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}")
        p_floor = 1.0 if self.family == "NearlyLinearLog" else 1.0 + 1e-12
        if not (self.p >= p_floor):
            raise ParameterError("p out of range")
        if self.family != "NearlyLinearLog" and self.p <= 1.0:
            raise ParameterError("p must exceed 1")
        if self.q < self.p:
            raise ParameterError("q must be >= p")
        if not (0 < self.nu <= self.L):
            raise ParameterError("need 0 < nu <= L")
        if not (0.0 <= self.s <= 1.0):
            raise ParameterError("s must lie in [0, 1]")
        if not (0 < self.alpha <= 1.0):
            raise ParameterError("alpha must lie in (0, 1]")
        lo, _ = self.a.bounds()
        if lo < -1e-12:
            raise ParameterError("coefficient a(.) must be nonnegative")
        if self.c.kind == "const" and not (self.nu - 1e-12 <= self.c.params[0] <= self.L + 1e-12):
            raise ParameterError("c(.) outside [nu, L]")
        if self.family == "MultiPhase":
            for ak, qk, alk in self.phases:
                if qk < self.p or not (0 < alk <= 1):
                    raise ParameterError("invalid phase")
        if self.family == "NestedExponential":
            if self.depth < 0 or len(self.p_fields) != self.depth + 1:
                raise ParameterError("need depth+1 exponent fields")
            if len(self.c_fields) != self.depth + 1:
                raise ParameterError("need depth+1 coefficient fields")

    @property
    def autonomous(self) -> bool:
        fields = [self.a, self.c]
        if self.pfield is not None:
            fields.append(self.pfield)
        fields += [f for f, _, _ in self.phases]
        fields += list(self.p_fields) + list(self.c_fields)
        return all(f.kind == "const" for f in fields)

    @property
    def degenerate_at_zero(self) -> bool:
        if self.family == "NearlyLinearLog":
            return False  # t^p log(1+t) ~ t^{p+1} is C^2 at the origin
        if self.family == "NestedExponential":
            lo = min(f.bounds()[0] for f in self.p_fields)
            return 1.0 < lo < 2.0
        return self.s == 0.0 and self.p < 2.0


def p_power(p: float, s: float = 0.0, c: Field | None = None,
            nu: float = 1.0, L: float = 1.0) -> IntegrandSpec:
    return IntegrandSpec("PPower", p, p, nu, L, s, 1.0, c=c or const_field(1.0))


def double_phase(p: float, q: float, alpha: float, a: Field | None = None,
                 s: float = 0.0) -> IntegrandSpec:
    return IntegrandSpec("DoublePhase", p, q, 1.0, 1.0, s, alpha,
                         a=a if a is not None else const_field(1.0))


def multi_phase(p: float, phases, s: float = 0.0) -> IntegrandSpec:
    phases = tuple((ak, float(qk), float(alk)) for ak, qk, alk in phases)
    qmax = max(qk for _, qk, _ in phases)
    almin = min(alk for _, _, alk in phases)
    return IntegrandSpec("MultiPhase", p, qmax, 1.0, 1.0, s, almin, phases=phases)


def variable_exponent(pfield: Field, omega: Omega, p: float, q: float,
                      s: float = 0.0) -> IntegrandSpec:
    return IntegrandSpec("VariableExponent", p, q, 1.0, 1.0, s, 1.0,
                         pfield=pfield, omega=omega)


def nearly_linear(p: float = 1.0, c: Field | None = None, s: float = 0.0,
                  nu: float = 1.0, L: float = 1.0) -> IntegrandSpec:
    return IntegrandSpec("NearlyLinearLog", p, p, nu, L, s,
                         c=c or const_field(1.0))


def nested_exponential(depth: int, p_fields=None, c_fields=None,
                       p_m: float = 1.0, p_M: float = 2.0,
                       nu: float = 1.0, L: float = 1.0) -> IntegrandSpec:
    k = depth + 1
    pf = tuple(p_fields) if p_fields else tuple(const_field(1.0) for _ in range(k))
    cf = tuple(c_fields) if c_fields else tuple(const_field(1.0) for _ in range(k))
    p0 = pf[0].params[0] if pf[0].kind == "const" else p_m
    return IntegrandSpec("NestedExponential", max(p0, 1.0 + 1e-9), max(p0, p_M),
                         nu, L, 0.0, 1.0, depth=depth, p_fields=pf, c_fields=cf)


def generic_pq(p: float, q: float, s: float = 0.0) -> IntegrandSpec:
    return IntegrandSpec("GenericPQ", p, q, 1.0, 1.0, s)


# ---------------------------------------------------------------------------
# radial profiles: phi(x, t), phi_t, phi_tt


def _power_profile(t, s, p, coef):
    """coef * (t^2+s^2)^{p/2} and its first two t-derivatives."""
    H = t * t + s * s
    with np.errstate(divide="ignore", invalid="ignore"):
        val = coef * H ** (p / 2)
        d1 = coef * p * t * H ** ((p - 2) / 2)
        d2 = coef * p * H ** ((p - 4) / 2) * ((p - 1) * t * t + s * s)
    if np.any(H == 0):
        zero = H == 0
        val = np.where(zero, 0.0, val)
        d1 = np.where(zero, 0.0, d1)
        # limit of p (p-1) t^{p-2}: singular below p = 2, finite at 2, zero above
        lim = np.where(np.asarray(p) < 2, np.inf,
                       np.where(np.asarray(p) == 2, 2.0 * np.asarray(coef), 0.0))
        d2 = np.where(zero, lim, d2)
    return val, d1, d2


def _log_profile(t, s, p, coef):
    """coef * T^p log(1+T), T = sqrt(t^2+s^2)."""
    T = np.sqrt(t * t + s * s)
    L1 = np.log1p(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = coef * T**p * L1
        psi = p * T ** (p - 2) * L1 + T ** (p - 1) / (1 + T)
        d1 = coef * t * psi
        dpsi = (
            p * (p - 2) * T ** (p - 3) * L1
            + p * T ** (p - 2) / (1 + T)
            + (p - 1) * T ** (p - 2) / (1 + T)
            - T ** (p - 1) / (1 + T) ** 2
        )
        d2 = coef * (psi + t * t / T * dpsi)
    if np.any(T == 0):
        zero = T == 0
        val = np.where(zero, 0.0, val)
        d1 = np.where(zero, 0.0, d1)
        # T^p log(1+T) ~ T^{p+1}: curvature limit (p+1) p t^{p-1}
        lim = np.where(np.asarray(p) == 1, 2.0 * np.asarray(coef), 0.0)
        d2 = np.where(zero, lim, d2)
    return val, d1, d2


def _nested_profile(spec, x, y, t):
    shape = np.broadcast(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)).shape
    t = np.broadcast_to(np.asarray(t, float), shape)
    c0 = np.broadcast_to(spec.c_fields[0](x, y), shape)
    p0 = np.broadcast_to(spec.p_fields[0](x, y), shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = c0 * t**p0
        du = c0 * p0 * t ** (p0 - 1)
        ddu = c0 * p0 * (p0 - 1) * t ** (p0 - 2)
    if np.any(t == 0):
        zero = t == 0
        du = np.where(zero & (p0 > 1), 0.0, du)
        lim = np.where(p0 == 1, 0.0, np.where(p0 < 2, np.inf,
                       np.where(p0 == 2, 2.0 * c0, 0.0)))
        ddu = np.where(zero, lim, ddu)
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.exp(u)
        dv = du * v
        ddv = (ddu + du * du) * v
        for k in range(1, spec.depth + 1):
            ck = np.broadcast_to(spec.c_fields[k](x, y), shape)
            pk = np.broadcast_to(spec.p_fields[k](x, y), shape)
            u = ck * v**pk
            du = ck * pk * v ** (pk - 1) * dv
            ddu = ck * pk * ((pk - 1) * v ** (pk - 2) * dv * dv + v ** (pk - 1) * ddv)
            v = np.exp(u)
            dv = du * v
            ddv = (ddu + du * du) * v
    return v, dv, ddv


def profile(spec: IntegrandSpec, x, y, t):
    """(phi, phi_t, phi_tt) of the family's radial profile, vectorized.

    t may be 0 only where the family is nondegenerate there.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    fam = spec.family
    if fam == "PPower":
        return _power_profile(t, spec.s, spec.p, spec.c(x, y))
    if fam == "GenericPQ":
        vp = _power_profile(t, spec.s, spec.p, 1.0)
        vq = _power_profile(t, spec.s, spec.q, 1.0)
        return tuple(a + b for a, b in zip(vp, vq))
    if fam == "DoublePhase":
        vp = _power_profile(t, spec.s, spec.p, 1.0)
        vq = _power_profile(t, spec.s, spec.q, spec.a(x, y))
        return tuple(a + b for a, b in zip(vp, vq))
    if fam == "MultiPhase":
        out = list(_power_profile(t, spec.s, spec.p, 1.0))
        for ak, qk, _ in spec.phases:
            term = _power_profile(t, spec.s, qk, ak(x, y))
            out = [a + b for a, b in zip(out, term)]
        return tuple(out)
    if fam == "VariableExponent":
        pw = spec.pfield(x, y)
        return _power_profile(t, spec.s, pw, 1.0)
    if fam == "NearlyLinearLog":
        return _log_profile(t, spec.s, spec.p, spec.c(x, y))
    if fam == "NestedExponential":
        return _nested_profile(spec, x, y, t)
    raise ParameterError(fam)


def value(spec: IntegrandSpec, x, y, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    t = np.linalg.norm(z, axis=-1)
    return profile(spec, x, y, t)[0]


def _check_not_singular(spec, t):
    if spec.degenerate_at_zero and np.any(t == 0):
        raise SingularityError("z = 0 with s = 0 and p < 2")


def grad_z(spec: IntegrandSpec, x, y, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    t = np.linalg.norm(z, axis=-1)
    tz = np.where(t == 0, 1.0, t)
    if np.any(t == 0):
        if spec.degenerate_at_zero:
            raise SingularityError("grad at z = 0 with s = 0 and p < 2")
        _, d1, _ = profile(spec, x, y, tz)
        slope = np.where(t == 0, 0.0, d1 / tz)
    else:
        _, d1, _ = profile(spec, x, y, t)
        slope = d1 / t
    return slope[..., None] * z


def hess_z(spec: IntegrandSpec, x, y, z) -> np.ndarray:
    """Closed-form Hessian, shape (..., 2, 2), symmetric positive definite."""
    z = np.asarray(z, dtype=float)
    t = np.linalg.norm(z, axis=-1)
    _check_not_singular(spec, t)
    if np.any(t == 0):
        # nondegenerate at the origin: both eigenvalues collapse to phi_tt(0)
        t_safe = np.where(t == 0, 1.0, t)
        _, d1, d2 = profile(spec, x, y, t_safe)
        lam_t = d1 / t_safe
        _, _, d2z = profile(spec, x, y, np.zeros_like(t))
        lam_t = np.where(t == 0, d2z, lam_t)
        d2 = np.where(t == 0, d2z, d2)
        zz = np.where(t[..., None] == 0, 0.0, z / t_safe[..., None])
    else:
        _, d1, d2 = profile(spec, x, y, t)
        lam_t = d1 / t
        zz = z / t[..., None]
    outer = zz[..., :, None] * zz[..., None, :]
    eye = np.eye(2).reshape((1,) * (outer.ndim - 2) + (2, 2))
    return d2[..., None, None] * outer + lam_t[..., None, None] * (eye - outer)


@dataclass
class EllipticityEnvelope:
    """Exact eigenvalue envelope of the z-Hessian: g1 <= spec(hess) <= g2."""

    spec: IntegrandSpec

    def g1(self, x, y, t) -> np.ndarray:
        _, d1, d2 = profile(self.spec, x, y, np.asarray(t, dtype=float))
        return np.minimum(d2, d1 / np.asarray(t, dtype=float))

    def g2(self, x, y, t) -> np.ndarray:
        _, d1, d2 = profile(self.spec, x, y, np.asarray(t, dtype=float))
        return np.maximum(d2, d1 / np.asarray(t, dtype=float))


def envelope(spec: IntegrandSpec) -> EllipticityEnvelope:
    return EllipticityEnvelope(spec)


def pointwise_ratio(spec: IntegrandSpec, x, y, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    t = np.linalg.norm(z, axis=-1)
    if np.any(t == 0):
        raise SingularityError("ratio undefined at z = 0")
    env = envelope(spec)
    return env.g2(x, y, t) / env.g1(x, y, t)


def nonlocal_ratio(spec: IntegrandSpec, z, ball: Ball, grid: Grid) -> float:
    """sup_B g2 / inf_B g1 over the discrete nodes of the ball."""
    z = np.asarray(z, dtype=float)
    t = float(np.linalg.norm(z))
    if t == 0:
        raise SingularityError("ratio undefined at z = 0")
    mask = ball.node_mask(grid)
    if not mask.any():
        raise ValueError("discrete ball contains no nodes")
    pts = grid.nodes()[mask]
    env = envelope(spec)
    g2 = env.g2(pts[:, 0], pts[:, 1], t)
    g1 = env.g1(pts[:, 0], pts[:, 1], t)
    return float(g2.max() / g1.min())


def ratio_growth_bound(spec: IntegrandSpec, t) -> np.ndarray:
    """Stated growth envelope of the ellipticity ratio along |z| = t."""
    t = np.asarray(t, dtype=float)
    fam = spec.family
    if fam == "PPower":
        return np.ones_like(t)
    if fam in ("GenericPQ", "DoublePhase", "MultiPhase", "VariableExponent"):
        return t ** (spec.q - spec.p) + 1.0
    if fam == "NearlyLinearLog":
        return np.log1p(t) + 1.0
    if fam == "NestedExponential":
        if spec.depth == 0:
            return t**spec.p + 1.0
        inner = t**spec.p
        for _ in range(spec.depth):
            inner = np.exp(np.minimum(inner, 700.0))
        return t**spec.p * inner + 1.0
    raise ParameterError(fam)


def power_primitive(p: float, s: float, t) -> np.ndarray:
    """Primitive of the degenerate kernel: (1/p)[(t^2+s^2)^{p/2} - s^p]."""
    t = np.asarray(t, dtype=float)
    return ((t * t + s * s) ** (p / 2) - s**p) / p


def power_primitive_field(spec: IntegrandSpec, grads: np.ndarray) -> np.ndarray:
    """Apply the primitive to |Du| per triangle."""
    t = np.linalg.norm(np.asarray(grads, dtype=float), axis=-1)
    return power_primitive(spec.p, spec.s, t)


def intrinsic_field(spec: IntegrandSpec, grads: np.ndarray, xy: np.ndarray,
                    gamma: float = 1.0) -> np.ndarray:
    """Nearly-linear renormalization target |Du|^{2-gamma} + a(x)|Du|^q."""
    t = np.linalg.norm(np.asarray(grads, dtype=float), axis=-1)
    a = spec.a(xy[:, 0], xy[:, 1])
    return t ** (2.0 - gamma) + a * t**spec.q


# ---------------------------------------------------------------------------
# regime classification


VERDICTS = ("Regular", "RegularIfBounded", "CounterexampleRegime", "Open")


@dataclass
class RegimeReport:
    """Every gap-bound predicate, plus the per-family verdict."""

    n: int
    p: float
    q: float
    alpha: float
    assume_bounded: bool
    family: str
    schauder_gap: bool            # q/p <= 1 + alpha/n
    schauder_gap_strict: bool     # q/p <  1 + alpha/n
    bounded_schauder_gap: bool    # bounded minimizer and q <= p + alpha
    counterexample_window: bool   # 1 < p < n < n + alpha < q
    multiphase_gaps: tuple        # q_k/p <= 1 + alpha_k/n per phase
    log_modulus_bounded: bool | None
    lipschitz_gap_interior: bool  # q/p < 1 + 2/n
    lipschitz_gap_sharp: bool     # q/p < 1 + 2/(n-1)
    bounded_minima_gap: bool      # 1/p - 1/q <= 1/(n-1)
    bounded_improved_gap: bool    # q < p + 1 (with boundedness)
    quadratic_schauder_gap: bool  # q/p <= 1 + (1/5)(alpha/n)^2
    quadratic_equation_gap: bool  # q/p <= 1 + ((p-1)/(10p))(alpha/n)^2
    nondiff_gap: bool             # q/p <= 1 + (1/5)(1 - alpha/p)(alpha/n)
    interpolation_gap: bool       # q < p + alpha*min(1, p/2)
    nearly_linear_gap: bool       # q < 1 + alpha/n
    moser_gap: bool               # q/p < 1 + 1/n
    lorentz_gap: bool             # q/p < 1 + min(2/n, 4(p-1)/(p(n-2)))
    lorentz_gap_pair: tuple       # the two conditions separately
    verdict: str

    def invariants_ok(self) -> bool:
        if self.counterexample_window and self.schauder_gap:
            return False
        if self.quadratic_schauder_gap and not self.schauder_gap_strict:
            return False
        return True


def classify_regime(n: int, p: float, q: float, alpha: float,
                    assume_bounded: bool = False, family: str = "DoublePhase",
                    omega: Omega | None = None, phases=None) -> RegimeReport:
    if not (n >= 2 and p > 1 and q >= p and 0 < alpha <= 1):
        raise ParameterError("parameters outside declared ranges")
    gap = q / p
    schauder = gap <= 1 + alpha / n
    schauder_strict = gap < 1 + alpha / n
    bounded_schauder = assume_bounded and q <= p + alpha
    window = (p < n) and (q > n + alpha)
    mp = tuple(qk / p <= 1 + alk / n for _, qk, alk in (phases or ()))
    logok = omega.log_condition() if omega is not None else None
    lip_int = gap < 1 + 2 / n
    lip_sharp = gap < 1 + 2 / (n - 1)
    bounded_gap = (1 / p - 1 / q) <= 1 / (n - 1)
    bounded_improved = assume_bounded and q < p + 1
    quad = gap <= 1 + 0.2 * (alpha / n) ** 2
    quad_eq = gap <= 1 + (p - 1) / (10 * p) * (alpha / n) ** 2
    nondiff = gap <= 1 + 0.2 * (1 - alpha / p) * (alpha / n)
    interp = q < p + alpha * min(1.0, p / 2)
    nearly = q < 1 + alpha / n
    moser = gap < 1 + 1 / n
    pair = (gap < 1 + 2 / n,
            True if n == 2 else gap < 1 + 4 * (p - 1) / (p * (n - 2)))
    lorentz = pair[0] and pair[1]

    if family == "PPower":
        verdict = "Regular"
    elif family == "DoublePhase":
        if schauder:
            verdict = "Regular"
        elif window:
            verdict = "CounterexampleRegime"
        elif bounded_schauder:
            verdict = "RegularIfBounded"
        else:
            verdict = "Open"
    elif family == "MultiPhase":
        if mp and all(mp):
            verdict = "Regular"
        elif window:
            verdict = "CounterexampleRegime"
        else:
            verdict = "Open"
    elif family == "VariableExponent":
        if logok is True:
            verdict = "Regular"
        elif logok is False:
            verdict = "CounterexampleRegime"
        else:
            verdict = "Open"
    elif family == "NearlyLinearLog":
        verdict = "Regular" if nearly else "Open"
    elif family == "GenericPQ":
        if lip_sharp:
            verdict = "Regular"
        elif assume_bounded and bounded_improved:
            verdict = "RegularIfBounded"
        else:
            verdict = "Open"
    elif family == "NestedExponential":
        verdict = "Regular" if n >= 3 else "Open"
    else:
        raise ParameterError(family)

    return RegimeReport(
        n=n, p=p, q=q, alpha=alpha, assume_bounded=assume_bounded, family=family,
        schauder_gap=schauder, schauder_gap_strict=schauder_strict,
        bounded_schauder_gap=bounded_schauder, counterexample_window=window,
        multiphase_gaps=mp, log_modulus_bounded=logok,
        lipschitz_gap_interior=lip_int, lipschitz_gap_sharp=lip_sharp,
        bounded_minima_gap=bounded_gap, bounded_improved_gap=bounded_improved,
        quadratic_schauder_gap=quad, quadratic_equation_gap=quad_eq,
        nondiff_gap=nondiff, interpolation_gap=interp, nearly_linear_gap=nearly,
        moser_gap=moser, lorentz_gap=lorentz, lorentz_gap_pair=pair,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# structured-text serialization (key = value sections)


def spec_to_text(spec: IntegrandSpec) -> str:
    lines = ["[integrand]"]
    lines.append(f"family = {spec.family}")
    for key in ("p", "q", "nu", "L", "s", "alpha"):
        lines.append(f"{key} = {getattr(spec, key):.17g}")
    lines.append(f"a = {spec.a.canonical()}")
    lines.append(f"c = {spec.c.canonical()}")
    if spec.pfield is not None:
        lines.append(f"pfield = {spec.pfield.canonical()}")
    if spec.omega is not None:
        lines.append(f"omega = {spec.omega.canonical()}")
    if spec.family == "MultiPhase":
        for k, (ak, qk, alk) in enumerate(spec.phases):
            lines.append(f"phase{k} = {qk:.17g} {alk:.17g} ; {ak.canonical()}")
    if spec.family == "NestedExponential":
        lines.append(f"depth = {spec.depth}")
        for k in range(spec.depth + 1):
            lines.append(f"p{k} = {spec.p_fields[k].canonical()}")
            lines.append(f"c{k} = {spec.c_fields[k].canonical()}")
    return "\n".join(lines) + "\n"


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    """Parse 'key = value' lines grouped under [section] headers."""
    sections: dict[str, dict[str, str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line or current is None:
            raise ValueError(f"malformed line: {raw!r}")
        key, val = line.split("=", 1)
        sections[current][key.strip()] = val.strip()
    return sections


def spec_from_text(text: str) -> IntegrandSpec:
    sec = parse_sections(text)["integrand"]
    fam = sec["family"]
    kw = dict(
        family=fam,
        p=float(sec["p"]), q=float(sec["q"]), nu=float(sec["nu"]),
        L=float(sec["L"]), s=float(sec["s"]), alpha=float(sec["alpha"]),
        a=Field.parse(sec["a"]), c=Field.parse(sec["c"]),
    )
    if "pfield" in sec:
        kw["pfield"] = Field.parse(sec["pfield"])
    if "omega" in sec:
        kw["omega"] = Omega.parse(sec["omega"])
    if fam == "MultiPhase":
        phases = []
        k = 0
        while f"phase{k}" in sec:
            head, ftext = sec[f"phase{k}"].split(";")
            qk, alk = (float(v) for v in head.split())
            phases.append((Field.parse(ftext.strip()), qk, alk))
            k += 1
        kw["phases"] = tuple(phases)
    if fam == "NestedExponential":
        depth = int(sec["depth"])
        kw["depth"] = depth
        kw["p_fields"] = tuple(Field.parse(sec[f"p{k}"]) for k in range(depth + 1))
        kw["c_fields"] = tuple(Field.parse(sec[f"c{k}"]) for k in range(depth + 1))
    return IntegrandSpec(**kw)
