"""Scalar kernel primitives and matrix-valued kernels.

A :class:`MatrixKernel` is a finite sum ``F(t) = sum_j C_j * phi_j(t)`` of
symmetric coefficient matrices ``C_j`` times scalar primitives ``phi_j``.
With positive semi-definite coefficients and completely monotone primitives
this is a finite discretization of the exponential-mixture representation
of a locally integrable completely monotone (LICM) matrix function.

Every primitive knows its value, its antiderivative from 0, its Laplace
transform (valid for complex ``p`` off the negative real axis) and its
behaviour at ``t -> 0`` and ``t -> oo``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DomainError, HypothesisViolation, UnsupportedError

TOL_PSD = 1e-10
BESSEL_T_MAX = 50.0


def as_symmetric(m, dim: int | None = None, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a float array, checking shape and symmetry."""
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"{name} must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DomainError(f"{name} has dim {a.shape[0]}, expected {dim}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise DomainError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def is_psd(m: np.ndarray, tol: float = TOL_PSD) -> bool:
    """Eigenvalue-floor PSD test, scale invariant."""
    w = np.linalg.eigvalsh(m)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    return bool(w.min() >= -tol * scale)


def _positive_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("kernel evaluation requires t > 0")
    return t


def _upper_gamma_neg(a: float, x):
    """Upper incomplete gamma Gamma(-a, x) for 0 < a < 1, x > 0.

    Uses Gamma(-a, x) = [Gamma(1-a, x) - x^{-a} e^{-x}] / (-a).
    """
    x = np.asarray(x, dtype=float)
    g1 = special.gammaincc(1.0 - a, x) * special.gamma(1.0 - a)
    return (g1 - x ** (-a) * np.exp(-x)) / (-a)


def _power_series(t, coefs, b):
    """Evaluate sum_m coefs[m] * t^(m+b-1) / Gamma(m+b) for t > 0."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    logt = np.log(np.where(t > 0, t, 1.0))
    for m, c in enumerate(coefs):
        if c == 0.0:
            continue
        total += c * np.exp((m + b - 1.0) * logt) * special.rgamma(m + b)
    return np.where(t > 0, total, 0.0)


def _series_length(t_max: float) -> int:
    # terms ~ t^m/(m!)^2; stop once the next term is below 1e-14 of the peak
    t_max = max(t_max, 1e-300)
    peak = 0.0
    m = 0
    log_t = np.log(t_max)
    while True:
        log_term = m * log_t - 2.0 * special.gammaln(m + 1.0)
        peak = max(peak, log_term)
        if m > np.sqrt(t_max) + 2 and log_term < peak + np.log(1e-14) - 2.0:
            return m + 1
        m += 1


# ---------------------------------------------------------------------------
# Scalar primitives
# ---------------------------------------------------------------------------


class Primitive:
    """Scalar kernel primitive. Subclasses are frozen dataclasses."""

    type_name = "primitive"
    completely_monotone = True

    def value(self, t):
        raise NotImplementedError

    def antiderivative(self, t):
        raise NotImplementedError

    def laplace(self, p):
        raise NotImplementedError

    def diverges_at_zero(self) -> bool:
        raise NotImplementedError

    def value_at_zero(self) -> float:
        """Finite limit at 0+; only meaningful when not divergent."""
        raise NotImplementedError

    def value_at_infinity(self) -> float:
        raise NotImplementedError

    @property
    def decay_rate(self) -> float:
        """Largest ``s`` with the transform analytic for ``Re p > -s``."""
        return 0.0

    def to_dict(self) -> dict:
        d = {"type": self.type_name}
        d.update({k: float(v) for k, v in self.__dict__.items()})
        return d


@dataclass(frozen=True)
class PowerLaw(Primitive):
    """``t^(a-1) / Gamma(a)``, ``0 < a <= 1``; ``a = 1`` is the constant 1."""

    a: float
    type_name = "power_law"

    def __post_init__(self):
        if not 0.0 < self.a <= 1.0:
            raise DomainError(f"PowerLaw exponent must lie in (0, 1], got {self.a}")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.a == 1.0:
            return np.ones_like(t)
        return t ** (self.a - 1.0) / special.gamma(self.a)

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, np.abs(t) ** self.a, 0.0) / special.gamma(self.a + 1.0)

    def laplace(self, p):
        return np.asarray(p) ** (-self.a)

    def diverges_at_zero(self):
        return self.a < 1.0

    def value_at_zero(self):
        return 1.0

    def value_at_infinity(self):
        return 1.0 if self.a == 1.0 else 0.0


@dataclass(frozen=True)
class DampedPowerLaw(Primitive):
    """``t^(a-1) e^(-lam t) / Gamma(a)``."""

    a: float
    lam: float
    type_name = "damped_power_law"

    def __post_init__(self):
        if not 0.0 < self.a < 1.0 or not self.lam > 0.0:
            raise DomainError("DampedPowerLaw needs 0 < a < 1 and lam > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return t ** (self.a - 1.0) * np.exp(-self.lam * t) / special.gamma(self.a)

    def antiderivative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return special.gammainc(self.a, self.lam * t) / self.lam**self.a

    def laplace(self, p):
        return (np.asarray(p) + self.lam) ** (-self.a)

    def diverges_at_zero(self):
        return True

    def value_at_zero(self):
        return np.inf

    def value_at_infinity(self):
        return 0.0

    @property
    def decay_rate(self):
        return self.lam


@dataclass(frozen=True)
class DampedPowerLawDual(Primitive):
    """Sonine associate of :class:`DampedPowerLaw`.

    ``lam^a [1 - Gamma(-a, lam t) / Gamma(-a)]``; at ``lam = 0`` this is
    ``t^(-a) / Gamma(1-a)``.
    """

    a: float
    lam: float
    type_name = "damped_power_law_dual"

    def __post_init__(self):
        if not 0.0 < self.a < 1.0 or not self.lam >= 0.0:
            raise DomainError("DampedPowerLawDual needs 0 < a < 1 and lam >= 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        a, lam = self.a, self.lam
        if lam == 0.0:
            return t ** (-a) / special.gamma(1.0 - a)
        return lam**a * (1.0 - _upper_gamma_neg(a, lam * t) / special.gamma(-a))

    def antiderivative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        a, lam = self.a, self.lam
        if lam == 0.0:
            return t ** (1.0 - a) / special.gamma(2.0 - a)
        safe = np.where(t > 0, t, 1.0)
        x = lam * safe
        lower = special.gammainc(1.0 - a, x) * special.gamma(1.0 - a)
        inner = safe * _upper_gamma_neg(a, x) + lower / lam
        out = lam**a * (safe - inner / special.gamma(-a))
        return np.where(t > 0, out, 0.0)

    def laplace(self, p):
        p = np.asarray(p)
        return (p + self.lam) ** self.a / p

    def diverges_at_zero(self):
        return True

    def value_at_zero(self):
        return np.inf

    def value_at_infinity(self):
        return self.lam**self.a


@dataclass(frozen=True)
class Exponential(Primitive):
    """``e^(-r t)``, ``r >= 0``."""

    r: float
    type_name = "exponential"

    def __post_init__(self):
        if not self.r >= 0.0:
            raise DomainError(f"Exponential rate must be >= 0, got {self.r}")

    def value(self, t):
        return np.exp(-self.r * np.asarray(t, dtype=float))

    def antiderivative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.r == 0.0:
            return t
        return -np.expm1(-self.r * t) / self.r

    def laplace(self, p):
        return 1.0 / (np.asarray(p) + self.r)

    def diverges_at_zero(self):
        return False

    def value_at_zero(self):
        return 1.0

    def value_at_infinity(self):
        return 1.0 if self.r == 0.0 else 0.0

    @property
    def decay_rate(self):
        return self.r


class _BesselSeries(Primitive):
    """Primitives with ascending series sum_m c_m t^(m+b-1)/Gamma(m+b)."""

    completely_monotone = False

    def _series(self, m_terms: int) -> tuple[list[float], float]:
        raise NotImplementedError

    def _check_range(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.size and np.max(t) > BESSEL_T_MAX:
            raise DomainError(f"Bessel series is only used for t <= {BESSEL_T_MAX}")
        return t

    def value(self, t):
        t = self._check_range(t)
        coefs, b = self._series(_series_length(float(np.max(t, initial=0.0))))
        return _power_series(t, coefs, b)

    def antiderivative(self, t):
        t = np.maximum(self._check_range(t), 0.0)
        coefs, b = self._series(_series_length(float(np.max(t, initial=0.0))))
        if b <= 0.0 and special.rgamma(b) != 0.0:
            raise UnsupportedError("kernel is not integrable at 0")
        return _power_series(t, coefs, b + 1.0)


@dataclass(frozen=True)
class BesselK(_BesselSeries):
    """``t^(-lam/2) J_{-lam}(2 sqrt t)``; changes sign, not CM."""

    lam: float
    type_name = "bessel_k"

    def __post_init__(self):
        if not self.lam > 0.0:
            raise DomainError("BesselK needs lam > 0")

    def _series(self, m_terms):
        coefs = [(-1.0) ** m / special.factorial(m) for m in range(m_terms)]
        return coefs, 1.0 - self.lam

    def laplace(self, p):
        p = np.asarray(p)
        return np.exp(-1.0 / p) * p ** (self.lam - 1.0)

    def diverges_at_zero(self):
        return not float(self.lam).is_integer()

    def value_at_zero(self):
        n = int(self.lam)
        return (-1.0) ** n / special.factorial(n)

    def value_at_infinity(self):
        return 0.0


@dataclass(frozen=True)
class BesselL(_BesselSeries):
    """``t^((lam-1)/2) I_{lam-1}(2 sqrt t)``, Sonine associate of BesselK."""

    lam: float
    type_name = "bessel_l"

    def __post_init__(self):
        if not self.lam > 0.0:
            raise DomainError("BesselL needs lam > 0")

    def _series(self, m_terms):
        coefs = [1.0 / special.factorial(m) for m in range(m_terms)]
        return coefs, self.lam

    def laplace(self, p):
        # the Laplace transform of t^((lam-1)/2) I_{lam-1}(2 sqrt t)
        p = np.asarray(p)
        return np.exp(1.0 / p) * p ** (-self.lam)

    def diverges_at_zero(self):
        return self.lam < 1.0

    def value_at_zero(self):
        return 1.0 if self.lam == 1.0 else 0.0

    def value_at_infinity(self):
        return np.inf


PRIMITIVES = {
    cls.type_name: cls
    for cls in (PowerLaw, DampedPowerLaw, DampedPowerLawDual, Exponential, BesselK, BesselL)
}


def primitive_from_dict(d: dict) -> Primitive:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in PRIMITIVES:
        raise DomainError(f"unknown primitive type {kind!r}")
    try:
        return PRIMITIVES[kind](**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind}: {exc}") from None


# ---------------------------------------------------------------------------
# Matrix kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixKernel:
    """Finite sum of symmetric coefficient matrices times scalar primitives.

    Parameters
    ----------
    dim : int
        Matrix dimension.
    terms : sequence of (coef, primitive)
        Coefficients are symmetric ``dim x dim`` arrays.
    """

    dim: int
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dim must be positive")
        checked = []
        for coef, prim in self.terms:
            if not isinstance(prim, Primitive):
                raise DomainError(f"not a primitive: {prim!r}")
            c = as_symmetric(coef, self.dim, "kernel coefficient")
            c.setflags(write=False)
            checked.append((c, prim))
        object.__setattr__(self, "terms", tuple(checked))

    @classmethod
    def scalar(cls, prim: Primitive, c: float = 1.0) -> "MatrixKernel":
        return cls(1, ((np.array([[c]]), prim),))

    @classmethod
    def single(cls, coef, prim: Primitive) -> "MatrixKernel":
        coef = np.atleast_2d(np.asarray(coef, dtype=float))
        return cls(coef.shape[0], ((coef, prim),))

    @classmethod
    def diagonal(cls, prims: Sequence[Primitive]) -> "MatrixKernel":
        n = len(prims)
        terms = []
        for i, prim in enumerate(prims):
            c = np.zeros((n, n))
            c[i, i] = 1.0
            terms.append((c, prim))
        return cls(n, tuple(terms))

    def __add__(self, other: "MatrixKernel") -> "MatrixKernel":
        if self.dim != other.dim:
            raise DomainError("dimension mismatch")
        return MatrixKernel(self.dim, self.terms + other.terms)

    @property
    def coefs(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, self.dim, self.dim))
        return np.stack([c for c, _ in self.terms])

    @property
    def is_licm(self) -> bool:
        """All primitives completely monotone and all coefficients PSD."""
        return all(p.completely_monotone and is_psd(c) for c, p in self.terms)

    @property
    def is_cm_flagged(self) -> bool:
        return all(p.completely_monotone for _, p in self.terms)

    def _combine(self, scalars: list[np.ndarray]) -> np.ndarray:
        shape = np.shape(scalars[0]) if scalars else ()
        out = np.zeros(shape + (self.dim, self.dim))
        for (c, _), s in zip(self.terms, scalars):
            out += np.asarray(s)[..., None, None] * c
        return out

    def __call__(self, t) -> np.ndarray:
        t = _positive_times(t)
        return self._combine([p.value(t) for _, p in self.terms]) if self.terms \
            else np.zeros(np.shape(t) + (self.dim, self.dim))

    def antiderivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("antiderivative requires t >= 0")
        if not self.terms:
            return np.zeros(t.shape + (self.dim, self.dim))
        return self._combine([p.antiderivative(t) for _, p in self.terms])

    def laplace(self, p) -> np.ndarray:
        p = np.asarray(p)
        out = np.zeros(p.shape + (self.dim, self.dim), dtype=np.result_type(p, float))
        for c, prim in self.terms:
            out = out + np.asarray(prim.laplace(p))[..., None, None] * c
        return out

    @property
    def decay_rate(self) -> float:
        """Slowest exponential decay rate among the terms."""
        return min((p.decay_rate for _, p in self.terms), default=0.0)

    def split_at_zero(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(D, B)``: summed coefficients of divergent terms, and
        the finite part ``sum C_j phi_j(0+)`` of the bounded terms."""
        d = np.zeros((self.dim, self.dim))
        b = np.zeros((self.dim, self.dim))
        for c, p in self.terms:
            if p.diverges_at_zero():
                d += c
            else:
                b += c * p.value_at_zero()
        return d, b

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [{"coef": c.tolist(), "prim": p.to_dict()} for c, p in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixKernel":
        try:
            dim = int(d["dim"])
            terms = tuple(
                (_coef(term["coef"], dim), primitive_from_dict(term["prim"]))
                for term in d["terms"]
            )
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed kernel description: {exc}") from None
        return cls(dim, terms)


def _coef(value, dim: int) -> np.ndarray:
    c = np.asarray(value, dtype=float)
    # a bare number stands for a multiple of the identity
    return c * np.eye(dim) if c.ndim == 0 else c


@dataclass(frozen=True)
class BernsteinFn:
    """``B(t) = b0 + integral_0^t B'(s) ds`` with an LICM derivative kernel."""

    b0: np.ndarray
    derivative: MatrixKernel

    def __post_init__(self):
        b0 = as_symmetric(self.b0, self.derivative.dim, "b0")
        if not is_psd(b0):
            raise DomainError("Bernstein value at 0 must be PSD")
        object.__setattr__(self, "b0", b0)

    @property
    def dim(self) -> int:
        return self.derivative.dim

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.b0 + self.derivative.antiderivative(t)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def eval_kernel(k: MatrixKernel, t):
    """Kernel value at ``t > 0``."""
    return k(t)


def antiderivative(k: MatrixKernel, t):
    """``integral_0^t k(s) ds`` in closed form."""
    return k.antiderivative(t)


def limit_inverse(divergent: np.ndarray, bounded: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Limit of ``(phi(t) D + B)^{-1}`` as ``phi -> oo``.

    ``D`` is PSD. The limit vanishes on range(D) and equals
    ``Z (Z^T B Z)^{-1} Z^T`` with ``Z`` an orthonormal basis of null(D).
    """
    dim = divergent.shape[0]
    w, v = np.linalg.eigh(divergent)
    scale = max(float(np.max(np.abs(w))), float(np.max(np.abs(bounded))), 1e-300)
    z = v[:, w <= tol * scale]
    if z.shape[1] == 0:
        return np.zeros((dim, dim))
    e = z.T @ bounded @ z
    we = np.linalg.eigvalsh(e)
    if we.min() <= tol * max(scale, 1.0):
        raise HypothesisViolation(
            "limit of F(t)^-1 at t -> 0 does not exist: bounded part is singular "
            "on the non-divergent subspace"
        )
    out = z @ np.linalg.solve(e, z.T)
    return 0.5 * (out + out.T)


def f0_limit(k: MatrixKernel) -> np.ndarray:
    """``lim_{t->0} k(t)^{-1}``; the zero matrix for singular kernels."""
    d, b = k.split_at_zero()
    return limit_inverse(d, b)


def is_singular(k: MatrixKernel) -> bool:
    """True when ``f0_limit(k)`` is the zero matrix (unbounded in every direction)."""
    d, _ = k.split_at_zero()
    w = np.linalg.eigvalsh(d)
    return bool(w.min() > TOL_PSD * max(float(w.max()), 1e-300))


def f_infinity(k: MatrixKernel) -> np.ndarray:
    """Term-by-term limit of the kernel at ``t -> oo``."""
    out = np.zeros((k.dim, k.dim))
    for c, p in k.terms:
        v = p.value_at_infinity()
        if v:
            out += c * v
    return out


PROBE_TIMES = (0.1, 1.0, 10.0)


def check_condition_star(k: MatrixKernel, times=PROBE_TIMES) -> None:
    """Raise unless ``v^T k(t) v`` is not identically zero for every v.

    For PSD coefficients and positive primitives this holds iff the sum of
    the kernel over the probe times is positive definite, which covers
    every direction rather than a finite set of probe vectors.
    """
    s = np.sum(k(np.asarray(times, dtype=float)), axis=0)
    w = np.linalg.eigvalsh(s)
    if w.min() <= TOL_PSD * max(float(np.max(np.abs(w))), 1e-300):
        raise HypothesisViolation("kernel vanishes identically in some direction")
