"""Potential functions over normalized loads, and the constants they are tuned with.

All potentials are sums of per-bin terms of the normalized loads ``y``.
Exponential potentials are evaluated in double precision and refuse to
saturate: an exponent above 700 raises :class:`PotentialOverflowError`
naming the offending rank instead of returning ``inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from .core import NormalizedView
from .errors import ParameterError, PotentialOverflowError

__all__ = [
    "PotentialSpec",
    "Gamma",
    "Lambda",
    "AbsoluteValue",
    "Quadratic",
    "V",
    "SuperExp",
    "evaluate",
    "potential_from_dict",
    "ConstantsLedger",
    "constants",
    "LayerPlan",
    "layer_plan",
    "EllBound",
    "ell_lower_bound",
]

EXPONENT_LIMIT = 700.0


def _checked_exp(e: np.ndarray) -> np.ndarray:
    if e.size and e.max() > EXPONENT_LIMIT:
        rank = int(np.argmax(e))
        raise PotentialOverflowError(
            f"exponent {e[rank]:.1f} at rank {rank} exceeds {EXPONENT_LIMIT:g}", bin_rank=rank
        )
    return np.exp(e)


@dataclass(frozen=True)
class PotentialSpec:
    name: ClassVar[str] = ""
    exponential: ClassVar[bool] = True

    def parts(self, y: np.ndarray) -> tuple:
        """Exponents of the exponential summands of each bin's term."""
        raise NotImplementedError

    def terms(self, y: np.ndarray) -> np.ndarray:
        """Per-bin contributions; the potential is their sum."""
        return sum(_checked_exp(e) for e in self.parts(y))

    def __call__(self, view: NormalizedView | np.ndarray) -> float:
        return evaluate(self, view)

    def to_dict(self) -> dict[str, Any]:
        return {"potential": self.name}


@dataclass(frozen=True)
class Gamma(PotentialSpec):
    """Hyperbolic cosine ``sum exp(gamma y) + exp(-gamma y)``."""

    gamma: float = 0.1
    name: ClassVar[str] = "gamma"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ParameterError(f"gamma must lie in (0, 1), got {self.gamma}")

    def parts(self, y):
        return (self.gamma * y, -self.gamma * y)

    def to_dict(self):
        return {"potential": self.name, "gamma": self.gamma}


@dataclass(frozen=True)
class Lambda(PotentialSpec):
    """Hyperbolic cosine with an offset: only |y| beyond ``offset`` counts."""

    alpha: float = 1.0 / 18.0
    offset: float = 0.0
    name: ClassVar[str] = "lambda"

    def __post_init__(self):
        if not 0 < self.alpha <= 0.5:
            raise ParameterError(f"alpha must lie in (0, 1/2], got {self.alpha}")
        if self.offset < 0:
            raise ParameterError(f"offset must be non-negative, got {self.offset}")

    def parts(self, y):
        return (self.alpha * np.maximum(y - self.offset, 0.0),
                self.alpha * np.maximum(-y - self.offset, 0.0))

    def to_dict(self):
        return {"potential": self.name, "alpha": self.alpha, "offset": self.offset}


@dataclass(frozen=True)
class V(Lambda):
    """Same shape as Lambda with the small smoothing parameter alpha1."""

    name: ClassVar[str] = "v"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha1 must lie in (0, 1), got {self.alpha}")
        if self.offset < 0:
            raise ParameterError(f"offset must be non-negative, got {self.offset}")

    def to_dict(self):
        return {"potential": self.name, "alpha1": self.alpha, "offset": self.offset}


@dataclass(frozen=True)
class AbsoluteValue(PotentialSpec):
    name: ClassVar[str] = "absolute"
    exponential: ClassVar[bool] = False

    def terms(self, y):
        return np.abs(y)


@dataclass(frozen=True)
class Quadratic(PotentialSpec):
    name: ClassVar[str] = "quadratic"
    exponential: ClassVar[bool] = False

    def terms(self, y):
        return y * y


@dataclass(frozen=True)
class SuperExp(PotentialSpec):
    """``sum exp(phi * (y - z)^+)``, large only for bins above height z."""

    phi: float = 4.0
    z: int = 1
    name: ClassVar[str] = "superexp"

    def __post_init__(self):
        if not self.phi > 0:
            raise ParameterError(f"phi must be positive, got {self.phi}")
        if int(self.z) != self.z or self.z < 1:
            raise ParameterError(f"z must be a positive integer, got {self.z}")

    def check_n(self, n: int) -> None:
        """The drop inequality needs ``phi <= n``; evaluation itself does not."""
        if self.phi > n:
            raise ParameterError(f"phi={self.phi} exceeds n={n}")

    def parts(self, y):
        return (self.phi * np.maximum(y - self.z, 0.0),)

    def to_dict(self):
        return {"potential": self.name, "phi": self.phi, "z": self.z}


def evaluate(potential: PotentialSpec, view: NormalizedView | np.ndarray) -> float:
    """Value of ``potential`` on a normalized view (or a raw ``y`` vector)."""
    y = view.y if isinstance(view, NormalizedView) else np.asarray(view, dtype=float)
    total = float(potential.terms(y).sum())
    if not math.isfinite(total):
        raise PotentialOverflowError(f"{potential.name} evaluated to {total}")
    return total


_POTENTIALS = {
    "gamma": lambda d: Gamma(d["gamma"]),
    "lambda": lambda d: Lambda(d.get("alpha", 1.0 / 18.0), d.get("offset", 0.0)),
    "v": lambda d: V(d["alpha1"], d.get("offset", 0.0)),
    "absolute": lambda d: AbsoluteValue(),
    "quadratic": lambda d: Quadratic(),
    "superexp": lambda d: SuperExp(d["phi"], d["z"]),
}


def potential_from_dict(d: dict) -> PotentialSpec:
    from .errors import ConfigError

    name = d.get("potential") if isinstance(d, dict) else None
    if name not in _POTENTIALS:
        raise ConfigError(f"unknown potential {name!r}; known: {sorted(_POTENTIALS)}")
    try:
        return _POTENTIALS[name](d)
    except KeyError as exc:
        raise ConfigError(f"potential {name!r} is missing field {exc}") from None


# ---------------------------------------------------------------------------
# constants

_L = -math.log1p(-1.0 / 384.0)  # -log(1 - 1/(8*48))


def _u_hat(alpha: float) -> float:
    return (4.0 / alpha) * math.log(4.0 / alpha)


def _c_s(alpha: float, c4: float, c_hat: float) -> float:
    return 4.0 * c_hat * _u_hat(alpha) ** 2 + 4.0 * c4 * c4


def _c_r(alpha: float, c4: float) -> float:
    return max(2.0 * c4 * c4, 2.0 / (alpha * alpha))


@dataclass(frozen=True)
class ConstantsLedger:
    """Every named constant of the upper-bound analysis for one ``(g, n)``.

    The values are proof constants, many of them astronomically large; they
    are not predictions of simulated gaps.  ``formulas`` maps each field to
    its defining expression.
    """

    g: int
    n: int
    gamma: float
    alpha: float
    D: int
    c4: int
    eps: float
    r: float
    c: int
    c3: float
    u_hat: float
    c_s: float
    c_r: float
    kappa: float
    Delta_s: float
    Delta_r: float
    alpha1: float
    alpha2: float
    c_tilde_s: float
    Delta_tilde_s: float
    c5: int
    c6: float
    C: float
    symbolic: dict = field(default_factory=dict)

    formulas: ClassVar[dict[str, str]] = {
        "gamma": "-log(1 - 1/(8*48)) / g",
        "alpha": "1/18",
        "D": "365",
        "c4": "2*D",
        "eps": "1/12",
        "r": "6/(6 + eps)",
        "c": "12*18",
        "c3": "16 / (-log(1 - 1/(8*48)))",
        "u_hat": "(4/alpha) * log(4/alpha)",
        "c_s": "c_s(alpha, c4, 2c) with c_s(a, c4, c_hat) = 4*c_hat*u_hat(a)^2 + 4*c4^2",
        "c_r": "max(2*c4^2, 2/alpha^2)",
        "kappa": "2/alpha + c4 + 60*c_s/(alpha*eps*r)",
        "Delta_s": "60*c_s/(alpha*eps*r) * n * max(log n, g)",
        "Delta_r": "60*c3^2*c_r/(alpha*eps*r) * n * g * log(n*g)^2",
        "alpha1": "1/(6*kappa)",
        "alpha2": "alpha1/84",
        "c_tilde_s": "c_s(alpha1, c4, exp(2*alpha1)*c)",
        "Delta_tilde_s": "20*c_tilde_s*log(2c*exp(2*alpha1))/(alpha1*eps*r) * n * g",
        "c5": "2*max(c4, ceil(20*c_tilde_s*log(2c*exp(2*alpha1))/(alpha1*eps*r)))",
        "c6": "r / (9*20*c_tilde_s*log(2c*exp(2*alpha1)))",
        "C": "2*exp(2*alpha1)*c + 1",
    }

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"g": self.g, "n": self.n}
        for name, formula in self.formulas.items():
            out[name] = {"value": getattr(self, name), "formula": formula}
        for name, note in self.symbolic.items():
            out[name] = {"value": None, "formula": note}
        return out


def constants(g: int, n: int) -> ConstantsLedger:
    if int(g) != g or g < 1:
        raise ParameterError(f"g must be a positive integer, got {g}")
    if int(n) != n or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n}")
    alpha = 1.0 / 18.0
    D = 365
    c4 = 2 * D
    eps = 1.0 / 12.0
    r = 6.0 / (6.0 + eps)
    c = 12 * 18
    c_s = _c_s(alpha, c4, 2 * c)
    c_r = _c_r(alpha, c4)
    c3 = 16.0 / _L
    stab = 60.0 * c_s / (alpha * eps * r)
    kappa = 2.0 / alpha + c4 + stab
    alpha1 = 1.0 / (6.0 * kappa)
    c_tilde_s = _c_s(alpha1, c4, math.exp(2 * alpha1) * c)
    strong = 20.0 * c_tilde_s * math.log(2 * c * math.exp(2 * alpha1)) / (alpha1 * eps * r)
    log_n = math.log(n)
    return ConstantsLedger(
        g=int(g),
        n=int(n),
        gamma=_L / g,
        alpha=alpha,
        D=D,
        c4=c4,
        eps=eps,
        r=r,
        c=c,
        c3=c3,
        u_hat=_u_hat(alpha),
        c_s=c_s,
        c_r=c_r,
        kappa=kappa,
        Delta_s=stab * n * max(log_n, g),
        Delta_r=60.0 * c3 * c3 * c_r / (alpha * eps * r) * n * g * math.log(n * g) ** 2,
        alpha1=alpha1,
        alpha2=alpha1 / 84.0,
        c_tilde_s=c_tilde_s,
        Delta_tilde_s=strong * n * g,
        c5=2 * max(c4, math.ceil(strong)),
        c6=r / (9.0 * 20.0 * c_tilde_s * math.log(2 * c * math.exp(2 * alpha1))),
        C=2.0 * math.exp(2 * alpha1) * c + 1.0,
        symbolic={
            "c1": "unspecified: c' + 4 with c' an unnamed constant of the hyperbolic cosine drift bound",
            "c_ptw": "unspecified: existence constant of the hyperbolic cosine drift bound",
        },
    )


# ---------------------------------------------------------------------------
# layered induction plan


@dataclass(frozen=True)
class LayerPlan:
    g: int
    log_n: float
    k: int
    z: tuple
    phi: tuple
    psi: tuple

    def to_dict(self) -> dict[str, Any]:
        return {"g": self.g, "log_n": self.log_n, "k": self.k,
                "z": list(self.z), "phi": list(self.phi), "psi": list(self.psi)}


def _log_n(n, log_n) -> float:
    if (n is None) == (log_n is None):
        raise ParameterError("give exactly one of n or log_n")
    if log_n is None:
        if n < 2:
            raise ParameterError(f"n must be >= 2, got {n}")
        return math.log(n)
    if not log_n > 0:
        raise ParameterError(f"log_n must be positive, got {log_n}")
    return float(log_n)


def layer_plan(g: int, n: int | None = None, *, log_n: float | None = None) -> LayerPlan:
    """Number of layers ``k`` with ``A^(1/k) <= g < A^(1/(k-1))``, ``A = alpha1 log n``.

    Pass ``log_n`` directly when ``n`` itself is too large to represent;
    ``A > g`` needs ``log n`` of order 1e13 or more.
    """
    ln = _log_n(n, log_n)
    led = constants(max(int(g), 1), 2)
    a = led.alpha1 * ln
    if not (int(g) == g and 1 < g < a):
        raise ParameterError(
            f"layer plan needs 1 < g < alpha1*log n = {a:.6g}; got g={g} "
            f"(valid interval: integers in (1, {a:.6g}))"
        )
    top = math.ceil(math.log(ln) / math.log(g)) + 2
    k = None
    for cand in range(2, top + 1):
        if a ** (1.0 / cand) <= g < a ** (1.0 / (cand - 1)):
            k = cand
            break
    if k is None:  # pragma: no cover - the inequality is monotone in k
        raise ParameterError(f"no layer count found for g={g}, alpha1*log n={a:.6g}")
    step = math.ceil(4.0 / led.alpha2)
    z = tuple(led.c5 * g + step * j * g for j in range(k + 1))
    phi = (led.alpha2,) + tuple(led.alpha2 * ln * float(g) ** (j - k) for j in range(1, k + 1))
    psi = (led.alpha1,) + tuple(led.alpha1 * ln * float(g) ** (j - k) for j in range(1, k + 1))
    return LayerPlan(int(g), ln, k, z, phi, psi)


@dataclass(frozen=True)
class EllBound:
    value: int
    in_range: bool
    g_max: float


def ell_lower_bound(g: float, n: int | None = None, *, log_n: float | None = None) -> EllBound:
    """Phase count ``floor(log((1/8) log n / log g) / log g)`` of the lower-bound construction.

    ``in_range`` reports whether ``10 <= g <= (1/8) log n / log log n``, the
    range where the construction is claimed; outside it the formula value is
    still returned.
    """
    if not g > 1:
        raise ParameterError(f"g must exceed 1, got {g}")
    ln = _log_n(n, log_n)
    lg = math.log(g)
    inner = ln / (8.0 * lg)
    if inner <= 0:
        raise ParameterError(f"log n / (8 log g) must be positive, got {inner}")
    # The tolerance keeps exact boundary cases (inner == g**j) on the intended side.
    value = math.floor(math.log(inner) / lg + 1e-12)
    g_max = ln / (8.0 * math.log(ln)) if ln > 1 else 0.0
    return EllBound(int(value), bool(10 <= g <= g_max), g_max)
