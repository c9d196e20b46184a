"""Catalog of f-divergences: generators, conjugates, reversals, and
operator-convex integral decompositions.

Every divergence is normalized so that f(1) = 0, f'(1) = 0 and f''(1) = 1,
which pins the scale shared by all bounds downstream.  The conjugate f* then
satisfies f*(0) = 0 and (f*)'(0) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "FDivergence",
    "OperatorConvexRep",
    "make_divergence",
    "divergence_from_key",
    "reverse",
    "discrete_f_divergence",
    "operator_convex_rep",
    "KINDS",
]

KINDS = (
    "alpha-renyi",
    "kl",
    "reverse-kl",
    "squared-hellinger",
    "pearson-chi2",
    "reverse-pearson",
    "le-cam",
    "jensen-shannon",
)

# alpha values that collapse onto a named divergence
_ALPHA_EPS = 1e-8


@dataclass(frozen=True)
class FDivergence:
    """Scalar convex function bundle defining one f-divergence.

    ``f`` is finite and strictly convex on (0, inf); ``f_at_zero`` is the
    continuous extension at 0 (may be +inf).  ``f_star_sup`` is the supremum
    of the domain of the conjugate, with ``f_star_sup_closed`` telling whether
    the endpoint itself is attained.
    """

    kind: str
    alpha: Optional[float]
    f: Callable
    f_prime: Callable
    f_star: Callable
    f_star_prime: Callable
    f_at_zero: float
    f_star_sup: float
    f_star_sup_closed: bool
    operator_convex: bool = True

    @property
    def key(self) -> str:
        if self.kind == "alpha-renyi":
            return f"alpha:{self.alpha:g}"
        return self.kind

    def f_ext(self, t):
        """f with the continuous extension at t = 0."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.f(float(t)) if t > 0 else self.f_at_zero
        out = np.full(t.shape, self.f_at_zero)
        pos = t > 0
        if np.any(pos):
            out[pos] = self.f(t[pos])
        return out


def _kl():
    return dict(
        f=lambda t: t * np.log(t) - t + 1.0,
        f_prime=np.log,
        f_star=lambda u: np.expm1(u),
        f_star_prime=np.exp,
        f_at_zero=1.0,
        f_star_sup=np.inf,
        f_star_sup_closed=False,
    )


def _reverse_kl():
    return dict(
        f=lambda t: -np.log(t) + t - 1.0,
        f_prime=lambda t: 1.0 - 1.0 / t,
        f_star=lambda u: -np.log1p(-u),
        f_star_prime=lambda u: 1.0 / (1.0 - u),
        f_at_zero=np.inf,
        f_star_sup=1.0,
        f_star_sup_closed=False,
    )


def _squared_hellinger():
    return dict(
        f=lambda t: 2.0 * (np.sqrt(t) - 1.0) ** 2,
        f_prime=lambda t: 2.0 - 2.0 / np.sqrt(t),
        f_star=lambda u: u / (1.0 - u / 2.0),
        f_star_prime=lambda u: 1.0 / (1.0 - u / 2.0) ** 2,
        f_at_zero=2.0,
        f_star_sup=2.0,
        f_star_sup_closed=False,
    )


def _pearson():
    return dict(
        f=lambda t: 0.5 * (t - 1.0) ** 2,
        f_prime=lambda t: t - 1.0,
        f_star=lambda u: 0.5 * np.maximum(u + 1.0, 0.0) ** 2 - 0.5,
        f_star_prime=lambda u: np.maximum(u + 1.0, 0.0),
        f_at_zero=0.5,
        f_star_sup=np.inf,
        f_star_sup_closed=False,
    )


def _reverse_pearson():
    return dict(
        f=lambda t: 0.5 * (1.0 / t + t) - 1.0,
        f_prime=lambda t: 0.5 * (1.0 - 1.0 / t**2),
        f_star=lambda u: 1.0 - np.sqrt(1.0 - 2.0 * u),
        f_star_prime=lambda u: 1.0 / np.sqrt(1.0 - 2.0 * u),
        f_at_zero=np.inf,
        f_star_sup=0.5,
        f_star_sup_closed=True,
    )


def _le_cam():
    return dict(
        f=lambda t: (t - 1.0) ** 2 / (t + 1.0),
        f_prime=lambda t: (t - 1.0) * (t + 3.0) / (t + 1.0) ** 2,
        f_star=lambda u: 2.0 - u - 2.0 * np.sqrt(1.0 - 2.0 * u),
        f_star_prime=lambda u: 2.0 / np.sqrt(1.0 - 2.0 * u) - 1.0,
        f_at_zero=1.0,
        f_star_sup=0.5,
        f_star_sup_closed=True,
    )


def _jensen_shannon():
    return dict(
        f=lambda t: 2.0 * t * np.log(2.0 * t / (t + 1.0))
        + 2.0 * np.log(2.0 / (t + 1.0)),
        f_prime=lambda t: 2.0 * np.log(2.0 * t / (t + 1.0)),
        f_star=lambda u: -2.0 * np.log(2.0 - np.exp(u / 2.0)),
        f_star_prime=lambda u: 1.0 / (2.0 * np.exp(-u / 2.0) - 1.0),
        f_at_zero=2.0 * np.log(2.0),
        f_star_sup=2.0 * np.log(2.0),
        f_star_sup_closed=False,
    )


def _alpha_renyi(alpha: float):
    a = float(alpha)
    c = 1.0 / (a * (a - 1.0))

    def f(t):
        return c * (np.power(t, a) - a * t + (a - 1.0))

    def f_prime(t):
        return (np.power(t, a - 1.0) - 1.0) / (a - 1.0)

    if a > 1.0:
        # conjugate clips at the kink where 1 + (a-1)u hits zero
        def f_star(u):
            w = np.maximum(1.0 + (a - 1.0) * u, 0.0)
            return (np.power(w, a / (a - 1.0)) - 1.0) / a

        def f_star_prime(u):
            w = np.maximum(1.0 + (a - 1.0) * u, 0.0)
            return np.power(w, 1.0 / (a - 1.0))

        sup, closed = np.inf, False
        f0 = 1.0 / a
    else:
        def f_star(u):
            w = 1.0 + (a - 1.0) * u
            return (np.power(w, a / (a - 1.0)) - 1.0) / a

        def f_star_prime(u):
            w = 1.0 + (a - 1.0) * u
            return np.power(w, 1.0 / (a - 1.0))

        sup = 1.0 / (1.0 - a)
        closed = a < 0.0
        f0 = 1.0 / a if a > 0 else np.inf

    return dict(
        f=f,
        f_prime=f_prime,
        f_star=f_star,
        f_star_prime=f_star_prime,
        f_at_zero=f0,
        f_star_sup=sup,
        f_star_sup_closed=closed,
    )


def make_divergence(kind: str, alpha: Optional[float] = None) -> FDivergence:
    """Build the evaluator bundle for a named divergence.

    ``alpha`` is required for kind "alpha-renyi" and must lie in (-1, 2];
    values within 1e-8 of 0, 1, 2 or -1 are dispatched onto the dedicated
    closed forms to avoid 0/0 in the generic formula.
    """
    if kind == "alpha-renyi":
        if alpha is None:
            raise ValueError("alpha-renyi requires an alpha parameter")
        a = float(alpha)
        if not (-1.0 - _ALPHA_EPS < a <= 2.0 + _ALPHA_EPS):
            raise ValueError(f"alpha must lie in (-1, 2], got {a}")
        if abs(a - 1.0) < _ALPHA_EPS:
            return make_divergence("kl")
        if abs(a) < _ALPHA_EPS:
            return make_divergence("reverse-kl")
        if abs(a - 2.0) < _ALPHA_EPS:
            return make_divergence("pearson-chi2")
        if abs(a + 1.0) < _ALPHA_EPS:
            return make_divergence("reverse-pearson")
        return FDivergence(kind="alpha-renyi", alpha=a, **_alpha_renyi(a))

    table = {
        "kl": _kl,
        "reverse-kl": _reverse_kl,
        "squared-hellinger": _squared_hellinger,
        "pearson-chi2": _pearson,
        "reverse-pearson": _reverse_pearson,
        "le-cam": _le_cam,
        "jensen-shannon": _jensen_shannon,
    }
    if kind not in table:
        raise ValueError(f"unknown divergence kind {kind!r}")
    if alpha is not None:
        raise ValueError(f"kind {kind!r} takes no alpha parameter")
    return FDivergence(kind=kind, alpha=None, **table[kind]())


def divergence_from_key(key: str) -> FDivergence:
    """Resolve a string key like "kl" or "alpha:0.5" (CLI / config format)."""
    key = key.strip()
    if key.startswith("alpha:"):
        return make_divergence("alpha-renyi", float(key.split(":", 1)[1]))
    return make_divergence(key)


_REVERSE_KIND = {
    "kl": "reverse-kl",
    "reverse-kl": "kl",
    "pearson-chi2": "reverse-pearson",
    "reverse-pearson": "pearson-chi2",
    "squared-hellinger": "squared-hellinger",
    "le-cam": "le-cam",
    "jensen-shannon": "jensen-shannon",
}


def reverse(div: FDivergence) -> FDivergence:
    """Divergence with generator g(t) = t f(1/t) (swaps the two arguments)."""
    if div.kind == "alpha-renyi":
        return make_divergence("alpha-renyi", 1.0 - div.alpha)
    return make_divergence(_REVERSE_KIND[div.kind])


def discrete_f_divergence(div: FDivergence, p, q) -> float:
    """Divergence between two weight vectors: sum_i q_i f(p_i / q_i).

    ``q`` must be strictly positive, ``p`` nonnegative; returns +inf when a
    zero p-entry meets an f with infinite extension at 0.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    if np.any(q <= 0):
        raise ValueError("q entries must be strictly positive")
    if np.any(p < 0):
        raise ValueError("p entries must be nonnegative")
    vals = div.f_ext(p / q)
    return float(np.sum(q * vals))


@dataclass(frozen=True)
class OperatorConvexRep:
    """Representation f(t) = beta (t-1)^2 + (t-1)^2 * integral of 1/(lambda+t).

    The measure part is a list of point masses ``atoms`` plus an optional
    ``density`` on (0, inf) evaluated with the stored quadrature rule.
    """

    beta: float
    atoms: tuple  # ((lambda, weight), ...)
    density: Optional[Callable] = None
    nodes: Optional[np.ndarray] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def measure_integral(self, t):
        """integral of d nu(lambda) / (lambda + t) for scalar or array t."""
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape)
        for lam, w in self.atoms:
            total = total + w / (lam + t)
        if self.density is not None:
            dens = self.weights * self.density(self.nodes)
            total = total + dens @ (1.0 / np.add.outer(self.nodes, t))
        return total

    def reconstruct(self, t):
        t = np.asarray(t, dtype=float)
        return (self.beta + self.measure_integral(t)) * (t - 1.0) ** 2


def log_gauss_legendre(a: float, b: float, n_nodes: int = 2000, order: int = 16):
    """Gauss-Legendre nodes/weights on log-spaced panels covering (a, b)."""
    panels = max(1, n_nodes // order)
    xs, ws = leggauss(order)
    edges = np.exp(np.linspace(np.log(a), np.log(b), panels + 1))
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * xs[None, :]).ravel()
    weights = (half[:, None] * ws[None, :]).ravel()
    return nodes, weights


def operator_convex_rep(div: FDivergence, n_nodes: int = 2000) -> OperatorConvexRep:
    """Operator-convex decomposition of the generator.

    Closed forms: the quadratic divergences contribute a pure beta term or a
    point mass; the alpha family carries the density
    c_alpha * lambda^alpha / (1+lambda)^2 and its limits at alpha = 0, 1 give
    the reverse-KL and KL densities.  Jensen-Shannon's two-branch density
    simplifies to a single positive density, continuous at lambda = 1.
    """
    if not div.operator_convex:
        raise ValueError(f"{div.key} is not operator convex")

    kind = div.kind
    if kind == "pearson-chi2":
        return OperatorConvexRep(beta=0.5, atoms=())
    if kind == "reverse-pearson":
        return OperatorConvexRep(beta=0.0, atoms=((0.0, 0.5),))
    if kind == "le-cam":
        return OperatorConvexRep(beta=0.0, atoms=((1.0, 1.0),))

    nodes, weights = log_gauss_legendre(1e-6, 1e6, n_nodes)
    if kind == "kl":
        density = lambda lam: lam / (1.0 + lam) ** 2
    elif kind == "reverse-kl":
        density = lambda lam: 1.0 / (1.0 + lam) ** 2
    elif kind == "jensen-shannon":
        density = lambda lam: np.where(
            lam <= 1.0, 2.0 * lam / (1.0 + lam) ** 2, 2.0 / (1.0 + lam) ** 2
        )
    elif kind == "alpha-renyi":
        a = div.alpha
        const = (1.0 / a) * np.sin((a - 1.0) * np.pi) / ((a - 1.0) * np.pi)
        density = lambda lam: const * np.power(lam, a) / (1.0 + lam) ** 2
    else:  # pragma: no cover - exhaustive over KINDS
        raise ValueError(f"no operator-convex decomposition for {kind!r}")
    return OperatorConvexRep(
        beta=0.0, atoms=(), density=density, nodes=nodes, weights=weights
    )
