"""Piecewise-affine minorant of a divergence generator built from tangents.

The minorant fhat(r) = max_j [ f(r_j) + f'(r_j) (r - r_j) ] is encoded as
m+1 normalized halfplane rows (a_i, b_i, f_i) with a_i^2 + b_i^2 = 1.  A pair
of functions (v, w) satisfies  r v + w <= fhat(r) for every r >= 0  exactly
when  a_i w + b_i v <= f_i  for every row: rows 0..m-1 sit at the breakpoints
s_0 = 0 < s_1 < ... < s_{m-1} and row m is the slope condition at s = +inf,
normalized by its limit (a=0, b=1, f = f'(r_m)).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .fdiv import FDivergence

__all__ = [
    "TangentApprox",
    "build_tangent_approx",
    "eval_fhat",
    "constraint_rows",
    "export_rows_csv",
    "parse_tangent_spec",
    "default_tangent_grid",
]


@dataclass(frozen=True)
class TangentApprox:
    div: FDivergence
    r_grid: np.ndarray        # tangent points, strictly increasing, > 0
    slopes: np.ndarray        # f'(r_j)
    conj_slopes: np.ndarray   # f*(f'(r_j))
    s: np.ndarray             # finite breakpoints s_0 = 0 .. s_{m-1}
    a: np.ndarray             # length m+1
    b: np.ndarray
    fvals: np.ndarray

    @property
    def m(self) -> int:
        return len(self.r_grid)


def default_tangent_grid(m: int = 200, lo: float = -4.0, hi: float = 4.0):
    """m log-spaced tangent points on [e^lo, e^hi]."""
    return np.exp(np.linspace(lo, hi, m))


def parse_tangent_spec(spec: str) -> np.ndarray:
    """Parse "log:-4:4:200" or an explicit comma list "0.5,1,2"."""
    if spec.startswith("log:"):
        _, lo, hi, m = spec.split(":")
        return default_tangent_grid(int(m), float(lo), float(hi))
    return np.array([float(x) for x in spec.split(",")])


def build_tangent_approx(div: FDivergence, r_grid) -> TangentApprox:
    """Tangent rows for ``div`` at the given tangent points.

    The breakpoint s_i between consecutive tangents is
    (f*(v_{i+1}) - f*(v_i)) / (v_{i+1} - v_i) with v_j = f'(r_j), and the
    envelope value there is v_i s_i - f*(v_i); both are checked against the
    direct max-of-tangent-lines evaluation.
    """
    r = np.asarray(r_grid, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("tangent grid is empty")
    if np.any(r <= 0):
        raise ValueError("tangent points must be strictly positive")
    if np.any(np.diff(r) <= 0):
        raise ValueError("tangent grid must be strictly increasing")

    v = np.asarray(div.f_prime(r), dtype=float)
    fr = np.asarray(div.f(r), dtype=float)
    while r.size > 1 and not (np.isfinite(v[-1]) and np.isfinite(fr[-1])):
        warnings.warn("dropping tangent points with non-finite f or f'")
        r, v, fr = r[:-1], v[:-1], fr[:-1]
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(fr))):
        raise ValueError("tangent point outside the finite domain of f, f'")
    if np.any(np.diff(v) < 1e-14 * (1.0 + np.abs(v[:-1]))):
        raise ValueError("duplicate f' values yield a degenerate breakpoint")

    conj = np.asarray(div.f_star(v), dtype=float)  # f*(f'(r_j)) = r_j v_j - f(r_j)
    m = r.size

    s = np.empty(m)
    s[0] = 0.0
    if m > 1:
        s[1:] = np.diff(conj) / np.diff(v)
    if np.any(np.diff(s) <= 0):
        raise ValueError("breakpoints are not strictly increasing")

    # envelope value at each finite breakpoint, via the conjugate form
    fhat_s = v * s - conj
    fhat_s[0] = -conj[0]
    direct = np.max(s[:, None] * v[None, :] - conj[None, :], axis=1)
    if not np.allclose(fhat_s, direct, rtol=1e-9, atol=1e-9):
        raise RuntimeError("conjugate-form breakpoint values disagree with "
                           "direct tangent evaluation")

    norm = np.sqrt(1.0 + s**2)
    a = np.empty(m + 1)
    b = np.empty(m + 1)
    fvals = np.empty(m + 1)
    a[:m] = 1.0 / norm
    b[:m] = s / norm
    fvals[:m] = fhat_s / norm
    a[m], b[m], fvals[m] = 0.0, 1.0, v[-1]  # s -> inf limit row

    return TangentApprox(div=div, r_grid=r, slopes=v, conj_slopes=conj,
                         s=s, a=a, b=b, fvals=fvals)


def eval_fhat(approx: TangentApprox, r):
    """Envelope value max_j [ v_j r - f*(v_j) ]; requires r >= 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("fhat is defined on r >= 0")
    vals = np.max(np.multiply.outer(r, approx.slopes) - approx.conj_slopes, axis=-1)
    return float(vals) if vals.ndim == 0 else vals


def constraint_rows(approx: TangentApprox):
    """The m+1 rows (a_i, b_i, f_i) in breakpoint order."""
    return list(zip(approx.a.tolist(), approx.b.tolist(), approx.fvals.tolist()))


def export_rows_csv(approx: TangentApprox, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "a", "b", "f"])
        for i, (ai, bi, fi) in enumerate(constraint_rows(approx)):
            writer.writerow([i, f"{ai:.17g}", f"{bi:.17g}", f"{fi:.17g}"])
