"""Feature families, their moment-matrix spans, and moment construction.

A structure bundles a feature map phi: X -> C^d with the combinatorics of
the linear span V of { phi(x) phi(x)^* }: every matrix entry belongs to an
equivalence class on which members of V are constant (class -1 entries are
identically zero on V), so the orthogonal projection onto V is classwise
averaging.  All supported families admit a scalar unit matrix U = u I with
phi(x)^* U phi(x) = 1.

Families:
  trig1d(r)    x in [-1,1],  phi_w(x) = exp(i pi w x),  w in {-r..r}
  trignd(Omega) x in [-1,1]^n, phi_w(x) = exp(i pi w.x), w in Omega
  boolean(A)   x in {-1,1}^n, phi_S(x) = prod_{i in S} x_i, S in A
  finite(k)    x in {0..k-1}, phi(x) = e_x (one-hot)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ._kernels import classwise_project

__all__ = [
    "MomentStructure",
    "MomentMatrix",
    "build_structure",
    "feature_vector",
    "project_V",
    "project_Vperp",
    "unit_matrix",
    "moment_matrix",
    "conjugated_structure",
    "matrix_to_json",
    "matrix_from_json",
]


@dataclass(frozen=True)
class MomentStructure:
    family: str
    d: int
    labels: tuple                      # per-index frequency / subset / atom
    class_id: np.ndarray = field(repr=False)   # (d, d) int64, -1 = forced zero
    class_count: np.ndarray = field(repr=False)
    n_classes: int = 0
    u_scale: float = 0.0               # U = u_scale * I
    n: int = 1                         # ambient dimension of the domain
    params: dict = field(default_factory=dict)
    basis: Optional[np.ndarray] = field(default=None, repr=False)  # generic span
    transform: Optional[np.ndarray] = field(default=None, repr=False)
    U_explicit: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def U(self) -> np.ndarray:
        if self.U_explicit is not None:
            return self.U_explicit
        return self.u_scale * np.eye(self.d, dtype=complex)

    def feature_vector(self, x) -> np.ndarray:
        return feature_vector(self, x)

    def project_V(self, M) -> np.ndarray:
        return project_V(self, M)

    def project_Vperp(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=complex)
        return M - project_V(self, M)

    def random_points(self, n_points: int, rng) -> list:
        if self.family in ("trig1d",):
            return list(rng.uniform(-1.0, 1.0, size=n_points))
        if self.family == "trignd":
            return [rng.uniform(-1.0, 1.0, size=self.n) for _ in range(n_points)]
        if self.family == "boolean":
            return [rng.choice([-1, 1], size=self.n) for _ in range(n_points)]
        if self.family == "finite":
            return list(rng.integers(0, self.d, size=n_points))
        raise ValueError(self.family)


def _classes_from_keys(keys) -> tuple:
    """Map a (d, d) array of hashable keys to dense class ids and counts.

    A key of None marks entries forced to zero on the span.
    """
    d = len(keys)
    class_id = np.full((d, d), -1, dtype=np.int64)
    lookup: dict = {}
    for i in range(d):
        for j in range(d):
            k = keys[i][j]
            if k is None:
                continue
            class_id[i, j] = lookup.setdefault(k, len(lookup))
    n_classes = len(lookup)
    class_count = np.zeros(max(n_classes, 1), dtype=np.int64)
    for c in class_id.ravel():
        if c >= 0:
            class_count[c] += 1
    return class_id, class_count, n_classes


def build_structure(spec) -> MomentStructure:
    """Build a structure from a spec dict or a shorthand string.

    Shorthands: "trig1d:4", "trignd:2:1" (n:k box), "boolean:4:2"
    (n:max cardinality; k = n means all subsets), "finite:3".
    Dict specs may instead carry explicit "omega" (list of integer vectors)
    or "subsets" (list of index lists).
    """
    if isinstance(spec, str):
        parts = spec.split(":")
        fam = parts[0]
        if fam == "trig1d":
            spec = {"family": "trig1d", "r": int(parts[1])}
        elif fam == "trignd":
            spec = {"family": "trignd", "n": int(parts[1]), "k": int(parts[2])}
        elif fam == "boolean":
            spec = {"family": "boolean", "n": int(parts[1]), "k": int(parts[2])}
        elif fam == "finite":
            spec = {"family": "finite", "size": int(parts[1])}
        else:
            raise ValueError(f"unknown family {fam!r}")

    fam = spec["family"]
    if fam == "trig1d":
        r = int(spec["r"])
        if r < 0:
            raise ValueError("trig1d requires r >= 0")
        labels = tuple(range(-r, r + 1))
        d = len(labels)
        keys = [[labels[i] - labels[j] for j in range(d)] for i in range(d)]
        cid, ccount, nc = _classes_from_keys(keys)
        return MomentStructure(family="trig1d", d=d, labels=labels,
                               class_id=cid, class_count=ccount, n_classes=nc,
                               u_scale=1.0 / d, n=1, params={"r": r})

    if fam == "trignd":
        n = int(spec["n"])
        if "omega" in spec:
            omega = [tuple(int(v) for v in w) for w in spec["omega"]]
        else:
            k = int(spec["k"])
            omega = [w for w in itertools.product(range(-k, k + 1), repeat=n)]
        if len(set(omega)) != len(omega):
            raise ValueError("duplicate frequencies")
        if tuple([0] * n) not in omega:
            raise ValueError("frequency set must contain 0")
        labels = tuple(omega)
        d = len(labels)
        keys = [[tuple(np.subtract(labels[i], labels[j])) for j in range(d)]
                for i in range(d)]
        cid, ccount, nc = _classes_from_keys(keys)
        return MomentStructure(family="trignd", d=d, labels=labels,
                               class_id=cid, class_count=ccount, n_classes=nc,
                               u_scale=1.0 / d, n=n, params=dict(spec))

    if fam == "boolean":
        n = int(spec["n"])
        if "subsets" in spec:
            subsets = [frozenset(int(i) for i in s) for s in spec["subsets"]]
        else:
            k = int(spec.get("k", n))
            subsets = [frozenset(c) for size in range(k + 1)
                       for c in itertools.combinations(range(n), size)]
        if len(set(subsets)) != len(subsets):
            raise ValueError("duplicate subsets")
        if frozenset() not in subsets:
            raise ValueError("subset family must contain the empty set")
        labels = tuple(subsets)
        d = len(labels)
        keys = [[labels[i] ^ labels[j] for j in range(d)] for i in range(d)]
        cid, ccount, nc = _classes_from_keys(keys)
        return MomentStructure(family="boolean", d=d, labels=labels,
                               class_id=cid, class_count=ccount, n_classes=nc,
                               u_scale=1.0 / d, n=n, params=dict(spec))

    if fam == "finite":
        k = int(spec["size"])
        if k <= 0:
            raise ValueError("finite family needs a positive size")
        labels = tuple(range(k))
        keys = [[i if i == j else None for j in range(k)] for i in range(k)]
        cid, ccount, nc = _classes_from_keys(keys)
        return MomentStructure(family="finite", d=k, labels=labels,
                               class_id=cid, class_count=ccount, n_classes=nc,
                               u_scale=1.0, n=1, params={"size": k})

    raise ValueError(f"unknown family {fam!r}")


def feature_vector(structure: MomentStructure, x) -> np.ndarray:
    """phi(x) as a complex vector of length d."""
    fam = structure.family
    if structure.transform is not None:
        base = feature_vector(
            MomentStructure(family=fam, d=structure.d, labels=structure.labels,
                            class_id=structure.class_id,
                            class_count=structure.class_count,
                            n_classes=structure.n_classes,
                            u_scale=structure.u_scale, n=structure.n,
                            params=structure.params), x)
        return structure.transform @ base
    if fam == "trig1d":
        x = float(x)
        if not -1.0 - 1e-12 <= x <= 1.0 + 1e-12:
            raise ValueError("x outside [-1, 1]")
        w = np.array(structure.labels, dtype=float)
        return np.exp(1j * np.pi * w * x)
    if fam == "trignd":
        x = np.asarray(x, dtype=float)
        if x.shape != (structure.n,) or np.any(np.abs(x) > 1.0 + 1e-12):
            raise ValueError("x outside [-1, 1]^n")
        W = np.array(structure.labels, dtype=float)
        return np.exp(1j * np.pi * (W @ x))
    if fam == "boolean":
        x = np.asarray(x)
        if x.shape != (structure.n,) or not np.all(np.abs(x) == 1):
            raise ValueError("x must be a +-1 vector of length n")
        vals = [np.prod(x[list(s)]) if s else 1.0 for s in structure.labels]
        return np.asarray(vals, dtype=complex)
    if fam == "finite":
        i = int(x)
        if not 0 <= i < structure.d:
            raise ValueError("index out of range")
        e = np.zeros(structure.d, dtype=complex)
        e[i] = 1.0
        return e
    raise ValueError(fam)


def project_V(structure: MomentStructure, M) -> np.ndarray:
    """Orthogonal projection onto the span (classwise averaging)."""
    M = np.ascontiguousarray(np.asarray(M, dtype=complex))
    if M.shape != (structure.d, structure.d):
        raise ValueError("dimension mismatch")
    if structure.basis is not None:
        coef = np.tensordot(structure.basis.conj(), M, axes=([1, 2], [0, 1]))
        return np.tensordot(coef.real, structure.basis, axes=(0, 0))
    return classwise_project(M, structure.class_id, structure.class_count,
                             structure.n_classes)


def project_Vperp(structure: MomentStructure, M) -> np.ndarray:
    return structure.project_Vperp(M)


def unit_matrix(structure: MomentStructure) -> np.ndarray:
    """The scalar unit matrix U = u I with phi(x)^* U phi(x) = 1."""
    return structure.U


def hermitian_basis(structure: MomentStructure) -> np.ndarray:
    """Orthonormal Hermitian basis of the span (Frobenius inner product)."""
    if structure.basis is not None:
        return structure.basis
    d = structure.d
    mats = []
    for c in range(structure.n_classes):
        mask = structure.class_id == c
        E = np.zeros((d, d), dtype=complex)
        E[mask] = 1.0
        sym = 0.5 * (E + E.conj().T)
        skew = 0.5j * (E - E.conj().T)
        for Bm in (sym, skew):
            nrm = np.linalg.norm(Bm)
            if nrm > 1e-12:
                mats.append(Bm / nrm)
    # classes come in conjugate pairs, so deduplicate near-parallel entries
    out = []
    for Bm in mats:
        v = Bm.ravel()
        for C in out:
            v = v - np.vdot(C.ravel(), v) * C.ravel()
        if np.linalg.norm(v) > 1e-8:
            out.append((v / np.linalg.norm(v)).reshape(d, d))
    return np.array(out)


def conjugated_structure(structure: MomentStructure, T) -> MomentStructure:
    """Structure for the transformed features T phi: span T V T^*, unit
    matrix T^{-*} U T^{-1}.  Falls back to an explicit orthonormal basis."""
    T = np.asarray(T, dtype=complex)
    d = structure.d
    B0 = hermitian_basis(structure)
    raw = np.array([T @ Bm @ T.conj().T for Bm in B0])
    flat = raw.reshape(len(raw), -1)
    # orthonormalize in the real vector space of Hermitian matrices
    reim = np.hstack([flat.real, flat.imag])
    q, _ = np.linalg.qr(reim.T)
    k = flat.shape[1]
    basis = (q.T[:, :k] + 1j * q.T[:, k:]).reshape(-1, d, d)
    Tinv = np.linalg.inv(T)
    Unew = Tinv.conj().T @ structure.U @ Tinv
    return MomentStructure(
        family=structure.family, d=d, labels=structure.labels,
        class_id=structure.class_id, class_count=structure.class_count,
        n_classes=structure.n_classes, u_scale=structure.u_scale,
        n=structure.n, params=dict(structure.params), basis=basis,
        transform=T, U_explicit=Unew)


@dataclass(frozen=True)
class MomentMatrix:
    structure: MomentStructure
    matrix: np.ndarray

    def validate(self, mass: Optional[float] = None,
                 span_tol: float = 1e-9) -> None:
        M = self.matrix
        if np.linalg.norm(M - M.conj().T) > 1e-12 * (1 + np.linalg.norm(M)):
            raise ValueError("moment matrix is not Hermitian")
        w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
        if w.min() < -1e-9 * max(1.0, w.max()):
            raise ValueError("moment matrix is not PSD")
        resid = np.linalg.norm(M - project_V(self.structure, M))
        if resid > span_tol:
            raise ValueError(f"moment matrix leaves the span (residual {resid:.2e})")
        if mass is not None:
            got = float(np.real(np.trace(M @ self.structure.U)))
            if abs(got - mass) > 1e-8 * max(1.0, abs(mass)):
                raise ValueError(f"tr[Sigma U] = {got} != {mass}")


def _semicircle_entry(lag: int) -> float:
    if lag == 0:
        return 1.0
    if lag % 2 == 1:
        return 0.0
    z = np.pi * lag
    return float(2.0 * special.j1(z) / z)


def _chain_incidence(n: int) -> np.ndarray:
    # x_i = x_1 + sum_{j <= i-1} eta_j  (cumulative-sum incidence)
    M = np.zeros((n, n - 1))
    for i in range(1, n):
        M[i, :i] = 1.0
    return M


def _wrapped_chain_entry(delta: np.ndarray, rho: float) -> float:
    if int(np.sum(delta)) != 0:
        return 0.0
    Mt = _chain_incidence(len(delta)).T @ delta
    vals = np.sinc(Mt * rho)  # sinc(z) = sin(pi z)/(pi z)
    return float(np.prod(vals))


def _boolean_chain_moments(structure: MomentStructure, rho: float) -> dict:
    """Exact parity moments of the +-1 chain by enumerating the noise bits."""
    n = structure.n
    if n > 20:
        raise ValueError("boolean chain enumeration limited to n <= 20")
    p_flip = rho / 2.0
    moments = {}
    needed = {lab for lab in structure.labels}
    needed |= {a ^ b for a in structure.labels for b in structure.labels}
    for S in needed:
        if not S:
            moments[S] = 1.0
            continue
        if len(S) % 2 == 1:
            moments[S] = 0.0  # x_1 is a symmetric +-1 mean-zero factor
            continue
        # prod_{i in S} x_i = prod_j eta_j^{c_j}, c_j = #{i in S : i >= j}
        c = np.zeros(n, dtype=int)
        for i in S:
            c[: i + 1] += 1
        odd = (c[1:] % 2) == 1  # eta_2 .. eta_n
        moments[S] = float(np.prod(np.where(odd, 1.0 - 2.0 * p_flip, 1.0)))
    return moments


def _fill_classes(structure: MomentStructure, class_value) -> np.ndarray:
    d = structure.d
    M = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            if structure.class_id[i, j] >= 0:
                M[i, j] = class_value(i, j)
    return M


def moment_matrix(structure: MomentStructure, dist_spec) -> MomentMatrix:
    """Moment matrix of phi phi^* under a named distribution.

    dist_spec is a dict: {"name": "uniform" | "semicircle" |
    "wrapped-chain", "rho": r | "boolean-chain", "rho": r |
    "empirical", "samples": [...] | "monte-carlo", "base": ..., "n": ...,
    "seed": ...} or one of the shorthand strings "uniform"/"semicircle"/
    "wrapped-chain:0.5"/"boolean-chain:0.5".
    """
    if isinstance(dist_spec, str):
        parts = dist_spec.split(":")
        dist_spec = {"name": parts[0]}
        if len(parts) > 1:
            dist_spec["rho"] = float(parts[1])
    name = dist_spec["name"]
    fam = structure.family

    if name == "uniform":
        if fam == "finite":
            M = np.eye(structure.d, dtype=complex) / structure.d
        else:
            M = np.eye(structure.d, dtype=complex)
        return MomentMatrix(structure, M)

    if name == "semicircle":
        if fam != "trig1d":
            raise ValueError("semicircle moments are defined for trig1d")
        M = _fill_classes(structure, lambda i, j: _semicircle_entry(
            structure.labels[i] - structure.labels[j]))
        return MomentMatrix(structure, M)

    if name == "wrapped-chain":
        if fam != "trignd":
            raise ValueError("wrapped-chain moments are defined for trignd")
        rho = float(dist_spec["rho"])
        M = _fill_classes(structure, lambda i, j: _wrapped_chain_entry(
            np.subtract(structure.labels[i], structure.labels[j]), rho))
        return MomentMatrix(structure, M)

    if name == "boolean-chain":
        if fam != "boolean":
            raise ValueError("boolean-chain moments are defined for boolean")
        rho = float(dist_spec["rho"])
        mom = _boolean_chain_moments(structure, rho)
        M = _fill_classes(structure, lambda i, j: mom[
            structure.labels[i] ^ structure.labels[j]])
        return MomentMatrix(structure, M)

    if name == "empirical":
        samples = dist_spec["samples"]
        if len(samples) == 0:
            raise ValueError("empirical spec needs samples")
        M = np.zeros((structure.d, structure.d), dtype=complex)
        for x in samples:
            phi = feature_vector(structure, x)
            M += np.outer(phi, phi.conj())
        return MomentMatrix(structure, M / len(samples))

    if name == "monte-carlo":
        base = dist_spec["base"]
        n_samples = int(dist_spec["n"])
        rng = np.random.default_rng(int(dist_spec.get("seed", 0)))
        samples = sample_distribution(structure, base, n_samples, rng,
                                      rho=dist_spec.get("rho"))
        return moment_matrix(structure, {"name": "empirical",
                                         "samples": samples})

    raise ValueError(f"unknown distribution spec {name!r}")


def sample_distribution(structure, base, n_samples, rng, rho=None):
    """Draw samples from one of the named base distributions."""
    if base == "uniform":
        return structure.random_points(n_samples, rng)
    if base == "semicircle":
        # (1+x)/2 ~ Beta(3/2, 3/2) gives the semicircle density on [-1, 1]
        return list(2.0 * rng.beta(1.5, 1.5, size=n_samples) - 1.0)
    if base == "wrapped-chain":
        n = structure.n
        out = []
        for _ in range(n_samples):
            x = np.empty(n)
            x[0] = rng.uniform(-1, 1)
            for i in range(1, n):
                x[i] = x[i - 1] + rng.uniform(-rho, rho)
            out.append((x + 1.0) % 2.0 - 1.0)
        return out
    if base == "boolean-chain":
        n = structure.n
        out = []
        for _ in range(n_samples):
            x = np.empty(n, dtype=int)
            x[0] = rng.choice([-1, 1])
            for i in range(1, n):
                flip = rng.random() < rho / 2.0
                x[i] = -x[i - 1] if flip else x[i - 1]
            out.append(x)
        return out
    raise ValueError(f"unknown sampling base {base!r}")


def matrix_to_json(M: np.ndarray) -> str:
    M = np.asarray(M, dtype=complex)
    entries = [[float(z.real), float(z.imag)] for z in M.ravel()]
    return json.dumps({"d": M.shape[0], "entries": entries})


def matrix_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    d = int(obj["d"])
    flat = np.array([complex(re, im) for re, im in obj["entries"]])
    if flat.size != d * d:
        raise ValueError("entry count does not match dimension")
    return flat.reshape(d, d)
