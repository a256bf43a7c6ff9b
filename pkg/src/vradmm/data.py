"""Datasets: LIBSVM text I/O, correlation graphs, synthetic generators.

The graph-guided constraint uses ``A = [G; I]`` where each row of ``G`` is
``e_i - sign(corr_ij) e_j`` for a pair of features whose sample Pearson
correlation has magnitude at least ``tau_g``.
"""

from __future__ import annotations

import io
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .linalg import SparseMatrix
from .model import ConstraintSpec, ProblemSpec, Regularizer, Sample, SmoothSum

logger = logging.getLogger(__name__)

__all__ = [
    "LibsvmFormatError",
    "RawDataset",
    "GraphSpec",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "build_graph",
    "assemble_A",
    "make_problem",
    "make_synthetic",
    "make_a9a_like",
    "make_adversarial_pair",
    "load_a9a",
    "split_half",
    "A9A_GROUP_SIZES",
]


class LibsvmFormatError(ValueError):
    def __init__(self, line: int, column: int, msg: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {msg}")


@dataclass(frozen=True)
class RawDataset:
    samples: tuple[Sample, ...]
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        for r, s in enumerate(self.samples):
            if s.indices and s.indices[-1] >= self.dimension:
                raise ValueError(f"sample {r} has feature index {s.indices[-1]} >= dimension {self.dimension}")

    @property
    def n(self) -> int:
        return len(self.samples)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.zeros((self.n, self.dimension))
        for r, s in enumerate(self.samples):
            X[r, list(s.indices)] = s.values
        return X, np.array([s.label for s in self.samples], dtype=np.float64)

    @classmethod
    def from_dense(cls, X, labels) -> "RawDataset":
        X = np.asarray(X, dtype=np.float64)
        out = []
        for row, b in zip(X, labels):
            nz = np.flatnonzero(row)
            out.append(Sample(tuple(int(i) for i in nz), tuple(float(v) for v in row[nz]), int(b)))
        return cls(tuple(out), X.shape[1])

    def subset(self, idx) -> "RawDataset":
        return RawDataset(tuple(self.samples[int(i)] for i in idx), self.dimension)


_LABEL_MAPS = {
    frozenset({-1.0, 1.0}): {-1.0: -1, 1.0: 1},
    frozenset({0.0, 1.0}): {0.0: -1, 1.0: 1},
    frozenset({1.0, 2.0}): {1.0: -1, 2.0: 1},
}


def parse_libsvm(stream: TextIO | str, dimension: int | None = None) -> RawDataset:
    """Read ``label idx:val ...`` lines (1-based indices).

    Blank lines and ``#`` comments are skipped.  Labels in ``{0,1}`` or
    ``{1,2}`` are mapped to ``{-1,+1}``.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    raw = []
    for lineno, line in enumerate(stream, start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        tokens = []
        col = 0
        for tok in body.split():
            col = body.index(tok, col)
            tokens.append((col + 1, tok))
            col += len(tok)
        c0, lab = tokens[0]
        try:
            label = float(lab)
        except ValueError:
            raise LibsvmFormatError(lineno, c0, f"bad label {lab!r}") from None
        if not math.isfinite(label):
            raise LibsvmFormatError(lineno, c0, f"bad label {lab!r}")
        idx, vals = [], []
        for c, tok in tokens[1:]:
            k, sep, v = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(lineno, c, f"expected idx:val, got {tok!r}")
            try:
                i = int(k)
            except ValueError:
                raise LibsvmFormatError(lineno, c, f"bad feature index {k!r}") from None
            if i < 1:
                raise LibsvmFormatError(lineno, c, f"feature index {i} < 1")
            try:
                val = float(v)
            except ValueError:
                raise LibsvmFormatError(lineno, c + len(k) + 1, f"bad feature value {v!r}") from None
            if not math.isfinite(val):
                raise LibsvmFormatError(lineno, c + len(k) + 1, f"non-finite feature value {v!r}")
            if idx and i - 1 <= idx[-1]:
                raise LibsvmFormatError(lineno, c, f"feature indices not increasing ({idx[-1] + 1} then {i})")
            idx.append(i - 1)
            vals.append(val)
        raw.append((lineno, label, tuple(idx), tuple(vals)))
    seen = frozenset(r[1] for r in raw)
    mapping = None
    for key, mp in _LABEL_MAPS.items():
        if seen <= key:
            mapping = mp
            break
    if mapping is None:
        bad = next(r for r in raw if r[1] not in (-1.0, 1.0))
        raise LibsvmFormatError(bad[0], 1, f"labels {sorted(seen)} are not binary")
    if seen and not seen <= {-1.0, 1.0}:
        logger.info("label mapping %s", {k: v for k, v in mapping.items() if k in seen})
    inferred = 1 + max((r[2][-1] for r in raw if r[2]), default=-1)
    if dimension is None:
        dimension = max(inferred, 1)
    elif inferred > dimension:
        raise ValueError(f"feature index {inferred} exceeds declared dimension {dimension}")
    samples = tuple(Sample(r[2], r[3], mapping[r[1]]) for r in raw)
    return RawDataset(samples, dimension)


def load_libsvm(path, dimension: int | None = None) -> RawDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, dimension)


def serialize_libsvm(ds: RawDataset) -> str:
    lines = []
    for s in ds.samples:
        feats = " ".join(f"{i + 1}:{v!r}" for i, v in zip(s.indices, s.values))
        lab = "+1" if s.label > 0 else "-1"
        lines.append(f"{lab} {feats}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class GraphSpec:
    edges: tuple[tuple[int, int, int], ...]
    threshold: float
    dimension: int

    def __post_init__(self):
        seen = set()
        for i, j, sg in self.edges:
            if not 0 <= i < j < self.dimension or sg not in (-1, 1):
                raise ValueError(f"bad edge {(i, j, sg)}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge {(i, j)}")
            seen.add((i, j))


def build_graph(data, tau_g: float = 0.5) -> GraphSpec:
    """Edges between features whose |Pearson correlation| >= ``tau_g``.

    ``data`` is a :class:`RawDataset` or a dense ``n x d`` feature array.
    Zero-variance features are left out.
    """
    if not 0.0 < tau_g <= 1.0:
        raise ValueError(f"tau_g must lie in (0, 1], got {tau_g}")
    X = data.dense()[0] if isinstance(data, RawDataset) else np.asarray(data, dtype=np.float64)
    d = X.shape[1]
    Xc = X - X.mean(axis=0)
    sd = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    live = sd > 1e-12 * max(1.0, float(sd.max(initial=0.0)))
    if not np.all(live):
        logger.info("excluding %d zero-variance features from the graph", int((~live).sum()))
    edges = []
    idx = np.flatnonzero(live)
    if idx.size >= 2:
        Z = Xc[:, idx] / sd[idx]
        C = Z.T @ Z
        # round-off can push |corr| of identical columns a hair past 1
        np.clip(C, -1.0, 1.0, out=C)
        a, b = np.triu_indices(idx.size, k=1)
        keep = np.abs(C[a, b]) >= tau_g * (1.0 - 1e-12)
        for p, q in zip(a[keep], b[keep]):
            edges.append((int(idx[p]), int(idx[q]), 1 if C[p, q] > 0 else -1))
    return GraphSpec(tuple(edges), tau_g, d)


def assemble_A(graph: GraphSpec, d: int | None = None) -> SparseMatrix:
    d = graph.dimension if d is None else d
    E = len(graph.edges)
    offs = np.arange(0, 2 * E + 1, 2)
    cols = np.empty(2 * E, dtype=np.int64)
    vals = np.empty(2 * E)
    for r, (i, j, sg) in enumerate(graph.edges):
        cols[2 * r], cols[2 * r + 1] = i, j
        vals[2 * r], vals[2 * r + 1] = 1.0, -float(sg)
    G = SparseMatrix(E, d, offs, cols, vals)
    return G.vstack(SparseMatrix.identity(d))


def make_problem(features, labels, lambda1: float = 0.0, lambda2: float = 0.0,
                 tau_g: float = 0.5, A: SparseMatrix | None = None) -> ProblemSpec:
    """Sigmoid-loss graph-guided problem with ``A = [G; I]`` unless ``A`` is given."""
    X = np.asarray(features, dtype=np.float64)
    if A is None:
        A = assemble_A(build_graph(X, tau_g), X.shape[1])
    smooth = SmoothSum(X, labels, lambda2)
    return ProblemSpec(smooth, Regularizer(lambda1), ConstraintSpec(A))


def make_synthetic(n: int = 200, d: int = 20, seed: int = 0, block: int = 4,
                   noise: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Features in correlated blocks and labels from a planted logistic model."""
    rng = np.random.default_rng(seed)
    nb = -(-d // block)
    latent = rng.standard_normal((n, nb))
    X = np.repeat(latent, block, axis=1)[:, :d] + noise * rng.standard_normal((n, d))
    X /= np.sqrt(1.0 + noise ** 2)
    w = np.zeros(d)
    w[::block] = rng.choice([-1.0, 1.0], size=w[::block].size)
    p = 1.0 / (1.0 + np.exp(-(X @ w)))
    y = np.where(rng.random(n) < p, 1.0, -1.0)
    return X, y


# category counts of the 14 one-hot encoded attribute groups (123 binary features)
A9A_GROUP_SIZES = (5, 8, 5, 16, 7, 14, 6, 5, 2, 3, 3, 5, 41, 3)


def make_a9a_like(n: int = 5000, seed: int = 0, positive_rate: float = 0.24) -> tuple[np.ndarray, np.ndarray]:
    """Binary one-hot features shaped like the 123-feature adult/a9a set.

    Each sample picks one category in each of 14 groups; the choices are
    coupled through a shared latent score, and labels follow a logistic
    model in that score and the chosen categories.
    """
    rng = np.random.default_rng(seed)
    d = sum(A9A_GROUP_SIZES)
    X = np.zeros((n, d))
    z = rng.standard_normal(n)
    score = 1.2 * z
    off = 0
    for g, size in enumerate(A9A_GROUP_SIZES):
        base = np.log(rng.dirichlet(np.full(size, 0.8)) + 1e-3)
        slope = rng.normal(0.0, 1.0, size)
        logits = base[None, :] + z[:, None] * slope[None, :]
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        choice = (P.cumsum(axis=1) > rng.random(n)[:, None]).argmax(axis=1)
        X[np.arange(n), off + choice] = 1.0
        effect = rng.normal(0.0, 0.4, size)
        score += effect[choice]
        off += size
    # shift the intercept so that about `positive_rate` of labels are +1
    lo, hi = -20.0, 20.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        rate = np.mean(1.0 / (1.0 + np.exp(-(score + mid))))
        lo, hi = (mid, hi) if rate < positive_rate else (lo, mid)
    p = 1.0 / (1.0 + np.exp(-(score + 0.5 * (lo + hi))))
    y = np.where(rng.random(n) < p, 1.0, -1.0)
    return X, y


def load_a9a(n: int | None = 5000, seed: int = 0, path=None) -> tuple[np.ndarray, np.ndarray, str]:
    """Real a9a if available (``path``, ``$VRADMM_A9A`` or ``data/a9a``), else the surrogate.

    Returns ``(X, y, source)``; a subset of ``n`` rows is drawn with a seeded
    permutation.
    """
    cands = [path, os.environ.get("VRADMM_A9A"), Path("data") / "a9a"]
    for c in cands:
        if c and Path(c).is_file():
            X, y = load_libsvm(c, 123).dense()
            if n is not None and n < X.shape[0]:
                sel = np.random.default_rng(seed).permutation(X.shape[0])[:n]
                X, y = X[sel], y[sel]
            return X, y, str(c)
    X, y = make_a9a_like(5000 if n is None else n, seed)
    return X, y, "a9a-like surrogate"


def make_adversarial_pair(a, ridge: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Two samples with the same features and opposite labels.

    ``f_0 + f_1`` is constant in the sigmoid part (``s(z) + s(-z) = 1``), so
    with a ridge the full gradient vanishes at ``x = 0`` while
    ``||grad f_0(0) - grad f(0)|| = ||a||/4``.
    """
    a = np.asarray(a, dtype=np.float64)
    return np.vstack([a, a]), np.array([1.0, -1.0])


def split_half(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split into a training half and a test half."""
    perm = np.random.default_rng(seed).permutation(n)
    h = n // 2
    return np.sort(perm[:h]), np.sort(perm[h:])
