"""Seeded test matrix generators.

Every generator draws from ``numpy.random.default_rng(seed)`` (PCG64), so a
``(kind, parameters, seed)`` triple fully determines the output on a given
platform. Cross-language fixtures should be shared as exported matrices rather
than by reproducing the random streams.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist

from .core import HierPartition, MlrMatrix, to_dense

KINDS = ("fiedler", "dgt", "multiscale_kernel", "graph_distance", "synthetic_factor_cov",
         "planted_mlr")


def fiedler(n: int, seed: int = 0, a=None) -> np.ndarray:
    """``|a_i - a_j|`` with ``a`` uniform on [0, 1] (or the given ``a``)."""
    if a is None:
        if n < 1:
            raise ValueError("n must be positive")
        a = np.random.default_rng(seed).random(n)
    a = np.asarray(a, dtype=np.float64)
    return np.abs(a[:, None] - a[None, :])


def _cube(rng, count, d):
    return rng.random((count, d))


def _sphere(rng, count, d):
    x = rng.standard_normal((count, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def dgt(m: int, n: int, d: int = 3, h: float = 0.2, seed: int = 0,
        targets=None, sources=None) -> np.ndarray:
    """Gaussian kernel ``exp(-|t_i - s_j|^2 / h^2)`` between points in the unit cube."""
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    rng = np.random.default_rng(seed)
    t = _cube(rng, m, d) if targets is None else np.asarray(targets, dtype=np.float64)
    s = _cube(rng, n, d) if sources is None else np.asarray(sources, dtype=np.float64)
    return np.exp(-cdist(t, s, "sqeuclidean") / h**2)


def multiscale_kernel(m: int, n: int, d: int = 3, levels: int = 3, sigma: float = 0.9,
                      seed: int = 0, targets=None, sources=None) -> np.ndarray:
    """Sum over scales ``sigma / 2^l`` of inverse-quadratic kernels on the unit sphere."""
    if levels < 1 or sigma <= 0:
        raise ValueError("need levels >= 1 and sigma > 0")
    rng = np.random.default_rng(seed)
    t = _sphere(rng, m, d) if targets is None else np.asarray(targets, dtype=np.float64)
    s = _sphere(rng, n, d) if sources is None else np.asarray(sources, dtype=np.float64)
    dist = cdist(t, s)
    out = np.zeros((t.shape[0], s.shape[0]))
    for l in range(levels):
        out += (1.0 + (dist / (sigma / 2**l)) ** 2) ** -2
    return out


def shortest_path_distances(n: int, edges) -> np.ndarray:
    """All-pairs shortest path lengths of an undirected graph given ``(i, j, w)`` edges."""
    edges = list(edges)
    if edges:
        i, j, w = (np.asarray(x) for x in zip(*edges))
    else:
        i = j = np.zeros(0, dtype=int)
        w = np.zeros(0)
    G = coo_matrix((w.astype(np.float64), (i.astype(int), j.astype(int))), shape=(n, n)).tocsr()
    D = shortest_path(G, method="D", directed=False)
    # the two directions can differ in the last bit; both are valid path lengths
    return np.minimum(D, D.T)


def random_geometric_edges(n: int, avg_degree: float = 6.0, seed: int = 0):
    """Edges of a connected random geometric graph in the unit square, weights in [0.5, 1.5].

    The connection radius starts at the value giving ``avg_degree`` on average and
    grows by 10% until the graph is connected.
    """
    if n < 1 or avg_degree <= 0:
        raise ValueError("need n >= 1 and avg_degree > 0")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    dist = cdist(pts, pts)
    radius = np.sqrt(avg_degree / (np.pi * max(n - 1, 1)))
    while True:
        iu, ju = np.nonzero(np.triu(dist <= radius, k=1))
        adj = coo_matrix((np.ones(iu.size), (iu, ju)), shape=(n, n))
        if connected_components(adj, directed=False)[0] == 1:
            break
        radius *= 1.1
    w = rng.uniform(0.5, 1.5, iu.size)
    return list(zip(iu.tolist(), ju.tolist(), w.tolist()))


def graph_distance(n: int, avg_degree: float = 6.0, seed: int = 0) -> np.ndarray:
    return shortest_path_distances(n, random_geometric_edges(n, avg_degree, seed))


def synthetic_factor_cov(n: int, p: int, seed: int = 0) -> np.ndarray:
    """``F F^T + diag(d)`` with Gaussian ``F`` (n x p) and ``d`` uniform on [0.1, 1]."""
    if not 0 <= p < n:
        raise ValueError("need 0 <= p < n")
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, p))
    d = rng.uniform(0.1, 1.0, n)
    return F @ F.T + np.diag(d)


def planted_mlr(partition: HierPartition, ranks, seed: int = 0, kind: str = "general"):
    """Random-factor MLR matrix and its dense value."""
    rng = np.random.default_rng(seed)
    ranks = np.asarray(ranks, dtype=np.int64)
    m, n = partition.shape
    r = int(ranks.sum())
    mlr = MlrMatrix.zeros(partition, ranks, kind)
    mlr.B[:] = rng.standard_normal((m, r))
    if kind == "general":
        mlr.C[:] = rng.standard_normal((n, r))
    else:
        for l in range(len(ranks)):
            if kind == "symmetric":
                mlr.signs[l][:] = rng.choice([-1.0, 1.0], size=mlr.signs[l].shape)
            cs = mlr.level_slice(l)
            for k, rs, _ in partition.blocks(l):
                mlr.C[rs, cs] = mlr.B[rs, cs] * mlr.signs[l][k]
    return mlr, to_dense(mlr)


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator name with keyword parameters, e.g. ``fiedler:n=512``."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator {self.kind!r}; choose from {KINDS}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "GeneratorSpec":
        kind, _, rest = text.partition(":")
        params = {}
        for item in filter(None, rest.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"generator parameter {item!r} is not key=value")
            params[key.strip()] = _number(val.strip())
        seed = int(params.pop("seed", seed))
        return cls(kind.strip(), params, seed)

    def generate(self) -> np.ndarray:
        p = dict(self.params)
        if self.kind == "fiedler":
            return fiedler(int(p["n"]), self.seed)
        if self.kind == "dgt":
            return dgt(int(p["m"]), int(p["n"]), int(p.get("d", 3)), float(p.get("h", 0.2)),
                       self.seed)
        if self.kind == "multiscale_kernel":
            m = int(p.get("m", p.get("n")))
            return multiscale_kernel(m, int(p.get("n", m)), int(p.get("d", 3)),
                                     int(p.get("levels", p.get("L_A", 3))),
                                     float(p.get("sigma", 0.9)), self.seed)
        if self.kind == "graph_distance":
            return graph_distance(int(p["n"]), float(p.get("avg_degree", 6.0)), self.seed)
        if self.kind == "synthetic_factor_cov":
            return synthetic_factor_cov(int(p["n"]), int(p["p"]), self.seed)
        m = int(p.get("m", p.get("n")))
        n = int(p.get("n", m))
        L = int(p.get("L", 3))
        ranks = np.full(L, int(p.get("r", 1)))
        return planted_mlr(HierPartition.bisection(m, n, L), ranks, self.seed)[1]


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)
