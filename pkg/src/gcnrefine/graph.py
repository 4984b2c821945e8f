"""Partially-labeled sparse voxel graph.

Nodes are the voxels of a region of interest around the uncertain area and
the confident foreground. Confident nodes carry the prediction as label,
uncertain nodes are left unlabeled. Each node links to its in-ROI face
neighbours plus ``k_random`` long-range partners drawn from the whole ROI;
edge weights mix an expectation divergence term with intensity and spatial
Gaussian kernels.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .uncertainty import EPS, UncertaintyBundle
from .volume import Volume, binarize, dilate, linear_index, mask_union

UNLABELED = -1
WEIGHTINGS = ("w1", "w2", "w3")

_FACE_OFFSETS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.int64
)


class GraphError(ValueError):
    """The inputs do not define a trainable graph."""


class EmptyROIError(GraphError):
    pass


class DegenerateLabelsError(GraphError):
    pass


@dataclass(frozen=True)
class GraphParams:
    tau: float = 0.5
    k_random: int = 16
    weighting: str = "w1"
    lam: float = 0.5
    beta: float = 1.0
    sigma1: float = 0.1
    sigma2: float = 10.0
    dilation_iterations: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.k_random < 0:
            raise ValueError("k_random must be non-negative")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lambda and beta must be non-negative")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be positive")
        if self.dilation_iterations < 1:
            raise ValueError("dilation_iterations must be a positive integer")


@dataclass(frozen=True, eq=False)
class RefinementGraph:
    coords: np.ndarray  # (N, 3) voxel coordinates, ascending x-fastest linear index
    features: np.ndarray  # (N, 3): normalized intensity, expectation, entropy
    labels: np.ndarray  # (N,) int8 over {0, 1, UNLABELED}
    adjacency: sp.csr_matrix  # symmetric, no self loops
    roi: Volume
    intensity_range: tuple[float, float] = (0.0, 1.0)

    @property
    def n_nodes(self) -> int:
        return int(self.coords.shape[0])

    @property
    def n_edges(self) -> int:
        """Undirected edge count."""
        return int(self.adjacency.nnz // 2)

    @property
    def labeled(self) -> np.ndarray:
        return self.labels != UNLABELED


# ------------------------------------------------------- weighting terms


def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)


def diversity(p_i, p_j):
    """Symmetric divergence between two Bernoulli class distributions (bits)."""
    p_i, p_j = _clamp(p_i), _clamp(p_j)
    # ordered arguments make the result bitwise symmetric
    a, b = np.minimum(p_i, p_j), np.maximum(p_i, p_j)
    return (a - b) * np.log2(a / b) + (b - a) * np.log2((1.0 - a) / (1.0 - b))


def inv_div(p_i, p_j):
    return np.exp2(-diversity(p_i, p_j))


def norm_div(p_i, p_j):
    return 1.0 - inv_div(p_i, p_j)


_DIVERGENCES = {"w1": diversity, "w2": norm_div, "w3": inv_div}


def edge_weight(
    expect_i,
    expect_j,
    intensity_i,
    intensity_j,
    pos_i,
    pos_j,
    params: GraphParams,
):
    """Weight of the edge between two nodes; vectorizes over leading axes.

    ``intensity_*`` are normalized intensities and ``pos_*`` voxel positions
    of shape ``(..., 3)``.
    """
    div = _DIVERGENCES[params.weighting](expect_i, expect_j)
    dv = np.asarray(intensity_i, dtype=np.float64) - np.asarray(intensity_j, dtype=np.float64)
    dx = np.asarray(pos_i, dtype=np.float64) - np.asarray(pos_j, dtype=np.float64)
    dist2 = np.sum(dx * dx, axis=-1)
    kernels = np.exp(-(dv * dv) / (2.0 * params.sigma1)) + np.exp(-dist2 / (2.0 * params.sigma2))
    return params.lam * div + params.beta * kernels


# ------------------------------------------------------------ construction


def build_roi(bundle: UncertaintyBundle, params: GraphParams) -> Volume:
    roi = mask_union(
        dilate(bundle.uncertain_mask, params.dilation_iterations),
        binarize(bundle.expectation, 0.5),
    )
    if not roi.data.any():
        raise EmptyROIError("ROI is empty: no uncertain voxels and no foreground expectation")
    return roi


def roi_coords(roi: Volume) -> np.ndarray:
    """ROI voxel coordinates in ascending x-fastest linear order."""
    idx = np.flatnonzero(roi.linear())
    return np.stack(np.unravel_index(idx, roi.dims, order="F"), axis=1).astype(np.int64)


def assign_labels(prediction: Volume, bundle: UncertaintyBundle, roi: Volume) -> np.ndarray:
    coords = roi_coords(roi)
    x, y, z = coords.T
    labels = prediction.data[x, y, z].astype(np.int8)
    labels[bundle.uncertain_mask.data[x, y, z].astype(bool)] = UNLABELED
    known = labels[labels != UNLABELED]
    if known.size == 0:
        raise DegenerateLabelsError("every ROI node is uncertain; nothing to train on")
    if np.unique(known).size < 2:
        raise DegenerateLabelsError(
            f"all {known.size} labeled nodes belong to class {int(known[0])}"
        )
    return labels


def _face_edges(coords: np.ndarray, roi: Volume) -> np.ndarray:
    """Undirected in-ROI face-neighbour pairs ``(i, j)`` with ``i < j``."""
    dims = roi.dims
    node_of = np.full(roi.size, -1, dtype=np.int64)
    node_of[linear_index(coords, dims)] = np.arange(coords.shape[0])
    pairs = []
    # positive offsets suffice: every undirected pair is seen once
    for off in _FACE_OFFSETS[::2]:
        nb = coords + off
        ok = np.all((nb >= 0) & (nb < np.array(dims)), axis=1)
        src = np.flatnonzero(ok)
        dst = node_of[linear_index(nb[ok], dims)]
        hit = dst >= 0
        pairs.append(np.stack([src[hit], dst[hit]], axis=1))
    e = np.concatenate(pairs) if pairs else np.empty((0, 2), dtype=np.int64)
    return np.sort(e, axis=1)


def _random_partners(n: int, k: int, face: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct random partners per node, excluding itself and its face neighbours.

    Returns directed pairs ``(i, j)``. When fewer than ``k`` candidates exist
    every candidate is taken.
    """
    if k == 0 or n < 2:
        return np.empty((0, 2), dtype=np.int64)
    face_keys = np.concatenate([face[:, 0] * n + face[:, 1], face[:, 1] * n + face[:, 0]])
    face_keys.sort()
    face_deg = np.bincount(face.ravel(), minlength=n)
    want = np.minimum(k, n - 1 - face_deg)

    m = k + 8
    cand = rng.integers(0, n - 1, size=(n, m), dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)[:, None]
    cand += cand >= rows  # skip self
    keys = rows * n + cand
    if face_keys.size:
        pos = np.minimum(np.searchsorted(face_keys, keys), face_keys.size - 1)
        is_face = face_keys[pos] == keys
    else:
        is_face = np.zeros(keys.shape, dtype=bool)
    # first occurrence of each value within a row
    order = np.argsort(cand, axis=1, kind="stable")
    srt = np.take_along_axis(cand, order, axis=1)
    dup_sorted = np.zeros_like(srt, dtype=bool)
    dup_sorted[:, 1:] = srt[:, 1:] == srt[:, :-1]
    dup = np.empty_like(dup_sorted)
    np.put_along_axis(dup, order, dup_sorted, axis=1)
    valid = ~is_face & ~dup
    rank = np.cumsum(valid, axis=1)
    take = valid & (rank <= want[:, None])

    out_i = np.broadcast_to(rows, cand.shape)[take]
    out_j = cand[take]
    short = np.flatnonzero(rank[:, -1] < want)
    if short.size:
        extra_i, extra_j = [], []
        face_sets = _neighbor_lists(face, n)
        for i in short:
            banned = set(face_sets[i])
            banned.add(i)
            pool = np.array([j for j in range(n) if j not in banned], dtype=np.int64)
            pick = rng.choice(pool, size=int(want[i]), replace=False)
            extra_i.append(np.full(pick.size, i, dtype=np.int64))
            extra_j.append(pick)
        keep = ~np.isin(out_i, short)
        out_i = np.concatenate([out_i[keep]] + extra_i)
        out_j = np.concatenate([out_j[keep]] + extra_j)
    return np.stack([out_i, out_j], axis=1)


def _neighbor_lists(edges: np.ndarray, n: int) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(int(j))
        nbrs[j].append(int(i))
    return nbrs


def connect(coords: np.ndarray, roi: Volume, k_random: int = 16, seed: int = 0) -> np.ndarray:
    """Undirected edge list ``(E, 2)`` with ``i < j``, sorted, without duplicates.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    coords = np.asarray(coords, dtype=np.int64)
    n = coords.shape[0]
    face = _face_edges(coords, roi)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rand = np.sort(_random_partners(n, k_random, face, rng), axis=1)
    edges = np.concatenate([face, rand])
    if edges.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    keys = np.unique(edges[:, 0] * n + edges[:, 1])
    return np.stack([keys // n, keys % n], axis=1)


def _normalize_intensity(values: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        return (values - lo) / (hi - lo), (lo, hi)
    return np.zeros_like(values), (lo, hi)


def build_graph(
    intensity: Volume,
    prediction: Volume,
    bundle: UncertaintyBundle,
    params: GraphParams | None = None,
    rng: np.random.Generator | None = None,
) -> RefinementGraph:
    params = params or GraphParams()
    dims = {intensity.dims, prediction.dims, bundle.dims}
    if len(dims) != 1:
        raise ValueError(f"inputs disagree on dims: {sorted(dims)}")
    if prediction.kind != "binary":
        raise ValueError("prediction must be a binary volume")

    roi = build_roi(bundle, params)
    coords = roi_coords(roi)
    labels = assign_labels(prediction, bundle, roi)
    x, y, z = coords.T

    raw = intensity.data[x, y, z].astype(np.float64)
    norm_int, rng_int = _normalize_intensity(raw)
    expect = bundle.expectation.data[x, y, z].astype(np.float64)
    ent = bundle.entropy.data[x, y, z].astype(np.float64)
    features = np.stack([norm_int, expect, ent], axis=1)

    edges = connect(coords, roi, params.k_random, rng if rng is not None else params.seed)
    i, j = edges[:, 0], edges[:, 1]
    w = edge_weight(expect[i], expect[j], norm_int[i], norm_int[j], coords[i], coords[j], params)

    n = coords.shape[0]
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    vals = np.concatenate([w, w])
    adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    adj.sort_indices()
    return RefinementGraph(coords, features, labels, adj, roi, rng_int)


# ------------------------------------------------------------------ dump


def graph_summary(graph: RefinementGraph, params: GraphParams | None = None) -> dict:
    w = graph.adjacency.data
    deg = np.diff(graph.adjacency.indptr)
    out = {
        "nodes": graph.n_nodes,
        "edges": graph.n_edges,
        "labeled": int(graph.labeled.sum()),
        "unlabeled": int((~graph.labeled).sum()),
        "foreground_labels": int((graph.labels == 1).sum()),
        "degree": {"min": int(deg.min()), "max": int(deg.max()), "mean": float(deg.mean())},
        "weight": {
            "min": float(w.min()) if w.size else 0.0,
            "max": float(w.max()) if w.size else 0.0,
            "mean": float(w.mean()) if w.size else 0.0,
        },
        "intensity_range": list(graph.intensity_range),
    }
    if params is not None:
        out["params"] = asdict(params)
    return out


def dump_graph(graph: RefinementGraph, directory, params: GraphParams | None = None) -> None:
    """Write ``graph.json`` (summary) and ``graph.csr`` (binary CSR triple).

    ``graph.csr`` is an ASCII line ``CSR <n> <nnz>`` followed by the row
    offsets and column indices as little-endian int64 and the weights as
    little-endian float64.
    """
    directory = Path(directory)
    with open(directory / "graph.json", "w") as fh:
        json.dump(graph_summary(graph, params), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_csr(graph.adjacency, directory / "graph.csr")


def write_csr(a: sp.csr_matrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"CSR {a.shape[0]} {a.nnz}\n".encode())
        fh.write(a.indptr.astype("<i8").tobytes())
        fh.write(a.indices.astype("<i8").tobytes())
        fh.write(a.data.astype("<f8").tobytes())


def read_csr(path) -> sp.csr_matrix:
    with open(path, "rb") as fh:
        magic, n, nnz = fh.readline().decode().split()
        if magic != "CSR":
            raise ValueError(f"{path} is not a CSR dump")
        n, nnz = int(n), int(nnz)
        indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8")
        indices = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
        data = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))
