"""Monte-Carlo dropout aggregation: expectation, entropy, uncertain mask."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .volume import Volume, binary_volume, load_volume, save_volume

EPS = 1e-6


@dataclass(frozen=True)
class StochasticPassSet:
    passes: tuple

    def __init__(self, passes: Sequence[Volume]):
        passes = tuple(passes)
        if not passes:
            raise ValueError("a pass set needs at least one pass")
        dims = passes[0].dims
        for p in passes:
            if p.kind != "probability":
                raise ValueError("stochastic passes must be probability volumes")
            if p.dims != dims:
                raise ValueError(f"pass dims mismatch: {p.dims} vs {dims}")
        object.__setattr__(self, "passes", passes)

    @property
    def T(self) -> int:
        return len(self.passes)

    @property
    def dims(self):
        return self.passes[0].dims


@dataclass(frozen=True)
class UncertaintyBundle:
    expectation: Volume
    entropy: Volume
    uncertain_mask: Volume
    tau: float

    def __post_init__(self):
        dims = {self.expectation.dims, self.entropy.dims, self.uncertain_mask.dims}
        if len(dims) != 1:
            raise ValueError("bundle volumes must share dims")

    @property
    def dims(self):
        return self.expectation.dims


def expectation(passes: StochasticPassSet | Sequence[Volume]) -> Volume:
    if not isinstance(passes, StochasticPassSet):
        passes = StochasticPassSet(passes)
    acc = np.zeros(passes.dims, dtype=np.float64)
    for p in passes.passes:
        acc += p.data
    acc /= passes.T
    return Volume(np.clip(acc, 0.0, 1.0), kind="probability")


def binary_entropy(p, eps: float = EPS) -> np.ndarray:
    """Base-2 binary entropy with ``p`` clamped to ``[eps, 1 - eps]``."""
    p = np.asarray(p, dtype=np.float64)
    # fold onto [eps, 0.5] first so H(p) and H(1 - p) share one code path
    p = np.clip(np.minimum(p, 1.0 - p), eps, 0.5)
    q = 1.0 - p
    return -(p * np.log2(p) + q * np.log2(q))


def entropy(expect: Volume, eps: float = EPS) -> Volume:
    if expect.kind != "probability":
        raise ValueError("entropy expects a probability volume")
    h = np.clip(binary_entropy(expect.data, eps), 0.0, 1.0)
    return Volume(h, kind="probability")


def uncertain_mask(ent: Volume, tau: float) -> Volume:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return binary_volume(ent.data > tau)


def analyze(passes, tau: float = 0.5) -> UncertaintyBundle:
    """Expectation, entropy and uncertain mask from a set of stochastic passes."""
    e = expectation(passes)
    return bundle_from_maps(e, entropy(e), tau)


def bundle_from_maps(expect: Volume, ent: Volume | None, tau: float = 0.5) -> UncertaintyBundle:
    """Build a bundle from a precomputed expectation (and optionally entropy)."""
    if ent is None:
        ent = entropy(expect)
    return UncertaintyBundle(expect, ent, uncertain_mask(ent, tau), float(tau))


# ------------------------------------------------------------------ files


def pass_paths(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.glob("pass_*") if not p.name.endswith(".json"))


def load_passes(directory) -> StochasticPassSet:
    paths = pass_paths(directory)
    if not paths:
        raise FileNotFoundError(f"no pass_* volumes in {directory}")
    return StochasticPassSet([load_volume(p) for p in paths])


def save_passes(passes: StochasticPassSet, directory) -> None:
    directory = Path(directory)
    width = max(3, len(str(passes.T - 1)))
    for t, p in enumerate(passes.passes):
        save_volume(p, directory / f"pass_{t:0{width}d}.f32")
