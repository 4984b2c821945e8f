"""End-to-end refinement: uncertainty -> graph -> GCN -> refined volume."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gcn
from .graph import GraphParams, RefinementGraph, build_graph, dump_graph, graph_summary
from .uncertainty import StochasticPassSet, UncertaintyBundle, analyze, bundle_from_maps
from .volume import Volume, binary_volume, largest_component, save_volume


@dataclass(frozen=True)
class RefineConfig:
    graph: GraphParams = field(default_factory=GraphParams)
    train: gcn.TrainConfig = field(default_factory=gcn.TrainConfig)
    replacement_mode: str = "full_roi"
    post_lcc: bool = False

    def __post_init__(self):
        if self.replacement_mode != "full_roi":
            raise ValueError(f"unsupported replacement mode {self.replacement_mode!r}")

    @classmethod
    def from_seed(cls, seed: int, **kw) -> "RefineConfig":
        """Config whose graph and init seeds are split from one case seed."""
        graph_seed, init_seed = split_seed(seed, 2)
        g = replace(kw.pop("graph", GraphParams()), seed=graph_seed)
        t = replace(kw.pop("train", gcn.TrainConfig()), seed=init_seed)
        return cls(graph=g, train=t, **kw)


def split_seed(seed: int, n: int) -> list[int]:
    """Deterministically derive ``n`` independent 63-bit seeds from one."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


@dataclass(eq=False)
class RefinementResult:
    refined: Volume
    bundle: UncertaintyBundle
    graph: RefinementGraph
    model: gcn.GcnModel
    config: RefineConfig

    def manifest(self) -> dict:
        losses = self.model.losses
        return {
            "config": {
                "graph": asdict(self.config.graph),
                "train": asdict(self.config.train),
                "replacement_mode": self.config.replacement_mode,
                "post_lcc": self.config.post_lcc,
            },
            "graph": graph_summary(self.graph),
            "loss": {
                "initial": losses[0] if losses else None,
                "final": losses[-1] if losses else None,
                "min": min(losses) if losses else None,
                "epochs": len(losses) - 1,
            },
            "dims": list(self.refined.dims),
            "refined_voxels": int(self.refined.data.sum()),
        }

    def save(self, directory) -> None:
        """Write refined.u8, manifest.json, model.ckpt, graph.json and graph.csr."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_volume(self.refined, directory / "refined.u8")
        gcn.save_checkpoint(self.model, directory / "model.ckpt")
        dump_graph(self.graph, directory, self.config.graph)
        with open(directory / "manifest.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _bundle(uncertainty, tau: float) -> UncertaintyBundle:
    if isinstance(uncertainty, UncertaintyBundle):
        if uncertainty.tau == tau:
            return uncertainty
        return bundle_from_maps(uncertainty.expectation, uncertainty.entropy, tau)
    if isinstance(uncertainty, StochasticPassSet):
        return analyze(uncertainty, tau)
    if isinstance(uncertainty, tuple) and len(uncertainty) == 2:
        return bundle_from_maps(uncertainty[0], uncertainty[1], tau)
    return analyze(StochasticPassSet(uncertainty), tau)


def run_refinement(
    intensity: Volume,
    prediction: Volume,
    uncertainty,
    cfg: RefineConfig | None = None,
) -> RefinementResult:
    """Refine ``prediction`` with a GCN trained on its confident voxels.

    ``uncertainty`` is a :class:`StochasticPassSet` (or list of pass volumes),
    an :class:`UncertaintyBundle`, or an ``(expectation, entropy)`` pair.
    Every ROI voxel takes the GCN label; voxels outside the ROI keep the
    input prediction.
    """
    cfg = cfg or RefineConfig()
    bundle = _bundle(uncertainty, cfg.graph.tau)
    graph = build_graph(intensity, prediction, bundle, cfg.graph)
    a_hat = gcn.renormalize_adjacency(graph.adjacency)
    model = gcn.fit(a_hat, graph.features, graph.labels, cfg.train)
    node_labels = gcn.predict(model, graph, a_hat)

    out = prediction.data.copy()
    x, y, z = graph.coords.T
    out[x, y, z] = node_labels
    refined = binary_volume(out)
    if cfg.post_lcc:
        refined = largest_component(refined)
    return RefinementResult(refined, bundle, graph, model, cfg)


def refine_volume(intensity, prediction, uncertainty, cfg: RefineConfig | None = None) -> Volume:
    return run_refinement(intensity, prediction, uncertainty, cfg).refined
