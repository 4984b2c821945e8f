"""Command-line front end.

Subcommands: aggregate, refine, eval, synth, graph-stats. Exit status is 0 on
success, 1 on an internal error and 2 on bad input. Graph degeneracies in
``refine``/``graph-stats`` get their own codes: 3 for an empty ROI, 4 when the
certain voxels cover fewer than two classes.

Set ``GCNREFINE_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .evaluation import dice_report, ks_test, relative_improvement
from .gcn import TrainConfig
from .graph import WEIGHTINGS, DegenerateLabelsError, EmptyROIError, GraphParams, build_graph, dump_graph, graph_summary
from .refine import RefineConfig, run_refinement
from .synth import specs_from_dict, write_case
from .uncertainty import analyze, bundle_from_maps, entropy, expectation, load_passes, pass_paths
from .volume import Volume, VolumeFormatError, binarize, load_volume, save_volume

log = logging.getLogger("gcnrefine")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_EMPTY_ROI, EXIT_DEGENERATE = 0, 1, 2, 3, 4


class InputError(Exception):
    """Bad user input; reported with exit status 2."""


# config keys -> (GraphParams/TrainConfig field, parser)
def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


GRAPH_KEYS = {
    "tau": ("tau", float),
    "weighting": ("weighting", str),
    "lambda": ("lam", float),
    "beta": ("beta", float),
    "k": ("k_random", int),
    "sigma1": ("sigma1", float),
    "sigma2": ("sigma2", float),
    "dilate": ("dilation_iterations", int),
}
TRAIN_KEYS = {"hidden": ("hidden", int), "epochs": ("epochs", int), "lr": ("learning_rate", float)}
OTHER_KEYS = {"seed": int, "post_lcc": _bool}


def read_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in GRAPH_KEYS and key not in TRAIN_KEYS and key not in OTHER_KEYS:
            raise InputError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(args, file_values: dict | None = None) -> RefineConfig:
    """Flags win over the config file, the file wins over defaults."""
    merged = dict(file_values or {})
    for key in list(GRAPH_KEYS) + list(TRAIN_KEYS) + list(OTHER_KEYS):
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    try:
        g = {field: conv(merged[k]) for k, (field, conv) in GRAPH_KEYS.items() if k in merged}
        t = {field: conv(merged[k]) for k, (field, conv) in TRAIN_KEYS.items() if k in merged}
        seed = int(merged.get("seed", 0))
        post_lcc = _bool(merged.get("post_lcc", False))
        return RefineConfig.from_seed(seed, graph=GraphParams(**g), train=TrainConfig(**t), post_lcc=post_lcc)
    except (TypeError, ValueError) as e:
        raise InputError(f"invalid configuration: {e}") from e


# ---------------------------------------------------------------- case I/O


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise InputError(f"missing {what}: {path}")
    return path


def _load(path: Path, what: str) -> Volume:
    try:
        return load_volume(_require(path, what))
    except (VolumeFormatError, ValueError) as e:
        raise InputError(f"cannot load {what} {path}: {e}") from e


def load_uncertainty(case: Path, tau: float):
    """Pass files if present, else precomputed expectation (+ entropy) maps."""
    if pass_paths(case):
        try:
            return analyze(load_passes(case), tau)
        except (VolumeFormatError, ValueError) as e:
            raise InputError(f"bad pass files in {case}: {e}") from e
    if (case / "expectation.f32").exists():
        e = _load(case / "expectation.f32", "expectation")
        h = _load(case / "entropy.f32", "entropy") if (case / "entropy.f32").exists() else None
        try:
            return bundle_from_maps(e, h, tau)
        except ValueError as err:
            raise InputError(str(err)) from err
    raise InputError(f"no pass_*.f32 or expectation.f32 found in {case}")


def _case_dir(p: str) -> Path:
    case = Path(p)
    if not case.is_dir():
        raise InputError(f"case directory not found: {case}")
    return case


# ---------------------------------------------------------------- commands


def cmd_aggregate(args) -> int:
    case = _case_dir(args.case)
    if not pass_paths(case):
        raise InputError(f"no pass_*.f32 files in {case}")
    try:
        passes = load_passes(case)
    except (VolumeFormatError, ValueError) as e:
        raise InputError(f"bad pass files in {case}: {e}") from e
    out = Path(args.out or case)
    out.mkdir(parents=True, exist_ok=True)
    e = expectation(passes)
    save_volume(e, out / "expectation.f32")
    save_volume(entropy(e), out / "entropy.f32")
    log.info("aggregated %d passes of %s into %s", passes.T, passes.dims, out)
    return EXIT_OK


def _refine_inputs(args):
    case = _case_dir(args.case)
    cfg = resolve_config(args, read_config(args.config) if args.config else None)
    v = _load(case / "volume.f32", "intensity volume")
    y = _load(case / "prediction.u8", "prediction")
    bundle = load_uncertainty(case, cfg.graph.tau)
    if v.dims != y.dims or v.dims != bundle.expectation.dims:
        raise InputError(f"dims mismatch: volume {v.dims}, prediction {y.dims}, uncertainty {bundle.expectation.dims}")
    return case, cfg, v, y, bundle


def cmd_refine(args) -> int:
    _, cfg, v, y, bundle = _refine_inputs(args)
    t0 = time.perf_counter()
    result = run_refinement(v, y, bundle, cfg)
    out = Path(args.out)
    result.save(out)
    s = graph_summary(result.graph)
    log.info("refined in %.1fs: %d nodes, %d edges", time.perf_counter() - t0, s["nodes"], s["edges"])
    print(f"wrote {out / 'refined.u8'} ({s['nodes']} nodes, {s['edges']} edges, final loss {result.model.losses[-1]!r})")
    return EXIT_OK


def cmd_graph_stats(args) -> int:
    _, cfg, v, y, bundle = _refine_inputs(args)
    graph = build_graph(v, y, bundle, cfg.graph)
    if args.out:
        dump_graph(graph, args.out, cfg.graph)
    print(json.dumps(graph_summary(graph, cfg.graph), indent=2, sort_keys=True))
    return EXIT_OK


def _as_mask(v: Volume) -> Volume:
    return v if v.kind == "binary" else binarize(v, 0.5)


def evaluate(refined: Volume, gt: Volume, baseline: Volume | None, expect: Volume | None, axis: str) -> dict:
    for name, other in (("refined", refined), ("baseline", baseline), ("expectation", expect)):
        if other is not None and other.dims != gt.dims:
            raise InputError(f"dims mismatch: {name} {other.dims} vs gt {gt.dims}")
    rep = dice_report(refined, gt, axis)
    out = {
        "axis": axis,
        "volume_dice": rep.volume_dice,
        "slices": len(rep.slice_dice),
        "mean_slice_dice": rep.mean_slice_dice,
        "slice_dice": list(rep.slice_dice),
    }
    if baseline is not None:
        base = dice_report(_as_mask(baseline), gt, axis)
        out["baseline"] = {"volume_dice": base.volume_dice, "mean_slice_dice": base.mean_slice_dice}
        if base.slice_dice and rep.slice_dice:
            ks = ks_test(base.slice_dice, rep.slice_dice)
            out["ks"] = {"statistic": ks.statistic, "p_value": ks.p_value, "stars": ks.stars}
    if expect is not None:
        e = dice_report(_as_mask(expect), gt, axis).volume_dice
        out["expectation_dice"] = e
        out["rel_imp"] = relative_improvement(rep.volume_dice, e) if e > 0 else None
    return out


def format_eval(r: dict) -> str:
    lines = [
        f"volume dice       {r['volume_dice']!r}",
        f"slice dice ({r['axis']})    mean {r['mean_slice_dice']!r} over {r['slices']} slices",
    ]
    if "baseline" in r:
        lines.append(f"baseline dice     {r['baseline']['volume_dice']!r}")
    if "ks" in r:
        ks = r["ks"]
        lines.append(f"KS vs baseline    D {ks['statistic']!r}  p {ks['p_value']!r} {ks['stars']}".rstrip())
    if "expectation_dice" in r:
        lines.append(f"expectation dice  {r['expectation_dice']!r}")
        lines.append(f"rel_imp (%)       {r['rel_imp']!r}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    refined = _load(Path(args.refined), "refined volume")
    gt = _load(Path(args.gt), "ground truth")
    baseline = _load(Path(args.baseline), "baseline") if args.baseline else None
    expect = _load(Path(args.expectation), "expectation") if args.expectation else None
    r = evaluate(_as_mask(refined), _as_mask(gt), baseline, expect, args.axis)
    print(format_eval(r))
    if args.json:
        text = json.dumps(r, indent=2, sort_keys=True) + "\n"
        if args.json == "-":
            sys.stdout.write(text)
        else:
            Path(args.json).write_text(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        d = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read spec {args.spec}: {e}") from e
    if args.seed is not None:
        d = {**d, "phantom": {**d.get("phantom", {}), "seed": args.seed}, "sim": {**d.get("sim", {}), "seed": args.seed}}
    try:
        phantom, sim = specs_from_dict(d)
    except (TypeError, ValueError) as e:
        raise InputError(f"invalid spec: {e}") from e
    write_case(args.out, phantom, sim)
    print(f"wrote case {args.out} dims {phantom.dims} T {sim.T}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_graph_flags(p):
    p.add_argument("--config", help="key = value config file (flags override it)")
    p.add_argument("--tau", type=float)
    p.add_argument("--weighting", choices=WEIGHTINGS)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--k", type=int, help="random long-range partners per node")
    p.add_argument("--sigma1", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--dilate", type=int, help="dilation iterations of the uncertain mask")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gcnrefine", description="Uncertainty-driven GCN segmentation refinement.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="expectation and entropy from pass files")
    p.add_argument("case")
    p.add_argument("out", nargs="?", help="output directory (default: the case directory)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("refine", help="refine a case's prediction")
    p.add_argument("case")
    p.add_argument("out")
    _add_graph_flags(p)
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--post-lcc", dest="post_lcc", action="store_const", const=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="dice, slice dice, KS test and rel_imp")
    p.add_argument("refined")
    p.add_argument("gt")
    p.add_argument("--baseline", help="baseline mask for the KS comparison")
    p.add_argument("--expectation", help="expectation map or mask, for rel_imp")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--json", help="write the report as JSON ('-' for stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic case directory from a JSON spec")
    p.add_argument("spec")
    p.add_argument("out")
    p.add_argument("--seed", type=int, help="override both phantom and simulator seeds")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("graph-stats", help="node, edge and weight summary of a case's graph")
    p.add_argument("case")
    p.add_argument("--out", help="also dump graph.json and graph.csr here")
    _add_graph_flags(p)
    p.set_defaults(func=cmd_graph_stats)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("GCNREFINE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except EmptyROIError as e:
        print(f"error: empty ROI: {e}", file=sys.stderr)
        return EXIT_EMPTY_ROI
    except DegenerateLabelsError as e:
        print(f"error: degenerate labels: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
