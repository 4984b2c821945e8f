# The same pipeline through the command line, in a temporary directory.
import json
import tempfile
from pathlib import Path

from gcnrefine.cli import main

spec = Path(__file__).with_name("example_case.json")
with tempfile.TemporaryDirectory() as tmp:
    case, out = Path(tmp, "case"), Path(tmp, "out")
    main(["synth", str(spec), str(case)])
    main(["aggregate", str(case)])
    main(["refine", str(case), str(out), "--lambda", "0", "--seed", "3"])
    main([
        "eval", str(out / "refined.u8"), str(case / "gt.u8"),
        "--baseline", str(case / "prediction.u8"),
        "--expectation", str(case / "expectation.f32"),
        "--json", str(out / "eval.json"),
    ])
    m = json.loads((out / "manifest.json").read_text())
    print("manifest graph:", {k: m["graph"][k] for k in ("nodes", "edges", "labeled")})
    print("rel_imp from json:", json.loads((out / "eval.json").read_text())["rel_imp"])
