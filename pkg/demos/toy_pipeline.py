"""Run the whole pipeline end to end on a synthetic separable corpus.

Builds a tiny workspace in ./demo_workspace (corpus JSONL, embedding TSV,
masked-probability JSONL, pipeline config), then drives every stage the same
way the command line does:

    topoterm ingest   --config pipeline.toml
    topoterm features --config pipeline.toml
    ...

and prints the final report.  Delete demo_workspace/ to start fresh; re-running
without deleting demonstrates the content-hash stage cache (instant no-ops).
"""

import json
import pathlib
import sys

from topoterm.cli import main

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))
from conftest import write_synthetic_workspace  # noqa: E402  (fixture builder)

root = pathlib.Path(__file__).resolve().parent / "demo_workspace"
root.mkdir(exist_ok=True)
config = write_synthetic_workspace(root, n_train=40, n_test=20, kinds=("mlm", "wasserstein"))

for stage in ("ingest", "features", "train", "tag", "eval", "report"):
    print(f"\n$ topoterm {stage} --config {config}")
    code = main([stage, "--config", config])
    assert code == 0, f"stage {stage} exited {code}"

report = json.loads((root / "output" / "report.json").read_text())
print("\nunion model:", {k: round(v, 3) if isinstance(v, float) else v
                         for k, v in report["models"]["union"].items()
                         if k in ("precision", "recall", "f1", "predicted_count")})
