"""
The command-line pipeline, end to end
=====================================

Every capability in the library is reachable from the `pvforecast`
console command: generate a fleet, prepare it, train, evaluate,
cross-validate, ablate, predict, plot. This script drives the whole
chain in a temporary directory with a deliberately tiny model config.
"""

import json
import pathlib
import tempfile

from pvforecast.cli import main

tmp = tempfile.TemporaryDirectory()
root = pathlib.Path(tmp.name)

# A key=value settings file; command-line flags override these, and
# these override the built-in defaults.
config = root / "tiny.cfg"
config.write_text(
    "model_dim = 8\nheads = 2\nhead_dim = 4\nffn_hidden = 16\n"
    "blocks = 1\nepochs = 4\ncv_epochs = 2\nbatch_size = 8\n"
)

steps = [
    ["synth", "--out", str(root / "fleet"),
     "--stations", "3", "--days", "7", "--seed", "1"],
    ["prepare",
     "--stations", str(root / "fleet" / "stations"),
     "--metadata", str(root / "fleet" / "metadata.csv"),
     "--columns", str(root / "fleet" / "columns.cfg"),
     "--out", str(root / "data.pvz"), "--seed", "1"],
    ["train", "--data", str(root / "data.pvz"), "--out", str(root / "run"),
     "--config", str(config), "--seed", "1"],
    ["evaluate", "--data", str(root / "data.pvz"),
     "--model", str(root / "run" / "model.pvz")],
    ["cv", "--data", str(root / "data.pvz"), "--out", str(root / "run_cv"),
     "--config", str(config), "--seed", "1"],
    ["ablate", "--data", str(root / "data.pvz"), "--out", str(root / "run_ab"),
     "--config", str(config), "--seed", "1", "--epochs", "1"],
    ["predict", "--model", str(root / "run" / "model.pvz"),
     "--stations", str(root / "fleet" / "stations"),
     "--metadata", str(root / "fleet" / "metadata.csv"),
     "--columns", str(root / "fleet" / "columns.cfg"),
     "--station", "st00", "--out", str(root / "pred.csv")],
    ["plot", "--run", str(root / "run"), "--out", str(root / "figures"),
     "--deterministic"],
]

for argv in steps:
    code = main(argv)
    print(">>> pvforecast %s -> exit %d" % (" ".join(argv[:1]), code))
    assert code == 0

# What landed on disk:
metrics = json.loads((root / "run" / "metrics.json").read_text())
print("test PE: %.2f%% (persistence %.2f%%)"
      % (metrics["model"]["pe"], metrics["persistence"]["pe"]))
print("prediction rows:", len((root / "pred.csv").read_text().splitlines()) - 1)
print("figures:", sorted(p.name for p in (root / "figures").iterdir()))
for name in ("config.json", "loss.csv", "metrics.json", "model.pvz"):
    print("run dir has", name)
tmp.cleanup()
