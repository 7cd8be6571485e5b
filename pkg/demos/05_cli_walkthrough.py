"""The operator's view: train / calibrate / eval / score from the shell.

Generates a labelled flow CSV, writes a roles config, then drives the
four CLI commands the way a deployment would. Everything lands in
./cli_demo_output/.
"""
import json
import pathlib
import subprocess
import sys

import numpy as np

from rpmnet.dataio import save_csv
from rpmnet.synthetic import gaussian_clusters

out = pathlib.Path("cli_demo_output")
out.mkdir(exist_ok=True)

rng = np.random.default_rng(11)
means = np.array([
    [4.0, 0.0, 0.0, 0.0],   # ddos
    [0.0, 4.0, 0.0, 0.0],   # portscan
    [0.0, 0.0, 4.0, 0.0],   # bruteforce
    [0.0, 0.0, 0.0, 0.0],   # novel family used only to pick the threshold
    [1.3, 1.3, 1.3, 0.0],   # novel family held out for evaluation
])
ds = gaussian_clusters(means, [120, 80, 60, 60, 60], 0.25, rng,
                       class_names=["ddos", "portscan", "bruteforce", "novel_cal", "novel_eval"])
save_csv(out / "flows.csv", ds)

(out / "roles.json").write_text(json.dumps({
    "known": ["ddos", "portscan", "bruteforce"],
    "validation_unknown": ["novel_cal"],
    "test_unknown": ["novel_eval"],
}, indent=2))

(out / "train.json").write_text(json.dumps({
    "epochs": 40, "batch_size": 32, "hidden_dims": [32, 16], "embed_dim": 8, "seed": 3,
}, indent=2))


def run(*args):
    cmd = [sys.executable, "-m", "rpmnet.cli", *args]
    print("\n$", " ".join(str(a) for a in cmd[2:]))
    subprocess.run(cmd, check=True)


run("train", "--data", out / "flows.csv", "--roles", out / "roles.json",
    "--config", out / "train.json", "--out", out / "model.bundle")
run("calibrate", "--bundle", out / "model.bundle", "--data", out / "flows.csv",
    "--roles", out / "roles.json", "--out", out / "model.cal.bundle")
run("eval", "--bundle", out / "model.cal.bundle", "--data", out / "flows.csv",
    "--roles", out / "roles.json", "--report", out / "report.json")
run("score", "--bundle", out / "model.cal.bundle", "--data", out / "flows.csv",
    "--out", out / "scored.csv")

print("\nfirst scored rows:")
for line in (out / "scored.csv").read_text().splitlines()[:4]:
    print(" ", line)
print("\nartifacts in", out.resolve())
for p in sorted(out.iterdir()):
    print(" ", p.name)
