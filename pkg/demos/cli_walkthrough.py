"""Drive the ``w2restrict`` command line end to end.

Writes JSON configs into a scratch directory and runs, in order:
``generate`` -> ``oracle`` -> ``distance`` -> ``fit`` -> ``map``.
Each step prints its own summary line; the files it writes carry a header
with the command, the SHA-256 of the resolved configuration and the seed.

Run with ``python demos/cli_walkthrough.py [workdir]``.
"""

import json
import os
import sys
import tempfile

from w2restrict.cli import main

work = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="w2restrict-")
data = os.path.join(work, "data")
mu, nu = os.path.join(data, "s_mu.csv"), os.path.join(data, "s_nu.csv")


def step(command, config, out, *flags):
    path = os.path.join(work, f"{command}.json")
    with open(path, "w") as fh:
        json.dump(config, fh, indent=2)
    print(f"$ w2restrict {command} --config {path} --out {out} {' '.join(flags)}".rstrip())
    code = main([command, "--config", path, "--out", out, *flags])
    if code:
        sys.exit(code)
    print()


step("generate", {"n": 500, "seed": 3}, data)
step("oracle", {"mu": mu, "nu": nu}, os.path.join(work, "oracle"))
step("distance", {"mu": mu, "nu": nu, "class": "quadratic"}, os.path.join(work, "distance"), "--symmetric")
fit_cfg = {
    "mu": mu,
    "nu": nu,
    "class": {"class": "icnn", "widths": [32, 32], "activations": ["relu_squared", "softplus"], "eta": 0.5},
    "epochs": 300,
    "step_size": {"initial": 0.1, "scale": 20},
    "eval_every": 100,
}
step("fit", fit_cfg, os.path.join(work, "fit"))
step("map", {"nu": nu, "mu": mu, "checkpoint": os.path.join(work, "fit", "checkpoint.json")}, os.path.join(work, "map"))
print("outputs in", work)
