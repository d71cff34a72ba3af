"""Command-line interface.

Usage::

    w2restrict <command> --config CONFIG.json [--seed N] [--out DIR] [--symmetric]

Commands: ``generate``, ``fit``, ``distance``, ``map``, ``oracle``,
``sinkhorn``, ``benchmark``. Each command reads a JSON object of flat keys
(see ``DEFAULTS`` and the README); keys that are absent take their default,
unknown keys are rejected. ``--seed`` overrides the ``seed`` key.

Every output file starts with a header carrying the command, the SHA-256 of
the fully resolved configuration and the seed: ``#`` comment lines for CSV
files and a leading ``"_header"`` object for JSON files. Re-running with the
same resolved configuration reproduces every file byte for byte, apart from
timing columns.

Exit status: 0 on success, 1 on a runtime or numerical failure, 2 on a usage
or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import potentials as pot
from .conjugate import ConjugateConfig
from .distributions import (
    CANONICAL_A,
    CANONICAL_B,
    GaussianSpec,
    MixtureSpec,
    SampleSet,
    affine_pushforward,
    canonical_mixture,
    load_csv,
    sample_gaussian,
    sample_mixture,
    sample_two_point,
    save_csv,
    spawn_seeds,
)
from .errors import ParseError, ValidationError
from .metrics import moment_match_report, save_moment_csv, transport_map, w2f_squared
from .oracle import Coupling, cost_matrix, exact_w2_assignment, map_error, save_coupling_csv, sinkhorn
from .solver import (
    DecaySchedule,
    TrainConfig,
    fit,
    initial_potential,
    fit_ball_linear_closed_form,
    fit_quadratic_closed_form,
    load_checkpoint,
    save_checkpoint,
    save_training_log,
)

__all__ = ["main", "build_parser", "resolve_config", "run_benchmark", "ConfigError", "DEFAULTS", "BENCHMARK_COLUMNS"]

COMMANDS = ("generate", "fit", "distance", "map", "oracle", "sinkhorn", "benchmark")

_TRAIN = {
    "epochs": 400,
    "step_size": 1e-3,
    "batch_size": 64,
    "eval_every": 50,
    "warm_start": True,
    "search_box": "auto",
    "inner": {},
}

# Smooth later layers keep the inner conjugate problems differentiable, which
# makes each solve a handful of quasi-Newton steps.
BENCHMARK_ICNN = {"class": "icnn", "widths": [64, 64], "activations": ["relu_squared", "softplus"], "eta": 0.5}
BENCHMARK_STEP = {"initial": 0.1, "scale": 20.0, "power": 1.0}

DEFAULTS = {
    "generate": {
        "seed": 0,
        "n": 1000,
        "n_nu": None,
        "mu": {"type": "canonical_mixture"},
        "nu": {"type": "affine", "a": CANONICAL_A.tolist(), "b": CANONICAL_B.tolist()},
        "header": False,
    },
    "fit": {"seed": 0, "mu": "s_mu.csv", "nu": "s_nu.csv", "class": "icnn", **_TRAIN},
    "distance": {
        "seed": 0,
        "mu": "s_mu.csv",
        "nu": "s_nu.csv",
        "class": "quadratic",
        "checkpoint": None,
        "closed_form": None,
        "symmetric": False,
        **_TRAIN,
    },
    "map": {"seed": 0, "nu": "s_nu.csv", "mu": None, "checkpoint": "checkpoint.json", "inner": {}, "search_box": "auto"},
    "oracle": {"seed": 0, "mu": "s_mu.csv", "nu": "s_nu.csv", "coupling": False},
    "sinkhorn": {"seed": 0, "mu": "s_mu.csv", "nu": "s_nu.csv", "epsilon": 0.1, "iters": 200, "coupling": True},
    "benchmark": {
        "seed": 0,
        "n_values": [250, 500, 1000, 2000],
        "seeds": 5,
        "methods": ["restricted_icnn", "restricted_quadratic", "sinkhorn_barycentric"],
        "epsilon": 0.1,
        "sinkhorn_iters": 200,
        "icnn": BENCHMARK_ICNN,
        "passes": 30,
        "step_size": BENCHMARK_STEP,
        "batch_size": 64,
        "inner": {},
    },
}

BENCHMARK_COLUMNS = ("method", "N", "seed", "d", "epsilon_or_class", "map_error", "w2_error", "seconds_per_epoch")
BENCHMARK_METHODS = ("restricted_icnn", "restricted_quadratic", "sinkhorn_barycentric")


class ConfigError(ValidationError):
    """Malformed or inconsistent configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="w2restrict", description="Restricted Wasserstein-2 distances and maps.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON file of flat configuration keys")
    p.add_argument("--seed", type=int, default=None, help="overrides the config's seed")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--symmetric", action="store_true", help="distance: report W2F(mu,nu) + W2F(nu,mu)")
    return p


def resolve_config(command: str, raw: dict, seed: Optional[int] = None, symmetric: bool = False) -> dict:
    """Merge ``raw`` over the command defaults and apply flag overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULTS[command]))
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {', '.join(unknown)}")
    cfg = copy.deepcopy(DEFAULTS[command])
    cfg.update(copy.deepcopy(raw))
    if seed is not None:
        cfg["seed"] = seed
    if symmetric:
        if command != "distance":
            raise ConfigError("--symmetric only applies to the distance command")
        cfg["symmetric"] = True
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {cfg['seed']!r}")
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    text = json.dumps({"command": command, "config": cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


class _Run:
    """Output helper that stamps every file with the run header."""

    def __init__(self, command, cfg, out):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.digest = config_hash(command, cfg)
        os.makedirs(out, exist_ok=True)

    @property
    def comments(self):
        return [f"w2restrict {self.command}", f"config_sha256: {self.digest}", f"seed: {self.cfg['seed']}"]

    @property
    def header(self):
        return {"command": self.command, "config_sha256": self.digest, "seed": self.cfg["seed"], "config": self.cfg}

    def path(self, name):
        return os.path.join(self.out, name)

    def write_json(self, name, body):
        with open(self.path(name), "w") as fh:
            json.dump({"_header": self.header, **body}, fh, indent=2)
            fh.write("\n")

    def write_csv(self, name, columns, rows):
        with open(self.path(name), "w", newline="") as fh:
            for c in self.comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)


def _gaussian(d):
    return GaussianSpec(d["mean"], d["covariance"])


def _distribution(spec):
    kind = spec.get("type") if isinstance(spec, dict) else None
    if kind == "gaussian":
        return _gaussian(spec)
    if kind == "mixture":
        return MixtureSpec(tuple((c["weight"], _gaussian(c)) for c in spec["components"]))
    if kind == "canonical_mixture":
        return canonical_mixture()
    raise ConfigError(f"unknown distribution specification {spec!r}")


def _sample(spec, n, seed):
    if isinstance(spec, dict) and spec.get("type") == "two_point":
        return sample_two_point(spec["v"], spec["alpha"], n, seed)
    dist = _distribution(spec)
    return sample_gaussian(dist, n, seed) if isinstance(dist, GaussianSpec) else sample_mixture(dist, n, seed)


def _inner(cfg):
    if not isinstance(cfg.get("inner"), dict):
        raise ConfigError("'inner' must be an object of conjugate-solver settings")
    try:
        return ConjugateConfig(**cfg["inner"])
    except TypeError as exc:
        raise ConfigError(f"bad inner settings: {exc}") from None


def _step(spec):
    if isinstance(spec, dict):
        try:
            return DecaySchedule(float(spec["initial"]), float(spec.get("scale", 50.0)), float(spec.get("power", 1.0)))
        except KeyError:
            raise ConfigError("a step-size schedule needs 'initial' (and optionally 'scale')") from None
    return spec


AUTO_BOX_PAD = 0.5


def _box(spec, s_mu=None, theta=None):
    """Search box from the config.

    ``"auto"`` resolves to the bounding box of the ``mu`` samples widened by
    half its extent on each side, and only for potentials that are not
    strongly convex (the others need no box).
    """
    if spec is None:
        return None
    if spec == "auto":
        if s_mu is None or theta is None or theta.strong_convexity() > 0:
            return None
        lo, hi = s_mu.points.min(axis=0), s_mu.points.max(axis=0)
        pad = AUTO_BOX_PAD * np.maximum(hi - lo, 1.0)
        return (lo - pad, hi + pad)
    try:
        return (np.asarray(spec[0], dtype=float), np.asarray(spec[1], dtype=float))
    except (TypeError, ValueError, IndexError, KeyError):
        raise ConfigError(f"search_box must be \"auto\", null or [lower, upper], got {spec!r}") from None


def _checkpoint_box(path, theta):
    """The search box stored by ``fit`` (needed for potentials that are not strongly convex)."""
    if theta.strong_convexity() > 0:
        return None
    with open(path) as fh:
        stored = json.load(fh).get("metadata", {}).get("search_box")
    if stored is None:
        raise ConfigError("the checkpoint's potential is not strongly convex; give a search_box")
    return _box(stored)


def _train_config(cfg, s_mu=None, theta=None):
    return TrainConfig(
        epochs=cfg["epochs"],
        step_size=_step(cfg["step_size"]),
        batch_size=cfg["batch_size"],
        inner=_inner(cfg),
        seed=cfg["seed"],
        eval_every=cfg["eval_every"],
        search_box=_box(cfg["search_box"], s_mu, theta),
        warm_start=cfg["warm_start"],
    )


def _class_tag(spec):
    if isinstance(spec, str):
        return spec
    if isinstance(spec, dict) and "class" in spec:
        return spec["class"]
    raise ConfigError(f"'class' must be a tag or an object with a 'class' key, got {spec!r}")


def _load(path):
    if path is None:
        raise ConfigError("a sample file path is required")
    return load_csv(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(run: _Run) -> None:
    cfg = run.cfg
    n = cfg["n"]
    n_nu = n if cfg["n_nu"] is None else cfg["n_nu"]
    seed_mu, seed_nu = spawn_seeds(cfg["seed"], 2)
    s_mu = _sample(cfg["mu"], n, seed_mu)
    nu = cfg["nu"]
    if isinstance(nu, dict) and nu.get("type") == "affine":
        if n_nu != n:
            raise ConfigError("an affine nu is the image of the mu samples, so n_nu must equal n")
        s_nu = affine_pushforward(s_mu, nu["a"], nu["b"])
    else:
        s_nu = _sample(nu, n_nu, seed_nu)
    save_csv(s_mu, run.path("s_mu.csv"), header=cfg["header"], comments=run.comments)
    save_csv(s_nu, run.path("s_nu.csv"), header=cfg["header"], comments=run.comments)
    print(f"wrote {s_mu.count}x{s_mu.dim} s_mu.csv and {s_nu.count}x{s_nu.dim} s_nu.csv to {run.out}")


def cmd_fit(run: _Run) -> None:
    cfg = run.cfg
    _class_tag(cfg["class"])
    s_mu, s_nu = _load(cfg["mu"]), _load(cfg["nu"])
    theta0 = initial_potential(cfg["class"], s_mu.dim, cfg["seed"])
    tc = _train_config(cfg, s_mu, theta0)
    result = fit(theta0, s_mu, s_nu, tc)
    meta = {"header": run.header, "final_objective": result.final_objective}
    if tc.search_box is not None:
        meta["search_box"] = [tc.search_box[0].tolist(), tc.search_box[1].tolist()]
    save_checkpoint(result, run.path("checkpoint.json"), metadata=meta)
    save_training_log(result, run.path("training_log.csv"), comments=run.comments)
    print(f"final objective {result.final_objective:.10g} after {cfg['epochs']} epochs ({result.wall_time_seconds:.1f} s)")


def _direction(cfg, s_mu, s_nu):
    spec = cfg["class"]
    tag = _class_tag(spec)
    opts = spec if isinstance(spec, dict) else {}
    closed = cfg["closed_form"]
    if closed is None:
        closed = tag in ("quadratic", "ball_linear")
    if closed:
        if tag == "quadratic":
            theta = fit_quadratic_closed_form(s_mu, s_nu, opts.get("eps_spd", pot.EPS_SPD)).potential(
                opts.get("eps_spd", pot.EPS_SPD)
            )
        elif tag == "ball_linear":
            radius = opts.get("radius", 1.0)
            theta = pot.BallLinear(fit_ball_linear_closed_form(s_mu, s_nu, radius), radius)
        else:
            raise ConfigError(f"no closed form for the {tag!r} class")
        return w2f_squared(theta, s_mu, s_nu, _inner(cfg), box=_box(cfg["search_box"], s_mu, theta))
    theta0 = initial_potential(spec, s_mu.dim, cfg["seed"])
    tc = _train_config(cfg, s_mu, theta0)
    theta = fit(theta0, s_mu, s_nu, tc).theta_bar
    return w2f_squared(theta, s_mu, s_nu, tc.inner, box=tc.search_box)


def cmd_distance(run: _Run) -> None:
    cfg = run.cfg
    s_mu, s_nu = _load(cfg["mu"]), _load(cfg["nu"])
    if cfg["checkpoint"] is not None:
        if cfg["symmetric"]:
            raise ConfigError("a checkpoint holds one direction only; drop 'checkpoint' for --symmetric")
        theta = load_checkpoint(cfg["checkpoint"])
        box = _checkpoint_box(cfg["checkpoint"], theta) if cfg["search_box"] == "auto" else _box(cfg["search_box"])
        report = w2f_squared(theta, s_mu, s_nu, _inner(cfg), box=box)
        body = report.to_dict()
        value = report.w2f
    elif cfg["symmetric"]:
        fwd = _direction(cfg, s_mu, s_nu)
        bwd = _direction(cfg, s_nu, s_mu)
        value = fwd.w2f + bwd.w2f
        body = {"w2f_symmetric": value, "forward": fwd.to_dict(), "backward": bwd.to_dict()}
    else:
        report = _direction(cfg, s_mu, s_nu)
        body = report.to_dict()
        value = report.w2f
    run.write_json("distance.json", body)
    label = "w2f_symmetric" if cfg["symmetric"] else "w2f"
    print(f"{label} = {value:.12g}")


def cmd_map(run: _Run) -> None:
    cfg = run.cfg
    theta = load_checkpoint(cfg["checkpoint"])
    s_nu = _load(cfg["nu"])
    inner = _inner(cfg)
    box = _checkpoint_box(cfg["checkpoint"], theta) if cfg["search_box"] == "auto" else _box(cfg["search_box"])
    result = transport_map(theta, s_nu, inner, box=box)
    save_csv(result.samples, run.path("pushforward.csv"), comments=run.comments)
    body = {"count": result.samples.count, "nonconverged": result.nonconverged}
    if cfg["mu"] is not None:
        rows = moment_match_report(theta, _load(cfg["mu"]), s_nu, inner, box=box)
        save_moment_csv(rows, run.path("moments.csv"), comments=run.comments)
        body["max_residual"] = max(r.residual for r in rows)
        body["moments"] = [list(r) for r in rows]
    run.write_json("map_report.json", body)
    extra = f", max moment residual {body['max_residual']:.3e}" if "max_residual" in body else ""
    print(f"mapped {result.samples.count} samples ({result.nonconverged} inner solves not converged){extra}")


def cmd_oracle(run: _Run) -> None:
    cfg = run.cfg
    s_mu, s_nu = _load(cfg["mu"]), _load(cfg["nu"])
    res = exact_w2_assignment(s_mu, s_nu)
    run.write_json("oracle.json", {"w2": res.w2, "w2_squared": res.squared, "n": s_mu.count})
    run.write_csv("assignment.csv", ["mu_index", "nu_index"], enumerate(res.permutation.tolist()))
    if cfg["coupling"]:
        plan = Coupling.from_permutation(res.permutation, cost_matrix(s_mu, s_nu))
        save_coupling_csv(plan, run.path("coupling.csv"), comments=run.comments)
    print(f"w2_squared = {res.squared:.12g}")
    print(f"w2 = {res.w2:.12g}")


def cmd_sinkhorn(run: _Run) -> None:
    cfg = run.cfg
    s_mu, s_nu = _load(cfg["mu"]), _load(cfg["nu"])
    plan = sinkhorn(s_mu, s_nu, cfg["epsilon"], cfg["iters"])
    body = {
        "value": plan.value,
        "marginal_violation": plan.marginal_violation,
        "epsilon": plan.epsilon,
        "iterations": plan.iterations,
    }
    if s_mu.count == s_nu.count:
        body["exact_w2_squared"] = exact_w2_assignment(s_mu, s_nu).squared
    run.write_json("sinkhorn.json", body)
    mapped = SampleSet((plan.matrix @ s_nu.points) / plan.matrix.sum(axis=1)[:, None])
    save_csv(mapped, run.path("barycentric_map.csv"), comments=run.comments)
    if cfg["coupling"]:
        save_coupling_csv(plan, run.path("coupling.csv"), comments=run.comments)
    print(f"value = {plan.value:.12g}")
    print(f"marginal_violation = {plan.marginal_violation:.3e}")
    if "exact_w2_squared" in body:
        print(f"exact_w2_squared = {body['exact_w2_squared']:.12g}")


def run_benchmark(cfg: dict, progress=None) -> list:
    """Map and distance errors on the canonical fixture over a sweep of N.

    Returns one row per (method, N, seed) with the columns of
    ``BENCHMARK_COLUMNS``. For the restricted methods an epoch is one pass
    over the data (``ceil(N / batch_size)`` SGD updates); for Sinkhorn it
    is one sweep over both potentials. ``map_error`` compares the estimated
    inverse map at every ``y_i`` with the true ``A^{-1}(y_i - b)``;
    ``w2_error`` is the absolute error of the W2 estimate against the exact
    value, which the known optimal pairing gives directly.
    """
    methods = list(cfg["methods"])
    bad = sorted(set(methods) - set(BENCHMARK_METHODS))
    if bad:
        raise ConfigError(f"unknown benchmark methods: {', '.join(bad)}")
    seeds = cfg["seeds"]
    seed_list = [cfg["seed"] + i for i in range(seeds)] if isinstance(seeds, int) else list(seeds)
    inner = _inner(cfg)
    rows = []
    for n in cfg["n_values"]:
        for seed in seed_list:
            s_mu, s_nu = _canonical(n, seed)
            truth = np.linalg.solve(CANONICAL_A, (s_nu.points - CANONICAL_B).T).T
            diff = s_mu.points - s_nu.points
            w2_true = float(np.sqrt(0.5 * np.einsum("ij,ij->i", diff, diff).mean()))
            for method in methods:
                row = _benchmark_one(method, cfg, s_mu, s_nu, truth, w2_true, seed, inner)
                rows.append(row)
                if progress is not None:
                    progress(row)
    return rows


def _canonical(n, seed):
    s_mu = sample_mixture(canonical_mixture(), n, seed)
    return s_mu, affine_pushforward(s_mu, CANONICAL_A, CANONICAL_B)


def _benchmark_one(method, cfg, s_mu, s_nu, truth, w2_true, seed, inner):
    n, d = s_mu.count, s_mu.dim
    if method == "sinkhorn_barycentric":
        t0 = time.perf_counter()
        plan = sinkhorn(s_nu, s_mu, cfg["epsilon"], cfg["sinkhorn_iters"])
        seconds = time.perf_counter() - t0
        est = (plan.matrix @ s_mu.points) / plan.matrix.sum(axis=1)[:, None]
        w2_est = float(np.sqrt(max(plan.value, 0.0)))
        per_epoch = seconds / cfg["sinkhorn_iters"]
        setting = f"{cfg['epsilon']:g}"
    else:
        spec = cfg["icnn"] if method == "restricted_icnn" else {"class": "quadratic"}
        updates_per_pass = int(np.ceil(n / cfg["batch_size"]))
        tc = TrainConfig(
            epochs=cfg["passes"] * updates_per_pass,
            step_size=_step(cfg["step_size"]),
            batch_size=cfg["batch_size"],
            inner=inner,
            seed=seed,
            eval_every=0,
        )
        result = fit(spec, s_mu, s_nu, tc)
        per_epoch = result.wall_time_seconds / cfg["passes"]
        est = transport_map(result.theta_bar, s_nu, inner).samples.points
        w2_est = w2f_squared(result.theta_bar, s_mu, s_nu, inner).w2f
        setting = _class_tag(spec)
    return {
        "method": method,
        "N": n,
        "seed": seed,
        "d": d,
        "epsilon_or_class": setting,
        "map_error": map_error(est, truth),
        "w2_error": abs(w2_est - w2_true),
        "seconds_per_epoch": per_epoch,
    }


def cmd_benchmark(run: _Run) -> None:
    def show(row):
        print(
            f"{row['method']:>22s} N={row['N']:<5d} seed={row['seed']:<3d} map_error={row['map_error']:.4f} "
            f"w2_error={row['w2_error']:.4f} s/epoch={row['seconds_per_epoch']:.4f}",
            flush=True,
        )

    rows = run_benchmark(run.cfg, progress=show)
    run.write_csv(
        "benchmark.csv",
        BENCHMARK_COLUMNS,
        [
            [r["method"], r["N"], r["seed"], r["d"], r["epsilon_or_class"], f"{r['map_error']:.17g}",
             f"{r['w2_error']:.17g}", f"{r['seconds_per_epoch']:.6g}"]
            for r in rows
        ],
    )


_HANDLERS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "distance": cmd_distance,
    "map": cmd_map,
    "oracle": cmd_oracle,
    "sinkhorn": cmd_sinkhorn,
    "benchmark": cmd_benchmark,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        print(f"error: config file {args.config!r} not found", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config file {args.config!r} is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(args.command, raw, args.seed, args.symmetric)
        _HANDLERS[args.command](_Run(args.command, cfg, args.out))
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime and numerical failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
