import json
import subprocess
import sys

import numpy as np
import pytest

from w2restrict.cli import BENCHMARK_COLUMNS, main, resolve_config
from w2restrict.distributions import CANONICAL_A, CANONICAL_B, load_csv
from w2restrict.errors import ValidationError


def write_config(tmp_path, name, body):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(body))
    return str(path)


def run(tmp_path, command, body, out="out", extra=()):
    cfg = write_config(tmp_path, command, body)
    return main([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


@pytest.fixture
def samples(tmp_path):
    assert run(tmp_path, "generate", {"n": 60}, out="data") == 0
    return str(tmp_path / "data" / "s_mu.csv"), str(tmp_path / "data" / "s_nu.csv")


def test_generate_is_reproducible_and_stamped(tmp_path):
    assert run(tmp_path, "generate", {"n": 50}, out="a") == 0
    assert run(tmp_path, "generate", {"n": 50}, out="b") == 0
    for name in ("s_mu.csv", "s_nu.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "s_mu.csv").read_text().splitlines()
    assert lines[0] == "# w2restrict generate" and lines[1].startswith("# config_sha256: ") and lines[2] == "# seed: 0"
    s_mu, s_nu = load_csv(tmp_path / "a" / "s_mu.csv"), load_csv(tmp_path / "a" / "s_nu.csv")
    assert np.allclose(s_nu.points, s_mu.points @ CANONICAL_A.T + CANONICAL_B)
    assert run(tmp_path, "generate", {"n": 50}, out="c", extra=("--seed", "1")) == 0
    assert (tmp_path / "c" / "s_mu.csv").read_bytes() != (tmp_path / "a" / "s_mu.csv").read_bytes()


def test_generate_other_distributions(tmp_path):
    body = {
        "n": 20,
        "n_nu": 30,
        "mu": {"type": "gaussian", "mean": [0.0], "covariance": [[1.0]]},
        "nu": {"type": "two_point", "v": 2.0, "alpha": 0.3},
        "header": True,
    }
    assert run(tmp_path, "generate", body) == 0
    assert load_csv(tmp_path / "out" / "s_nu.csv").count == 30


def test_oracle_and_sinkhorn(tmp_path, samples, capsys):
    mu, nu = samples
    assert run(tmp_path, "oracle", {"mu": mu, "nu": nu, "coupling": True}) == 0
    body = json.loads((tmp_path / "out" / "oracle.json").read_text())
    assert body["_header"]["command"] == "oracle"
    x, y = load_csv(mu).points, load_csv(nu).points
    # the fixture pairs sample i with sample i, and that pairing is optimal
    assert body["w2_squared"] == pytest.approx(0.5 * np.mean(np.sum((x - y) ** 2, axis=1)), rel=1e-9)
    assert "w2_squared = " in capsys.readouterr().out
    assert run(tmp_path, "sinkhorn", {"mu": mu, "nu": nu, "epsilon": 0.5, "iters": 100}) == 0
    sk = json.loads((tmp_path / "out" / "sinkhorn.json").read_text())
    assert sk["value"] >= sk["exact_w2_squared"] - 1e-9
    assert load_csv(tmp_path / "out" / "barycentric_map.csv").count == 60


def test_distance_closed_form_and_symmetric(tmp_path, samples, capsys):
    mu, nu = samples
    assert run(tmp_path, "distance", {"mu": mu, "nu": nu}) == 0
    one = json.loads((tmp_path / "out" / "distance.json").read_text())
    assert one["w2f_squared"] >= 0
    assert run(tmp_path, "distance", {"mu": mu, "nu": nu}, extra=("--symmetric",)) == 0
    both = json.loads((tmp_path / "out" / "distance.json").read_text())
    assert both["forward"]["w2f"] == pytest.approx(one["w2f"])
    assert both["w2f_symmetric"] == pytest.approx(both["forward"]["w2f"] + both["backward"]["w2f"])
    assert "w2f_symmetric = " in capsys.readouterr().out


def test_fit_then_map_and_distance(tmp_path, samples):
    mu, nu = samples
    body = {"mu": mu, "nu": nu, "class": "quadratic", "epochs": 50, "step_size": 0.05, "eval_every": 25}
    assert run(tmp_path, "fit", body) == 0
    ck = str(tmp_path / "out" / "checkpoint.json")
    log = (tmp_path / "out" / "training_log.csv").read_text().splitlines()
    assert log[3] == "epoch,objective,grad_norm,seconds" and len(log) == 6
    assert run(tmp_path, "map", {"nu": nu, "mu": mu, "checkpoint": ck}, out="m") == 0
    report = json.loads((tmp_path / "m" / "map_report.json").read_text())
    assert report["nonconverged"] == 0 and report["count"] == 60
    assert (tmp_path / "m" / "moments.csv").exists()
    assert run(tmp_path, "distance", {"mu": mu, "nu": nu, "checkpoint": ck}, out="d") == 0


def test_network_fit_stores_search_box(tmp_path, samples):
    mu, nu = samples
    body = {"mu": mu, "nu": nu, "class": {"class": "icnn", "widths": [8]}, "epochs": 2, "step_size": 0.01}
    assert run(tmp_path, "fit", body) == 0
    ck = tmp_path / "out" / "checkpoint.json"
    box = json.loads(ck.read_text())["metadata"]["search_box"]
    x = load_csv(mu).points
    assert np.all(np.array(box[0]) < x.min(axis=0)) and np.all(np.array(box[1]) > x.max(axis=0))
    assert run(tmp_path, "map", {"nu": nu, "checkpoint": str(ck)}, out="m") == 0


def test_step_schedule_from_config(tmp_path, samples):
    mu, nu = samples
    body = {"mu": mu, "nu": nu, "class": "quadratic", "epochs": 5, "step_size": {"initial": 0.1, "scale": 2}}
    assert run(tmp_path, "fit", body) == 0


def test_small_benchmark(tmp_path):
    body = {"n_values": [40, 80], "seeds": 1, "passes": 2, "methods": ["restricted_quadratic", "sinkhorn_barycentric"]}
    assert run(tmp_path, "benchmark", body) == 0
    lines = (tmp_path / "out" / "benchmark.csv").read_text().splitlines()
    body_lines = [ln for ln in lines if not ln.startswith("#")]
    assert body_lines[0] == ",".join(BENCHMARK_COLUMNS)
    assert len(body_lines) == 1 + 4


def test_resolve_config_rejects_unknown_keys():
    with pytest.raises(ValidationError):
        resolve_config("oracle", {"bogus": 1})
    assert resolve_config("oracle", {}, seed=7)["seed"] == 7


def test_exit_codes(tmp_path):
    assert main(["oracle", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["oracle", "--config", str(bad)]) == 2
    assert run(tmp_path, "oracle", {"bogus": True}) == 2
    assert main(["teleport", "--config", str(bad)]) == 2
    broken = tmp_path / "broken.csv"
    broken.write_text("1,2\n3\n")
    assert run(tmp_path, "oracle", {"mu": str(broken), "nu": str(broken)}) == 1
    unequal = tmp_path / "unequal.csv"
    unequal.write_text("1,2\n")
    assert run(tmp_path, "oracle", {"mu": str(broken).replace("broken", "unequal"), "nu": str(unequal)}) == 0


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "w2restrict.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "benchmark" in out.stdout
