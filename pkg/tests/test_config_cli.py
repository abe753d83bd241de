import csv
import json
import math

import pytest

from cqednet.cli import main
from cqednet.config import ConfigError, ExperimentConfig, load_config
from cqednet.harness import boundary_search, run_point

FAST = ["--shots", "300", "--distances", "3", "--seed", "4"]


def test_defaults_and_overrides():
    cfg = ExperimentConfig()
    assert cfg.decoder.alpha == 10.0 and cfg.run.structure == "n"
    cfg2 = cfg.with_overrides(run={"shots": 50, "seed": None})
    assert cfg2.run.shots == 50 and cfg2.run.seed == cfg.run.seed


def test_toml_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[cavity]\ng = 20.0\nT2 = "inf"\n[run]\ndistances = [3, 5]\n[decoder]\nkind = "uniform"\n')
    cfg = load_config(p)
    assert cfg.cavity.g == 20.0 and math.isinf(cfg.cavity.T2) and cfg.run.distances == (3, 5)


@pytest.mark.parametrize(
    "text",
    [
        "[run]\nshots = 0\n",
        "[run]\ndistances = []\n",
        "[decoder]\nalpha = 0.5\n",
        "[nonsense]\nx = 1\n",
        "[run]\nbogus = 1\n",
        "[run]\nshots = 1.5\n",
        "[campaign]\nd_low = 3\nd_high = 7\n",
        "not toml [",
    ],
)
def test_bad_configs(tmp_path, text):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["simulate", "--bogus"]) == 2
    assert main([]) == 2
    p = tmp_path / "bad.toml"
    p.write_text("[run]\ndistances = []\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_runtime_error_exit_1(tmp_path, monkeypatch):
    import cqednet.cli as cli

    def boom(cfg):
        raise RuntimeError("model failure")

    monkeypatch.setattr(cli, "run_point", boom)
    assert main(["simulate", "--out", str(tmp_path)] + FAST) == 1


def test_physics_and_layout(tmp_path, capsys):
    assert main(["physics", "--distances", "3", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "physics.txt").read_text()
    assert text.startswith("g = 50.12\n")
    assert main(["layout", "--structure", "d", "--distances", "3,5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "layout_d5_d.json").read_text())
    assert doc["d"] == 5 and len(doc["schedule"]) > 0


def test_simulate_is_byte_identical_and_replayable(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--out", str(a)] + FAST) == 0
    assert main(["simulate", "--out", str(b)] + FAST) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert main(["simulate", "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    assert (a / "results.csv").read_bytes() == (c / "results.csv").read_bytes()
    raw = (a / "results.csv").read_bytes()
    assert b"\r" not in raw and b"np.float64" not in raw
    rows = list(csv.DictReader((a / "results.csv").open()))
    assert rows[0]["failures"] == "0" or int(rows[0]["failures"]) >= 0
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 4 and "results.csv" in man["outputs"] and man["channel_hashes"]


def test_thread_count_does_not_change_results(tmp_path):
    cfg = ExperimentConfig().with_overrides(
        cavity={"g": 8.0}, run={"shots": 2100, "distances": (3,), "seed": 2}
    )
    one = run_point(cfg)
    two = run_point(cfg.with_overrides(run={"threads": 2}))
    assert one == two


def test_zero_noise_point_is_error_free():
    cfg = ExperimentConfig().with_overrides(
        run={"shots": 1000, "distances": (3,), "synthetic_loss": 0.0, "synthetic_infidelity": 0.0}
    )
    assert run_point(cfg)[0]["failures"] == 0


def test_noise_free_boundary_sits_at_grid_minimum():
    cfg = ExperimentConfig().with_overrides(
        run={"shots": 200, "synthetic_loss": 0.0, "synthetic_infidelity": 0.0}
    )
    res = boundary_search(cfg, 0.01, "uniform")
    assert res.g_star == cfg.campaign.g_min and len(res.trace) == 1


def test_calibrate_alpha_cli(tmp_path, capsys):
    args = ["calibrate-alpha", "--g", "8", "--out", str(tmp_path)] + FAST
    assert main(args) == 0
    rows = list(csv.DictReader((tmp_path / "alpha.csv").open()))
    assert [float(r["alpha"]) for r in rows] == [2.0, 5.0, 10.0, 20.0]
    assert "best_alpha" in json.loads((tmp_path / "manifest.json").read_text())


def test_saturated_probe_counts_as_above_threshold():
    from cqednet.frame_simulator import rate_from_counts
    from cqednet.harness import _below_threshold

    # far above threshold: per-cycle p_L(5) < p_L(3) only because both saturate
    low, high = rate_from_counts(6100, 10000, 3), rate_from_counts(7450, 10000, 5)
    assert high.per_cycle < low.per_cycle
    assert _below_threshold(low, high) == (False, True)
    assert _below_threshold(rate_from_counts(300, 10000, 3), rate_from_counts(30, 10000, 5)) == (True, True)
