import json
import math

import numpy as np
import pytest
from scipy import stats

from gridmh.cli import EXIT_RUNTIME, EXIT_VALIDATION, main
from gridmh.config import bundled_config, parse_config
from gridmh.errors import ConfigError
from gridmh.precompute import file_checksum, load

REGULAR_TOY = """
[experiment]
seed = 4

[model]
kind = toy_gaussian
data = stats -2.0

[prior]
spec = gamma 1 1

[proposal]
kind = log_scale
scale = 0.5

[grid]
type = regular
start = 0.1
stop = 2.1
eps = 0.1

[precompute]
n = {n}

[chain]
kind = precomp
estimator = fp
iters = {iters}
"""


def write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def toy_cfg(tmp_path, n=10, iters=200):
    return write(tmp_path, REGULAR_TOY.format(n=n, iters=iters))


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[grid]\nepsilon = 0.1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[grids]\neps = 0.1\n")


@pytest.mark.parametrize("text", [
    "[grid]\neps = -1\n",
    "[grid]\neps = abc\n",
    "[chain]\nkind = gibbs\n",
    "[model]\nkind = ising 0 3\n",
    "[prior]\nspec = beta 1 1\n",
    "[model]\nkind = toy_gaussian\ndata = stats 1 2\n",
    "[proposal]\nkind = log_scale\nscale = grid\n",
])
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_bundled_configs_parse():
    for name in ("toy", "table1", "example1", "prop1", "prop2", "tv_toy", "ising_desk", "karate"):
        cfg = parse_config(bundled_config(name))
        assert cfg.seed >= 0
    with pytest.raises(ConfigError):
        bundled_config("nope")


def test_overrides_mark_explicit():
    cfg = parse_config(bundled_config("toy")).with_overrides(chain__iters=7)
    assert cfg.get("chain", "iters") == 7 and cfg.is_set("chain", "iters")
    with pytest.raises(ConfigError):
        cfg.with_overrides(chain__bogus=1)


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "[grid]\nepsilon = 1\n")
    assert main(["grid", "--config", bad]) == EXIT_VALIDATION
    assert "unknown key" in capsys.readouterr().err
    assert main(["grid", "--config", str(tmp_path / "missing.ini")]) == EXIT_VALIDATION
    assert main(["run", "--config", toy_cfg(tmp_path), "--chain", "bogus"]) == EXIT_VALIDATION
    assert main(["study", "--config", toy_cfg(tmp_path)]) == EXIT_VALIDATION


@pytest.mark.invariant
def test_grid_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["grid", "--config", "toy", "--out", str(a)]) == 0
    assert main(["grid", "--config", "toy", "--out", str(b), "--threads", "2"]) == 0
    assert (a / "grid.txt").read_bytes() == (b / "grid.txt").read_bytes()
    # central 99% posterior interval, Gamma(3/2, rate 3)
    lo, hi = stats.gamma(1.5, scale=1 / 3).ppf([0.005, 0.995])
    pts = load(a / "grid.txt").grid.points[:, 0]
    assert pts.min() <= lo and pts.max() >= hi


def test_max_steps_zero_gives_mode_only(tmp_path, capsys):
    text = bundled_config("toy").replace("max_steps = 150", "max_steps = 0")
    assert main(["grid", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 0
    assert "M = 1 " in capsys.readouterr().out
    assert load(tmp_path / "grid.txt").M == 1


@pytest.mark.invariant
def test_precompute_counts_and_checksum(tmp_path, capsys):
    cfg = toy_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["grid", "--config", cfg, "--out", str(out)]) == 0
    assert main(["precompute", "--config", cfg, "--out", str(out)]) == 0
    assert "statistic rows = 210" in capsys.readouterr().out
    first = file_checksum(out / "precomp.txt")
    pc = load(out / "precomp.txt")
    assert pc.M == 21 and pc.n == 10 and pc.stats.shape == (21, 10, 1)
    assert main(["precompute", "--config", cfg, "--out", str(out), "--threads", "3"]) == 0
    assert file_checksum(out / "precomp.txt") == first


def test_precompute_toy_means(tmp_path):
    cfg = toy_cfg(tmp_path, n=10_000)
    assert main(["grid", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["precompute", "--config", cfg, "--out", str(tmp_path)]) == 0
    pc = load(tmp_path / "precomp.txt")
    theta = pc.grid.points[:, 0]
    s = pc.stats[:, :, 0]
    se = s.std(axis=1, ddof=1) / math.sqrt(pc.n)
    assert np.all(np.abs(s.mean(axis=1) + 1 / (2 * theta)) < 3.5 * se)


@pytest.mark.invariant
def test_run_precomp_full_path(tmp_path, capsys):
    cfg = toy_cfg(tmp_path, iters=10_000)
    assert main(["grid", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["precompute", "--config", cfg, "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert 0.1 < manifest["acceptance_rate"][0] < 0.9
    assert manifest["seed"] == 4 and manifest["config"].strip().startswith("[experiment]")
    assert manifest["precomp_checksum"] == file_checksum(tmp_path / "precomp.txt")
    rows = (tmp_path / "chain_000.csv").read_text().splitlines()
    assert len(rows) == 10_002


def test_run_refuses_mismatched_model(tmp_path, capsys):
    cfg = toy_cfg(tmp_path)
    assert main(["grid", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["precompute", "--config", cfg, "--out", str(tmp_path)]) == 0
    other = write(tmp_path, "[model]\nkind = erdos_renyi 4\ndata = stats 3\n[proposal]\nscale = 0.5\n", "er.ini")
    assert main(["run", "--config", other, "--out", str(tmp_path), "--chain", "precomp"]) == EXIT_VALIDATION
    assert "config says" in capsys.readouterr().err


def test_mh_on_graph_model_fails(tmp_path, capsys):
    cfg = write(tmp_path, "[model]\nkind = ergm_edges_triangles 34\ndata = karate\n"
                          "[proposal]\nscale = 0.1\n[chain]\ninit = -2 0.3\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path), "--chain", "mh", "--iters", "5"]) == EXIT_RUNTIME
    assert "normalizing constant" in capsys.readouterr().err


def test_noisy_and_exchange_write_identical_traces(tmp_path):
    cfg = toy_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a), "--chain", "exchange", "--chains", "2"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--chain", "noisy", "--chains", "2"]) == 0
    for name in ("chain_000.csv", "chain_001.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_study_table1_layout(tmp_path):
    text = bundled_config("table1").replace("replicates = 10000", "replicates = 200")
    assert main(["study", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert len(lines) == 4
    assert [ln.split(",")[0] for ln in lines[1:]] == ["FP", "DP", "OP"]
