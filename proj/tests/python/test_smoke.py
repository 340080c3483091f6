import importlib.util
import json
import math
import pathlib

import numpy as np
import pytest

import uwer

ROOT = pathlib.Path(__file__).resolve().parents[2]


def load_reference_rng():
    spec = importlib.util.spec_from_file_location("rng_golden", ROOT / "tools" / "rng_golden.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


TINY = {
    "n_tx": 1,
    "n_rb": 2,
    "n_rx": 1,
    "n_paths": 3,
    "lookback": 4,
    "n_samples": 240,
    "env_speeds_kmh": [30.0, 90.0],
    "seed": 5,
}


def test_version():
    assert uwer.__version__ == "0.1.0"


def test_rng_matches_reference():
    ref = load_reference_rng()
    gen = ref.Xoshiro(42)
    rng = uwer.Rng(42)
    for _ in range(100):
        assert rng.next_u64() == gen.next()
    assert uwer.Rng.derive_seed(7, "eval") == ref.derive_seed(7, "eval")


def test_bessel_and_rho():
    assert uwer.bessel_j0(0.0) == 1.0
    assert uwer.bessel_j0(math.pi) == pytest.approx(-0.30424217764409386, abs=1e-12)
    assert uwer.jakes_rho(277.8, 1e-3) == pytest.approx(0.37166089700280975, abs=1e-12)


def test_uw_loss_hand_value():
    loss, grad = uwer.uw_loss([0.0], [1.0], [2.0], 1.0)
    assert loss == pytest.approx(2 * math.exp(-1) + 0.5, abs=1e-12)
    assert grad[0] == pytest.approx(-2 * math.exp(-1), abs=1e-12)
    with pytest.raises(ValueError):
        uwer.uw_loss([0.0, 1.0], [1.0], [2.0, 0.0])


def test_default_configs():
    c = uwer.default_channel_config()
    assert c["env_speeds_kmh"] == [30.0, 60.0, 90.0, 120.0]
    t = uwer.default_train_config()
    assert t["capacity"] == 3000 and t["k_passes"] == 8


def test_config_errors_surface():
    with pytest.raises(uwer.ConfigError):
        uwer.generate_dataset({"n_samples": 0})
    with pytest.raises(uwer.ConfigError):
        uwer.generate_dataset({"no_such_field": 1})


def test_dataset_views():
    ds = uwer.generate_dataset(TINY)
    assert ds.window_count == 236
    assert ds.frame_size == 4 and ds.lookback == 4 and ds.env_count == 2
    x, y = ds.x(10), ds.y(10)
    assert x.shape == (4, 4) and x.dtype == np.float32
    # window 11 starts one frame later and its last frame is window 10's target
    np.testing.assert_array_equal(ds.x(11)[-1], y)
    np.testing.assert_array_equal(ds.x(11)[:-1], x[1:])
    ids = ds.env_ids()
    assert ids[0] == 0 and ids[-1] == 1


def test_run_stream_is_deterministic():
    ds = uwer.generate_dataset(TINY)
    cfg = {"hidden": 4, "n_layers": 1, "epochs_per_task": 1, "batch": 8, "k_passes": 2, "capacity": 20}
    a = uwer.run_stream(ds, cfg, seed=1)
    b = uwer.run_stream(ds, cfg, seed=1)
    assert a["env_checksums"] == b["env_checksums"]
    assert len(a["accuracy"]) == 2 and len(a["accuracy"][0]) == 2
    ids = ds.env_ids()
    per_env = [ids.count(e) for e in range(ds.env_count)]
    assert a["updates"] == sum(int(n * 0.9) // 8 for n in per_env)


def test_cli_roundtrip(tmp_path):
    out = tmp_path / "data"
    args = ["gen", "--out", out, "--n-tx", "1", "--n-rb", "2", "--n-rx", "1", "--n-paths", "3",
            "--lookback", "4", "--n-samples", "240", "--speeds", "30,90"]
    assert uwer.main(args) == 0
    ds = uwer.load_dataset(out / "dataset.uwer")
    assert ds.window_count == 236
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert uwer.main(["train", "--dataset", tmp_path / "missing.uwer", "--out", tmp_path / "t"]) == 2
