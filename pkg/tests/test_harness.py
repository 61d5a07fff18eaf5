import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from risphase import mlp
from risphase.harness import (APPROACHES, Metrics, RunConfig, SetupSpec, apply_overrides,
                              build_setup, config_for_setup, dump_config, emit_results,
                              load_split, metrics_from_dir, outage_cdf, parse_config,
                              read_summary, run_experiment, save_split)


def tiny_config(**top) -> RunConfig:
    base = RunConfig(setup=SetupSpec(rows=2, cols=2, k0=2), hyper=mlp.TrainHyper(epochs=4),
                     n_train=36, n_test=24, fl_rounds=2, fl_local_epochs=2)
    return dataclasses.replace(base, **top)


@pytest.fixture(scope="module")
def tiny_run():
    return run_experiment(tiny_config())


def test_setup1_positions():
    spec, scene = build_setup(1)
    centers = [c for c, _ in scene.ris]
    assert centers[0] == (15.0, 25.0, 2.0)
    assert centers[1] == (15.0, 35.0, 2.0)
    assert centers[2] == (25.0, 25.0, 2.0) and centers[3] == (25.0, 35.0, 2.0)
    assert scene.tx == (0.0, 30.0, 2.0) and scene.rx == (20.0, 30.0, 1.0)
    assert scene.direct_penetration_loss == 0.0


def test_setup2_and_3():
    spec2, scene2 = build_setup(2)
    assert spec2.wall is False
    assert scene2.ris[2][0] == (5.0, 27.5, 2.0)
    assert scene2.ris[3][0] == (5.0, 32.5, 2.0)
    spec3, scene3 = build_setup(3)
    assert spec3.wall and scene3.direct_penetration_loss == 10.0
    assert scene3.ris == scene2.ris


def test_noise_is_minus_100_dbm():
    assert SetupSpec().noise_power == pytest.approx(1e-13, rel=1e-12)


def test_ris_face_the_link():
    # the TX-RX line is y = 30 in every setup
    for sid in (1, 2, 3):
        _, scene = build_setup(sid)
        for c, geom in scene.ris:
            assert np.dot(geom.normal, [0.0, np.sign(30.0 - c[1]), 0.0]) > 0.99
            np.testing.assert_allclose(geom.up, [0, 0, 1], atol=1e-12)


def test_custom_setup():
    spec, scene = build_setup(None, d_h=12.0, x1=3.0, y1=20.0, x2=3.0, y2=40.0, wall=True)
    assert scene.rx == (12.0, 30.0, 1.0) and scene.direct_penetration_loss == 10.0
    with pytest.raises(ValueError, match="missing"):
        build_setup(None, d_h=12.0)
    with pytest.raises(ValueError):
        build_setup(4)


def test_outage_cdf_examples():
    s = [1.0, 2.0, 3.0, 4.0]
    np.testing.assert_array_equal(outage_cdf(s, [0.5, 1.0, 2.5, 4.0, 9.0]), [0, 0.25, 0.5, 1, 1])
    np.testing.assert_array_equal(outage_cdf([2.0] * 5, [1.999, 2.0, 2.001]), [0, 1, 1])
    with pytest.raises(ValueError):
        outage_cdf([], [1.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50),
       st.lists(st.floats(-2e3, 2e3), min_size=1, max_size=30))
def test_outage_cdf_properties(samples, thresholds):
    t = np.sort(thresholds)
    c = outage_cdf(samples, t)
    assert np.all((c >= 0) & (c <= 1))
    assert np.all(np.diff(c) >= 0)


def test_metrics_normalization():
    m = Metrics({"exhaustive": np.array([2.0, 4.0]), "random": np.array([1.0, 4.0])})
    assert m.normalized("exhaustive") == 1.0
    assert m.normalized("random") == pytest.approx(5 / 6)
    np.testing.assert_allclose(m.per_sample_ratio("random"), [0.5, 1.0])
    assert m.outage_rate("random", 0.5) == 1.0


def test_run_experiment_contract(tiny_run):
    metrics, exp = tiny_run
    assert metrics.approaches == list(APPROACHES)
    assert metrics.normalized("exhaustive") == 1.0
    for a in metrics.approaches:
        assert metrics.rates[a].shape == (24,)
        assert np.all(metrics.rates["exhaustive"] >= metrics.rates[a])
        assert metrics.normalized(a) <= 1.0


def test_baselines_need_no_training():
    metrics, exp = run_experiment(tiny_config(approaches=("random", "no_ris")))
    assert set(metrics.approaches) == {"exhaustive", "random", "no_ris"}
    assert exp.policies == {}


def test_run_is_deterministic(tiny_run):
    metrics, _ = tiny_run
    again, _ = run_experiment(tiny_config())
    for a in metrics.approaches:
        np.testing.assert_array_equal(metrics.rates[a], again.rates[a])


def test_emit_results(tiny_run, tmp_path):
    metrics, exp = tiny_run
    a = emit_results(metrics, tmp_path / "a", exp.cfg)
    b = emit_results(metrics, tmp_path / "b", exp.cfg)
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    rows = read_summary(tmp_path / "a")
    assert list(rows) == list(APPROACHES)
    assert (tmp_path / "a" / "summary.csv").read_text().splitlines()[1].split(",")[2] == "1.0"
    back = metrics_from_dir(tmp_path / "a")
    for name in metrics.approaches:
        np.testing.assert_array_equal(back.rates[name], metrics.rates[name])
    header = (tmp_path / "a" / "cdf.csv").read_text().splitlines()[0]
    assert header == "threshold," + ",".join(APPROACHES)


def test_split_roundtrip(tiny_run, tmp_path):
    _, exp = tiny_run
    save_split(tmp_path / "s.npz", exp.test_samples, exp.test_labels)
    samples, labels = load_split(tmp_path / "s.npz", exp.scene)
    for s, t in zip(samples, exp.test_samples):
        assert s.index == t.index and s.scene == t.scene
        np.testing.assert_array_equal(s.rx, t.rx)
        for u, v in zip(s.realization.h + s.realization.g, t.realization.h + t.realization.g):
            np.testing.assert_array_equal(u, v)
        assert s.realization.h0 == t.realization.h0
    np.testing.assert_array_equal(labels.joint, exp.test_labels.joint)
    save_split(tmp_path / "u.npz", exp.test_samples)
    assert load_split(tmp_path / "u.npz", exp.scene)[1] is None


def test_config_roundtrip():
    cfg = tiny_config(cen_hidden=(12, 6), approaches=("random", "pos_cen"), seed=9)
    cfg = dataclasses.replace(cfg, setup=dataclasses.replace(cfg.setup, grid_center=(1.0, 2.0, 3.0)))
    back = apply_overrides(RunConfig(), parse_config(dump_config(cfg)))
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


def test_config_rejects_unknown_keys():
    with pytest.raises(KeyError):
        apply_overrides(RunConfig(), {"hyper.learning_rat": "0.1"})
    with pytest.raises(KeyError):
        apply_overrides(RunConfig(), {"bogus": "1"})
    with pytest.raises(ValueError):
        apply_overrides(RunConfig(), {"approaches": "random,magic"})
    with pytest.raises(ValueError):
        parse_config("no equals sign here")


def test_config_for_setup_keeps_other_fields():
    base = tiny_config(seed=4)
    cfg = config_for_setup(3, base)
    assert cfg.setup.wall and cfg.setup.d_h == 10.0 and cfg.setup.rows == 2 and cfg.seed == 4
