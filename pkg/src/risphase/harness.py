"""Setups 1-3, the end-to-end experiment and result files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, mlp
from .channel import ChannelRealization, ClusterConfig, RisGeometry, Scene
from .core import Codebook, achievable_rate, block_group_map, is_feasible
from .learning import (GridSpec, Labels, Policy, Sample, build_dataset, draw_samples, infer_configs,
                       label_samples, nn_dims, policy_rates, train_federated, train_variant)
from .oracle import DEFAULT_BUDGET, exhaustive_joint_batch, no_ris_rate, random_config
from .rng import SPLIT_TAGS, substream

log = logging.getLogger(__name__)

BASELINES = ("exhaustive", "random", "no_ris")
LEARNED = ("pos_cen", "pos_ind", "chan_cen", "chan_ind", "pos_fl", "chan_fl")
APPROACHES = BASELINES + LEARNED

SETUPS = {
    1: dict(d_h=20.0, x1=25.0, y1=25.0, x2=25.0, y2=35.0, wall=False),
    2: dict(d_h=10.0, x1=5.0, y1=27.5, x2=5.0, y2=32.5, wall=False),
    3: dict(d_h=10.0, x1=5.0, y1=27.5, x2=5.0, y2=32.5, wall=True),
}


@dataclass
class SetupSpec:
    setup_id: int | None = 1
    d_h: float = 20.0
    x1: float = 25.0
    y1: float = 25.0
    x2: float = 25.0
    y2: float = 35.0
    wall: bool = False
    num_ris: int = 4
    rows: int = 8
    cols: int = 8
    k0: int = 4
    q: int = 1
    tx_power: float = 1.0
    noise_dbm: float = -100.0
    wall_loss_db: float = 10.0
    carrier_frequency: float = 3.5e9
    pathloss_exponent: float = 2.0
    direct_pathloss_exponent: float = 3.0
    spacing_wavelengths: float = 0.5
    pattern: str = "isotropic"
    pattern_order: float = 0.0
    grid_width: float = 4.0
    grid_center: tuple[float, float, float] | None = None

    @property
    def noise_power(self) -> float:
        return 10.0 ** (self.noise_dbm / 10.0) / 1000.0

    @property
    def nominal_rx(self) -> tuple[float, float, float]:
        return (self.d_h, 30.0, 1.0)

    def ris_positions(self):
        return [(self.d_h - 5.0, 25.0, 2.0), (self.d_h - 5.0, 35.0, 2.0),
                (self.x1, self.y1, 2.0), (self.x2, self.y2, 2.0)][: self.num_ris]


@dataclass
class RunConfig:
    setup: SetupSpec = field(default_factory=SetupSpec)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    hyper: mlp.TrainHyper = field(default_factory=mlp.TrainHyper)
    n_train: int = 5000
    n_test: int = 5000
    seed: int = 1
    nn_preset: str = "compact"
    cen_hidden: tuple[int, ...] | None = None
    ind_hidden: tuple[int, ...] | None = None
    fl_rounds: int = 20
    fl_local_epochs: int = 10
    oracle_budget: int = DEFAULT_BUDGET
    approaches: tuple[str, ...] = APPROACHES


def build_setup(setup_id: int | None = 1, **custom) -> tuple[SetupSpec, Scene]:
    if setup_id is not None:
        if setup_id not in SETUPS:
            raise ValueError(f"unknown setup {setup_id}; choose 1, 2 or 3")
        fields = {**SETUPS[setup_id], **custom}
    else:
        missing = {"d_h", "x1", "y1", "x2", "y2", "wall"} - set(custom)
        if missing:
            raise ValueError(f"custom setup is missing {sorted(missing)}")
        fields = custom
    spec = SetupSpec(setup_id=setup_id, **fields)
    return spec, scene_for(spec)


def _facing(center, tx, rx):
    """Horizontal unit normal pointing from a RIS to the TX-RX line."""
    c, t, r = (np.asarray(v, float)[:2] for v in (center, tx, rx))
    d = r - t
    foot = t + d * ((c - t) @ d) / (d @ d)
    n = foot - c
    if np.linalg.norm(n) < 1e-9:
        raise ValueError(f"RIS at {center} lies on the TX-RX line; orientation undefined")
    n = n / np.linalg.norm(n)
    return (float(n[0]), float(n[1]), 0.0), (float(-n[1]), float(n[0]), 0.0)


def scene_for(spec: SetupSpec) -> Scene:
    tx = (0.0, 30.0, 2.0)
    rx = spec.nominal_rx
    ris = []
    for c in spec.ris_positions():
        normal, axis = _facing(c, tx, rx)
        ris.append((c, RisGeometry(spec.rows, spec.cols, spec.spacing_wavelengths, normal, axis)))
    return Scene(tx, rx, tuple(ris), spec.carrier_frequency,
                 spec.wall_loss_db if spec.wall else 0.0, spec.pathloss_exponent,
                 spec.pattern, spec.pattern_order, spec.direct_pathloss_exponent)


def grid_for(spec: SetupSpec) -> GridSpec:
    return GridSpec(spec.grid_center or spec.nominal_rx, spec.grid_width)


@dataclass
class Metrics:
    rates: dict[str, np.ndarray]
    configs: dict[str, np.ndarray] = field(default_factory=dict)
    curves: dict[str, list] = field(default_factory=dict)

    @property
    def approaches(self):
        return list(self.rates)

    def normalized(self, name: str) -> float:
        """Ratio of mean rates against the exhaustive oracle."""
        return float(np.mean(self.rates[name]) / np.mean(self.rates["exhaustive"]))

    def per_sample_ratio(self, name: str) -> np.ndarray:
        return self.rates[name] / self.rates["exhaustive"]

    def outage_rate(self, name: str, p: float = 0.05) -> float:
        return float(np.quantile(self.rates[name], p, method="inverted_cdf"))


def outage_cdf(samples, thresholds) -> np.ndarray:
    """Empirical P(rate <= t) for every threshold (right-continuous)."""
    s = np.sort(np.asarray(samples, float))
    if s.size == 0:
        raise ValueError("outage CDF needs at least one sample")
    return np.searchsorted(s, np.asarray(thresholds, float), side="right") / s.size


def default_thresholds(metrics: Metrics, n: int = 201) -> np.ndarray:
    allr = np.concatenate(list(metrics.rates.values()))
    return np.linspace(allr.min(), allr.max(), n)


class Experiment:
    """Holds the state of one run so CLI stages can reuse it."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.spec = cfg.setup
        self.scene = scene_for(cfg.setup)
        self.grid = grid_for(cfg.setup)
        self.cb = Codebook(cfg.setup.q)
        gmap = block_group_map(cfg.setup.rows, cfg.setup.cols, cfg.setup.k0)
        self.maps = [gmap] * cfg.setup.num_ris
        self.P = cfg.setup.tx_power
        self.sigma2 = cfg.setup.noise_power
        self.train_samples = self.test_samples = None
        self.train_labels = self.test_labels = None
        self.policies: dict[str, Policy] = {}

    @property
    def k(self) -> int:
        return self.spec.rows * self.spec.cols

    def draw(self):
        c = self.cfg
        self.train_samples = draw_samples(self.scene, c.cluster, self.grid, c.n_train, "train", c.seed)
        self.test_samples = draw_samples(self.scene, c.cluster, self.grid, c.n_test, "test", c.seed)

    def label(self):
        t = time.time()
        args = (self.maps, self.cb, self.P, self.sigma2, self.cfg.oracle_budget)
        self.train_labels = label_samples(self.train_samples, *args)
        self.test_labels = label_samples(self.test_samples, *args)
        log.info("labelled %d + %d samples in %.1fs", len(self.train_samples),
                 len(self.test_samples), time.time() - t)

    def datasets(self, kind: str, split: str = "train"):
        samples = self.train_samples if split == "train" else self.test_samples
        labels = self.train_labels if split == "train" else self.test_labels
        if kind.endswith("_cen"):
            out = [build_dataset(samples, labels, kind, self.cb)]
        else:
            out = [build_dataset(samples, labels, kind, self.cb, m) for m in range(self.spec.num_ris)]
        if split == "test":
            train = self.datasets(kind, "train")
            for d, tr in zip(out, train):
                d.normalization = tr.normalization
        return out

    def dims(self, kind: str):
        hidden = self.cfg.cen_hidden if kind.endswith("_cen") else self.cfg.ind_hidden
        return nn_dims(kind, self.spec.num_ris, self.k, self.spec.k0, hidden, self.cfg.nn_preset)

    def train(self, approach: str) -> Policy:
        t = time.time()
        if approach.endswith("_fl"):
            kind = approach.replace("_fl", "_ind")
            pol = train_federated(self.datasets(kind), self.dims(kind), self.cfg.fl_rounds,
                                  self.cfg.fl_local_epochs, self.cfg.hyper)
        else:
            pol = train_variant(self.datasets(approach), self.dims(approach), self.cfg.hyper)
        log.info("trained %s in %.1fs", approach, time.time() - t)
        self.policies[approach] = pol
        return pol

    def evaluate(self, approaches=None) -> Metrics:
        approaches = approaches or self.cfg.approaches
        samples = self.test_samples
        m_ris, k0 = self.spec.num_ris, self.spec.k0
        rates, configs, curves = {}, {}, {}
        rates["exhaustive"] = self.test_labels.joint_rate
        configs["exhaustive"] = self.test_labels.joint
        for name in approaches:
            if name in ("exhaustive",):
                continue
            if name == "random":
                cfgs = np.array([random_config(m_ris, k0, self.spec.q,
                                               substream(self.cfg.seed, SPLIT_TAGS["eval"], s.index))
                                 for s in samples])
                rates[name] = policy_rates(cfgs, samples, self.maps, self.cb, self.P, self.sigma2)
                configs[name] = cfgs
            elif name == "no_ris":
                rates[name] = np.array([no_ris_rate(s.realization, self.P, self.sigma2) for s in samples])
            elif name in LEARNED:
                pol = self.policies.get(name) or self.train(name)
                cfgs = infer_configs(pol, samples, m_ris, k0)
                rates[name] = policy_rates(cfgs, samples, self.maps, self.cb, self.P, self.sigma2)
                configs[name] = cfgs
                curves[name] = pol.curves
            else:
                raise ValueError(f"unknown approach {name!r}")
        for name, c in configs.items():
            if not is_feasible(c, self.cb):
                raise AssertionError(f"{name} produced an infeasible configuration")
        order = [a for a in APPROACHES if a in rates]
        return Metrics({a: rates[a] for a in order}, configs, curves)


def run_experiment(cfg: RunConfig) -> tuple[Metrics, Experiment]:
    exp = Experiment(cfg)
    exp.draw()
    exp.label()
    for a in cfg.approaches:
        if a in LEARNED:
            exp.train(a)
    return exp.evaluate(), exp


# -- stage files -------------------------------------------------------------

def save_split(path, samples, labels: Labels | None = None):
    """Realizations (and labels, if given) of one split as a compressed npz."""
    arrays = dict(
        index=np.array([s.index for s in samples]),
        rx=np.array([s.rx for s in samples]),
        h=np.array([np.stack(s.realization.h) for s in samples]),
        g=np.array([np.stack(s.realization.g) for s in samples]),
        h0=np.array([s.realization.h0 for s in samples], dtype=complex))
    if labels is not None:
        arrays.update(joint=labels.joint, per_ris=labels.per_ris, joint_rate=labels.joint_rate)
    np.savez_compressed(path, **arrays)


def load_split(path, scene: Scene):
    """Inverse of :func:`save_split`; returns ``(samples, labels or None)``."""
    with np.load(path) as z:
        samples = [Sample(int(i), rx, ChannelRealization(list(h), list(g), complex(h0)),
                          scene.with_rx(rx))
                   for i, rx, h, g, h0 in zip(z["index"], z["rx"], z["h"], z["g"], z["h0"])]
        labels = None
        if "joint" in z:
            labels = Labels(z["joint"], z["per_ris"], z["joint_rate"])
    return samples, labels


# -- config files ------------------------------------------------------------

def _sections(cfg: RunConfig):
    return {"setup": cfg.setup, "cluster": cfg.cluster, "hyper": cfg.hyper}


def _format(v):
    if isinstance(v, (tuple, list)):
        return ",".join(_format(x) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def config_items(cfg: RunConfig) -> list[tuple[str, str]]:
    items = []
    for sec, obj in _sections(cfg).items():
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            items.append((f"{sec}.{f.name}", "none" if v is None else _format(v)))
    for f in dataclasses.fields(cfg):
        if f.name in _sections(cfg):
            continue
        v = getattr(cfg, f.name)
        items.append((f.name, "none" if v is None else _format(v)))
    return items


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_items(cfg))


def _parse_value(text: str, default):
    text = text.strip()
    if text.lower() == "none":
        return None
    if isinstance(default, bool):
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple) or default is None:
        parts = [p for p in text.split(",") if p.strip()]
        out = []
        for p in parts:
            p = p.strip()
            try:
                out.append(int(p))
            except ValueError:
                try:
                    out.append(float(p))
                except ValueError:
                    out.append(p)
        return tuple(out)
    return text


def apply_overrides(cfg: RunConfig, pairs: dict[str, str]) -> RunConfig:
    """Return a copy of ``cfg`` with ``section.field = value`` overrides."""
    secs = {k: dataclasses.asdict(v) for k, v in _sections(cfg).items()}
    top = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg) if f.name not in secs}
    for key, raw in pairs.items():
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in secs or name not in secs[sec]:
                raise KeyError(f"unknown config key {key!r}")
            secs[sec][name] = _parse_value(raw, secs[sec][name])
        else:
            if key not in top or key in ("setup", "cluster", "hyper"):
                raise KeyError(f"unknown config key {key!r}")
            top[key] = _parse_value(raw, top[key])
    setup_fields = secs["setup"]
    if setup_fields.get("grid_center") is not None:
        setup_fields["grid_center"] = tuple(float(v) for v in setup_fields["grid_center"])
    cluster = secs["cluster"]
    for name in ("rays_per_cluster",):
        cluster[name] = tuple(int(v) for v in cluster[name])
    for name in ("azimuth_center_range", "elevation_center_range"):
        cluster[name] = tuple(float(v) for v in cluster[name])
    if cluster["cluster_excess_loss"] is not None:
        cluster["cluster_excess_loss"] = tuple(float(v) for v in cluster["cluster_excess_loss"])
    for name in ("cen_hidden", "ind_hidden"):
        if top[name] is not None:
            top[name] = tuple(int(v) for v in top[name])
    top["approaches"] = tuple(str(a) for a in top["approaches"])
    bad = set(top["approaches"]) - set(APPROACHES)
    if bad:
        raise ValueError(f"unknown approaches {sorted(bad)}")
    return RunConfig(SetupSpec(**setup_fields), ClusterConfig(**cluster),
                     mlp.TrainHyper(**secs["hyper"]), **top)


def parse_config(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    return apply_overrides(base or RunConfig(), parse_config(Path(path).read_text()))


def config_for_setup(setup_id: int, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    spec, _ = build_setup(setup_id)
    keep = {f.name: getattr(base.setup, f.name) for f in dataclasses.fields(SetupSpec)
            if f.name not in SETUPS[1] and f.name != "setup_id"}
    return dataclasses.replace(base, setup=SetupSpec(setup_id=setup_id, **SETUPS[setup_id], **keep))


# -- result files ------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def emit_results(metrics: Metrics, path, cfg: RunConfig | None = None,
                 thresholds=None) -> dict[str, Path]:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    names = metrics.approaches

    files["summary"] = out / "summary.csv"
    with open(files["summary"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["approach", "mean_rate", "normalized_rate", "mean_sample_ratio", "outage_rate_5pct"])
        for a in names:
            w.writerow([a, _fmt(np.mean(metrics.rates[a])), _fmt(metrics.normalized(a)),
                        _fmt(np.mean(metrics.per_sample_ratio(a))), _fmt(metrics.outage_rate(a))])

    files["rates"] = out / "rates.csv"
    with open(files["rates"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", *names])
        for i in range(len(metrics.rates[names[0]])):
            w.writerow([i, *(_fmt(metrics.rates[a][i]) for a in names)])

    thr = default_thresholds(metrics) if thresholds is None else np.asarray(thresholds, float)
    files["cdf"] = out / "cdf.csv"
    with open(files["cdf"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", *names])
        cdfs = {a: outage_cdf(metrics.rates[a], thr) for a in names}
        for j, t in enumerate(thr):
            w.writerow([_fmt(t), *(_fmt(cdfs[a][j]) for a in names)])

    if metrics.curves:
        files["loss"] = out / "loss_curves.csv"
        with open(files["loss"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["approach", "model", "epoch", "train_mse"])
            for a, curves in metrics.curves.items():
                for mi, curve in enumerate(curves):
                    for e, v in enumerate(curve):
                        w.writerow([a, mi, e, _fmt(v)])

    if cfg is not None:
        files["manifest"] = out / "manifest.txt"
        files["manifest"].write_text(
            f"# risphase {__version__}\n" + dump_config(cfg))
    return files


def read_summary(path) -> dict[str, dict[str, float]]:
    with open(Path(path) / "summary.csv") as fh:
        return {row["approach"]: {k: float(v) for k, v in row.items() if k != "approach"}
                for row in csv.DictReader(fh)}


def metrics_from_dir(path) -> Metrics:
    with open(Path(path) / "rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    names = [k for k in rows[0] if k != "sample"]
    return Metrics({a: np.array([float(r[a]) for r in rows]) for a in names})


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))
