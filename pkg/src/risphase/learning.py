"""Datasets, feature/label encoders, CEN/IND/FL training and inference.

Encoder kinds
-------------
``pos_cen``   relative positions for every element of every RIS, plus RX-TX
``pos_ind``   the same restricted to one RIS
``chan_cen``  (log10 |c|, arg(c)/pi) for every h and g coefficient, plus h0
``chan_ind``  the same restricted to one RIS, still including h0

Labels map codebook index 0 (phase 0) to +1 and index 1 (phase pi) to -1;
decoding thresholds at zero with 0 -> index 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .channel import ChannelRealization, ClusterConfig, Scene, sample_realization
from .core import Codebook, achievable_rate
from .oracle import DEFAULT_BUDGET, exhaustive_joint_batch, exhaustive_per_ris
from .rng import SPLIT_TAGS, substream

KINDS = ("pos_cen", "pos_ind", "chan_cen", "chan_ind")
LOG_FLOOR = -20.0
DATASET_MAGIC = "RISDATA v1"


class NormalizationMissing(RuntimeError):
    pass


def feature_width(kind: str, num_ris: int, k: int) -> int:
    return {
        "pos_cen": 3 * (2 * num_ris * k + 1),
        "pos_ind": 3 * (2 * k + 1),
        "chan_cen": 2 * (2 * num_ris * k) + 2,
        "chan_ind": 2 * (2 * k) + 2,
    }[kind]


def _check_variant(kind: str, m):
    if kind not in KINDS:
        raise ValueError(f"unknown encoder kind {kind!r}")
    if kind.endswith("_ind") and m is None:
        raise ValueError(f"{kind} needs a RIS index")
    if kind.endswith("_cen") and m is not None:
        raise ValueError(f"{kind} encodes all RISs; do not pass a RIS index")


def encode_position(scene: Scene, rx, kind: str, m: int | None = None) -> np.ndarray:
    _check_variant(kind, m)
    if not kind.startswith("pos"):
        raise ValueError("encode_position handles pos_* kinds only")
    tx = np.asarray(scene.tx, float)
    rx = np.asarray(rx, float)
    which = range(scene.num_ris) if m is None else [m]
    parts = []
    for i in which:
        center, geom = scene.ris[i]
        elems = geom.element_positions(center, scene.wavelength)
        parts.append(np.hstack([tx - elems, rx - elems]).reshape(-1))
    parts.append(rx - tx)
    return np.concatenate(parts)


def _coeff_pairs(c) -> np.ndarray:
    c = np.asarray(c, complex)
    mag = np.abs(c)
    with np.errstate(divide="ignore"):
        logmag = np.where(mag > 0, np.log10(np.where(mag > 0, mag, 1.0)), LOG_FLOOR)
    logmag = np.maximum(logmag, LOG_FLOOR)
    return np.stack([logmag, np.angle(c) / np.pi], axis=-1).reshape(-1)


def encode_channel(r: ChannelRealization, kind: str, m: int | None = None) -> np.ndarray:
    _check_variant(kind, m)
    if not kind.startswith("chan"):
        raise ValueError("encode_channel handles chan_* kinds only")
    which = range(r.num_ris) if m is None else [m]
    parts = [_coeff_pairs(np.concatenate([r.h[i], r.g[i]])) for i in which]
    parts.append(_coeff_pairs([r.h0]))
    return np.concatenate(parts)


def encode_label(cfg, cb: Codebook) -> np.ndarray:
    if cb.q != 1:
        raise NotImplementedError("label encoding is defined for one-bit phases only")
    idx = np.asarray(cfg, dtype=int).reshape(-1)
    if np.any((idx < 0) | (idx > 1)):
        raise ValueError("codebook index out of range")
    return 1.0 - 2.0 * idx


def decode_output(y, width: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != width:
        raise ValueError(f"output width {y.shape[-1]} != expected {width}")
    return (y < 0).astype(int)


@dataclass
class Normalization:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalization":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # constant features are centred but not rescaled
        std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
        return cls(mean, std)

    def apply(self, x):
        return (np.asarray(x, float) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, float) * self.std + self.mean


@dataclass
class Dataset:
    kind: str
    m: int | None
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    index: np.ndarray
    rx: np.ndarray
    normalization: Normalization | None = None

    def __len__(self):
        return self.x.shape[0]

    @property
    def normalized_x(self) -> np.ndarray:
        if self.normalization is None:
            raise NormalizationMissing("dataset has no normalization")
        return self.normalization.apply(self.x)


@dataclass
class Sample:
    index: int
    rx: np.ndarray
    realization: ChannelRealization
    scene: Scene


@dataclass
class GridSpec:
    """RX placement: a 3x3 training grid and a uniform test square."""

    center: tuple[float, float, float]
    width: float = 4.0
    points_per_side: int = 3

    def grid_points(self) -> np.ndarray:
        off = np.linspace(-self.width / 2, self.width / 2, self.points_per_side)
        cx, cy, cz = self.center
        return np.array([(cx + dx, cy + dy, cz) for dx in off for dy in off])

    def position(self, mode: str, i: int, rng: np.random.Generator) -> np.ndarray:
        if mode == "train":
            pts = self.grid_points()
            return pts[i % len(pts)]
        if mode == "test":
            d = rng.uniform(-self.width / 2, self.width / 2, size=2)
            return np.asarray(self.center, float) + np.array([d[0], d[1], 0.0])
        raise ValueError(f"unknown placement mode {mode!r}")


def draw_samples(scene: Scene, cc: ClusterConfig, grid: GridSpec, n: int, mode: str,
                 seed: int, start: int = 0) -> list[Sample]:
    """Samples ``start..start+n-1`` of a split; each uses its own substream."""
    if n < 1:
        raise ValueError("need at least one sample")
    out = []
    for i in range(start, start + n):
        rng = substream(seed, SPLIT_TAGS[mode], i)
        rx = grid.position(mode, i, rng)
        sc = scene.with_rx(rx)
        out.append(Sample(i, rx, sample_realization(sc, cc, rng), sc))
    return out


@dataclass
class Labels:
    joint: np.ndarray            # (n, M, K0) joint optimum with h0
    per_ris: np.ndarray          # (n, M, K0) per-RIS optima without h0
    joint_rate: np.ndarray       # (n,)


def label_samples(samples, maps, cb: Codebook, P: float, sigma2: float,
                  budget: int = DEFAULT_BUDGET, batch: int = 64) -> Labels:
    real = [s.realization for s in samples]
    joint, rates = [], []
    for start in range(0, len(real), batch):
        for res in exhaustive_joint_batch(real[start:start + batch], maps, cb, P, sigma2, budget):
            joint.append(res.config)
            rates.append(res.rate)
    per = [np.vstack([exhaustive_per_ris(r.h[m], r.g[m], maps[m], cb, P, sigma2, budget).config
                      for m in range(len(maps))]) for r in real]
    return Labels(np.array(joint), np.array(per), np.array(rates))


def build_dataset(samples, labels: Labels, kind: str, cb: Codebook, m: int | None = None,
                  normalization: Normalization | None = None) -> Dataset:
    """Encode features and targets; fit a normalization unless one is given."""
    _check_variant(kind, m)
    if kind.startswith("pos"):
        x = np.array([encode_position(s.scene, s.rx, kind, m) for s in samples])
    else:
        x = np.array([encode_channel(s.realization, kind, m) for s in samples])
    if kind.endswith("_cen"):
        lab = labels.joint.reshape(len(samples), -1)
    else:
        lab = labels.per_ris[:, m, :]
    y = np.array([encode_label(c, cb) for c in lab])
    norm = normalization if normalization is not None else Normalization.fit(x)
    return Dataset(kind, m, x, y, lab.astype(int), np.array([s.index for s in samples]),
                   np.array([s.rx for s in samples]), norm)


def generate_dataset(scene: Scene, cc: ClusterConfig, grid: GridSpec, n: int, kind: str,
                     seed: int, maps, cb: Codebook, P: float, sigma2: float,
                     mode: str = "train", m: int | None = None,
                     budget: int = DEFAULT_BUDGET) -> Dataset:
    samples = draw_samples(scene, cc, grid, n, mode, seed)
    labels = label_samples(samples, maps, cb, P, sigma2, budget)
    return build_dataset(samples, labels, kind, cb, m)


# -- dataset files -----------------------------------------------------------

def write_dataset(ds: Dataset, path):
    header = {"format": DATASET_MAGIC, "kind": ds.kind, "m": ds.m,
              "feature_width": int(ds.x.shape[1]), "target_width": int(ds.y.shape[1]),
              "mean": ds.normalization.mean.tolist() if ds.normalization else None,
              "std": ds.normalization.std.tolist() if ds.normalization else None}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(len(ds)):
            rec = {"i": int(ds.index[i]), "rx": [round(float(v), 3) for v in ds.rx[i]],
                   "x": ds.x[i].tolist(), "y": ds.y[i].tolist(),
                   "labels": [int(v) for v in ds.labels[i]]}
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DATASET_MAGIC:
            raise ValueError(f"{path} is not a {DATASET_MAGIC} file")
        recs = [json.loads(line) for line in fh if line.strip()]
    norm = None
    if header["mean"] is not None:
        norm = Normalization(np.array(header["mean"]), np.array(header["std"]))
    x = np.array([r["x"] for r in recs], dtype=float).reshape(-1, header["feature_width"])
    y = np.array([r["y"] for r in recs], dtype=float).reshape(-1, header["target_width"])
    return Dataset(header["kind"], header["m"], x, y,
                   np.array([r["labels"] for r in recs], dtype=int).reshape(-1, header["target_width"]),
                   np.array([r["i"] for r in recs], dtype=int),
                   np.array([r["rx"] for r in recs], dtype=float).reshape(-1, 3), norm)


# -- training ----------------------------------------------------------------

def nn_dims(kind: str, num_ris: int, k: int, k0: int, hidden=None, preset: str = "compact") -> list[int]:
    """Full layer list: input width, hidden widths, output width.

    ``preset='compact'`` uses 256/128 (CEN) and 64/32 (IND); ``'proportional'`` uses
    3MK, 3MK/2 (CEN) and 3K, 3K/2 (IND).  The output layer (width MK0 or K0)
    is the tanh-activated third layer.
    """
    m = num_ris if kind.endswith("_cen") else 1
    if hidden is None:
        if preset == "compact":
            hidden = (256, 128) if kind.endswith("_cen") else (64, 32)
        elif preset == "proportional":
            hidden = (3 * m * k, 3 * m * k // 2)
        else:
            raise ValueError(f"unknown architecture preset {preset!r}")
    return [feature_width(kind, num_ris, k), *[int(h) for h in hidden], m * k0]


@dataclass
class Policy:
    """Trained models plus the normalization each one expects."""

    kind: str
    models: list[mlp.MlpModel]
    normalizations: list[Normalization | None]
    curves: list[list[float]] = field(default_factory=list)


def train_variant(datasets, dims, hyper: mlp.TrainHyper) -> Policy:
    """CEN: one dataset, one model.  IND: one dataset and one model per RIS."""
    datasets = list(datasets) if isinstance(datasets, (list, tuple)) else [datasets]
    models, norms, curves = [], [], []
    for ds in datasets:
        if dims[0] != ds.x.shape[1]:
            raise ValueError(f"network input {dims[0]} != feature width {ds.x.shape[1]}")
        if dims[-1] != ds.y.shape[1]:
            raise ValueError(f"network output {dims[-1]} != label width {ds.y.shape[1]}")
        model = mlp.init(dims, hyper.seed)
        model, _, curve = mlp.train(model, ds.normalized_x, ds.y, hyper)
        models.append(model)
        norms.append(ds.normalization)
        curves.append(curve)
    return Policy(datasets[0].kind, models, norms, curves)


def train_federated(datasets, dims, rounds: int, local_epochs: int, hyper: mlp.TrainHyper,
                    history: list | None = None) -> Policy:
    """Local training at every RIS followed by parameter averaging, per round.

    Each RIS keeps its optimizer state across rounds.  If ``history`` is a
    list, the common model after every round is appended to it.
    """
    datasets = list(datasets)
    widths = {(ds.x.shape[1], ds.y.shape[1]) for ds in datasets}
    if len(widths) != 1 or (dims[0], dims[-1]) not in widths:
        raise ValueError("federated datasets must share the network's input/output widths")
    common = mlp.init(dims, hyper.seed)
    states = [None] * len(datasets)
    curves = [[] for _ in datasets]
    for rnd in range(rounds):
        local = []
        for i, ds in enumerate(datasets):
            model, states[i], curve = mlp.train(common, ds.normalized_x, ds.y, hyper,
                                                epochs=local_epochs, state=states[i],
                                                first_epoch=rnd * local_epochs)
            local.append(model)
            curves[i].extend(curve)
        common = mlp.average(local)
        if history is not None:
            history.append(common)
    return Policy(datasets[0].kind, [common] * len(datasets),
                  [ds.normalization for ds in datasets], curves)


def infer_configs(policy: Policy, samples, num_ris: int, k0: int) -> np.ndarray:
    """(n, M, K0) configurations chosen by the policy for each sample."""
    if any(n is None for n in policy.normalizations):
        raise NormalizationMissing("policy was trained without a stored normalization")
    kind = policy.kind
    if kind.endswith("_cen"):
        x = _features(samples, kind, None)
        y = mlp.forward(policy.models[0], policy.normalizations[0].apply(x))
        return decode_output(y, num_ris * k0).reshape(len(samples), num_ris, k0)
    out = np.empty((len(samples), num_ris, k0), dtype=int)
    for m in range(num_ris):
        x = _features(samples, kind, m)
        y = mlp.forward(policy.models[m], policy.normalizations[m].apply(x))
        out[:, m, :] = decode_output(y, k0)
    return out


def _features(samples, kind, m):
    if kind.startswith("pos"):
        return np.array([encode_position(s.scene, s.rx, kind, m) for s in samples])
    return np.array([encode_channel(s.realization, kind, m) for s in samples])


def policy_rates(configs, samples, maps, cb, P, sigma2) -> np.ndarray:
    return np.array([achievable_rate(s.realization, c, maps, cb, P, sigma2)
                     for c, s in zip(configs, samples)])


def save_policy(policy: Policy, directory, name: str):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = 1 if policy.kind.endswith("_cen") else len(policy.models)
    for i in range(n):
        suffix = "" if n == 1 else f"_{i}"
        (directory / f"{name}{suffix}.ckpt").write_bytes(mlp.serialize(policy.models[i]))
        norm = policy.normalizations[i]
        (directory / f"{name}{suffix}.norm.json").write_text(json.dumps(
            {"kind": policy.kind, "mean": norm.mean.tolist(), "std": norm.std.tolist()}))


def load_policy(directory, name: str, kind: str, num_ris: int) -> Policy:
    directory = Path(directory)
    n = 1 if kind.endswith("_cen") else num_ris
    models, norms = [], []
    for i in range(n):
        suffix = "" if n == 1 else f"_{i}"
        models.append(mlp.deserialize((directory / f"{name}{suffix}.ckpt").read_bytes()))
        npath = directory / f"{name}{suffix}.norm.json"
        if not npath.exists():
            raise NormalizationMissing(f"missing {npath}")
        nd = json.loads(npath.read_text())
        norms.append(Normalization(np.array(nd["mean"]), np.array(nd["std"])))
    return Policy(kind, models, norms)
