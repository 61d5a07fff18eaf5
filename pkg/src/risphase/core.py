"""Phase codebooks, element grouping, cascaded gain and achievable rate.

A phase configuration is an integer array of shape ``(M, K0)``: one codebook
index per RIS and per element group.  Its serialized form is the RIS-major
flattening of that array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Codebook:
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("phase resolution must be at least one bit")

    @property
    def size(self) -> int:
        return 2 ** self.q

    @property
    def phases(self) -> np.ndarray:
        return 2.0 ** (1 - self.q) * np.pi * np.arange(self.size)

    @property
    def entries(self) -> np.ndarray:
        e = np.exp(1j * self.phases)
        # exact values where the exponential only picks up rounding noise
        e.real[np.abs(e.real) < 1e-15] = 0.0
        e.imag[np.abs(e.imag) < 1e-15] = 0.0
        return e


def codebook(q: int) -> Codebook:
    return Codebook(q)


def block_group_map(rows: int, cols: int, k0: int) -> np.ndarray:
    """Partition a rows x cols grid into ``k0`` equal contiguous blocks.

    Blocks are numbered row-major.  For 8x8 with k0=4 this gives four 4x4
    quadrants.  The block grid is chosen as square as the factorization allows.
    """
    k = rows * cols
    if k0 < 1 or k % k0:
        raise ValueError(f"K={k} is not divisible by K0={k0}")
    best = None
    for br in range(1, k0 + 1):
        if k0 % br:
            continue
        bc = k0 // br
        if rows % br or cols % bc:
            continue
        score = abs((rows // br) - (cols // bc))
        if best is None or score < best[0]:
            best = (score, br, bc)
    if best is None:
        # no rectangular tiling exists; fall back to contiguous row-major runs
        return np.repeat(np.arange(k0), k // k0)
    _, br, bc = best
    p = np.repeat(np.arange(rows), cols) // (rows // br)
    q = np.tile(np.arange(cols), rows) // (cols // bc)
    return (p * bc + q).astype(int)


def validate_group_map(gmap, k0: int) -> np.ndarray:
    gmap = np.asarray(gmap, dtype=int)
    if gmap.ndim != 1 or gmap.min(initial=0) < 0 or gmap.max(initial=-1) >= k0:
        raise ShapeError("group map entries must lie in [0, K0)")
    counts = np.bincount(gmap, minlength=k0)
    if np.any(counts == 0):
        raise ShapeError("every group must own at least one element")
    return gmap


def as_config(cfg, num_ris: int | None = None, k0: int | None = None) -> np.ndarray:
    cfg = np.asarray(cfg, dtype=int)
    if cfg.ndim == 1 and num_ris is not None:
        cfg = cfg.reshape(num_ris, -1)
    if cfg.ndim != 2:
        raise ShapeError("phase configuration must be a (M, K0) array")
    if num_ris is not None and cfg.shape[0] != num_ris:
        raise ShapeError(f"expected {num_ris} RIS rows, got {cfg.shape[0]}")
    if k0 is not None and cfg.shape[1] != k0:
        raise ShapeError(f"expected {k0} groups per RIS, got {cfg.shape[1]}")
    return cfg


def serialize_config(cfg) -> list[int]:
    return [int(v) for v in np.asarray(cfg).reshape(-1)]


def deserialize_config(values, num_ris: int) -> np.ndarray:
    return as_config(np.asarray(list(values), dtype=int), num_ris)


def is_feasible(cfg, cb: Codebook) -> bool:
    cfg = np.asarray(cfg)
    return bool(np.issubdtype(cfg.dtype, np.integer) and np.all((cfg >= 0) & (cfg < cb.size)))


def expand_one(cfg_m, gmap, cb: Codebook) -> np.ndarray:
    cfg_m = np.asarray(cfg_m, dtype=int)
    gmap = np.asarray(gmap, dtype=int)
    if gmap.max(initial=-1) >= cfg_m.size:
        raise ShapeError("group map refers to a group without an index")
    if np.any(cfg_m < 0) or np.any(cfg_m >= cb.size):
        raise ShapeError("codebook index out of range")
    return cb.entries[cfg_m[gmap]]


def expand(cfg, maps, cb: Codebook) -> list[np.ndarray]:
    """Per-RIS element-level reflection vectors."""
    cfg = as_config(cfg, len(maps))
    return [expand_one(cfg[m], maps[m], cb) for m in range(len(maps))]


def cascaded_gain(r, cfg, maps, cb: Codebook) -> complex:
    """``sum_m sum_k g_m[k] phi_m[k] h_m[k] + h0``."""
    phis = expand(cfg, maps, cb)
    total = 0j
    for g, phi, h in zip(r.g, phis, r.h):
        if g.shape != phi.shape or h.shape != phi.shape:
            raise ShapeError("channel and configuration lengths differ")
        total += complex(np.sum(g * phi * h))
    return total + complex(r.h0)


def _snr(P: float, sigma2: float) -> float:
    if not P > 0 or not sigma2 > 0:
        raise ValueError("transmit and noise powers must be positive")
    return P / sigma2


def rate_from_gain(gain, P: float, sigma2: float):
    return np.log2(1.0 + _snr(P, sigma2) * np.abs(gain) ** 2)


def achievable_rate(r, cfg, maps, cb: Codebook, P: float, sigma2: float) -> float:
    return float(rate_from_gain(cascaded_gain(r, cfg, maps, cb), P, sigma2))


def single_gain(h_m, g_m, cfg_m, gmap, cb: Codebook) -> complex:
    phi = expand_one(cfg_m, gmap, cb)
    if np.shape(h_m) != phi.shape or np.shape(g_m) != phi.shape:
        raise ShapeError("channel and configuration lengths differ")
    return complex(np.sum(np.asarray(g_m) * phi * np.asarray(h_m)))


def per_ris_rate(h_m, g_m, cfg_m, gmap, cb: Codebook, P: float, sigma2: float) -> float:
    """Rate of a single RIS link without the direct path."""
    return float(rate_from_gain(single_gain(h_m, g_m, cfg_m, gmap, cb), P, sigma2))


def group_partials(h_m, g_m, gmap, k0: int) -> np.ndarray:
    """``sum_{k in group i} g_m[k] h_m[k]`` for every group i."""
    prod = np.asarray(g_m) * np.asarray(h_m)
    return np.bincount(gmap, weights=prod.real, minlength=k0) + 1j * np.bincount(
        gmap, weights=prod.imag, minlength=k0)
