"""Exhaustive and baseline phase-configuration policies.

The joint sweep never touches K-length vectors per candidate: per-group
partial gains are formed once, and each candidate gain is a codebook-weighted
sum of the ``M * K0`` partials.  Candidates are enumerated in RIS-major
lexicographic order, so the first maximizer is the tie-break winner.

Candidates whose fast-path objective lies within a relative ``1e-9`` of the
best are re-scored with :func:`risphase.core.cascaded_gain`, the same routine
every other policy is scored with.  The returned rate is therefore never
beaten, even by rounding, when the competitors are evaluated the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (Codebook, achievable_rate, as_config, cascaded_gain, group_partials,
                   per_ris_rate, rate_from_gain, single_gain)

DEFAULT_BUDGET = 2 ** 24
CHUNK = 1 << 16
NEAR_TIE = 1e-9


class BudgetExceeded(RuntimeError):
    """The search space exceeds the configured candidate budget."""


@dataclass
class OracleResult:
    config: np.ndarray
    rate: float
    gain: complex


def candidate_indices(start: int, stop: int, width: int, base: int) -> np.ndarray:
    """Digits of candidates ``start..stop-1`` in base ``base``, most significant first."""
    n = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((n.size, width), dtype=np.int64)
    for j in range(width - 1, -1, -1):
        digits[:, j] = n % base
        n //= base
    return digits


def _check_budget(n_candidates: int, budget: int):
    if n_candidates > budget:
        raise BudgetExceeded(
            f"{n_candidates} candidates exceed the oracle budget of {budget}; "
            "reduce M, K0 or q")


def sweep_partials(partials: np.ndarray, offset, cb: Codebook, budget: int = DEFAULT_BUDGET):
    """Near-optimal candidates per row of ``partials``.

    ``partials`` has shape (B, W) where W is the number of decision variables,
    ``offset`` has shape (B,) (the direct link, or zeros).  Returns, per row,
    the sorted candidate numbers whose |gain|**2 is within ``NEAR_TIE`` of the
    row maximum.
    """
    partials = np.atleast_2d(np.asarray(partials, complex))
    offset = np.broadcast_to(np.asarray(offset, complex), partials.shape[:1])
    b, width = partials.shape
    n_cand = cb.size ** width
    _check_budget(n_cand, budget)
    entries = cb.entries
    best = np.full(b, -np.inf)
    pool: list[list[tuple[int, float]]] = [[] for _ in range(b)]
    for start in range(0, n_cand, CHUNK):
        stop = min(start + CHUNK, n_cand)
        weights = entries[candidate_indices(start, stop, width, cb.size)]
        power = np.abs(partials @ weights.T + offset[:, None]) ** 2
        best = np.maximum(best, power.max(axis=1))
        for row in range(b):
            close = np.flatnonzero(power[row] >= best[row] * (1.0 - NEAR_TIE))
            pool[row].extend((int(c) + start, float(power[row, c])) for c in close)
    return [sorted(c for c, v in pool[row] if v >= best[row] * (1.0 - NEAR_TIE))
            for row in range(b)]


def _refine(candidates, width, cb, score):
    """Exact re-score of near-tied candidates; smallest index wins ties."""
    best_c, best_v = None, -np.inf
    for c in sorted(candidates):
        cfg = candidate_indices(c, c + 1, width, cb.size)[0]
        v = score(cfg)
        if v > best_v:
            best_c, best_v = cfg, v
    return best_c


def exhaustive_joint(r, maps, cb: Codebook, P: float, sigma2: float,
                     budget: int = DEFAULT_BUDGET) -> OracleResult:
    return exhaustive_joint_batch([r], maps, cb, P, sigma2, budget)[0]


def exhaustive_joint_batch(realizations, maps, cb: Codebook, P: float, sigma2: float,
                           budget: int = DEFAULT_BUDGET) -> list[OracleResult]:
    """Joint optimum including the direct link, for a batch of realizations."""
    m_ris = len(maps)
    k0s = [int(np.max(gm)) + 1 for gm in maps]
    if len(set(k0s)) != 1:
        raise ValueError("all RISs must use the same number of groups")
    k0 = k0s[0]
    _check_budget(cb.size ** (m_ris * k0), budget)
    partials = np.array([
        np.concatenate([group_partials(r.h[m], r.g[m], maps[m], k0) for m in range(m_ris)])
        for r in realizations])
    offset = np.array([r.h0 for r in realizations], dtype=complex)
    ties = sweep_partials(partials, offset, cb, budget)
    out = []
    for r, cands in zip(realizations, ties):
        flat = _refine(cands, m_ris * k0, cb, lambda c, r=r: achievable_rate(
            r, c.reshape(m_ris, k0), maps, cb, P, sigma2))
        cfg = flat.reshape(m_ris, k0)
        gain = cascaded_gain(r, cfg, maps, cb)
        out.append(OracleResult(cfg, float(rate_from_gain(gain, P, sigma2)), gain))
    return out


def exhaustive_per_ris(h_m, g_m, gmap, cb: Codebook, P: float, sigma2: float,
                       budget: int = DEFAULT_BUDGET) -> OracleResult:
    """Single-RIS optimum of ``|g_m Phi_m h_m|``, direct link excluded."""
    gmap = np.asarray(gmap, dtype=int)
    k0 = int(gmap.max()) + 1
    partials = group_partials(h_m, g_m, gmap, k0)[None, :]
    ties = sweep_partials(partials, np.zeros(1), cb, budget)
    cfg = _refine(ties[0], k0, cb, lambda c: per_ris_rate(h_m, g_m, c, gmap, cb, P, sigma2))
    gain = single_gain(h_m, g_m, cfg, gmap, cb)
    return OracleResult(cfg[None, :], float(rate_from_gain(gain, P, sigma2)), gain)


def naive_joint(r, maps, cb: Codebook, P: float, sigma2: float) -> OracleResult:
    """Reference enumerator: full K-length recomputation for every candidate."""
    m_ris = len(maps)
    k0 = int(np.max(maps[0])) + 1
    width = m_ris * k0
    best_cfg, best_rate = None, -np.inf
    for c in range(cb.size ** width):
        cfg = candidate_indices(c, c + 1, width, cb.size)[0].reshape(m_ris, k0)
        rate = achievable_rate(r, cfg, maps, cb, P, sigma2)
        if rate > best_rate:
            best_cfg, best_rate = cfg, rate
    return OracleResult(best_cfg, best_rate, cascaded_gain(r, best_cfg, maps, cb))


def random_config(num_ris: int, k0: int, q: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2 ** q, size=(num_ris, k0))


def no_ris_rate(r, P: float, sigma2: float, cfg=None) -> float:
    """Rate over the direct link alone; ``cfg`` is accepted and ignored."""
    return float(rate_from_gain(complex(r.h0), P, sigma2))


__all__ = ["OracleResult", "BudgetExceeded", "exhaustive_joint", "exhaustive_joint_batch",
           "exhaustive_per_ris", "naive_joint", "random_config", "no_ris_rate", "as_config"]
