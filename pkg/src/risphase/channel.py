"""Channel synthesis for a TX-RX pair assisted by M planar RISs.

Three components are produced per realization:

* ``g[m]``  RIS m -> RX, pure line-of-sight with a random common phase;
* ``h[m]``  TX -> RIS m, clustered multipath plus an optional LOS term;
* ``h0``    TX -> RX direct link, Rayleigh faded.

All angles are measured in the local frame of each RIS: azimuth in the
horizontal plane from the surface normal, elevation from the horizontal plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ChannelDomainError(ValueError):
    """Raised for geometrically meaningless channel requests."""


@dataclass(frozen=True)
class RisGeometry:
    """Rectangular RIS grid.

    ``rows`` run along ``axis`` (horizontal, in-plane), ``cols`` along the
    vertical in-plane direction ``normal x axis``.  Element ``(p, q)`` is
    flattened to index ``p * cols + q``.
    """

    rows: int = 8
    cols: int = 8
    spacing_wavelengths: float = 0.5
    normal: tuple[float, float, float] = (1.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("RIS grid needs at least one row and one column")
        if not self.spacing_wavelengths > 0:
            raise ValueError("element spacing must be positive")
        n = np.asarray(self.normal, dtype=float)
        a = np.asarray(self.axis, dtype=float)
        if not (np.isclose(n @ n, 1.0) and np.isclose(a @ a, 1.0) and abs(n @ a) < 1e-9):
            raise ValueError("RIS normal and axis must be orthonormal")

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    @property
    def up(self) -> np.ndarray:
        return np.cross(np.asarray(self.normal, float), np.asarray(self.axis, float))

    def local_angles(self, center, target) -> tuple[float, float, float]:
        """Azimuth, elevation and distance of ``target`` seen from ``center``."""
        v = np.asarray(target, float) - np.asarray(center, float)
        dist = float(np.linalg.norm(v))
        if dist == 0.0:
            raise ChannelDomainError("node coincides with the RIS")
        n = float(v @ np.asarray(self.normal, float))
        u = float(v @ np.asarray(self.axis, float))
        w = float(v @ self.up)
        azimuth = float(np.arctan2(u, n))
        elevation = float(np.arcsin(np.clip(w / dist, -1.0, 1.0)))
        return azimuth, elevation, dist

    def element_positions(self, center, wavelength: float) -> np.ndarray:
        """(K, 3) element coordinates in meters, row-major, centred on ``center``."""
        d = self.spacing_wavelengths * wavelength
        p = (np.arange(self.rows) - (self.rows - 1) / 2.0) * d
        q = (np.arange(self.cols) - (self.cols - 1) / 2.0) * d
        pp, qq = np.meshgrid(p, q, indexing="ij")
        offsets = (pp.reshape(-1, 1) * np.asarray(self.axis, float)
                   + qq.reshape(-1, 1) * self.up)
        return np.asarray(center, float) + offsets


@dataclass(frozen=True)
class Scene:
    tx: tuple[float, float, float]
    rx: tuple[float, float, float]
    ris: tuple[tuple[tuple[float, float, float], RisGeometry], ...]
    carrier_frequency: float = 3.5e9
    direct_penetration_loss: float = 0.0
    pathloss_exponent: float = 2.0
    pattern: str = "isotropic"
    pattern_order: float = 0.0
    direct_pathloss_exponent: float | None = None

    def __post_init__(self):
        if len(self.ris) < 1:
            raise ValueError("a scene needs at least one RIS")
        if self.direct_penetration_loss < 0:
            raise ValueError("penetration loss must be non-negative")
        if self.pattern not in ("isotropic", "cosine"):
            raise ValueError(f"unknown radiation pattern {self.pattern!r}")
        nodes = [np.asarray(self.tx, float), np.asarray(self.rx, float)]
        nodes += [np.asarray(c, float) for c, _ in self.ris]
        for i in range(len(nodes)):
            if not np.all(np.isfinite(nodes[i])):
                raise ValueError("node positions must be finite")
            for j in range(i + 1, len(nodes)):
                if np.linalg.norm(nodes[i] - nodes[j]) == 0.0:
                    raise ValueError("scene nodes must be pairwise distinct")

    @property
    def num_ris(self) -> int:
        return len(self.ris)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def with_rx(self, rx) -> "Scene":
        return Scene(tuple(self.tx), tuple(float(v) for v in rx), self.ris,
                     self.carrier_frequency, self.direct_penetration_loss,
                     self.pathloss_exponent, self.pattern, self.pattern_order,
                     self.direct_pathloss_exponent)

    def gain(self, elevation):
        if self.pattern == "isotropic":
            return radiation_pattern(elevation)
        return radiation_pattern(elevation, self.pattern_order)


@dataclass(frozen=True)
class ClusterConfig:
    num_clusters: int = 3
    rays_per_cluster: tuple[int, ...] = (8, 8, 8)
    azimuth_center_range: tuple[float, float] = (-np.pi / 2, np.pi / 2)
    elevation_center_range: tuple[float, float] = (-np.pi / 4, np.pi / 4)
    intra_cluster_spread: float = np.deg2rad(5.0)
    los_probability: float = 1.0
    cluster_excess_loss: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.num_clusters < 1:
            raise ValueError("need at least one cluster")
        if len(self.rays_per_cluster) != self.num_clusters:
            raise ValueError("rays_per_cluster must list one count per cluster")
        if any(r < 1 for r in self.rays_per_cluster):
            raise ValueError("every cluster needs at least one ray")
        if self.intra_cluster_spread < 0:
            raise ValueError("intra-cluster spread must be non-negative")
        if not 0.0 <= self.los_probability <= 1.0:
            raise ValueError("los_probability must lie in [0, 1]")
        if self.cluster_excess_loss is not None and len(self.cluster_excess_loss) != self.num_clusters:
            raise ValueError("cluster_excess_loss must list one factor per cluster")

    @property
    def num_rays(self) -> int:
        return int(sum(self.rays_per_cluster))


@dataclass
class ChannelRealization:
    h: list[np.ndarray]
    g: list[np.ndarray]
    h0: complex
    meta: dict = field(default_factory=dict)

    @property
    def num_ris(self) -> int:
        return len(self.h)


def pathloss(distance: float, exponent: float = 2.0, f_c: float = 3.5e9) -> float:
    """Linear power attenuation ``(c / (4 pi f_c))**2 * d**(-exponent)``."""
    if not distance > 0:
        raise ChannelDomainError(f"distance must be positive, got {distance}")
    if not exponent > 0 or not f_c > 0:
        raise ChannelDomainError("exponent and carrier frequency must be positive")
    ref = (SPEED_OF_LIGHT / (4.0 * np.pi * f_c)) ** 2
    return float(ref * distance ** (-exponent))


def radiation_pattern(elevation, order: float | None = None):
    """Element power gain; isotropic when ``order`` is None, else cos**order."""
    elevation = np.asarray(elevation, dtype=float)
    if order is None:
        out = np.ones_like(elevation)
    else:
        c = np.cos(elevation)
        c = np.where(np.abs(elevation) >= np.pi / 2, 0.0, np.maximum(c, 0.0))
        out = c ** order
    return out if out.ndim else float(out)


def steering_vector(geom: RisGeometry, azimuth, elevation) -> np.ndarray:
    """Array response; for array-valued angles returns shape (n_angles, K)."""
    az = np.atleast_1d(np.asarray(azimuth, float))
    el = np.atleast_1d(np.asarray(elevation, float))
    p = np.repeat(np.arange(geom.rows), geom.cols)
    q = np.tile(np.arange(geom.cols), geom.rows)
    phase = 2.0 * np.pi * geom.spacing_wavelengths * (
        np.outer(np.cos(el) * np.sin(az), p) + np.outer(np.sin(el), q))
    a = np.exp(1j * phase)
    if np.ndim(azimuth) == 0 and np.ndim(elevation) == 0:
        return a[0]
    return a


def los_component(scene: Scene, m: int, node, phase: float) -> np.ndarray:
    """LOS vector towards ``node`` with common phase ``phase``."""
    center, geom = scene.ris[m]
    az, el, dist = geom.local_angles(center, node)
    amp = np.sqrt(scene.gain(el) * pathloss(dist, scene.pathloss_exponent, scene.carrier_frequency))
    return amp * np.exp(1j * phase) * steering_vector(geom, az, el)


def nlos_component(geom: RisGeometry, azimuths, elevations, alphas, ray_gains) -> np.ndarray:
    """``S**-0.5 * sum_s alpha_s * Xi_s * a(phi_s, theta_s)`` over S rays."""
    alphas = np.asarray(alphas, complex)
    ray_gains = np.asarray(ray_gains, float)
    a = steering_vector(geom, np.asarray(azimuths, float), np.asarray(elevations, float))
    kappa = 1.0 / np.sqrt(alphas.size)
    return kappa * ((alphas * ray_gains) @ a)


def _check_index(scene: Scene, m: int):
    if not 0 <= m < scene.num_ris:
        raise IndexError(f"RIS index {m} out of range for M={scene.num_ris}")


def sample_g(scene: Scene, m: int, rng: np.random.Generator) -> np.ndarray:
    _check_index(scene, m)
    eta = rng.uniform(0.0, 2.0 * np.pi)
    return los_component(scene, m, scene.rx, eta)


def draw_rays(cc: ClusterConfig, rng: np.random.Generator):
    """Angles and complex gains of every NLOS ray, cluster-major."""
    az_c = rng.uniform(*cc.azimuth_center_range, size=cc.num_clusters)
    el_c = rng.uniform(*cc.elevation_center_range, size=cc.num_clusters)
    counts = np.asarray(cc.rays_per_cluster)
    s = int(counts.sum())
    az = np.repeat(az_c, counts) + cc.intra_cluster_spread * rng.standard_normal(s)
    el = np.repeat(el_c, counts) + cc.intra_cluster_spread * rng.standard_normal(s)
    # rays stay in the front half-space of the surface
    az = np.clip(az, -np.pi / 2, np.pi / 2)
    el = np.clip(el, -np.pi / 2, np.pi / 2)
    alpha = (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2.0)
    return az, el, alpha


def sample_h(scene: Scene, m: int, cc: ClusterConfig, rng: np.random.Generator) -> np.ndarray:
    _check_index(scene, m)
    center, geom = scene.ris[m]
    _, _, dist = geom.local_angles(center, scene.tx)
    loss = pathloss(dist, scene.pathloss_exponent, scene.carrier_frequency)
    az, el, alpha = draw_rays(cc, rng)
    per_ray_loss = np.full(alpha.size, loss)
    if cc.cluster_excess_loss is not None:
        per_ray_loss = per_ray_loss * np.repeat(cc.cluster_excess_loss, cc.rays_per_cluster)
    xi = np.sqrt(scene.gain(el) * per_ray_loss)
    h = nlos_component(geom, az, el, alpha, xi)
    beta = rng.random() < cc.los_probability
    eta = rng.uniform(0.0, 2.0 * np.pi)
    if beta:
        h = h + los_component(scene, m, scene.tx, eta)
    return h


def direct_variance(scene: Scene) -> float:
    d = float(np.linalg.norm(np.asarray(scene.tx, float) - np.asarray(scene.rx, float)))
    exponent = scene.direct_pathloss_exponent or scene.pathloss_exponent
    loss = pathloss(d, exponent, scene.carrier_frequency)
    return loss * 10.0 ** (-scene.direct_penetration_loss / 10.0)


def sample_direct(scene: Scene, rng: np.random.Generator) -> complex:
    std = np.sqrt(direct_variance(scene) / 2.0)
    return complex(std * rng.standard_normal(), std * rng.standard_normal())


def sample_realization(scene: Scene, cc: ClusterConfig, rng: np.random.Generator) -> ChannelRealization:
    """One independent draw of every link.

    Each link gets its own child stream spawned from ``rng``, so the draws of
    different RISs are decorrelated and the parent advances by a fixed amount.
    """
    streams = rng.spawn(2 * scene.num_ris + 1)
    g = [sample_g(scene, m, streams[2 * m]) for m in range(scene.num_ris)]
    h = [sample_h(scene, m, cc, streams[2 * m + 1]) for m in range(scene.num_ris)]
    h0 = sample_direct(scene, streams[-1])
    return ChannelRealization(h=h, g=g, h0=h0)
