"""Geometry and channel realizations for the cell-free ISAC layout.

All quantities are linear (watts, meters, radians).  dB conversions live in
:mod:`cfisac.config` and never reach this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

USER_RULES = ("even", "uniform")


def _as_tuple(value, n: int, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n, arr.item())
    if arr.size != n:
        raise ValueError(f"{name}: expected 1 or {n} values, got {arr.size}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of one CF-ISAC deployment.

    Per-node quantities (``P_m``, ``sigma_k_sq``, ``sigma_c_sq``,
    ``sigma_n_sq``, ``p_q``) accept a scalar and are broadcast to one value
    per node.  ``R_min`` has no default on purpose.
    """

    R_min: float
    M_t: int = 2
    M_r: int = 2
    N: int = 16
    K: int = 5
    Q: int = 2
    P_m: Sequence[float] = 1.0
    sigma_k_sq: Sequence[float] = 1e-11
    sigma_c_sq: Sequence[float] = 0.5
    sigma_n_sq: Sequence[float] = 0.5
    p_q: Sequence[float] = 0.5
    zeta_sens_sq: float = 0.1
    C0: float = 1e-3
    nu: float = 3.0
    D0: float = 1.0
    L: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("M_t", "M_r", "N", "K", "Q", "L"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v}")
            object.__setattr__(self, name, int(v))
        counts = {"P_m": self.M_t, "sigma_k_sq": self.K, "sigma_c_sq": self.M_r,
                  "sigma_n_sq": self.M_r, "p_q": self.Q}
        for name, n in counts.items():
            object.__setattr__(self, name, _as_tuple(getattr(self, name), n, name))
        if min(self.P_m) < 0:
            raise ValueError("P_m must be >= 0")
        for name in ("sigma_k_sq", "sigma_c_sq", "sigma_n_sq"):
            if min(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not all(0.0 <= p <= 1.0 for p in self.p_q):
            raise ValueError("p_q must lie in [0, 1]")
        for name in ("zeta_sens_sq", "C0", "D0", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.R_min >= 0:
            raise ValueError("R_min must be >= 0")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def sigma_w_sq(self) -> np.ndarray:
        """Clutter plus receiver noise per receive AP."""
        return np.asarray(self.sigma_c_sq) + np.asarray(self.sigma_n_sq)

    @property
    def dim(self) -> int:
        return self.M_t * self.N

    def with_power(self, p: float) -> "SystemConfig":
        return replace(self, P_m=(float(p),) * self.M_t)

    def with_antennas(self, n: int) -> "SystemConfig":
        return replace(self, N=int(n))


@dataclass(frozen=True)
class LayoutSpec:
    """Placement rules for every node and the target cluster."""

    area: tuple[float, float, float, float] = (-100.0, 100.0, -100.0, 100.0)
    tx_y: float = 60.0
    rx_y: float = -60.0
    ap_x_span: tuple[float, float] = (-60.0, 60.0)
    tx_positions: tuple | None = None
    rx_positions: tuple | None = None
    user_y: float = 20.0
    user_x_span: tuple[float, float] = (-100.0, 100.0)
    user_rule: str = "even"
    user_positions: tuple | None = None
    target_center: tuple[float, float] = (0.0, 20.0)
    target_radius: float = 10.0
    array_axis: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if self.user_rule not in USER_RULES:
            raise ValueError(f"user_rule must be one of {USER_RULES}")
        if self.target_radius < 0:
            raise ValueError("target_radius must be >= 0")


@dataclass(frozen=True)
class Geometry:
    tx_ap_positions: np.ndarray
    rx_ap_positions: np.ndarray
    user_positions: np.ndarray
    target_positions: np.ndarray
    tx_axes: np.ndarray
    rx_axes: np.ndarray
    target_center: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass(frozen=True)
class ScenarioRealization:
    """One coherence-block draw.

    ``h`` has shape ``(K, M_t * N)``: row ``k`` is the aggregate channel of
    user ``k`` stacked in AP order.  ``aod`` is ``(M_t, Q)``, ``aoa`` is
    ``(M_r, Q)`` and ``sens_var`` is ``(M_t, Q, M_r)``.
    """

    h: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    sens_var: np.ndarray
    alpha: np.ndarray
    presence_prob: np.ndarray
    path_gain: np.ndarray


def evenly_spaced(n: int, lo: float, hi: float) -> np.ndarray:
    """``n`` points over ``[lo, hi]``, endpoints included; one point sits at ``lo``."""
    if n == 1:
        return np.array([lo], dtype=float)
    return np.linspace(lo, hi, n)


def build_geometry(config: SystemConfig, layout: LayoutSpec | None = None,
                   rng: np.random.Generator | None = None) -> Geometry:
    """Place every node of the deployment.

    Targets are drawn uniformly in a disk around ``layout.target_center``
    using ``rng``; without a generator every target sits at the center.
    """
    layout = layout or LayoutSpec()
    if layout.tx_positions is not None:
        tx = np.asarray(layout.tx_positions, dtype=float).reshape(-1, 2)
    else:
        tx = np.column_stack([evenly_spaced(config.M_t, *layout.ap_x_span),
                              np.full(config.M_t, layout.tx_y)])
    if layout.rx_positions is not None:
        rx = np.asarray(layout.rx_positions, dtype=float).reshape(-1, 2)
    else:
        rx = np.column_stack([evenly_spaced(config.M_r, *layout.ap_x_span),
                              np.full(config.M_r, layout.rx_y)])

    if layout.user_positions is not None:
        users = np.asarray(layout.user_positions, dtype=float).reshape(-1, 2)
    elif layout.user_rule == "even":
        users = np.column_stack([evenly_spaced(config.K, *layout.user_x_span),
                                 np.full(config.K, layout.user_y)])
    else:
        if rng is None:
            raise ValueError("user_rule='uniform' needs an rng")
        users = np.column_stack([rng.uniform(*layout.user_x_span, size=config.K),
                                 np.full(config.K, layout.user_y)])

    center = np.asarray(layout.target_center, dtype=float)
    if rng is None or layout.target_radius == 0:
        targets = np.tile(center, (config.Q, 1))
    else:
        # uniform in a disk: radius ~ R sqrt(U)
        r = layout.target_radius * np.sqrt(rng.uniform(size=config.Q))
        theta = rng.uniform(0, 2 * np.pi, size=config.Q)
        targets = center + np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    if (tx.shape[0], rx.shape[0], users.shape[0], targets.shape[0]) != (
            config.M_t, config.M_r, config.K, config.Q):
        raise ValueError("layout node counts do not match the configuration")

    xmin, xmax, ymin, ymax = layout.area
    for name, pts in (("tx AP", tx), ("rx AP", rx), ("user", users), ("target", targets)):
        if np.any((pts[:, 0] < xmin) | (pts[:, 0] > xmax) | (pts[:, 1] < ymin) | (pts[:, 1] > ymax)):
            raise ValueError(f"{name} position outside the area {layout.area}")

    for name, aps, pts in (("tx AP/user", tx, users), ("tx AP/target", tx, targets),
                           ("rx AP/target", rx, targets)):
        d = np.linalg.norm(aps[:, None, :] - pts[None, :, :], axis=-1)
        if np.any(d == 0):
            raise ValueError(f"coincident {name} positions")

    axis = np.asarray(layout.array_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return Geometry(tx, rx, users, targets,
                    np.tile(axis, (config.M_t, 1)), np.tile(axis, (config.M_r, 1)),
                    center)


def path_loss(d, config: SystemConfig):
    """Large-scale gain ``C0 (d / D0)^(-nu)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss needs strictly positive distances")
    return config.C0 * (d / config.D0) ** (-config.nu)


def steering_vector(phi: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response, unit norm."""
    if n < 1:
        raise ValueError("N must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.cos(phi)) / np.sqrt(n)


def compute_angle(ap_pos, ap_axis, point) -> float:
    """Angle in ``[0, pi]`` between the array axis and the direction to ``point``."""
    delta = np.asarray(point, dtype=float) - np.asarray(ap_pos, dtype=float)
    dist = np.linalg.norm(delta)
    if dist == 0:
        raise ValueError("point coincides with the AP")
    c = np.dot(delta, ap_axis) / (dist * np.linalg.norm(ap_axis))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rayleigh_channels(zeta, n: int, rng: np.random.Generator) -> np.ndarray:
    """Aggregate channels ``(K, M_t * n)`` from path gains ``zeta`` of shape ``(M_t, K)``.

    Each ``h_mk = sqrt(zeta_mk) * CN(0, I_n)``.
    """
    zeta = np.asarray(zeta, dtype=float)
    M_t, K = zeta.shape
    h_tilde = (rng.standard_normal((M_t, K, n)) + 1j * rng.standard_normal((M_t, K, n))) / np.sqrt(2)
    h_mk = np.sqrt(zeta)[:, :, None] * h_tilde
    return np.transpose(h_mk, (1, 0, 2)).reshape(K, M_t * n)


def sample_realization(config: SystemConfig, geometry: Geometry,
                       rng: np.random.Generator) -> ScenarioRealization:
    """Draw Rayleigh channels and target presences for one coherence block."""
    M_t, N = config.M_t, config.N
    d = np.linalg.norm(geometry.tx_ap_positions[:, None, :] - geometry.user_positions[None, :, :],
                       axis=-1)                                          # (M_t, K)
    zeta = path_loss(d, config)
    h = rayleigh_channels(zeta, N, rng)

    p = np.asarray(config.p_q)
    alpha = (rng.uniform(size=config.Q) < p).astype(int)

    aod = np.array([[compute_angle(geometry.tx_ap_positions[m], geometry.tx_axes[m], t)
                     for t in geometry.target_positions] for m in range(M_t)])
    aoa = np.array([[compute_angle(geometry.rx_ap_positions[m], geometry.rx_axes[m], t)
                     for t in geometry.target_positions] for m in range(config.M_r)])
    sens_var = np.full((M_t, config.Q, config.M_r), config.zeta_sens_sq)
    return ScenarioRealization(h, aod, aoa, sens_var, alpha, p, zeta)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-style stream: same ``(seed, key)`` gives the same draws in any order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))
