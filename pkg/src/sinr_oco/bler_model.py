"""
Sigmoid BLER abstraction, BCE loss and CQI <-> SINR mapping.

The BLER of MCS ``u`` transmitted with code block size ``b`` at SINR ``gamma``
(dB) is modeled as

    BLER(gamma) = 1 - 1 / (1 + exp(-(gamma - c(u, b)) / s(u, b)))

with the scale clipped to ``scale_clip`` and the BLER clipped to ``bler_clip``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SigmoidLinkModel",
    "CqiMap",
    "bler",
    "bce_loss",
    "bce_grad",
    "cqi_to_sinr",
    "sinr_to_cqi",
]


def _sigmoid_tail(z: float) -> float:
    """1 - sigmoid(z), stable for large |z|."""
    if z >= 0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


@dataclass(frozen=True)
class SigmoidLinkModel:
    """
    Per-(MCS, CBS) sigmoid BLER table.

    Parameters
    ----------
        centers : `tuple` of `float`
            Sigmoid center per MCS index at the reference CBS [dB]

        scales : `tuple` of `float`
            Sigmoid scale per MCS index at the reference CBS [dB]

        ref_cbs : `int` (default: 1000)
            CBS at which ``centers`` and ``scales`` are given

        cbs_slope : `float` (default: 0.5)
            Center shift per decade of CBS [dB]

        scale_exponent : `float` (default: 0.1)
            ``s(u, b) = s(u, ref_cbs) * (ref_cbs / b) ** scale_exponent``

        scale_clip : `tuple` (default: (0.5, 2.0))

        bler_clip : `tuple` (default: (0.01, 0.99))

        overrides : `dict` (default: empty)
            Explicit ``(mcs, cbs) -> (center, scale)`` entries that take
            precedence over the parametric CBS law
    """

    centers: tuple[float, ...]
    scales: tuple[float, ...]
    ref_cbs: int = 1000
    cbs_slope: float = 0.5
    scale_exponent: float = 0.1
    scale_clip: tuple[float, float] = (0.5, 2.0)
    bler_clip: tuple[float, float] = (0.01, 0.99)
    overrides: dict = field(default_factory=dict, compare=False)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if len(self.centers) != len(self.scales):
            raise ValueError("centers and scales must have the same length")
        if not self.centers:
            raise ValueError("link model needs at least one MCS")
        if any(s <= 0 for s in self.scales):
            raise ValueError("sigmoid scales must be strictly positive")
        if any(b <= a for a, b in zip(self.centers, self.centers[1:])):
            raise ValueError("sigmoid centers must be strictly increasing in MCS index")
        lo, hi = self.scale_clip
        if not 0 < lo <= hi:
            raise ValueError(f"invalid scale_clip {self.scale_clip}")
        p_lo, p_hi = self.bler_clip
        if not 0 < p_lo < p_hi < 1:
            raise ValueError(f"invalid bler_clip {self.bler_clip}")
        if self.ref_cbs <= 0:
            raise ValueError("ref_cbs must be positive")

    @classmethod
    def linear(cls, n_mcs: int = 28, center_base: float = -6.0,
               center_step: float = 0.9, scale: float = 1.0, **kwargs) -> "SigmoidLinkModel":
        """Evenly spaced centers ``center_base + center_step * u`` with a common scale."""
        centers = [center_base + center_step * u for u in range(n_mcs)]
        return cls(centers=tuple(centers), scales=(scale,) * n_mcs, **kwargs)

    @property
    def n_mcs(self) -> int:
        return len(self.centers)

    def params(self, mcs: int, cbs: int) -> tuple[float, float]:
        """Return ``(center, clipped scale)`` for the given MCS and CBS."""
        key = (mcs, cbs)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if not 0 <= mcs < self.n_mcs or int(mcs) != mcs:
            raise ValueError(f"unknown MCS {mcs}")
        if cbs <= 0:
            raise ValueError(f"code block size must be positive, got {cbs}")
        if key in self.overrides:
            c, s = self.overrides[key]
        else:
            c = self.centers[mcs] + self.cbs_slope * math.log10(cbs / self.ref_cbs)
            s = self.scales[mcs] * (self.ref_cbs / cbs) ** self.scale_exponent
        lo, hi = self.scale_clip
        out = (float(c), min(max(float(s), lo), hi))
        self._cache[key] = out
        return out

    def bler(self, gamma: float, mcs: int, cbs: int) -> float:
        c, s = self.params(mcs, cbs)
        p_lo, p_hi = self.bler_clip
        return min(max(_sigmoid_tail((gamma - c) / s), p_lo), p_hi)

    def bler_array(self, gamma: np.ndarray, mcs: int, cbs: int) -> np.ndarray:
        """Vectorized `bler` over an array of SINR values."""
        c, s = self.params(mcs, cbs)
        z = (np.asarray(gamma, dtype=float) - c) / s
        # 1 - sigmoid(z) == sigmoid(-z) == exp(-logaddexp(0, z))
        p = np.exp(-np.logaddexp(0.0, z))
        return np.clip(p, *self.bler_clip)


def bler(model: SigmoidLinkModel, gamma: float, mcs: int, cbs: int) -> float:
    """Clipped BLER of ``mcs`` at SINR ``gamma``."""
    return model.bler(gamma, mcs, cbs)


def bce_loss(model: SigmoidLinkModel, gamma: float, mcs: int, cbs: int, y: int) -> float:
    """Binary cross-entropy between the ACK/NACK bit ``y`` and the clipped BLER."""
    p = model.bler(gamma, mcs, cbs)
    return -math.log(p) if y else -math.log1p(-p)


def bce_grad(model: SigmoidLinkModel, gamma: float, mcs: int, cbs: int, y: int) -> float:
    """Derivative of `bce_loss` in ``gamma``: ``-(BLER - y) / s``."""
    _, s = model.params(mcs, cbs)
    return -(model.bler(gamma, mcs, cbs) - y) / s


@dataclass(frozen=True)
class CqiMap:
    """
    Monotone CQI -> SINR table. ``table[k - 1]`` is the SINR [dB] of CQI ``k``.
    """

    table: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        if len(self.table) != 15:
            raise ValueError(f"CQI table needs 15 entries, got {len(self.table)}")
        if any(b <= a for a, b in zip(self.table, self.table[1:])):
            raise ValueError("CQI table must be strictly increasing")

    @classmethod
    def affine(cls, base: float = -8.0, step: float = 1.8) -> "CqiMap":
        return cls(tuple(base + step * k for k in range(15)))

    def to_sinr(self, cqi: int) -> float:
        if not 1 <= cqi <= 15 or int(cqi) != cqi:
            raise ValueError(f"CQI must be an integer in [1, 15], got {cqi}")
        return self.table[int(cqi) - 1]

    def from_sinr(self, gamma: float) -> int:
        # largest k with table[k] <= gamma, saturating at 1
        k = int(np.searchsorted(self.table, gamma, side="right"))
        return min(max(k, 1), 15)


def cqi_to_sinr(cqi_map: CqiMap, cqi: int) -> float:
    return cqi_map.to_sinr(cqi)


def sinr_to_cqi(cqi_map: CqiMap, gamma: float) -> int:
    return cqi_map.from_sinr(gamma)
