"""Adaptive random event removal.

``gamma`` is the probability of KEEPING an event: an event survives iff its
uniform draw ``rho < gamma``. ``gamma_hat`` is the feedback-driven ceiling
for ``gamma``, lowered as the downstream processing time grows. Within
``[gamma_min, gamma_hat]`` the per-event value falls linearly with the
incoming rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .events import Event

_BLOCK = 1 << 16


@dataclass(frozen=True)
class GammaParams:
    gamma_min: float = 0.2
    gamma_max: float = 1.0
    t_min: float = 1e-6
    t_max: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma_min <= self.gamma_max <= 1.0:
            raise ValueError("need 0 <= gamma_min <= gamma_max <= 1")
        if not 0.0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")


def update_gamma_hat(params: GammaParams, t_prev: float) -> float:
    """Keep-probability ceiling for the next package given the last processing time."""
    t = min(max(t_prev, params.t_min), params.t_max)
    frac = (t - params.t_min) / (params.t_max - params.t_min)
    g = params.gamma_max - frac * (params.gamma_max - params.gamma_min)
    return min(max(g, params.gamma_min), params.gamma_max)


def compute_gamma(
    gamma_hat: float, params: GammaParams, r: float, r_min: float, r_max: float
) -> float:
    """Per-event keep probability: ``gamma_hat`` at ``r_min`` down to ``gamma_min`` at ``r_max``."""
    if r_max <= r_min:
        return gamma_hat
    r = min(max(r, r_min), r_max)
    return gamma_hat - (r - r_min) / (r_max - r_min) * (gamma_hat - params.gamma_min)


class EventFilter(Protocol):
    """Per-event keep/drop decision. Alternative filters plug in here."""

    def keep(self, event: Event, gamma: float) -> bool: ...


class RandomRemoval:
    """Seeded uniform random removal.

    Uniforms come from numpy's PCG64 seeded with ``seed`` and are consumed in
    order, so draw ``i`` is always the ``i``-th variate of that stream and a
    decision depends only on ``(seed, i, gamma)``.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._rng = np.random.Generator(np.random.PCG64(self.seed))
        self._buf: list[float] = []
        self._pos = 0
        self.draws = 0

    def draw(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.random(_BLOCK).tolist()
            self._pos = 0
        rho = self._buf[self._pos]
        self._pos += 1
        self.draws += 1
        return rho

    def keep(self, event: Event | None, gamma: float) -> bool:
        return self.draw() < gamma


class GammaState:
    """Current ``gamma_hat`` plus the removal filter it drives."""

    def __init__(
        self,
        params: GammaParams | None = None,
        seed: int = 0,
        event_filter: EventFilter | None = None,
    ) -> None:
        self.params = params or GammaParams()
        self.gamma_hat = self.params.gamma_max
        self.filter = event_filter if event_filter is not None else RandomRemoval(seed)

    def feedback(self, t_prev: float) -> float:
        self.gamma_hat = update_gamma_hat(self.params, t_prev)
        return self.gamma_hat

    def gamma(self, r: float, r_min: float, r_max: float) -> float:
        return compute_gamma(self.gamma_hat, self.params, r, r_min, r_max)


def filter_event(state: GammaState, event: Event, gamma: float) -> bool:
    """True to keep ``event``, False to drop it."""
    return state.filter.keep(event, gamma)
