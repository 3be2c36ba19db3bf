"""Adaptive package sizing and package assembly.

The next package size is ``A * arctan(kappa * ln t_prev) + B`` where ``A`` and
``B`` are calibrated so that ``t_min`` maps to ``s_min`` and ``t_max`` to
``s_max``. A tabulated Taylor expansion offers a cheaper evaluation of the
arctan-log curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .events import Event, EventPackage


class CalibrationError(ArithmeticError):
    pass


def phi(t: float, kappa: float = 5.0) -> float:
    """``arctan(kappa * ln t)``; strictly increasing on t > 0."""
    if not t > 0:
        raise ValueError(f"phi is defined for t > 0 only, got {t}")
    return math.atan(kappa * math.log(t))


def phi_derivative(t: float, kappa: float = 5.0) -> float:
    lt = math.log(t)
    return kappa / (t * (kappa * kappa * lt * lt + 1.0))


def inflection_point(kappa: float) -> float:
    """Smaller inflection point of the arctan-log curve (requires kappa >= 1)."""
    if kappa < 1:
        raise ValueError(f"no real inflection point for kappa < 1 (got {kappa})")
    return math.exp(-math.sqrt(kappa * kappa - 1.0) / kappa - 1.0)


def second_inflection_point(kappa: float) -> float:
    """Larger inflection point; the curve is nearly flat beyond it. Not used for control."""
    if kappa < 1:
        raise ValueError(f"no real inflection point for kappa < 1 (got {kappa})")
    return math.exp(math.sqrt(kappa * kappa - 1.0) / kappa - 1.0)


def calibrate(
    s_min: float, s_max: float, t_min: float, t_max: float, kappa: float
) -> tuple[float, float]:
    """Return ``(A, B)`` pinning the sizing law to both range endpoints."""
    lo, hi = phi(t_min, kappa), phi(t_max, kappa)
    if hi <= lo:
        raise CalibrationError(f"phi(t_max)={hi} does not exceed phi(t_min)={lo}")
    a = (s_max - s_min) / (hi - lo)
    return a, s_max - a * hi


@dataclass(frozen=True)
class PackagerParams:
    s_min: int = 1
    s_max: int = 1000
    t_min: float = 1e-6
    t_max: float = 0.1
    kappa: float = 5.0
    A: float = field(init=False)
    B: float = field(init=False)

    def __post_init__(self) -> None:
        if self.s_min < 1:
            raise ValueError("s_min must be >= 1")
        if self.s_max <= self.s_min:
            raise ValueError("s_max must exceed s_min")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        a, b = calibrate(self.s_min, self.s_max, self.t_min, self.t_max, self.kappa)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    def clamp_t(self, t: float) -> float:
        return min(max(t, self.t_min), self.t_max)

    def size_real(self, t: float, clamp: bool = True) -> float:
        """Unrounded sizing law; ``t`` is clamped into ``[t_min, t_max]`` by default."""
        if clamp:
            t = self.clamp_t(t)
        return self.A * phi(t, self.kappa) + self.B

    @property
    def f_bounds(self) -> tuple[float, float]:
        """Open interval containing the unclamped sizing law for every t > 0."""
        half = 0.5 * self.A * math.pi
        return self.B - half, self.B + half


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def target_size(t_prev: float, params: PackagerParams, table: Optional["TaylorTable"] = None) -> int:
    """Integer package size for the next package given the last processing time."""
    t = params.clamp_t(t_prev)
    value = phi_taylor(t, table) if table is not None else phi(t, params.kappa)
    s = round_half_up(params.A * value + params.B)
    return min(max(s, params.s_min), params.s_max)


# Taylor tabulation ---------------------------------------------------------


def _series_mul(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    return np.convolve(a, b)[:n]


def _series_div(num: np.ndarray, den: np.ndarray, n: int) -> np.ndarray:
    q = np.zeros(n)
    for i in range(n):
        acc = num[i] if i < len(num) else 0.0
        for j in range(1, min(i, len(den) - 1) + 1):
            acc -= den[j] * q[i - j]
        q[i] = acc / den[0]
    return q


def taylor_coefficients(a: float, kappa: float, order: int) -> np.ndarray:
    """Taylor coefficients of ``arctan(kappa*ln t)`` in powers of ``(t - a)``.

    Exact truncated power-series arithmetic: ``u = kappa*ln(a+h)`` expanded in
    ``h``, then ``arctan(u)`` integrated term-wise from ``u' / (1 + u^2)``.
    """
    n = order + 1
    u = np.zeros(n)
    u[0] = kappa * math.log(a)
    for j in range(1, n):
        u[j] = kappa * (-1.0) ** (j + 1) / (j * a**j)
    du = np.array([j * u[j] for j in range(1, n)])
    w = _series_mul(u, u, n - 1)
    w[0] += 1.0
    q = _series_div(du, w, n - 1)
    c = np.empty(n)
    c[0] = math.atan(u[0])
    c[1:] = q / np.arange(1, n)
    return c


@dataclass(frozen=True)
class TaylorTable:
    order: int
    kappa: float
    points: np.ndarray
    coefficients: np.ndarray  # shape (num_points, order + 1)
    log_lo: float
    log_step: float

    @property
    def t_lo(self) -> float:
        return float(self.points[0])

    @property
    def t_hi(self) -> float:
        return float(self.points[-1])

    def nearest(self, t: float) -> int:
        i = round((math.log(t) - self.log_lo) / self.log_step)
        return min(max(i, 0), len(self.points) - 1)


def build_taylor_table(params: PackagerParams, order: int = 5, num_points: int = 64) -> TaylorTable:
    if order < 1:
        raise ValueError("Taylor order must be >= 1")
    if num_points < 2:
        raise ValueError("need at least two operating points")
    log_lo, log_hi = math.log(params.t_min), math.log(params.t_max)
    points = np.exp(np.linspace(log_lo, log_hi, num_points))
    # pin the endpoints exactly so the span check is not defeated by rounding
    points[0], points[-1] = params.t_min, params.t_max
    coeffs = np.vstack([taylor_coefficients(float(a), params.kappa, order) for a in points])
    return TaylorTable(
        order=order,
        kappa=params.kappa,
        points=points,
        coefficients=coeffs,
        log_lo=log_lo,
        log_step=(log_hi - log_lo) / (num_points - 1),
    )


def phi_taylor(t: float, table: TaylorTable) -> float:
    """Evaluate the tabulated expansion at the operating point nearest ``t`` in log space."""
    if not table.t_lo <= t <= table.t_hi:
        raise ValueError(f"t={t} outside table span [{table.t_lo}, {table.t_hi}]")
    j = table.nearest(t)
    h = t - table.points[j]
    c = table.coefficients[j]
    acc = 0.0
    for cj in c[::-1]:
        acc = acc * h + cj
    return float(acc)


# Assembly ------------------------------------------------------------------


class PackageAssembler:
    """Buffers filtered events into packages.

    The size target is latched when a package opens (its first event) and
    held until the package closes, so feedback arriving mid-package never
    shrinks a package below its current fill.
    """

    def __init__(self, max_age_us: Optional[int] = None) -> None:
        self.max_age_us = max_age_us
        self._buf: list[Event] = []
        self._target = 0
        self._k = 0

    @property
    def next_k(self) -> int:
        return self._k

    @property
    def pending(self) -> int:
        return len(self._buf)

    @property
    def target(self) -> int:
        return self._target

    @property
    def is_open(self) -> bool:
        return bool(self._buf)

    def push(self, event: Event, current_target: int) -> Optional[EventPackage]:
        if not self._buf:
            self._target = max(1, int(current_target))
        self._buf.append(event)
        if len(self._buf) >= self._target:
            return self._close(flushed=False)
        return None

    def expire(self, now_us: int) -> Optional[EventPackage]:
        """Flush-close the open package if its oldest event is older than ``max_age_us``."""
        if self.max_age_us is None or not self._buf:
            return None
        if now_us - self._buf[0].t > self.max_age_us:
            return self._close(flushed=True)
        return None

    def flush(self) -> Optional[EventPackage]:
        if not self._buf:
            return None
        return self._close(flushed=True)

    def _close(self, flushed: bool) -> EventPackage:
        pkg = EventPackage(self._k, tuple(self._buf), self._target, flushed=flushed)
        self._k += 1
        self._buf = []
        return pkg


def push_event(assembler: PackageAssembler, event: Event, current_target: int) -> Optional[EventPackage]:
    return assembler.push(event, current_target)
