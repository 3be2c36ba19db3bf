"""Convergence of the size/processing-time loop and settling metrics.

With processing time ``t = g(s)`` positive and increasing, and the next size
``s' = f(t)`` increasing, the package-size sequence ``s_{k+1} = f(g(s_k))`` is
monotone and bounded, hence convergent. ``fixed_point_iterate`` follows the
sequence; ``fixed_point_bisect`` locates the limit independently as a root of
``f(g(s)) - s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .packager import PackagerParams


class NoFixedPoint(ArithmeticError):
    pass


class SettlingError(ValueError):
    """The series never settles into the band, so settling iterations are undefined."""


@dataclass
class IterationTrace:
    s: list[float]
    classification: str
    limit: Optional[float]
    iterations_to_converge: int
    converged: bool = field(default=False)


def classify(seq: Sequence[float], tol: float = 0.0) -> str:
    """Label a sequence constant, strictly_increasing, strictly_decreasing or mixed.

    Steps no larger than ``tol`` count as zero. Zero steps after the sequence
    has started moving are allowed: a clamped map can reach its limit in
    finitely many steps.
    """
    signs = set()
    for a, b in zip(seq, seq[1:]):
        if b - a > tol:
            signs.add(1)
        elif a - b > tol:
            signs.add(-1)
    if len(signs) > 1:
        return "mixed"
    if not signs:
        return "constant"
    return "strictly_increasing" if 1 in signs else "strictly_decreasing"


def fixed_point_iterate(
    params: PackagerParams,
    g: Callable[[float], float],
    s0: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    clamp: bool = True,
) -> IterationTrace:
    """Iterate ``s <- A*phi(g(s)) + B`` without rounding until steps fall below ``tol``."""
    if not s0 > 0:
        raise ValueError("s0 must be positive")
    seq = [float(s0)]
    s = float(s0)
    converged = False
    for _ in range(max_iter):
        nxt = params.size_real(g(s), clamp=clamp)
        seq.append(nxt)
        if abs(nxt - s) < tol:
            converged = True
            s = nxt
            break
        s = nxt
    return IterationTrace(
        s=seq,
        classification=classify(seq, tol),
        limit=s if converged else None,
        iterations_to_converge=len(seq) - 1,
        converged=converged,
    )


def fixed_point_bisect(
    params: PackagerParams,
    g: Callable[[float], float],
    tol: float = 1e-9,
    clamp: bool = True,
    max_iter: int = 500,
) -> float:
    """Root of ``h(s) = f(g(s)) - s`` by plain bisection.

    The bracket covers ``[s_min, s_max]`` widened to the range of the
    unclamped sizing law, ``(B - A*pi/2, B + A*pi/2)``, restricted to s > 0.
    """

    def h(s: float) -> float:
        return params.size_real(g(s), clamp=clamp) - s

    f_lo, f_hi = params.f_bounds
    lo = max(min(params.s_min, f_lo), 1e-12)
    hi = max(params.s_max, f_hi)
    h_lo, h_hi = h(lo), h(hi)
    if h_lo == 0:
        return lo
    if h_hi == 0:
        return hi
    if (h_lo > 0) == (h_hi > 0):
        side = "above" if h_lo > 0 else "below"
        raise NoFixedPoint(f"f(g(s)) stays {side} the identity on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        h_mid = h(mid)
        if h_mid == 0 or hi - lo < tol:
            return mid
        if (h_mid > 0) == (h_lo > 0):
            lo, h_lo = mid, h_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sign_changes(params: PackagerParams, g: Callable[[float], float], samples: int = 4001, clamp: bool = True) -> int:
    """Count sign changes of ``f(g(s)) - s`` on an even grid over the bisection bracket."""
    f_lo, f_hi = params.f_bounds
    lo = max(min(params.s_min, f_lo), 1e-12)
    hi = max(params.s_max, f_hi)
    prev = None
    changes = 0
    for i in range(samples):
        s = lo + (hi - lo) * i / (samples - 1)
        v = params.size_real(g(s), clamp=clamp) - s
        sgn = (v > 0) - (v < 0)
        if sgn == 0:
            continue
        if prev is not None and sgn != prev:
            changes += 1
        prev = sgn
    return changes


def settling_iterations(
    series: Sequence[float], disturbance_index: int, band: float = 0.01, min_tail: int = 1
) -> int:
    """Samples after a disturbance before the series enters and stays in ``±band`` of its steady mean.

    The steady mean is the mean of the final quarter of the post-disturbance
    samples. Values exactly on the band edge count as outside.
    """
    if not series:
        raise SettlingError("empty series")
    if not 0 <= disturbance_index < len(series):
        raise SettlingError(f"disturbance index {disturbance_index} out of range")
    post = list(series[disturbance_index:])
    q = max(1, len(post) // 4)
    mean = math.fsum(post[-q:]) / q
    width = band * abs(mean) * (1.0 - 1e-9)

    def inside(v: float) -> bool:
        return abs(v - mean) < width

    nu = len(post)
    for i in range(len(post) - 1, -1, -1):
        if inside(post[i]):
            nu = i
        else:
            break
    if len(post) - nu < min_tail:
        raise SettlingError(
            f"only {len(post) - nu} trailing samples within ±{band:.0%} of {mean:g}"
        )
    return nu


def convergence_grid(
    params: PackagerParams,
    betas0: Sequence[float],
    betas1: Sequence[float],
    clamp: bool = True,
    tol: float = 1e-9,
) -> list[tuple[float, float, float]]:
    """``(beta0, beta1, s_star)`` for the affine cost ``beta0 + beta1*s`` over a grid."""
    out = []
    for b0 in betas0:
        for b1 in betas1:
            s_star = fixed_point_bisect(params, lambda s, b0=b0, b1=b1: b0 + b1 * s, tol=tol, clamp=clamp)
            out.append((b0, b1, s_star))
    return out


def lsq_slope(y: Sequence[float], x: Optional[Sequence[float]] = None) -> float:
    """Ordinary least-squares slope of ``y`` against ``x`` (default: sample index)."""
    n = len(y)
    if n < 2:
        return 0.0
    xs = list(range(n)) if x is None else list(x)
    mx = math.fsum(xs) / n
    my = math.fsum(y) / n
    sxx = math.fsum((a - mx) ** 2 for a in xs)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(xs, y))
    return sxy / sxx if sxx else 0.0
