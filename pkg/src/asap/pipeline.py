"""Closed-loop simulation: source -> filter -> packager -> FIFO -> processor.

Everything runs on a virtual clock measured in microseconds. Emitting,
filtering and packaging events take no virtual time; the processor is busy
for ``t_k`` seconds per package and finished packages feed ``t_k`` back to
the filter ceiling and to the size target of the next package to open.
"""

from __future__ import annotations

import logging
import math
import queue
import threading
import time
from array import array
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .config import AsapConfig
from .events import US_PER_S, Event, EventPackage, PackageMetrics, read_trace
from .gamma import GammaState, update_gamma_hat
from .packager import PackageAssembler, target_size
from .rate import RateBounds, RateTracker

log = logging.getLogger(__name__)

SENSOR_WIDTH = 346
SENSOR_HEIGHT = 260


class ScenarioError(ValueError):
    """Invalid scenario description."""


class WorkloadExhausted(RuntimeError):
    """A scripted workload ran out of processing times."""


class VirtualClock:
    """Monotone simulated time in microseconds (float, sub-µs resolution)."""

    def __init__(self, start_us: float = 0.0) -> None:
        self.mode = "virtual"
        self._now = float(start_us)

    @property
    def now(self) -> float:
        return self._now

    def advance_to(self, t_us: float) -> float:
        if t_us < self._now:
            raise ValueError(f"virtual clock cannot go back from {self._now} to {t_us}")
        self._now = float(t_us)
        return self._now

    def advance(self, dt_us: float) -> float:
        return self.advance_to(self._now + dt_us)


class WallClock:
    """Real time in microseconds since construction."""

    def __init__(self) -> None:
        self.mode = "wall"
        self._t0 = time.perf_counter()

    @property
    def now(self) -> float:
        return (time.perf_counter() - self._t0) * US_PER_S


# Workloads -----------------------------------------------------------------


class Workload:
    """Processing-time model ``t_k = g(s_k)`` possibly varying with virtual time."""

    kind = "abstract"

    def cost(self, s: int, now_us: float) -> float:
        raise NotImplementedError

    def reset(self) -> None:
        pass

    def switch_times(self) -> list[float]:
        """Virtual times (s) at which the cost law changes abruptly."""
        return []


@dataclass
class PowerLaw(Workload):
    """``beta0 + beta1 * s**p``."""

    beta0: float
    beta1: float
    p: int = 1
    kind = "power_law"

    def __post_init__(self) -> None:
        if self.beta0 < 0 or self.beta1 <= 0 or self.beta0 + self.beta1 <= 0:
            raise ScenarioError("power_law needs beta0 >= 0 and beta1 > 0")
        if self.p not in (1, 2, 3):
            raise ScenarioError("power_law exponent must be 1, 2 or 3")

    def __call__(self, s: float) -> float:
        return self.beta0 + self.beta1 * s**self.p

    def cost(self, s: int, now_us: float) -> float:
        return self(s)


@dataclass
class StepSchedule(Workload):
    """``n * (beta0 + beta1 * s**order)`` with ``(n, order)`` switched at given times.

    ``steps`` holds ``(switch_time_s, n, order)`` tuples sorted by time; the
    first applies from time zero regardless of its switch time.
    """

    beta0: float
    beta1: float
    steps: Sequence[tuple[float, float, int]]
    kind = "step_schedule"

    def __post_init__(self) -> None:
        if not self.steps:
            raise ScenarioError("step_schedule needs at least one step")
        self.steps = sorted((float(t), float(n), int(o)) for t, n, o in self.steps)
        if self.beta0 < 0 or self.beta1 <= 0:
            raise ScenarioError("step_schedule needs beta0 >= 0 and beta1 > 0")
        for _, n, order in self.steps:
            if n <= 0 or order not in (0, 1, 2, 3):
                raise ScenarioError(f"bad step n={n} order={order}")
        self._times = [t * US_PER_S for t, _, _ in self.steps]

    def active(self, now_us: float) -> tuple[float, int]:
        i = 0
        for j, t in enumerate(self._times):
            if now_us >= t:
                i = j
        _, n, order = self.steps[i]
        return n, order

    def cost(self, s: int, now_us: float) -> float:
        n, order = self.active(now_us)
        return n * (self.beta0 + self.beta1 * s**order)

    def switch_times(self) -> list[float]:
        return [t for t, _, _ in self.steps[1:]]


@dataclass
class Sinusoid(Workload):
    """Processing time swinging between ``t_lo`` and ``t_hi``, independent of size.

    Starts at ``t_lo`` at time zero and peaks at ``t_hi`` every half period.
    """

    t_lo: float
    t_hi: float
    period: float
    kind = "sinusoid"

    def __post_init__(self) -> None:
        if not 0 < self.t_lo < self.t_hi or self.period <= 0:
            raise ScenarioError("sinusoid needs 0 < t_lo < t_hi and period > 0")

    def cost(self, s: int, now_us: float) -> float:
        phase = 2.0 * math.pi * (now_us / US_PER_S) / self.period
        return self.t_lo + (self.t_hi - self.t_lo) * 0.5 * (1.0 - math.cos(phase))


@dataclass
class Scripted(Workload):
    """Explicit processing times consumed one per package."""

    times: Sequence[float]
    kind = "scripted"
    _cursor: int = field(default=0, init=False, repr=False)

    def __post_init__(self) -> None:
        if any(t <= 0 for t in self.times):
            raise ScenarioError("scripted processing times must be positive")

    def cost(self, s: int, now_us: float) -> float:
        if self._cursor >= len(self.times):
            raise WorkloadExhausted(f"script of {len(self.times)} processing times exhausted")
        t = self.times[self._cursor]
        self._cursor += 1
        return float(t)

    def reset(self) -> None:
        self._cursor = 0


def simulate_cost(workload: Workload, s_k: int, now_us: float = 0.0) -> float:
    if s_k < 1:
        raise ValueError("package size must be >= 1")
    return workload.cost(s_k, now_us)


# Delivery policies -----------------------------------------------------------


@dataclass(frozen=True)
class DeliveryPolicy:
    kind: str = "asap"
    size: Optional[int] = None
    rate_hz: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == "fixed_size" and (self.size is None or self.size < 1):
            raise ScenarioError("fixed_size policy needs size >= 1")
        if self.kind == "fixed_rate" and (self.rate_hz is None or self.rate_hz <= 0):
            raise ScenarioError("fixed_rate policy needs rate_hz > 0")
        if self.kind not in ("asap", "fixed_size", "fixed_rate"):
            raise ScenarioError(f"unknown policy {self.kind!r}")

    @classmethod
    def asap(cls) -> "DeliveryPolicy":
        return cls("asap")

    @classmethod
    def fixed_size(cls, n: int) -> "DeliveryPolicy":
        return cls("fixed_size", size=n)

    @classmethod
    def fixed_rate(cls, hz: float) -> "DeliveryPolicy":
        return cls("fixed_rate", rate_hz=hz)

    @property
    def label(self) -> str:
        if self.kind == "fixed_size":
            return f"fixed_size_{self.size}"
        if self.kind == "fixed_rate":
            return f"fixed_rate_{self.rate_hz:g}hz"
        return "asap"


# Sources -------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """Synthetic or recorded event source. Rates are in events per second.

    kinds:
      constant  ``rate``
      ramp      ``rates``: knots spread evenly over the duration, linear in between
      steps     ``steps``: ``(start_s, rate)`` pairs, piecewise constant
      bursts    ``rate`` baseline, ``peak_rate`` during the first ``duty`` of each ``period``
      trace     ``path`` to a ``t_us,x,y,p`` CSV, replayed verbatim
    """

    kind: str
    rate: float = 0.0
    rates: tuple[float, ...] = ()
    steps: tuple[tuple[float, float], ...] = ()
    peak_rate: float = 0.0
    period: float = 0.0
    duty: float = 0.0
    path: Optional[str] = None

    def __post_init__(self) -> None:
        k = self.kind
        if k == "constant":
            ok = self.rate > 0
        elif k == "ramp":
            ok = len(self.rates) >= 2 and all(r > 0 for r in self.rates)
        elif k == "steps":
            ok = bool(self.steps) and all(r > 0 for _, r in self.steps)
        elif k == "bursts":
            ok = self.rate > 0 and self.peak_rate > 0 and self.period > 0 and 0 < self.duty < 1
        elif k == "trace":
            ok = bool(self.path)
        else:
            raise ScenarioError(f"unknown source kind {k!r}")
        if not ok:
            raise ScenarioError(f"invalid parameters for {k} source")

    def rate_at(self, t_s: np.ndarray, duration: float) -> np.ndarray:
        t_s = np.asarray(t_s, dtype=float)
        if self.kind == "constant":
            return np.full_like(t_s, self.rate)
        if self.kind == "ramp":
            knots = np.linspace(0.0, duration, len(self.rates))
            return np.interp(t_s, knots, self.rates)
        if self.kind == "steps":
            starts = np.array([s for s, _ in self.steps])
            rates = np.array([r for _, r in self.steps])
            idx = np.clip(np.searchsorted(starts, t_s, side="right") - 1, 0, len(rates) - 1)
            return rates[idx]
        if self.kind == "bursts":
            in_burst = np.mod(t_s, self.period) < self.duty * self.period
            return np.where(in_burst, self.peak_rate, self.rate)
        raise ScenarioError("trace sources have no analytic rate")

    def peak(self) -> float:
        if self.kind == "constant":
            return self.rate
        if self.kind == "ramp":
            return max(self.rates)
        if self.kind == "steps":
            return max(r for _, r in self.steps)
        return max(self.rate, self.peak_rate)


def source_generate(
    spec: SourceSpec, duration: float, seed: int = 0, chunk: int = 1 << 16
) -> Iterator[Event]:
    """Lazily generate events over ``[0, duration)`` seconds.

    Arrivals are a Poisson process at the instantaneous target rate, drawn by
    thinning a homogeneous process at the peak rate. Pixel coordinates and
    polarity are uniform. Timestamps are floored to whole microseconds.
    """
    if spec.kind == "trace":
        yield from read_trace(spec.path)
        return
    rng = np.random.Generator(np.random.PCG64(seed))
    lam = spec.peak()
    t0 = 0.0
    while t0 < duration:
        gaps = rng.exponential(1.0 / lam, chunk)
        ts = t0 + np.cumsum(gaps)
        t0 = float(ts[-1])
        accept = rng.random(chunk) * lam < spec.rate_at(ts, duration)
        xs = rng.integers(0, SENSOR_WIDTH, chunk)
        ys = rng.integers(0, SENSOR_HEIGHT, chunk)
        ps = rng.random(chunk) < 0.5
        keep = accept & (ts < duration)
        t_us = np.floor(ts[keep] * US_PER_S).astype(np.int64)
        for t, x, y, p in zip(t_us.tolist(), xs[keep].tolist(), ys[keep].tolist(), ps[keep].tolist()):
            yield Event(t, x, y, p)


# Scenario ------------------------------------------------------------------


@dataclass
class Scenario:
    source: SourceSpec
    workload: Workload
    policy: DeliveryPolicy = field(default_factory=DeliveryPolicy.asap)
    duration: float = 1.0
    config: AsapConfig = field(default_factory=AsapConfig)
    seed: int = 0
    name: str = "scenario"
    record_gamma: bool = False

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")

    def events(self) -> Iterator[Event]:
        return source_generate(self.source, self.duration, seed=self.seed)


# Results -------------------------------------------------------------------


@dataclass(frozen=True)
class Delivery:
    """Timeline of one package through the queue and the processor (µs)."""

    k: int
    target: int
    size: int
    t_first: int
    t_last: int
    enqueue_us: float
    start_us: float
    end_us: float
    flushed: bool


@dataclass
class GammaTrace:
    """Per-event filter trace: index, timestamp, rate, keep probability, decision."""

    t_us: np.ndarray
    rate: np.ndarray
    gamma: np.ndarray
    kept: np.ndarray
    gamma_hat: list[tuple[float, float]]  # (virtual time µs, gamma_hat) after each feedback

    def __len__(self) -> int:
        return len(self.t_us)


@dataclass
class RunSummary:
    events_in: int = 0
    events_dropped: int = 0
    events_packaged: int = 0
    events_flushed: int = 0
    events_processed: int = 0
    packages: int = 0
    mean_tau: float = 0.0
    max_tau: float = 0.0
    max_queue_depth: int = 0
    queue_depth: list[tuple[float, int]] = field(default_factory=list)
    disturbances: list[int] = field(default_factory=list)
    nu: list[Optional[int]] = field(default_factory=list)

    @property
    def conserved(self) -> bool:
        return self.events_in == self.events_dropped + self.events_packaged + self.events_flushed


@dataclass
class RunResult:
    metrics: list[PackageMetrics]
    deliveries: list[Delivery]
    summary: RunSummary
    gamma_trace: Optional[GammaTrace] = None

    @property
    def t_series(self) -> list[float]:
        return [m.t_k for m in self.metrics]

    @property
    def tau_series(self) -> list[float]:
        return [m.tau_k for m in self.metrics]

    @property
    def size_series(self) -> list[int]:
        return [m.s_k for m in self.metrics]


# Engine --------------------------------------------------------------------


class _Processor:
    """Single-server FIFO with feedback on completion."""

    def __init__(self, workload: Workload, on_done: Callable[[float, float], None]) -> None:
        self.workload = workload
        self.on_done = on_done
        self.queue: deque[tuple[EventPackage, float, dict]] = deque()
        self.busy: Optional[tuple[EventPackage, float, float, float, dict]] = None
        self.depth_log: list[tuple[float, int]] = []
        self.done: list[tuple[EventPackage, float, float, float, dict]] = []

    def enqueue(self, pkg: EventPackage, when: float, info: dict) -> None:
        self.queue.append((pkg, when, info))
        self.depth_log.append((when, len(self.queue)))
        self.advance(when)

    def _start(self, at: float) -> None:
        pkg, enq, info = self.queue.popleft()
        self.depth_log.append((at, len(self.queue)))
        t_k = self.workload.cost(len(pkg), at)
        self.busy = (pkg, enq, at, t_k, info)

    def advance(self, now: float) -> None:
        """Run the server up to virtual time ``now`` (inclusive)."""
        while True:
            if self.busy is not None:
                pkg, enq, start, t_k, info = self.busy
                end = start + t_k * US_PER_S
                if end > now:
                    return
                self.busy = None
                self.done.append((pkg, enq, start, t_k, info))
                self.on_done(t_k, end)
                if self.queue:
                    self._start(max(end, self.queue[0][1]))
            elif self.queue:
                self._start(max(self.queue[0][1], 0.0))
            else:
                return

    def drain(self) -> None:
        self.advance(math.inf)


def run(scenario: Scenario) -> RunResult:
    """Execute a scenario on the virtual clock."""
    cfg = scenario.config
    policy = scenario.policy
    adaptive = policy.kind == "asap"
    workload = scenario.workload
    workload.reset()

    pparams = cfg.packager_params()
    gparams = cfg.gamma_params()
    table = cfg.taylor_table()
    gstate = GammaState(gparams, seed=scenario.seed ^ 0x5DEECE66D)
    tracker = RateTracker(cfg.window_us)
    bounds = RateBounds(cfg.alpha, cfg.rate_prior)
    assembler = PackageAssembler(cfg.max_package_age_us)
    clock = VirtualClock()

    # mutable loop state shared with the completion callback
    state = {"target": target_size(cfg.t_min, pparams, table) if adaptive else policy.size or 1}
    gamma_hat_log: list[tuple[float, float]] = []
    gstate.feedback(cfg.t_min)

    def on_done(t_k: float, end_us: float) -> None:
        if adaptive:
            gstate.gamma_hat = update_gamma_hat(gparams, t_k)
            state["target"] = target_size(t_k, pparams, table)
            gamma_hat_log.append((end_us, gstate.gamma_hat))

    proc = _Processor(workload, on_done)

    record = scenario.record_gamma
    tr_t, tr_r, tr_g, tr_k = array("q"), array("d"), array("d"), array("b")

    events_in = dropped = packaged = flushed_events = 0
    g_sum = 0.0
    g_n = 0
    drops_since = 0

    period_us = US_PER_S / policy.rate_hz if policy.kind == "fixed_rate" else None
    next_boundary = period_us

    def close(pkg: EventPackage, when: float) -> None:
        nonlocal g_sum, g_n, drops_since
        info = {"gamma_mean": g_sum / g_n if g_n else 1.0, "drops": drops_since}
        g_sum, g_n, drops_since = 0.0, 0, 0
        proc.enqueue(pkg, when, info)

    observe = tracker.observe
    update = bounds.update
    gamma_min = gparams.gamma_min
    draw = gstate.filter.keep
    push = assembler.push
    expire = assembler.expire if cfg.max_package_age_us is not None else None

    for ev in scenario.events():
        t = ev.t
        if t > clock.now:
            clock.advance_to(t)
        proc.advance(t)
        events_in += 1

        if period_us is not None:
            while t >= next_boundary:
                proc.advance(next_boundary)
                pkg = assembler.flush()
                if pkg is not None:
                    pkg = EventPackage(pkg.k, pkg.events, len(pkg.events), flushed=False)
                    packaged += len(pkg)
                    close(pkg, next_boundary)
                next_boundary += period_us
            proc.advance(t)

        r = observe(t)
        r_min, r_max = update(r)
        if adaptive:
            g_hat = gstate.gamma_hat
            if r_max > r_min:
                rc = r_min if r < r_min else (r_max if r > r_max else r)
                g = g_hat - (rc - r_min) / (r_max - r_min) * (g_hat - gamma_min)
            else:
                g = g_hat
            keep = draw(ev, g)
        else:
            g = 1.0
            keep = True
        g_sum += g
        g_n += 1
        if record:
            tr_t.append(t)
            tr_r.append(r)
            tr_g.append(g)
            tr_k.append(keep)
        if not keep:
            dropped += 1
            drops_since += 1
            continue

        if expire is not None:
            old = expire(t)
            if old is not None:
                flushed_events += len(old)
                close(old, t)

        if period_us is not None:
            push(ev, 1 << 62)
            continue
        pkg = push(ev, state["target"])
        if pkg is not None:
            packaged += len(pkg)
            close(pkg, t)

    last = assembler.flush()
    if last is not None:
        if period_us is not None:
            # the final window still closes on its boundary
            last = EventPackage(last.k, last.events, len(last.events), flushed=False)
            packaged += len(last)
            close(last, max(next_boundary, clock.now))
        else:
            flushed_events += len(last)
            close(last, max(last.t_last, clock.now))
    proc.drain()

    metrics, deliveries = [], []
    for pkg, enq, start, t_k, info in proc.done:
        metrics.append(
            PackageMetrics(
                k=pkg.k,
                s_k=len(pkg),
                t_k=t_k,
                tau_k=(start - enq) / US_PER_S,
                pi_k=pkg.building_time,
                gamma_mean=info["gamma_mean"],
                drop_count=info["drops"],
                flushed=pkg.flushed,
            )
        )
        deliveries.append(
            Delivery(pkg.k, pkg.target_size, len(pkg), pkg.t_first, pkg.t_last, enq, start, start + t_k * US_PER_S, pkg.flushed)
        )

    summary = summarize(metrics, proc.depth_log, workload, deliveries)
    summary.events_in = events_in
    summary.events_dropped = dropped
    summary.events_packaged = packaged
    summary.events_flushed = flushed_events
    summary.events_processed = sum(len(p) for p, *_ in proc.done)

    trace = None
    if record:
        trace = GammaTrace(
            np.frombuffer(tr_t, dtype=np.int64).copy(),
            np.frombuffer(tr_r, dtype=np.float64).copy(),
            np.frombuffer(tr_g, dtype=np.float64).copy(),
            np.frombuffer(tr_k, dtype=np.int8).astype(bool),
            gamma_hat_log,
        )
    return RunResult(metrics, deliveries, summary, trace)


def disturbance_indices(deliveries: Sequence[Delivery], workload: Workload) -> list[int]:
    """Index of the first package processed at or after each workload switch."""
    out = []
    for ts in workload.switch_times():
        t_us = ts * US_PER_S
        for i, d in enumerate(deliveries):
            if d.start_us >= t_us:
                out.append(i)
                break
    return out


def summarize(
    metrics: Sequence[PackageMetrics],
    depth_log: list[tuple[float, int]],
    workload: Workload,
    deliveries: Sequence[Delivery],
) -> RunSummary:
    from .analysis import SettlingError, settling_iterations

    taus = [m.tau_k for m in metrics]
    s = RunSummary(
        packages=len(metrics),
        mean_tau=float(np.mean(taus)) if taus else 0.0,
        max_tau=max(taus, default=0.0),
        max_queue_depth=max((d for _, d in depth_log), default=0),
        queue_depth=depth_log,
    )
    # flush-closed packages are partial and excluded from steady-state statistics
    steady = [i for i, m in enumerate(metrics) if not m.flushed]
    t_series = [metrics[i].t_k for i in steady]
    s.disturbances = disturbance_indices([deliveries[i] for i in steady], workload)
    bounds = s.disturbances + [len(t_series)]
    for i, d in enumerate(s.disturbances):
        try:
            s.nu.append(settling_iterations(t_series[: bounds[i + 1]], d))
        except SettlingError:
            s.nu.append(None)
    return s


# Wall-clock adapter ----------------------------------------------------------


class WallClockPipeline:
    """Runs the same control loop against real time with a user processor.

    Ingest, filtering and packaging run on the caller's thread; a worker
    thread pops packages from the queue, calls ``processor(package)`` and
    publishes the measured duration as feedback. Feedback is read only when a
    new package opens.
    """

    def __init__(
        self,
        processor: Callable[[EventPackage], object],
        config: AsapConfig | None = None,
        seed: int = 0,
        pace: bool = False,
    ) -> None:
        self.processor = processor
        self.config = config or AsapConfig()
        self.seed = seed
        self.pace = pace
        self._lock = threading.Lock()
        self._t_prev = self.config.t_min

    def _feedback(self) -> float:
        with self._lock:
            return self._t_prev

    def run(self, events: Iterable[Event]) -> list[PackageMetrics]:
        cfg = self.config
        pparams, gparams, table = cfg.packager_params(), cfg.gamma_params(), cfg.taylor_table()
        gstate = GammaState(gparams, seed=self.seed)
        tracker, bounds = RateTracker(cfg.window_us), RateBounds(cfg.alpha, cfg.rate_prior)
        assembler = PackageAssembler(cfg.max_package_age_us)
        clock = WallClock()
        q: queue.Queue = queue.Queue()
        metrics: list[PackageMetrics] = []

        def worker() -> None:
            while True:
                item = q.get()
                if item is None:
                    return
                pkg, enq, g_mean, drops = item
                start = clock.now
                t0 = time.perf_counter()
                self.processor(pkg)
                t_k = time.perf_counter() - t0
                with self._lock:
                    self._t_prev = t_k
                metrics.append(
                    PackageMetrics(pkg.k, len(pkg), t_k, max(0.0, (start - enq) / US_PER_S),
                                   pkg.building_time, g_mean, drops, pkg.flushed)
                )

        th = threading.Thread(target=worker, name="asap-processor", daemon=True)
        th.start()
        seen_t = None
        t_epoch = None
        g_sum, g_n, drops = 0.0, 0, 0
        for ev in events:
            if self.pace:
                if t_epoch is None:
                    t_epoch = ev.t - clock.now
                lag = (ev.t - t_epoch - clock.now) / US_PER_S
                if lag > 0:
                    time.sleep(lag)
            seen_t = ev.t
            r = tracker.observe(ev.t)
            r_min, r_max = bounds.update(r)
            if not assembler.is_open:
                gstate.feedback(self._feedback())
            g = gstate.gamma(r, r_min, r_max)
            g_sum, g_n = g_sum + g, g_n + 1
            if not gstate.filter.keep(ev, g):
                drops += 1
                continue
            target = target_size(self._feedback(), pparams, table) if not assembler.is_open else assembler.target
            pkg = assembler.push(ev, target)
            if pkg is not None:
                q.put((pkg, clock.now, g_sum / g_n, drops))
                g_sum, g_n, drops = 0.0, 0, 0
        tail = assembler.flush()
        if tail is not None:
            q.put((tail, clock.now, g_sum / g_n if g_n else 1.0, drops))
        q.put(None)
        th.join()
        log.debug("wall-clock run finished at event t=%s with %d packages", seen_t, len(metrics))
        return metrics
