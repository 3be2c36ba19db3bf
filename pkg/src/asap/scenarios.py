"""Scenario files and the built-in experiment presets.

Scenario files are flat ``key = value`` lists (``#`` comments allowed)::

    name = demo
    duration = 2.0
    seed = 7
    source = constant              # constant | ramp | steps | bursts | trace
    source.rate = 70000            # events/s
    workload = step_schedule       # power_law | step_schedule | sinusoid | scripted
    workload.beta0 = 2e-5
    workload.beta1 = 1e-8
    workload.steps = 0:1:1, 0.75:25:1
    policy = asap                  # asap | fixed_size | fixed_rate
    gamma_trace = false
    kappa = 5                      # any AsapConfig field

Source keys: ``source.rate``, ``source.rates`` (comma list of ramp knots),
``source.steps`` (``start_s:rate`` pairs), ``source.peak_rate``,
``source.period``, ``source.duty``, ``source.path``.
Workload keys: ``workload.beta0``, ``workload.beta1``, ``workload.p``,
``workload.steps`` (``switch_s:n:order`` triples), ``workload.t_lo``,
``workload.t_hi``, ``workload.period``, ``workload.times`` (comma list).
Policy keys: ``policy.size``, ``policy.rate_hz``.
"""

from __future__ import annotations

import configparser
from dataclasses import replace
from pathlib import Path
from typing import Mapping

from .config import AsapConfig
from .pipeline import (
    DeliveryPolicy,
    PowerLaw,
    Scenario,
    ScenarioError,
    Scripted,
    Sinusoid,
    SourceSpec,
    StepSchedule,
    Workload,
)

EV_PER_MS = 1000.0

SCENARIO_KEYS = ("name", "duration", "seed", "source", "workload", "policy", "gamma_trace")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _tuples(text: str) -> list[tuple[float, ...]]:
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if item:
            out.append(tuple(float(v) for v in item.split(":")))
    return out


def parse_scenario_text(text: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise ScenarioError(f"unreadable scenario: {exc}") from exc
    return dict(cp["scenario"])


def scenario_from_mapping(values: Mapping[str, str], base_dir: Path | None = None) -> Scenario:
    values = dict(values)
    try:
        return _build(values, base_dir)
    except ScenarioError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ScenarioError(str(exc)) from exc


def _build(values: dict[str, str], base_dir: Path | None) -> Scenario:
    src_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("source.")}
    wl_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("workload.")}
    pol_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("policy.")}
    cfg_kw = {
        k: v for k, v in values.items() if "." not in k and k not in SCENARIO_KEYS
    }
    unknown = set(cfg_kw) - set(AsapConfig.keys())
    if unknown:
        raise ScenarioError(f"unknown keys: {', '.join(sorted(unknown))}")
    config = AsapConfig.from_mapping(cfg_kw)

    kind = values.get("source", "constant").strip()
    spec_args: dict = {"kind": kind}
    for key, raw in src_kw.items():
        if key in ("rate", "peak_rate", "period", "duty"):
            spec_args[key] = float(raw)
        elif key == "rates":
            spec_args[key] = _floats(raw)
        elif key == "steps":
            spec_args[key] = tuple((a, b) for a, b in _tuples(raw))
        elif key == "path":
            path = Path(raw.strip())
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            spec_args[key] = str(path)
        else:
            raise ScenarioError(f"unknown source key source.{key}")
    source = SourceSpec(**spec_args)

    workload = _workload(values.get("workload", "power_law").strip(), wl_kw)

    pkind = values.get("policy", "asap").strip()
    policy = DeliveryPolicy(
        pkind,
        size=int(pol_kw["size"]) if "size" in pol_kw else None,
        rate_hz=float(pol_kw["rate_hz"]) if "rate_hz" in pol_kw else None,
    )
    record = values.get("gamma_trace", "false").strip().lower() in ("1", "true", "yes", "on")
    return Scenario(
        source=source,
        workload=workload,
        policy=policy,
        duration=float(values.get("duration", "1.0")),
        config=config,
        seed=int(values.get("seed", "0")),
        name=values.get("name", "scenario").strip(),
        record_gamma=record,
    )


def _workload(kind: str, kw: dict[str, str]) -> Workload:
    if kind == "power_law":
        return PowerLaw(float(kw["beta0"]), float(kw["beta1"]), int(kw.get("p", "1")))
    if kind == "step_schedule":
        steps = [(t, n, int(o)) for t, n, o in _tuples(kw["steps"])]
        return StepSchedule(float(kw.get("beta0", "0")), float(kw["beta1"]), steps)
    if kind == "sinusoid":
        return Sinusoid(float(kw["t_lo"]), float(kw["t_hi"]), float(kw["period"]))
    if kind == "scripted":
        return Scripted(list(_floats(kw["times"])))
    raise ScenarioError(f"unknown workload kind {kind!r}")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_mapping(parse_scenario_text(text), base_dir=path.parent)


# Presets ---------------------------------------------------------------------

# Constant-rate bench source used by the packaging experiments (~70 ev/ms).
BENCH_RATE = 70 * EV_PER_MS

STEP_SWITCH_S = 0.75
SWEEP_SEQUENCE = (10, 50, 200, 500, 200, 50, 10)
SWEEP_SEGMENT_S = 0.5
# per-event cost coefficient for each complexity order; overhead shared
SWEEP_BETA0 = 2e-7
SWEEP_BETA1 = {1: 2e-9, 2: 1e-11, 3: 5e-14}

RAMP_LOW = 500 * EV_PER_MS
RAMP_HIGH = 8000 * EV_PER_MS
RAMP_DURATION_S = 0.5
RAMP_ALPHA = 1.0 - 1e-7

OVERFLOW_WORKLOAD = (2e-3, 1e-6)
STATIC_POLICIES = (
    DeliveryPolicy.asap(),
    DeliveryPolicy.fixed_size(10),
    DeliveryPolicy.fixed_size(500),
    DeliveryPolicy.fixed_size(1000),
    DeliveryPolicy.fixed_rate(50),
    DeliveryPolicy.fixed_rate(100),
    DeliveryPolicy.fixed_rate(500),
)

GRID_BOUNDS = dict(s_min=1, s_max=1000, t_min=1e-6, t_max=0.1)
GRID_BETAS = tuple(round(0.01 * (i + 1), 2) for i in range(10))

PRESETS = (
    "step-complexity",
    "complexity-sweep",
    "rate-ramp",
    "sinusoid-cost",
    "static-comparison",
    "convergence-grid",
)


def step_complexity(seed: int = 0) -> Scenario:
    """Cheap processing switching to 25x the cost halfway through."""
    return Scenario(
        source=SourceSpec("constant", rate=BENCH_RATE),
        workload=StepSchedule(2e-5, 1e-8, [(0.0, 1, 1), (STEP_SWITCH_S, 25, 1)]),
        duration=2 * STEP_SWITCH_S,
        seed=seed,
        name="step-complexity",
    )


def complexity_sweep(seed: int = 0) -> list[Scenario]:
    out = []
    for p, beta1 in SWEEP_BETA1.items():
        steps = [(i * SWEEP_SEGMENT_S, n, p) for i, n in enumerate(SWEEP_SEQUENCE)]
        out.append(
            Scenario(
                source=SourceSpec("constant", rate=BENCH_RATE),
                workload=StepSchedule(SWEEP_BETA0, beta1, steps),
                duration=SWEEP_SEGMENT_S * len(SWEEP_SEQUENCE),
                seed=seed,
                name=f"complexity-sweep-p{p}",
            )
        )
    return out


def rate_ramp(seed: int = 0, prior: bool = True, record_gamma: bool = True) -> Scenario:
    """Rate climbing from 500 to 8000 ev/ms and back under a constant processing time.

    The rate extremes start from the source's nominal range and forget slowly
    so that keep probability is comparable across the whole ramp.
    """
    cfg = AsapConfig(alpha=RAMP_ALPHA)
    if prior:
        cfg = replace(cfg, rate_min_init=RAMP_LOW, rate_max_init=RAMP_HIGH)
    return Scenario(
        source=SourceSpec("ramp", rates=(RAMP_LOW, RAMP_HIGH, RAMP_LOW)),
        workload=StepSchedule(5e-6, 1e-9, [(0.0, 1, 0)]),
        duration=RAMP_DURATION_S,
        config=cfg,
        seed=seed,
        name="rate-ramp",
        record_gamma=record_gamma,
    )


def sinusoid_cost(seed: int = 0) -> Scenario:
    """Processing time oscillating across the whole ``[t_min, t_max]`` range while the rate rises."""
    cfg = AsapConfig()
    return Scenario(
        source=SourceSpec("ramp", rates=(2 * EV_PER_MS, 20 * EV_PER_MS)),
        workload=Sinusoid(cfg.t_min, cfg.t_max, 5.0),
        duration=10.0,
        config=cfg,
        seed=seed,
        name="sinusoid-cost",
        record_gamma=True,
    )


def static_comparison(seed: int = 0, duration: float = 2.0) -> list[Scenario]:
    b0, b1 = OVERFLOW_WORKLOAD
    return [
        Scenario(
            source=SourceSpec("constant", rate=BENCH_RATE),
            workload=PowerLaw(b0, b1, 1),
            policy=policy,
            duration=duration,
            seed=seed,
            name=f"static-comparison-{policy.label}",
        )
        for policy in STATIC_POLICIES
    ]


def preset_scenarios(name: str, seed: int = 0) -> list[Scenario]:
    if name == "step-complexity":
        return [step_complexity(seed)]
    if name == "complexity-sweep":
        return complexity_sweep(seed)
    if name == "rate-ramp":
        return [rate_ramp(seed)]
    if name == "sinusoid-cost":
        return [sinusoid_cost(seed)]
    if name == "static-comparison":
        return static_comparison(seed)
    if name == "convergence-grid":
        return []
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
