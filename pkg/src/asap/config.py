"""Run configuration shared by the filter, the packager and the harness."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping, Optional

from .gamma import GammaParams
from .packager import PackagerParams, TaylorTable, build_taylor_table


@dataclass(frozen=True)
class AsapConfig:
    gamma_min: float = 0.2
    gamma_max: float = 1.0
    t_min: float = 1e-6
    t_max: float = 0.1
    s_min: int = 1
    s_max: int = 1000
    kappa: float = 5.0
    alpha: float = 0.9999
    window_us: int = 1000
    use_taylor: bool = False
    taylor_order: int = 5
    taylor_points: int = 64
    max_package_age_us: Optional[int] = None
    # optional starting r_min / r_max (events/s); unset means seed from the first event
    rate_min_init: Optional[float] = None
    rate_max_init: Optional[float] = None

    def __post_init__(self) -> None:
        # construct once so invalid bounds fail at config time
        self.gamma_params()
        self.packager_params()
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.window_us <= 0:
            raise ValueError("window_us must be positive")
        if (self.rate_min_init is None) != (self.rate_max_init is None):
            raise ValueError("rate_min_init and rate_max_init must be set together")
        if self.rate_min_init is not None and not 0 < self.rate_min_init <= self.rate_max_init:
            raise ValueError("need 0 < rate_min_init <= rate_max_init")

    @property
    def rate_prior(self) -> Optional[tuple[float, float]]:
        if self.rate_min_init is None:
            return None
        return (self.rate_min_init, self.rate_max_init)

    def gamma_params(self) -> GammaParams:
        return GammaParams(self.gamma_min, self.gamma_max, self.t_min, self.t_max)

    def packager_params(self) -> PackagerParams:
        return PackagerParams(self.s_min, self.s_max, self.t_min, self.t_max, self.kappa)

    def taylor_table(self) -> Optional[TaylorTable]:
        if not self.use_taylor:
            return None
        return build_taylor_table(self.packager_params(), self.taylor_order, self.taylor_points)

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "AsapConfig":
        """Build from string or typed values; unknown keys raise ``KeyError``."""
        base = cls()
        kwargs = {}
        for key, raw in values.items():
            if key not in cls.keys():
                raise KeyError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(getattr(base, key), key, raw)
        return replace(base, **kwargs)


def _coerce(default: Any, key: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key in ("max_package_age_us", "rate_min_init", "rate_max_init"):
        if text.lower() in ("", "none"):
            return None
        return int(text) if key == "max_package_age_us" else float(text)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(text)
    return float(text)
