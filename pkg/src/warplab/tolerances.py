"""Numerical tolerances shared across modules."""

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    endpoint: float = 1e-6  # |f(0)|, |f(L)|
    endpoint_slope: float = 1e-3  # |f'(0) - 1|, |f'(L) + 1| on sampled data
    pos_rel: float = 1e-6  # pole guard, relative to L
    crit: float = 1e-6  # |f'| counted as zero
    quad: float = 1e-8
    scalar_rel: float = 1e-6
    sign: float = 1e-6
    lip: float = 1e-4
    area: float = 1e-9
    cone: float = 0.02
    dist_rel: float = 1e-6

    def pole_guard(self, length):
        return self.pos_rel * length

    def with_overrides(self, **overrides):
        known = {f.name for f in fields(self)}
        for name, value in overrides.items():
            if name not in known:
                raise KeyError(f"unknown tolerance {name!r}")
            if not value > 0:
                raise ValueError(f"tolerance {name} must be positive, got {value}")
        return replace(self, **overrides)


DEFAULT_TOLERANCES = Tolerances()
