"""Simulation configuration as a flat ``key = value`` text file."""

from dataclasses import dataclass, fields, replace

STRATEGIES = ("B1", "B2", "B3", "S1", "S2", "S3")
ENVELOPE_MODES = ("forecast", "exact")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    days: int = 30
    slot_minutes: int = 5
    eta: float = 0.93
    pi_deg: float = 10.0
    M: int = 1000
    N: int = 5
    H: int = 0
    lam: float = 0.0
    alpha: float = 0.95
    strategy: str = "S2"
    seed: int = 0
    sessions_path: str = ""
    prices_path: str = ""
    history_days: int = 60
    warmup_days: int = 7
    fleet_size: int = 1000
    retrain_slots: int = 288
    horizon_slots: int = 576
    chi: float = 1.0e4
    smoothing: float = 0.3
    forecast_days: int = 14
    envelope_mode: str = "forecast"
    envelope_margin_kwh: float = 0.0
    trace_ev: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def slot_hours(self):
        return self.slot_minutes / 60.0

    @property
    def slots_per_day(self):
        return 1440 // self.slot_minutes

    def validate(self):
        bad = []
        if self.days < 1:
            bad.append("days >= 1")
        if self.slot_minutes <= 0 or 1440 % self.slot_minutes:
            bad.append("slot_minutes must divide a day")
        if not 0.0 < self.eta <= 1.0:
            bad.append("0 < eta <= 1")
        if self.pi_deg < 0.0:
            bad.append("pi_deg >= 0")
        if self.M < 2:
            bad.append("M >= 2")
        if self.N < 1:
            bad.append("N >= 1")
        if self.H < 0:
            bad.append("H >= 0")
        if not 0.0 <= self.lam <= 1.0:
            bad.append("0 <= lam <= 1")
        if not 0.0 < self.alpha < 1.0:
            bad.append("0 < alpha < 1")
        if self.strategy not in STRATEGIES:
            bad.append(f"strategy in {STRATEGIES}")
        if self.history_days < 2:
            bad.append("history_days >= 2")
        if self.warmup_days < 0 or self.warmup_days > self.history_days:
            bad.append("0 <= warmup_days <= history_days")
        if self.fleet_size < 0:
            bad.append("fleet_size >= 0")
        if self.retrain_slots < 1:
            bad.append("retrain_slots >= 1")
        if self.horizon_slots < self.retrain_slots:
            bad.append("horizon_slots >= retrain_slots")
        if self.chi <= 0.0:
            bad.append("chi > 0")
        if not 0.0 < self.smoothing <= 1.0:
            bad.append("0 < smoothing <= 1")
        if self.forecast_days < 1:
            bad.append("forecast_days >= 1")
        if self.envelope_mode not in ENVELOPE_MODES:
            bad.append(f"envelope_mode in {ENVELOPE_MODES}")
        if self.envelope_margin_kwh < 0.0:
            bad.append("envelope_margin_kwh >= 0")
        if bad:
            raise ConfigError("invalid config: " + "; ".join(bad))

    def with_(self, **kw):
        return replace(self, **kw)


_FIELDS = {f.name: f.type for f in fields(SimConfig)}
_CAST = {"int": int, "float": float, "str": str, int: int, float: float, str: str}


def parse_config(text, **overrides):
    vals = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {n}: unknown key '{key}'")
        try:
            vals[key] = _CAST[_FIELDS[key]](val)
        except ValueError:
            raise ConfigError(f"line {n}: bad value for {key}: {val!r}") from None
    vals.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(vals) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    return SimConfig(**vals)


def load_config(path, **overrides):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)


def dump_config(cfg):
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(SimConfig))
