"""Synthetic EV fleets: CC-CV charging simulator, fault injection, capacity labels
and anonymization.

The cell model is a deliberately small equivalent circuit: terminal voltage is
``ocv(soc) + I * R``, SOC integrates a zero-order-hold current, and temperature
is a first-order lag on ``I**2 * R`` heating.  Pack-level current is used with a
per-cell effective resistance, so ``R`` is in the milliohm range.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import (AVG_VOLT, CURRENT, MAX_TEMP, MAX_VOLT, MIN_TEMP, MIN_VOLT, N_CHANNELS, SOC,
                   TIMESTAMP, ChargingSnippet, Vehicle, extract_snippets)

FAULT_KINDS = ("resistance_drift", "voltage_fluctuation", "accelerated_fade", "cell_imbalance")

# (soc %, volts); strictly increasing, spans both label voltages
DEFAULT_OCV = ((0.0, 3.40), (10.0, 3.55), (30.0, 3.65), (60.0, 3.85), (90.0, 4.05), (100.0, 4.20))

LABEL_V_LOW = 3.77
LABEL_V_HIGH = 4.05
LABEL_CURRENT = 35.0


@dataclass(frozen=True)
class BatteryState:
    nominal_capacity: float
    fade_fraction: float = 0.0
    internal_resistance: float = 0.003
    ocv_curve: tuple = DEFAULT_OCV
    temperature_base: float = 25.0
    cell_spread: float = 0.01
    thermal_gain: float = 3.0       # degC per watt of I^2 R heating
    thermal_tau: float = 1200.0     # s

    def __post_init__(self):
        soc_knots, volt_knots = self.knots
        if np.any(np.diff(soc_knots) <= 0) or np.any(np.diff(volt_knots) <= 0):
            raise ValueError("ocv_curve must be strictly increasing in soc and voltage")
        if not 0.0 <= self.fade_fraction <= 1.0:
            raise ValueError("fade_fraction must lie in [0, 1]")
        if self.internal_resistance < 0:
            raise ValueError("internal_resistance must be non-negative")
        if self.effective_capacity <= 0:
            raise ValueError("effective capacity must be positive")

    @property
    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.asarray(self.ocv_curve, dtype=np.float64)
        return arr[:, 0], arr[:, 1]

    @property
    def effective_capacity(self) -> float:
        return self.nominal_capacity * (1.0 - self.fade_fraction)

    def ocv(self, soc):
        s, v = self.knots
        return np.interp(soc, s, v)

    def soc_at(self, volts):
        s, v = self.knots
        return np.interp(volts, v, s)


@dataclass(frozen=True)
class ChargeProtocol:
    precharge_current: float = 5.0
    cc_current: float = 35.0
    cv_voltage: float = 4.15
    dt: float = 30.0
    start_soc: float = 20.0
    precharge_soc: float = 10.0
    cutoff_fraction: float = 0.05
    cv_tau: float = 600.0
    start_time: float = 0.0
    # charging-station current ripple during CC (not a battery property)
    ripple_amplitude: float = 0.0
    ripple_period: float = 300.0
    ripple_start: float = 0.0
    ripple_duration: float = 0.0


def _temperatures(state: BatteryState, current: np.ndarray, r: float, dt: float):
    heat = state.temperature_base + state.thermal_gain * current ** 2 * r
    a = math.exp(-dt / state.thermal_tau)
    # T[k+1] = a T[k] + (1 - a) heat[k], T[0] = base
    temp = lfilter([0.0, 1.0 - a], [1.0, -a], heat, zi=[state.temperature_base])[0]
    return temp


def simulate_charge(state: BatteryState, protocol: ChargeProtocol) -> np.ndarray:
    """Simulate pre-charge, constant-current and constant-voltage phases.

    Returns an ``(n, 8)`` record in the canonical channel order.  Current is held
    constant over each sample interval and SOC is its exact integral.
    """
    p = protocol
    if p.dt <= 0:
        raise ValueError("dt must be positive")
    soc_knots, volt_knots = state.knots
    if not volt_knots[0] <= p.cv_voltage <= volt_knots[-1]:
        raise ValueError("cv_voltage outside the OCV curve range")
    if not 0.0 <= p.start_soc < 100.0:
        raise ValueError("start_soc must lie in [0, 100)")
    r = state.internal_resistance
    if p.cv_voltage <= state.ocv(p.start_soc):
        raise ValueError("unreachable setpoint: cv_voltage below starting OCV")
    pct_per_amp_step = p.dt / (36.0 * state.effective_capacity)  # % soc per A per sample

    currents = []
    volts = []
    soc = p.start_soc

    # pre-charge at low current until the threshold soc
    if soc < p.precharge_soc:
        n_pre = math.ceil((p.precharge_soc - soc) / (p.precharge_current * pct_per_amp_step))
        i_pre = np.full(n_pre, p.precharge_current)
        soc_pre = soc + pct_per_amp_step * np.concatenate([[0.0], np.cumsum(i_pre)[:-1]])
        currents.append(i_pre)
        volts.append(state.ocv(soc_pre) + i_pre * r)
        soc = soc + pct_per_amp_step * i_pre.sum()

    # constant current until the terminal voltage reaches the setpoint
    i_min = p.cc_current - abs(p.ripple_amplitude)
    if i_min <= 0:
        raise ValueError("ripple amplitude exceeds cc_current")
    horizon = math.ceil((100.0 - soc) / (i_min * pct_per_amp_step)) + 2
    tau = np.arange(horizon) * p.dt
    i_cc = np.full(horizon, float(p.cc_current))
    if p.ripple_amplitude and p.ripple_duration > 0:
        on = (tau >= p.ripple_start) & (tau < p.ripple_start + p.ripple_duration)
        i_cc[on] += p.ripple_amplitude * np.sin(2 * np.pi * (tau[on] - p.ripple_start) / p.ripple_period)
    soc_cc = soc + pct_per_amp_step * np.concatenate([[0.0], np.cumsum(i_cc)[:-1]])
    v_cc = state.ocv(soc_cc) + i_cc * r
    reached = np.flatnonzero((v_cc >= p.cv_voltage) | (soc_cc >= 100.0))
    n_cc = int(reached[0]) if reached.size else horizon
    currents.append(i_cc[:n_cc])
    volts.append(v_cc[:n_cc])
    soc = soc_cc[n_cc] if n_cc < horizon else soc_cc[-1]

    # constant voltage with exponentially decaying current
    ocv_now = float(state.ocv(soc))
    i_cv0 = p.cc_current if r == 0 else min(p.cc_current, max((p.cv_voltage - ocv_now) / r, 0.0))
    cutoff = p.cutoff_fraction * p.cc_current
    if i_cv0 >= cutoff:
        n_cv = int(math.floor(p.cv_tau / p.dt * math.log(i_cv0 / cutoff))) + 1
        i_cv = i_cv0 * np.exp(-np.arange(n_cv) * p.dt / p.cv_tau)
        soc_cv = soc + pct_per_amp_step * np.concatenate([[0.0], np.cumsum(i_cv)[:-1]])
        keep = soc_cv < 100.0
        currents.append(i_cv[keep])
        volts.append(np.full(int(keep.sum()), p.cv_voltage))

    current = np.concatenate(currents)
    volt = np.concatenate(volts)
    n = current.size
    soc_series = p.start_soc + pct_per_amp_step * np.concatenate([[0.0], np.cumsum(current)[:-1]])
    soc_series = np.minimum(soc_series, 100.0)
    spread = state.cell_spread * (1.0 + current / 50.0)
    temp = _temperatures(state, current, r, p.dt)

    out = np.empty((n, N_CHANNELS))
    out[:, AVG_VOLT] = volt
    out[:, CURRENT] = current
    out[:, MAX_VOLT] = volt + 0.6 * spread
    out[:, MIN_VOLT] = volt - 0.4 * spread
    out[:, MAX_TEMP] = temp + 1.0 + 0.02 * current
    out[:, MIN_TEMP] = temp - 0.8
    out[:, SOC] = soc_series
    out[:, TIMESTAMP] = p.start_time + np.arange(n) * p.dt
    return out


def capacity_label(record, v_low: float = LABEL_V_LOW, v_high: float = LABEL_V_HIGH,
                   i_ref: float = LABEL_CURRENT, current_tol: float = 1.0) -> float | None:
    """Charge in A*h between the first upward crossings of ``v_low`` and ``v_high``.

    The record is only eligible when the current stays within ``current_tol`` of
    ``i_ref`` across the whole span; otherwise ``None`` is returned.
    """
    record = np.asarray(record, dtype=np.float64)
    v = record[:, AVG_VOLT]
    i = record[:, CURRENT]
    t = record[:, TIMESTAMP]

    def first_up_crossing(level, start=1):
        idx = np.flatnonzero((v[start - 1:-1] < level) & (v[start:] >= level))
        if idx.size == 0:
            return None
        k = int(idx[0]) + start
        frac = (level - v[k - 1]) / (v[k] - v[k - 1])
        return k, t[k - 1] + frac * (t[k] - t[k - 1])

    if v.size < 2:
        return None
    lo = first_up_crossing(v_low)
    if lo is None:
        return None
    hi = first_up_crossing(v_high, start=lo[0])
    if hi is None:
        return None
    (k_lo, t_lo), (k_hi, t_hi) = lo, hi
    if np.any(np.abs(i[k_lo - 1:k_hi + 1] - i_ref) > current_tol):
        return None
    t_span = np.concatenate([[t_lo], t[k_lo:k_hi], [t_hi]])
    i_span = np.interp(t_span, t, i)
    return float(np.trapezoid(i_span, t_span) / 3600.0)


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    severity: float
    onset_fraction: float

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if not 0.0 < self.severity <= 1.0:
            raise ValueError("severity must lie in (0, 1]")
        if not 0.0 <= self.onset_fraction <= 1.0:
            raise ValueError("onset_fraction must lie in [0, 1]")


@dataclass
class GenConfig:
    seed: int = 0
    n_normal: int = 20
    n_anomalous: int = 5
    records_per_vehicle: int = 20
    # when set, records are generated until this many snippets exist
    snippets_per_vehicle: int | None = None
    truncation_probability: float = 0.2
    noise_std: dict = field(default_factory=lambda: {"voltage": 0.001, "current": 0.05,
                                                     "temperature": 0.1})
    anonymize: bool = False
    perturbation: float = 0.005
    stride: int = 64
    dt: float = 30.0
    fault_kinds: tuple = FAULT_KINDS
    fault_severity: float = 0.6
    transient_fraction: float = 0.3
    ripple_probability: float = 0.25
    capacity_band: tuple = (28.28, 46.23)

    def __post_init__(self):
        if self.n_normal < 0 or self.n_anomalous < 0 or self.records_per_vehicle < 0:
            raise ValueError("counts must be non-negative")
        for name in ("truncation_probability", "transient_fraction", "ripple_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_anomalous and not self.fault_kinds:
            raise ValueError("anomalous vehicles need at least one fault kind")
        self.fault_kinds = tuple(self.fault_kinds)
        self.capacity_band = tuple(self.capacity_band)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown GenConfig fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fault_kinds"] = list(self.fault_kinds)
        d["capacity_band"] = list(self.capacity_band)
        return d


def _label_span_fraction(state_like: BatteryState, r: float) -> float:
    """Fraction of capacity charged between the label voltages at 35 A."""
    drop = LABEL_CURRENT * r
    return float(state_like.soc_at(LABEL_V_HIGH - drop) - state_like.soc_at(LABEL_V_LOW - drop)) / 100.0


NORMAL_LIFETIME_FADE = 0.04


class _VehicleSim:
    """Per-vehicle latent parameters and record generator."""

    def __init__(self, vehicle_id: str, fault: FaultSpec | None, config: GenConfig,
                 rng: np.random.Generator):
        self.vehicle_id = vehicle_id
        self.fault = fault
        self.cfg = config
        self.rng = rng
        self.resistance = rng.uniform(0.0025, 0.0035)
        self.cell_spread = rng.uniform(0.008, 0.012)
        lo, hi = config.capacity_band
        # new-battery label chosen so normal ageing stays inside the band
        target = rng.uniform(lo / (1.0 - NORMAL_LIFETIME_FADE) + 0.2, hi - 0.2)
        probe = BatteryState(nominal_capacity=100.0)
        self.nominal_capacity = target / _label_span_fraction(probe, self.resistance)
        self.mileage = rng.uniform(1_000.0, 50_000.0)
        self.clock = 1.6e9 + rng.uniform(0.0, 3.0e7)

    def manifests(self, progress: float) -> bool:
        return self.fault is not None and progress >= self.fault.onset_fraction

    def _state(self, progress: float, ambient: float) -> BatteryState:
        fade = NORMAL_LIFETIME_FADE * progress
        r = self.resistance * (1.0 + 0.5 * fade)
        spread = self.cell_spread
        f = self.fault
        if f is not None and self.manifests(progress):
            if f.kind == "resistance_drift":
                r *= 1.0 + f.severity
            elif f.kind == "accelerated_fade":
                since = (progress - f.onset_fraction) / max(1.0 - f.onset_fraction, 1e-9)
                # step at onset, then linear growth to half the severity
                extra = 0.5 * f.severity * (0.25 + 0.75 * since)
                fade = min(fade + extra, 0.9)
                r *= 1.0 + 1.5 * extra
            elif f.kind == "cell_imbalance":
                spread *= 1.0 + 4.0 * f.severity
        return BatteryState(self.nominal_capacity, fade, r, DEFAULT_OCV, ambient, spread)

    def _protocol(self, start_time: float) -> ChargeProtocol:
        rng = self.rng
        cc = float(rng.choice([35.0, 35.0, 35.0, 20.0, 50.0]))
        ripple = {}
        if rng.random() < self.cfg.ripple_probability:
            ripple = dict(ripple_amplitude=rng.uniform(3.0, 8.0),
                          ripple_period=rng.uniform(150.0, 600.0),
                          ripple_start=rng.uniform(0.0, 1800.0),
                          ripple_duration=rng.uniform(1800.0, 6000.0))
        return ChargeProtocol(cc_current=cc, dt=self.cfg.dt, start_soc=rng.uniform(5.0, 50.0),
                              start_time=start_time, **ripple)

    def record(self, progress: float) -> tuple[np.ndarray, float | None]:
        rng = self.rng
        ambient = rng.uniform(5.0, 35.0)
        state = self._state(progress, ambient)
        self.clock += rng.uniform(0.5, 4.0) * 86_400.0
        rec = simulate_charge(state, self._protocol(self.clock))
        if rng.random() < self.cfg.truncation_probability:
            keep = max(2, int(rec.shape[0] * rng.uniform(0.3, 0.95)))
            rec = rec[:keep]
        label = capacity_label(rec)
        rec = self._add_noise(rec)
        if self.manifests(progress) and self.fault.kind == "voltage_fluctuation":
            rec = self._voltage_bursts(rec, self.fault.severity)
        self.clock = rec[-1, TIMESTAMP]
        return rec, label

    def _add_noise(self, rec: np.ndarray) -> np.ndarray:
        rng, ns = self.rng, self.cfg.noise_std
        rec = rec.copy()
        n = rec.shape[0]
        dv = rng.normal(0.0, ns.get("voltage", 0.0), n)
        rec[:, AVG_VOLT] += dv
        rec[:, MAX_VOLT] += dv + np.abs(rng.normal(0.0, ns.get("voltage", 0.0), n))
        rec[:, MIN_VOLT] += dv - np.abs(rng.normal(0.0, ns.get("voltage", 0.0), n))
        rec[:, CURRENT] += rng.normal(0.0, ns.get("current", 0.0), n)
        dtemp = rng.normal(0.0, ns.get("temperature", 0.0), n)
        rec[:, MAX_TEMP] += dtemp + np.abs(rng.normal(0.0, ns.get("temperature", 0.0), n))
        rec[:, MIN_TEMP] += dtemp - np.abs(rng.normal(0.0, ns.get("temperature", 0.0), n))
        return rec

    def _voltage_bursts(self, rec: np.ndarray, severity: float) -> np.ndarray:
        rng = self.rng
        rec = rec.copy()
        n = rec.shape[0]
        for _ in range(int(rng.integers(2, 5))):
            length = int(rng.integers(20, 61))
            start = int(rng.integers(0, max(n - length, 1)))
            burst = rng.normal(0.0, 0.05 * severity, min(length, n - start))
            for ch in (AVG_VOLT, MAX_VOLT, MIN_VOLT):
                rec[start:start + burst.size, ch] += burst
        return rec


def _vehicle_ids(config: GenConfig) -> list[tuple[str, FaultSpec | None]]:
    out = []
    onset = 1.0 - config.transient_fraction
    for j in range(config.n_normal):
        out.append((f"N{j:04d}", None))
    for j in range(config.n_anomalous):
        kind = config.fault_kinds[j % len(config.fault_kinds)]
        out.append((f"A{j:04d}", FaultSpec(kind, config.fault_severity, onset)))
    return out


def generate_vehicle(vehicle_id: str, fault: FaultSpec | None, config: GenConfig,
                     seed_seq: np.random.SeedSequence) -> Vehicle:
    rng = np.random.default_rng(seed_seq)
    sim = _VehicleSim(vehicle_id, fault, config, rng)
    snippets: list[ChargingSnippet] = []
    target = config.snippets_per_vehicle
    n_records = config.records_per_vehicle
    r = 0
    while True:
        if target is None:
            if r >= n_records:
                break
            progress = r / max(n_records, 1)
        else:
            if len(snippets) >= target:
                break
            if r > 50 * target:
                raise RuntimeError(f"{vehicle_id}: records too short to reach {target} snippets")
            progress = len(snippets) / target
        rec, label = sim.record(progress)
        sim.mileage += rng.uniform(50.0, 400.0)
        snippets.extend(extract_snippets(rec, stride=config.stride, vehicle_id=vehicle_id,
                                         mileage=sim.mileage, start_index=len(snippets),
                                         capacity_label=label))
        r += 1
    if target is not None:
        snippets = snippets[:target]
    return Vehicle(vehicle_id, 0 if fault is None else 1, tuple(snippets))


def generate_fleet(config: GenConfig) -> list[Vehicle]:
    """Deterministic fleet; vehicle ``j`` draws from the ``j``-th child of the seed."""
    specs = _vehicle_ids(config)
    if not specs:
        return []
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(len(specs) + 1)
    fleet = [generate_vehicle(vid, fault, config, ss) for (vid, fault), ss in zip(specs, children)]
    if config.anonymize:
        fleet = anonymize(fleet, config.perturbation, np.random.default_rng(children[-1]))
    return fleet


def fleet_faults(config: GenConfig) -> dict[str, FaultSpec | None]:
    return dict(_vehicle_ids(config))


_VALUE_GROUPS = ((AVG_VOLT, MAX_VOLT, MIN_VOLT), (CURRENT,), (MAX_TEMP, MIN_TEMP))
# reinterpolation offset (in samples) per unit perturbation amplitude, capped below half a step
_JITTER_PER_AMPLITUDE = 50.0


def anonymize(vehicles, amplitude: float = 0.005, rng: np.random.Generator | int | None = 0,
              time_shift: float | None = None, mileage_scale: float | None = None) -> list[Vehicle]:
    """Perturb-and-reinterpolate value channels and remap timestamps and mileage.

    Channel groups share one perturbation so ``min <= avg <= max`` orderings
    survive.  ``time_shift`` / ``mileage_scale`` fix the per-vehicle affine maps
    (otherwise drawn at random).  Labels are untouched.
    """
    rng = np.random.default_rng(rng)
    vehicles = list(vehicles)
    if not vehicles:
        return []
    all_series = [s.series for v in vehicles for s in v.snippets]
    if all_series:
        stacked = np.stack(all_series)
        ranges = stacked.max(axis=(0, 1)) - stacked.min(axis=(0, 1))
    else:
        ranges = np.zeros(N_CHANNELS)
    jitter = min(0.45, _JITTER_PER_AMPLITUDE * amplitude)
    pos0 = np.arange(all_series[0].shape[0] if all_series else 0, dtype=np.float64)
    out = []
    for v in vehicles:
        shift = rng.uniform(-1.0e7, 1.0e7) if time_shift is None else time_shift
        scale = rng.uniform(0.8, 1.25) if mileage_scale is None else mileage_scale
        if scale <= 0:
            raise ValueError("mileage scale must be positive")
        new = []
        for s in v.snippets:
            x = s.series.copy()
            if amplitude > 0:
                pos = np.clip(pos0 + rng.uniform(-jitter, jitter, pos0.size), 0, pos0[-1])
                for group in _VALUE_GROUPS:
                    noise = rng.normal(0.0, amplitude * ranges[group[0]], pos0.size)
                    for ch in group:
                        x[:, ch] = np.interp(pos, pos0, x[:, ch] + noise)
            x[:, TIMESTAMP] += shift
            new.append(ChargingSnippet(s.vehicle_id, s.snippet_index, s.mileage * scale, x,
                                       s.capacity_label))
        out.append(Vehicle(v.vehicle_id, v.health_label, tuple(new)))
    return out


def load_gen_config(path) -> GenConfig:
    path = Path(path)
    if path.suffix == ".toml":
        import tomli
        data = tomli.loads(path.read_text())
    else:
        data = json.loads(path.read_text())
    return GenConfig.from_dict(data.get("generate", data))
