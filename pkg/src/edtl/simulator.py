"""Synthetic stenter production lines.

Moisture follows the drying balance

    dM/dt = (G_in M_in - G_out M_out - R_d m_f - M dm_f/dt) / m_f
    R_d   = K (M - M_e)
    K     = 0.00719 exp(-130.64 / T_a)          (T_a in kelvin)

integrated with explicit Euler over the time the fabric spends in the
chambers. Electricity, weight and width come from fixed algebraic response
surfaces whose coefficients belong to each line profile; they are test
fixtures with plausible monotonicities, not physical claims.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from edtl.dataset import Dataset, FeatureSchema, save_csv

KELVIN = 273.15
TARGETS = ("E", "M", "W", "D")

DRIVERS = (
    "motor_speed", "fan_speed_1", "fan_speed_2",
    "temp_set_1", "temp_set_2", "temp_set_3",
    "fabric_weight_in", "fabric_width_in", "moisture_in",
    "ambient_temp", "ambient_humidity",
)
SENSORS = ("cloth_temp_1", "cloth_temp_2", "exhaust_speed", "heat_fluid_flow",
           "chamber_humidity")
CATALOG = DRIVERS + SENSORS


class SimulationError(ValueError):
    pass


@dataclass
class DryingState:
    """Fields may be floats or equally shaped arrays (one entry per row)."""

    M: float | np.ndarray
    m_f: float | np.ndarray
    G_in: float | np.ndarray
    G_out: float | np.ndarray
    M_in: float | np.ndarray
    M_out: float | np.ndarray
    M_e: float | np.ndarray
    T_a: float | np.ndarray


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    duration: float = 600.0
    seed: int = 0
    n_rows: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise SimulationError("dt must be positive")
        if self.duration < self.dt:
            raise SimulationError("duration must be at least dt")


@dataclass(frozen=True)
class LineProfile:
    name: str
    sensors: tuple[str, ...]
    control_ranges: dict
    response_params: dict
    shift: dict = field(default_factory=dict)  # target -> (scale, offset)
    noise_level: float = 0.01
    sensor_noise: float = 0.01
    fabric_type: str = "polyester"

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        unknown = set(self.sensors) - set(SENSORS)
        if unknown:
            raise SimulationError(f"unknown sensors {sorted(unknown)}")
        for name in DRIVERS:
            lo, hi = self.control_ranges[name]
            if not hi > lo:
                raise SimulationError(f"degenerate range for {name}")
        if self.fabric_type not in ("nylon", "polyester"):
            raise SimulationError(f"unknown fabric type {self.fabric_type!r}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return DRIVERS + self.sensors

    def feature_set(self, target: str) -> FeatureSchema:
        return FeatureSchema(self.feature_names, target)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensors"] = list(self.sensors)
        d["control_ranges"] = {k: list(v) for k, v in self.control_ranges.items()}
        d["shift"] = {k: list(v) for k, v in self.shift.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LineProfile:
        d = dict(d)
        d["control_ranges"] = {k: tuple(v) for k, v in d["control_ranges"].items()}
        d["shift"] = {k: tuple(v) for k, v in d.get("shift", {}).items()}
        return cls(**d)

    def with_params(self, **changes) -> LineProfile:
        return replace(self, response_params={**self.response_params, **changes})


# -- physics -------------------------------------------------------------------

def drying_constant(T_a):
    """Drying constant (1/s) at air temperature ``T_a`` in kelvin."""
    T = np.asarray(T_a, dtype=float)
    if np.any(T <= 0):
        raise SimulationError("air temperature must be positive (kelvin)")
    K = 0.00719 * np.exp(-130.64 / T)
    return float(K) if K.ndim == 0 else K


def drying_rate(M, M_e, K):
    if np.any(np.asarray(K) < 0):
        raise SimulationError("drying constant must be non-negative")
    return K * (M - M_e)


def step_moisture(s: DryingState, dt: float) -> DryingState:
    """One explicit Euler step of the moisture balance.

    Fabric mass changes at ``G_in - G_out``. A step that would carry M below
    equilibrium from above stops at M_e.
    """
    if not dt > 0:
        raise SimulationError("dt must be positive")
    dmf = s.G_in - s.G_out
    K = drying_constant(s.T_a)
    R_d = drying_rate(s.M, s.M_e, K)
    dM = (s.G_in * s.M_in - s.G_out * s.M_out - R_d * s.m_f - s.M * dmf) / s.m_f
    M_new = s.M + dt * dM
    m_new = s.m_f + dt * dmf
    if np.any(np.asarray(m_new) <= 0):
        raise SimulationError("fabric mass exhausted")
    overshoot = (np.asarray(s.M) >= s.M_e) & (M_new < s.M_e)
    M_new = np.where(overshoot, s.M_e, M_new)
    if np.ndim(M_new) == 0:
        M_new = float(M_new)
    return replace(s, M=M_new, m_f=m_new)


def integrate_closed_batch(M0, M_e, T_a, duration, dt: float = 0.1, m_f=1.0):
    """Moisture after ``duration`` seconds with no fabric in- or outflow.

    Array arguments integrate many rows at once; each row runs
    ``round(duration / dt)`` steps.
    """
    M0, M_e, T_a, duration = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (M0, M_e, T_a, duration)))
    zeros = np.zeros_like(M0)
    s = DryingState(M=M0.copy(), m_f=np.full_like(M0, m_f), G_in=zeros, G_out=zeros,
                    M_in=M0.copy(), M_out=M0.copy(), M_e=M_e, T_a=T_a)
    n_steps = np.rint(duration / dt).astype(int)
    for k in range(int(n_steps.max(initial=0))):
        nxt = step_moisture(s, dt)
        s = replace(s, M=np.where(k < n_steps, nxt.M, s.M))
    return s.M


def moisture_trajectory(M0: float, M_e: float, T_a: float, duration: float,
                        dt: float = 0.1, m_f: float = 1.0) -> np.ndarray:
    s = DryingState(M=M0, m_f=m_f, G_in=0.0, G_out=0.0, M_in=M0, M_out=M0,
                    M_e=M_e, T_a=T_a)
    out = [M0]
    for _ in range(int(round(duration / dt))):
        s = step_moisture(s, dt)
        out.append(float(s.M))
    return np.array(out)


# -- response surfaces -----------------------------------------------------------

def _latent(x: dict, profile: LineProfile, dt: float) -> dict:
    p = profile.response_params
    fan = 0.5 * (x["fan_speed_1"] + x["fan_speed_2"]) / 100.0
    t_set = (x["temp_set_1"] + x["temp_set_2"] + x["temp_set_3"]) / 3.0
    T_a = t_set * (p["air_temp_base"] + p["air_temp_fan"] * fan) + KELVIN
    regain = 1.0 if profile.fabric_type == "nylon" else p["polyester_regain"]
    M_e = regain * (p["me_base"] + p["me_humidity"] * x["ambient_humidity"] / 100.0)
    residence = p["chamber_length"] / (x["motor_speed"] / 60.0)
    M_out = integrate_closed_batch(x["moisture_in"], M_e, T_a, residence, dt)
    return {"fan": fan, "t_set": t_set, "T_a": T_a, "M_e": M_e,
            "residence": residence, "M_out": M_out}


def _responses(x: dict, lat: dict, profile: LineProfile) -> dict:
    p = profile.response_params
    fan, t_set, M_out = lat["fan"], lat["t_set"], lat["M_out"]
    fans = (x["fan_speed_1"] / 100.0) ** 3 + (x["fan_speed_2"] / 100.0) ** 3
    # water evaporated per second, kg/s
    water = ((x["moisture_in"] - M_out) * x["fabric_weight_in"] / 1000.0
             * x["fabric_width_in"] / 100.0 * x["motor_speed"] / 60.0)
    E = (p["e_base"] + p["e_fan"] * fans
         + p["e_heat"] * (t_set - x["ambient_temp"]) * (0.5 + 0.5 * fan)
         + p["e_evap"] * water)
    tension = (x["motor_speed"] - 20.0) / 100.0
    heat = (t_set - 150.0) / 100.0
    W = (x["fabric_weight_in"] * (1.0 + M_out) * (1.0 - p["w_tension"] * tension)
         * (1.0 + p["w_heat"] * heat))
    D = (x["fabric_width_in"] * (1.0 - p["d_heat"] * heat * heat - p["d_tension"] * tension)
         + p["d_offset"])
    out = {"E": E, "M": M_out, "W": W, "D": D}
    for name, (scale, offset) in profile.shift.items():
        out[name] = out[name] * scale + offset
    return out


def _sensors(x: dict, lat: dict, profile: LineProfile, rng: np.random.Generator) -> dict:
    n = np.shape(x["motor_speed"])
    noise = profile.sensor_noise

    def jitter(v):
        return v * (1.0 + noise * rng.standard_normal(n))

    vals = {
        "cloth_temp_1": 0.8 * x["temp_set_1"] + 0.2 * x["ambient_temp"],
        "cloth_temp_2": 0.85 * x["temp_set_2"] + 0.15 * x["ambient_temp"],
        "exhaust_speed": 40.0 + 50.0 * lat["fan"],
        "heat_fluid_flow": 0.05 * (lat["t_set"] - x["ambient_temp"]) * (0.5 + lat["fan"]),
        "chamber_humidity": 0.3 * x["ambient_humidity"] + 60.0 * x["moisture_in"],
    }
    # Always draw every sensor so that a line's rows do not depend on which
    # sensors it exposes.
    return {k: jitter(v) for k, v in vals.items()}


def synth_targets(controls_and_env, profile: LineProfile, rng: np.random.Generator,
                  dt: float = 0.1) -> tuple[float, float, float, float]:
    """(E, M, W, D) for one feature vector laid out as ``profile.feature_names``."""
    v = np.asarray(controls_and_env, dtype=float)
    if v.shape != (len(profile.feature_names),):
        raise SimulationError("vector does not match the profile's feature set")
    x = {name: np.array([v[i]]) for i, name in enumerate(profile.feature_names)}
    lat = _latent(x, profile, dt)
    clean = _responses(x, lat, profile)
    noise = rng.standard_normal(4) if profile.noise_level > 0 else np.zeros(4)
    return tuple(float(clean[t][0] * (1.0 + profile.noise_level * e))
                 for t, e in zip(TARGETS, noise))


def simulate_line(profile: LineProfile, cfg: SimConfig) -> tuple[np.ndarray, dict]:
    """Feature matrix (``profile.feature_names`` columns) and all four targets.

    Draws come from independent seeded streams (inputs, sensors, target
    noise) so that each is reproducible on its own.
    """
    if cfg.n_rows < 1:
        raise SimulationError("n_rows must be positive")
    n = cfg.n_rows
    ss = np.random.SeedSequence(cfg.seed)
    r_in, r_sens, r_noise = (np.random.default_rng(s) for s in ss.spawn(3))
    x = {}
    for name in DRIVERS:
        lo, hi = profile.control_ranges[name]
        x[name] = r_in.uniform(lo, hi, size=n)
    lat = _latent(x, profile, cfg.dt)
    sens = _sensors(x, lat, profile, r_sens)
    clean = _responses(x, lat, profile)
    eps = r_noise.standard_normal((n, 4))
    targets = {t: clean[t] * (1.0 + profile.noise_level * eps[:, k])
               for k, t in enumerate(TARGETS)}
    targets["M_e"] = lat["M_e"]
    feats = np.column_stack([x[n_] for n_ in DRIVERS] + [sens[s] for s in profile.sensors])
    return feats, targets


def generate_line(profile: LineProfile, cfg: SimConfig, target: str = "E") -> Dataset:
    if target not in TARGETS:
        raise SimulationError(f"unknown target {target!r}")
    feats, targets = simulate_line(profile, cfg)
    return Dataset(profile.feature_set(target), feats, targets[target])


def make_domain_pair(source_profile: LineProfile, target_profile: LineProfile,
                     n_source: int = 20000, n_target: int = 2000, seed: int = 0,
                     target: str = "E", dt: float = 0.1) -> tuple[Dataset, Dataset]:
    if not n_source > n_target:
        raise SimulationError("source line must have more rows than the target line")
    src = generate_line(source_profile, SimConfig(dt=dt, seed=_stream(seed, 1), n_rows=n_source),
                        target)
    tgt = generate_line(target_profile, SimConfig(dt=dt, seed=_stream(seed, 2), n_rows=n_target),
                        target)
    return src, tgt


def _stream(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


# -- stock profiles --------------------------------------------------------------

_BASE_RANGES = {
    "motor_speed": (20.0, 50.0),
    "fan_speed_1": (50.0, 100.0),
    "fan_speed_2": (50.0, 100.0),
    "temp_set_1": (150.0, 210.0),
    "temp_set_2": (150.0, 210.0),
    "temp_set_3": (150.0, 210.0),
    "fabric_weight_in": (100.0, 250.0),
    "fabric_width_in": (140.0, 180.0),
    "moisture_in": (0.4, 0.8),
    "ambient_temp": (15.0, 35.0),
    "ambient_humidity": (40.0, 90.0),
}

_BASE_PARAMS = {
    "chamber_length": 80.0,
    "air_temp_base": 0.85,
    "air_temp_fan": 0.15,
    "me_base": 0.02,
    "me_humidity": 0.06,
    "polyester_regain": 0.5,
    "e_base": 20.0,
    "e_fan": 15.0,
    "e_heat": 0.5,
    "e_evap": 1500.0,
    "w_tension": 0.15,
    "w_heat": 0.05,
    "d_heat": 0.2,
    "d_tension": 0.08,
    "d_offset": 0.0,
}


def stock_profiles() -> dict[str, LineProfile]:
    """Built-in lines: rich source ``A2``, data-poor target ``A1`` and a
    badly mismatched, noisy source ``B``."""
    a2 = LineProfile(
        name="A2",
        sensors=("cloth_temp_1", "cloth_temp_2", "exhaust_speed", "heat_fluid_flow"),
        control_ranges=dict(_BASE_RANGES),
        response_params=dict(_BASE_PARAMS),
        noise_level=0.01,
    )
    a1 = LineProfile(
        name="A1",
        sensors=("chamber_humidity",),
        control_ranges={**_BASE_RANGES, "motor_speed": (25.0, 45.0),
                        "temp_set_1": (160.0, 200.0), "temp_set_2": (160.0, 200.0),
                        "temp_set_3": (160.0, 200.0)},
        response_params={**_BASE_PARAMS, "chamber_length": 70.0, "e_fan": 18.0,
                         "e_heat": 0.55, "e_evap": 1350.0, "w_tension": 0.12,
                         "d_heat": 0.25},
        shift={"E": (1.05, 5.0), "W": (1.0, 3.0), "D": (1.0, -2.0)},
        noise_level=0.01,
    )
    b = LineProfile(
        name="B",
        sensors=("cloth_temp_1", "heat_fluid_flow"),
        control_ranges=dict(_BASE_RANGES),
        response_params={**_BASE_PARAMS, "chamber_length": 120.0, "air_temp_fan": 0.0,
                         "e_fan": 40.0, "e_heat": 0.15, "e_evap": 3500.0,
                         "w_tension": -0.3, "w_heat": 0.4, "d_heat": -0.3,
                         "d_tension": 0.3},
        shift={"E": (0.7, 40.0), "W": (0.8, 30.0), "D": (0.9, 15.0)},
        noise_level=0.05,
    )
    return {p.name: p for p in (a2, a1, b)}


def write_simulation(out_dir, source: LineProfile, target: LineProfile, n_source: int,
                     n_target: int, seed: int, targets=TARGETS, dt: float = 0.1) -> Path:
    """Write ``<line>_<target>.csv`` files plus a manifest of generator settings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for t in targets:
        src, tgt = make_domain_pair(source, target, n_source, n_target, seed, t, dt)
        for role, ds, prof in (("source", src, source), ("target", tgt, target)):
            name = f"{role}_{prof.name}_{t}.csv"
            save_csv(ds, out / name)
            files.setdefault(role, {})[t] = name
    manifest = {"seed": seed, "dt": dt, "n_source": n_source, "n_target": n_target,
                "source_profile": source.to_dict(), "target_profile": target.to_dict(),
                "files": files, "note": "generator truth for debugging; learners never read this"}
    (out / "simulation_manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def closed_batch_solution(t, M0, M_e, K):
    return M_e + (M0 - M_e) * math.exp(-K * t)
