"""Second reactor of the two-reactor/separator chemical benchmark.

Continuous-time mass and energy balances for the liquid level H2, the
concentrations xA2 and xB2, and the temperature T2, driven by the
upstream conditions (H1, xA1, xB1, T1), the feed flow F20 and the heat
input Q2.  Flows follow F_i = kv_i * H_i and the reaction rates are
Arrhenius-type in T2.

Integration uses classical fixed-step RK4 with the input held constant
over each sampling interval.  Dataset generation excites every input
channel with piecewise-constant multilevel pseudo-random signals around
a computed steady state.  A slow ramp of the rate constant kA models
plant drift.

All state/derivative functions accept a batch axis (B, 4)/(B, 6) so
that many sequences integrate in one vectorized pass.
"""

from __future__ import annotations

import csv
import hashlib
import json
import pathlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

TAU = 0.1  # sampling time [s]

STATE_COLUMNS = ("H2", "xA2", "xB2", "T2")
INPUT_COLUMNS = ("H1", "xA1", "xB1", "T1", "F20", "Q2")


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the benchmark (defaults: nominal values)."""

    rho: float = 0.15       # density [kg/m^3]
    A2: float = 3.0         # reactor area [m]
    kv1: float = 0.5        # flow coefficient [kg/(m s)]
    kv2: float = 0.5
    xA0: float = 1.0        # feed concentration [wt%]
    kA: float = 0.336       # rate constant [1/s]
    kB: float = 0.089
    EA_over_R: float = -100.0   # [kJ/kg]
    EB_over_R: float = -150.0
    dHA: float = -40.0      # reaction enthalpy [kJ/kg]
    dHB: float = -50.0
    Cp: float = 2.5         # heat capacity [kJ/(kg K)]
    T0: float = 313.0       # feed temperature [K]

    def __post_init__(self):
        for name in ("rho", "A2", "Cp", "kv1", "kv2", "kA", "kB"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# Nominal operating input used to center excitation signals:
# [H1, xA1, xB1, T1, F20, Q2]
NOMINAL_INPUT = np.array([1.0, 0.8, 0.1, 313.0, 0.1, 0.0])


@dataclass(frozen=True)
class DriftSchedule:
    """Ramp of one plant parameter (only kA is exercised here)."""

    param_name: str = "kA"
    start_value: float = 0.336
    end_value: float = 0.326
    t_start: float = 100.0
    t_end: float = 200.0
    shape: str = "ramp"

    def __post_init__(self):
        if self.t_start >= self.t_end:
            raise ValueError("t_start must precede t_end")
        if self.shape != "ramp":
            raise ValueError(f"unknown drift shape {self.shape!r}")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def drift_value(schedule: DriftSchedule, t) -> float | np.ndarray:
    """Parameter value at time t: flat / linear ramp / flat."""
    frac = np.clip((np.asarray(t, dtype=float) - schedule.t_start)
                   / (schedule.t_end - schedule.t_start), 0.0, 1.0)
    out = schedule.start_value + frac * (schedule.end_value - schedule.start_value)
    return out if out.ndim else float(out)


def rate_coefficients(T2, params: PlantParams):
    """Arrhenius rates (kA2, kB2) at temperature T2."""
    T2 = np.asarray(T2, dtype=float)
    if np.any(T2 <= 0):
        raise ValueError("temperature must be positive")
    kA2 = params.kA * np.exp(-params.EA_over_R / T2)
    kB2 = params.kB * np.exp(-params.EB_over_R / T2)
    return kA2, kB2


def derivatives(state, inp, params: PlantParams) -> np.ndarray:
    """Right-hand side of the four balance ODEs, per second.

    ``state`` is (..., 4) = [H2, xA2, xB2, T2]; ``inp`` is (..., 6).
    """
    state = np.asarray(state, dtype=float)
    inp = np.asarray(inp, dtype=float)
    H2, xA2, xB2, T2 = (state[..., i] for i in range(4))
    H1, xA1, xB1, T1, F20, Q2 = (inp[..., i] for i in range(6))
    if np.any(H2 <= 0):
        raise ValueError("H2 must be positive (level balance divides by H2)")
    kA2, kB2 = rate_coefficients(T2, params)
    F1 = params.kv1 * H1
    F2 = params.kv2 * H2
    rhoA = params.rho * params.A2
    hold = rhoA * H2
    dH2 = (F20 + F1 - F2) / rhoA
    dxA2 = (F20 * params.xA0 + F1 * xA1 - F2 * xA2) / hold - kA2 * xA2
    dxB2 = (F1 * xB1 - F2 * xB2) / hold + kA2 * xA2 - kB2 * xB2
    dT2 = ((F20 * params.T0 + F1 * T1 - F2 * T2) / hold
           - (kA2 * xA2 * params.dHA + kB2 * xB2 * params.dHB) / params.Cp
           + Q2 / (hold * params.Cp))
    return np.stack([dH2, dxA2, dxB2, dT2], axis=-1)


def step(state, inp, params: PlantParams, dt: float, substeps: int = 10) -> np.ndarray:
    """Classical RK4 over dt/substeps with the input held constant."""
    if dt <= 0 or substeps < 1:
        raise ValueError("dt must be positive and substeps >= 1")
    x = np.asarray(state, dtype=float)
    h = dt / substeps
    for _ in range(substeps):
        k1 = derivatives(x, inp, params)
        k2 = derivatives(x + 0.5 * h * k1, inp, params)
        k3 = derivatives(x + 0.5 * h * k2, inp, params)
        k4 = derivatives(x + h * k3, inp, params)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if np.any(x[..., 0] <= 0) or np.any(x[..., 3] <= 0):
        raise ValueError("state left the validity domain (H2 or T2 <= 0)")
    return x


_STEADY_STATE_CACHE = {}


def steady_state(params: PlantParams, nominal_input=None, horizon_s: float = 60.0) -> np.ndarray:
    """Operating point with vanishing derivatives under a constant input.

    A forward simulation settles near the attractor, then a damped
    Newton refinement drives the residual below 1e-9 per channel.
    Results for the default nominal input are cached per parameter set.
    """
    cache_key = (params, horizon_s) if nominal_input is None else None
    if cache_key is not None and cache_key in _STEADY_STATE_CACHE:
        return _STEADY_STATE_CACHE[cache_key].copy()
    u = NOMINAL_INPUT if nominal_input is None else np.asarray(nominal_input, dtype=float)
    x = np.array([1.0, 0.5, 0.2, params.T0])
    n = int(horizon_s / TAU)
    for _ in range(n):
        x = step(x, u, params, TAU, substeps=5)
    sol = optimize.root(lambda s: derivatives(s, u, params), x, tol=1e-13)
    x = sol.x
    resid = derivatives(x, u, params)
    if np.max(np.abs(resid)) > 1e-9:
        raise RuntimeError(f"steady state refinement failed, residual {resid}")
    if cache_key is not None:
        _STEADY_STATE_CACHE[cache_key] = x.copy()
    return x


@dataclass(frozen=True)
class ExcitationConfig:
    """Piecewise-constant multilevel pseudo-random input design."""

    lo: tuple = ()
    hi: tuple = ()
    hold_time: float = 2.0   # seconds each level is held
    tau: float = TAU

    def __post_init__(self):
        if len(self.lo) != 6 or len(self.hi) != 6:
            raise ValueError("need bounds for all 6 input channels")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError("bounds must satisfy lo <= hi per channel")
        hold_steps = self.hold_time / self.tau
        if self.hold_time <= 0 or abs(hold_steps - round(hold_steps)) > 1e-9:
            raise ValueError("hold_time must be a positive multiple of tau")

    @property
    def hold_steps(self):
        return int(round(self.hold_time / self.tau))

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi),
                "hold_time": self.hold_time, "tau": self.tau}

    @classmethod
    def from_dict(cls, d):
        return cls(lo=tuple(d["lo"]), hi=tuple(d["hi"]),
                   hold_time=d["hold_time"], tau=d["tau"])


def default_excitation(params: PlantParams = PlantParams(), q2_span: float = 0.6) -> ExcitationConfig:
    """Default bounds: +-10% on levels/flows, +-5 K on T1, +-q2_span/2 on Q2."""
    u = NOMINAL_INPUT
    lo = [u[0] * 0.9, u[1] * 0.9, u[2] * 0.9, u[3] - 5.0, u[4] * 0.9, -q2_span / 2]
    hi = [u[0] * 1.1, u[1] * 1.1, u[2] * 1.1, u[3] + 5.0, u[4] * 1.1, q2_span / 2]
    return ExcitationConfig(lo=tuple(lo), hi=tuple(hi))


def generate_excitation(config: ExcitationConfig, n_samples: int, seed) -> np.ndarray:
    """(n_samples, 6) piecewise-constant signal, uniform levels per channel."""
    rng = np.random.default_rng(seed)
    n_levels = -(-n_samples // config.hold_steps)  # ceil
    levels = rng.uniform(np.array(config.lo), np.array(config.hi), size=(n_levels, 6))
    return np.repeat(levels, config.hold_steps, axis=0)[:n_samples]


@dataclass
class Sequence:
    """Uniformly sampled I/O record: u[k] applied at t_k, y[k] = state at t_k."""

    u: np.ndarray   # (T, 6)
    y: np.ndarray   # (T, 4)
    tau: float = TAU

    def __len__(self):
        return len(self.u)

    @property
    def t(self):
        return np.arange(len(self.u)) * self.tau


@dataclass
class DatasetConfig:
    n_sequences: int = 136
    seq_len: int = 1000       # samples per sequence (T_s = 100 s at tau = 0.1 s)
    n_train: int = 100
    n_test: int = 36
    tau: float = TAU
    substeps: int = 10
    excitation: ExcitationConfig = field(default_factory=default_excitation)
    kA: float | None = None   # override rate constant (drifted-plant datasets)

    def __post_init__(self):
        if self.n_train + self.n_test > self.n_sequences:
            raise ValueError("split sizes exceed n_sequences")

    def to_dict(self):
        return {"n_sequences": self.n_sequences, "seq_len": self.seq_len,
                "n_train": self.n_train, "n_test": self.n_test, "tau": self.tau,
                "substeps": self.substeps, "excitation": self.excitation.to_dict(),
                "kA": self.kA}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["excitation"] = ExcitationConfig.from_dict(d["excitation"])
        return cls(**d)


@dataclass
class Dataset:
    sequences: list
    train_idx: list
    test_idx: list
    config: DatasetConfig
    seed: int

    @property
    def train(self):
        return [self.sequences[i] for i in self.train_idx]

    @property
    def test(self):
        return [self.sequences[i] for i in self.test_idx]


def simulate_plant(x0, inputs, params: PlantParams, tau: float = TAU,
                   substeps: int = 10, kA_of_t=None) -> np.ndarray:
    """Roll the plant forward under an input sequence.

    Returns states y with y[k] the state at sample k (y[0] = x0), same
    length as ``inputs``.  Batched when x0 is (B, 4) and inputs
    (T, B, 6).  ``kA_of_t`` optionally maps time [s] to a drifting kA.
    """
    inputs = np.asarray(inputs, dtype=float)
    x = np.asarray(x0, dtype=float)
    T = inputs.shape[0]
    ys = np.empty(inputs.shape[:-1] + (4,))
    p = params
    for k in range(T):
        ys[k] = x
        if kA_of_t is not None:
            p = replace(params, kA=float(kA_of_t(k * tau)))
        if k < T - 1:
            x = step(x, inputs[k], p, tau, substeps)
    return ys


def collect_dataset(config: DatasetConfig, seed: int) -> Dataset:
    """Excite the plant from its steady state and record I/O sequences.

    Sequences are integrated in one batched pass; each sequence draws
    its excitation from a child seed of (seed, index) so the dataset is
    a pure function of (config, seed).
    """
    params = PlantParams() if config.kA is None else replace(PlantParams(), kA=config.kA)
    x_ss = steady_state(params)
    children = np.random.SeedSequence(seed).spawn(config.n_sequences)
    us = np.stack([generate_excitation(config.excitation, config.seq_len, s)
                   for s in children], axis=1)           # (T, B, 6)
    x0 = np.tile(x_ss, (config.n_sequences, 1))
    ys = simulate_plant(x0, us, params, config.tau, config.substeps)
    sequences = [Sequence(u=us[:, b], y=ys[:, b], tau=config.tau)
                 for b in range(config.n_sequences)]
    train_idx = list(range(config.n_train))
    test_idx = list(range(config.n_train, config.n_train + config.n_test))
    return Dataset(sequences, train_idx, test_idx, config, seed)


SEQUENCE_CSV_COLUMNS = ("t",) + INPUT_COLUMNS + STATE_COLUMNS


def save_sequence_csv(path, sequence: Sequence):
    """One sequence as CSV: t, the 6 inputs, the 4 outputs; full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SEQUENCE_CSV_COLUMNS)
        for k in range(len(sequence)):
            row = [repr(float(k * sequence.tau))]
            row += [repr(float(v)) for v in sequence.u[k]]
            row += [repr(float(v)) for v in sequence.y[k]]
            writer.writerow(row)


def load_sequence_csv(path) -> Sequence:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SEQUENCE_CSV_COLUMNS:
            raise ValueError(f"unexpected sequence CSV header {header}")
        rows = np.array([[float(v) for v in row] for row in reader])
    tau = rows[1, 0] - rows[0, 0] if len(rows) > 1 else TAU
    return Sequence(u=rows[:, 1:7], y=rows[:, 7:11], tau=float(tau))


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_dataset(directory, dataset: Dataset):
    """One CSV per sequence plus a JSON manifest with per-file checksums."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files, checksums = [], {}
    for i, seq in enumerate(dataset.sequences):
        name = f"seq_{i:03d}.csv"
        save_sequence_csv(directory / name, seq)
        files.append(name)
        checksums[name] = file_sha256(directory / name)
    manifest = {"seed": dataset.seed, "config": dataset.config.to_dict(),
                "train_idx": list(dataset.train_idx),
                "test_idx": list(dataset.test_idx),
                "files": files, "checksums": checksums}
    with open(directory / "dataset.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def load_dataset(directory, verify: bool = True) -> Dataset:
    directory = pathlib.Path(directory)
    with open(directory / "dataset.json") as fh:
        manifest = json.load(fh)
    sequences = []
    for name in manifest["files"]:
        if verify and file_sha256(directory / name) != manifest["checksums"][name]:
            raise ValueError(f"checksum mismatch for {name}")
        sequences.append(load_sequence_csv(directory / name))
    return Dataset(sequences, manifest["train_idx"], manifest["test_idx"],
                   DatasetConfig.from_dict(manifest["config"]), manifest["seed"])


def drift_run(total_time: float, schedule: DriftSchedule, excitation: ExcitationConfig,
              seed: int, params: PlantParams = None, substeps: int = 10) -> Sequence:
    """One long trajectory with kA following the drift schedule."""
    params = params or PlantParams()
    n = int(round(total_time / excitation.tau))
    u = generate_excitation(excitation, n, seed)
    x0 = steady_state(params)
    y = simulate_plant(x0, u, params, excitation.tau, substeps,
                       kA_of_t=lambda t: drift_value(schedule, t))
    return Sequence(u=u, y=y, tau=excitation.tau)
