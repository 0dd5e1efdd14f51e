"""Synthetic PMU trajectories with exact ground truth.

The terminal is modelled as a Thevenin source E behind Z = r + jx feeding the
converter through its equivalent impedance Z_d, so ``I = E / (Z + Z_d)`` and
``V = E - Z * I`` hold exactly at every step.  Events perturb Z_d (faults,
switching) or the source (ramps, compensator trips); an optional excitation
model rate-limits every source change to the physically reachable slew.
Measurement noise only ever touches the emitted sample view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .converter import (
    AcSide,
    FixedPointDivergence,
    HvdcConfig,
    InfeasibleOperatingPoint,
    initial_current_for_power,
)
from .estimator import ExcitationParams, max_potential_rate
from .phasor import PmuSample

EVENT_KINDS = ("fault_step", "impedance_switch", "potential_ramp", "compensator_trip")


@dataclass(frozen=True)
class SimEvent:
    """One scheduled disturbance.

    Parameters per kind:

    fault_step       -- z_fault_re/_im, duration (s), tau (recovery, s)
    impedance_switch -- z_re/z_im (final), jump_re/jump_im (entry value,
                        defaults to final), tau (settle, s; 0 = pure step)
    potential_ramp   -- e_target (magnitude, p.u.), rate (p.u./s, optional)
    compensator_trip -- de (magnitude step, p.u.), dx, dr (impedance steps)
    """

    time: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to generate one terminal's trajectory."""

    duration: float = 1.0
    dt: float = 0.01
    e0: complex = 1.0 + 0.0j       # initial source potential, p.u.
    r: float = 0.01                # source resistance, p.u.
    x: float = 0.2                 # source reactance, p.u.
    z_d0: complex = 1.57 + 0.03j   # initial converter equivalent impedance, p.u.
    dynamics: ExcitationParams | None = None
    events: tuple[SimEvent, ...] = ()
    noise_variance: float = 0.0    # per rectangular channel, p.u.^2
    seed: int = 0
    terminal_id: str = "rect"
    # optional DC-side context used to fill the i_d ground-truth column
    hvdc: HvdcConfig | None = None
    far_side: AcSide | None = None
    side: str = "rectifier"

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.duration <= 0:
            raise ValueError("duration and dt must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        last = -math.inf
        for ev in self.events:
            if not 0.0 <= ev.time <= self.duration:
                raise ValueError(f"event at t={ev.time} outside [0, {self.duration}]")
            if ev.time < last:
                raise ValueError("events must be time ordered")
            last = ev.time


@dataclass(frozen=True)
class TrajectoryRecord:
    """Noisy sample plus the exact state that produced it."""

    sample: PmuSample
    v_true: complex
    i_true: complex
    e_true: complex
    r_true: float
    x_true: float
    i_d_true: float  # kA; nan when no DC context is configured or solvable


def inject_noise(
    sample: PmuSample, variance: float, rng: np.random.Generator | int
) -> PmuSample:
    """Additive zero-mean Gaussian noise on the four rectangular channels."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0:
        return sample
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    std = math.sqrt(variance)
    n = rng.normal(0.0, std, 4)
    return replace(
        sample,
        v=sample.v + complex(n[0], n[1]),
        i=sample.i + complex(n[2], n[3]),
    )


class _ZdTrajectory:
    """Closed-form piecewise law for the converter equivalent impedance."""

    def __init__(self, z0: complex):
        # segments: (t_start, fn(t) -> complex), later segments override
        self._segments: list[tuple[float, object]] = [(-math.inf, lambda t, z=z0: z)]

    def value(self, t: float) -> complex:
        for t0, fn in reversed(self._segments):
            if t >= t0:
                return fn(t)
        raise AssertionError("unreachable: base segment covers all t")

    def _add(self, t0: float, fn) -> None:
        self._segments.append((t0, fn))

    def apply_fault(self, t0: float, z_fault: complex, duration: float, tau: float) -> None:
        z_pre = self.value(t0)
        t_clear = t0 + duration
        self._add(t0, lambda t, z=z_fault: z)
        if tau > 0:
            self._add(
                t_clear,
                lambda t: z_pre + (z_fault - z_pre) * math.exp(-(t - t_clear) / tau),
            )
        else:
            self._add(t_clear, lambda t, z=z_pre: z)

    def apply_switch(self, t0: float, z_new: complex, z_jump: complex, tau: float) -> None:
        if tau > 0 and z_jump != z_new:
            self._add(
                t0, lambda t: z_new + (z_jump - z_new) * math.exp(-(t - t0) / tau)
            )
        else:
            self._add(t0, lambda t, z=z_new: z)


def _complex_param(params: dict, re_key: str, im_key: str, default: complex | None = None) -> complex:
    if re_key not in params and default is not None:
        return default
    return complex(float(params[re_key]), float(params.get(im_key, 0.0)))


def generate(cfg: ScenarioConfig) -> list[TrajectoryRecord]:
    """Produce the trajectory: exact circuit solve per step plus noisy view."""
    rng = np.random.default_rng(cfg.seed)
    n_steps = int(round(cfg.duration / cfg.dt)) + 1
    times = [k * cfg.dt for k in range(n_steps)]

    z_true = complex(cfg.r, cfg.x)
    zd = _ZdTrajectory(cfg.z_d0)
    de_max = max_potential_rate(cfg.dynamics)[1] if cfg.dynamics is not None else None

    # source-side plan: target magnitude (angle preserved), per-step rate cap
    e_true = cfg.e0
    e_target = cfg.e0
    ramp_cap: float | None = None

    pending = sorted(cfg.events, key=lambda ev: ev.time)
    idx = 0
    records: list[TrajectoryRecord] = []
    for t in times:
        while idx < len(pending) and pending[idx].time <= t + cfg.dt / 2:
            ev = pending[idx]
            idx += 1
            p = ev.params
            if ev.kind == "fault_step":
                zd.apply_fault(
                    ev.time,
                    _complex_param(p, "z_fault_re", "z_fault_im"),
                    float(p.get("duration", 0.08)),
                    float(p.get("tau", 0.15)),
                )
            elif ev.kind == "impedance_switch":
                z_new = _complex_param(p, "z_re", "z_im")
                z_jump = _complex_param(p, "jump_re", "jump_im", default=z_new)
                zd.apply_switch(ev.time, z_new, z_jump, float(p.get("tau", 0.0)))
            elif ev.kind == "potential_ramp":
                mag = float(p["e_target"])
                angle = math.atan2(e_target.imag, e_target.real)
                e_target = mag * complex(math.cos(angle), math.sin(angle))
                ramp_cap = float(p["rate"]) * cfg.dt if "rate" in p else None
            elif ev.kind == "compensator_trip":
                mag = abs(e_target) + float(p.get("de", 0.0))
                angle = math.atan2(e_target.imag, e_target.real)
                e_target = mag * complex(math.cos(angle), math.sin(angle))
                z_true += complex(float(p.get("dr", 0.0)), float(p.get("dx", 0.0)))
                if cfg.dynamics is None and "de" in p:
                    e_true = e_target  # trips step instantly without dynamics

        # slew the source toward its target
        move = e_target - e_true
        caps = [c for c in (de_max, ramp_cap) if c is not None]
        cap = min(caps) if caps else None
        if cap is not None and abs(move) > cap:
            e_true += move / abs(move) * cap
        else:
            e_true = e_target

        z_d = zd.value(t)
        i_true = e_true / (z_true + z_d)
        v_true = e_true - z_true * i_true

        i_d_true = math.nan
        if cfg.hvdc is not None and cfg.far_side is not None:
            p_pu = (v_true * i_true.conjugate()).real
            p_mw = p_pu * cfg.hvdc.base.s_mva
            if cfg.side == "inverter":
                p_mw = -p_mw
            if p_mw > 1.0:
                own = AcSide(e_th=abs(e_true), x_th=z_true.imag, r_th=z_true.real)
                ac_r = own if cfg.side == "rectifier" else cfg.far_side
                ac_i = cfg.far_side if cfg.side == "rectifier" else own
                try:
                    i_d_true = initial_current_for_power(
                        cfg.hvdc, ac_r, ac_i, p_mw, side=cfg.side, tol_mw=1e-4
                    )
                except (InfeasibleOperatingPoint, FixedPointDivergence):
                    pass

        clean = PmuSample(t=t, v=v_true, i=i_true, terminal_id=cfg.terminal_id)
        noisy = inject_noise(clean, cfg.noise_variance, rng)
        records.append(
            TrajectoryRecord(
                sample=noisy,
                v_true=v_true,
                i_true=i_true,
                e_true=e_true,
                r_true=z_true.real,
                x_true=z_true.imag,
                i_d_true=i_d_true,
            )
        )
    return records
