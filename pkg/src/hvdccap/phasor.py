"""Phasor samples, per-unit bases and unit conversions.

Phasors are plain ``complex`` values in rectangular form; magnitude and angle
are derived on demand with ``abs``/``cmath.phase``.  AC quantities are carried
in per-unit on the system MVA / AC voltage base, while the DC-side converter
equations work in physical units (kV, kA, MW, ohm), so the conversion helpers
here sit at that boundary.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PerUnitBase:
    """System base quantities.

    s_mva      -- three-phase MVA base
    v_ac_kv    -- AC line-to-line voltage base, kV
    v_dc_kv    -- nominal DC voltage, kV
    i_dc_ka    -- nominal DC current, kA
    f_hz       -- system frequency
    """

    s_mva: float = 1000.0
    v_ac_kv: float = 345.0
    v_dc_kv: float = 500.0
    i_dc_ka: float = 2.0
    f_hz: float = 50.0

    def __post_init__(self) -> None:
        for name in ("s_mva", "v_ac_kv", "v_dc_kv", "i_dc_ka", "f_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"PerUnitBase.{name} must be positive")


#: per-unit kinds understood by the conversion helpers
_KIND_ATTR = {
    "ac_voltage": "v_ac_kv",
    "dc_voltage": "v_dc_kv",
    "dc_current": "i_dc_ka",
    "power": "s_mva",
}


def pu_to_physical(x: float, base: PerUnitBase, kind: str) -> float:
    """Convert a per-unit value to physical units (kV, kA or MW)."""
    try:
        return x * getattr(base, _KIND_ATTR[kind])
    except KeyError:
        raise ValueError(f"unknown per-unit kind {kind!r}") from None


def physical_to_pu(x: float, base: PerUnitBase, kind: str) -> float:
    """Inverse of :func:`pu_to_physical`; the roundtrip is the identity."""
    try:
        return x / getattr(base, _KIND_ATTR[kind])
    except KeyError:
        raise ValueError(f"unknown per-unit kind {kind!r}") from None


@dataclass(frozen=True)
class PmuSample:
    """One synchrophasor measurement at a converter terminal.

    t           -- seconds since the start of the trajectory
    v           -- positive-sequence voltage phasor, p.u.
    i           -- positive-sequence current phasor, p.u.
    terminal_id -- terminal the stream belongs to
    """

    t: float
    v: complex
    i: complex
    terminal_id: str = "term"


def delta(a: PmuSample, b: PmuSample) -> tuple[complex, complex]:
    """Componentwise (dV, dI) between two samples of the same terminal.

    Requires ``b`` to be the later sample; deltas are antisymmetric and
    linear in the inputs.
    """
    if a.terminal_id != b.terminal_id:
        raise ValueError(
            f"samples from different terminals: {a.terminal_id!r} vs {b.terminal_id!r}"
        )
    if not b.t > a.t:
        raise ValueError(f"samples out of order: {b.t} <= {a.t}")
    return b.v - a.v, b.i - a.i
