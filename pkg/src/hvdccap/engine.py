"""Capacity sweep under the full constraint set, and multi-link allocation.

The sweep raises the DC current from the present operating point, re-solving
the AC/DC fixed point at every step, until one of the limits binds: minimum
ignition angle, VDCOL, converter thermal rating, AC bus voltage band, power
rollover, or outright infeasibility.  A bisection pass then sharpens the
binding current so the reported capacity does not depend on the sweep
granularity.

:class:`CapacityEngine` drives one terminal: every PMU sample updates the
Thevenin estimate, the present DC current is recovered from the measured
active power, and a fresh sweep is run.  The multi-link allocator splits an
emergency power shortage so all participating links keep the same remaining
margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .converter import (
    AcSide,
    DcOperatingPoint,
    FixedPointDivergence,
    HvdcConfig,
    InfeasibleOperatingPoint,
    acdc_fixed_point,
    converter_rating_limit,
    initial_current_for_power,
    vdcol_limit,
)
from .estimator import TeEstimator, TheveninEstimate
from .phasor import PmuSample

#: binding labels a sweep can terminate on
BINDINGS = (
    "alpha_min",
    "vdcol",
    "converter_rating",
    "e_min",
    "e_max",
    "power_rollover",
    "infeasible",
)


@dataclass(frozen=True)
class CapacityResult:
    """Outcome of one capacity sweep."""

    t: float
    mc_power: float                      # MW on the configured side
    binding: str
    i_d_at_mc: float                     # kA
    sweep: tuple[tuple[float, DcOperatingPoint], ...]
    te: TheveninEstimate | None = None
    side: str = "rectifier"
    other_side_rollover: bool = False    # the unmonitored side rolled over first


def _violation(
    op: DcOperatingPoint, cfg: HvdcConfig, t_since_boost: float
) -> str | None:
    """First violated constraint at a converged point, or None."""
    if op.alpha < cfg.alpha_min - 1e-12:
        return "alpha_min"
    base = cfg.base
    v_mid = (op.v_dr + op.v_di) / 2.0 / base.v_dc_kv
    if op.i_d / base.i_dc_ka > vdcol_limit(cfg.vdcol, v_mid):
        return "vdcol"
    if op.i_d > converter_rating_limit(t_since_boost, base.i_dc_ka, cfg):
        return "converter_rating"
    e_dr_pu = op.e_dr / base.v_ac_kv
    e_di_pu = op.e_di / base.v_ac_kv
    if e_dr_pu < cfg.e_min or e_di_pu < cfg.e_min:
        return "e_min"
    if e_dr_pu > cfg.e_max or e_di_pu > cfg.e_max:
        return "e_max"
    return None


def estimate_capacity(
    cfg: HvdcConfig,
    ac_r: AcSide,
    ac_i: AcSide,
    i_start: float,
    delta_id: float = 0.01,
    side: str = "rectifier",
    t_since_boost: float = 0.0,
    mu: float = 1e-4,
    refine_tol: float = 1e-4,
    te: TheveninEstimate | None = None,
    t: float = 0.0,
    p_now_mw: float = math.nan,
    max_points: int = 5000,
) -> CapacityResult:
    """Sweep the DC current upward from ``i_start`` until a limit binds.

    ``delta_id`` is the sweep step (kA) and ``refine_tol`` the width (kA) to
    which the binding current is bisected.  Returns the last feasible point's
    power on ``side`` as the capacity.
    """
    if side not in ("rectifier", "inverter"):
        raise ValueError(f"unknown side {side!r}")
    if delta_id <= 0:
        raise ValueError("delta_id must be positive")

    def p_of(op: DcOperatingPoint) -> float:
        return op.p_dr if side == "rectifier" else op.p_di

    def p_other(op: DcOperatingPoint) -> float:
        return op.p_di if side == "rectifier" else op.p_dr

    warm: list[float | None] = [None, None]

    def solve(i_d: float) -> tuple[DcOperatingPoint | None, str | None]:
        try:
            op = acdc_fixed_point(
                cfg, ac_r, ac_i, i_d, mu=mu, e_dr0_pu=warm[0], e_di0_pu=warm[1]
            )
        except (InfeasibleOperatingPoint, FixedPointDivergence):
            return None, "infeasible"
        v_base = cfg.base.v_ac_kv
        warm[0], warm[1] = op.e_dr / v_base, op.e_di / v_base
        return op, _violation(op, cfg, t_since_boost)

    sweep: list[tuple[float, DcOperatingPoint]] = []
    prev: DcOperatingPoint | None = None
    other_rolled = False
    binding: str | None = None
    bad_i: float | None = None

    i_d = i_start
    for _ in range(max_points):
        op, viol = solve(i_d)
        if op is None or viol is not None:
            binding, bad_i = viol or "infeasible", i_d
            break
        if prev is not None and p_of(op) < p_of(prev):
            binding = "power_rollover"
            break
        if prev is not None and not other_rolled and p_other(op) < p_other(prev):
            other_rolled = True
        sweep.append((i_d, op))
        prev = op
        i_d += delta_id
    else:
        raise RuntimeError(f"sweep did not terminate within {max_points} points")

    if prev is None:
        # not even the present point is feasible
        return CapacityResult(
            t=t, mc_power=p_now_mw, binding=binding or "infeasible",
            i_d_at_mc=i_start, sweep=(), te=te, side=side,
        )

    if binding != "power_rollover" and bad_i is not None:
        # sharpen the binding current between the last good and first bad point
        lo, lo_op = sweep[-1][0], prev
        hi = bad_i
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            op, viol = solve(mid)
            if op is None or viol is not None:
                hi = mid
                binding = viol or "infeasible"
            else:
                lo, lo_op = mid, op
        if lo_op is not prev:
            sweep.append((lo, lo_op))
            prev = lo_op

    return CapacityResult(
        t=t,
        mc_power=p_of(prev),
        binding=binding or "infeasible",
        i_d_at_mc=prev.i_d,
        sweep=tuple(sweep),
        te=te,
        side=side,
        other_side_rollover=other_rolled,
    )


class CapacityEngine:
    """Streaming per-terminal pipeline: estimate, locate, sweep.

    The far AC side is taken from configuration; the local side comes from
    the Thevenin estimator fed by this terminal's samples.  The present DC
    current is recovered from the measured active power through the
    converter model, matching how a dispatcher would seed the sweep.
    """

    def __init__(
        self,
        cfg: HvdcConfig,
        far_side: AcSide,
        side: str = "rectifier",
        estimator: TeEstimator | None = None,
        delta_id: float = 0.01,
        mu: float = 1e-4,
        refine_tol: float = 1e-4,
        boost_start_s: float = 0.0,
    ):
        if side not in ("rectifier", "inverter"):
            raise ValueError(f"unknown side {side!r}")
        self.cfg = cfg
        self.far_side = far_side
        self.side = side
        self.estimator = estimator or TeEstimator()
        self.delta_id = delta_id
        self.mu = mu
        self.refine_tol = refine_tol
        self.boost_start_s = boost_start_s

    def step(self, sample: PmuSample) -> CapacityResult | None:
        """Consume one sample; None until a Thevenin estimate exists."""
        te = self.estimator.update(sample)
        if te is None:
            return None

        own = AcSide(e_th=abs(te.e), x_th=te.x, r_th=te.r)
        if self.side == "rectifier":
            ac_r, ac_i = own, self.far_side
        else:
            ac_r, ac_i = self.far_side, own

        p_meas = (sample.v * sample.i.conjugate()).real * self.cfg.base.s_mva
        if self.side == "inverter":
            p_meas = -p_meas
        t_boost = max(0.0, sample.t - self.boost_start_s)

        try:
            i_now = initial_current_for_power(
                self.cfg, ac_r, ac_i, max(p_meas, 1.0), side=self.side, tol_mw=1e-3
            )
        except (InfeasibleOperatingPoint, FixedPointDivergence):
            return CapacityResult(
                t=sample.t, mc_power=p_meas, binding="infeasible",
                i_d_at_mc=math.nan, sweep=(), te=te, side=self.side,
            )

        return estimate_capacity(
            self.cfg,
            ac_r,
            ac_i,
            i_now,
            delta_id=self.delta_id,
            side=self.side,
            t_since_boost=t_boost,
            mu=self.mu,
            refine_tol=self.refine_tol,
            te=te,
            t=sample.t,
            p_now_mw=p_meas,
        )


@dataclass(frozen=True)
class AllocationEntry:
    name: str
    initial_mw: float
    mc_mw: float
    margin_mw: float
    target_mw: float


@dataclass(frozen=True)
class AllocationPlan:
    """Equal-remaining-margin split of a power shortage across links."""

    entries: tuple[AllocationEntry, ...]
    shortage_mw: float
    deficit_mw: float            # shortage that no link could absorb
    remaining_margin_mw: float   # common margin kept by participating links

    @property
    def total_increase_mw(self) -> float:
        return sum(e.target_mw - e.initial_mw for e in self.entries)


def allocate(
    links: Sequence[tuple[float, float]],
    shortage_mw: float,
    names: Sequence[str] | None = None,
) -> AllocationPlan:
    """Split ``shortage_mw`` across links given as ``(initial, mc)`` pairs.

    Waterfill on the margins: find the common remaining margin ``rho`` with
    ``sum(max(margin_i - rho, 0)) = min(shortage, total margin)``; each link
    is raised to ``mc_i - rho`` but never below its initial power.  Shortage
    beyond the total margin is reported as deficit.
    """
    if shortage_mw < 0:
        raise ValueError("shortage must be nonnegative")
    if not links:
        raise ValueError("need at least one link")
    margins = []
    for initial, mc in links:
        if mc < initial:
            raise ValueError(f"capacity {mc} below initial power {initial}")
        margins.append(mc - initial)

    total = sum(margins)
    need = min(shortage_mw, total)
    deficit = shortage_mw - need

    ordered = sorted(margins, reverse=True)
    rho = 0.0
    prefix = 0.0
    for j, m in enumerate(ordered, start=1):
        prefix += m
        cand = (prefix - need) / j
        nxt = ordered[j] if j < len(ordered) else -math.inf
        if cand >= nxt:
            rho = max(cand, 0.0)
            break

    names = list(names) if names is not None else [f"hvdc{k+1}" for k in range(len(links))]
    entries = tuple(
        AllocationEntry(
            name=nm,
            initial_mw=initial,
            mc_mw=mc,
            margin_mw=mc - initial,
            target_mw=initial + max((mc - initial) - rho, 0.0),
        )
        for nm, (initial, mc) in zip(names, links)
    )
    return AllocationPlan(
        entries=entries,
        shortage_mw=shortage_mw,
        deficit_mw=deficit,
        remaining_margin_mw=rho,
    )
