"""Steady-state model of a two-terminal LCC-HVDC link and its AC interface.

DC-side equations work in physical units (kV, kA, MW, Mvar, ohm) so the
bridge constant 1.35 and the commutation drop (3/pi)*B*Xd*Id keep their
textbook form.  The AC interface (Thevenin source behind a reactance) is
solved in per-unit.  The two meet in :func:`acdc_fixed_point`, which
alternates DC and AC half-steps until the converter bus voltages settle.

Sign conventions: the rectifier draws ``q_ar = q_dr - q_acr`` from its AC
system, the inverter injects ``q_ai = q_aci - q_di`` into its AC system;
active power flows grid -> rectifier and inverter -> grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .phasor import PerUnitBase

#: ideal no-load voltage constant of a 6-pulse bridge, V_do = 1.35 * B * N * E_ll
BRIDGE_K = 1.35
#: commutation drop constant (3/pi)
COMM_K = 3.0 / math.pi


class InfeasibleOperatingPoint(Exception):
    """No steady-state solution exists at the requested current."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class FixedPointDivergence(Exception):
    """AC/DC alternation failed to settle within the iteration budget."""


@dataclass(frozen=True)
class VdcolCurve:
    """Voltage dependent current order limit, piecewise linear in DC voltage.

    All values in per-unit on the DC bases.  Below ``v1`` the ceiling is
    ``i1``; above ``v2`` it continues with slope ``k2`` from ``i2``.
    """

    v1: float = 0.4
    v2: float = 0.9
    i1: float = 0.55
    i2: float = 1.0
    k1: float = 0.9
    k2: float = 1.0

    def __post_init__(self) -> None:
        if not self.v1 < self.v2:
            raise ValueError("VDCOL breakpoints must satisfy v1 < v2")
        if not self.i1 < self.i2:
            raise ValueError("VDCOL levels must satisfy i1 < i2")

    @property
    def continuous(self) -> bool:
        """True when the middle segment meets ``i2`` at ``v2`` (within 1e-9)."""
        return abs(self.i1 + self.k1 * (self.v2 - self.v1) - self.i2) <= 1e-9

    def limit(self, v_d: float) -> float:
        """Current ceiling (p.u.) at DC voltage ``v_d`` (p.u.)."""
        if v_d >= self.v2:
            return self.i2 + self.k2 * (v_d - self.v2)
        if v_d > self.v1:
            return self.i1 + self.k1 * (v_d - self.v1)
        return self.i1


@dataclass(frozen=True)
class AcSide:
    """Thevenin equivalent of one AC system seen from the converter bus.

    e_th -- source magnitude, p.u.; x_th -- reactance, p.u.; r_th is kept for
    bookkeeping (the voltage solve uses the reactance only).
    """

    e_th: float
    x_th: float
    r_th: float = 0.0

    def __post_init__(self) -> None:
        if self.x_th <= 0:
            raise ValueError("AcSide.x_th must be positive")


@dataclass(frozen=True)
class HvdcConfig:
    """Converter constants, limits and bases of one HVDC link."""

    b_r: int = 2                    # bridges in series, rectifier
    b_i: int = 2                    # bridges in series, inverter
    n_r: float = 0.5738             # transformer ratio, rectifier
    n_i: float = 0.5718             # transformer ratio, inverter
    x_dr: float = 8.3201            # commutation reactance, ohm
    x_di: float = 7.1949            # commutation reactance, ohm
    r_d: float = 5.79               # DC line resistance, ohm
    alpha_min: float = math.radians(5.0)
    gamma_min: float = math.radians(17.0)
    e_min: float = 0.9              # AC bus voltage floor, p.u.
    e_max: float = math.inf         # AC bus voltage ceiling, p.u.
    i_margin: float = 0.1           # rectifier/inverter current margin, p.u. of I_dN
    vdcol: VdcolCurve = field(default_factory=VdcolCurve)
    i_ra_short: float = 1.3         # converter rating multiple, boost window
    i_ra_long: float = 1.1          # converter rating multiple, sustained
    i_ra_window_s: float = 3.0      # length of the short-term window, s
    q_acr_mvar: float = 300.0       # rectifier compensator capacity at 1 p.u.
    q_aci_mvar: float = 300.0       # inverter compensator capacity at 1 p.u.
    base: PerUnitBase = field(default_factory=PerUnitBase)

    def __post_init__(self) -> None:
        if min(self.x_dr, self.x_di, self.r_d) <= 0:
            raise ValueError("reactances and line resistance must be positive")
        if not 0 <= self.alpha_min < math.pi / 2:
            raise ValueError("alpha_min out of range")
        if self.gamma_min <= 0:
            raise ValueError("gamma_min must be positive")
        if not self.e_min < self.e_max:
            raise ValueError("e_min must be below e_max")
        if self.b_r < 1 or self.b_i < 1:
            raise ValueError("bridge counts must be at least 1")


@dataclass(frozen=True)
class DcOperatingPoint:
    """Converged steady state of the link at one DC current."""

    i_d: float        # kA
    v_dr: float       # rectifier DC voltage, kV
    v_di: float       # inverter DC voltage, kV
    alpha: float      # ignition angle, rad
    gamma: float      # extinction angle, rad
    p_dr: float       # MW
    p_di: float       # MW
    q_dr: float       # Mvar
    q_di: float       # Mvar
    e_dr: float       # rectifier AC bus voltage, kV
    e_di: float       # inverter AC bus voltage, kV
    phi_r: float      # rectifier power factor angle, rad
    phi_i: float      # inverter power factor angle, rad
    iterations: int = 0


def ideal_no_load_voltage(bridges: int, ratio: float, e_d_kv: float) -> float:
    """Ideal no-load direct voltage of a converter, kV."""
    if bridges <= 0 or ratio <= 0 or e_d_kv < 0:
        raise ValueError("bridge count and ratio must be positive, voltage nonnegative")
    return BRIDGE_K * bridges * ratio * e_d_kv


def dc_line_solve(
    cfg: HvdcConfig, e_dr_kv: float, e_di_kv: float, i_d: float, gamma: float
) -> tuple[float, float, float]:
    """Solve the DC line for (v_dr, v_di, alpha) at fixed extinction angle.

    The inverter holds ``gamma``; the rectifier ignition angle follows from
    the no-load voltage at its AC bus.  Raises
    :class:`InfeasibleOperatingPoint` when cos(alpha) leaves [-1, 1].
    """
    if i_d < 0:
        raise ValueError("i_d must be nonnegative")
    v_dor = ideal_no_load_voltage(cfg.b_r, cfg.n_r, e_dr_kv)
    v_doi = ideal_no_load_voltage(cfg.b_i, cfg.n_i, e_di_kv)
    drop_i = COMM_K * cfg.b_i * cfg.x_di * i_d
    v_di = v_doi * math.cos(gamma) - drop_i
    v_dr = (cfg.r_d - COMM_K * cfg.b_i * cfg.x_di) * i_d + v_doi * math.cos(gamma)
    cos_a = (COMM_K * cfg.b_r * cfg.x_dr * i_d + v_dr) / v_dor
    if not -1.0 <= cos_a <= 1.0:
        raise InfeasibleOperatingPoint(f"cos(alpha) = {cos_a:.6f} outside [-1, 1]")
    return v_dr, v_di, math.acos(cos_a)


def converter_pq(v_d: float, v_do: float, i_d: float) -> tuple[float, float, float]:
    """Active/reactive power (MW, Mvar) and power factor angle of a converter."""
    if not 0 < v_d <= v_do:
        raise InfeasibleOperatingPoint(f"DC voltage {v_d:.3f} outside (0, {v_do:.3f}]")
    p = v_d * i_d
    phi = math.acos(v_d / v_do)
    return p, p * math.tan(phi), phi


def ac_voltage_solve(e_th: float, x_th: float, p_a: float, q_a: float, side: str) -> float:
    """Converter bus voltage magnitude (p.u.) behind a Thevenin reactance.

    ``side`` selects the reactive sign convention: the rectifier draws
    ``q_a`` from the grid, the inverter injects it.  Returns the upper root;
    a negative discriminant marks voltage collapse and raises
    :class:`InfeasibleOperatingPoint`.
    """
    if side == "rectifier":
        b = e_th * e_th - 2.0 * q_a * x_th
    elif side == "inverter":
        b = e_th * e_th + 2.0 * q_a * x_th
    else:
        raise ValueError(f"unknown side {side!r}")
    m = b * b - 4.0 * x_th * x_th * (p_a * p_a + q_a * q_a)
    if m < 0:
        raise InfeasibleOperatingPoint(f"{side} voltage solution lost (discriminant {m:.3e})")
    e_sq = 0.5 * (b + math.sqrt(m))
    if e_sq <= 0:
        raise InfeasibleOperatingPoint(f"{side} bus voltage collapsed")
    return math.sqrt(e_sq)


def compensator_q(e_d_pu: float, q_rated_mvar: float) -> float:
    """Reactive injection (Mvar) of a shunt bank sized ``q_rated`` at 1 p.u."""
    if q_rated_mvar < 0:
        raise ValueError("compensator rating must be nonnegative")
    return q_rated_mvar * e_d_pu * e_d_pu


def vdcol_limit(curve: VdcolCurve, v_d_mid: float) -> float:
    """Current ceiling (p.u.) at the mid-line DC voltage (p.u.)."""
    return curve.limit(v_d_mid)


def converter_rating_limit(t_since_boost: float, i_dn: float, cfg: HvdcConfig) -> float:
    """Thermal current ceiling (same units as ``i_dn``) after a power boost."""
    if t_since_boost < 0:
        raise ValueError("t_since_boost must be nonnegative")
    mult = cfg.i_ra_short if t_since_boost <= cfg.i_ra_window_s else cfg.i_ra_long
    return mult * i_dn


def classify_control_mode(
    alpha: float,
    gamma: float,
    i_d: float,
    i_ord: float,
    cfg: HvdcConfig,
    angle_tol: float = math.radians(0.25),
    current_tol: float = 0.02,
) -> str:
    """Label the converter control mode from the observed angles and current.

    Returns one of ``CC_CEA``, ``CIA_CD``, ``CIA_CC`` or ``unknown``.
    Currents are in p.u. of the rated DC current.
    """
    alpha_at_min = abs(alpha - cfg.alpha_min) <= angle_tol
    gamma_at_min = abs(gamma - cfg.gamma_min) <= angle_tol
    dev = i_ord - i_d
    if alpha > cfg.alpha_min + angle_tol and gamma_at_min and abs(dev) <= current_tol:
        return "CC_CEA"
    if alpha_at_min and abs(dev - cfg.i_margin) <= current_tol:
        return "CIA_CC"
    if alpha_at_min and gamma > cfg.gamma_min + angle_tol and dev > current_tol:
        return "CIA_CD"
    return "unknown"


def acdc_fixed_point(
    cfg: HvdcConfig,
    ac_r: AcSide,
    ac_i: AcSide,
    i_d: float,
    mu: float = 1e-4,
    max_iter: int = 100,
    e_dr0_pu: float | None = None,
    e_di0_pu: float | None = None,
) -> DcOperatingPoint:
    """Alternating AC/DC solve at fixed DC current and gamma = gamma_min.

    Each pass evaluates the DC side from the current bus-voltage guesses,
    folds the compensators in, and re-solves both bus voltages from the
    Thevenin sources.  Stops once the squared voltage move
    ``(e_dr - e_dr0)^2 + (e_di - e_di0)^2`` (kV^2) drops to ``mu``.

    Raises :class:`InfeasibleOperatingPoint` when either side loses its
    voltage solution and :class:`FixedPointDivergence` after ``max_iter``.
    """
    if i_d <= 0:
        raise ValueError("i_d must be positive")
    if mu <= 0:
        raise ValueError("mu must be positive")
    v_base = cfg.base.v_ac_kv
    e_dr = (ac_r.e_th if e_dr0_pu is None else e_dr0_pu) * v_base
    e_di = (ac_i.e_th if e_di0_pu is None else e_di0_pu) * v_base

    for it in range(1, max_iter + 1):
        v_dor = ideal_no_load_voltage(cfg.b_r, cfg.n_r, e_dr)
        v_doi = ideal_no_load_voltage(cfg.b_i, cfg.n_i, e_di)
        # alpha is diagnostic only, so the line voltages are formed directly
        # here and the ignition-angle range is checked after convergence
        drop_i = COMM_K * cfg.b_i * cfg.x_di * i_d
        v_di = v_doi * math.cos(cfg.gamma_min) - drop_i
        v_dr = (cfg.r_d - COMM_K * cfg.b_i * cfg.x_di) * i_d + v_doi * math.cos(cfg.gamma_min)
        if v_di <= 0:
            raise InfeasibleOperatingPoint("inverter DC voltage collapsed")
        p_dr, q_dr, phi_r = converter_pq(v_dr, v_dor, i_d)
        p_di, q_di, phi_i = converter_pq(v_di, v_doi, i_d)
        q_acr = compensator_q(e_dr / v_base, cfg.q_acr_mvar)
        q_aci = compensator_q(e_di / v_base, cfg.q_aci_mvar)

        s = cfg.base.s_mva
        e_dr_new = ac_voltage_solve(ac_r.e_th, ac_r.x_th, p_dr / s, (q_dr - q_acr) / s, "rectifier") * v_base
        e_di_new = ac_voltage_solve(ac_i.e_th, ac_i.x_th, p_di / s, (q_aci - q_di) / s, "inverter") * v_base

        d = (e_dr_new - e_dr) ** 2 + (e_di_new - e_di) ** 2
        e_dr, e_di = e_dr_new, e_di_new
        if d <= mu:
            # alpha is diagnostic: recompute at the converged voltages
            v_dor = ideal_no_load_voltage(cfg.b_r, cfg.n_r, e_dr)
            cos_a = (COMM_K * cfg.b_r * cfg.x_dr * i_d + v_dr) / v_dor
            if cos_a < -1.0:
                raise InfeasibleOperatingPoint("rectifier cannot reach the operating point")
            # cos_a > 1 means alpha would fall below zero; report as alpha = 0
            alpha = math.acos(min(cos_a, 1.0))
            return DcOperatingPoint(
                i_d=i_d, v_dr=v_dr, v_di=v_di, alpha=alpha, gamma=cfg.gamma_min,
                p_dr=p_dr, p_di=p_di, q_dr=q_dr, q_di=q_di,
                e_dr=e_dr, e_di=e_di, phi_r=phi_r, phi_i=phi_i, iterations=it,
            )
    raise FixedPointDivergence(f"no settlement after {max_iter} iterations at i_d={i_d:.4f} kA")


def initial_current_for_power(
    cfg: HvdcConfig,
    ac_r: AcSide,
    ac_i: AcSide,
    p_mw: float,
    side: str = "rectifier",
    tol_mw: float = 1e-6,
) -> float:
    """DC current (kA) at which the converged point carries ``p_mw``.

    Bisection on the monotone low-current branch of P(i_d); used to place
    the sweep start at the presently measured power.
    """
    if p_mw <= 0:
        raise ValueError("power must be positive")

    def power(i_d: float) -> float | None:
        try:
            op = acdc_fixed_point(cfg, ac_r, ac_i, i_d)
        except (InfeasibleOperatingPoint, FixedPointDivergence):
            return None
        return op.p_dr if side == "rectifier" else op.p_di

    # CC-CEA can be infeasible at light load (the rectifier cannot match the
    # inverter's held voltage) and beyond the capability nose, so first scan
    # upward for a bracket around the target inside the feasible band.
    lo: float | None = None      # feasible, power below target
    p_lo: float | None = None
    hi: float | None = None      # above target or past the feasible band
    i_d = 1e-3
    while i_d <= 100.0:
        p = power(i_d)
        if p is None:
            if lo is not None:
                hi = i_d
                break
        else:
            if p >= p_mw:
                hi = i_d
                break
            if p_lo is not None and p < p_lo:
                raise InfeasibleOperatingPoint(f"power rolls over below {p_mw} MW")
            lo, p_lo = i_d, p
        i_d *= 2.0
    if hi is None:
        raise InfeasibleOperatingPoint(f"target power {p_mw} MW not reachable")

    if lo is None:
        # feasibility starts above the target power: descend to its edge
        lo = hi / 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if power(mid) is None:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-6:
                break
        return hi

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        p_mid = power(mid)
        if p_mid is not None and abs(p_mid - p_mw) <= tol_mw:
            return mid
        if p_mid is None or p_mid >= p_mw:
            hi = mid
        else:
            lo = mid
    final = power(hi)
    if final is None or abs(final - p_mw) > max(tol_mw, 1e-3 * p_mw):
        raise InfeasibleOperatingPoint(f"target power {p_mw} MW not reachable")
    return hi


def solve_rectifier_tap(
    cfg: HvdcConfig,
    ac_r: AcSide,
    ac_i: AcSide,
    p_mw: float,
    alpha_target: float = math.radians(15.0),
    tol: float = 1e-10,
) -> float:
    """Rectifier transformer ratio that puts alpha at ``alpha_target``.

    Mirrors steady-state commissioning practice: the tap is moved until the
    ignition angle at the nominal power sits at the target.  Bisection on
    n_r (alpha increases with the ratio).
    """
    def alpha_at(n_r: float) -> float:
        trial = replace(cfg, n_r=n_r)
        i_d = initial_current_for_power(trial, ac_r, ac_i, p_mw)
        return acdc_fixed_point(trial, ac_r, ac_i, i_d).alpha

    lo, hi = 0.3, 1.2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        try:
            a = alpha_at(mid)
        except (InfeasibleOperatingPoint, FixedPointDivergence):
            lo = mid
            continue
        if abs(a - alpha_target) <= tol:
            return mid
        if a < alpha_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)
