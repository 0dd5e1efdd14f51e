"""CSV schemas and the flat key/value run configuration.

Config files are plain ``key = value`` lines with dotted section keys and
``#`` comments.  Every numeric key defaults to the reference study value, so
a minimal file only names the mode and whatever deviates.  All floats are
written with 17 significant digits so a write/read roundtrip is exact.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

from .converter import AcSide, HvdcConfig, VdcolCurve
from .engine import AllocationPlan, CapacityResult
from .estimator import ExcitationParams, TeEstimator, TheveninEstimate, max_potential_rate, screening_floor
from .phasor import PerUnitBase, PmuSample
from .simulate import ScenarioConfig, SimEvent, TrajectoryRecord

MODES = ("simulate", "estimate", "mc", "run", "allocate")

#: documented process exit codes
EXIT_OK = 0
EXIT_ERROR = 1        # unexpected failure
EXIT_CONFIG = 2       # bad configuration or invariant violation
EXIT_DATA = 3         # unreadable or malformed input data


class CliError(Exception):
    """User-facing failure carrying its process exit code."""

    def __init__(self, message: str, exit_code: int = EXIT_ERROR):
        super().__init__(message)
        self.exit_code = exit_code


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# flat key/value config


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines into a flat mapping."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{source}:{lineno}: expected 'key = value'", EXIT_CONFIG)
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise CliError(f"{source}:{lineno}: empty key", EXIT_CONFIG)
        out[key] = value
    return out


def load_config(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read(), source=path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_DATA) from exc


class ConfigMap:
    """Typed accessors over the flat mapping; errors carry the key name."""

    def __init__(self, raw: dict[str, str]):
        self.raw = dict(raw)

    def _get(self, key: str, default):
        return self.raw.get(key, default)

    def str_(self, key: str, default: str | None = None) -> str:
        v = self._get(key, default)
        if v is None:
            raise CliError(f"missing required config key {key!r}", EXIT_CONFIG)
        return str(v)

    def float_(self, key: str, default: float | None = None) -> float:
        v = self._get(key, default)
        if v is None:
            raise CliError(f"missing required config key {key!r}", EXIT_CONFIG)
        try:
            return float(v)
        except (TypeError, ValueError):
            raise CliError(f"config key {key!r}: not a number: {v!r}", EXIT_CONFIG) from None

    def int_(self, key: str, default: int | None = None) -> int:
        v = self._get(key, default)
        if v is None:
            raise CliError(f"missing required config key {key!r}", EXIT_CONFIG)
        try:
            return int(str(v))
        except ValueError:
            raise CliError(f"config key {key!r}: not an integer: {v!r}", EXIT_CONFIG) from None

    def bool_(self, key: str, default: bool = False) -> bool:
        v = self._get(key, None)
        if v is None:
            return default
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise CliError(f"config key {key!r}: not a boolean: {v!r}", EXIT_CONFIG)

    def keys_with_prefix(self, prefix: str) -> list[str]:
        return [k for k in self.raw if k.startswith(prefix)]


@dataclass
class RunConfig:
    """Everything a single CLI invocation needs, already validated."""

    mode: str
    out_dir: str
    seed: int | None
    cfg_map: ConfigMap = field(repr=False)

    base: PerUnitBase = field(default_factory=PerUnitBase)
    hvdc: HvdcConfig = field(default_factory=HvdcConfig)
    far_side: AcSide = field(default_factory=lambda: AcSide(1.0, 0.01))
    excitation: ExcitationParams = field(default_factory=ExcitationParams)

    # estimator
    window: int = 20
    lam: float = 0.8
    coeff: float = 0.15
    e_gate: tuple[float, float] = (0.5, 1.5)

    # engine
    side: str = "rectifier"
    delta_id: float = 0.01
    mu: float = 1e-4
    refine_tol: float = 1e-4
    boost_start_s: float = 0.0

    scenario: ScenarioConfig | None = None

    # io paths (absolute, resolved against out_dir / config values)
    trajectory_csv: str = ""
    te_csv: str = ""
    mc_csv: str = ""
    allocation_csv: str = ""
    input_csv: str = ""

    # allocate inputs
    shortage_mw: float = 0.0
    allocate_links: list[tuple[str, float, float | None, str | None]] = field(default_factory=list)
    # (name, initial_mw, mc_mw or None, mc_csv path or None)

    def make_estimator(self) -> TeEstimator:
        floor = screening_floor(max_potential_rate(self.excitation)[1], 0.5)
        return TeEstimator(
            k=self.window, lam=self.lam, coeff=self.coeff, e_gate=self.e_gate, floor=floor
        )


def _build_events(cm: ConfigMap) -> tuple[SimEvent, ...]:
    idx: set[int] = set()
    for key in cm.keys_with_prefix("scenario.event."):
        parts = key.split(".")
        if len(parts) < 4:
            raise CliError(f"bad event key {key!r}", EXIT_CONFIG)
        try:
            idx.add(int(parts[2]))
        except ValueError:
            raise CliError(f"bad event index in key {key!r}", EXIT_CONFIG) from None
    events = []
    for n in sorted(idx):
        pfx = f"scenario.event.{n}."
        kind = cm.str_(pfx + "kind")
        time_ = cm.float_(pfx + "time")
        params = {}
        for key in cm.keys_with_prefix(pfx):
            name = key[len(pfx):]
            if name in ("kind", "time"):
                continue
            params[name] = cm.float_(key)
        try:
            events.append(SimEvent(time=time_, kind=kind, params=params))
        except ValueError as exc:
            raise CliError(f"event {n}: {exc}", EXIT_CONFIG) from exc
    return tuple(events)


def build_run_config(
    raw: dict[str, str],
    mode: str | None = None,
    out_dir: str | None = None,
    seed: int | None = None,
) -> RunConfig:
    """Assemble and validate a :class:`RunConfig`; CLI flags override keys."""
    cm = ConfigMap(raw)
    mode = mode or cm.str_("mode")
    if mode not in MODES:
        raise CliError(f"unknown mode {mode!r}; expected one of {MODES}", EXIT_CONFIG)
    out_dir = out_dir or cm.str_("out", "out")
    seed = seed if seed is not None else (cm.int_("seed") if "seed" in cm.raw else None)

    try:
        base = PerUnitBase(
            s_mva=cm.float_("base.s_mva", 1000.0),
            v_ac_kv=cm.float_("base.v_ac_kv", 345.0),
            v_dc_kv=cm.float_("base.v_dc_kv", 500.0),
            i_dc_ka=cm.float_("base.i_dc_ka", 2.0),
            f_hz=cm.float_("base.f_hz", 50.0),
        )
        vdcol = VdcolCurve(
            v1=cm.float_("vdcol.v1", 0.4),
            v2=cm.float_("vdcol.v2", 0.9),
            i1=cm.float_("vdcol.i1", 0.55),
            i2=cm.float_("vdcol.i2", 1.0),
            k1=cm.float_("vdcol.k1", 0.9),
            k2=cm.float_("vdcol.k2", 1.0),
        )
        e_max = cm.float_("hvdc.e_max_pu", math.inf)
        hvdc = HvdcConfig(
            b_r=cm.int_("hvdc.b_r", 2),
            b_i=cm.int_("hvdc.b_i", 2),
            n_r=cm.float_("hvdc.n_r", 0.5738),
            n_i=cm.float_("hvdc.n_i", 0.5718),
            x_dr=cm.float_("hvdc.x_dr_ohm", 8.3201),
            x_di=cm.float_("hvdc.x_di_ohm", 7.1949),
            r_d=cm.float_("hvdc.r_d_ohm", 5.79),
            alpha_min=math.radians(cm.float_("hvdc.alpha_min_deg", 5.0)),
            gamma_min=math.radians(cm.float_("hvdc.gamma_min_deg", 17.0)),
            e_min=cm.float_("hvdc.e_min_pu", 0.9),
            e_max=e_max,
            i_margin=cm.float_("hvdc.i_margin_pu", 0.1),
            vdcol=vdcol,
            i_ra_short=cm.float_("hvdc.i_ra_short", 1.3),
            i_ra_long=cm.float_("hvdc.i_ra_long", 1.1),
            i_ra_window_s=cm.float_("hvdc.i_ra_window_s", 3.0),
            q_acr_mvar=cm.float_("hvdc.q_acr_mvar", 300.0),
            q_aci_mvar=cm.float_("hvdc.q_aci_mvar", 300.0),
            base=base,
        )
        far = AcSide(
            e_th=cm.float_("far.e_pu", 1.0),
            x_th=cm.float_("far.x_pu", 0.01),
            r_th=cm.float_("far.r_pu", 0.0),
        )
        excitation = ExcitationParams(
            t_ff=cm.float_("excitation.t_ff_s", 0.53),
            t_d0p=cm.float_("excitation.t_d0p_s", 5.0),
            du_max=cm.float_("excitation.du_max_pu", 10.0),
            dt=cm.float_("excitation.dt_s", 0.01),
        )
        rc = RunConfig(
            mode=mode,
            out_dir=out_dir,
            seed=seed,
            cfg_map=cm,
            base=base,
            hvdc=hvdc,
            far_side=far,
            excitation=excitation,
            window=cm.int_("estimator.window", 20),
            lam=cm.float_("estimator.lambda", 0.8),
            coeff=cm.float_("estimator.coeff", 0.15),
            e_gate=(cm.float_("estimator.e_gate_low", 0.5), cm.float_("estimator.e_gate_high", 1.5)),
            side=cm.str_("engine.side", "rectifier"),
            delta_id=cm.float_("engine.delta_id_ka", 0.01),
            mu=cm.float_("engine.mu", 1e-4),
            refine_tol=cm.float_("engine.refine_tol_ka", 1e-4),
            boost_start_s=cm.float_("engine.boost_start_s", 0.0),
        )
        if rc.side not in ("rectifier", "inverter"):
            raise CliError(f"engine.side must be rectifier or inverter, got {rc.side!r}", EXIT_CONFIG)
        rc.make_estimator()  # validates coeff against the calibrated floor

        if mode in ("simulate", "run"):
            dynamics = excitation if cm.bool_("scenario.dynamics", False) else None
            rc.scenario = ScenarioConfig(
                duration=cm.float_("scenario.duration_s", 1.0),
                dt=cm.float_("scenario.dt_s", 0.01),
                e0=complex(cm.float_("scenario.e0_re", 1.0), cm.float_("scenario.e0_im", 0.0)),
                r=cm.float_("scenario.r_pu", 0.01),
                x=cm.float_("scenario.x_pu", 0.2),
                z_d0=complex(cm.float_("scenario.z_d0_re", 1.57), cm.float_("scenario.z_d0_im", 0.03)),
                dynamics=dynamics,
                events=_build_events(cm),
                noise_variance=cm.float_("scenario.noise_variance", 0.0),
                seed=seed if seed is not None else cm.int_("scenario.seed", 0),
                terminal_id=cm.str_("scenario.terminal", "rect"),
                hvdc=hvdc if cm.bool_("scenario.dc_truth", True) else None,
                far_side=far if cm.bool_("scenario.dc_truth", True) else None,
                side=rc.side,
            )
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_CONFIG) from exc

    def path_for(key: str, default_name: str) -> str:
        p = cm.str_(key, default_name)
        return p if os.path.isabs(p) else os.path.join(out_dir, p)

    rc.trajectory_csv = path_for("io.trajectory_csv", "trajectory.csv")
    rc.te_csv = path_for("io.te_csv", "te_series.csv")
    rc.mc_csv = path_for("io.mc_csv", "mc_series.csv")
    rc.allocation_csv = path_for("io.allocation_csv", "allocation.csv")
    if "io.input_csv" in cm.raw:
        p = cm.str_("io.input_csv")
        rc.input_csv = p if os.path.isabs(p) else os.path.join(out_dir, p)
    else:
        rc.input_csv = rc.trajectory_csv

    if mode == "allocate":
        rc.shortage_mw = cm.float_("allocate.shortage_mw")
        names: set[str] = set()
        for key in cm.keys_with_prefix("allocate.hvdc."):
            parts = key.split(".")
            if len(parts) < 4:
                raise CliError(f"bad allocate key {key!r}", EXIT_CONFIG)
            names.add(parts[2])
        if not names:
            raise CliError("allocate mode needs allocate.hvdc.<name>.* entries", EXIT_CONFIG)
        for name in sorted(names):
            pfx = f"allocate.hvdc.{name}."
            initial = cm.float_(pfx + "initial_mw")
            mc_mw = cm.float_(pfx + "mc_mw") if pfx + "mc_mw" in cm.raw else None
            mc_csv = cm.str_(pfx + "mc_csv") if pfx + "mc_csv" in cm.raw else None
            if mc_mw is None and mc_csv is None:
                raise CliError(f"link {name!r}: need mc_mw or mc_csv", EXIT_CONFIG)
            if mc_csv is not None and not os.path.isabs(mc_csv):
                mc_csv = os.path.join(out_dir, mc_csv)
            rc.allocate_links.append((name, initial, mc_mw, mc_csv))

    return rc


# ---------------------------------------------------------------------------
# CSV writers / readers

TRAJECTORY_HEADER = [
    "t", "v_re", "v_im", "i_re", "i_im",
    "v_re_true", "v_im_true", "i_re_true", "i_im_true",
    "e_re_true", "e_im_true", "r_true", "x_true", "i_d_true",
]


def write_trajectory_csv(path: str, records: list[TrajectoryRecord]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for r in records:
            s = r.sample
            w.writerow([_fmt(v) for v in (
                s.t, s.v.real, s.v.imag, s.i.real, s.i.imag,
                r.v_true.real, r.v_true.imag, r.i_true.real, r.i_true.imag,
                r.e_true.real, r.e_true.imag, r.r_true, r.x_true, r.i_d_true,
            )])


def read_pmu_csv(path: str, terminal_id: str = "term") -> list[PmuSample]:
    """Load samples; ground-truth columns, when present, are ignored."""
    samples: list[PmuSample] = []
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_DATA) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CliError(f"{path}: empty file", EXIT_DATA)
        try:
            cols = {name: header.index(name) for name in ("t", "v_re", "v_im", "i_re", "i_im")}
        except ValueError as exc:
            raise CliError(f"{path}:1: missing column: {exc}", EXIT_DATA) from exc
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = {name: float(row[i]) for name, i in cols.items()}
            except (ValueError, IndexError):
                raise CliError(f"{path}:{lineno}: malformed row", EXIT_DATA) from None
            samples.append(PmuSample(
                t=vals["t"],
                v=complex(vals["v_re"], vals["v_im"]),
                i=complex(vals["i_re"], vals["i_im"]),
                terminal_id=terminal_id,
            ))
    return samples


TE_HEADER = ["t", "r", "x", "e_re", "e_im", "held_over", "n_window"]


def write_te_csv(path: str, rows: list[tuple[float, TheveninEstimate | None]]) -> None:
    """One row per sample; estimate fields stay empty until one exists."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TE_HEADER)
        for t, te in rows:
            if te is None:
                w.writerow([_fmt(t), "", "", "", "", "1", "0"])
            else:
                w.writerow([
                    _fmt(t), _fmt(te.r), _fmt(te.x), _fmt(te.e.real), _fmt(te.e.imag),
                    "1" if te.held_over else "0", str(te.n_window),
                ])


def read_te_csv(path: str) -> list[tuple[float, TheveninEstimate | None]]:
    out: list[tuple[float, TheveninEstimate | None]] = []
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_DATA) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TE_HEADER:
            raise CliError(f"{path}:1: unexpected header {header}", EXIT_DATA)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t = float(row[0])
                if row[1] == "":
                    out.append((t, None))
                else:
                    out.append((t, TheveninEstimate(
                        r=float(row[1]), x=float(row[2]),
                        e=complex(float(row[3]), float(row[4])),
                        t=t, n_window=int(row[6]), held_over=row[5] == "1",
                    )))
            except (ValueError, IndexError):
                raise CliError(f"{path}:{lineno}: malformed row", EXIT_DATA) from None
    return out


MC_HEADER = ["t", "mc_power", "binding", "i_d_at_mc"]


def write_mc_csv(path: str, rows: list[tuple[float, CapacityResult | None]]) -> None:
    """One row per sample; ``no_estimate`` marks rows before the first fix."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MC_HEADER)
        for t, res in rows:
            if res is None:
                w.writerow([_fmt(t), "", "no_estimate", ""])
            else:
                w.writerow([_fmt(t), _fmt(res.mc_power), res.binding, _fmt(res.i_d_at_mc)])


def read_final_mc(path: str) -> float:
    """Last resolved capacity value in an mc series file."""
    last: float | None = None
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_DATA) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MC_HEADER:
            raise CliError(f"{path}:1: unexpected header {header}", EXIT_DATA)
        for lineno, row in enumerate(reader, start=2):
            if not row or row[1] == "":
                continue
            try:
                last = float(row[1])
            except ValueError:
                raise CliError(f"{path}:{lineno}: malformed row", EXIT_DATA) from None
    if last is None:
        raise CliError(f"{path}: no capacity values", EXIT_DATA)
    return last


ALLOCATION_HEADER = [
    "name", "initial_mw", "mc_mw", "margin_mw", "target_mw", "increase_mw",
    "shortage_mw", "deficit_mw", "remaining_margin_mw",
]


def write_allocation_csv(path: str, plan: AllocationPlan) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ALLOCATION_HEADER)
        for e in plan.entries:
            w.writerow([
                e.name, _fmt(e.initial_mw), _fmt(e.mc_mw), _fmt(e.margin_mw),
                _fmt(e.target_mw), _fmt(e.target_mw - e.initial_mw),
                _fmt(plan.shortage_mw), _fmt(plan.deficit_mw), _fmt(plan.remaining_margin_mw),
            ])
