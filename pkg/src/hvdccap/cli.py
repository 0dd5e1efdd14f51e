"""Command line front end.

All modes run locally by default; ``--server URL`` turns the CLI into a thin
client that sends the same work to a running service and writes identical
artifacts.  ``--mode serve`` starts the service itself.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 unreadable or malformed input data.
"""

from __future__ import annotations

import argparse
import math
import sys

from .converter import FixedPointDivergence, InfeasibleOperatingPoint
from .engine import CapacityEngine, allocate
from .fileio import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_ERROR,
    EXIT_OK,
    CliError,
    RunConfig,
    build_run_config,
    load_config,
    read_final_mc,
    read_pmu_csv,
    write_allocation_csv,
    write_mc_csv,
    write_te_csv,
    write_trajectory_csv,
)
from .phasor import PmuSample
from .simulate import TrajectoryRecord, generate


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hvdccap",
        description="Thevenin tracking and emergency capacity estimation for LCC-HVDC terminals",
    )
    p.add_argument("--config", help="path to a key = value config file")
    p.add_argument("--mode", choices=["simulate", "estimate", "mc", "run", "allocate", "serve"],
                   help="run mode (overrides the config file)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", help="output directory (overrides the config file)")
    p.add_argument("--server", help="base URL of a running service; work is sent there")
    p.add_argument("--host", default="127.0.0.1", help="bind address for --mode serve")
    p.add_argument("--port", type=int, default=8000, help="port for --mode serve")
    return p


# ---------------------------------------------------------------------------
# local execution


def _simulate_local(rc: RunConfig) -> list[TrajectoryRecord]:
    assert rc.scenario is not None
    records = generate(rc.scenario)
    write_trajectory_csv(rc.trajectory_csv, records)
    print(f"wrote {len(records)} samples to {rc.trajectory_csv}")
    return records


def _estimate_local(rc: RunConfig, samples: list[PmuSample]) -> None:
    estimator = rc.make_estimator()
    rows = [(s.t, estimator.update(s)) for s in samples]
    write_te_csv(rc.te_csv, rows)
    fresh = sum(1 for _, te in rows if te is not None and not te.held_over)
    print(f"wrote {len(rows)} estimates ({fresh} fresh) to {rc.te_csv}")


def _mc_local(rc: RunConfig, samples: list[PmuSample]) -> None:
    engine = CapacityEngine(
        rc.hvdc,
        far_side=rc.far_side,
        side=rc.side,
        estimator=rc.make_estimator(),
        delta_id=rc.delta_id,
        mu=rc.mu,
        refine_tol=rc.refine_tol,
        boost_start_s=rc.boost_start_s,
    )
    te_rows = []
    mc_rows = []
    final = None
    for s in samples:
        res = engine.step(s)
        te_rows.append((s.t, res.te if res else None))
        mc_rows.append((s.t, res))
        if res is not None:
            final = res
    write_te_csv(rc.te_csv, te_rows)
    write_mc_csv(rc.mc_csv, mc_rows)
    if final is None:
        print(f"no capacity fix (stream never triggered); wrote {rc.mc_csv}")
    else:
        print(
            f"final capacity {final.mc_power:.1f} MW ({final.side}, binding {final.binding}) "
            f"at i_d={final.i_d_at_mc:.3f} kA; wrote {rc.mc_csv}"
        )


def _allocate_local(rc: RunConfig) -> None:
    names, pairs = [], []
    for name, initial, mc_mw, mc_csv in rc.allocate_links:
        mc = mc_mw if mc_mw is not None else read_final_mc(mc_csv)
        names.append(name)
        pairs.append((initial, mc))
    try:
        plan = allocate(pairs, rc.shortage_mw, names=names)
    except ValueError as exc:
        raise CliError(f"allocation rejected: {exc}", EXIT_CONFIG) from exc
    write_allocation_csv(rc.allocation_csv, plan)
    targets = ", ".join(f"{e.name}->{e.target_mw:.0f} MW" for e in plan.entries)
    print(
        f"allocated {plan.total_increase_mw:.0f} of {plan.shortage_mw:.0f} MW "
        f"(deficit {plan.deficit_mw:.0f}, remaining margin {plan.remaining_margin_mw:.0f}): {targets}"
    )


def _execute_local(rc: RunConfig) -> None:
    if rc.mode == "simulate":
        _simulate_local(rc)
    elif rc.mode == "estimate":
        _estimate_local(rc, read_pmu_csv(rc.input_csv))
    elif rc.mode == "mc":
        _mc_local(rc, read_pmu_csv(rc.input_csv))
    elif rc.mode == "run":
        records = _simulate_local(rc)
        _mc_local(rc, [r.sample for r in records])
    elif rc.mode == "allocate":
        _allocate_local(rc)
    else:  # pragma: no cover - guarded by build_run_config
        raise CliError(f"unhandled mode {rc.mode!r}", EXIT_CONFIG)


# ---------------------------------------------------------------------------
# thin client against a running service


def _scenario_payload(rc: RunConfig) -> dict:
    sc = rc.scenario
    assert sc is not None
    payload = {
        "duration_s": sc.duration,
        "dt_s": sc.dt,
        "e0_re": sc.e0.real,
        "e0_im": sc.e0.imag,
        "r_pu": sc.r,
        "x_pu": sc.x,
        "z_d0_re": sc.z_d0.real,
        "z_d0_im": sc.z_d0.imag,
        "noise_variance": sc.noise_variance,
        "seed": sc.seed,
        "terminal": sc.terminal_id,
        "side": sc.side,
        "dc_truth": sc.hvdc is not None,
        "events": [
            {"time": ev.time, "kind": ev.kind, "params": ev.params} for ev in sc.events
        ],
    }
    if sc.dynamics is not None:
        payload["dynamics"] = {
            "t_ff_s": sc.dynamics.t_ff,
            "t_d0p_s": sc.dynamics.t_d0p,
            "du_max_pu": sc.dynamics.du_max,
            "dt_s": sc.dynamics.dt,
        }
    if sc.hvdc is not None:
        payload["hvdc"] = _hvdc_payload(rc)
        payload["far_side"] = _far_payload(rc)
    return payload


def _hvdc_payload(rc: RunConfig) -> dict:
    h, b = rc.hvdc, rc.base
    return {
        "b_r": h.b_r, "b_i": h.b_i, "n_r": h.n_r, "n_i": h.n_i,
        "x_dr_ohm": h.x_dr, "x_di_ohm": h.x_di, "r_d_ohm": h.r_d,
        "alpha_min_deg": math.degrees(h.alpha_min),
        "gamma_min_deg": math.degrees(h.gamma_min),
        "e_min_pu": h.e_min,
        "e_max_pu": None if math.isinf(h.e_max) else h.e_max,
        "i_margin_pu": h.i_margin,
        "vdcol": {"v1": h.vdcol.v1, "v2": h.vdcol.v2, "i1": h.vdcol.i1,
                  "i2": h.vdcol.i2, "k1": h.vdcol.k1, "k2": h.vdcol.k2},
        "i_ra_short": h.i_ra_short, "i_ra_long": h.i_ra_long,
        "i_ra_window_s": h.i_ra_window_s,
        "q_acr_mvar": h.q_acr_mvar, "q_aci_mvar": h.q_aci_mvar,
        "base": {"s_mva": b.s_mva, "v_ac_kv": b.v_ac_kv, "v_dc_kv": b.v_dc_kv,
                 "i_dc_ka": b.i_dc_ka, "f_hz": b.f_hz},
    }


def _far_payload(rc: RunConfig) -> dict:
    return {"e_pu": rc.far_side.e_th, "x_pu": rc.far_side.x_th, "r_pu": rc.far_side.r_th}


def _session_payload(rc: RunConfig) -> dict:
    return {
        "hvdc": _hvdc_payload(rc),
        "far_side": _far_payload(rc),
        "estimator": {
            "window": rc.window, "lambda": rc.lam, "coeff": rc.coeff,
            "e_gate_low": rc.e_gate[0], "e_gate_high": rc.e_gate[1],
        },
        "excitation": {
            "t_ff_s": rc.excitation.t_ff, "t_d0p_s": rc.excitation.t_d0p,
            "du_max_pu": rc.excitation.du_max, "dt_s": rc.excitation.dt,
        },
        "engine": {
            "side": rc.side, "delta_id_ka": rc.delta_id, "mu": rc.mu,
            "refine_tol_ka": rc.refine_tol, "boost_start_s": rc.boost_start_s,
        },
    }


def _check(resp) -> dict | list | None:
    if resp.status_code >= 400:
        raise CliError(f"server rejected request ({resp.status_code}): {resp.text}", EXIT_ERROR)
    if resp.status_code == 204:
        return None
    return resp.json()


def _remote_simulate(rc: RunConfig, client) -> list[PmuSample]:
    data = _check(client.post("/simulate", json={"scenario": _scenario_payload(rc)}))
    rows = data["records"]
    import csv as _csv
    import os
    from .fileio import TRAJECTORY_HEADER, _fmt

    os.makedirs(os.path.dirname(rc.trajectory_csv) or ".", exist_ok=True)
    with open(rc.trajectory_csv, "w", newline="", encoding="utf-8") as fh:
        w = _csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) if r.get(k) is not None else _fmt(math.nan)
                        for k in TRAJECTORY_HEADER])
    print(f"wrote {len(rows)} samples to {rc.trajectory_csv}")
    return [
        PmuSample(t=r["t"], v=complex(r["v_re"], r["v_im"]),
                  i=complex(r["i_re"], r["i_im"]), terminal_id=rc.scenario.terminal_id)
        for r in rows
    ]


def _remote_stream(rc: RunConfig, client, samples: list[PmuSample], want_mc: bool) -> None:
    from .engine import CapacityResult
    from .estimator import TheveninEstimate

    sid = _check(client.post("/sessions", json=_session_payload(rc)))["session_id"]
    te_rows, mc_rows = [], []
    final = None
    try:
        for k in range(0, len(samples), 500):
            batch = samples[k:k + 500]
            payload = {"samples": [
                {"t": s.t, "v_re": s.v.real, "v_im": s.v.imag,
                 "i_re": s.i.real, "i_im": s.i.imag} for s in batch
            ]}
            data = _check(client.post(f"/sessions/{sid}/samples", json=payload))
            for out in data["results"]:
                te = out.get("te")
                cap = out.get("capacity")
                te_rows.append((out["t"], None if te is None else TheveninEstimate(
                    r=te["r"], x=te["x"], e=complex(te["e_re"], te["e_im"]),
                    t=te["t"], n_window=te["n_window"], held_over=te["held_over"],
                )))
                res = None
                if cap is not None:
                    mc = cap["mc_power"] if cap["mc_power"] is not None else math.nan
                    i_at = cap["i_d_at_mc"] if cap["i_d_at_mc"] is not None else math.nan
                    res = CapacityResult(
                        t=cap["t"], mc_power=mc, binding=cap["binding"],
                        i_d_at_mc=i_at, sweep=(), side=cap["side"],
                        other_side_rollover=cap["other_side_rollover"],
                    )
                    final = res
                mc_rows.append((out["t"], res))
    finally:
        client.delete(f"/sessions/{sid}")
    write_te_csv(rc.te_csv, te_rows)
    if want_mc:
        write_mc_csv(rc.mc_csv, mc_rows)
        if final is not None:
            print(f"final capacity {final.mc_power:.1f} MW (binding {final.binding}); wrote {rc.mc_csv}")
        else:
            print(f"no capacity fix; wrote {rc.mc_csv}")
    else:
        print(f"wrote {len(te_rows)} estimates to {rc.te_csv}")


def _remote_allocate(rc: RunConfig, client) -> None:
    links = []
    for name, initial, mc_mw, mc_csv in rc.allocate_links:
        mc = mc_mw if mc_mw is not None else read_final_mc(mc_csv)
        links.append({"name": name, "initial_mw": initial, "mc_mw": mc})
    data = _check(client.post("/allocate", json={"links": links, "shortage_mw": rc.shortage_mw}))
    from .engine import AllocationEntry, AllocationPlan

    plan = AllocationPlan(
        entries=tuple(
            AllocationEntry(
                name=e["name"], initial_mw=e["initial_mw"], mc_mw=e["mc_mw"],
                margin_mw=e["margin_mw"], target_mw=e["target_mw"],
            )
            for e in data["entries"]
        ),
        shortage_mw=data["shortage_mw"],
        deficit_mw=data["deficit_mw"],
        remaining_margin_mw=data["remaining_margin_mw"],
    )
    write_allocation_csv(rc.allocation_csv, plan)
    print(f"allocated (deficit {plan.deficit_mw:.0f} MW); wrote {rc.allocation_csv}")


def _execute_remote(rc: RunConfig, client) -> None:
    if rc.mode == "simulate":
        _remote_simulate(rc, client)
    elif rc.mode == "estimate":
        _remote_stream(rc, client, read_pmu_csv(rc.input_csv), want_mc=False)
    elif rc.mode == "mc":
        _remote_stream(rc, client, read_pmu_csv(rc.input_csv), want_mc=True)
    elif rc.mode == "run":
        samples = _remote_simulate(rc, client)
        _remote_stream(rc, client, samples, want_mc=True)
    elif rc.mode == "allocate":
        _remote_allocate(rc, client)
    else:  # pragma: no cover
        raise CliError(f"unhandled mode {rc.mode!r}", EXIT_CONFIG)


def execute(rc: RunConfig, client=None) -> None:
    """Run one configured mode, locally or through an injected HTTP client."""
    if client is None:
        _execute_local(rc)
    else:
        _execute_remote(rc, client)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.mode == "serve":
            import uvicorn

            from .service import app

            uvicorn.run(app, host=args.host, port=args.port)
            return EXIT_OK
        if not args.config:
            raise CliError("--config is required for this mode", EXIT_CONFIG)
        raw = load_config(args.config)
        rc = build_run_config(raw, mode=args.mode, out_dir=args.out, seed=args.seed)
        if args.server:
            import httpx

            with httpx.Client(base_url=args.server, timeout=300.0) as client:
                execute(rc, client)
        else:
            execute(rc)
        return EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (InfeasibleOperatingPoint, FixedPointDivergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last resort
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
