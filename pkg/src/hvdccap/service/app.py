"""FastAPI application exposing the estimation pipeline.

A session wraps one :class:`~hvdccap.engine.CapacityEngine`: create it with
the link configuration, stream PMU samples into it in batches, and read back
the Thevenin estimate plus capacity result per sample.  Stateless helpers
(`/simulate`, `/allocate`) run one-shot computations.

Sessions are independent; each is guarded by its own lock, so concurrent
clients may stream different terminals in parallel but a single session's
samples are processed in arrival order.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..engine import CapacityEngine, allocate
from ..estimator import TeEstimator, max_potential_rate, screening_floor
from ..phasor import PmuSample
from ..simulate import generate
from . import schemas as sc


class _Session:
    def __init__(self, req: sc.SessionCreateRequest):
        cfg = req.hvdc.to_core()
        excitation = req.excitation.to_core()
        floor = screening_floor(max_potential_rate(excitation)[1], 0.5)
        estimator = TeEstimator(
            k=req.estimator.window,
            lam=req.estimator.decay,
            coeff=req.estimator.coeff,
            e_gate=(req.estimator.e_gate_low, req.estimator.e_gate_high),
            floor=floor,
        )
        self.engine = CapacityEngine(
            cfg,
            far_side=req.far_side.to_core(),
            side=req.engine.side,
            estimator=estimator,
            delta_id=req.engine.delta_id_ka,
            mu=req.engine.mu,
            refine_tol=req.engine.refine_tol_ka,
            boost_start_s=req.engine.boost_start_s,
        )
        self.name = req.name
        self.lock = threading.Lock()
        self.n_samples = 0
        self.last_t: float | None = None
        self.latest_te: sc.TheveninOut | None = None
        self.latest_capacity: sc.CapacityOut | None = None

    def info(self, sid: str) -> sc.SessionInfo:
        return sc.SessionInfo(
            session_id=sid,
            name=self.name,
            side=self.engine.side,
            n_samples=self.n_samples,
            latest_te=self.latest_te,
            latest_capacity=self.latest_capacity,
        )


app = FastAPI(
    title="hvdccap",
    version=__version__,
    description="Thevenin tracking and emergency capacity estimation for LCC-HVDC terminals",
)

_sessions: dict[str, _Session] = {}
_registry_lock = threading.Lock()


def _get_session(sid: str) -> _Session:
    with _registry_lock:
        session = _sessions.get(sid)
    if session is None:
        raise HTTPException(status_code=404, detail=f"no session {sid!r}")
    return session


@app.get("/health", response_model=sc.HealthResponse)
def health() -> sc.HealthResponse:
    return sc.HealthResponse(status="ok", version=__version__)


@app.post("/simulate", response_model=sc.SimulateResponse)
def simulate(req: sc.SimulateRequest) -> sc.SimulateResponse:
    try:
        records = generate(req.scenario.to_core())
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return sc.SimulateResponse(records=[sc.TrajectoryRow.from_core(r) for r in records])


@app.post("/allocate", response_model=sc.AllocationOut)
def allocate_endpoint(req: sc.AllocateRequest) -> sc.AllocationOut:
    try:
        plan = allocate(
            [(l.initial_mw, l.mc_mw) for l in req.links],
            req.shortage_mw,
            names=[l.name for l in req.links],
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return sc.AllocationOut.from_core(plan)


@app.post("/sessions", status_code=201)
def create_session(req: sc.SessionCreateRequest) -> dict:
    try:
        session = _Session(req)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    sid = uuid.uuid4().hex[:12]
    with _registry_lock:
        _sessions[sid] = session
    return {"session_id": sid}


@app.get("/sessions", response_model=list[sc.SessionInfo])
def list_sessions() -> list[sc.SessionInfo]:
    with _registry_lock:
        items = list(_sessions.items())
    return [session.info(sid) for sid, session in items]


@app.get("/sessions/{sid}", response_model=sc.SessionInfo)
def session_info(sid: str) -> sc.SessionInfo:
    return _get_session(sid).info(sid)


@app.delete("/sessions/{sid}", status_code=204)
def delete_session(sid: str) -> None:
    with _registry_lock:
        if _sessions.pop(sid, None) is None:
            raise HTTPException(status_code=404, detail=f"no session {sid!r}")


@app.post("/sessions/{sid}/samples", response_model=sc.SamplesResponse)
def push_samples(sid: str, req: sc.SamplesRequest) -> sc.SamplesResponse:
    session = _get_session(sid)
    results: list[sc.SampleResult] = []
    with session.lock:
        for s in req.samples:
            if session.last_t is not None and s.t <= session.last_t:
                raise HTTPException(
                    status_code=422,
                    detail=f"sample at t={s.t} not after previous t={session.last_t}",
                )
            sample = PmuSample(
                t=s.t, v=complex(s.v_re, s.v_im), i=complex(s.i_re, s.i_im),
                terminal_id=sid,
            )
            res = session.engine.step(sample)
            session.last_t = s.t
            session.n_samples += 1
            out = sc.SampleResult(t=s.t)
            if res is not None:
                out.te = sc.TheveninOut.from_core(res.te) if res.te else None
                out.capacity = sc.CapacityOut.from_core(res)
                session.latest_te = out.te
                session.latest_capacity = out.capacity
            results.append(out)
    return sc.SamplesResponse(results=results)
