"""Request/response models for the HTTP service.

Field defaults mirror the reference study values, so a minimal request only
carries what deviates.  ``to_core`` methods translate into the computation
dataclasses, which perform the invariant checks.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, Field

from ..converter import AcSide, HvdcConfig, VdcolCurve
from ..engine import AllocationPlan, CapacityResult
from ..estimator import ExcitationParams, TheveninEstimate
from ..phasor import PerUnitBase
from ..simulate import ScenarioConfig, SimEvent, TrajectoryRecord


class PerUnitBaseModel(BaseModel):
    s_mva: float = 1000.0
    v_ac_kv: float = 345.0
    v_dc_kv: float = 500.0
    i_dc_ka: float = 2.0
    f_hz: float = 50.0

    def to_core(self) -> PerUnitBase:
        return PerUnitBase(**self.model_dump())


class VdcolModel(BaseModel):
    v1: float = 0.4
    v2: float = 0.9
    i1: float = 0.55
    i2: float = 1.0
    k1: float = 0.9
    k2: float = 1.0

    def to_core(self) -> VdcolCurve:
        return VdcolCurve(**self.model_dump())


class HvdcModel(BaseModel):
    b_r: int = 2
    b_i: int = 2
    n_r: float = 0.5738
    n_i: float = 0.5718
    x_dr_ohm: float = 8.3201
    x_di_ohm: float = 7.1949
    r_d_ohm: float = 5.79
    alpha_min_deg: float = 5.0
    gamma_min_deg: float = 17.0
    e_min_pu: float = 0.9
    e_max_pu: float | None = None
    i_margin_pu: float = 0.1
    vdcol: VdcolModel = Field(default_factory=VdcolModel)
    i_ra_short: float = 1.3
    i_ra_long: float = 1.1
    i_ra_window_s: float = 3.0
    q_acr_mvar: float = 300.0
    q_aci_mvar: float = 300.0
    base: PerUnitBaseModel = Field(default_factory=PerUnitBaseModel)

    def to_core(self) -> HvdcConfig:
        return HvdcConfig(
            b_r=self.b_r,
            b_i=self.b_i,
            n_r=self.n_r,
            n_i=self.n_i,
            x_dr=self.x_dr_ohm,
            x_di=self.x_di_ohm,
            r_d=self.r_d_ohm,
            alpha_min=math.radians(self.alpha_min_deg),
            gamma_min=math.radians(self.gamma_min_deg),
            e_min=self.e_min_pu,
            e_max=self.e_max_pu if self.e_max_pu is not None else math.inf,
            i_margin=self.i_margin_pu,
            vdcol=self.vdcol.to_core(),
            i_ra_short=self.i_ra_short,
            i_ra_long=self.i_ra_long,
            i_ra_window_s=self.i_ra_window_s,
            q_acr_mvar=self.q_acr_mvar,
            q_aci_mvar=self.q_aci_mvar,
            base=self.base.to_core(),
        )


class AcSideModel(BaseModel):
    e_pu: float = 1.0
    x_pu: float = 0.01
    r_pu: float = 0.0

    def to_core(self) -> AcSide:
        return AcSide(e_th=self.e_pu, x_th=self.x_pu, r_th=self.r_pu)


class EstimatorModel(BaseModel):
    window: int = 20
    decay: float = Field(default=0.8, alias="lambda")
    coeff: float = 0.15
    e_gate_low: float = 0.5
    e_gate_high: float = 1.5

    model_config = {"populate_by_name": True}


class ExcitationModel(BaseModel):
    t_ff_s: float = 0.53
    t_d0p_s: float = 5.0
    du_max_pu: float = 10.0
    dt_s: float = 0.01

    def to_core(self) -> ExcitationParams:
        return ExcitationParams(
            t_ff=self.t_ff_s, t_d0p=self.t_d0p_s, du_max=self.du_max_pu, dt=self.dt_s
        )


class EngineModel(BaseModel):
    side: str = "rectifier"
    delta_id_ka: float = 0.01
    mu: float = 1e-4
    refine_tol_ka: float = 1e-4
    boost_start_s: float = 0.0


class SessionCreateRequest(BaseModel):
    name: str | None = None
    hvdc: HvdcModel = Field(default_factory=HvdcModel)
    far_side: AcSideModel = Field(default_factory=AcSideModel)
    estimator: EstimatorModel = Field(default_factory=EstimatorModel)
    excitation: ExcitationModel = Field(default_factory=ExcitationModel)
    engine: EngineModel = Field(default_factory=EngineModel)


class SessionInfo(BaseModel):
    session_id: str
    name: str | None
    side: str
    n_samples: int
    latest_te: TheveninOut | None = None
    latest_capacity: CapacityOut | None = None


class SampleIn(BaseModel):
    t: float
    v_re: float
    v_im: float
    i_re: float
    i_im: float


class SamplesRequest(BaseModel):
    samples: list[SampleIn]


class TheveninOut(BaseModel):
    t: float
    r: float
    x: float
    e_re: float
    e_im: float
    n_window: int
    held_over: bool

    @classmethod
    def from_core(cls, te: TheveninEstimate) -> "TheveninOut":
        return cls(
            t=te.t, r=te.r, x=te.x, e_re=te.e.real, e_im=te.e.imag,
            n_window=te.n_window, held_over=te.held_over,
        )


class CapacityOut(BaseModel):
    t: float
    mc_power: float | None       # None when the present point is unresolvable
    binding: str
    i_d_at_mc: float | None
    side: str
    other_side_rollover: bool = False

    @classmethod
    def from_core(cls, res: CapacityResult) -> "CapacityOut":
        return cls(
            t=res.t,
            mc_power=None if math.isnan(res.mc_power) else res.mc_power,
            binding=res.binding,
            i_d_at_mc=None if math.isnan(res.i_d_at_mc) else res.i_d_at_mc,
            side=res.side,
            other_side_rollover=res.other_side_rollover,
        )


class SampleResult(BaseModel):
    t: float
    te: TheveninOut | None = None
    capacity: CapacityOut | None = None


class SamplesResponse(BaseModel):
    results: list[SampleResult]


class EventModel(BaseModel):
    time: float
    kind: str
    params: dict[str, float] = Field(default_factory=dict)

    def to_core(self) -> SimEvent:
        return SimEvent(time=self.time, kind=self.kind, params=dict(self.params))


class ScenarioModel(BaseModel):
    duration_s: float = 1.0
    dt_s: float = 0.01
    e0_re: float = 1.0
    e0_im: float = 0.0
    r_pu: float = 0.01
    x_pu: float = 0.2
    z_d0_re: float = 1.57
    z_d0_im: float = 0.03
    dynamics: ExcitationModel | None = None
    events: list[EventModel] = Field(default_factory=list)
    noise_variance: float = 0.0
    seed: int = 0
    terminal: str = "rect"
    side: str = "rectifier"
    dc_truth: bool = False
    hvdc: HvdcModel | None = None
    far_side: AcSideModel | None = None

    def to_core(self) -> ScenarioConfig:
        hvdc = far = None
        if self.dc_truth:
            hvdc = (self.hvdc or HvdcModel()).to_core()
            far = (self.far_side or AcSideModel()).to_core()
        return ScenarioConfig(
            duration=self.duration_s,
            dt=self.dt_s,
            e0=complex(self.e0_re, self.e0_im),
            r=self.r_pu,
            x=self.x_pu,
            z_d0=complex(self.z_d0_re, self.z_d0_im),
            dynamics=self.dynamics.to_core() if self.dynamics else None,
            events=tuple(ev.to_core() for ev in self.events),
            noise_variance=self.noise_variance,
            seed=self.seed,
            terminal_id=self.terminal,
            hvdc=hvdc,
            far_side=far,
            side=self.side,
        )


class SimulateRequest(BaseModel):
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)


class TrajectoryRow(BaseModel):
    t: float
    v_re: float
    v_im: float
    i_re: float
    i_im: float
    v_re_true: float
    v_im_true: float
    i_re_true: float
    i_im_true: float
    e_re_true: float
    e_im_true: float
    r_true: float
    x_true: float
    i_d_true: float | None = None

    @classmethod
    def from_core(cls, r: TrajectoryRecord) -> "TrajectoryRow":
        return cls(
            t=r.sample.t,
            v_re=r.sample.v.real, v_im=r.sample.v.imag,
            i_re=r.sample.i.real, i_im=r.sample.i.imag,
            v_re_true=r.v_true.real, v_im_true=r.v_true.imag,
            i_re_true=r.i_true.real, i_im_true=r.i_true.imag,
            e_re_true=r.e_true.real, e_im_true=r.e_true.imag,
            r_true=r.r_true, x_true=r.x_true,
            i_d_true=None if math.isnan(r.i_d_true) else r.i_d_true,
        )


class SimulateResponse(BaseModel):
    records: list[TrajectoryRow]


class AllocateLink(BaseModel):
    name: str
    initial_mw: float
    mc_mw: float


class AllocateRequest(BaseModel):
    links: list[AllocateLink]
    shortage_mw: float


class AllocationEntryOut(BaseModel):
    name: str
    initial_mw: float
    mc_mw: float
    margin_mw: float
    target_mw: float
    increase_mw: float


class AllocationOut(BaseModel):
    entries: list[AllocationEntryOut]
    shortage_mw: float
    deficit_mw: float
    remaining_margin_mw: float

    @classmethod
    def from_core(cls, plan: AllocationPlan) -> "AllocationOut":
        return cls(
            entries=[
                AllocationEntryOut(
                    name=e.name, initial_mw=e.initial_mw, mc_mw=e.mc_mw,
                    margin_mw=e.margin_mw, target_mw=e.target_mw,
                    increase_mw=e.target_mw - e.initial_mw,
                )
                for e in plan.entries
            ],
            shortage_mw=plan.shortage_mw,
            deficit_mw=plan.deficit_mw,
            remaining_margin_mw=plan.remaining_margin_mw,
        )


class HealthResponse(BaseModel):
    status: str
    version: str


SessionInfo.model_rebuild()
