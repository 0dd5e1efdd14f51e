"""Grid Thevenin-equivalent tracking from one terminal's PMU stream.

The estimator works on sample-to-sample deltas.  A disturbance triggers an
adaptive screening threshold; pairs whose current change clears it (and whose
two-point candidate solution is physically plausible) enter a sliding
regression window solved by total least squares via the SVD of the stacked
``[A B]`` data matrix.  When a step produces no acceptable fresh solution the
previous impedance is carried over and flagged.

The screening threshold floor is calibrated from the fastest nearby voltage
regulator: the peak slew rate of the machine transient potential bounds the
source-side contribution to the current deltas.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .phasor import PmuSample, delta


class TlsFailure(Exception):
    """The regression window does not support a generic TLS solution."""


@dataclass(frozen=True)
class TheveninEstimate:
    """One emitted estimate of the grid equivalent seen from the terminal.

    ``held_over`` is True when this step produced no acceptable fresh
    solution and r/x were carried from the previous step.
    """

    r: float                 # p.u.
    x: float                 # p.u.
    e: complex               # source potential, p.u.
    t: float                 # s
    n_window: int            # regression pairs currently in the window
    held_over: bool


@dataclass(frozen=True)
class ExcitationParams:
    """Fastest nearby regulator, used to bound per-sample potential change.

    t_ff   -- exciter time constant, s
    t_d0p  -- d-axis transient open-circuit time constant, s
    du_max -- largest exciter input step, p.u.
    dt     -- PMU sampling interval, s
    """

    t_ff: float = 0.53
    t_d0p: float = 5.0
    du_max: float = 10.0
    dt: float = 0.01

    def __post_init__(self) -> None:
        if self.t_ff <= 0 or self.t_d0p <= 0 or self.dt <= 0:
            raise ValueError("time constants and dt must be positive")
        if self.du_max < 0:
            raise ValueError("du_max must be nonnegative")
        if self.t_d0p == self.t_ff:
            raise ValueError("t_d0p must differ from t_ff")


def potential_step_response(p: ExcitationParams, t: float) -> float:
    """Transient-potential rise (p.u.) at ``t`` after a full exciter step.

    Two cascaded first-order lags (exciter, then field winding) driven by a
    step of ``du_max``.
    """
    a = p.t_d0p / p.t_ff - 1.0
    b = p.t_ff / p.t_d0p - 1.0
    return p.du_max * (1.0 + math.exp(-t / p.t_ff) / a + math.exp(-t / p.t_d0p) / b)


def max_potential_rate(p: ExcitationParams) -> tuple[float, float]:
    """Peak slew rate of the transient potential and per-sample bound.

    Returns ``(rate, de_max)`` in (p.u./s, p.u.); ``de_max = rate * dt``.
    The rate is the analytic derivative of the step response at its
    inflection point ``t0 = T_d0' T_ff / (T_d0' - T_ff) * ln(T_d0'/T_ff)``.
    """
    t0 = (p.t_d0p * p.t_ff / (p.t_d0p - p.t_ff)) * math.log(p.t_d0p / p.t_ff)
    rate = p.du_max * (math.exp(-t0 / p.t_d0p) - math.exp(-t0 / p.t_ff)) / (p.t_d0p - p.t_ff)
    return rate, rate * p.dt


def screening_floor(de_max: float, e_min: float) -> float:
    """Smallest usable screening coefficient: pairs need |dI| > floor * |I|.

    ``de_max`` bounds the per-sample source-potential change and ``e_min``
    is a conservative lower bound on the source magnitude.
    """
    if e_min <= 0:
        raise ValueError("e_min must be positive")
    return de_max / e_min


@dataclass
class ScreeningState:
    """Trigger bookkeeping for the adaptive acceptance threshold."""

    lam: float = 0.8           # decay factor of the threshold ramp
    coeff: float = 0.15        # threshold coefficient, fraction of |I|
    n0: int = -1               # sample index of the most recent trigger
    triggered: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if not 0.0 < self.coeff <= 0.2:
            raise ValueError("coeff must lie in (0, 0.2]")


def adaptive_threshold(state: ScreeningState, n: int, i_mag: float) -> float:
    """Acceptance threshold sigma = coeff * |I| * (1 - lambda^(n - n0)).

    Zero at the trigger sample and rising toward ``coeff * |I|``.
    """
    if not state.triggered:
        raise ValueError("threshold undefined before the first trigger")
    if n < state.n0:
        raise ValueError(f"sample index {n} precedes trigger {state.n0}")
    return state.coeff * i_mag * (1.0 - state.lam ** (n - state.n0))


def screen_pair(state: ScreeningState, n: int, d_i: complex, i_now: complex) -> bool:
    """Accept or reject one delta pair, re-arming the trigger as needed.

    Any sample with ``|dI| > coeff * |I|`` (strict) resets the trigger time,
    so a fresh disturbance reopens the acceptance window.  After a trigger,
    pairs are accepted while ``|dI|`` exceeds the ramping threshold.
    """
    di_mag = abs(d_i)
    i_mag = abs(i_now)
    if di_mag > state.coeff * i_mag and di_mag > 0.0:
        state.n0 = n
        state.triggered = True
    if not state.triggered:
        return False
    return di_mag > adaptive_threshold(state, n, i_mag)


def two_point_impedance(d_v: complex, d_i: complex) -> tuple[float, float]:
    """Impedance (x, r) in p.u. from a single delta pair.

    Uses the measurable part only: ``x = cross(dV, dI)/|dI|^2`` and
    ``r = -dot(dV, dI)/|dI|^2``.  A source-potential change dE biases each
    component by at most ``|dE|/|dI|``.
    """
    denom = d_i.real * d_i.real + d_i.imag * d_i.imag
    if denom == 0.0:
        raise ValueError("degenerate pair: |dI| = 0")
    x = (d_v.real * d_i.imag - d_v.imag * d_i.real) / denom
    r = -(d_v.real * d_i.real + d_v.imag * d_i.imag) / denom
    return x, r


def potential_from_estimate(z: tuple[float, float], sample: PmuSample) -> complex:
    """Source potential E = V + I * (r + jx) at one sample."""
    r, x = z
    if not (math.isfinite(r) and math.isfinite(x)):
        raise ValueError("impedance must be finite")
    return sample.v + sample.i * complex(r, x)


@dataclass
class RegressionWindow:
    """Sliding window of accepted delta pairs, oldest evicted first."""

    k: int = 20
    pairs: deque = field(default_factory=deque)  # of (dI, dV) complex tuples

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("window capacity must be at least 1")

    def push(self, d_i: complex, d_v: complex) -> None:
        self.pairs.append((d_i, d_v))
        while len(self.pairs) > self.k:
            self.pairs.popleft()

    def __len__(self) -> int:
        return len(self.pairs)


def stack_window(pairs: Iterable[tuple[complex, complex]]) -> tuple[np.ndarray, np.ndarray]:
    """Stacked regression blocks (A, B) of shape (2k, 2) and (2k, 1)."""
    rows = list(pairs)
    a = np.empty((2 * len(rows), 2))
    b = np.empty((2 * len(rows), 1))
    for m, (d_i, d_v) in enumerate(rows):
        a[2 * m] = (-d_i.real, d_i.imag)
        a[2 * m + 1] = (-d_i.imag, -d_i.real)
        b[2 * m, 0] = d_v.real
        b[2 * m + 1, 0] = d_v.imag
    return a, b


def tls_impedance(window: RegressionWindow, u22_tol: float = 1e-10) -> tuple[float, float]:
    """Total-least-squares impedance (r, x) from the window.

    SVD of the augmented matrix ``[A B]``; the solution is read off the
    right-singular vector of the smallest singular value.  Raises
    :class:`TlsFailure` when the window is too small, A is rank deficient,
    or the solution is nongeneric (last component of the null vector below
    ``u22_tol``).
    """
    if len(window) < 2:
        raise TlsFailure(f"need at least 2 pairs, have {len(window)}")
    a, b = stack_window(window.pairs)
    s_a = np.linalg.svd(a, compute_uv=False)
    if s_a[-1] <= 1e-12 * s_a[0]:
        raise TlsFailure("regression matrix is rank deficient")
    m = np.hstack([a, b])
    _, s, vt = np.linalg.svd(m)
    null = vt[-1]
    if abs(null[2]) < u22_tol:
        raise TlsFailure("nongeneric TLS problem (solution at infinity)")
    r = -null[0] / null[2]
    x = -null[1] / null[2]
    return float(r), float(x)


def multimachine_bound(
    susceptances: Sequence[float],
    generator_deltas: Sequence[complex],
    g0: float = 0.0,
) -> tuple[complex, bool]:
    """Terminal potential change from per-machine changes after reduction.

    ``dE = sum(dE_Gi * jB_i) / (G0 + sum(jB_i))``.  With no transfer
    conductance the result is a weighted mean, so its magnitude cannot
    exceed the largest machine change; ``bound_ok`` reports that check.
    """
    if len(susceptances) == 0 or len(susceptances) != len(generator_deltas):
        raise ValueError("need matching, nonempty susceptance and delta lists")
    if any(b == 0 for b in susceptances):
        raise ValueError("susceptances must be nonzero")
    num = sum(de * complex(0.0, b) for de, b in zip(generator_deltas, susceptances))
    den = complex(g0, 0.0) + complex(0.0, sum(susceptances))
    d_e = num / den
    bound_ok = abs(d_e) <= max(abs(de) for de in generator_deltas) + 1e-12
    return d_e, bound_ok


class TeEstimator:
    """Streaming estimator for one terminal; feed samples in time order.

    Not safe for concurrent mutation; run one instance per terminal.
    ``update`` returns ``None`` until a first impedance has been accepted,
    then an estimate every step (fresh or held over).
    """

    def __init__(
        self,
        k: int = 20,
        lam: float = 0.8,
        coeff: float = 0.15,
        e_gate: tuple[float, float] = (0.5, 1.5),
        u22_tol: float = 1e-10,
        floor: float | None = None,
    ):
        if floor is not None and coeff <= floor:
            raise ValueError(
                f"screening coefficient {coeff} must exceed the calibrated floor {floor:.5f}"
            )
        self.screen = ScreeningState(lam=lam, coeff=coeff)
        self.window = RegressionWindow(k=k)
        self.e_gate = e_gate
        self.u22_tol = u22_tol
        self._prev: PmuSample | None = None
        self._z: complex | None = None
        self._n = 0
        #: diagnostics for the most recent update
        self.last_accepted = False
        self.last_fresh = False

    @property
    def n_samples(self) -> int:
        return self._n

    def _gate(self, r: float, x: float, e: complex) -> bool:
        lo, hi = self.e_gate
        return r > 0.0 and x > 0.0 and lo < abs(e) < hi

    def update(self, sample: PmuSample) -> TheveninEstimate | None:
        self._n += 1
        self.last_accepted = False
        self.last_fresh = False
        prev, self._prev = self._prev, sample
        if prev is None:
            return None

        d_v, d_i = delta(prev, sample)
        if screen_pair(self.screen, self._n, d_i, sample.i):
            self.last_accepted = True
            x_c, r_c = two_point_impedance(d_v, d_i)
            e_c = potential_from_estimate((r_c, x_c), sample)
            if self._gate(r_c, x_c, e_c):
                self.window.push(d_i, d_v)
                try:
                    r, x = tls_impedance(self.window, self.u22_tol)
                except TlsFailure:
                    pass
                else:
                    e_t = potential_from_estimate((r, x), sample)
                    if self._gate(r, x, e_t):
                        self._z = complex(r, x)
                        self.last_fresh = True

        if self._z is None:
            return None
        e = potential_from_estimate((self._z.real, self._z.imag), sample)
        return TheveninEstimate(
            r=self._z.real,
            x=self._z.imag,
            e=e,
            t=sample.t,
            n_window=len(self.window),
            held_over=not self.last_fresh,
        )
