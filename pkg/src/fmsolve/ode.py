"""Explicit Runge-Kutta integrators built from first principles.

Four methods are provided: forward Euler (order 1), explicit midpoint
(order 2), classical RK4 (order 4) and the adaptive Dormand-Prince 5(4)
embedded pair.  All state is flat float64 arrays; the right-hand side is
wrapped in a :class:`VectorField` whose evaluation counter gives the NFE
cost metric used throughout the benchmarks.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VectorField",
    "IntegrationError",
    "ButcherTableau",
    "DOPRI5",
    "StepRecord",
    "SolveTrace",
    "StepControlConfig",
    "step_euler",
    "step_midpoint",
    "step_rk4",
    "integrate_fixed",
    "error_norm",
    "propose_step",
    "initial_step_guess",
    "integrate_dopri5",
    "stability_value",
    "stability_region_grid",
    "FIXED_STEP_METHODS",
]


class IntegrationError(RuntimeError):
    """A solver failed: non-finite state, or the step budget ran out.

    Carries the failure context so callers can report where the run died.
    """

    def __init__(self, message, t=None, y=None, h=None, step_index=None):
        super().__init__(message)
        self.t = t
        self.y = y
        self.h = h
        self.step_index = step_index


class VectorField:
    """Callable wrapper around a right-hand side f(t, y) -> dy/dt.

    Counts evaluations in ``nfe`` (one per call, regardless of how many
    trajectories a batched state packs) and hands the callee a read-only
    view of the state so f cannot mutate it.
    """

    def __init__(self, fn):
        self._fn = fn
        self.nfe = 0

    def __call__(self, t, y):
        self.nfe += 1
        view = y.view()
        view.flags.writeable = False
        out = np.asarray(self._fn(t, view), dtype=float)
        if out.shape != y.shape:
            raise ValueError(f"field output shape {out.shape} != state shape {y.shape}")
        return out


def _check_finite(value, t, y, h=None, step_index=None):
    if not np.all(np.isfinite(value)):
        raise IntegrationError(
            f"non-finite field output at t={t!r}", t=t, y=np.array(y), h=h, step_index=step_index
        )
    return value


# ---------------------------------------------------------------------------
# single steps

def step_euler(f, t, y, h):
    """One forward Euler step: y + h*f(t, y).  One field evaluation."""
    k1 = _check_finite(f(t, y), t, y, h)
    return y + h * k1


def step_midpoint(f, t, y, h):
    """One explicit midpoint step.  Two field evaluations.

    A half Euler step probes the field at the interval midpoint; the full
    step then uses that midpoint slope, which matches the Taylor expansion
    of the exact solution through second order.
    """
    k1 = _check_finite(f(t, y), t, y, h)
    k2 = _check_finite(f(t + 0.5 * h, y + (0.5 * h) * k1), t, y, h)
    return y + h * k2


def step_rk4(f, t, y, h):
    """One classical RK4 step.  Four field evaluations.

    Slopes at the endpoints and (twice) at the midpoint, combined with
    Simpson weights h/6 * (k1 + 2 k2 + 2 k3 + k4).
    """
    k1 = _check_finite(f(t, y), t, y, h)
    k2 = _check_finite(f(t + 0.5 * h, y + (0.5 * h) * k1), t, y, h)
    k3 = _check_finite(f(t + 0.5 * h, y + (0.5 * h) * k2), t, y, h)
    k4 = _check_finite(f(t + h, y + h * k3), t, y, h)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


#: method name -> (stepper, field evaluations per step)
FIXED_STEP_METHODS = {
    "euler": (step_euler, 1),
    "midpoint": (step_midpoint, 2),
    "rk4": (step_rk4, 4),
}


# ---------------------------------------------------------------------------
# traces

@dataclass
class StepRecord:
    """One attempted step: start time, size, error norm (None for fixed-step
    runs), whether it was accepted, and the cumulative NFE afterwards."""

    t: float
    h: float
    err: float | None
    accepted: bool
    nfe_cum: int


@dataclass
class SolveTrace:
    """Per-step log of an integration run."""

    steps: list[StepRecord] = field(default_factory=list)
    nfe_total: int = 0
    y_final: np.ndarray | None = None

    @property
    def accepted_steps(self):
        return [s for s in self.steps if s.accepted]

    @property
    def n_rejected(self):
        return sum(1 for s in self.steps if not s.accepted)

    def write_csv(self, path):
        """Write the trace as CSV with columns t,h,err,accepted,nfe_cum."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "h", "err", "accepted", "nfe_cum"])
            for s in self.steps:
                err = "" if s.err is None else repr(float(s.err))
                w.writerow([repr(float(s.t)), repr(float(s.h)), err, int(s.accepted), s.nfe_cum])


def integrate_fixed(f, y0, t0, t1, n_steps, method):
    """Integrate y' = f(t, y) from t0 to t1 with a uniform step size.

    Parameters
    ----------
    f : VectorField
    y0 : array_like, initial state (flattened to 1D internally is not done;
        any shape broadcastable under ``y + h*k`` works, 1D is canonical)
    n_steps : number of equal steps, >= 1
    method : one of "euler", "midpoint", "rk4"

    Returns ``(y_final, SolveTrace)``.  NFE is n_steps times the per-step
    evaluation count of the method (1, 2 or 4).
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    try:
        stepper, _ = FIXED_STEP_METHODS[method]
    except KeyError:
        raise ValueError(f"unknown fixed-step method {method!r}") from None

    y = np.array(y0, dtype=float)
    h = (t1 - t0) / n_steps
    nfe0 = f.nfe
    trace = SolveTrace()
    for n in range(n_steps):
        t = t0 + n * h
        try:
            y = stepper(f, t, y, h)
        except IntegrationError as exc:
            exc.step_index = n
            raise
        if not np.all(np.isfinite(y)):
            raise IntegrationError(
                f"state became non-finite at step {n} (t={t})", t=t, y=y, h=h, step_index=n
            )
        trace.steps.append(StepRecord(t=t, h=h, err=None, accepted=True, nfe_cum=f.nfe - nfe0))
    trace.nfe_total = f.nfe - nfe0
    trace.y_final = y
    return y, trace


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

@dataclass(frozen=True)
class ButcherTableau:
    """Nodes c, strictly lower-triangular coefficients A, 5th-order weights b
    and embedded 4th-order weights b_star of an explicit RK pair."""

    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    b_star: np.ndarray

    @property
    def n_stages(self):
        return len(self.c)

    def stability_coefficients(self):
        """Coefficients of the stability polynomial R(z) = sum c_k z^k.

        c_0 = 1 and c_k = b . A^(k-1) . 1; for an explicit 7-stage scheme the
        series terminates at z^7, and the FSAL zero weight kills that term
        too, leaving degree 6.
        """
        s = self.n_stages
        coeffs = [1.0]
        v = np.ones(s)
        for _ in range(s):
            coeffs.append(float(self.b @ v))
            v = self.a @ v
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs.pop()
        return np.array(coeffs)


def _dopri5_tableau():
    a = np.zeros((7, 7))
    a[1, :1] = [1 / 5]
    a[2, :2] = [3 / 40, 9 / 40]
    a[3, :3] = [44 / 45, -56 / 15, 32 / 9]
    a[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
    a[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
    a[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
    c = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1], dtype=float)
    b = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0], dtype=float)
    b_star = np.array(
        [5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40],
        dtype=float,
    )
    return ButcherTableau(c=c, a=a, b=b, b_star=b_star)


DOPRI5 = _dopri5_tableau()


@dataclass
class StepControlConfig:
    """Tolerances and controller clamps for the adaptive integrator.

    The next step size is h * min(alpha_max, max(alpha_min, safety * err^(-1/6))),
    with err the normalized error of the attempted step.
    """

    atol: float = 1e-5
    rtol: float = 1e-5
    safety: float = 0.9
    alpha_min: float = 0.2
    alpha_max: float = 5.0
    h_init: float | None = None
    max_steps: int = 100_000

    def __post_init__(self):
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.alpha_min < 1 < self.alpha_max):
            raise ValueError("need 0 < alpha_min < 1 < alpha_max")


def error_norm(e, y_n, y_next, atol, rtol):
    """Scaled RMS norm of a local error estimate.

    sqrt( (1/d) * sum_j ( e_j / (atol + max(|y_n_j|, |y_next_j|) * rtol) )^2 )
    """
    e = np.asarray(e, dtype=float)
    scale = atol + np.maximum(np.abs(y_n), np.abs(y_next)) * rtol
    return float(np.sqrt(np.mean((e / scale) ** 2)))


def propose_step(h, err, cfg):
    """Controller update for the step size given the last error norm.

    err = 0 hits the alpha_max clamp (no division by zero).
    """
    if err == 0.0:
        factor = cfg.alpha_max
    else:
        factor = min(cfg.alpha_max, max(cfg.alpha_min, cfg.safety * err ** (-1.0 / 6.0)))
    return h * factor


def _scaled_rms(v, scale):
    return float(np.sqrt(np.mean((v / scale) ** 2)))


def _initial_step(f, t0, y0, t1, cfg, f0):
    """Starting step size heuristic (f0 = f(t0, y0) precomputed by the caller).

    With d0 = ||y0|| and d1 = ||f0|| in the tolerance-scaled RMS norm, a first
    guess h0 = 0.01 * d0 / d1 is refined by one trial Euler step: with
    d2 = ||f(t0+h0, y0+h0*f0) - f0|| / h0, the guess becomes
    h = min(100*h0, (0.01 / max(d1, d2))^(1/6)), the exponent matching the
    order-5 propagating solution.  An (almost) flat field makes the guess
    infinite; the result is always clipped to the interval length.  Costs one
    extra field evaluation unless the flat-field shortcut triggers.
    """
    span = t1 - t0
    scale = cfg.atol + np.abs(y0) * cfg.rtol
    d0 = _scaled_rms(y0, scale)
    d1 = _scaled_rms(f0, scale)
    if d1 < 1e-12:
        return span
    h0 = 0.01 * d0 / d1 if d0 >= 1e-5 else 1e-6
    h0 = min(h0, span)
    f_trial = f(t0 + h0, y0 + h0 * f0)
    d2 = _scaled_rms(f_trial - f0, scale) / h0
    dmax = max(d1, d2)
    if dmax <= 1e-15:
        return span
    h1 = (0.01 / dmax) ** (1.0 / 6.0)
    return min(100.0 * h0, h1, span)


def initial_step_guess(f, t0, y0, t1, cfg):
    """Initial step size for the adaptive run.

    Returns cfg.h_init when set; otherwise runs the two-evaluation heuristic
    documented in :func:`_initial_step`.
    """
    if cfg.h_init is not None:
        return float(cfg.h_init)
    y0 = np.asarray(y0, dtype=float)
    f0 = _check_finite(f(t0, y0), t0, y0)
    return _initial_step(f, t0, y0, t1, cfg, f0)


def integrate_dopri5(f, y0, t0, t1, cfg):
    """Adaptive Dormand-Prince 5(4) integration of y' = f(t, y).

    The embedded 4th-order weights give a free local error estimate; a step
    is accepted when its scaled error norm is <= 1, and the controller of
    :func:`propose_step` picks the next size.  The last stage of an accepted
    step is reused as the first stage of the next (FSAL), so an accepted or
    rejected attempt costs 6 evaluations on top of a single up-front k1.
    When no explicit cfg.h_init is given the starting-step heuristic spends
    at most 1 further evaluation, so

        NFE = 1 + 6 * (accepted + rejected) (+1 for the heuristic trial).

    The final step is clipped to land on t1 exactly.  After a rejection the
    growth factor is capped at 1 until the next acceptance, which damps
    accept/reject oscillation.  Raises :class:`IntegrationError` when
    cfg.max_steps attempts are exhausted or a stage goes non-finite.

    Returns ``(y_final, SolveTrace)``; the trace records every attempt,
    rejections included.
    """
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    tab = DOPRI5
    c, a, b, b_star = tab.c, tab.a, tab.b, tab.b_star
    db = b - b_star

    y = np.array(y0, dtype=float)
    t = t0
    nfe0 = f.nfe
    trace = SolveTrace()

    k1 = _check_finite(f(t, y), t, y)
    if cfg.h_init is not None:
        h = float(cfg.h_init)
    else:
        h = _initial_step(f, t0, y, t1, cfg, k1)
    h = min(h, t1 - t0)

    k = [None] * 7
    just_rejected = False
    attempts = 0
    while t < t1:
        if attempts >= cfg.max_steps:
            raise IntegrationError(
                f"max_steps={cfg.max_steps} exhausted at t={t}, h={h}", t=t, y=y, h=h
            )
        h = min(h, t1 - t)
        is_last = h == t1 - t
        k[0] = k1
        for i in range(1, 7):
            yi = y + h * sum(a[i, j] * k[j] for j in range(i))
            k[i] = _check_finite(f(t + c[i] * h, yi), t, y, h, len(trace.steps))
        y5 = y + h * sum(b[j] * k[j] for j in range(7) if b[j] != 0.0)
        e = h * sum(db[j] * k[j] for j in range(7) if db[j] != 0.0)
        _check_finite(y5, t, y, h, len(trace.steps))
        err = error_norm(e, y, y5, cfg.atol, cfg.rtol)
        accepted = err <= 1.0
        attempts += 1
        trace.steps.append(
            StepRecord(t=t, h=h, err=err, accepted=accepted, nfe_cum=f.nfe - nfe0)
        )
        h_next = propose_step(h, err, cfg)
        if accepted:
            y = y5
            t = t1 if is_last else t + h
            k1 = k[6]  # FSAL
            if just_rejected:
                h_next = min(h_next, h)
                just_rejected = False
        else:
            just_rejected = True
            h_next = min(h_next, h)
        h = h_next
    trace.nfe_total = f.nfe - nfe0
    trace.y_final = y
    return y, trace


# ---------------------------------------------------------------------------
# stability functions

_STABILITY_COEFFS = {
    "euler": np.array([1.0, 1.0]),
    "midpoint": np.array([1.0, 1.0, 0.5]),
    "rk4": np.array([1.0, 1.0, 1 / 2, 1 / 6, 1 / 24]),
}


def _stability_coeffs(method):
    if method == "dopri5":
        # degree 6; the z^6 coefficient b.A^5.1 comes out of the tableau
        coeffs = _STABILITY_COEFFS.get("dopri5")
        if coeffs is None:
            coeffs = DOPRI5.stability_coefficients()
            _STABILITY_COEFFS["dopri5"] = coeffs
        return coeffs
    try:
        return _STABILITY_COEFFS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None


def stability_value(method, z):
    """Amplification factor R(z) of a method applied to y' = lambda*y, z = h*lambda.

    Euler: 1 + z.  Midpoint: 1 + z + z^2/2.  RK4: the exponential series
    truncated at order 4.  For dopri5 the polynomial (degree 6) is computed
    from the Butcher tableau via R(z) = 1 + sum_k (b . A^(k-1) . 1) z^k.
    """
    z = complex(z)
    acc = 0j
    for ck in _stability_coeffs(method)[::-1]:
        acc = acc * z + ck
    return acc


@dataclass
class StabilityRaster:
    """|R(z)| sampled on a rectangular grid; rows run over im, columns over re."""

    method: str
    re: np.ndarray
    im: np.ndarray
    magnitude: np.ndarray
    inside: np.ndarray

    def real_axis_extent(self):
        """Leftmost re with |R| <= 1 on the grid row closest to im = 0."""
        row = int(np.argmin(np.abs(self.im)))
        cols = np.nonzero(self.inside[row])[0]
        if cols.size == 0:
            return float("nan")
        return float(self.re[cols[0]])

    def write_csv(self, path):
        """CSV grid of |R|: header row carries the re axis, first column the im axis."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["im\\re"] + [repr(float(v)) for v in self.re])
            for i, imv in enumerate(self.im):
                w.writerow([repr(float(imv))] + [repr(float(v)) for v in self.magnitude[i]])


def stability_region_grid(method, re_range, im_range, resolution):
    """Rasterize the stability region {z : |R(z)| <= 1} of a method.

    ``resolution`` is the number of grid points per axis (a single int or a
    (re, im) pair), at least 2 per axis.
    """
    if np.isscalar(resolution):
        n_re = n_im = int(resolution)
    else:
        n_re, n_im = (int(r) for r in resolution)
    if n_re < 2 or n_im < 2:
        raise ValueError("resolution must be >= 2 per axis")
    re = np.linspace(re_range[0], re_range[1], n_re)
    im = np.linspace(im_range[0], im_range[1], n_im)
    z = re[None, :] + 1j * im[:, None]
    acc = np.zeros_like(z)
    for ck in _stability_coeffs(method)[::-1]:
        acc = acc * z + ck
    mag = np.abs(acc)
    return StabilityRaster(method=method, re=re, im=im, magnitude=mag, inside=mag <= 1.0)
