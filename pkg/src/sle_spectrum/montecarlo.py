"""Monte-Carlo moments of whole-plane SLE through the reverse radial Loewner flow.

    d/dt f_t(z) = f_t(z) (f_t(z) + lam(t)) / (f_t(z) - lam(t)),   f_0(z) = z,
    lam(t) = exp(i sqrt(kappa) B_t),

and e^t f_t(z) converges (in law) to the whole-plane map at time 0.  The
state carried per point is (f, log f'); log f' avoids over/underflow.

With lam frozen on a step the flow is solvable: for v = f / lam,
(v + 1)^2 / v grows like e^t.  The default stepper uses that exact map,
so all the discretisation error comes from freezing the driving function.
Near the singularity f = lam steps are bisected with Brownian-bridge
midpoints, so every sample stays one consistent Brownian path.

Every sample j draws from its own stream SeedSequence(seed, spawn_key=(j,))
and results are stored by index, so estimates do not depend on the number
of worker threads.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .spectrum import MomentPoint, beta_gamma, check_kappa
from .phase import red_point

log = logging.getLogger(__name__)

OK, NOT_CONVERGED, STEP_COLLAPSE, NOT_MONOTONE = 0, 1, 2, 3
STATUS_NAMES = {OK: "ok", NOT_CONVERGED: "not-converged",
                STEP_COLLAPSE: "step-collapse", NOT_MONOTONE: "not-monotone"}
STEPPERS = {"exact": 0, "rk4": 1}


class FlowError(RuntimeError):
    pass


class FailureBudgetExceeded(FlowError):
    pass


class InsufficientSignal(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_cap: float = 30.0
    tol: float = 1e-6              # convergence of e^t f_t and t + log f_t'
    probe: float = 0.5             # time between convergence checkpoints
    guard: float = 2.0             # bisect while min |f - lam| < guard sqrt(kappa h)
    max_depth: int = 12
    coarsen: int = 16              # fine steps merged once every |f| < coarse_radius
    coarse_radius: float = 0.1
    bridge_pool: int = 8192
    failure_budget: float = 1e-3
    stepper: str = "exact"
    workers: int = 1
    chunk: int = 128

    def __post_init__(self):
        if not (self.dt > 0 and self.t_cap > 0):
            raise ValueError("dt and the horizon cap must be positive")
        if self.dt > self.t_cap:
            raise ValueError(f"dt={self.dt} exceeds the horizon {self.t_cap}")
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}; choose from {sorted(STEPPERS)}")
        if self.workers < 1 or self.chunk < 1:
            raise ValueError("workers and chunk must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_cap / self.dt - 1e-9))


@dataclass
class DrivingPath:
    kappa: float
    T: float
    dt: float
    seed: int
    increments: np.ndarray
    index: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.increments)

    @property
    def brownian(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    @property
    def lam(self) -> np.ndarray:
        return np.exp(1j * math.sqrt(self.kappa) * self.brownian)


@dataclass(frozen=True)
class FlowSample:
    z: complex
    f_tilde: complex
    log_deriv: complex
    t: float
    converged: bool
    status: str = "ok"

    @property
    def renormalized(self) -> complex:
        return math.exp(self.t) * self.f_tilde

    @property
    def log_fprime(self) -> complex:
        """log of the derivative of the renormalized map."""
        return self.t + self.log_deriv


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    n: int
    target: tuple         # (kappa, p, q, z)
    failures: int = 0

    def to_row(self) -> str:
        k, p, q, z = self.target
        z = complex(z)
        return ",".join(f"{v:.17g}" for v in (k, p, q, z.real, z.imag)) + \
            f",{self.n},{self.mean:.17g},{self.stderr:.17g}"


MOMENT_HEADER = "kappa,p,q,z_re,z_im,n,mean,stderr"


@dataclass
class BetaFit:
    radii: list
    circle_means: list
    slope: float
    stderr: float
    intercept: float = 0.0
    circle_stderr: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["kind,r,x,circle_mean,stderr"]
        for i, r in enumerate(self.radii):
            se = self.circle_stderr[i] if self.circle_stderr else float("nan")
            lines.append(f"radius,{r:.17g},{-math.log1p(-r):.17g},{self.circle_means[i]:.17g},{se:.17g}")
        lines.append(f"slope,,,{self.slope:.17g},{self.stderr:.17g}")
        return "\n".join(lines) + "\n"


# -- random streams --------------------------------------------------------------------

def sample_stream(seed: int, j: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(j,))))


def _draws(seed, j, n_steps, dt, pool):
    rng = sample_stream(seed, j)
    incs = rng.standard_normal(n_steps) * math.sqrt(dt)
    bridge = rng.standard_normal(pool)
    return incs, bridge


def sample_driving(kappa, T, dt, seed, index: int = 0) -> DrivingPath:
    check_kappa(kappa)
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    if dt > T:
        raise ValueError(f"dt={dt} exceeds the horizon T={T}")
    n = int(math.ceil(T / dt - 1e-9))
    incs = sample_stream(seed, index).standard_normal(n) * math.sqrt(dt)
    return DrivingPath(float(kappa), float(T), float(dt), int(seed), incs, index)


def frozen_path(kappa, T, dt) -> DrivingPath:
    """Zero Brownian motion: lam == 1 throughout."""
    n = int(math.ceil(T / dt - 1e-9))
    return DrivingPath(float(kappa), float(T), float(dt), 0, np.zeros(n))


# -- the kernel ------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _exact_step(f, ld, lam, h):
    v0 = f / lam
    K = (v0 + 1.0) ** 2 / v0 * math.exp(h)
    s = np.sqrt(K * (K - 4.0))
    km2 = K - 2.0
    if (km2.real * s.real + km2.imag * s.imag) < 0.0:
        s = -s
    big = (km2 + s) / 2.0
    v = 1.0 / big
    ratio = (v0 * v0 - 1.0) / (v * v - 1.0) * (v / v0) ** 2
    return v * lam, ld + h + np.log(ratio)


@njit(cache=True, nogil=True)
def _rhs(f, lam):
    d = f - lam
    return f * (f + lam) / d, (f + lam) / d - 2.0 * lam * f / (d * d)


@njit(cache=True, nogil=True)
def _rk4_step(f, ld, lam, h):
    k1f, k1l = _rhs(f, lam)
    k2f, k2l = _rhs(f + 0.5 * h * k1f, lam)
    k3f, k3l = _rhs(f + 0.5 * h * k2f, lam)
    k4f, k4l = _rhs(f + h * k3f, lam)
    return (f + h * (k1f + 2 * k2f + 2 * k3f + k4f) / 6.0,
            ld + h * (k1l + 2 * k2l + 2 * k3l + k4l) / 6.0)


@njit(cache=True, nogil=True)
def _advance_one(f, ld, i, lam, h, stepper):
    if stepper == 0:
        f[i], ld[i] = _exact_step(f[i], ld[i], lam, h)
    else:
        f[i], ld[i] = _rk4_step(f[i], ld[i], lam, h)


@njit(cache=True, nogil=True)
def _fine_step(f, ld, active, ba, bb, h, bridge, used, sk, guard, max_depth, stepper,
               st_h, st_ba, st_bb, st_d, st_mask):
    """One fine step for the active points, bisecting where needed.

    Returns the updated count of bridge normals used, or -1 on a collapse.
    """
    n = f.shape[0]
    top = 0
    st_h[0] = h
    st_ba[0] = ba
    st_bb[0] = bb
    st_d[0] = 0
    st_mask[0, :] = active
    while top >= 0:
        h = st_h[top]
        ba = st_ba[top]
        bb = st_bb[top]
        depth = st_d[top]
        node = top
        top -= 1
        lam = np.exp(1j * sk * 0.5 * (ba + bb))
        thr = guard * sk * math.sqrt(h)
        split = False
        for i in range(n):
            if not st_mask[node, i]:
                continue
            gap = abs(f[i] - lam)
            if gap < thr and depth < max_depth:
                split = True
            else:
                if gap < 1e-12:
                    return -1
                _advance_one(f, ld, i, lam, h, stepper)
                st_mask[node, i] = False
        if split:
            if used >= bridge.shape[0]:
                return -1
            bm = 0.5 * (ba + bb) + 0.5 * math.sqrt(h) * bridge[used]
            used += 1
            # second half goes below the first half on the stack
            mask = st_mask[node].copy()
            top += 1
            st_h[top] = 0.5 * h
            st_ba[top] = bm
            st_bb[top] = bb
            st_d[top] = depth + 1
            st_mask[top, :] = mask
            top += 1
            st_h[top] = 0.5 * h
            st_ba[top] = ba
            st_bb[top] = bm
            st_d[top] = depth + 1
            st_mask[top, :] = mask
    return used


@njit(cache=True, nogil=True)
def _flow_kernel(f, ld, incs, bridge, sk, dt, n_max, tol, probe_steps, guard,
                 max_depth, coarsen, coarse_radius, stepper, stop_on_converge):
    """Evolve all points of one sample in place.

    Time advances in blocks of up to `coarsen` fine steps.  Points already
    inside |f| < coarse_radius cross a block in one step; the others take the
    fine steps, bisected only where they sit close to the driving point.  Each
    bridge midpoint is drawn once, in depth-first order, and shared by every
    point that needs it.  Returns (status, fine steps, normals used).
    """
    n = f.shape[0]
    prev_r = np.empty(n, np.complex128)
    prev_d = np.empty(n, np.complex128)
    prev_mod = np.empty(n, np.float64)
    for i in range(n):
        prev_r[i] = f[i]
        prev_d[i] = ld[i]
        prev_mod[i] = abs(f[i])
    have_prev = False
    B = 0.0
    k = 0
    used = 0
    size = 2 * max_depth + 4
    st_h = np.empty(size)
    st_ba = np.empty(size)
    st_bb = np.empty(size)
    st_d = np.empty(size, np.int64)
    st_mask = np.zeros((size, n), np.bool_)
    fine = np.zeros(n, np.bool_)
    while k < n_max:
        to_probe = probe_steps - (k % probe_steps)
        m = max(1, min(coarsen, to_probe, n_max - k))
        dB = 0.0
        for j in range(m):
            dB += incs[k + j]
        any_fine = False
        for i in range(n):
            fine[i] = m == 1 or not abs(f[i]) < coarse_radius
            any_fine = any_fine or fine[i]
        if m > 1:
            lam = np.exp(1j * sk * (B + 0.5 * dB))
            for i in range(n):
                if not fine[i]:
                    _advance_one(f, ld, i, lam, m * dt, stepper)
        if any_fine:
            b0 = B
            for j in range(m):
                b1 = b0 + incs[k + j]
                used = _fine_step(f, ld, fine, b0, b1, dt, bridge, used, sk, guard, max_depth,
                                  stepper, st_h, st_ba, st_bb, st_d, st_mask)
                if used < 0:
                    return STEP_COLLAPSE, k + j, bridge.shape[0]
                b0 = b1
        B += dB
        k += m
        if k % probe_steps == 0 or k == n_max:
            t = k * dt
            et = math.exp(t)
            done = True
            for i in range(n):
                mod = abs(f[i])
                if not mod < prev_mod[i]:
                    return NOT_MONOTONE, k, used
                prev_mod[i] = mod
                r = et * f[i]
                d = t + ld[i]
                if have_prev:
                    if abs(r - prev_r[i]) > tol * max(1.0, abs(r)) or abs(d - prev_d[i]) > tol * max(1.0, abs(d)):
                        done = False
                prev_r[i] = r
                prev_d[i] = d
            if stop_on_converge and have_prev and done:
                return OK, k, used
            have_prev = True
    if stop_on_converge:
        return NOT_CONVERGED, k, used
    return OK, k, used


def _run(zs, incs, bridge, kappa, dt, cfg: SimConfig, stop=True, n_max=None):
    f = np.array(zs, dtype=np.complex128)
    ld = np.zeros(len(f), np.complex128)
    n_max = len(incs) if n_max is None else n_max
    probe = max(1, int(round(cfg.probe / dt)))
    status, k, used = _flow_kernel(f, ld, incs, bridge, math.sqrt(kappa), dt, n_max, cfg.tol,
                                   probe, cfg.guard, cfg.max_depth, cfg.coarsen,
                                   cfg.coarse_radius, STEPPERS[cfg.stepper], stop)
    return f, ld, k * dt, int(status)


def evolve_reverse_flow(z, path: DrivingPath, cfg: Optional[SimConfig] = None,
                        stop_on_converge: bool = True, bridge: Optional[np.ndarray] = None) -> FlowSample:
    """Flow a single point along a given driving path."""
    cfg = cfg or SimConfig(dt=path.dt, t_cap=path.T)
    z = complex(z)
    if not abs(z) < 1:
        raise ValueError("z must lie in the open unit disk")
    if z == 0:
        raise ValueError("z = 0 is a fixed point of the flow; use the normalisation instead")
    if bridge is None:
        bridge = sample_stream(path.seed, path.index).standard_normal(cfg.bridge_pool)
    f, ld, t, status = _run([z], path.increments, bridge, path.kappa, path.dt, cfg, stop_on_converge)
    return FlowSample(z, complex(f[0]), complex(ld[0]), t, status == OK, STATUS_NAMES[status])


# -- estimators ------------------------------------------------------------------------

def _sample_logs(zs, kappa, seed, cfg: SimConfig, n):
    """Per-sample (log|f|, Re log f', status) for every point, computed in parallel.

    Output arrays are indexed by sample so aggregation order is fixed.
    """
    zs = np.asarray(zs, np.complex128)
    log_abs = np.empty((n, len(zs)))
    log_der = np.empty((n, len(zs)))
    status = np.empty(n, np.int64)
    nz = zs != 0
    moving = zs[nz]

    def work(lo, hi):
        for j in range(lo, hi):
            incs, bridge = _draws(seed, j, cfg.n_steps, cfg.dt, cfg.bridge_pool)
            la = np.zeros(len(zs))
            lf = np.zeros(len(zs))
            st = OK
            if len(moving):
                f, ld, t, st = _run(moving, incs, bridge, kappa, cfg.dt, cfg)
                la[nz] = t + np.log(np.abs(f))
                lf[nz] = t + ld.real
            log_abs[j] = la
            log_der[j] = lf
            status[j] = st

    chunks = [(lo, min(n, lo + cfg.chunk)) for lo in range(0, n, cfg.chunk)]
    if cfg.workers == 1:
        for lo, hi in chunks:
            work(lo, hi)
    else:
        with ThreadPoolExecutor(cfg.workers) as ex:
            list(ex.map(lambda c: work(*c), chunks))
    return log_abs, log_der, status


def _integrand(zs, p, q, log_abs, log_der):
    zs = np.asarray(zs, np.complex128)
    out = np.empty_like(log_abs)
    for i, z in enumerate(zs):
        if z == 0:
            out[:, i] = 1.0        # G(0) = 1: f(z) ~ z and f'(0) = 1
        else:
            out[:, i] = np.exp(q * math.log(abs(z)) + p * log_der[:, i] - q * log_abs[:, i])
    return out


def _mean_stderr(x):
    n = len(x)
    m = math.fsum(x) / n
    var = math.fsum((x - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def _check_budget(status, cfg):
    bad = int(np.count_nonzero(status != OK))
    if bad > cfg.failure_budget * len(status):
        kinds = {STATUS_NAMES[s]: int(np.count_nonzero(status == s)) for s in np.unique(status) if s != OK}
        raise FailureBudgetExceeded(f"{bad} of {len(status)} samples failed {kinds}")
    return bad


def estimate_moments(kappa, pts: Sequence[MomentPoint], zs, n: int, seed: int = 0,
                     cfg: Optional[SimConfig] = None) -> list:
    """Estimates for every (pt, z) pair from one shared set of flow samples.

    Returns a list (over pts) of lists (over zs) of MomentEstimate.
    """
    check_kappa(kappa)
    if n < 100:
        raise ValueError("need at least 100 samples")
    cfg = cfg or SimConfig()
    zs = [complex(z) for z in zs]
    for z in zs:
        if not abs(z) < 1:
            raise ValueError(f"z={z} is not in the open unit disk")
    la, lf, status = _sample_logs(zs, float(kappa), seed, cfg, n)
    bad = _check_budget(status, cfg)
    keep = status == OK
    out = []
    for pt in pts:
        vals = _integrand(zs, float(pt.p), float(pt.q), la[keep], lf[keep])
        row = []
        for i, z in enumerate(zs):
            m, se = _mean_stderr(vals[:, i])
            row.append(MomentEstimate(m, se, int(keep.sum()), (kappa, pt.p, pt.q, z), bad))
        out.append(row)
    return out


def estimate_moment(kappa, pt: MomentPoint, z, n: int, seed: int = 0,
                    cfg: Optional[SimConfig] = None) -> MomentEstimate:
    return estimate_moments(kappa, [pt], [z], n, seed, cfg)[0][0]


def fit_slope(x, y):
    """Least-squares slope, its standard error and the intercept."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 3:
        raise ValueError("need at least three points for a slope with an error bar")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    icpt = ym - slope * xm
    res = y - (icpt + slope * x)
    s2 = float((res ** 2).sum()) / (len(x) - 2)
    return slope, math.sqrt(s2 / sxx), float(icpt)


def fit_beta(kappa, pt: MomentPoint, radii, n: int, angles: int = 64, seed: int = 0,
             cfg: Optional[SimConfig] = None, max_stderr: float = 0.5) -> BetaFit:
    """Slope of log(circle mean) against -log(1-r); no rotational shortcut."""
    radii = [float(r) for r in radii]
    if len(radii) < 4:
        raise ValueError("need at least four radii")
    if any(not 0 < r < 1 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing inside (0, 1)")
    th = -math.pi + 2 * math.pi * np.arange(angles) / angles
    zs = [r * complex(math.cos(t), math.sin(t)) for r in radii for t in th]
    cfg = cfg or SimConfig()
    la, lf, status = _sample_logs(zs, float(kappa), seed, cfg, n)
    _check_budget(status, cfg)
    keep = status == OK
    vals = _integrand(zs, float(pt.p), float(pt.q), la[keep], lf[keep])
    means, ses = [], []
    for i in range(len(radii)):
        # per-sample circle average, then the sample mean
        circ = vals[:, i * angles:(i + 1) * angles].mean(axis=1)
        m, se = _mean_stderr(circ)
        means.append(m)
        ses.append(se)
    x = [-math.log1p(-r) for r in radii]
    slope, se, icpt = fit_slope(x, [math.log(m) for m in means])
    if se > max_stderr:
        raise InsufficientSignal(f"slope stderr {se:.3g} exceeds {max_stderr}")
    return BetaFit(radii, means, slope, se, icpt, ses)


# -- red parabola check ------------------------------------------------------------------

def red_exact(kappa, gamma, z) -> float:
    """(1 - |z|^2)^(-kappa gamma^2/2) |1 - z|^(2 gamma): the moment on the red parabola."""
    z = complex(z)
    return (1 - abs(z) ** 2) ** (-kappa * gamma * gamma / 2) * abs(1 - z) ** (2 * gamma)


@dataclass
class RedRow:
    gamma: float
    z: complex
    exact: float
    estimate: MomentEstimate

    @property
    def zscore(self) -> float:
        if self.estimate.stderr == 0:
            return 0.0 if self.estimate.mean == self.exact else math.inf
        return (self.estimate.mean - self.exact) / self.estimate.stderr

    @property
    def ok(self) -> bool:
        return abs(self.zscore) <= 4.0


@dataclass
class RedReport:
    kappa: float
    rows: list
    min_pass_fraction: float = 0.95

    @property
    def pass_fraction(self) -> float:
        return sum(r.ok for r in self.rows) / len(self.rows)

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= self.min_pass_fraction

    def to_csv(self) -> str:
        lines = ["gamma,z_re,z_im,exact,mean,stderr,zscore,ok"]
        for r in self.rows:
            lines.append(f"{r.gamma:.17g},{r.z.real:.17g},{r.z.imag:.17g},{r.exact:.17g},"
                         f"{r.estimate.mean:.17g},{r.estimate.stderr:.17g},{r.zscore:.17g},{int(r.ok)}")
        return "\n".join(lines) + "\n"


DEFAULT_RED_Z = (0.5, 0.3 * complex(math.cos(math.pi / 3), math.sin(math.pi / 3)), -0.6,
                 0.7j, 0.8 * complex(math.cos(2 * math.pi / 3), -math.sin(2 * math.pi / 3)), 0.2 + 0.1j)


def validate_red_parabola(kappa, gammas, zs=DEFAULT_RED_Z, n: int = 20000, seed: int = 0,
                          cfg: Optional[SimConfig] = None) -> RedReport:
    """Compare estimates with the exact moment at red-parabola points; the
    gammas share the same flow samples."""
    k = float(kappa)
    pts = []
    for g in gammas:
        cp = red_point(k, float(g))
        pts.append(MomentPoint(cp.p, cp.q))
    est = estimate_moments(k, pts, zs, n, seed, cfg)
    rows = []
    for g, per_z in zip(gammas, est):
        for z, e in zip(zs, per_z):
            rows.append(RedRow(float(g), complex(z), red_exact(k, float(g), z), e))
    return RedReport(k, rows)


def red_beta(kappa, gamma) -> float:
    cp = red_point(float(kappa), float(gamma))
    return float(beta_gamma(float(kappa), MomentPoint(cp.p, cp.q), float(gamma)))
