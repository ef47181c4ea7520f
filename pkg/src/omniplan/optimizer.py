"""Levenberg-Marquardt over the free variables of a timed elastic band.

Free variables are every interval and the interior poses; the first and last
pose stay fixed. Variables are interleaved in band order::

    dt_0, x_1, y_1, th_1, dt_1, x_2, ..., th_{n-2}, dt_{n-2}

so each residual touches a short contiguous window and ``J^T J`` is banded.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .band import (
    BLOCKS,
    DT_MIN,
    Band,
    ProblemContext,
    accelerations,
    angular_accels,
    angular_rates,
    block_weights,
    body_accelerations,
    body_velocities,
    margins,
    _two_sided,
    orientation_errors,
    penalty,
    start_accelerations,
    residual_vector,
    velocities,
)
from .geometry import normalize_angle
from .gridmap import clearance_and_gradient

_MAX_DAMPING = 1e14


class SolverError(Exception):
    pass


class Termination(str, enum.Enum):
    RELATIVE_TOLERANCE = "relative_tolerance"
    ABSOLUTE_TOLERANCE = "absolute_tolerance"
    MAX_ITERATIONS = "max_iterations"
    DAMPING_LIMIT = "damping_limit"
    SINGULAR = "singular"
    NO_VARIABLES = "no_variables"


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    initial_damping: float = 1e-3
    damping_up: float = 2.0
    damping_down: float = 1.0 / 3.0
    rel_tolerance: float = 1e-6
    abs_tolerance: float = 1e-10
    jacobian_mode: str = "analytic"
    dt_min: float = DT_MIN

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.rel_tolerance > 0 and self.abs_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if not self.initial_damping > 0:
            raise ValueError("initial_damping must be positive")
        if not self.damping_up > 1:
            raise ValueError("damping_up must exceed 1")
        if not 0 < self.damping_down < 1:
            raise ValueError("damping_down must lie in (0, 1)")
        if self.jacobian_mode not in ("analytic", "finite-difference"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")


@dataclass
class SolveReport:
    iterations: int
    initial_objective: float
    final_objective: float
    converged: bool
    reason: Termination
    trace: list[dict] = field(default_factory=list, repr=False)


# -- variable packing ---------------------------------------------------------


def n_variables(n: int) -> int:
    return 4 * n - 7


def _dt_col(k):
    return 4 * np.asarray(k)


def _pose_cols(k, n):
    """Columns of ``(x, y, theta)`` for pose ``k``; ``-1`` for the fixed endpoints."""
    k = np.asarray(k)
    base = 4 * k - 3
    fixed = (k == 0) | (k == n - 1)
    base = np.where(fixed, -1, base)
    return base, np.where(fixed, -1, base + 1), np.where(fixed, -1, base + 2)


def pack(b: Band) -> np.ndarray:
    n = b.n
    x = np.empty(n_variables(n))
    x[_dt_col(np.arange(n - 1))] = b.dts
    if n > 2:
        k = np.arange(1, n - 1)
        cx, cy, ct = _pose_cols(k, n)
        x[cx], x[cy], x[ct] = b.poses[k, 0], b.poses[k, 1], b.poses[k, 2]
    return x


def unpack(x: np.ndarray, template: Band) -> Band:
    """Band with the variables of ``x`` and the endpoints of ``template``."""
    n = template.n
    poses = np.array(template.poses)
    if n > 2:
        k = np.arange(1, n - 1)
        cx, cy, ct = _pose_cols(k, n)
        poses[k, 0], poses[k, 1], poses[k, 2] = x[cx], x[cy], x[ct]
    b = Band.__new__(Band)
    # bypass re-normalization so the endpoints stay bit-identical
    poses[1:-1, 2] = normalize_angle(poses[1:-1, 2])
    dts = np.array(x[_dt_col(np.arange(n - 1))])
    poses.setflags(write=False)
    dts.setflags(write=False)
    object.__setattr__(b, "poses", poses)
    object.__setattr__(b, "dts", dts)
    return b


# -- objective and Jacobian ---------------------------------------------------


def objective(b: Band, ctx: ProblemContext) -> float:
    """Sum of squared intervals plus every weighted constraint penalty."""
    m = margins(b, ctx)
    sig = block_weights(ctx.weights)
    total = float(np.sum(b.dts**2))
    for name in BLOCKS[1:]:
        total += penalty(m[name], sig[name])
    return total


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(rows, cols, vals)
        keep = (cols >= 0) & (vals != 0.0)
        self.rows.append(rows[keep])
        self.cols.append(cols[keep])
        self.vals.append(vals[keep])

    def matrix(self, shape) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(shape)
        return sp.csr_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=shape,
        )


def _linearize(b: Band, ctx: ProblemContext):
    """Residual vector and analytic sparse Jacobian at ``b``."""
    n = b.n
    T = b.dts
    P = b.positions
    th = b.headings
    lim = ctx.limits
    sig = block_weights(ctx.weights)
    trip = _Triplets()
    res = [T]
    row = 0

    k1 = np.arange(n - 1)
    trip.add(k1, _dt_col(k1), 1.0)
    row += n - 1

    # velocity: four margins per interval
    vb = body_velocities(b)
    c, s = np.cos(th[:-1]), np.sin(th[:-1])
    mv = np.empty((n - 1, 4))
    mv[:, 0::2] = np.asarray(lim.v_max_body) - vb
    mv[:, 1::2] = np.asarray(lim.v_max_body) + vb
    act = math.sqrt(sig["velocity"]) * (mv < 0)
    res.append(math.sqrt(sig["velocity"]) * np.minimum(0.0, mv).ravel())
    xa, ya, ta = _pose_cols(k1, n)
    xb, yb, tb = _pose_cols(k1 + 1, n)
    dtc = _dt_col(k1)
    # d v'_x and d v'_y over stencil (x_k, y_k, th_k, dt_k, x_k1, y_k1)
    dvx = [(xa, -c / T), (ya, -s / T), (ta, vb[:, 1]), (dtc, -vb[:, 0] / T), (xb, c / T), (yb, s / T)]
    dvy = [(xa, s / T), (ya, -c / T), (ta, -vb[:, 0]), (dtc, -vb[:, 1] / T), (xb, -s / T), (yb, c / T)]
    for j, (deriv, sign) in enumerate([(dvx, -1.0), (dvx, 1.0), (dvy, -1.0), (dvy, 1.0)]):
        rows = row + 4 * k1 + j
        for cols, val in deriv:
            trip.add(rows, cols, sign * act[:, j] * val)
    row += 4 * (n - 1)

    # acceleration: four margins per interior pose
    if n > 2:
        k2 = np.arange(n - 2)
        v = velocities(b)
        a = accelerations(b)
        ab = body_accelerations(b)
        T0, T1 = T[:-1], T[1:]
        S = T0 + T1
        c, s = np.cos(th[:-2]), np.sin(th[:-2])
        ma = np.empty((n - 2, 4))
        ma[:, 0::2] = np.asarray(lim.a_max_body) - ab
        ma[:, 1::2] = np.asarray(lim.a_max_body) + ab
        act = math.sqrt(sig["acceleration"]) * (ma < 0)
        res.append(math.sqrt(sig["acceleration"]) * np.minimum(0.0, ma).ravel())
        coef0 = 2.0 / (S * T0)
        coef1 = -2.0 / S * (1.0 / T0 + 1.0 / T1)
        coef2 = 2.0 / (S * T1)
        gT0 = 2.0 * v[:-1] / (S * T0)[:, None] - a / S[:, None]
        gT1 = -2.0 * v[1:] / (S * T1)[:, None] - a / S[:, None]
        # body-frame rotation of the world-frame derivative vectors
        rT0 = np.column_stack([c * gT0[:, 0] + s * gT0[:, 1], -s * gT0[:, 0] + c * gT0[:, 1]])
        rT1 = np.column_stack([c * gT1[:, 0] + s * gT1[:, 1], -s * gT1[:, 0] + c * gT1[:, 1]])
        x0, y0, t0 = _pose_cols(k2, n)
        x1, y1, _ = _pose_cols(k2 + 1, n)
        x2, y2, _ = _pose_cols(k2 + 2, n)
        d0, d1 = _dt_col(k2), _dt_col(k2 + 1)
        dax = [(x0, c * coef0), (y0, s * coef0), (x1, c * coef1), (y1, s * coef1),
               (x2, c * coef2), (y2, s * coef2), (t0, ab[:, 1]), (d0, rT0[:, 0]), (d1, rT1[:, 0])]
        day = [(x0, -s * coef0), (y0, c * coef0), (x1, -s * coef1), (y1, c * coef1),
               (x2, -s * coef2), (y2, c * coef2), (t0, -ab[:, 0]), (d0, rT0[:, 1]), (d1, rT1[:, 1])]
        for j, (deriv, sign) in enumerate([(dax, -1.0), (dax, 1.0), (day, -1.0), (day, 1.0)]):
            rows = row + 4 * k2 + j
            for cols, val in deriv:
                trip.add(rows, cols, sign * act[:, j] * val)
        row += 4 * (n - 2)
    else:
        res.append(np.zeros(0))

    # angular rate
    w = angular_rates(b)
    mw = np.column_stack([lim.omega_max - w, lim.omega_max + w])
    act = math.sqrt(sig["omega"]) * (mw < 0)
    res.append(math.sqrt(sig["omega"]) * np.minimum(0.0, mw).ravel())
    dw = [(ta, -1.0 / T), (tb, 1.0 / T), (dtc, -w / T)]
    for j, sign in enumerate((-1.0, 1.0)):
        rows = row + 2 * k1 + j
        for cols, val in dw:
            trip.add(rows, cols, sign * act[:, j] * val)
    row += 2 * (n - 1)

    # angular acceleration
    if n > 2:
        al = angular_accels(b)
        T0, T1 = T[:-1], T[1:]
        w0, w1 = w[:-1], w[1:]
        mal = np.column_stack([lim.alpha_max - al, lim.alpha_max + al])
        act = math.sqrt(sig["alpha"]) * (mal < 0)
        res.append(math.sqrt(sig["alpha"]) * np.minimum(0.0, mal).ravel())
        _, _, t0 = _pose_cols(k2, n)
        _, _, t1 = _pose_cols(k2 + 1, n)
        _, _, t2 = _pose_cols(k2 + 2, n)
        dal = [
            (t0, 1.0 / T0**2),
            (t1, (-1.0 / T1 - 1.0 / T0) / T0),
            (t2, 1.0 / (T1 * T0)),
            (_dt_col(k2), w0 / T0**2 - al / T0),
            (_dt_col(k2 + 1), -w1 / (T1 * T0)),
        ]
        for j, sign in enumerate((-1.0, 1.0)):
            rows = row + 2 * k2 + j
            for cols, val in dal:
                trip.add(rows, cols, sign * act[:, j] * val)
        row += 2 * (n - 2)
    else:
        res.append(np.zeros(0))

    kp = np.arange(n)
    px, py, pt = _pose_cols(kp, n)

    # obstacle clearance
    if len(ctx.obstacles):
        d, grad = clearance_and_gradient(P, ctx.obstacles)
        mo = d - ctx.r_roi
        act = math.sqrt(sig["obstacle"]) * (mo < 0)
        res.append(math.sqrt(sig["obstacle"]) * np.minimum(0.0, mo))
        trip.add(row + kp, px, act * grad[:, 0])
        trip.add(row + kp, py, act * grad[:, 1])
        row += n
    else:
        res.append(np.zeros(0))

    # orientation toward the target
    if ctx.task is not None:
        tx, ty = ctx.task.target
        e = orientation_errors(b, ctx.task.target, ctx.convention)
        mo = ctx.task.theta_max - np.abs(e)
        act = math.sqrt(sig["orientation"]) * (mo < 0)
        res.append(math.sqrt(sig["orientation"]) * np.minimum(0.0, mo))
        dx, dy = tx - P[:, 0], ty - P[:, 1]
        r2 = dx * dx + dy * dy
        ok = r2 > 1e-18
        inv = np.where(ok, 1.0 / np.where(ok, r2, 1.0), 0.0)
        sgn = -np.sign(e) * act
        trip.add(row + kp, pt, sgn * ok)
        trip.add(row + kp, px, sgn * (-dy * inv))
        trip.add(row + kp, py, sgn * (dx * inv))
        row += n
    else:
        res.append(np.zeros(0))

    # change from the current velocity; the first pose is fixed so its heading is constant
    if ctx.start_velocity is not None:
        vs = np.asarray(ctx.start_velocity[:2])
        ws = ctx.start_velocity[2]
        T0 = T[0]
        v0 = (P[1] - P[0]) / T0
        ab0, al0 = start_accelerations(b, ctx.start_velocity)
        c, s = math.cos(th[0]), math.sin(th[0])
        gT = (vs - 2.0 * v0) / T0**2
        rT = (c * gT[0] + s * gT[1], -s * gT[0] + c * gT[1])
        q = 1.0 / T0**2
        x1, y1, t1 = (int(v) for v in _pose_cols(1, n))
        ms = _two_sided(ab0[None], lim.a_max_body).ravel()
        act = math.sqrt(sig["start_acceleration"]) * (ms < 0)
        res.append(math.sqrt(sig["start_acceleration"]) * np.minimum(0.0, ms))
        dsx = [(x1, c * q), (y1, s * q), (0, rT[0])]
        dsy = [(x1, -s * q), (y1, c * q), (0, rT[1])]
        for j, (deriv, sign) in enumerate([(dsx, -1.0), (dsx, 1.0), (dsy, -1.0), (dsy, 1.0)]):
            for col, val in deriv:
                trip.add(row + j, col, sign * act[j] * val)
        row += 4
        w0 = w[0]
        mal = np.array([lim.alpha_max - al0, lim.alpha_max + al0])
        act = math.sqrt(sig["start_alpha"]) * (mal < 0)
        res.append(math.sqrt(sig["start_alpha"]) * np.minimum(0.0, mal))
        for j, sign in enumerate((-1.0, 1.0)):
            trip.add(row + j, t1, sign * act[j] * q)
            trip.add(row + j, 0, sign * act[j] * (ws - 2.0 * w0) / T0**2)
        row += 2

    r = np.concatenate(res)
    J = trip.matrix((len(r), n_variables(n)))
    return r, J


def _fd_jacobian(b: Band, ctx: ProblemContext, h: float = 1e-6) -> sp.csr_matrix:
    x0 = pack(b)
    cols = []
    for i in range(len(x0)):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((residual_vector(_unpack_raw(xp, b), ctx) - residual_vector(_unpack_raw(xm, b), ctx)) / (2 * h))
    return sp.csr_matrix(np.column_stack(cols)) if cols else sp.csr_matrix((len(residual_vector(b, ctx)), 0))


def _unpack_raw(x, template: Band) -> Band:
    """Unpack without the dt floor check; finite differences may probe below it."""
    n = template.n
    poses = np.array(template.poses)
    if n > 2:
        k = np.arange(1, n - 1)
        cx, cy, ct = _pose_cols(k, n)
        poses[k, 0], poses[k, 1], poses[k, 2] = x[cx], x[cy], x[ct]
    b = Band.__new__(Band)
    object.__setattr__(b, "poses", poses)
    object.__setattr__(b, "dts", np.array(x[_dt_col(np.arange(n - 1))]))
    return b


def jacobian(b: Band, ctx: ProblemContext, mode: str = "analytic") -> sp.csr_matrix:
    """Sparse derivative of the residual vector with respect to the free variables."""
    if mode == "analytic":
        return _linearize(b, ctx)[1]
    if mode == "finite-difference":
        return _fd_jacobian(b, ctx)
    raise ValueError(f"unknown jacobian mode {mode!r}")


# -- solver -------------------------------------------------------------------


def _banded_lower(H: sp.spmatrix) -> np.ndarray:
    """Lower banded storage of a symmetric sparse matrix for ``solveh_banded``."""
    coo = sp.tril(H).tocoo()
    N = H.shape[0]
    bw = int((coo.row - coo.col).max()) if coo.nnz else 0
    ab = np.zeros((bw + 1, N))
    ab[coo.row - coo.col, coo.col] = coo.data
    return ab


def solve(b0: Band, ctx: ProblemContext, cfg: SolverConfig | None = None) -> tuple[Band, SolveReport]:
    """Minimize the soft objective starting from ``b0``; endpoints never move.

    Every accepted step strictly lowers the objective, so the returned band is
    never worse than ``b0``.
    """
    cfg = cfg or SolverConfig()
    f0 = objective(b0, ctx)
    if not math.isfinite(f0):
        raise SolverError("objective is not finite at the initial band")
    trace = [{"iteration": 0, "objective": f0, "damping": cfg.initial_damping, "accepted": True}]
    if n_variables(b0.n) == 0:
        return b0, SolveReport(0, f0, f0, True, Termination.NO_VARIABLES, trace)

    band, f = b0, f0
    lam = cfg.initial_damping
    x = pack(band)
    reason = Termination.MAX_ITERATIONS
    converged = False
    it = 0
    nu = cfg.damping_up
    dt_idx = _dt_col(np.arange(b0.n - 1))
    need_linearize = True
    while it < cfg.max_iterations:
        if need_linearize:
            if cfg.jacobian_mode == "analytic":
                r, J = _linearize(band, ctx)
            else:
                r, J = residual_vector(band, ctx), _fd_jacobian(band, ctx)
            g = J.T @ r
            # gradient with the components pushing intervals below the floor removed
            pg = g.copy()
            pg[dt_idx] = np.where((x[dt_idx] <= cfg.dt_min) & (g[dt_idx] > 0), 0.0, g[dt_idx])
            if np.max(np.abs(pg)) < cfg.abs_tolerance:
                reason, converged = Termination.ABSOLUTE_TOLERANCE, True
                break
            ab = _banded_lower((J.T @ J).tocsc())
            diag = ab[0].copy()
            need_linearize = False
        it += 1
        ab_d = ab.copy()
        # plain (identity) damping; scaling by diag(J^T J) stalls when the
        # interval columns dwarf the pose columns
        ab_d[0] = diag + lam
        try:
            delta = scipy.linalg.solveh_banded(ab_d, -g, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2.0
            trace.append({"iteration": it, "objective": f, "damping": lam, "accepted": False})
            if lam > _MAX_DAMPING:
                reason = Termination.SINGULAR
                break
            continue
        x_new = x + delta
        x_new[dt_idx] = np.maximum(x_new[dt_idx], cfg.dt_min)
        step = x_new - x
        trial = unpack(x_new, b0)
        f_new = objective(trial, ctx)
        # reduction predicted by the damped linear model, used to adapt the damping
        Jd = J @ step
        predicted = -(2.0 * float(g @ step) + float(Jd @ Jd))
        if math.isfinite(f_new) and f_new < f:
            rel = (f - f_new) / max(f, 1e-300)
            rho = (f - f_new) / predicted if predicted > 0 else 0.0
            band, x, f = trial, pack(trial), f_new
            lam = max(lam * max(cfg.damping_down, 1.0 - (2.0 * rho - 1.0) ** 3), 1e-15)
            nu = cfg.damping_up
            trace.append({"iteration": it, "objective": f, "damping": lam, "accepted": True})
            need_linearize = True
            if rel < cfg.rel_tolerance:
                reason, converged = Termination.RELATIVE_TOLERANCE, True
                break
        else:
            lam *= nu
            nu *= 2.0
            trace.append({"iteration": it, "objective": f, "damping": lam, "accepted": False})
            if not np.any(step):
                # the projection swallowed the whole step: nothing left to move
                reason, converged = Termination.ABSOLUTE_TOLERANCE, True
                break
            if lam > _MAX_DAMPING:
                reason, converged = Termination.DAMPING_LIMIT, True
                break
    return band, SolveReport(it, f0, f, converged, reason, trace)
