"""Polymer partition functions over layered obstacle environments.

The reference walk takes i.i.d. jumps with kernel f(k) = c1 * exp(-c2 * k**alpha)
on l1 shells, c1 normalizing the total mass to one.  The partition function
weights each n-step path by exp(beta * #obstacle sites visited); beta = -inf
kills every path that touches an obstacle (hard obstacles).

All sums run in the log domain through per-site two-pass (max, then sum)
log-sum-exp sweeps of a transfer operator whose jumps are capped at a radius
with a certified tail bound; the certificate on the returned log Z combines
the kernel truncation, the jump cap, and an arithmetic allowance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np
from scipy.special import gammaincc, gammaln, logsumexp

from .env import NEG_INFINITY, EnvSlab, RegularizedSlab
from .errors import CapacityError, ValidationError
from .fpp import PathRecord, _cost_lut, path_from_positions

_UNDERFLOW_FLOOR = -745.0
_SHELL_BUDGET = 10_000_000

FINITE_BETA = "FINITE_BETA"
HARD_OBSTACLE = "HARD_OBSTACLE"


# ---------------------------------------------------------------------------
# kernel normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Normalized jump kernel with certified truncation data.

    c1, c2, alpha -- kernel f(k) = c1 * exp(-c2 * k**alpha) on l1 shells
    cap           -- per-step jump radius used by transfer sweeps
    tail_bound    -- certified upper bound on the kernel mass beyond cap
    norm_log_err  -- certified bound on |log(c1 * full shell sum)|
    """

    c1: float
    c2: float
    alpha: float
    cap: int
    tail_bound: float
    norm_log_err: float


def _shell_term(k: int, params) -> float:
    """Kernel mass of l1 shell k without c1: (shell count) * exp(-c2 k^alpha);
    counts are 1, 2, 4k for k=0, d=1, d=2."""
    if k == 0:
        return 1.0
    count = 2.0 if params.d == 1 else 4.0 * k
    return count * math.exp(-params.c2 * k**params.alpha)


def _integral_majorant(K: float, params) -> float:
    """Upper bound on the shell sum beyond K via a monotone integral comparison.

    For d=1:  sum_{k>K} 2 e^{-c2 k^a}   <= (2/(a c2^{1/a})) Gamma(1/a) Q(1/a, c2 K^a)
    for d=2:  sum_{k>K} 4k e^{-c2 k^a}  <= (4/(a c2^{2/a})) Gamma(2/a) Q(2/a, c2 K^a)
    with Q the regularized upper incomplete gamma; valid once the summand is
    decreasing, i.e. K >= ((d-1)/(c2*a))**(1/a).
    """
    a, c2, d = params.alpha, params.c2, params.d
    s = d / a
    coeff = (2.0 * d / a) * math.exp(gammaln(s) - s * math.log(c2))
    return coeff * float(gammaincc(s, c2 * K**a))


def _monotone_from(params) -> int:
    """Smallest integer K so the shell summand is decreasing on [K, inf)."""
    if params.d == 1:
        return 1
    return max(1, int(math.ceil((1.0 / (params.c2 * params.alpha)) ** (1.0 / params.alpha))))


def _certified_tail(R: int, params) -> float:
    """Upper bound on sum_{k > R} shell_term(k): exact terms out to the
    monotone regime, then the integral majorant."""
    K = max(R, _monotone_from(params))
    exact = sum(_shell_term(k, params) for k in range(R + 1, K + 1))
    return exact + _integral_majorant(K, params)


def kernel_normalizer(params, epsilon: float = 1e-12, cap: int | None = None) -> KernelSpec:
    """Normalize the jump kernel and pick (or check) a certified jump cap.

    Shells are summed outward until the analytic tail majorant drops below
    epsilon; c1 is taken as 1 / (partial sum + majorant), which brackets the
    true normalizer from below and gives |log(c1 * full sum)| <= norm_log_err.
    The cap defaults to the smallest radius whose truncated kernel mass is
    certified below epsilon; an explicit cap must satisfy the same bound.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}", field="epsilon")
    k_min = _monotone_from(params)
    partial = 1.0
    K = 0
    majorant = math.inf
    while True:
        K += 1
        partial += _shell_term(K, params)
        if K >= k_min:
            majorant = _integral_majorant(K, params)
            if majorant < epsilon:
                break
        if K > _SHELL_BUDGET:
            raise CapacityError(
                f"kernel normalization exceeded {_SHELL_BUDGET} shells at epsilon={epsilon}",
                epsilon=epsilon,
            )
    s_hi = partial + majorant
    c1 = 1.0 / s_hi
    defect = majorant / s_hi
    norm_log_err = -math.log1p(-defect)

    if cap is None:
        R = 1
        while c1 * _certified_tail(R, params) >= epsilon:
            R += 1
            if R > _SHELL_BUDGET:
                raise CapacityError(
                    f"no certified cap below {_SHELL_BUDGET} at epsilon={epsilon}",
                    epsilon=epsilon,
                )
    else:
        R = int(cap)
        if R < 1:
            raise ValidationError(f"cap must be >= 1, got {cap}", field="cap")
    tail_bound = c1 * _certified_tail(R, params)
    if tail_bound >= epsilon:
        raise ValidationError(
            f"cap {R} leaves truncated mass {tail_bound:.3e} >= epsilon {epsilon:.3e}",
            field="cap",
        )
    return KernelSpec(
        c1=c1,
        c2=params.c2,
        alpha=params.alpha,
        cap=R,
        tail_bound=tail_bound,
        norm_log_err=norm_log_err,
    )


def default_half_width(params, n: int, kernel: KernelSpec, max_cells: int = 1 << 27) -> int:
    """Window half-width policy for polymer sweeps.

    Takes the smaller of the confinement-style width ceil(n**(M + 2*theta))
    with M = 1 + 1/alpha and the fully certified width n*cap (beyond which a
    capped walk cannot travel), then trims to the cell budget.
    """
    M = 1.0 + 1.0 / params.alpha
    ideal = int(math.ceil(n ** (M + 2.0 * params.theta)))
    certified = n * kernel.cap
    L = min(ideal, certified)
    per_layer = max_cells / n
    L_mem = int((per_layer ** (1.0 / params.d) - 1.0) // 2)
    return max(1, min(L, L_mem))


# ---------------------------------------------------------------------------
# path free energy
# ---------------------------------------------------------------------------


def path_free_energy(path: PathRecord, view: EnvSlab | RegularizedSlab, beta: float, params) -> float:
    """c2 * (path energy) - beta * (obstacle sites visited), recomputed from
    the view's bits.  Requires finite beta."""
    if not math.isfinite(beta):
        raise ValidationError("path_free_energy needs finite beta", field="beta")
    rec = path_from_positions(path.positions, view, params.alpha)
    return params.c2 * rec.energy - beta * rec.hamiltonian


# ---------------------------------------------------------------------------
# transfer sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionResult:
    """log Z with provenance.

    error_certificate bounds |computed - true| additively (true meaning the
    uncapped in-window quantity with the exact normalizer); when
    window_certified is False escaped-window mass is not covered and the
    certificate only accounts for the jump-cap tail.
    """

    log_z: float
    cap_used: int
    error_certificate: float
    mode: str
    window_certified: bool
    underflow_flagged: bool

    def to_dict(self) -> dict:
        return {
            "log_z": self.log_z,
            "cap_used": self.cap_used,
            "error_certificate": self.error_certificate,
            "mode": self.mode,
            "window_certified": self.window_certified,
            "underflow_flagged": self.underflow_flagged,
        }


def _offsets(cap: int, d: int, c2: float, alpha: float):
    """All jumps with |o|_1 <= cap and their log kernel weights (without c1)."""
    if d == 1:
        offs = [(o,) for o in range(-cap, cap + 1)]
    else:
        offs = [
            (o1, o2)
            for o1 in range(-cap, cap + 1)
            for o2 in range(-cap + abs(o1), cap - abs(o1) + 1)
        ]
    lut = _cost_lut(cap, alpha)
    return [(off, -c2 * float(lut[sum(abs(o) for o in off)])) for off in offs]


def _shift(arr: np.ndarray, off) -> np.ndarray:
    """arr translated by off, vacated cells filled with -inf."""
    out = np.full_like(arr, -np.inf)
    src = []
    dst = []
    for o, size in zip(off, arr.shape):
        if abs(o) >= size:
            return out
        if o >= 0:
            dst.append(slice(o, size))
            src.append(slice(0, size - o))
        else:
            dst.append(slice(0, size + o))
            src.append(slice(-o, size))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _sweep(slab: EnvSlab, n: int, kernel: KernelSpec, beta: float | None, hard: bool):
    """Run the transfer recursion and return (log_z, underflow_flagged).

    Per layer and per target site the contributions over all capped jumps are
    combined by a two-pass log-sum-exp: an elementwise running max, then a sum
    of exponentials shifted by that max.
    """
    if n < 1 or n > slab.n:
        raise ValidationError(f"n must lie in 1..{slab.n}, got {n}", field="n")
    pairs = _offsets(kernel.cap, slab.d, kernel.c2, kernel.alpha)
    state = np.full(slab.window_shape, -np.inf)
    origin = (slab.half_width,) * slab.d
    state[origin] = 0.0
    cache_ok = len(pairs) * state.size <= 30_000_000
    for k in range(1, n + 1):
        if cache_ok:
            shifted = [_shift(state, off) + w for off, w in pairs]
            m = shifted[0].copy()
            for sh in shifted[1:]:
                np.maximum(m, sh, out=m)
            m_safe = np.where(np.isfinite(m), m, 0.0)
            s = np.zeros_like(state)
            for sh in shifted:
                s += np.exp(sh - m_safe)
        else:
            m = np.full_like(state, -np.inf)
            for off, w in pairs:
                np.maximum(m, _shift(state, off) + w, out=m)
            m_safe = np.where(np.isfinite(m), m, 0.0)
            s = np.zeros_like(state)
            for off, w in pairs:
                s += np.exp(_shift(state, off) + w - m_safe)
        with np.errstate(divide="ignore"):
            state = np.where(np.isfinite(m), m_safe + np.log(s), -np.inf)
        bits = slab.layer(k)
        if hard:
            state = np.where(bits == 1, -np.inf, state)
        else:
            state = state + beta * bits
    log_z = float(logsumexp(state.reshape(-1)) + n * math.log(kernel.c1))
    if log_z == -math.inf:
        log_z = NEG_INFINITY
    underflow = (log_z == NEG_INFINITY) or (log_z < _UNDERFLOW_FLOOR)
    return log_z, underflow


_ARITH_PER_LAYER = 1e-13


def _certificate(kernel: KernelSpec, n: int, log_z: float, beta: float | None) -> float:
    """Additive bound on |computed log Z - true log Z| (window permitting).

    Kernel part: the approximate c1 rescales every path identically, so it
    contributes n * norm_log_err exactly.  Cap part: for beta <= 0 (obstacle
    weights never exceed one) each sweep step retains at least the fraction
    1 - tail_bound of the mass the uncapped kernel would propagate, giving
    -n*log(1 - tail_bound); for beta > 0 the per-step loss fraction picks up
    a factor e^beta and the certificate blows up to inf once that fraction
    reaches one (reported, never silently accepted).  A flat 1e-13 per layer
    covers accumulated log-sum-exp rounding.
    """
    norm = n * kernel.norm_log_err
    arith = _ARITH_PER_LAYER * n
    if log_z == NEG_INFINITY:
        return math.inf
    step_loss = kernel.tail_bound
    if beta is not None and beta > 0:
        step_loss *= math.exp(min(beta, 700.0))
    if step_loss >= 1.0:
        return math.inf
    return norm - n * math.log1p(-step_loss) + arith


def partition_function(slab: EnvSlab, n: int, params, kernel: KernelSpec) -> PartitionResult:
    """log Z for finite beta by a capped transfer sweep over the slab window."""
    if not math.isfinite(params.beta):
        raise ValidationError(
            "beta is -inf; use hard_obstacle_partition for the hard-obstacle mode",
            field="beta",
        )
    log_z, underflow = _sweep(slab, n, kernel, beta=params.beta, hard=False)
    return PartitionResult(
        log_z=log_z,
        cap_used=kernel.cap,
        error_certificate=_certificate(kernel, n, log_z, params.beta),
        mode=FINITE_BETA,
        window_certified=slab.half_width >= n * kernel.cap,
        underflow_flagged=underflow,
    )


def hard_obstacle_partition(slab: EnvSlab, n: int, params, kernel: KernelSpec) -> PartitionResult:
    """log Z restricted to obstacle-free paths (the beta -> -inf limit).

    An environment that blocks every capped in-window path yields
    log_z = -inf (reported, not an error) with an infinite certificate.
    """
    log_z, underflow = _sweep(slab, n, kernel, beta=None, hard=True)
    return PartitionResult(
        log_z=log_z,
        cap_used=kernel.cap,
        error_certificate=_certificate(kernel, n, log_z, None),
        mode=HARD_OBSTACLE,
        window_certified=slab.half_width >= n * kernel.cap,
        underflow_flagged=underflow,
    )


# ---------------------------------------------------------------------------
# limit and symmetry checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaLimitResult:
    """Residuals |log Z(beta) - log Z(hard)| along a decreasing beta list."""

    betas: tuple[float, ...]
    residuals: tuple[float, ...]
    bounds: tuple[float, ...]
    hard_log_z: float
    finite_log_z: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "betas": list(self.betas),
            "residuals": list(self.residuals),
            "bounds": list(self.bounds),
            "hard_log_z": self.hard_log_z,
            "finite_log_z": list(self.finite_log_z),
        }


def beta_limit_check(
    slab: EnvSlab, n: int, params, kernel: KernelSpec, beta_list
) -> BetaLimitResult:
    """Compare finite-beta sweeps against the hard-obstacle sweep on the same
    window and cap.

    beta_list must be finite, negative, strictly decreasing.  Each residual
    is also reported against the crude bound e^{beta - log Z_hard} plus both
    certificates.
    """
    betas = [float(b) for b in beta_list]
    if len(betas) == 0:
        raise ValidationError("beta_list is empty", field="beta_list")
    for b in betas:
        if not (math.isfinite(b) and b < 0):
            raise ValidationError(f"beta_list needs finite negatives, got {b}", field="beta_list")
    if any(b2 >= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValidationError("beta_list must be strictly decreasing", field="beta_list")
    hard = hard_obstacle_partition(slab, n, params, kernel)
    finite = []
    residuals = []
    bounds = []
    for b in betas:
        res = partition_function(slab, n, dc_replace(params, beta=b), kernel)
        finite.append(res.log_z)
        if hard.log_z == NEG_INFINITY:
            residuals.append(math.inf if res.log_z != NEG_INFINITY else 0.0)
            bounds.append(math.inf)
            continue
        residuals.append(abs(res.log_z - hard.log_z))
        exponent = b - hard.log_z
        crude = math.inf if exponent > 700.0 else math.exp(exponent)
        bounds.append(crude + res.error_certificate + hard.error_certificate)
    return BetaLimitResult(
        betas=tuple(betas),
        residuals=tuple(residuals),
        bounds=tuple(bounds),
        hard_log_z=hard.log_z,
        finite_log_z=tuple(finite),
    )


def flip_identity_check(slab: EnvSlab, n: int, params, kernel: KernelSpec) -> float:
    """Residual of the complement symmetry
    log Z(env, beta) = beta*n + log Z(1-env, -beta), both sides swept on the
    same window and cap.  Exact path-by-path, so the residual is pure
    floating-point noise."""
    if not math.isfinite(params.beta):
        raise ValidationError("flip identity needs finite beta", field="beta")
    lhs, _ = _sweep(slab, n, kernel, beta=params.beta, hard=False)
    flipped = EnvSlab(
        n=slab.n,
        half_width=slab.half_width,
        d=slab.d,
        p=1.0 - slab.p,
        bits=(1 - slab.bits).astype(np.uint8),
        master_seed=slab.master_seed,
        layer_seeds=slab.layer_seeds,
    )
    rhs_sweep, _ = _sweep(flipped, n, kernel, beta=-params.beta, hard=False)
    rhs = params.beta * n + rhs_sweep
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# enumeration oracle
# ---------------------------------------------------------------------------


def brute_force_partition(
    slab: EnvSlab,
    n: int,
    jump_cap: int,
    params,
    kernel: KernelSpec,
    beta: float | None = None,
    energy_cap: float | None = None,
    max_paths: int = 2_000_000,
) -> float:
    """log Z by enumerating every in-window path with jumps <= jump_cap.

    beta defaults to params.beta; -inf restricts to obstacle-free paths.
    energy_cap, when given, further restricts to paths whose total jump cost
    is <= energy_cap (the restricted partition function).  The feasible set
    is exactly the one a transfer sweep with the same window and cap explores.
    """
    if n < 1 or n > slab.n:
        raise ValidationError(f"n must lie in 1..{slab.n}, got {n}", field="n")
    if beta is None:
        beta = params.beta
    L = slab.half_width
    width = 2 * L + 1
    cells_per_layer = width**slab.d
    total = cells_per_layer**n
    if total > max_paths:
        raise CapacityError(
            f"enumeration of {total} paths exceeds the budget of {max_paths}",
            max_paths=max_paths,
        )
    axis = np.arange(-L, L + 1)
    if slab.d == 1:
        cells = axis[:, None]
    else:
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        cells = np.stack([g1.reshape(-1), g2.reshape(-1)], axis=1)
    grids = np.meshgrid(*[np.arange(cells_per_layer)] * n, indexing="ij")
    choice = np.stack([g.reshape(-1) for g in grids], axis=1)
    pos = np.empty((total, n + 1, slab.d), dtype=np.int64)
    pos[:, 0, :] = 0
    for j in range(n):
        pos[:, j + 1, :] = cells[choice[:, j]]
    jumps = np.abs(np.diff(pos, axis=1)).sum(axis=2)
    keep = (jumps <= jump_cap).all(axis=1)
    lut = _cost_lut(int(jumps.max()) if total else 0, params.alpha)
    energy = lut[jumps].sum(axis=1)
    if energy_cap is not None:
        keep &= energy <= energy_cap
    idx = pos[:, 1:, :] + L
    layer_idx = np.broadcast_to(np.arange(n), (total, n))
    eta = slab.bits[(layer_idx,) + tuple(np.moveaxis(idx, 2, 0))]
    ham = eta.sum(axis=1)
    if beta == NEG_INFINITY:
        keep &= ham == 0
        if not keep.any():
            return NEG_INFINITY
        logw = -params.c2 * energy[keep]
    else:
        if not keep.any():
            return NEG_INFINITY
        logw = -params.c2 * energy[keep] + beta * ham[keep]
    return float(logsumexp(logw) + n * math.log(kernel.c1))
