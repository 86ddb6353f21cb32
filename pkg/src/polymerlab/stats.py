"""Replica ensembles and concentration diagnostics.

run_ensemble drives seeded batches of passage-time and partition-function
computations; the remaining functions reduce the resulting raw table to
estimates (time constant, free energy), concentration reports (standard
deviations against n**(1/2+delta) bands, log-sd slope fits), superadditivity
and continuity diagnostics, and high-density trend tables.

Replica r at size n always uses seed hash64(master_seed, n, r), so results
are reproducible row by row regardless of the parallel schedule.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import __version__ as _pkg_version
from .env import NEG_INFINITY, ModelParams, generate_slab, hash64
from .errors import CapacityError, InfeasibleLayerError, PolymerlabError, ValidationError
from .tables import parse_bool, parse_float, parse_int, read_table, write_table
from .fpp import continuation_cost, face_to_face, passage_time
from .polymer import (
    default_half_width,
    hard_obstacle_partition,
    kernel_normalizer,
    partition_function,
)

FPP = "FPP"
POLYMER = "POLYMER"

RAW_COLUMNS = [
    "target",
    "n",
    "replica",
    "seed",
    "ok",
    "value",
    "scaled_value",
    "max_jump",
    "exact",
    "certificate",
    "error",
]


# ---------------------------------------------------------------------------
# ensemble specification and raw table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """What to run: sizes, replica count, master seed, and targets."""

    params: object
    n_list: tuple[int, ...]
    replicas: int
    master_seed: int
    targets: tuple[str, ...] = (FPP,)

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        object.__setattr__(self, "n_list", n_list)
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(n_list) == 0:
            raise ValidationError("n_list is empty", field="n_list")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ValidationError("n_list must be strictly increasing", field="n_list")
        if n_list[0] < 1:
            raise ValidationError("sizes must be >= 1", field="n_list")
        if self.replicas < 2:
            raise ValidationError(
                f"need at least 2 replicas, got {self.replicas}", field="replicas"
            )
        bad = [t for t in self.targets if t not in (FPP, POLYMER)]
        if bad:
            raise ValidationError(f"unknown targets {bad}", field="targets")
        if not self.targets:
            raise ValidationError("targets is empty", field="targets")

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {
                "d": p.d,
                "alpha": p.alpha,
                "c2": p.c2,
                "p": p.p,
                "beta": "-inf" if p.beta == NEG_INFINITY else p.beta,
                "theta": p.theta,
                "zeta": p.zeta,
            },
            "n_list": list(self.n_list),
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "targets": list(self.targets),
        }


@dataclass
class RawTable:
    """Rows of per-replica results plus the spec that produced them."""

    spec: EnsembleSpec
    rows: list[dict]
    version: str = _pkg_version

    def meta(self) -> dict:
        return {
            "polymerlab_version": self.version,
            "spec": json.dumps(self.spec.to_dict(), sort_keys=True, separators=(",", ":")),
        }

    def select(self, target: str, n: int | None = None, ok_only: bool = True):
        out = []
        for r in self.rows:
            if r["target"] != target:
                continue
            if n is not None and r["n"] != n:
                continue
            if ok_only and not r["ok"]:
                continue
            out.append(r)
        return out


def fpp_half_width(params, n: int) -> int:
    """Initial window half-width for raw passage-time runs.

    Sized from the random-walk spread of nearest-site hops (which grows with
    p through the mean gap p/(1-p)); the ensemble doubles it on certificate
    failure, so this only needs to be right most of the time.
    """
    gap = params.p / (1.0 - params.p)
    return 24 + int(math.ceil(6.0 * math.sqrt(n) * (1.0 + gap)))


_MAX_WINDOW_DOUBLINGS = 3


def _fpp_row(params, n: int, replica: int, seed: int, half_width0: int, max_cells: int) -> dict:
    row = {
        "target": FPP,
        "n": n,
        "replica": replica,
        "seed": seed,
        "ok": False,
        "value": None,
        "scaled_value": None,
        "max_jump": None,
        "exact": None,
        "certificate": None,
        "error": "",
    }
    L = half_width0
    last_error = ""
    for attempt in range(_MAX_WINDOW_DOUBLINGS + 1):
        try:
            slab = generate_slab(params, n, L, seed, max_cells=max_cells)
            res = passage_time(slab, n, params)
        except InfeasibleLayerError as exc:
            last_error = f"infeasible_layer:{exc.layer}"
            L *= 2
            continue
        except CapacityError:
            last_error = "capacity"
            break
        if res.exact or attempt == _MAX_WINDOW_DOUBLINGS:
            row.update(
                ok=True,
                value=res.value,
                scaled_value=res.scaled_value,
                max_jump=res.path.max_jump,
                exact=res.exact,
                error="",
            )
            return row
        L *= 2
    row["error"] = last_error or "window"
    return row


def _polymer_row(params, n: int, replica: int, seed: int, kernel, max_cells: int) -> dict:
    row = {
        "target": POLYMER,
        "n": n,
        "replica": replica,
        "seed": seed,
        "ok": False,
        "value": None,
        "scaled_value": None,
        "max_jump": None,
        "exact": None,
        "certificate": None,
        "error": "",
    }
    L = default_half_width(params, n, kernel, max_cells=max_cells)
    try:
        slab = generate_slab(params, n, L, seed, max_cells=max_cells)
        if params.hard_obstacle:
            res = hard_obstacle_partition(slab, n, params, kernel)
        else:
            res = partition_function(slab, n, params, kernel)
    except CapacityError:
        row["error"] = "capacity"
        return row
    row.update(
        ok=True,
        value=res.log_z,
        certificate=res.error_certificate,
        exact=res.window_certified,
    )
    return row


def _job(args) -> dict:
    kind, params, n, replica, seed, extra, max_cells = args
    if kind == FPP:
        return _fpp_row(params, n, replica, seed, extra, max_cells)
    return _polymer_row(params, n, replica, seed, extra, max_cells)


def run_ensemble(
    spec: EnsembleSpec,
    n_jobs: int = 1,
    kernel_epsilon: float = 1e-12,
    max_cells: int = 1 << 27,
) -> RawTable:
    """Run every (target, n, replica) cell of the spec.

    Failures (blocked layers, capacity) are recorded per replica in the
    ``error`` column rather than aborting the run.  The output is identical
    for any n_jobs.
    """
    params = spec.params
    kernel = None
    if POLYMER in spec.targets:
        kernel = kernel_normalizer(params, kernel_epsilon)
    jobs = []
    for target in spec.targets:
        for n in spec.n_list:
            extra = fpp_half_width(params, n) if target == FPP else kernel
            for r in range(spec.replicas):
                seed = hash64(spec.master_seed, n, r)
                jobs.append((target, params, n, r, seed, extra, max_cells))
    if n_jobs <= 1:
        rows = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_job, jobs, chunksize=4))
    table = RawTable(spec=spec, rows=rows)
    for target in spec.targets:
        for n in spec.n_list:
            if not any(r["ok"] for r in table.select(target, n, ok_only=False)):
                errs = {r["error"] for r in table.select(target, n, ok_only=False)}
                raise PolymerlabError(
                    f"every replica failed at target={target}, n={n}",
                    target=target,
                    n=n,
                    errors=sorted(errs),
                )
    return table


# ---------------------------------------------------------------------------
# point estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantEstimate:
    """A per-size estimate with its sampling error and rate allowance
    n**(chi-1) for the configured convergence exponent chi."""

    value: float
    stderr: float
    n: int
    rate_margin: float


def _scaled_fpp_values(table: RawTable, n_star: int) -> np.ndarray:
    rows = table.select(FPP, n_star)
    p = table.spec.params.p
    if 0.0 < p < 1.0:
        vals = [r["scaled_value"] for r in rows]
    else:
        vals = [r["value"] for r in rows]
    return np.asarray([v for v in vals if v is not None], dtype=float)


def estimate_time_constant(table: RawTable, n_star: int, chi: float = 0.6) -> ConstantEstimate:
    """Mean scaled passage time per layer at size n_star."""
    vals = _scaled_fpp_values(table, n_star)
    if len(vals) < 2:
        raise ValidationError(
            f"need at least 2 usable replicas at n={n_star}, got {len(vals)}"
        )
    mu = float(vals.mean()) / n_star
    sd = float(vals.std(ddof=1))
    return ConstantEstimate(
        value=mu,
        stderr=sd / (math.sqrt(len(vals)) * n_star),
        n=n_star,
        rate_margin=n_star ** (chi - 1.0),
    )


def estimate_free_energy(
    table: RawTable, n_star: int, beta: float, chi: float = 0.6
) -> ConstantEstimate:
    """Mean log partition function per layer at size n_star.

    beta must match the spec the table was generated under; replicas with
    log Z = -inf (fully blocked) are excluded.
    """
    spec_beta = table.spec.params.beta
    if not (beta == spec_beta or (math.isinf(beta) and math.isinf(spec_beta))):
        raise ValidationError(
            f"table was generated at beta={spec_beta}, asked for beta={beta}", field="beta"
        )
    rows = table.select(POLYMER, n_star)
    vals = np.asarray(
        [r["value"] for r in rows if r["value"] is not None and math.isfinite(r["value"])],
        dtype=float,
    )
    if len(vals) < 2:
        raise ValidationError(
            f"need at least 2 finite replicas at n={n_star}, got {len(vals)}"
        )
    phi = float(vals.mean()) / n_star
    sd = float(vals.std(ddof=1))
    return ConstantEstimate(
        value=phi,
        stderr=sd / (math.sqrt(len(vals)) * n_star),
        n=n_star,
        rate_margin=n_star ** (chi - 1.0),
    )


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares slope of log sd against log n with a 95% interval."""

    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    points: int


def fit_log_slope(ns, sds) -> SlopeFit:
    """Fit log(sd) = a + slope * log(n) by least squares.

    Entries with sd <= 0 must be filtered by the caller; at least three
    points are required so the residual error is estimable.
    """
    ns = np.asarray(ns, dtype=float)
    sds = np.asarray(sds, dtype=float)
    if len(ns) < 3:
        raise ValidationError(f"need >= 3 sizes for a slope fit, got {len(ns)}")
    if (sds <= 0).any():
        raise ValidationError("sd values must be positive for the log fit")
    x = np.log(ns)
    y = np.log(sds)
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    s2 = float((resid**2).sum()) / (len(ns) - 2)
    se = math.sqrt(s2 / sxx)
    return SlopeFit(
        slope=slope,
        stderr=se,
        ci_low=slope - 1.96 * se,
        ci_high=slope + 1.96 * se,
        points=len(ns),
    )


@dataclass(frozen=True)
class ConcentrationReport:
    """Per-size spread diagnostics for each target.

    rows: per (target, n) count/mean/sd and the frequency of deviations
    beyond n**(1/2+delta).  slopes: per-target log-sd slope fit (None when
    fewer than three non-degenerate sizes).  max_jump_rows: per-n jump
    quantiles and the fraction of replicas with max jump within n**zeta.
    sensitivity_rows: resampling maxima against their 4 n**(zeta*alpha)
    bounds, when supplied.  degenerate lists (target, n) cells whose sd
    vanished (excluded from slope fits).
    """

    delta: float
    zeta: float
    rows: tuple[dict, ...]
    slopes: dict
    max_jump_rows: tuple[dict, ...]
    sensitivity_rows: tuple[dict, ...]
    degenerate: tuple[tuple[str, int], ...]


def concentration_scan(
    table: RawTable, delta: float, zeta: float, sensitivity=None
) -> ConcentrationReport:
    """Reduce a raw table to concentration diagnostics.

    Deviation frequencies use the unscaled per-replica statistic (passage
    time, or log Z) against the band n**(1/2+delta) around the empirical
    mean.
    """
    if not (0.0 < delta < 0.5):
        raise ValidationError(f"delta must lie in (0, 0.5), got {delta}", field="delta")
    rows = []
    degenerate = []
    slopes = {}
    for target in table.spec.targets:
        per_n = []
        for n in table.spec.n_list:
            all_rows = table.select(target, n, ok_only=False)
            if target == FPP:
                vals = np.asarray(
                    [r["value"] for r in table.select(FPP, n) if r["value"] is not None],
                    dtype=float,
                )
            else:
                vals = np.asarray(
                    [
                        r["value"]
                        for r in table.select(POLYMER, n)
                        if r["value"] is not None and math.isfinite(r["value"])
                    ],
                    dtype=float,
                )
            if len(vals) < 2:
                continue
            mean = float(vals.mean())
            sd = float(vals.std(ddof=1))
            band = n ** (0.5 + delta)
            tail = float((np.abs(vals - mean) > band).mean())
            rows.append(
                {
                    "target": target,
                    "n": n,
                    "count": len(vals),
                    "excluded": len(all_rows) - len(vals),
                    "mean": mean,
                    "sd": sd,
                    "tail_freq": tail,
                }
            )
            if sd > 0:
                per_n.append((n, sd))
            else:
                degenerate.append((target, n))
        if len(per_n) >= 3:
            slopes[target] = fit_log_slope([a for a, _ in per_n], [b for _, b in per_n])
        else:
            slopes[target] = None
    mj_rows = []
    for n in table.spec.n_list:
        jumps = np.asarray(
            [r["max_jump"] for r in table.select(FPP, n) if r["max_jump"] is not None],
            dtype=float,
        )
        if len(jumps) == 0:
            continue
        band = n**zeta
        mj_rows.append(
            {
                "n": n,
                "count": len(jumps),
                "q50": float(np.quantile(jumps, 0.5)),
                "q90": float(np.quantile(jumps, 0.9)),
                "q100": float(jumps.max()),
                "fraction_within_band": float((jumps <= band).mean()),
            }
        )
    sens_rows = []
    for s in sensitivity or ():
        sens_rows.append({"layer": s.layer, "max_abs": s.max_abs, "bound": s.bound})
    return ConcentrationReport(
        delta=delta,
        zeta=zeta,
        rows=tuple(rows),
        slopes=slopes,
        max_jump_rows=tuple(mj_rows),
        sensitivity_rows=tuple(sens_rows),
        degenerate=tuple(degenerate),
    )


def max_jump_scan(table: RawTable, zeta: float) -> list[dict]:
    """Per-size fraction of replicas whose largest jump stays within n**zeta."""
    out = []
    for n in table.spec.n_list:
        jumps = [r["max_jump"] for r in table.select(FPP, n) if r["max_jump"] is not None]
        if not jumps:
            continue
        arr = np.asarray(jumps, dtype=float)
        out.append(
            {
                "n": n,
                "count": len(arr),
                "band": float(n**zeta),
                "fraction": float((arr <= n**zeta).mean()),
            }
        )
    return out


# ---------------------------------------------------------------------------
# superadditivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuperadditivityReport:
    """Gaps T_{2n} - T_n - (face-to-face cost over the second half).

    Whenever the optimal 2n-path passes through the free-start box at layer n
    (midpoint_in_box), its two halves dominate T_n and the face-to-face value
    separately, so the gap is nonnegative as exact arithmetic; gaps can only
    turn negative for replicas whose midpoint escapes the box, and that
    correction is what box_half_width bounds.  The gluing direction compares
    T_{2n} against T_n plus the continuation cost from the short path's
    endpoint, again path by path.
    """

    n: int
    box_half_width: int
    replicas_used: int
    infeasible: int
    gaps: tuple[float, ...]
    midpoint_in_box: tuple[bool, ...]
    negative_gaps: int
    glue_violations: int
    mean_t2n: float
    mean_tn: float
    c_fit: float


def superadditivity_check(
    params,
    n: int,
    replicas: int,
    seed: int,
    chi: float = 0.6,
    half_width: int | None = None,
    max_cells: int = 1 << 27,
) -> SuperadditivityReport:
    """Compare T_{2n} against T_n plus a free-start continuation on shared
    slabs of 2n layers.

    The free-start box has half-width n**(1 + 1/alpha) (clipped to the
    window); replica r draws the slab from hash64(seed, 2n, r).
    """
    if replicas < 2:
        raise ValidationError(f"need >= 2 replicas, got {replicas}", field="replicas")
    L = half_width or fpp_half_width(params, 2 * n)
    box = min(int(math.ceil(n ** (1.0 + 1.0 / params.alpha))), L)
    gaps = []
    in_box = []
    t2ns = []
    tns = []
    neg = 0
    glue_bad = 0
    infeasible = 0
    for r in range(replicas):
        ms = hash64(seed, 2 * n, r)
        slab = generate_slab(params, 2 * n, L, ms, max_cells=max_cells)
        try:
            long = passage_time(slab, 2 * n, params)
            short = passage_time(slab, n, params)
            phi = face_to_face(slab, n, 2 * n, box, params)
            cont = continuation_cost(slab, n, 2 * n, short.path.positions[n], params)
        except InfeasibleLayerError:
            infeasible += 1
            continue
        gap = long.value - short.value - phi
        gaps.append(gap)
        in_box.append(bool((np.abs(long.path.positions[n]) < box).all()))
        t2ns.append(long.value)
        tns.append(short.value)
        if gap < -1e-9 * (1.0 + abs(long.value)):
            neg += 1
        if long.value > short.value + cont + 1e-9 * (1.0 + abs(long.value)):
            glue_bad += 1
    if len(gaps) < 2:
        raise ValidationError(f"only {len(gaps)} feasible replicas out of {replicas}")
    mean_t2n = float(np.mean(t2ns))
    mean_tn = float(np.mean(tns))
    return SuperadditivityReport(
        n=n,
        box_half_width=box,
        replicas_used=len(gaps),
        infeasible=infeasible,
        gaps=tuple(float(g) for g in gaps),
        midpoint_in_box=tuple(in_box),
        negative_gaps=neg,
        glue_violations=glue_bad,
        mean_t2n=mean_t2n,
        mean_tn=mean_tn,
        c_fit=(2.0 * mean_tn - mean_t2n) / n**chi,
    )


# ---------------------------------------------------------------------------
# continuity scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuityCurve:
    """Estimates along a parameter grid under a shared master seed.

    jump_ok[i] compares |estimate[i+1] - estimate[i]| against three combined
    standard errors; with coupled seeds the sampling noise largely cancels,
    so this tracks the genuine parameter dependence.
    """

    kind: str
    grid: tuple[float, ...]
    estimates: tuple[float, ...]
    stderrs: tuple[float, ...]
    counts: tuple[int, ...]
    jump_ok: tuple[bool, ...]


def continuity_scan(
    params,
    grid,
    n: int,
    replicas: int,
    kind: str,
    master_seed: int,
    chi: float = 0.6,
    n_jobs: int = 1,
    kernel_epsilon: float = 1e-12,
    max_cells: int = 1 << 27,
) -> ContinuityCurve:
    """Scan p (time constant) or beta (free energy) with coupled seeds.

    Every grid point reuses the same master seed, so for kind="p" the slabs
    are monotone-coupled cell by cell and for kind="beta" they are identical.
    """
    if kind not in ("p", "beta"):
        raise ValidationError(f"kind must be 'p' or 'beta', got {kind}", field="kind")
    grid = [float(g) for g in grid]
    if len(grid) < 2:
        raise ValidationError("grid needs at least 2 points", field="grid")
    estimates = []
    stderrs = []
    counts = []
    target = FPP if kind == "p" else POLYMER
    for g in grid:
        if kind == "p":
            pg = dc_replace(params, p=g)
        else:
            pg = dc_replace(params, beta=g)
        spec = EnsembleSpec(
            params=pg, n_list=(n,), replicas=replicas, master_seed=master_seed, targets=(target,)
        )
        table = run_ensemble(
            spec, n_jobs=n_jobs, kernel_epsilon=kernel_epsilon, max_cells=max_cells
        )
        if kind == "p" and g == 0.0:
            # every site is open, so all passage times vanish identically
            vals = np.asarray(
                [r["value"] for r in table.select(FPP, n) if r["value"] is not None]
            )
            estimates.append(float(vals.mean()) / n)
            stderrs.append(float(vals.std(ddof=1)) / (math.sqrt(len(vals)) * n))
            counts.append(len(vals))
            continue
        if kind == "p":
            est = estimate_time_constant(table, n, chi=chi)
        else:
            est = estimate_free_energy(table, n, beta=g, chi=chi)
        estimates.append(est.value)
        stderrs.append(est.stderr)
        counts.append(len(table.select(target, n)))
    jump_ok = []
    for i in range(len(grid) - 1):
        combined = math.sqrt(stderrs[i] ** 2 + stderrs[i + 1] ** 2)
        jump_ok.append(abs(estimates[i + 1] - estimates[i]) <= 3.0 * combined)
    return ContinuityCurve(
        kind=kind,
        grid=tuple(grid),
        estimates=tuple(estimates),
        stderrs=tuple(stderrs),
        counts=tuple(counts),
        jump_ok=tuple(jump_ok),
    )


# ---------------------------------------------------------------------------
# high-density trend
# ---------------------------------------------------------------------------


def hd_rescale(p_list, phi_list, alpha: float, d: int):
    """Rescale hard-obstacle free energies by (1-p)**(alpha/d).

    Returns (rescaled values, successive log-log slopes).  The slope between
    consecutive points is d log|rescaled| / d log(1-p); it tends to zero when
    phi follows the (1-p)**(-alpha/d) blow-up.
    """
    if alpha <= 0 or d < 1:
        raise ValidationError(
            f"rescaling exponent alpha/d must be positive, got alpha={alpha}, d={d}"
        )
    p = np.asarray(p_list, dtype=float)
    phi = np.asarray(phi_list, dtype=float)
    if (p <= 0).any() or (p >= 1).any():
        raise ValidationError("p values must lie in (0, 1)", field="p_list")
    rescaled = phi * (1.0 - p) ** (alpha / d)
    slopes = []
    for i in range(len(p) - 1):
        num = math.log(abs(rescaled[i + 1])) - math.log(abs(rescaled[i]))
        den = math.log(1.0 - p[i + 1]) - math.log(1.0 - p[i])
        slopes.append(num / den)
    return rescaled, slopes


@dataclass(frozen=True)
class HdTrendReport:
    """Hard-obstacle free energies near p = 1 and their rescaled values."""

    p_list: tuple[float, ...]
    phi: tuple[float, ...]
    stderr: tuple[float, ...]
    counts: tuple[int, ...]
    infeasible: tuple[int, ...]
    rescaled: tuple[float, ...]
    log_slopes: tuple[float, ...]
    flattening: bool


def hd_trend_check(
    params,
    p_list,
    n: int,
    replicas: int,
    master_seed: int,
    kernel_epsilon: float = 1e-12,
    n_jobs: int = 1,
    max_cells: int = 1 << 27,
) -> HdTrendReport:
    """Hard-obstacle ensembles along a density grid approaching 1.

    Replicas whose window admits no obstacle-free capped path come back as
    -inf and are counted per point instead of failing the scan.
    """
    ps = [float(p) for p in p_list]
    if any(not (0.0 < p < 1.0) for p in ps):
        raise ValidationError("p_list must lie inside (0, 1)", field="p_list")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValidationError("p_list must be strictly increasing", field="p_list")
    phis = []
    ses = []
    counts = []
    infeas = []
    for p in ps:
        pg = dc_replace(params, p=p, beta=NEG_INFINITY)
        spec = EnsembleSpec(
            params=pg, n_list=(n,), replicas=replicas, master_seed=master_seed, targets=(POLYMER,)
        )
        table = run_ensemble(spec, n_jobs=n_jobs, kernel_epsilon=kernel_epsilon, max_cells=max_cells)
        rows = table.select(POLYMER, n)
        finite = [r["value"] for r in rows if r["value"] is not None and math.isfinite(r["value"])]
        infeas.append(len(rows) - len(finite))
        if len(finite) < 2:
            raise ValidationError(
                f"p={p}: only {len(finite)} feasible replicas; enlarge the cap or window"
            )
        arr = np.asarray(finite, dtype=float)
        phis.append(float(arr.mean()) / n)
        ses.append(float(arr.std(ddof=1)) / (math.sqrt(len(arr)) * n))
        counts.append(len(arr))
    rescaled, slopes = hd_rescale(ps, phis, params.alpha, params.d)
    flattening = bool(len(slopes) >= 2 and abs(slopes[-1]) <= abs(slopes[0]))
    return HdTrendReport(
        p_list=tuple(ps),
        phi=tuple(phis),
        stderr=tuple(ses),
        counts=tuple(counts),
        infeasible=tuple(infeas),
        rescaled=tuple(float(r) for r in rescaled),
        log_slopes=tuple(slopes),
        flattening=flattening,
    )


# ---------------------------------------------------------------------------
# raw-table persistence
# ---------------------------------------------------------------------------


def write_raw_table(path, table: RawTable, extra_meta: dict | None = None) -> None:
    """Persist a raw table as CSV; the spec travels in the preamble."""
    meta = table.meta()
    if extra_meta:
        clash = sorted(set(meta) & set(extra_meta))
        if clash:
            raise ValidationError(f"extra_meta would shadow {clash}")
        meta.update(extra_meta)
    write_table(path, RAW_COLUMNS, table.rows, meta)


def spec_from_dict(payload: dict) -> EnsembleSpec:
    """Rebuild an EnsembleSpec from its to_dict() form (JSON round trip)."""
    prm = payload["params"]
    beta = prm["beta"]
    if beta == "-inf":
        beta = NEG_INFINITY
    params = ModelParams(
        d=int(prm["d"]),
        alpha=float(prm["alpha"]),
        c2=float(prm["c2"]),
        p=float(prm["p"]),
        beta=float(beta),
        theta=float(prm["theta"]),
        zeta=float(prm["zeta"]),
    )
    return EnsembleSpec(
        params=params,
        n_list=tuple(int(n) for n in payload["n_list"]),
        replicas=int(payload["replicas"]),
        master_seed=int(payload["master_seed"]),
        targets=tuple(payload["targets"]),
    )


def read_raw_table(path) -> RawTable:
    """Inverse of :func:`write_raw_table`; cells are re-typed on the way in."""
    meta, columns, text_rows = read_table(path)
    if "spec" not in meta:
        raise ValidationError(f"{path}: preamble has no spec entry")
    missing = [c for c in RAW_COLUMNS if c not in columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")
    spec = spec_from_dict(json.loads(meta["spec"]))
    rows = []
    for r in text_rows:
        rows.append(
            {
                "target": r["target"],
                "n": parse_int(r["n"]),
                "replica": parse_int(r["replica"]),
                "seed": parse_int(r["seed"]),
                "ok": parse_bool(r["ok"]),
                "value": parse_float(r["value"]),
                "scaled_value": parse_float(r["scaled_value"]),
                "max_jump": parse_int(r["max_jump"]),
                "exact": parse_bool(r["exact"]),
                "certificate": parse_float(r["certificate"]),
                "error": r["error"],
            }
        )
    return RawTable(spec=spec, rows=rows, version=meta.get("polymerlab_version", _pkg_version))
