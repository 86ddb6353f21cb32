"""First-passage times through layered obstacle environments.

A path visits one admissible site per layer, starting from the origin, and
pays ``|jump|_1 ** alpha`` per step.  The passage time is the minimum total
cost.  Jumps are unbounded, so the exact minimum over the infinite lattice is
approached through a window DP plus a certificate: an upper bound UB from an
explicit path makes every state with prefix cost above UB prunable, and when
no retained state can reach the window boundary within the jump radius
implied by UB the window restriction is provably not binding.

The DP runs forward for values and certificates and backward over the
retained states to extract the optimal path with deterministic tie-breaking
(lexicographically smallest position sequence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import (
    EnvSlab,
    RegularizedSlab,
    hash64,
    layer_points,
    regularize,
    resample_layer,
    scale_factor,
)
from .errors import CapacityError, InfeasibleLayerError, PolymerlabError, ValidationError

_PILOT_BAND = 12


def _cost_lut(max_dist: int, alpha: float) -> np.ndarray:
    """Jump cost table lut[j] = j**alpha for j = 0..max_dist."""
    j = np.arange(max_dist + 1, dtype=np.float64)
    if alpha == 1.0:
        return j
    if alpha == 2.0:
        return j * j
    return j**alpha


def _lex_min(points: np.ndarray) -> np.ndarray:
    """Lexicographically smallest row of an (m, d) array."""
    order = np.lexsort(points.T[::-1])
    return points[order[0]]


def _l1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise l1 distances between (m, d) and (k, d) int arrays."""
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)


# ---------------------------------------------------------------------------
# path record
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathRecord:
    """A layered path: positions at layers 0..n plus derived quantities.

    positions   -- (n+1, d) int array, row k is the position at layer k
    jumps       -- (n,) int array of l1 jump lengths
    energy      -- sum of jumps**alpha
    hamiltonian -- number of visited obstacle sites (layers 1..n)
    max_jump    -- largest entry of jumps (0 for the lazy path)
    """

    positions: np.ndarray
    jumps: np.ndarray
    energy: float
    hamiltonian: int
    max_jump: int

    def __post_init__(self):
        self.positions.flags.writeable = False
        self.jumps.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.jumps)

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "jumps": self.jumps.tolist(),
            "energy": self.energy,
            "hamiltonian": self.hamiltonian,
            "max_jump": self.max_jump,
        }


def path_from_positions(
    positions: np.ndarray, view: EnvSlab | RegularizedSlab, alpha: float
) -> PathRecord:
    """Build a PathRecord by recomputing jumps, energy, and obstacle count."""
    positions = np.asarray(positions, dtype=np.int64)
    if positions.ndim == 1:
        positions = positions[:, None]
    base = view.base if isinstance(view, RegularizedSlab) else view
    jumps = np.abs(np.diff(positions, axis=0)).sum(axis=1)
    if len(jumps) == 0:
        raise ValidationError("a path needs at least one layer")
    energy = float(np.sum(_cost_lut(int(jumps.max()), alpha)[jumps]))
    idx = positions[1:] + base.half_width
    ham = int(base.bits[(np.arange(len(jumps)),) + tuple(idx.T)].sum())
    return PathRecord(
        positions=positions,
        jumps=jumps,
        energy=energy,
        hamiltonian=ham,
        max_jump=int(jumps.max()),
    )


def max_jump(path: PathRecord) -> int:
    """Largest single-step l1 jump of a path."""
    return int(path.jumps.max()) if len(path.jumps) else 0


def jump_histogram(path: PathRecord) -> dict[int, int]:
    """Histogram {jump length: count} over the path's steps."""
    vals, counts = np.unique(path.jumps, return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, counts)}


# ---------------------------------------------------------------------------
# passage result
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PassageResult:
    """Outcome of a passage-time computation.

    exact is True only when the window restriction is certified non-binding:
    no retained DP state touched the boundary shell, and every retained state
    kept the UB-implied jump radius fully inside the window.
    frontier_stats counts retained states per layer after pruning.
    """

    value: float
    scaled_value: float | None
    path: PathRecord
    exact: bool
    frontier_stats: tuple[int, ...]
    upper_bound_used: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "scaled_value": self.scaled_value,
            "path": self.path.to_dict(),
            "exact": self.exact,
            "frontier_stats": list(self.frontier_stats),
            "upper_bound_used": self.upper_bound_used,
        }


# ---------------------------------------------------------------------------
# greedy upper bound
# ---------------------------------------------------------------------------


def greedy_upper_bound(
    view: EnvSlab | RegularizedSlab, n: int, params
) -> tuple[float, PathRecord]:
    """Cost of the nearest-site path: from each position, hop to the closest
    admissible site of the next layer (l1; ties to the lexicographically
    smallest).  Any such path cost is a valid upper bound for the DP.
    """
    layers = _admissible_layers(view, n)
    y = np.zeros(view.d, dtype=np.int64)
    positions = [y]
    for pts in layers:
        dist = np.abs(pts - y).sum(axis=1)
        best = dist.min()
        y = _lex_min(pts[dist == best])
        positions.append(y)
    rec = path_from_positions(np.stack(positions), view, params.alpha)
    return rec.energy, rec


def _admissible_layers(view, n: int) -> list[np.ndarray]:
    if n < 1 or n > view.n:
        raise ValidationError(f"n must lie in 1..{view.n}, got {n}", field="n")
    layers = []
    for k in range(1, n + 1):
        pts = layer_points(view, k)
        if len(pts) == 0:
            raise InfeasibleLayerError(k)
        layers.append(pts)
    return layers


# ---------------------------------------------------------------------------
# forward / backward DP over retained states
# ---------------------------------------------------------------------------

_CHUNK = 8192


def _forward(layers, init_pos, init_cost, ub_guard, lut, alpha):
    """Layered min-cost DP keeping only states with prefix cost <= ub_guard.

    Returns (retained, max_abs_coord) where retained is a list over layers
    0..len(layers) of (positions, costs) pairs, layer 0 being the pruned
    initial states.
    """
    keep0 = init_cost <= ub_guard
    if not keep0.any():
        raise PolymerlabError("upper bound prunes every initial state (internal)")
    pos = init_pos[keep0]
    cost = init_cost[keep0]
    retained = [(pos, cost)]
    max_abs = int(np.abs(pos).max()) if len(pos) else 0
    inv_alpha = 1.0 / alpha
    for k, cand in enumerate(layers, start=1):
        slack = ub_guard - cost.min()
        r = int(math.ceil(max(slack, 0.0) ** inv_alpha))
        lo = pos.min(axis=0) - r
        hi = pos.max(axis=0) + r
        mask = np.logical_and(cand >= lo, cand <= hi).all(axis=1)
        sub = cand[mask] if mask.any() else cand
        new_cost = np.full(len(sub), np.inf)
        for start in range(0, len(sub), _CHUNK):
            block = sub[start : start + _CHUNK]
            tot = cost[:, None] + lut[_l1(pos, block)]
            new_cost[start : start + len(block)] = tot.min(axis=0)
        keep = new_cost <= ub_guard
        if not keep.any():
            raise PolymerlabError(
                f"upper bound prunes every state in layer {k} (internal)", layer=k
            )
        pos = sub[keep]
        cost = new_cost[keep]
        retained.append((pos, cost))
        max_abs = max(max_abs, int(np.abs(pos).max()))
    return retained, max_abs


def _backward(retained, lut):
    """Min cost-to-go over the retained state sets; Bs[k] aligns with
    retained[k]'s positions."""
    n = len(retained) - 1
    Bs = [None] * (n + 1)
    Bs[n] = np.zeros(len(retained[n][0]))
    for k in range(n - 1, -1, -1):
        pos_k = retained[k][0]
        pos_next = retained[k + 1][0]
        Bs[k] = (lut[_l1(pos_k, pos_next)] + Bs[k + 1][None, :]).min(axis=1)
    return Bs


def _extract_path(retained, Bs, lut, start_index):
    """Front-to-back greedy walk through the optimal states.

    At each layer the candidates achieving the exact float minimum of
    step-cost + cost-to-go are collected and the lexicographically smallest
    position wins, which yields the lexicographically smallest optimal
    position sequence.
    """
    y = retained[0][0][start_index]
    out = [y]
    for k in range(1, len(retained)):
        pos = retained[k][0]
        v = lut[np.abs(pos - y).sum(axis=1)] + Bs[k]
        sel = pos[v == v.min()]
        y = _lex_min(sel)
        out.append(y)
    return np.stack(out)


def _pilot_upper_bound(layers, centers, ub_guard, lut, alpha):
    """Value of a DP restricted to a band around a reference path; any such
    value is the cost of an actual path, hence a valid global upper bound."""
    band_layers = []
    for pts, c in zip(layers, centers):
        mask = (np.abs(pts - c) <= _PILOT_BAND).all(axis=1)
        if not mask.any():
            return None
        band_layers.append(pts[mask])
    d = layers[0].shape[1]
    init_pos = np.zeros((1, d), dtype=np.int64)
    init_cost = np.zeros(1)
    try:
        retained, _ = _forward(band_layers, init_pos, init_cost, ub_guard, lut, alpha)
    except PolymerlabError:
        return None
    return float(retained[-1][1].min())


def _guard(ub: float) -> float:
    return ub * (1.0 + 1e-9) + 1e-9


def passage_time(view: EnvSlab | RegularizedSlab, n: int, params) -> PassageResult:
    """Minimum path cost through layers 1..n of the view, from the origin.

    The value is the exact minimum over paths confined to the window; the
    ``exact`` flag certifies when that equals the unrestricted minimum.  Ties
    between optimal paths resolve to the lexicographically smallest position
    sequence.
    """
    base = view.base if isinstance(view, RegularizedSlab) else view
    L = base.half_width
    layers = _admissible_layers(view, n)
    lut = _cost_lut(2 * L * base.d, params.alpha)

    ub, greedy_rec = greedy_upper_bound(view, n, params)
    if ub > 0:
        pilot = _pilot_upper_bound(
            layers, greedy_rec.positions[1:], _guard(ub), lut, params.alpha
        )
        if pilot is not None and pilot < ub:
            ub = pilot
    ub_guard = _guard(ub)

    d = base.d
    init_pos = np.zeros((1, d), dtype=np.int64)
    init_cost = np.zeros(1)
    retained, max_abs = _forward(layers, init_pos, init_cost, ub_guard, lut, params.alpha)

    r_cert = int(math.ceil(ub_guard ** (1.0 / params.alpha)))
    boundary_touch = max_abs >= L
    exact = (not boundary_touch) and (max_abs + r_cert <= L)

    Bs = _backward(retained, lut)
    value = float(Bs[0][0])
    positions = _extract_path(retained, Bs, lut, 0)
    path = path_from_positions(positions, view, params.alpha)

    p = base.p
    scaled = None
    if 0.0 < p < 1.0:
        scaled = scale_factor(p, base.d) ** params.alpha * value
    return PassageResult(
        value=value,
        scaled_value=scaled,
        path=path,
        exact=bool(exact),
        frontier_stats=tuple(len(r[0]) for r in retained[1:]),
        upper_bound_used=float(ub),
    )


# ---------------------------------------------------------------------------
# face-to-face passage and fixed-start continuation
# ---------------------------------------------------------------------------


def face_to_face(
    view: EnvSlab | RegularizedSlab, k: int, l: int, half_width_m: int, params
) -> float:
    """Minimum cost from a free start to layer l.

    The path starts at any lattice point x_k with |x_k|_inf < half_width_m
    (the start need not be an admissible site) and visits admissible sites in
    layers k+1..l.  With half_width_m = 1 the start box degenerates to the
    origin and the result matches a passage time over those layers.
    """
    base = view.base if isinstance(view, RegularizedSlab) else view
    L = base.half_width
    if not (0 <= k < l <= view.n):
        raise ValidationError(f"need 0 <= k < l <= {view.n}, got k={k}, l={l}")
    if not (1 <= half_width_m <= L):
        raise ValidationError(
            f"start box half-width {half_width_m} must lie in 1..{L}",
            field="half_width_m",
        )
    layers = []
    for j in range(k + 1, l + 1):
        pts = layer_points(view, j)
        if len(pts) == 0:
            raise InfeasibleLayerError(j)
        layers.append(pts)
    lut = _cost_lut(2 * L * base.d, params.alpha)

    first = layers[0]
    shortfall = np.maximum(np.abs(first) - (half_width_m - 1), 0).sum(axis=1)
    init_cost_all = lut[shortfall]

    # greedy bound: enter at the cheapest first-layer site, then nearest-site hops
    start = int(np.argmin(init_cost_all))
    ub = float(init_cost_all[start])
    y = first[start]
    for pts in layers[1:]:
        dist = np.abs(pts - y).sum(axis=1)
        best = int(dist.min())
        y = _lex_min(pts[dist == best])
        ub += float(lut[best])
    ub_guard = _guard(ub)

    retained, _ = _forward(layers[1:], first, init_cost_all, ub_guard, lut, params.alpha)
    return float(retained[-1][1].min())


def continuation_cost(
    view: EnvSlab | RegularizedSlab, k: int, l: int, start: np.ndarray, params
) -> float:
    """Minimum cost to continue from a fixed position at layer k through
    admissible sites of layers k+1..l."""
    base = view.base if isinstance(view, RegularizedSlab) else view
    L = base.half_width
    if not (0 <= k < l <= view.n):
        raise ValidationError(f"need 0 <= k < l <= {view.n}, got k={k}, l={l}")
    start = np.asarray(start, dtype=np.int64).reshape(1, base.d)
    layers = []
    for j in range(k + 1, l + 1):
        pts = layer_points(view, j)
        if len(pts) == 0:
            raise InfeasibleLayerError(j)
        layers.append(pts)
    lut = _cost_lut(2 * L * base.d, params.alpha)
    y = start[0]
    ub = 0.0
    for pts in layers:
        dist = np.abs(pts - y).sum(axis=1)
        best = int(dist.min())
        y = _lex_min(pts[dist == best])
        ub += float(lut[best])
    retained, _ = _forward(layers, start, np.zeros(1), _guard(ub), lut, params.alpha)
    return float(retained[-1][1].min())


# ---------------------------------------------------------------------------
# enumeration oracle
# ---------------------------------------------------------------------------


def brute_force_passage(
    view: EnvSlab | RegularizedSlab,
    n: int,
    jump_cap: int,
    params,
    max_paths: int = 2_000_000,
) -> float:
    """Exact minimum by enumerating every admissible path with per-step jumps
    at most ``jump_cap``, confined to the window.

    Independent of the DP (no shared recursion); intended for oracle checks
    on small instances.  Returns inf when the cap leaves no feasible path.
    """
    layers = _admissible_layers(view, n)
    sizes = [len(p) for p in layers]
    total = 1
    for s in sizes:
        total *= s
        if total > max_paths:
            raise CapacityError(
                f"enumeration of {total}+ paths exceeds the budget of {max_paths}",
                max_paths=max_paths,
            )
    grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
    choice = np.stack([g.reshape(-1) for g in grids], axis=1)  # (total, n)
    d = layers[0].shape[1]
    pos = np.empty((total, n + 1, d), dtype=np.int64)
    pos[:, 0, :] = 0
    for j, pts in enumerate(layers):
        pos[:, j + 1, :] = pts[choice[:, j]]
    jumps = np.abs(np.diff(pos, axis=1)).sum(axis=2)
    ok = (jumps <= jump_cap).all(axis=1)
    if not ok.any():
        return math.inf
    lut = _cost_lut(int(jumps.max()), params.alpha)
    energies = lut[jumps[ok]].sum(axis=1)
    return float(energies.min())


# ---------------------------------------------------------------------------
# midpoint rewiring move
# ---------------------------------------------------------------------------


def improve_jump(path: PathRecord, reg: RegularizedSlab, s: int, params) -> PathRecord:
    """Try to reroute layer s of a path through the regularized point nearest
    the midpoint of its neighbours.

    The candidate replaces position s by the admissible point of the
    regularized view closest (l1) to (pos[s-1] + pos[s+1]) / 2, ties to the
    lexicographically smallest.  The rewired path is returned only when it
    improves the energy by at least 2 * n**theta; otherwise the input path is
    returned unchanged.  A DP-optimal path can never be improved.
    """
    n = path.n
    if not (1 <= s <= n - 1):
        raise ValidationError(f"s must lie in 1..{n - 1}, got {s}", field="s")
    mid = (path.positions[s - 1] + path.positions[s + 1]) / 2.0
    pts = layer_points(reg, s)
    dist = np.abs(pts - mid).sum(axis=1)
    cand = _lex_min(pts[dist == dist.min()])
    if np.array_equal(cand, path.positions[s]):
        return path
    new_positions = path.positions.copy()
    new_positions[s] = cand
    new_rec = path_from_positions(new_positions, reg, params.alpha)
    if path.energy - new_rec.energy >= 2.0 * n**reg.theta:
        return new_rec
    return path


# ---------------------------------------------------------------------------
# single-layer resampling sensitivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensitivityResult:
    """Passage-time shifts under independent resamplings of one layer."""

    layer: int
    trials: int
    diffs: tuple[float, ...]
    max_abs: float
    mean_abs: float
    bound: float

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "trials": self.trials,
            "diffs": list(self.diffs),
            "max_abs": self.max_abs,
            "mean_abs": self.mean_abs,
            "bound": self.bound,
        }


def resample_sensitivity(
    slab: EnvSlab, m: int, trials: int, params, seed: int
) -> SensitivityResult:
    """Redraw layer m of the regularized slab ``trials`` times and record
    |T(resampled) - T(original)| against the band bound 4 * n**(zeta*alpha).

    Trial t uses fresh seed hash64(seed, t).  Regularization is applied after
    each splice; since boxes are filled layer by layer this equals splicing
    regularized configurations.
    """
    if trials < 1:
        raise ValidationError(f"need trials >= 1, got {trials}", field="trials")
    base_reg = regularize(slab, params.theta)
    t0 = passage_time(base_reg, slab.n, params).value
    diffs = []
    for t in range(1, trials + 1):
        fresh = hash64(seed, t)
        reg2 = regularize(resample_layer(slab, m, fresh), params.theta)
        diffs.append(abs(passage_time(reg2, slab.n, params).value - t0))
    arr = np.asarray(diffs)
    return SensitivityResult(
        layer=m,
        trials=trials,
        diffs=tuple(float(x) for x in arr),
        max_abs=float(arr.max()),
        mean_abs=float(arr.mean()),
        bound=4.0 * slab.n ** (params.zeta * params.alpha),
    )
