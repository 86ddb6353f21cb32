"""Layered Bernoulli obstacle environments on a lattice window.

A *slab* holds ``n`` layers of i.i.d. Bernoulli(p) obstacle bits over the
window ``[-L, L]^d``.  Bit 1 marks an obstacle, bit 0 an open site.  Bits are
counter-based: the bit at layer k, coordinate x is a pure function of
``(master_seed, k, x)`` through the splitmix64 chain of :func:`hash64`, which
buys three properties at once:

* regenerating a slab from ``(master_seed, n, half_width, p)`` is bit-for-bit
  reproducible across platforms,
* slabs drawn from the same seed over nested windows agree on the overlap,
  so enlarging a window extends the environment instead of redrawing it,
* slabs drawn from the same seed at different densities are monotone coupled
  (raising p only turns open sites into obstacles).

A single layer can be resampled without touching the others by swapping its
layer seed.  Besides generation the module provides the theta-regularization
(adding a corner point to every vacant theta-box so that no layer has
unbounded empty stretches), the matching box-occupancy check, and a compact
binary export format documented in :func:`save_slab`.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapacityError, ValidationError

NEG_INFINITY = float("-inf")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------


def _splitmix64(x: int) -> int:
    """One splitmix64 step (Steele-Lea-Flood mixing constants)."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash64(*parts: int) -> int:
    """Fold integers into a 64-bit value.

    The scheme is fixed and documented so derived seeds are stable across
    versions: starting from h = 0, each part is reduced mod 2^64 (negative
    ints in two's complement), xor-ed into h, and passed through one
    splitmix64 step.  Layer k of a slab uses ``hash64(master_seed, k)``;
    replica r at size n uses ``hash64(master_seed, n, r)``; the bit of a
    cell comes from ``hash64(layer_seed, *coordinate)``.
    """
    h = 0
    for p in parts:
        h = _splitmix64(h ^ (int(p) & _MASK64))
    return h


_U = np.uint64


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`_splitmix64` on uint64 arrays (wrapping arithmetic)."""
    x = x + _U(_GOLDEN)
    z = (x ^ (x >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def _layer_uniforms(layer_seed: int, half_width: int, d: int) -> np.ndarray:
    """Uniform(0,1) variates for every cell of a window, counter-based.

    The variate at coordinate x is derived from hash64(layer_seed, *x) (the
    top 53 bits scaled to [0, 1)), so windows of different half-widths agree
    wherever they overlap.
    """
    coords = np.arange(-half_width, half_width + 1, dtype=np.int64).view(np.uint64)
    h = _U(_splitmix64(int(layer_seed) & _MASK64))
    if d == 1:
        mixed = _splitmix64_array(h ^ coords)
    else:
        rows = _splitmix64_array(h ^ coords)
        mixed = _splitmix64_array(rows[:, None] ^ coords[None, :])
    return (mixed >> _U(11)).astype(np.float64) * (2.0**-53)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Model parameters shared by the passage-time and polymer modules.

    d      -- lattice dimension of a layer (1 or 2)
    alpha  -- jump cost exponent, cost of a jump of l1 length k is k**alpha
    c2     -- energy scale multiplying jump costs in the kernel exp(-c2*k**alpha)
    p      -- obstacle probability of the Bernoulli environment
    beta   -- coupling; finite, or -inf for the hard-obstacle limit
    theta  -- regularization box exponent (box side is ceil(n**theta))
    zeta   -- jump-scale exponent used by diagnostics (bands like n**zeta)
    """

    d: int
    alpha: float
    c2: float
    p: float
    beta: float = 0.0
    theta: float = 0.4
    zeta: float = 0.5

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValidationError(f"d must be 1 or 2, got {self.d}", field="d")
        if not (self.alpha > 0) or not math.isfinite(self.alpha):
            raise ValidationError(f"alpha must be finite and > 0, got {self.alpha}", field="alpha")
        if not (self.c2 > 0) or not math.isfinite(self.c2):
            raise ValidationError(f"c2 must be finite and > 0, got {self.c2}", field="c2")
        if not (0.0 <= self.p < 1.0):
            raise ValidationError(f"p must lie in [0, 1), got {self.p}", field="p")
        if math.isnan(self.beta) or self.beta == math.inf:
            raise ValidationError(
                f"beta must be finite or -inf, got {self.beta}", field="beta"
            )
        if not (0.0 < self.theta < 1.0):
            raise ValidationError(f"theta must lie in (0, 1), got {self.theta}", field="theta")
        if not (0.0 < self.zeta < 1.0):
            raise ValidationError(f"zeta must lie in (0, 1), got {self.zeta}", field="zeta")

    @property
    def hard_obstacle(self) -> bool:
        return self.beta == NEG_INFINITY


def scale_factor(p: float, d: int) -> float:
    """Sparse-limit scale s_p = (log(1/p))**(1/d); the natural unit of the
    nearest-open-site distance when obstacles have density p.

    Defined for p in (0, 1) and any d >= 1.
    """
    if not (0.0 < p < 1.0):
        raise ValidationError(f"scale_factor needs p in (0, 1), got {p}", field="p")
    if d < 1:
        raise ValidationError(f"scale_factor needs d >= 1, got {d}", field="d")
    return math.log(1.0 / p) ** (1.0 / d)


# ---------------------------------------------------------------------------
# slabs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnvSlab:
    """n layers of obstacle bits over the window [-L, L]^d.

    ``bits`` has shape (n, W) for d=1 and (n, W, W) for d=2 with W = 2L+1;
    bits[k-1] is layer k.  Cell index i along an axis corresponds to
    coordinate i - L.  The array is marked read-only; derived slabs are new
    objects.
    """

    n: int
    half_width: int
    d: int
    p: float
    bits: np.ndarray
    master_seed: int
    layer_seeds: tuple[int, ...]

    def __post_init__(self):
        expect = (self.n,) + self.window_shape
        if tuple(self.bits.shape) != expect:
            raise ValidationError(
                f"bits shape {self.bits.shape} does not match layers/window {expect}"
            )
        self.bits.flags.writeable = False

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1

    @property
    def window_shape(self) -> tuple[int, ...]:
        return (self.width,) * self.d

    @property
    def cells_per_layer(self) -> int:
        return self.width**self.d

    def layer(self, k: int) -> np.ndarray:
        """Bits of layer k (1-based)."""
        if not (1 <= k <= self.n):
            raise ValidationError(f"layer {k} outside 1..{self.n}", layer=k)
        return self.bits[k - 1]


def generate_slab(
    params: ModelParams,
    n: int,
    half_width: int,
    master_seed: int,
    max_cells: int = 1 << 27,
) -> EnvSlab:
    """Draw a fresh slab of n layers over [-L, L]^d with obstacle density p.

    Layer k uses the seed hash64(master_seed, k); the bit at coordinate x is
    ``uniform < p`` with the counter-based uniform of hash64(layer_seed, *x).
    The construction is deterministic, agrees across nested windows, and is
    monotone-coupled in p (see the module docstring).
    """
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}", field="n")
    if half_width < 1:
        raise ValidationError(f"need half_width >= 1, got {half_width}", field="half_width")
    shape = (2 * half_width + 1,) * params.d
    cells = n * int(np.prod(shape))
    if cells > max_cells:
        raise CapacityError(
            f"slab of {cells} cells exceeds the budget of {max_cells}",
            cells=cells,
            max_cells=max_cells,
        )
    seeds = tuple(hash64(master_seed, k) for k in range(1, n + 1))
    bits = np.empty((n,) + shape, dtype=np.uint8)
    for k, seed in enumerate(seeds):
        bits[k] = _layer_uniforms(seed, half_width, params.d) < params.p
    return EnvSlab(
        n=n,
        half_width=half_width,
        d=params.d,
        p=params.p,
        bits=bits,
        master_seed=int(master_seed) & _MASK64,
        layer_seeds=seeds,
    )


def resample_layer(slab: EnvSlab, m: int, fresh_seed: int) -> EnvSlab:
    """Return a copy of ``slab`` with layer m redrawn from ``fresh_seed``.

    Every other layer is bit-identical to the input; passing the layer's
    current seed reproduces the input exactly.
    """
    if not (1 <= m <= slab.n):
        raise ValidationError(f"layer {m} outside 1..{slab.n}", layer=m)
    fresh_seed = int(fresh_seed) & _MASK64
    bits = slab.bits.copy()
    bits[m - 1] = _layer_uniforms(fresh_seed, slab.half_width, slab.d) < slab.p
    seeds = list(slab.layer_seeds)
    seeds[m - 1] = fresh_seed
    return EnvSlab(
        n=slab.n,
        half_width=slab.half_width,
        d=slab.d,
        p=slab.p,
        bits=bits,
        master_seed=slab.master_seed,
        layer_seeds=tuple(seeds),
    )


def open_sites(slab: EnvSlab, k: int) -> np.ndarray:
    """Coordinates of the open (bit 0) sites of layer k.

    Returns an (m, d) int array in lexicographic order; empty (0, d) when the
    whole layer is blocked.
    """
    idx = np.argwhere(slab.layer(k) == 0)
    return idx - slab.half_width


# ---------------------------------------------------------------------------
# theta-regularization
# ---------------------------------------------------------------------------


def _box_side(n: int, theta: float) -> int:
    return int(math.ceil(n**theta))


def _box_edges(width: int, side: int) -> np.ndarray:
    """Start indices of the theta-boxes tiling [0, width) with the given side.

    Boxes are anchored at multiples of ``side`` from the window's lower
    corner; the last box may be cut off by the window edge.
    """
    return np.arange(0, width, side)


@dataclass(frozen=True, eq=False)
class RegularizedSlab:
    """A slab together with the corner points added to vacant theta-boxes.

    ``added`` holds one (m_k, d) int coordinate array per layer (lexicographic
    order).  A box of side b = ceil(n**theta), anchored at multiples of b from
    the window's lower corner, receives its lexicographically smallest lattice
    point iff it contains no open site of the base slab.  By construction
    every such box then meets ``open sites + added points`` in every layer.
    """

    base: EnvSlab
    theta: float
    box_side: int
    added: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def half_width(self) -> int:
        return self.base.half_width

    @property
    def d(self) -> int:
        return self.base.d

    def added_points(self, k: int) -> np.ndarray:
        if not (1 <= k <= self.n):
            raise ValidationError(f"layer {k} outside 1..{self.n}", layer=k)
        return self.added[k - 1]


def _box_open_counts(layer_bits: np.ndarray, side: int) -> np.ndarray:
    """Number of open sites in each theta-box of one layer."""
    open_mask = (layer_bits == 0).astype(np.int64)
    edges = _box_edges(layer_bits.shape[0], side)
    counts = np.add.reduceat(open_mask, edges, axis=0)
    if layer_bits.ndim == 2:
        counts = np.add.reduceat(counts, edges, axis=1)
    return counts


def regularize(slab: EnvSlab, theta: float) -> RegularizedSlab:
    """Add the corner point of every vacant theta-box, layer by layer."""
    if not (0.0 < theta < 1.0):
        raise ValidationError(f"theta must lie in (0, 1), got {theta}", field="theta")
    side = _box_side(slab.n, theta)
    L = slab.half_width
    added = []
    for k in range(1, slab.n + 1):
        counts = _box_open_counts(slab.layer(k), side)
        vacant = np.argwhere(counts == 0)
        added.append(vacant * side - L)
    return RegularizedSlab(base=slab, theta=theta, box_side=side, added=tuple(added))


def layer_points(view: EnvSlab | RegularizedSlab, k: int) -> np.ndarray:
    """Admissible positions of layer k under a raw or regularized view.

    For an EnvSlab these are the open sites; for a RegularizedSlab the open
    sites plus the added corners (disjoint by construction).  Always returned
    as an (m, d) int array in lexicographic order.
    """
    if isinstance(view, RegularizedSlab):
        base = open_sites(view.base, k)
        extra = view.added_points(k)
        if len(extra) == 0:
            return base
        pts = np.concatenate([base, extra], axis=0)
        order = np.lexsort(pts.T[::-1])
        return pts[order]
    return open_sites(view, k)


def theta_property_check(view: EnvSlab | RegularizedSlab, theta: float) -> bool:
    """True iff every theta-box of the window meets the view in every layer.

    Boxes have side ceil(n**theta) and are anchored at multiples of the side
    from the window's lower corner (the same grid the regularizer fills), the
    last box per axis being cut off by the window edge.
    """
    if not (0.0 < theta < 1.0):
        raise ValidationError(f"theta must lie in (0, 1), got {theta}", field="theta")
    n = view.n
    side = _box_side(n, theta)
    L = view.half_width
    width = 2 * L + 1
    n_boxes = int(math.ceil(width / side))
    for k in range(1, n + 1):
        pts = layer_points(view, k)
        if len(pts) == 0:
            return False
        box_idx = (pts + L) // side
        present = np.zeros((n_boxes,) * view.d, dtype=bool)
        present[tuple(box_idx.T)] = True
        if not present.all():
            return False
    return True


# ---------------------------------------------------------------------------
# binary export / import
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<5Q")  # n, half_width, d, p (float64 bit pattern), master_seed


def save_slab(slab: EnvSlab, path) -> None:
    """Write a slab as ``path`` (binary) plus a ``path + '.json'`` sidecar.

    Binary layout (little endian):
      * header, 40 bytes: five u64 fields n, half_width, d, p, master_seed,
        where p stores the IEEE-754 bit pattern of the float;
      * payload: for each layer in order, the window bits in row-major order
        packed 8 per byte, most significant bit first, each layer padded to a
        whole number of bytes (ceil(W**d / 8) bytes per layer).

    The sidecar repeats the parameters in JSON and records the per-layer
    seeds, which is the only way to reconstruct seeds of a slab that had
    layers resampled.
    """
    path = str(path)
    p_bits = struct.unpack("<Q", struct.pack("<d", slab.p))[0]
    header = _HEADER.pack(slab.n, slab.half_width, slab.d, p_bits, slab.master_seed)
    with open(path, "wb") as fh:
        fh.write(header)
        for k in range(slab.n):
            layer = slab.bits[k].reshape(-1)
            fh.write(np.packbits(layer, bitorder="big").tobytes())
    sidecar = {
        "n": slab.n,
        "half_width": slab.half_width,
        "d": slab.d,
        "p": slab.p,
        "master_seed": slab.master_seed,
        "layer_seeds": list(slab.layer_seeds),
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_slab(path) -> EnvSlab:
    """Read a slab written by :func:`save_slab`.

    The binary file is authoritative for the bits; the sidecar, when present,
    supplies the layer seeds (otherwise they are derived from the master
    seed).
    """
    path = str(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated slab header")
    n, half_width, d, p_bits, master_seed = _HEADER.unpack_from(raw)
    p = struct.unpack("<d", struct.pack("<Q", p_bits))[0]
    if d not in (1, 2):
        raise ValidationError(f"{path}: bad dimension {d} in header")
    width = 2 * half_width + 1
    cells = width**d
    layer_bytes = (cells + 7) // 8
    expect = _HEADER.size + n * layer_bytes
    if len(raw) != expect:
        raise ValidationError(
            f"{path}: payload is {len(raw) - _HEADER.size} bytes, expected {expect - _HEADER.size}"
        )
    bits = np.empty((n,) + (width,) * d, dtype=np.uint8)
    for k in range(n):
        start = _HEADER.size + k * layer_bytes
        packed = np.frombuffer(raw, dtype=np.uint8, count=layer_bytes, offset=start)
        layer = np.unpackbits(packed, bitorder="big")[:cells]
        bits[k] = layer.reshape((width,) * d)
    try:
        with open(path + ".json") as fh:
            sidecar = json.load(fh)
        seeds = tuple(int(s) for s in sidecar["layer_seeds"])
        if len(seeds) != n:
            raise ValidationError(f"{path}.json: expected {n} layer seeds, got {len(seeds)}")
    except FileNotFoundError:
        seeds = tuple(hash64(master_seed, k) for k in range(1, n + 1))
    return EnvSlab(
        n=n,
        half_width=half_width,
        d=d,
        p=p,
        bits=bits,
        master_seed=master_seed,
        layer_seeds=seeds,
    )
