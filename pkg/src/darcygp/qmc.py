"""Low-discrepancy point sets: rank-1 lattice sequences, base-2 digital
sequences, randomized shifts, and the baker (tent) transform.

Both generators are deterministic and immutable; point generation is a pure
function of (generator, n, dim). Lattice points are returned in natural index
order so that the Gram matrix of a shift-invariant kernel evaluated on them is
circulant. Digital points are returned in sequence order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "LatticeGenerator",
    "DigitalGenerator",
    "default_lattice_generator",
    "default_digital_generator",
    "load_generating_vector",
    "load_direction_numbers",
    "lattice_points",
    "digital_points",
    "baker",
    "random_shift",
]

_DIGITAL_BITS = 32


def _data_text(name: str) -> str:
    return resources.files("darcygp.data").joinpath(name).read_text()


def load_generating_vector(path: str | Path | None = None) -> tuple[int, ...]:
    """Read a lattice generating vector: one positive odd integer per line.

    Lines starting with '#' are comments. With no path, the packaged default
    vector (32 dimensions, up to 2^20 points) is returned.
    """
    text = Path(path).read_text() if path is not None else _data_text("lattice_generating_vector.txt")
    vec = tuple(int(line) for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#"))
    if not vec:
        raise ValueError("generating vector file contains no entries")
    return vec


def load_direction_numbers(path: str | Path | None = None) -> np.ndarray:
    """Read digital-sequence direction numbers: one whitespace-separated row
    of integers per dimension, scaled to ``2**32`` (column k carries the k-th
    direction integer). Defaults to the packaged Joe-Kuo table (32 dims).
    """
    text = Path(path).read_text() if path is not None else _data_text("digital_direction_numbers.txt")
    rows = [
        [int(tok) for tok in line.split()]
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not rows:
        raise ValueError("direction-number file contains no rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("direction-number rows have unequal lengths")
    return np.asarray(rows, dtype=np.uint64)


@dataclass(frozen=True)
class LatticeGenerator:
    """Rank-1 lattice sequence: point i of an n-point set is ``i*z/n mod 1``.

    Every entry of ``generating_vector`` must be odd so the one-dimensional
    projections stay full period for power-of-two n, which in turn gives the
    group structure the circulant-Gram construction relies on.
    """

    generating_vector: tuple[int, ...]
    max_log2_points: int = 20
    shift: np.ndarray | None = None

    def __post_init__(self):
        if len(self.generating_vector) < 1:
            raise ValueError("generating vector must have at least one entry")
        if self.max_log2_points < 1:
            raise ValueError("max_log2_points must be >= 1")
        bad = [z for z in self.generating_vector if z <= 0 or z % 2 == 0]
        if bad:
            raise ValueError(f"generating-vector entries must be positive odd integers, got {bad[:4]}")
        if self.shift is not None:
            shift = np.atleast_1d(np.asarray(self.shift, dtype=float))
            if shift.ndim != 1 or len(shift) > len(self.generating_vector):
                raise ValueError("shift must be a vector with one entry per usable dimension")
            if np.any(shift < 0.0) or np.any(shift >= 1.0):
                raise ValueError("shift coordinates must lie in [0, 1)")
            object.__setattr__(self, "shift", shift)

    @property
    def dim(self) -> int:
        return len(self.generating_vector)


@dataclass(frozen=True)
class DigitalGenerator:
    """Base-2 digital sequence defined by per-dimension direction numbers.

    ``direction_numbers[j, k]`` is the k-th direction integer of dimension j,
    scaled to ``2**bits``. As bit matrices (one column per k) they must be
    upper triangular with ones on the diagonal, which guarantees the digital
    net property in every one-dimensional projection.
    """

    direction_numbers: np.ndarray
    max_log2_points: int = 20
    digital_shift: np.ndarray | None = None
    bits: int = _DIGITAL_BITS

    def __post_init__(self):
        v = np.asarray(self.direction_numbers, dtype=np.uint64)
        if v.ndim != 2:
            raise ValueError("direction_numbers must be a (dim, bits) integer matrix")
        object.__setattr__(self, "direction_numbers", v)
        if self.max_log2_points < 1 or self.max_log2_points > v.shape[1]:
            raise ValueError("max_log2_points must be in [1, bits]")
        if self.bits < v.shape[1] or self.bits > 63:
            raise ValueError("bits must cover the direction-number columns and stay below 64")
        for j in range(v.shape[0]):
            for k in range(v.shape[1]):
                val = int(v[j, k])
                if not (val >> (self.bits - 1 - k)) & 1:
                    raise ValueError(f"direction matrix dim {j}: column {k} lacks its diagonal one")
                if val % (1 << (self.bits - 1 - k)) != 0:
                    raise ValueError(f"direction matrix dim {j}: column {k} has bits below the diagonal")
        if self.digital_shift is not None:
            sh = np.asarray(self.digital_shift, dtype=np.uint64)
            if sh.ndim != 1 or len(sh) > v.shape[0]:
                raise ValueError("digital_shift must be a vector with one entry per dimension")
            if np.any(sh >= np.uint64(1 << self.bits)):
                raise ValueError("digital_shift entries must fit in the configured bit width")
            object.__setattr__(self, "digital_shift", sh)

    @property
    def dim(self) -> int:
        return self.direction_numbers.shape[0]


def default_lattice_generator(vector_path: str | Path | None = None) -> LatticeGenerator:
    """The packaged (or file-overridden) lattice generator, 2^20-point capacity."""
    return LatticeGenerator(load_generating_vector(vector_path), max_log2_points=20)


def default_digital_generator(table_path: str | Path | None = None) -> DigitalGenerator:
    """The packaged (or file-overridden) digital generator, 2^20-point capacity."""
    return DigitalGenerator(load_direction_numbers(table_path), max_log2_points=20)


def lattice_points(gen: LatticeGenerator, n: int, dim: int | None = None) -> np.ndarray:
    """First n points of the rank-1 lattice in natural order: row i is
    ``(i * z / n) mod 1`` coordinatewise, plus the generator shift mod 1.

    The point sets nest: for power-of-two sizes the n-point set is a subset
    of the 2n-point set.
    """
    dim = gen.dim if dim is None else dim
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 1 << gen.max_log2_points:
        raise ValueError(f"n={n} exceeds generator capacity 2^{gen.max_log2_points}")
    if dim < 1 or dim > gen.dim:
        raise ValueError(f"dim={dim} exceeds generating-vector length {gen.dim}")
    z = np.asarray(gen.generating_vector[:dim], dtype=np.uint64)
    i = np.arange(n, dtype=np.uint64)[:, None]
    pts = (i * z[None, :] % np.uint64(n)).astype(float) / float(n)
    if gen.shift is not None:
        if len(gen.shift) < dim:
            raise ValueError(f"shift has {len(gen.shift)} coordinates, need {dim}")
        pts = (pts + gen.shift[None, :dim]) % 1.0
    return pts


def digital_points(gen: DigitalGenerator, n: int, dim: int | None = None) -> np.ndarray:
    """First n points of the digital sequence in sequence order.

    Point i is assembled by XOR-ing the direction integers selected by the
    binary digits of i (optionally XOR-ed with the digital shift) and scaling
    by 2^-bits.
    """
    dim = gen.dim if dim is None else dim
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 1 << gen.max_log2_points:
        raise ValueError(f"n={n} exceeds generator capacity 2^{gen.max_log2_points}")
    if dim < 1 or dim > gen.dim:
        raise ValueError(f"dim={dim} not supported by the direction numbers ({gen.dim} dims)")
    v = gen.direction_numbers[:dim]
    idx = np.arange(n, dtype=np.uint64)
    acc = np.zeros((n, dim), dtype=np.uint64)
    for b in range(max(1, int(n - 1).bit_length())):
        hit = ((idx >> np.uint64(b)) & np.uint64(1)).astype(bool)
        if hit.any():
            acc[hit] ^= v[None, :, b]
    if gen.digital_shift is not None:
        if len(gen.digital_shift) < dim:
            raise ValueError(f"digital shift has {len(gen.digital_shift)} entries, need {dim}")
        acc ^= gen.digital_shift[None, :dim]
    return acc.astype(float) / float(1 << gen.bits)


def baker(u):
    """Tent map ``b(u) = 1 - 2|u - 1/2|`` on [0, 1], applied elementwise.

    Periodizes an integrand while preserving the uniform distribution of its
    argument. Scalar in, scalar out; arrays pass through elementwise.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("baker transform requires inputs in [0, 1]")
    out = 1.0 - 2.0 * np.abs(arr - 0.5)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def random_shift(gen, seed: int):
    """Return a copy of ``gen`` with a seeded uniform randomization applied.

    Lattice generators get a uniform shift on [0,1)^dim; digital generators
    get a uniform digital (XOR) shift. Reproducible from the seed.
    """
    rng = np.random.default_rng(seed)
    if isinstance(gen, LatticeGenerator):
        return dataclasses.replace(gen, shift=rng.random(gen.dim))
    if isinstance(gen, DigitalGenerator):
        shift = rng.integers(0, 1 << gen.bits, size=gen.dim, dtype=np.uint64)
        return dataclasses.replace(gen, digital_shift=shift)
    raise TypeError(f"unsupported generator type: {type(gen).__name__}")
