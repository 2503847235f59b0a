"""
Quantization Codebooks
Line-packing, random and channel-statistic codebooks, codeword search and cache files
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import ConvexHull, QhullError

from agb_feedback.exceptions import (
    CacheFormatError,
    CapExceeded,
    DimMismatch,
    NullSpaceHit,
)
from agb_feedback.utils.mathkit import (
    ComplexMatrix,
    ComplexVector,
    as_complex_vector,
    hermitian_sqrt,
)
from agb_feedback.utils.random_streams import complex_gaussian, make_stream
from agb_feedback.utils.settings_config import get_settings

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-9
NULL_TOL = 1e-12
SOFTMIN_SHARPNESS = 50.0

CACHE_MAGIC = b"AGBC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class Codebook:
    """Ordered unit-norm codewords stored as rows, shape (2**bits, dim)"""

    entries: NDArray[np.complex128]

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[0] < 1:
            raise ValueError(f"Codebook entries must be (size, dim), got {entries.shape}")
        size = entries.shape[0]
        if size & (size - 1):
            raise ValueError(f"Codebook size {size} is not a power of two")
        norms = np.linalg.norm(entries, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("Codebook entries must have unit norm")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def bits(self) -> int:
        return self.size.bit_length() - 1

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int) -> ComplexVector:
        return self.entries[index]


def _normalize_rows(x: NDArray[np.complex128]) -> NDArray[np.complex128]:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _check_cap(bits: int) -> None:
    cap = get_settings().codebook_cap_bits
    if bits < 0:
        raise ValueError(f"Bit count must be non-negative, got {bits}")
    if bits > cap:
        raise CapExceeded(f"{bits}-bit flat codebook exceeds the {cap}-bit cap")


def _overlaps(entries: NDArray[np.complex128]) -> NDArray[np.float64]:
    """|c_i^H c_j|^2 with the diagonal zeroed"""
    gram = entries.conj() @ entries.T
    power = np.abs(gram) ** 2
    np.fill_diagonal(power, 0.0)
    return power


def min_chordal_distance(codebook: Codebook | NDArray[np.complex128]) -> float:
    """Smallest sqrt(1 - |c_i^H c_j|^2) over distinct pairs"""
    entries = codebook.entries if isinstance(codebook, Codebook) else codebook
    if entries.shape[0] < 2:
        return 1.0
    worst = float(_overlaps(entries).max())
    return math.sqrt(max(1.0 - worst, 0.0))


def rvq_codebook(dim: int, bits: int, rng: np.random.Generator) -> Codebook:
    """2**bits i.i.d. isotropic unit vectors"""
    _check_cap(bits)
    draws = complex_gaussian(rng, (2**bits, dim))
    return Codebook(_normalize_rows(draws))


def _repel(
    entries: NDArray[np.complex128], step: float
) -> NDArray[np.complex128]:
    """Push each codeword away from its (soft) nearest neighbours and renormalize"""
    gram = entries.conj() @ entries.T
    power = np.abs(gram) ** 2
    np.fill_diagonal(power, -np.inf)
    weights = np.exp(SOFTMIN_SHARPNESS * (power - power.max(axis=1, keepdims=True)))
    weights /= weights.sum(axis=1, keepdims=True)
    moved = entries - step * ((weights * gram.conj()) @ entries)
    return _normalize_rows(moved)


def line_packing_with_history(
    dim: int,
    bits: int,
    rng: np.random.Generator,
    iters: int | None = None,
    restarts: int | None = None,
) -> tuple[Codebook, list[float]]:
    """Best-of-restarts random start followed by repulsion iterations

    Returns the best codebook seen and the best-so-far minimum chordal
    distance after initialization and after every iteration.
    """
    settings = get_settings()
    _check_cap(bits)
    iters = settings.packing_iterations if iters is None else iters
    restarts = settings.packing_restarts if restarts is None else restarts
    size = 2**bits

    # the first candidate is drawn exactly as rvq_codebook would draw it
    best = _normalize_rows(complex_gaussian(rng, (size, dim)))
    if size > settings.packing_max_size:
        logger.warning(
            f"Packing of {size} codewords exceeds repulsion limit "
            f"{settings.packing_max_size}; keeping the random start"
        )
        return Codebook(best), []

    best_distance = min_chordal_distance(best)
    for _ in range(1, restarts):
        candidate = _normalize_rows(complex_gaussian(rng, (size, dim)))
        distance = min_chordal_distance(candidate)
        if distance > best_distance:
            best, best_distance = candidate, distance

    history = [best_distance]
    current = best
    step = settings.packing_step
    for _ in range(iters if size > 1 and dim > 1 else 0):
        current = _repel(current, step)
        distance = min_chordal_distance(current)
        if distance > best_distance:
            best, best_distance = current, distance
        else:
            step *= settings.packing_decay
        history.append(best_distance)

    logger.debug(f"Line packing dim={dim} bits={bits}: min distance {best_distance:.6f}")
    return Codebook(best), history


def line_packing_codebook(
    dim: int,
    bits: int,
    rng: np.random.Generator,
    iters: int | None = None,
) -> Codebook:
    """Codebook approximately maximizing the minimum pairwise chordal distance"""
    codebook, _ = line_packing_with_history(dim, bits, rng, iters)
    return codebook


def statistic_codebook(r: ComplexMatrix, base: Codebook) -> Codebook:
    """c_i = R^1/2 f_i / ||R^1/2 f_i||"""
    r = np.asarray(r, dtype=np.complex128)
    if r.shape != (base.dim, base.dim):
        raise DimMismatch(f"Correlation {r.shape} does not match codebook dim {base.dim}")
    if np.array_equal(r, np.eye(base.dim)):
        return base
    rotated = base.entries @ hermitian_sqrt(r).T
    norms = np.linalg.norm(rotated, axis=1)
    if np.any(norms <= NULL_TOL):
        raise NullSpaceHit(f"Codeword {int(np.argmin(norms))} lies in the null space of R")
    return Codebook(rotated / norms[:, None])


def rotate_codebook_stack(
    roots: NDArray[np.complex128], base: Codebook
) -> NDArray[np.complex128]:
    """Statistic codebooks for a stack of square roots, shape (n, size, dim)"""
    if roots.shape[-1] != base.dim:
        raise DimMismatch(f"Square roots of dim {roots.shape[-1]} vs codebook dim {base.dim}")
    rotated = base.entries @ np.swapaxes(roots, -1, -2)
    norms = np.linalg.norm(rotated, axis=-1, keepdims=True)
    if np.any(norms <= NULL_TOL):
        raise NullSpaceHit("A rotated codeword lies in the null space of its correlation")
    return rotated / norms


def quantize(v: ComplexVector, codebook: Codebook) -> tuple[int, ComplexVector]:
    """argmax_i |v^H c_i|^2, lowest index on ties"""
    v = as_complex_vector(v)
    if v.shape[0] != codebook.dim:
        raise DimMismatch(f"Vector dim {v.shape[0]} vs codebook dim {codebook.dim}")
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError("quantize expects a unit-norm vector")
    scores = np.abs(codebook.entries @ v.conj()) ** 2
    index = int(np.argmax(scores))
    return index, codebook.entries[index]


@dataclass(frozen=True)
class ProductCodebook:
    """Independent per-block codebooks over a partition of the vector indices"""

    blocks: tuple[Codebook, ...]
    index_maps: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.blocks) != len(self.index_maps) or not self.blocks:
            raise ValueError("Product codebook needs one index map per block")
        for block, index_map in zip(self.blocks, self.index_maps):
            if block.dim != len(index_map):
                raise DimMismatch(f"Block dim {block.dim} vs index map {len(index_map)}")
        covered = sorted(i for m in self.index_maps for i in m)
        if covered != list(range(len(covered))):
            raise ValueError("Index maps must partition 0..dim-1")

    @property
    def dim(self) -> int:
        return sum(len(m) for m in self.index_maps)

    @property
    def bits(self) -> int:
        return sum(block.bits for block in self.blocks)

    def flat_index(self, indices: tuple[int, ...]) -> int:
        """Mixed-radix index, block 0 most significant"""
        flat = 0
        for block, index in zip(self.blocks, indices):
            flat = flat * block.size + index
        return flat

    def split_index(self, flat: int) -> tuple[int, ...]:
        indices = []
        for block in reversed(self.blocks):
            flat, index = divmod(flat, block.size)
            indices.append(index)
        return tuple(reversed(indices))

    def codeword(self, indices: tuple[int, ...]) -> ComplexVector:
        """Concatenated block codewords scaled to unit norm"""
        out = np.zeros(self.dim, dtype=np.complex128)
        for block, index_map, index in zip(self.blocks, self.index_maps, indices):
            out[list(index_map)] = block.entries[index]
        return out / math.sqrt(len(self.blocks))


def _support_candidates(
    z: NDArray[np.complex128],
) -> tuple[NDArray[np.intp], NDArray[np.float64]]:
    """Hull indices of z and the angles where argmax Re(e^{-j phi} z) can switch"""
    candidates: NDArray[np.intp] | None = None
    if z.shape[0] >= 3:
        try:
            hull = ConvexHull(np.column_stack([z.real, z.imag]))
            candidates = np.sort(hull.vertices).astype(np.intp)
        except QhullError:
            pass
    if candidates is None:
        # collinear or tiny sets: the extremes along each axis bound the support
        extremes = [np.argmin(z.real), np.argmax(z.real), np.argmin(z.imag), np.argmax(z.imag)]
        candidates = np.unique(np.array(extremes, dtype=np.intp))
    points = z[candidates]
    diffs = (points[:, None] - points[None, :]).ravel()
    if candidates.shape[0] > 8:
        ordered = points[np.argsort(np.angle(points - points.mean()))]
        diffs = np.roll(ordered, -1) - ordered
    angles = np.angle(diffs)
    return candidates, np.concatenate([angles - np.pi / 2, angles + np.pi / 2])


def joint_block_search(scores: list[NDArray[np.complex128]]) -> tuple[int, ...]:
    """argmax over (i_1..i_M) of |sum_m z_m[i_m]|^2

    Exact: at the optimum every block's choice maximizes its projection on
    the direction of the sum, so only the per-block support maximizers over
    the arcs between breakpoint angles need to be compared.
    """
    if len(scores) == 1:
        return (int(np.argmax(np.abs(scores[0]) ** 2)),)

    supports = [_support_candidates(np.asarray(z, dtype=np.complex128)) for z in scores]
    breaks = np.sort(np.mod(np.concatenate([b for _, b in supports]), 2 * np.pi))
    gaps = np.diff(np.append(breaks, breaks[0] + 2 * np.pi))
    phis = breaks + gaps / 2
    directions = np.exp(-1j * phis)

    total = np.zeros(phis.shape[0], dtype=np.complex128)
    choices = []
    for z, (candidates, _) in zip(scores, supports):
        projection = (directions[:, None] * np.asarray(z)[candidates][None, :]).real
        picked = candidates[np.argmax(projection, axis=1)]
        choices.append(picked)
        total += np.asarray(z)[picked]
    best = int(np.argmax(np.abs(total) ** 2))
    return tuple(int(c[best]) for c in choices)


def quantize_product(v: ComplexVector, codebook: ProductCodebook) -> tuple[int, ...]:
    """Search over the full product set: argmax |v^H c(i_1..i_M)|^2"""
    v = as_complex_vector(v)
    if v.shape[0] != codebook.dim:
        raise DimMismatch(f"Vector dim {v.shape[0]} vs product codebook dim {codebook.dim}")
    scores = [
        block.entries @ v[list(index_map)].conj()
        for block, index_map in zip(codebook.blocks, codebook.index_maps)
    ]
    return joint_block_search(scores)


# ============================================================================
# CACHE FILES
# ============================================================================


def save_codebook(codebook: Codebook, path: Path) -> None:
    """Binary file: AGBC magic, version, dim, size, then little-endian (re, im) f64"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, codebook.dim, codebook.size)
    payload = codebook.entries.astype("<c16").tobytes()
    path.write_bytes(header + payload)


def load_codebook(path: Path) -> Codebook:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CacheFormatError(f"{path}: file shorter than the header")
    magic, version, dim, size = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise CacheFormatError(f"{path}: bad magic {magic!r} or version {version}")
    expected = _HEADER.size + 16 * dim * size
    if len(data) != expected:
        raise CacheFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    entries = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(size, dim)
    return Codebook(entries.astype(np.complex128))


def cached_line_packing(dim: int, bits: int, seed: int) -> Codebook:
    """Line packing built from (seed, dim, bits), reused across runs via the cache dir"""
    settings = get_settings()
    name = (
        f"lp_d{dim}_b{bits}_s{seed}_r{settings.packing_restarts}"
        f"_i{settings.packing_iterations}_st{settings.packing_step:g}"
        f"_dc{settings.packing_decay:g}_mx{settings.packing_max_size}.agbc"
    )
    path = settings.cache_dir / "codebooks" / name
    if settings.use_cache and path.exists():
        try:
            codebook = load_codebook(path)
            logger.info(f"Codebook cache hit: {path}")
            return codebook
        except CacheFormatError as e:
            logger.warning(f"Ignoring unreadable codebook cache: {str(e)}")

    codebook = line_packing_codebook(dim, bits, make_stream(seed, dim, bits))
    if settings.use_cache:
        save_codebook(codebook, path)
        logger.info(f"Codebook cache written: {path}")
    return codebook


def block_count(bits: int, cap_bits: int | None = None) -> int:
    """Smallest power-of-two number of blocks whose share of `bits` fits the flat cap"""
    cap = get_settings().codebook_cap_bits if cap_bits is None else cap_bits
    if cap < 1:
        raise ValueError(f"Codebook cap must be at least one bit, got {cap}")
    blocks = 1
    while math.ceil(bits / blocks) > cap:
        blocks *= 2
    return blocks


def split_bits(bits: int, blocks: int) -> list[int]:
    """Per-block bit counts, earlier blocks take the remainder"""
    share, extra = divmod(bits, blocks)
    return [share + (1 if i < extra else 0) for i in range(blocks)]
