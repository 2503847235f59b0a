"""
Antenna Group Patterns
Enumeration, grouping/expansion matrices and pattern-set selection by subspace packing
"""

import hashlib
import itertools
import logging
import math
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import comb

from agb_feedback.exceptions import (
    CacheFormatError,
    CapExceeded,
    DimMismatch,
    InfeasibleHeader,
    NonDivisible,
    SizeMismatch,
    ZeroMatrix,
)
from agb_feedback.utils.mathkit import ComplexMatrix, as_complex_matrix, hermitian_sqrt
from agb_feedback.utils.settings_config import get_settings

logger = logging.getLogger(__name__)

Strategy = Literal["packing", "random", "adjacent"]

SCORING_CHUNK = 4096


class GroupPattern(BaseModel):
    """Partition of n_t antennas into n_g equal groups, stored canonically"""

    model_config = ConfigDict(frozen=True)

    n_t: int
    n_g: int
    groups: tuple[tuple[int, ...], ...]

    @field_validator("groups", mode="before")
    @classmethod
    def _canonical(cls, groups: Sequence[Sequence[int]]) -> tuple[tuple[int, ...], ...]:
        ordered = [tuple(sorted(int(i) for i in g)) for g in groups]
        if any(not g for g in ordered):
            raise ValueError("Groups must be non-empty")
        return tuple(sorted(ordered, key=lambda g: g[0]))

    @model_validator(mode="after")
    def _check_partition(self) -> "GroupPattern":
        if self.n_g < 1 or self.n_t % self.n_g:
            raise ValueError(f"n_t={self.n_t} is not divisible by n_g={self.n_g}")
        if len(self.groups) != self.n_g:
            raise ValueError(f"Expected {self.n_g} groups, got {len(self.groups)}")
        kappa = self.kappa
        if any(len(g) != kappa for g in self.groups):
            raise ValueError(f"Every group must have exactly {kappa} members")
        members = sorted(i for g in self.groups for i in g)
        if members != list(range(self.n_t)):
            raise ValueError("Groups must be disjoint and cover every antenna index")
        return self

    @property
    def kappa(self) -> int:
        return self.n_t // self.n_g

    def __str__(self) -> str:
        return "|".join(" ".join(str(i) for i in g) for g in self.groups)

    @classmethod
    def parse(cls, text: str) -> "GroupPattern":
        """Inverse of str(): '0 1|2 3'"""
        groups = [tuple(int(tok) for tok in part.split()) for part in text.strip().split("|")]
        return cls(n_t=sum(len(g) for g in groups), n_g=len(groups), groups=groups)

    @classmethod
    def adjacent(cls, n_t: int, n_g: int) -> "GroupPattern":
        """Consecutive antennas grouped together: 0..k-1 | k..2k-1 | ..."""
        if n_g < 1 or n_t % n_g:
            raise NonDivisible(f"n_t={n_t} is not divisible by n_g={n_g}")
        kappa = n_t // n_g
        return cls(
            n_t=n_t,
            n_g=n_g,
            groups=[tuple(range(g * kappa, (g + 1) * kappa)) for g in range(n_g)],
        )


class PatternSet(BaseModel):
    """Ordered set of 2^b_p distinct patterns addressed by the feedback header"""

    model_config = ConfigDict(frozen=True)

    patterns: tuple[GroupPattern, ...]
    b_p: int

    @model_validator(mode="after")
    def _check_size(self) -> "PatternSet":
        if len(self.patterns) != 2**self.b_p:
            raise ValueError(f"Pattern set of {len(self.patterns)} does not match b_p={self.b_p}")
        if len(set(self.patterns)) != len(self.patterns):
            raise ValueError("Pattern set contains duplicates")
        shapes = {(p.n_t, p.n_g) for p in self.patterns}
        if len(shapes) != 1:
            raise ValueError(f"Patterns disagree on (n_t, n_g): {sorted(shapes)}")
        return self

    @property
    def n_t(self) -> int:
        return self.patterns[0].n_t

    @property
    def n_g(self) -> int:
        return self.patterns[0].n_g

    def __len__(self) -> int:
        return len(self.patterns)

    def __getitem__(self, index: int) -> GroupPattern:
        return self.patterns[index]


def grouping_matrix(p: GroupPattern) -> ComplexMatrix:
    """N_g x N_t averaging map, 1/kappa on each group member"""
    g = np.zeros((p.n_g, p.n_t), dtype=np.complex128)
    for row, members in enumerate(p.groups):
        g[row, list(members)] = 1.0 / p.kappa
    return g


def expansion_matrix(p: GroupPattern) -> ComplexMatrix:
    """N_t x N_g replication map E = kappa G^T"""
    e = np.zeros((p.n_t, p.n_g), dtype=np.complex128)
    for col, members in enumerate(p.groups):
        e[list(members), col] = 1.0
    return e


def pattern_count(n_t: int, n_g: int) -> int:
    """prod_n C(N_t - n kappa, kappa) / N_g!"""
    if n_g < 1 or n_t % n_g:
        raise NonDivisible(f"n_t={n_t} is not divisible by n_g={n_g}")
    kappa = n_t // n_g
    total = 1
    for n in range(n_g):
        total *= int(comb(n_t - n * kappa, kappa, exact=True))
    return total // math.factorial(n_g)


def subarray_pattern_count(n_t: int, n_g: int, m: int) -> int:
    """Patterns reachable by composing per-sub-array partitions over m equal sub-arrays"""
    if m < 1 or n_t % m or n_g % m:
        raise NonDivisible(f"n_t={n_t} and n_g={n_g} must split evenly over {m} sub-arrays")
    return pattern_count(n_t // m, n_g // m) ** m


def _partitions(remaining: tuple[int, ...], kappa: int):
    if not remaining:
        yield ()
        return
    head, rest = remaining[0], remaining[1:]
    for mates in itertools.combinations(rest, kappa - 1):
        group = (head, *mates)
        left = tuple(i for i in rest if i not in mates)
        for tail in _partitions(left, kappa):
            yield (group, *tail)


def enumerate_patterns(n_t: int, n_g: int) -> list[GroupPattern]:
    """All equal-size partitions in canonical order"""
    count = pattern_count(n_t, n_g)
    cap = get_settings().enumeration_cap
    if count > cap:
        raise CapExceeded(
            f"{count} patterns for ({n_t}, {n_g}) exceed the enumeration cap {cap}; "
            f"partition the array first"
        )
    kappa = n_t // n_g
    return [
        GroupPattern(n_t=n_t, n_g=n_g, groups=groups)
        for groups in _partitions(tuple(range(n_t)), kappa)
    ]


def quasi_correlation_matrix(root: ComplexMatrix, p: GroupPattern) -> ComplexMatrix:
    """R^1/2 E for a precomputed square root"""
    return root @ expansion_matrix(p)


def quasi_correlation_norm(r: ComplexMatrix, p: GroupPattern) -> float:
    """||R^1/2 E||_F"""
    r = as_complex_matrix(r)
    if r.shape != (p.n_t, p.n_t):
        raise DimMismatch(f"Correlation {r.shape} does not match n_t={p.n_t}")
    return float(np.linalg.norm(quasi_correlation_matrix(hermitian_sqrt(r), p)))


def correlation_matrix_distance(a: ComplexMatrix, b: ComplexMatrix) -> float:
    """1 - |tr(A^H B)| / (||A||_F ||B||_F)"""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimMismatch(f"Shapes differ: {a.shape} vs {b.shape}")
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroMatrix("Correlation matrix distance is undefined for a zero matrix")
    value = 1.0 - abs(np.vdot(a, b)) / (norm_a * norm_b)
    return float(min(max(value, 0.0), 1.0))


def _group_index(patterns: Sequence[GroupPattern]) -> np.ndarray:
    return np.array([p.groups for p in patterns], dtype=np.intp)


def _quasi_stack(root: ComplexMatrix, patterns: Sequence[GroupPattern]) -> np.ndarray:
    """R^1/2 E for many patterns at once, shape (P, N_t, N_g)"""
    index = _group_index(patterns)
    # column g of R^1/2 E sums the root columns of group g
    return root[:, index].sum(axis=-1).transpose(1, 0, 2)


def _pattern_norms(root: ComplexMatrix, patterns: Sequence[GroupPattern]) -> np.ndarray:
    norms = np.empty(len(patterns))
    for start in range(0, len(patterns), SCORING_CHUNK):
        chunk = patterns[start : start + SCORING_CHUNK]
        stack = _quasi_stack(root, chunk)
        norms[start : start + len(chunk)] = np.linalg.norm(stack, axis=(1, 2))
    return norms


def _distance_matrix(stack: np.ndarray) -> np.ndarray:
    flat = stack.reshape(stack.shape[0], -1)
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms == 0.0):
        raise ZeroMatrix("A quasi-correlation matrix is zero")
    overlap = np.abs(flat.conj() @ flat.T) / np.outer(norms, norms)
    distance = np.clip(1.0 - overlap, 0.0, 1.0)
    np.fill_diagonal(distance, 0.0)
    return distance


def pattern_set_min_distance(r: ComplexMatrix, patterns: Sequence[GroupPattern]) -> float:
    """Smallest pairwise correlation matrix distance among quasi-correlation matrices"""
    if len(patterns) < 2:
        return 1.0
    distance = _distance_matrix(_quasi_stack(hermitian_sqrt(r), patterns))
    upper = np.triu_indices(len(patterns), 1)
    return float(distance[upper].min())


def _exhaustive_subset(distance: np.ndarray, size: int) -> tuple[int, ...]:
    combos = np.array(list(itertools.combinations(range(distance.shape[0]), size)), dtype=np.intp)
    rows, cols = np.triu_indices(size, 1)
    worst = distance[combos[:, rows], combos[:, cols]].min(axis=1)
    # argmax returns the first maximum, i.e. the lexicographically first subset
    return tuple(int(i) for i in combos[int(np.argmax(worst))])


def _greedy_subset(distance: np.ndarray, size: int) -> tuple[int, ...]:
    chosen = [0]
    nearest = distance[0].copy()
    nearest[0] = -1.0
    while len(chosen) < size:
        pick = int(np.argmax(nearest))
        chosen.append(pick)
        nearest = np.minimum(nearest, distance[pick])
        nearest[chosen] = -1.0
    return tuple(sorted(chosen))


def select_pattern_set(
    r: ComplexMatrix,
    n_t: int,
    n_g: int,
    b_p: int,
    j: int | None = None,
    strategy: Strategy = "packing",
    rng: np.random.Generator | None = None,
) -> PatternSet:
    """Screen patterns by quasi-correlation norm, then pick 2^b_p of them

    packing: max-min correlation matrix distance over the top-j pool
    (exhaustive when the subset count is within the combination cap,
    greedy farthest-point otherwise). adjacent: the top 2^b_p by norm.
    random: 2^b_p drawn uniformly from all patterns.
    """
    r = as_complex_matrix(r)
    if r.shape != (n_t, n_t):
        raise DimMismatch(f"Correlation {r.shape} does not match n_t={n_t}")
    if b_p < 0:
        raise ValueError(f"b_p must be non-negative, got {b_p}")
    candidates = enumerate_patterns(n_t, n_g)
    size = 2**b_p
    if size > len(candidates):
        raise InfeasibleHeader(f"2^{b_p} patterns requested but only {len(candidates)} exist")

    if strategy == "random":
        if rng is None:
            raise ValueError("Random pattern selection needs a random stream")
        picks = np.sort(rng.choice(len(candidates), size=size, replace=False))
        return PatternSet(patterns=tuple(candidates[int(i)] for i in picks), b_p=b_p)

    root = hermitian_sqrt(r)
    norms = _pattern_norms(root, candidates)
    order = np.argsort(-norms, kind="stable")

    if strategy == "adjacent" or size == 1:
        return PatternSet(patterns=tuple(candidates[int(i)] for i in order[:size]), b_p=b_p)
    if strategy != "packing":
        raise ValueError(f"Unknown pattern strategy: {strategy}")

    j = 4 * size if j is None else j
    if j < size:
        raise ValueError(f"Pool size j={j} is smaller than the set size {size}")
    j = min(j, len(candidates))
    pool = [candidates[int(i)] for i in order[:j]]
    distance = _distance_matrix(_quasi_stack(root, pool))

    subsets = int(comb(j, size, exact=True))
    if subsets <= get_settings().combination_cap:
        logger.info(f"Exhaustive pattern search over {subsets} subsets (n_t={n_t}, b_p={b_p})")
        chosen = _exhaustive_subset(distance, size)
    else:
        logger.info(f"Greedy pattern search: {subsets} subsets exceed the combination cap")
        chosen = _greedy_subset(distance, size)
    return PatternSet(patterns=tuple(pool[i] for i in chosen), b_p=b_p)


# ============================================================================
# SUB-ARRAYS
# ============================================================================


def _check_power_of_two(m: int) -> None:
    if m < 1 or m & (m - 1):
        raise NonDivisible(f"Sub-array count must be a power of two, got {m}")


def _split_counts(n_t1: int, n_t2: int, m: int) -> tuple[int, int]:
    """Number of row and column cuts that produce m sub-arrays"""
    _check_power_of_two(m)
    rows, cols = n_t1, n_t2
    row_parts, col_parts = 1, 1
    while row_parts * col_parts < m:
        if rows >= cols:
            if rows % 2:
                raise NonDivisible(f"Cannot halve {rows} rows")
            rows //= 2
            row_parts *= 2
        else:
            if cols % 2:
                raise NonDivisible(f"Cannot halve {cols} columns")
            cols //= 2
            col_parts *= 2
    return row_parts, col_parts


def partition_array(n_t1: int, n_t2: int, m: int) -> list[tuple[int, int]]:
    """Halve the larger axis (first axis on ties) until m congruent sub-arrays exist"""
    row_parts, col_parts = _split_counts(n_t1, n_t2, m)
    return [(n_t1 // row_parts, n_t2 // col_parts)] * m


def subarray_index_maps(n_t1: int, n_t2: int, m: int) -> list[tuple[int, ...]]:
    """Full-array antenna indices (row-major) of each sub-array, blocks in row-major order"""
    row_parts, col_parts = _split_counts(n_t1, n_t2, m)
    rows, cols = n_t1 // row_parts, n_t2 // col_parts
    maps = []
    for block_row in range(row_parts):
        for block_col in range(col_parts):
            maps.append(
                tuple(
                    (block_row * rows + i) * n_t2 + block_col * cols + k
                    for i in range(rows)
                    for k in range(cols)
                )
            )
    return maps


def compose_subarray_patterns(
    sub_sets: Sequence[PatternSet], sub_index_maps: Sequence[Sequence[int]]
) -> PatternSet:
    """Cartesian product of per-sub-array patterns lifted to full-array indices"""
    if len(sub_sets) != len(sub_index_maps) or not sub_sets:
        raise SizeMismatch("Need one index map per sub-array pattern set")
    if len({len(s) for s in sub_sets}) != 1:
        raise SizeMismatch(f"Sub-array set sizes differ: {[len(s) for s in sub_sets]}")
    for s, index_map in zip(sub_sets, sub_index_maps):
        if s.n_t != len(index_map):
            raise SizeMismatch(f"Index map of {len(index_map)} antennas vs sub-array n_t={s.n_t}")
    if len(sub_sets) == 1 and list(sub_index_maps[0]) == list(range(sub_sets[0].n_t)):
        return sub_sets[0]

    n_t = sum(s.n_t for s in sub_sets)
    n_g = sum(s.n_g for s in sub_sets)
    composed = []
    # itertools.product varies the last factor fastest: sub-array 0 is most significant
    for combo in itertools.product(*(s.patterns for s in sub_sets)):
        groups = [
            tuple(index_map[i] for i in group)
            for pattern, index_map in zip(combo, sub_index_maps)
            for group in pattern.groups
        ]
        composed.append(GroupPattern(n_t=n_t, n_g=n_g, groups=groups))
    return PatternSet(patterns=tuple(composed), b_p=sum(s.b_p for s in sub_sets))


def auto_partition(n_t: int, n_g: int, b_p: int) -> int:
    """Smallest power-of-two sub-array count whose enumeration fits the cap"""
    cap = get_settings().enumeration_cap
    m = 1
    while n_g % m == 0 and n_t % m == 0:
        if pattern_count(n_t // m, n_g // m) <= cap and b_p % m == 0:
            return m
        m *= 2
    raise CapExceeded(f"No sub-array split makes ({n_t}, {n_g}, b_p={b_p}) enumerable")


# ============================================================================
# CACHE FILES
# ============================================================================


def correlation_hash(r: ComplexMatrix) -> str:
    """Short stable digest of a correlation matrix"""
    rounded = np.round(np.asarray(r, dtype=np.complex128), 12) + 0.0
    return hashlib.sha256(rounded.tobytes()).hexdigest()[:16]


def save_pattern_set(patterns: PatternSet, path: Path, model_hash: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"n_t={patterns.n_t} n_g={patterns.n_g} b_p={patterns.b_p} model={model_hash}"]
    lines.extend(str(p) for p in patterns.patterns)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_pattern_set(path: Path, model_hash: str | None = None) -> PatternSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CacheFormatError(f"{path}: empty pattern cache")
    try:
        header = dict(field.split("=", 1) for field in lines[0].split())
        b_p = int(header["b_p"])
        patterns = tuple(GroupPattern.parse(line) for line in lines[1:] if line.strip())
        result = PatternSet(patterns=patterns, b_p=b_p)
    except (KeyError, ValueError) as e:
        raise CacheFormatError(f"{path}: {str(e)}") from e
    if (int(header["n_t"]), int(header["n_g"])) != (result.n_t, result.n_g):
        raise CacheFormatError(f"{path}: header shape disagrees with the patterns")
    if model_hash is not None and header.get("model") != model_hash:
        raise CacheFormatError(f"{path}: model hash {header.get('model')} != {model_hash}")
    return result


def array_pattern_set(
    r: ComplexMatrix,
    shape: tuple[int, int],
    n_g: int,
    b_p: int,
    m: int | None = None,
    j: int | None = None,
    strategy: Strategy = "packing",
    rng: np.random.Generator | None = None,
) -> PatternSet:
    """Pattern set for a (rows, cols) array, partitioned into m sub-arrays if needed"""
    n_t = shape[0] * shape[1]
    m = auto_partition(n_t, n_g, b_p) if m is None else m
    if n_g % m or b_p % m:
        raise NonDivisible(f"n_g={n_g} and b_p={b_p} must split evenly over {m} sub-arrays")

    settings = get_settings()
    cacheable = settings.use_cache and strategy != "random"
    model_hash = correlation_hash(r)
    path = settings.cache_dir / "patterns" / (
        f"ps_{model_hash}_a{shape[0]}x{shape[1]}_g{n_g}_p{b_p}_j{j or 0}_m{m}_{strategy}"
        f"_c{settings.combination_cap}_e{settings.enumeration_cap}.txt"
    )
    if cacheable and path.exists():
        try:
            cached = load_pattern_set(path, model_hash)
            logger.info(f"Pattern cache hit: {path}")
            return cached
        except CacheFormatError as e:
            logger.warning(f"Ignoring unreadable pattern cache: {str(e)}")

    maps = subarray_index_maps(shape[0], shape[1], m)
    sub_j = None if j is None else max(j // m, 2 ** (b_p // m))
    sub_sets = []
    for index_map in maps:
        sub_r = np.asarray(r)[np.ix_(index_map, index_map)]
        sub_sets.append(
            select_pattern_set(
                sub_r, len(index_map), n_g // m, b_p // m, sub_j, strategy, rng
            )
        )
    result = compose_subarray_patterns(sub_sets, maps)
    logger.info(
        f"Pattern set ready: {len(result)} of {subarray_pattern_count(n_t, n_g, m)} "
        f"patterns over {m} sub-array(s), {strategy}"
    )

    if cacheable:
        save_pattern_set(result, path, model_hash)
    return result
