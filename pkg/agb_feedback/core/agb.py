"""
AGB Encoder and Decoder
Reduce, quantize per pattern, expand and pick the pattern with least distortion
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from agb_feedback.core.codebook import (
    Codebook,
    ProductCodebook,
    joint_block_search,
    quantize,
    quantize_product,
    rotate_codebook_stack,
)
from agb_feedback.core.patterns import GroupPattern, PatternSet
from agb_feedback.exceptions import (
    AllPatternsDegenerate,
    DimMismatch,
    IndexOutOfRange,
    NullSpaceHit,
    SizeMismatch,
    ZeroReduced,
    ZeroVector,
)
from agb_feedback.utils.mathkit import (
    ComplexMatrix,
    ComplexVector,
    as_complex_matrix,
    as_complex_vector,
    hermitian_sqrt_batch,
)

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-12
NULL_TOL = 1e-12
SEARCH_CHUNK = 2**22


class FeedbackPacket(BaseModel):
    """Header (pattern index, b_p bits) followed by payload (codeword index)"""

    model_config = ConfigDict(frozen=True)

    pattern_index: int = Field(ge=0)
    codeword_index: int = Field(ge=0)
    b_p: int = Field(ge=0)
    b_total: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "FeedbackPacket":
        if self.b_p > self.b_total:
            raise ValueError(f"Header bits {self.b_p} exceed total bits {self.b_total}")
        if self.pattern_index >= 2**self.b_p:
            raise ValueError(f"Pattern index {self.pattern_index} needs more than {self.b_p} bits")
        if self.codeword_index >= 2**self.payload_bits:
            raise ValueError(
                f"Codeword index {self.codeword_index} needs more than {self.payload_bits} bits"
            )
        return self

    @property
    def payload_bits(self) -> int:
        return self.b_total - self.b_p

    def to_bits(self) -> str:
        """Big-endian bit string, header first, exactly b_total characters"""
        header = format(self.pattern_index, f"0{self.b_p}b") if self.b_p else ""
        payload = format(self.codeword_index, f"0{self.payload_bits}b") if self.payload_bits else ""
        return header + payload

    @classmethod
    def from_bits(cls, bits: str, b_p: int) -> "FeedbackPacket":
        if set(bits) - {"0", "1"}:
            raise ValueError("Packet bits must be a string of 0 and 1")
        header, payload = bits[:b_p], bits[b_p:]
        return cls(
            pattern_index=int(header, 2) if header else 0,
            codeword_index=int(payload, 2) if payload else 0,
            b_p=b_p,
            b_total=len(bits),
        )


class SearchComplexity(BaseModel):
    """Codeword-search operation counts of the two feedback schemes"""

    conventional: int
    agb: int


@dataclass(frozen=True)
class PatternLayout:
    """Index arrays describing a pattern set, shared by every user's context

    group_index:   (P, N_g, kappa) antenna indices of each group
    antenna_group: (P, N_t) group position of each antenna
    positions:     (P, M, N_g/M) reduced-vector positions quantized by each block
    """

    patterns: PatternSet
    group_index: NDArray[np.intp]
    antenna_group: NDArray[np.intp]
    positions: NDArray[np.intp]

    @property
    def blocks(self) -> int:
        return self.positions.shape[1]

    @property
    def block_dim(self) -> int:
        return self.positions.shape[2]


def build_layout(
    patterns: PatternSet, index_maps: Sequence[Sequence[int]] | None = None
) -> PatternLayout:
    """Index arrays for a pattern set; index_maps split the reduced vector into blocks"""
    n_t, n_g = patterns.n_t, patterns.n_g
    maps = [tuple(range(n_t))] if index_maps is None else [tuple(m) for m in index_maps]
    owner = np.empty(n_t, dtype=np.intp)
    for block, index_map in enumerate(maps):
        owner[list(index_map)] = block

    group_index = np.array([p.groups for p in patterns.patterns], dtype=np.intp)
    antenna_group = np.empty((len(patterns), n_t), dtype=np.intp)
    positions = []
    for i, pattern in enumerate(patterns.patterns):
        for g, members in enumerate(pattern.groups):
            antenna_group[i, list(members)] = g
        per_block = [
            [g for g, members in enumerate(pattern.groups) if owner[members[0]] == block]
            for block in range(len(maps))
        ]
        if len({len(b) for b in per_block}) != 1:
            raise SizeMismatch(f"Pattern {pattern} does not split evenly over the blocks")
        positions.append(per_block)
    return PatternLayout(
        patterns=patterns,
        group_index=group_index,
        antenna_group=antenna_group,
        positions=np.array(positions, dtype=np.intp),
    )


@dataclass(frozen=True)
class AgbContext:
    """Pattern layout plus the square roots of R_(t,A(i)) for every pattern and block

    The statistic codebook of (pattern i, block m) is the shared base packing
    rotated by roots[i, m]; codewords are formed on demand during the search.
    `phase` is the unit-modulus per-antenna rotation D: the encoder groups
    D^H h and the decoder returns D times the expanded codeword.
    """

    layout: PatternLayout
    roots: NDArray[np.complex128]
    base: Codebook
    conventional: Codebook | ProductCodebook | None = None
    phase: NDArray[np.complex128] | None = None

    @property
    def patterns(self) -> PatternSet:
        return self.layout.patterns

    @property
    def b_p(self) -> int:
        return self.layout.patterns.b_p

    @property
    def payload_bits(self) -> int:
        return self.base.bits * self.layout.blocks

    @property
    def b_total(self) -> int:
        return self.b_p + self.payload_bits

    @property
    def block_size(self) -> int:
        return self.base.size

    def codebook(self, pattern: int, block: int = 0) -> Codebook:
        """Statistic codebook of one pattern and block"""
        rotated = rotate_codebook_stack(self.roots[pattern, block][None], self.base)
        return Codebook(rotated[0])

    def align(self, h: ComplexVector) -> ComplexVector:
        return h if self.phase is None else self.phase.conj() * h

    def restore(self, v: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return v if self.phase is None else self.phase * v


def dominant_phase(r: ComplexMatrix) -> NDArray[np.complex128]:
    """Unit-modulus phases of the dominant eigenvector of R, largest entry real

    Rotating by their conjugate makes that eigenvector real and non-negative,
    which undoes a linear phase ramp exp(j theta n) in an exponential or
    steering-vector correlation.
    """
    r = as_complex_matrix(r)
    _, vectors = np.linalg.eigh(r)
    u = vectors[:, -1]
    anchor = u[np.argmax(np.abs(u))]
    u = u * (abs(anchor) / anchor)
    magnitude = np.abs(u)
    phase = np.ones_like(u)
    nonzero = magnitude > ZERO_TOL
    phase[nonzero] = u[nonzero] / magnitude[nonzero]
    return phase


def build_context(
    r: ComplexMatrix,
    layout: PatternLayout,
    base: Codebook,
    conventional: Codebook | ProductCodebook | None = None,
    align: bool = True,
) -> AgbContext:
    """Square roots of R_(t,A(i)) restricted to each block

    A(i) takes the lowest antenna index of each group as its representative.
    With `align`, R is first rotated to D^H R D by its dominant-eigenvector
    phases so a user-specific phase ramp does not defeat the fixed patterns.
    """
    r = as_complex_matrix(r)
    n_t = layout.patterns.n_t
    if r.shape != (n_t, n_t):
        raise DimMismatch(f"Correlation {r.shape} does not match n_t={n_t}")
    if base.dim != layout.block_dim:
        raise DimMismatch(f"Base codebook dim {base.dim} vs block dim {layout.block_dim}")

    phase = dominant_phase(r) if align else None
    if phase is not None:
        r = phase.conj()[:, None] * r * phase[None, :]

    # representative antenna of every (pattern, block, position)
    reps = layout.group_index[:, :, 0]
    block_reps = np.take_along_axis(
        reps[:, None, :].repeat(layout.blocks, axis=1), layout.positions, axis=2
    )
    sub_r = r[block_reps[..., :, None], block_reps[..., None, :]]
    roots = hermitian_sqrt_batch(sub_r.reshape(-1, layout.block_dim, layout.block_dim))
    return AgbContext(
        layout=layout,
        roots=roots.reshape(len(layout.patterns), layout.blocks, base.dim, base.dim),
        base=base,
        conventional=conventional,
        phase=phase,
    )


def reduce(h: ComplexVector, p: GroupPattern) -> ComplexVector:
    """h_r = G h: group averages"""
    h = as_complex_vector(h)
    if h.shape[0] != p.n_t:
        raise DimMismatch(f"Channel dim {h.shape[0]} vs pattern n_t={p.n_t}")
    return np.array([h[list(g)].mean() for g in p.groups], dtype=np.complex128)


def expand(v: ComplexVector, p: GroupPattern) -> ComplexVector:
    """E v: each reduced entry copied to its group positions"""
    v = as_complex_vector(v)
    if v.shape[0] != p.n_g:
        raise DimMismatch(f"Reduced dim {v.shape[0]} vs pattern n_g={p.n_g}")
    out = np.empty(p.n_t, dtype=np.complex128)
    for g, members in enumerate(p.groups):
        out[list(members)] = v[g]
    return out


def agb_distortion(h: ComplexVector, h_tilde: ComplexVector) -> float:
    """||h||^2 (1 - |h_bar^H h_tilde / ||h_tilde|| |^2)"""
    h = as_complex_vector(h)
    h_tilde = as_complex_vector(h_tilde)
    if h.shape != h_tilde.shape:
        raise DimMismatch(f"Shapes differ: {h.shape} vs {h_tilde.shape}")
    power = float(np.vdot(h, h).real)
    tilde_norm = np.linalg.norm(h_tilde)
    if power <= ZERO_TOL**2 or tilde_norm <= ZERO_TOL:
        raise ZeroVector("Distortion needs nonzero vectors")
    captured = abs(np.vdot(h, h_tilde)) ** 2 / (power * tilde_norm**2)
    return power * (1.0 - min(captured, 1.0))


def reduced_direction(h: ComplexVector, p: GroupPattern) -> ComplexVector:
    """Unit-norm G h; ZeroReduced if the group averages vanish"""
    h_r = reduce(h, p)
    norm = np.linalg.norm(h_r)
    if norm <= ZERO_TOL:
        raise ZeroReduced(f"Reduced vector vanishes for pattern {p}")
    return h_r / norm


def _search_patterns(
    roots: NDArray[np.complex128], vectors: NDArray[np.complex128], base: Codebook
) -> NDArray[np.intp]:
    """Per-pattern block indices maximizing |sum_m u_m^H S_m f_(i_m) / ||S_m f_(i_m)|| |^2

    roots: (P, M, d, d), vectors: (P, M, d). A single block reduces to
    argmax_i |u^H S f_i|^2 / ||S f_i||^2 with the lowest i on ties; several
    blocks are searched jointly over the whole product set.
    """
    count, blocks = roots.shape[:2]
    chunk = max(1, SEARCH_CHUNK // (base.size * base.dim * blocks))
    best = np.empty((count, blocks), dtype=np.intp)
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        rotated = base.entries @ np.swapaxes(roots[start:stop], -1, -2)
        power = np.sum(np.abs(rotated) ** 2, axis=-1)
        if np.any(power <= NULL_TOL**2):
            raise NullSpaceHit("A rotated codeword lies in the null space of its correlation")
        scores = (rotated @ vectors[start:stop, :, :, None].conj())[..., 0] / np.sqrt(power)
        if blocks == 1:
            best[start:stop, 0] = np.argmax(np.abs(scores[:, 0]) ** 2, axis=1)
            continue
        for row in range(stop - start):
            best[start + row] = joint_block_search(list(scores[row]))
    return best


def _assemble(ctx: AgbContext, rows: np.ndarray, block_indices: np.ndarray) -> np.ndarray:
    """Expanded unit-norm directions for patterns `rows` and their per-block indices"""
    layout = ctx.layout
    codewords = ctx.base.entries[block_indices]
    picked = np.einsum("rmij,rmj->rmi", ctx.roots[rows], codewords)
    picked /= np.linalg.norm(picked, axis=-1, keepdims=True)
    reduced = np.zeros((rows.shape[0], layout.patterns.n_g), dtype=np.complex128)
    np.put_along_axis(
        reduced,
        layout.positions[rows].reshape(rows.shape[0], -1),
        picked.reshape(rows.shape[0], -1),
        axis=1,
    )
    expanded = np.take_along_axis(reduced, layout.antenna_group[rows], axis=1)
    return expanded / np.linalg.norm(expanded, axis=1, keepdims=True)


def _flat_index(block_indices: np.ndarray, block_size: int) -> int:
    flat = 0
    for index in block_indices:
        flat = flat * block_size + int(index)
    return flat


def agb_encode_detail(
    h: ComplexVector, ctx: AgbContext
) -> tuple[FeedbackPacket, float, ComplexVector]:
    """Packet plus the winning distortion and decoded unit-norm direction"""
    h = as_complex_vector(h)
    layout = ctx.layout
    if h.shape[0] != layout.patterns.n_t:
        raise DimMismatch(f"Channel dim {h.shape[0]} vs n_t={layout.patterns.n_t}")
    power = float(np.vdot(h, h).real)
    if power <= ZERO_TOL**2:
        raise ZeroVector("Cannot encode a zero channel")

    aligned = ctx.align(h)
    reduced = aligned[layout.group_index].mean(axis=-1)
    norms = np.linalg.norm(reduced, axis=1)
    valid = norms > ZERO_TOL
    if not np.any(valid):
        raise AllPatternsDegenerate("Every pattern produced a vanishing reduced vector")
    if not np.all(valid):
        logger.warning(f"Skipping {int((~valid).sum())} degenerate pattern(s)")

    rows = np.flatnonzero(valid)
    directions = reduced[rows] / norms[rows, None]
    block_vectors = directions[np.arange(rows.shape[0])[:, None, None], layout.positions[rows]]
    block_indices = _search_patterns(ctx.roots[rows], block_vectors, ctx.base)

    candidates = _assemble(ctx, rows, block_indices)
    captured = np.abs(candidates @ aligned.conj()) ** 2 / power
    distortion = power * (1.0 - np.minimum(captured, 1.0))
    best = int(np.argmin(distortion))

    packet = FeedbackPacket(
        pattern_index=int(rows[best]),
        codeword_index=_flat_index(block_indices[best], ctx.block_size),
        b_p=ctx.b_p,
        b_total=ctx.b_total,
    )
    return packet, float(distortion[best]), ctx.restore(candidates[best])


def agb_encode(h: ComplexVector, ctx: AgbContext) -> FeedbackPacket:
    """Distortion-minimizing (pattern, codeword) pair, lowest pattern index on ties"""
    packet, _, _ = agb_encode_detail(h, ctx)
    return packet


def agb_decode(pkt: FeedbackPacket, ctx: AgbContext) -> ComplexVector:
    """Expanded codeword of the packet, normalized to unit norm"""
    if pkt.b_p != ctx.b_p or pkt.b_total != ctx.b_total:
        raise IndexOutOfRange(
            f"Packet split ({pkt.b_p}, {pkt.b_total}) vs context ({ctx.b_p}, {ctx.b_total})"
        )
    if pkt.pattern_index >= len(ctx.patterns):
        raise IndexOutOfRange(f"Pattern index {pkt.pattern_index} out of range")
    if pkt.codeword_index >= ctx.block_size**ctx.layout.blocks:
        raise IndexOutOfRange(f"Codeword index {pkt.codeword_index} out of range")

    indices = []
    flat = pkt.codeword_index
    for _ in range(ctx.layout.blocks):
        flat, index = divmod(flat, ctx.block_size)
        indices.append(index)
    block_indices = np.array([indices[::-1]], dtype=np.intp)
    return ctx.restore(_assemble(ctx, np.array([pkt.pattern_index]), block_indices)[0])


def _direction(h: ComplexVector) -> ComplexVector:
    h = as_complex_vector(h)
    norm = np.linalg.norm(h)
    if norm <= ZERO_TOL:
        raise ZeroVector("Cannot quantize a zero channel")
    return h / norm


def conventional_encode(h: ComplexVector, codebook: Codebook | ProductCodebook) -> int:
    """Codeword index of h_bar; product codebooks return the mixed-radix index"""
    direction = _direction(h)
    if isinstance(codebook, ProductCodebook):
        return codebook.flat_index(quantize_product(direction, codebook))
    index, _ = quantize(direction, codebook)
    return index


def conventional_decode(index: int, codebook: Codebook | ProductCodebook) -> ComplexVector:
    if isinstance(codebook, ProductCodebook):
        if not 0 <= index < 2**codebook.bits:
            raise IndexOutOfRange(f"Codeword index {index} out of range")
        return codebook.codeword(codebook.split_index(index))
    if not 0 <= index < codebook.size:
        raise IndexOutOfRange(f"Codeword index {index} out of range")
    return codebook.entries[index]


def required_bits_conventional(n_t: int, p_db: float) -> float:
    """(N_t - 1)/3 * P_dB"""
    return (n_t - 1) / 3.0 * p_db


def search_complexity(n_t: int, n_g: int, b: int, b_p: int) -> SearchComplexity:
    """N_t 2^B inner-product terms against 2^b_p N_g 2^(B - b_p)"""
    if b_p > b:
        raise ValueError(f"Header bits {b_p} exceed total bits {b}")
    return SearchComplexity(
        conventional=n_t * 2**b,
        agb=2**b_p * n_g * 2 ** (b - b_p),
    )
