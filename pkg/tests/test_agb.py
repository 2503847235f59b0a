"""Tests for core/agb.py"""

import itertools
import math

import numpy as np
import pytest

from agb_feedback.core.agb import (
    FeedbackPacket,
    agb_decode,
    agb_distortion,
    agb_encode,
    agb_encode_detail,
    build_context,
    build_layout,
    conventional_decode,
    conventional_encode,
    dominant_phase,
    expand,
    reduce,
    reduced_direction,
    required_bits_conventional,
    search_complexity,
)
from agb_feedback.core.channel import ExponentialSpec, exponential_correlation
from agb_feedback.core.codebook import (
    Codebook,
    ProductCodebook,
    line_packing_codebook,
    quantize,
    rvq_codebook,
    statistic_codebook,
)
from agb_feedback.core.patterns import (
    GroupPattern,
    PatternSet,
    array_pattern_set,
    select_pattern_set,
    subarray_index_maps,
)
from agb_feedback.exceptions import (
    AllPatternsDegenerate,
    DimMismatch,
    IndexOutOfRange,
    SizeMismatch,
    ZeroReduced,
    ZeroVector,
)
from agb_feedback.utils.mathkit import hermitian_sqrt
from agb_feedback.utils.random_streams import complex_gaussian, make_stream


def _toy_context(patterns=("0 1|2 3", "0 2|1 3")):
    pattern_set = PatternSet(
        patterns=tuple(GroupPattern.parse(p) for p in patterns),
        b_p=int(math.log2(len(patterns))),
    )
    base = Codebook(
        np.array(
            [
                [1.0, 0.0],
                [0.0, 1.0],
                np.array([1.0, 2.0j]) / math.sqrt(5.0),
                np.array([1.0, 1.0]) / math.sqrt(2.0),
            ],
            dtype=np.complex128,
        )
    )
    return build_context(np.eye(4), build_layout(pattern_set), base, align=False)


def _scalar_encode(h, r, patterns, base):
    """Per-pattern quantize, expand, then least distortion with the lowest index on ties"""
    best = None
    for i, p in enumerate(patterns):
        reps = [g[0] for g in p.groups]
        codebook = statistic_codebook(r[np.ix_(reps, reps)], base)
        index, c = quantize(reduced_direction(h, p), codebook)
        d = agb_distortion(h, expand(c, p))
        if best is None or d < best[2] - 1e-12:
            best = (i, index, d)
    return best


@pytest.mark.unit
class TestPacket:
    def test_bits(self):
        packet = FeedbackPacket(pattern_index=2, codeword_index=5, b_p=2, b_total=6)
        assert packet.to_bits() == "100101"
        assert FeedbackPacket.from_bits("100101", 2) == packet

    def test_zero_header(self):
        packet = FeedbackPacket(pattern_index=0, codeword_index=3, b_p=0, b_total=2)
        assert packet.to_bits() == "11"

    @pytest.mark.parametrize(
        "fields",
        [
            {"pattern_index": 4, "codeword_index": 0, "b_p": 2, "b_total": 6},
            {"pattern_index": 0, "codeword_index": 16, "b_p": 2, "b_total": 6},
            {"pattern_index": 0, "codeword_index": 0, "b_p": 3, "b_total": 2},
        ],
    )
    def test_out_of_range(self, fields):
        with pytest.raises(ValueError):
            FeedbackPacket(**fields)

    def test_bad_bit_string(self):
        with pytest.raises(ValueError):
            FeedbackPacket.from_bits("10a1", 1)


@pytest.mark.unit
class TestReduceExpand:
    def test_reduce_is_group_average(self):
        p = GroupPattern.parse("0 2|1 3")
        np.testing.assert_allclose(reduce(np.array([1, 2j, 3, 4j]), p), [2.0, 3j])

    def test_expand_copies(self):
        p = GroupPattern.parse("0 3|1 2")
        np.testing.assert_allclose(expand(np.array([1.0, 2.0]), p), [1.0, 2.0, 2.0, 1.0])

    def test_reduce_after_expand(self, rng):
        p = GroupPattern.parse("0 4|1 5|2 3")
        v = complex_gaussian(rng, 3)
        np.testing.assert_allclose(reduce(expand(v, p), p), v)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            reduce(np.ones(3), GroupPattern.adjacent(4, 2))

    def test_zero_reduced(self):
        with pytest.raises(ZeroReduced):
            reduced_direction(np.array([1.0, -1.0, 1.0, -1.0]), GroupPattern.adjacent(4, 2))


@pytest.mark.unit
class TestDistortion:
    def test_example(self):
        assert agb_distortion(np.array([1, 1, 0, 0]), np.array([1, 1, 1, 1])) == pytest.approx(1.0)

    def test_aligned_is_zero(self, rng):
        h = complex_gaussian(rng, 5)
        assert agb_distortion(h, 3j * h) == pytest.approx(0.0, abs=1e-12)

    def test_bounds(self, rng):
        h = complex_gaussian(rng, 5)
        d = agb_distortion(h, complex_gaussian(rng, 5))
        assert 0.0 <= d <= np.vdot(h, h).real

    def test_invariant_to_unit_modulus_rotation(self, rng):
        h = complex_gaussian(rng, 6)
        h_tilde = complex_gaussian(rng, 6)
        d = agb_distortion(h, h_tilde)
        assert agb_distortion(np.exp(0.7j) * h, h_tilde) == pytest.approx(d, rel=1e-12)
        assert agb_distortion(h, np.exp(-2.1j) * h_tilde) == pytest.approx(d, rel=1e-12)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            agb_distortion(np.zeros(2), np.ones(2))


@pytest.mark.unit
class TestEncodeDecode:
    def test_zero_loss_instance(self):
        ctx = _toy_context()
        h = np.array([1.0, 2j, 1.0, 2j])
        packet, distortion, direction = agb_encode_detail(h, ctx)
        assert (packet.pattern_index, packet.codeword_index) == (1, 2)
        assert distortion == pytest.approx(0.0, abs=1e-12)
        assert agb_distortion(h, agb_decode(packet, ctx)) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(direction, agb_decode(packet, ctx))

    def test_context_bits(self):
        ctx = _toy_context()
        assert (ctx.b_p, ctx.payload_bits, ctx.b_total) == (1, 2, 3)
        np.testing.assert_allclose(ctx.codebook(1).entries, ctx.base.entries)

    def test_degenerate_patterns_are_skipped(self):
        h = np.array([1.0, -1.0, 1.0, -1.0])
        assert agb_encode(h, _toy_context()).pattern_index == 1

    def test_all_degenerate(self):
        h = np.array([1.0, -1.0, 1.0, -1.0])
        with pytest.raises(AllPatternsDegenerate):
            agb_encode(h, _toy_context(patterns=("0 1|2 3",)))

    def test_zero_channel(self):
        with pytest.raises(ZeroVector):
            agb_encode(np.zeros(4), _toy_context())

    def test_matches_scalar_search(self, rng):
        r = exponential_correlation(ExponentialSpec(n_t=8, alpha=0.8, theta=0.6))
        patterns = select_pattern_set(r, 8, 4, b_p=2)
        base = line_packing_codebook(4, 4, make_stream(17))
        ctx = build_context(r, build_layout(patterns), base, align=False)
        root = hermitian_sqrt(r)
        for _ in range(25):
            h = root @ complex_gaussian(rng, 8)
            packet, distortion, _ = agb_encode_detail(h, ctx)
            index, codeword, expected = _scalar_encode(h, r, patterns.patterns, base)
            assert (packet.pattern_index, packet.codeword_index) == (index, codeword)
            assert distortion == pytest.approx(expected, abs=1e-9)

    def test_distortion_is_least_over_patterns(self, rng):
        r = exponential_correlation(ExponentialSpec(n_t=8, alpha=0.5))
        patterns = select_pattern_set(r, 8, 4, b_p=2)
        ctx = build_context(r, build_layout(patterns), line_packing_codebook(4, 3, make_stream(3)))
        h = complex_gaussian(rng, 8)
        _, distortion, _ = agb_encode_detail(h, ctx)
        single = []
        for p in patterns.patterns:
            layout = build_layout(PatternSet(patterns=(p,), b_p=0))
            single.append(agb_encode_detail(h, build_context(r, layout, ctx.base))[1])
        assert distortion == pytest.approx(min(single), abs=1e-12)

    def test_decode_checks_split(self):
        ctx = _toy_context()
        with pytest.raises(IndexOutOfRange):
            agb_decode(FeedbackPacket(pattern_index=0, codeword_index=0, b_p=0, b_total=2), ctx)

    def test_base_dim_mismatch(self):
        layout = build_layout(PatternSet(patterns=(GroupPattern.adjacent(4, 2),), b_p=0))
        with pytest.raises(DimMismatch):
            build_context(np.eye(4), layout, rvq_codebook(3, 1, make_stream(1)))


@pytest.mark.unit
class TestProductMode:
    def _context(self):
        r = exponential_correlation(ExponentialSpec(n_t=8, alpha=0.7, theta=-0.4))
        patterns = array_pattern_set(r, (1, 8), n_g=4, b_p=2, m=2)
        maps = subarray_index_maps(1, 8, 2)
        layout = build_layout(patterns, maps)
        return r, build_context(r, layout, line_packing_codebook(2, 2, make_stream(5)))

    def test_layout(self):
        _, ctx = self._context()
        assert (ctx.layout.blocks, ctx.layout.block_dim) == (2, 2)
        assert (ctx.b_p, ctx.payload_bits) == (2, 4)

    def test_decode_matches_encoder_direction(self, rng):
        r, ctx = self._context()
        root = hermitian_sqrt(r)
        for _ in range(10):
            h = root @ complex_gaussian(rng, 8)
            packet, distortion, direction = agb_encode_detail(h, ctx)
            decoded = agb_decode(packet, ctx)
            np.testing.assert_allclose(decoded, direction, atol=1e-12)
            assert np.linalg.norm(decoded) == pytest.approx(1.0)
            assert agb_distortion(h, decoded) == pytest.approx(distortion, abs=1e-9)

    def test_search_covers_the_whole_product_set(self, rng):
        r, ctx = self._context()
        layout = ctx.layout
        root = hermitian_sqrt(r)
        for _ in range(20):
            h = root @ complex_gaussian(rng, 8)
            _, distortion, _ = agb_encode_detail(h, ctx)
            best = math.inf
            for i, pattern in enumerate(layout.patterns.patterns):
                books = [ctx.codebook(i, m).entries for m in range(layout.blocks)]
                for combo in itertools.product(range(ctx.block_size), repeat=layout.blocks):
                    reduced = np.zeros(pattern.n_g, dtype=np.complex128)
                    for m, index in enumerate(combo):
                        reduced[layout.positions[i, m]] = books[m][index]
                    best = min(best, agb_distortion(h, ctx.restore(expand(reduced, pattern))))
            assert distortion == pytest.approx(best, abs=1e-9)

    def test_uneven_blocks_rejected(self):
        patterns = PatternSet(patterns=(GroupPattern.parse("0 4|1 2|3 5|6 7"),), b_p=0)
        with pytest.raises(SizeMismatch):
            build_layout(patterns, [(0, 1, 2, 3), (4, 5, 6, 7)])


@pytest.mark.unit
class TestPhaseAlignment:
    def _setup(self, theta):
        common = exponential_correlation(ExponentialSpec(n_t=8, alpha=0.9))
        user = exponential_correlation(ExponentialSpec(n_t=8, alpha=0.9, theta=theta))
        layout = build_layout(select_pattern_set(common, 8, 4, b_p=2))
        return common, user, layout, line_packing_codebook(4, 4, make_stream(17))

    def test_dominant_phase_undoes_ramp(self):
        common, user, _, _ = self._setup(2.0)
        phase = dominant_phase(user)
        np.testing.assert_allclose(np.abs(phase), 1.0)
        np.testing.assert_allclose(phase.conj()[:, None] * user * phase[None, :], common, atol=1e-9)

    def test_identity_keeps_unit_phases(self):
        np.testing.assert_allclose(dominant_phase(np.eye(4)), np.ones(4))

    def test_ramped_user_encodes_like_common(self, rng):
        common, user, layout, base = self._setup(2.0)
        ctx_user = build_context(user, layout, base)
        ctx_common = build_context(common, layout, base, align=False)
        root = hermitian_sqrt(user)
        for _ in range(20):
            h = root @ complex_gaussian(rng, 8)
            packet, distortion, _ = agb_encode_detail(h, ctx_user)
            expected_packet, expected, _ = agb_encode_detail(ctx_user.align(h), ctx_common)
            assert packet == expected_packet
            assert distortion == pytest.approx(expected, abs=1e-9)
            decoded = agb_decode(packet, ctx_user)
            assert agb_distortion(h, decoded) == pytest.approx(distortion, abs=1e-9)

    def test_alignment_lowers_mean_distortion(self, rng):
        _, user, layout, base = self._setup(2.0)
        aligned = build_context(user, layout, base)
        raw = build_context(user, layout, base, align=False)
        root = hermitian_sqrt(user)
        gains = []
        for _ in range(200):
            h = root @ complex_gaussian(rng, 8)
            gains.append(agb_encode_detail(h, raw)[1] - agb_encode_detail(h, aligned)[1])
        assert np.mean(gains) > 0.0


@pytest.mark.unit
class TestConventional:
    def test_round_trip(self, rng):
        codebook = rvq_codebook(4, 3, rng)
        h = 2.0 * codebook[6]
        index = conventional_encode(h, codebook)
        assert index == 6
        np.testing.assert_array_equal(conventional_decode(index, codebook), codebook[6])

    def test_product(self, rng):
        product = ProductCodebook(
            blocks=(rvq_codebook(2, 2, rng), rvq_codebook(2, 2, rng)),
            index_maps=((0, 1), (2, 3)),
        )
        h = complex_gaussian(rng, 4)
        index = conventional_encode(h, product)
        assert 0 <= index < 16
        word = conventional_decode(index, product)
        assert np.linalg.norm(word) == pytest.approx(1.0)

    def test_decode_range(self, rng):
        with pytest.raises(IndexOutOfRange):
            conventional_decode(8, rvq_codebook(2, 3, rng))

    def test_zero_channel(self, rng):
        with pytest.raises(ZeroVector):
            conventional_encode(np.zeros(2), rvq_codebook(2, 1, rng))


@pytest.mark.unit
class TestCounts:
    def test_required_bits_conventional(self):
        assert required_bits_conventional(64, 10) == pytest.approx(210.0)

    def test_search_complexity(self):
        counts = search_complexity(16, 8, 16, 8)
        assert (counts.conventional, counts.agb) == (1_048_576, 524_288)

    def test_search_complexity_rejects_header_overflow(self):
        with pytest.raises(ValueError):
            search_complexity(16, 8, 4, 8)
