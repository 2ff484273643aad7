from fractions import Fraction

import pytest

from stopkey.dyadic import (
    ROUND_WEIGHT_ENTROPY,
    DyadicDecomposition,
    KnuthYaoSampler,
    assign_codewords,
    decompose,
    half_split,
    knuth_yao_sample,
    round_weight_partial_entropy,
)
from stopkey.errors import ValidationError
from stopkey.keylaws import PrefixCodebook
from stopkey.probability import dyadic_exponent, entropy, is_dyadic
from stopkey.randomsource import RandomSource

from conftest import CORPUS, pmf, random_rational_pmf


class TestHalfSplit:
    def test_removes_exactly_half(self, corpus_pmf):
        s = half_split(corpus_pmf.sub())
        assert sum(s.removed, Fraction(0)) == Fraction(1, 2)
        assert is_dyadic(s.conditional)
        assert all(m >= 0 for m in s.residual.masses)

    def test_randomized_pmfs(self):
        rng = RandomSource("half-split")
        for _ in range(80):
            p = random_rational_pmf(rng)
            s = half_split(p.sub())
            assert sum(s.removed, Fraction(0)) == Fraction(1, 2)
            assert is_dyadic(s.conditional)
            # conditional is the removed mass renormalized by the half
            for r, c in zip(s.removed, s.conditional.masses):
                assert c == 2 * r

    def test_single_symbol_residual_split_by_fiat(self):
        s = half_split(CORPUS["point"].sub())
        assert s.removed == (Fraction(1, 2),)
        assert s.conditional.masses == (Fraction(1),)

    def test_zero_total_rejected(self):
        from stopkey.probability import SubPmf

        with pytest.raises(ValidationError):
            half_split(SubPmf(("a",), (Fraction(0),), Fraction(1)))


class TestDecomposition:
    def test_reconstruction_identity_per_symbol(self, corpus_pmf):
        """Round masses plus the residual rebuild the source exactly."""
        dec = decompose(corpus_pmf)
        for w in (1, 5, 17, 40):
            assert dec.reconstruction_defect(w) == (Fraction(0),) * len(corpus_pmf)

    def test_reconstruction_identity_randomized(self):
        rng = RandomSource("reconstruct")
        for _ in range(25):
            p = random_rational_pmf(rng)
            dec = decompose(p)
            w = 1 + rng.randrange(40)
            assert all(d == 0 for d in dec.reconstruction_defect(w))

    def test_round_weights_and_residual_mass(self, corpus_pmf):
        dec = decompose(corpus_pmf)
        for rnd in dec.rounds(12):
            assert rnd.weight == Fraction(1, 1 << rnd.w)
            assert is_dyadic(rnd.conditional)
        assert dec.residual_after(12).total == Fraction(1, 1 << 12)

    def test_codewords_full_prefix_free_on_support(self, corpus_pmf):
        """Each round's codeword set is a full prefix-free codebook, with
        codeword lengths the negative logs of the conditional masses."""
        dec = decompose(corpus_pmf)
        for rnd in dec.rounds(10):
            book = PrefixCodebook(tuple(rnd.codewords.values()))
            assert book.is_full
            for i, code in rnd.codewords.items():
                assert len(code) == dyadic_exponent(rnd.conditional.masses[i])

    def test_geometric_weight_entropy_is_two(self):
        assert ROUND_WEIGHT_ENTROPY == 2
        assert round_weight_partial_entropy(10) == 2 - Fraction(12, 1 << 10)
        # partial sums converge monotonically from below
        prev = Fraction(0)
        for n in range(1, 20):
            cur = round_weight_partial_entropy(n)
            assert prev < cur < 2
            prev = cur

    def test_two_symbol_uniform_rounds_are_alternating_points(self):
        # a dyadic uniform pair never splits both symbols in one round:
        # round 1 takes all of symbol 0, round 2 all of symbol 1
        rounds = decompose(CORPUS["uniform2"]).rounds(2)
        assert rounds[0].codewords == {0: ""}
        assert rounds[1].codewords == {1: ""}

    def test_uniform_pair_conditional_gets_single_bit_codewords(self):
        conditional = pmf("1/2", "1/2")
        assert assign_codewords(conditional, (0, 1)) == {0: "0", 1: "1"}

    def test_cycle_detected_for_uniform3(self):
        dec = decompose(CORPUS["uniform3"])
        dec.rounds(8)
        assert dec.cycle is not None
        # rounds alternate: split a,b then close out c
        r = dec.rounds(4)
        assert r[0].codewords == {0: "0", 1: "1"}
        assert r[1].codewords == {2: ""}
        assert r[2].codewords == {0: "0", 1: "1"}
        assert r[3].codewords == {2: ""}

    def test_dyadic_source_terminates_in_point_rounds(self):
        # (1/2, 1/4, 1/4): every round removes one whole symbol
        for rnd in decompose(CORPUS["dyadic3"]).rounds(6):
            assert list(rnd.codewords.values()) == [""]


class TestAlgorithmTrace:
    """Frozen hand-execution of the greedy on (2/5, 3/10, 1/5, 1/10).

    Round 1 budget 1/2: sorted masses (2/5, 3/10, 1/5, 1/10) admit
    chunks 1/4 (symbol 0) and 1/4 (symbol 1). Round 2 budget 1/4 on
    residual (3/20, 1/20, 1/5, 1/10): sorted order puts symbol 2 first
    (chunk 1/8), then symbol 0 (chunk 1/8)."""

    def test_round_one(self):
        rnd = decompose(CORPUS["tenths"]).round(1)
        assert rnd.removed(0) == Fraction(1, 4)
        assert rnd.removed(1) == Fraction(1, 4)
        assert rnd.removed(2) == 0 and rnd.removed(3) == 0
        assert rnd.codewords == {0: "0", 1: "1"}

    def test_round_two(self):
        rnd = decompose(CORPUS["tenths"]).round(2)
        assert rnd.removed(2) == Fraction(1, 8)
        assert rnd.removed(0) == Fraction(1, 8)
        assert rnd.codewords == {2: "0", 0: "1"}

    def test_rounds_are_cached_values(self):
        dec = decompose(CORPUS["tenths"])
        assert dec.round(3) is dec.round(3)


class TestKnuthYao:
    def test_point_mass_costs_zero_bits(self):
        sym, bits = knuth_yao_sample(CORPUS["point"], RandomSource(0))
        assert (sym, bits) == (0, 0)

    def test_uniform2_costs_one_bit_always(self):
        rng = RandomSource(3)
        sampler = KnuthYaoSampler(CORPUS["uniform2"])
        for _ in range(64):
            _, bits = sampler.sample(rng)
            assert bits == 1

    def test_samples_match_distribution(self):
        p = CORPUS["tenths"]
        sampler = KnuthYaoSampler(p)
        rng = RandomSource("ky-dist")
        counts = [0] * len(p)
        n = 8000
        for _ in range(n):
            sym, _ = sampler.sample(rng)
            counts[sym] += 1
        for i, m in enumerate(p.masses):
            assert abs(counts[i] / n - float(m)) < 0.03

    def test_mean_bits_at_most_entropy_plus_two(self, corpus_pmf):
        sampler = KnuthYaoSampler(corpus_pmf)
        rng = RandomSource("ky-mean")
        n = 3000
        used = sum(sampler.sample(rng)[1] for _ in range(n))
        # modest trial count; slack covers sampling noise at 5 sigma
        assert used / n <= entropy(corpus_pmf) + 2 + 0.2

    def test_zero_mass_symbols_never_drawn(self):
        p = pmf("1/2", "0", "1/2")
        sampler = KnuthYaoSampler(p)
        rng = RandomSource(8)
        assert all(sampler.sample(rng)[0] != 1 for _ in range(200))


def test_decompose_rejects_bad_depth():
    dec = decompose(CORPUS["thirds"])
    with pytest.raises(ValidationError):
        dec.residual_after(-1)


def test_lazy_extension_is_idempotent():
    dec = decompose(CORPUS["sevenths"])
    first = dec.rounds(6)
    again = decompose(CORPUS["sevenths"]).rounds(6)
    assert [r.codewords for r in first] == [r.codewords for r in again]
