from fractions import Fraction

import pytest

from conftest import CORPUS, diag_joint, joint, pmf, product_joint, random_rational_pmf
from stopkey.errors import ValidationError
from stopkey.probability import (
    JointPmf,
    Pmf,
    agreement_stats,
    as_fraction,
    ceil_neg_log2,
    dyadic_exponent,
    entropy,
    entropy_interval,
    floor_log2,
    is_dyadic,
    log2_interval,
    mutual_information,
    mutual_information_interval,
)
from stopkey.randomsource import RandomSource


class TestPmf:
    def test_masses_must_sum_to_one_exactly(self):
        with pytest.raises(ValidationError, match="sum"):
            pmf("1/2", "1/3")

    def test_negative_mass_rejected(self):
        with pytest.raises(ValidationError):
            pmf("3/2", "-1/2")

    def test_empty_alphabet_rejected(self):
        with pytest.raises(ValidationError):
            Pmf.from_masses(())

    def test_float_mass_rejected(self):
        with pytest.raises(ValidationError, match="float"):
            as_fraction(0.5)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValidationError):
            Pmf(("x", "x"), (Fraction(1, 2), Fraction(1, 2)))

    def test_zero_mass_symbols_kept_but_not_in_support(self):
        p = pmf("1/2", "0", "1/2")
        assert len(p) == 3
        assert p.support() == (0, 2)

    def test_label_index_lookup(self):
        p = Pmf(("a", "b"), (Fraction(1, 4), Fraction(3, 4)))
        assert p.index("b") == 1
        with pytest.raises(ValidationError):
            p.index("zz")

    def test_sub_deficiency_accounting(self):
        s = pmf("1/2", "1/2").sub()
        assert s.total == 1
        assert s.normalized().masses == (Fraction(1, 2), Fraction(1, 2))


class TestJointPmf:
    def test_row_major_construction_and_marginals(self):
        j = joint([["1/2", "0"], ["1/4", "1/4"]], "01", "01")
        assert j.marginal_x().masses == (Fraction(1, 2), Fraction(1, 2))
        assert j.marginal_y().masses == (Fraction(3, 4), Fraction(1, 4))

    def test_sum_must_be_one(self):
        with pytest.raises(ValidationError, match="deficit"):
            joint([["1/2", "0"], ["1/4", "0"]], "01", "01")

    def test_atoms_skip_zero_cells(self):
        j = joint([["1/2", "0"], ["1/4", "1/4"]], "01", "01")
        assert all(m > 0 for _, _, m in j.atoms())
        assert len(list(j.atoms())) == 3

    def test_mass_by_label_unknown_is_zero(self):
        j = joint([["1"]], "a", "a")
        assert j.mass_by_label("a", "nope") == 0

    def test_from_atoms_round_trip(self):
        j = joint([["1/2", "0"], ["1/4", "1/4"]], "01", "01")
        labeled = [
            (j.x_labels[ix], j.y_labels[iy], m) for ix, iy, m in j.atoms()
        ]
        j2 = JointPmf.from_atoms(labeled, j.x_labels, j.y_labels)
        assert list(j2.atoms()) == list(j.atoms())


class TestAgreement:
    def test_always_equal_gives_p_one_and_marginal(self):
        p = CORPUS["tenths"]
        stats = agreement_stats(diag_joint(p))
        assert stats.p == 1
        assert stats.conditional.masses == p.masses

    def test_worked_joint_values(self):
        j = joint([["1/2", "0"], ["1/4", "1/4"]], "01", "01")
        stats = agreement_stats(j)
        assert stats.p == Fraction(3, 4)
        assert stats.conditional.masses == (Fraction(2, 3), Fraction(1, 3))

    def test_never_equal(self):
        j = joint([["0", "1/2"], ["1/2", "0"]], "01", "01")
        stats = agreement_stats(j)
        assert stats.p == 0 and stats.conditional is None


class TestLogArithmetic:
    def test_ceil_neg_log2_bracketing_randomized(self):
        """2^-a <= r < 2^-(a-1) for random rationals in (0, 1)."""
        rng = RandomSource("ceil-neg-log2")
        for _ in range(500):
            den = 2 + rng.randrange(10**6)
            num = 1 + rng.randrange(den - 1)
            r = Fraction(num, den)
            a = ceil_neg_log2(r)
            assert Fraction(1, 2**a) <= r < Fraction(1, 2 ** (a - 1))

    def test_ceil_neg_log2_dyadic_boundary(self):
        assert ceil_neg_log2(Fraction(1, 8)) == 3
        assert ceil_neg_log2(Fraction(1)) == 0

    def test_floor_log2(self):
        assert floor_log2(Fraction(5)) == 2
        assert floor_log2(Fraction(1, 3)) == -2

    def test_dyadic_predicates(self):
        assert is_dyadic(CORPUS["dyadic3"])
        assert not is_dyadic(CORPUS["thirds"])
        assert dyadic_exponent(Fraction(1, 16)) == 4
        assert dyadic_exponent(Fraction(1, 3)) is None

    def test_log2_interval_brackets(self):
        rng = RandomSource("log2-iv")
        for _ in range(200):
            den = 2 + rng.randrange(999)
            num = 1 + rng.randrange(3 * den)
            r = Fraction(num, den)
            lo, hi = log2_interval(r)
            import math

            assert float(lo) <= math.log2(float(r)) <= float(hi)
            assert hi - lo <= Fraction(1, 2**38)


class TestEntropy:
    def test_interval_brackets_float(self, corpus_pmf):
        lo, hi = entropy_interval(corpus_pmf)
        assert float(lo) <= entropy(corpus_pmf) <= float(hi)

    def test_interval_brackets_float_randomized(self):
        rng = RandomSource("entropy-iv")
        for _ in range(50):
            p = random_rational_pmf(rng)
            lo, hi = entropy_interval(p)
            assert float(lo) <= entropy(p) <= float(hi)

    def test_dyadic_entropy_exact(self):
        lo, hi = entropy_interval(CORPUS["dyadic3"])
        assert lo == hi == Fraction(3, 2)

    def test_point_mass_entropy_zero(self):
        assert entropy(CORPUS["point"]) == 0.0

    def test_mutual_information_zero_on_products(self):
        rng = RandomSource("mi-products")
        for _ in range(20):
            j = product_joint(random_rational_pmf(rng, 4), random_rational_pmf(rng, 4))
            assert mutual_information(j) == 0.0
            lo, hi = mutual_information_interval(j)
            assert lo <= 0 <= hi

    def test_mutual_information_positive_when_correlated(self):
        p = CORPUS["uniform2"]
        assert mutual_information(diag_joint(p)) == pytest.approx(1.0)
