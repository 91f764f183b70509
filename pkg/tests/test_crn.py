import json

import numpy as np
import pytest

from chemclock.crn import (Complex, RealizabilityError, Reaction, ReactionNetwork, SpeciesId,
                           crn_from_polynomial_odes, derive_odes, find_catalysts, rate_vector,
                           stoichiometric_matrix, validate_realizability)
from chemclock.oscillator import RelaxationSpec
from chemclock.polynomial import PolynomialOdeSystem


def dimer_network(k1=2.0, k2=3.0):
    return ReactionNetwork(["X1", "X2", "X3"], [
        Reaction.parse("2X1 -> X2 + X3", k1),
        Reaction.parse("X3 -> 2X1", k2),
    ])


def module_1():
    return ReactionNetwork(["X1", "X2", "X3"], [
        Reaction.parse("X1 -> X1 + X2", 1.0),
        Reaction.parse("X3 -> X3 + X2", 1.0),
        Reaction.parse("X2 -> 0", 1.0),
    ])


class TestDataModel:
    def test_complex_parse_and_format(self):
        c = Complex.parse("2X + Y")
        assert c.as_dict() == {"X": 2, "Y": 1}
        assert c.format() == "2X + Y"
        for empty in ("", "0", "∅"):
            assert not Complex.parse(empty)
        assert Complex().format() == "∅"

    def test_complex_rejects_negative_and_overflow(self):
        with pytest.raises(ValueError):
            Complex({"X": -1})
        with pytest.raises(OverflowError):
            Complex({"X": 2 ** 31})
        with pytest.raises((ValueError, TypeError)):
            Complex({"X": 1.5})

    @pytest.mark.parametrize("rate", [0.0, -1.0, float("inf"), float("nan")])
    def test_reaction_rate_must_be_positive_finite(self, rate):
        with pytest.raises(ValueError):
            Reaction.parse("X -> Y", rate)

    def test_null_reaction_rejected(self):
        with pytest.raises(ValueError):
            Reaction.parse("X + Y -> Y + X", 1.0)

    def test_network_needs_species(self):
        with pytest.raises(ValueError):
            ReactionNetwork([], [])

    def test_undeclared_species_are_appended(self):
        net = ReactionNetwork(["A"], [Reaction.parse("B -> C", 1.0)])
        assert net.names == ("A", "B", "C")
        assert net.species_id("C") == SpeciesId(2, "C")

    def test_duplicate_species_rejected(self):
        with pytest.raises(ValueError):
            ReactionNetwork(["A", "A"])

    def test_json_round_trip(self):
        net = dimer_network()
        again = ReactionNetwork.from_json(net.to_json())
        assert again.names == net.names
        assert again.reaction_multiset() == net.reaction_multiset()
        doc = json.loads(net.to_json())
        assert doc["reactions"][0] == {"reactants": {"X1": 2}, "products": {"X2": 1, "X3": 1}, "rate": 2.0}

    def test_malformed_json_rejected(self):
        with pytest.raises(ValueError):
            ReactionNetwork.from_dict({"species": ["A"], "reactions": [{"reactants": {"A": 1}}]})

    def test_text_rendering(self):
        assert dimer_network().to_text().splitlines() == ["2X1 -> X2 + X3  [k=2]", "X3 -> 2X1  [k=3]"]

    def test_rate_one_is_ordinary(self):
        r = Reaction.parse("X -> 0", 1.0)
        assert r.format() == "X -> ∅  [k=1]"


class TestDerivation:
    def test_derived_odes_of_dimer_network(self):
        odes = derive_odes(dimer_network(2.0, 3.0))
        assert odes.terms("X1") == {(2, 0, 0): -4.0, (0, 0, 1): 6.0}
        assert odes.terms("X2") == {(2, 0, 0): 2.0}
        assert odes.terms("X3") == {(2, 0, 0): 2.0, (0, 0, 1): -3.0}

    def test_stoichiometric_matrix_dimer_network(self):
        assert stoichiometric_matrix(dimer_network()).tolist() == [[-2, 2], [1, 0], [1, -1]]

    def test_catalyst_column(self):
        net = ReactionNetwork(["X", "Y"], [Reaction.parse("X -> X + Y", 1.0)])
        assert stoichiometric_matrix(net)[:, 0].tolist() == [0, 1]

    def test_empty_network_is_zero_field(self):
        odes = derive_odes(ReactionNetwork(["A", "B"]))
        assert all(odes.is_zero(v) for v in odes.variables)
        assert stoichiometric_matrix(ReactionNetwork(["A"])).shape == (1, 0)

    def test_random_network_matches_brute_force(self):
        rng = np.random.default_rng(7)
        names = ["A", "B", "C", "D"]
        for _ in range(10):
            rx = []
            while len(rx) < 6:
                a = rng.integers(0, 3, 4)
                b = rng.integers(0, 3, 4)
                if np.array_equal(a, b):
                    continue
                rx.append(Reaction(dict(zip(names, a.tolist())), dict(zip(names, b.tolist())),
                                   float(rng.uniform(0.1, 5))))
            net = ReactionNetwork(names, rx)
            # brute force: accumulate (b - a) * k * monomial(a) in a dict per species
            expected = {n: {} for n in names}
            for r in rx:
                a = tuple(r.reactants.get(n) for n in names)
                for i, n in enumerate(names):
                    d = r.products.get(n) - r.reactants.get(n)
                    if d:
                        expected[n][a] = expected[n].get(a, 0.0) + d * r.rate_constant
            odes = derive_odes(net)
            for n in names:
                want = {k: v for k, v in expected[n].items() if abs(v) > 1e-14}
                got = odes.terms(n)
                assert got.keys() == want.keys()
                for k in want:
                    assert got[k] == pytest.approx(want[k], rel=1e-12)
            gamma = stoichiometric_matrix(net)
            for j, r in enumerate(rx):
                col = [r.products.get(n) - r.reactants.get(n) for n in names]
                assert gamma[:, j].tolist() == col
            x = rng.uniform(0, 2, 4)
            assert odes(x) == pytest.approx(gamma @ rate_vector(net, x), rel=1e-12, abs=1e-12)


class TestCatalysts:
    def test_module_1(self):
        assert {s.name for s in find_catalysts(module_1())} == {"X1", "X3"}

    def test_modified_module_1(self):
        net = ReactionNetwork(["X1", "X2", "X3", "V"], [
            Reaction.parse("X1 + V -> X1 + X2 + V", 1.0),
            Reaction.parse("X3 + V -> X3 + X2 + V", 1.0),
            Reaction.parse("X2 + V -> V", 1.0),
        ])
        assert {s.name for s in find_catalysts(net)} == {"X1", "X3", "V"}

    def test_idle_species_is_catalyst(self):
        net = ReactionNetwork(["A", "B"], [Reaction.parse("A -> 0", 1.0)])
        assert find_catalysts(net) == {SpeciesId(1, "B")}


class TestRealizability:
    def test_cubic_without_species_factor_is_not_realizable(self):
        odes = PolynomialOdeSystem.from_expressions(
            {"x": "(-x**3 + 6*x**2 - 9*x + 5 - y)/eps", "y": "x - 2"}, {"eps": 1e-3})
        report = validate_realizability(odes)
        assert not report.ok
        bad = {(v.variable, v.exponents, v.coefficient) for v in report.violations}
        assert ("y", (0, 0), -2.0) in bad
        assert any(v.variable == "x" for v in report.violations)
        with pytest.raises(RealizabilityError) as info:
            crn_from_polynomial_odes(odes)
        assert "-2" in str(info.value)

    def test_relaxation_oscillator_is_realizable(self):
        assert validate_realizability(RelaxationSpec().odes()).ok

    def test_decay_is_realizable(self):
        assert validate_realizability(PolynomialOdeSystem.from_expressions({"x": "-x"})).ok

    def test_report_renders(self):
        report = validate_realizability(PolynomialOdeSystem.from_expressions({"x": "-1", "y": "-y"}))
        data = json.loads(report.to_json())
        assert data["ok"] is False
        assert "[FAIL] negative terms of dx/dt contain x" in report.to_text()


class TestCrnFromOdes:
    def test_positive_linear_term(self):
        odes = PolynomialOdeSystem.from_expressions({"X": "5*X/eps"}, {"eps": 1e-3})
        (r,) = crn_from_polynomial_odes(odes).reactions
        assert (r.reactants.as_dict(), r.products.as_dict(), r.rate_constant) == ({"X": 1}, {"X": 2}, 5000.0)

    def test_quadratic_decay_term(self):
        eta, rho = 0.1, 2.0
        odes = PolynomialOdeSystem.from_expressions({"Y": "-r*Y**2"}, {"r": eta * rho})
        (r,) = crn_from_polynomial_odes(odes).reactions
        assert (r.reactants.as_dict(), r.products.as_dict(), r.rate_constant) == ({"Y": 2}, {"Y": 1}, 0.2)

    def test_constant_inflow(self):
        odes = PolynomialOdeSystem.from_expressions({"U": "20 - 10*U"})
        reactions = crn_from_polynomial_odes(odes).reactions
        assert Reaction(Complex(), Complex({"U": 1}), 20.0) in reactions

    def test_oscillator_listing_consistent_with_odes(self):
        # one reaction per monomial of the oscillator ODEs
        eps = 1e-3
        expected = ReactionNetwork(["X", "Y"], [
            Reaction.parse("4X -> 3X", 1 / eps), Reaction.parse("3X -> 4X", 6 / eps),
            Reaction.parse("2X -> X", 9 / eps), Reaction.parse("X -> 2X", 5 / eps),
            Reaction.parse("X + Y -> Y", 1 / eps), Reaction.parse("X + Y -> X + 2Y", 1.0),
            Reaction.parse("Y -> 0", 2.0),
        ])
        emitted = RelaxationSpec().reactions()
        assert emitted.reaction_multiset() == expected.reaction_multiset()

    def test_round_trip(self):
        odes = RelaxationSpec(eta1=0.01, eta2=10).odes()
        assert derive_odes(crn_from_polynomial_odes(odes)).isclose(odes)

    def test_one_reaction_per_term(self):
        odes = PolynomialOdeSystem.from_expressions({"x": "x*y - x + 2", "y": "x*y - y"})
        net = crn_from_polynomial_odes(odes)
        assert len(net.reactions) == sum(len(eq) for eq in odes.equations)


def test_multiset_rounding_absorbs_float_noise():
    a = ReactionNetwork(["X"], [Reaction.parse("X -> 0", 0.1 + 0.2)])
    b = ReactionNetwork(["X"], [Reaction.parse("X -> 0", 0.3)])
    assert a.reaction_multiset() == b.reaction_multiset()
    assert a.reaction_multiset(None) != b.reaction_multiset(None)
