#include "covphase/model.hpp"

#include <gtest/gtest.h>

using namespace covphase;

namespace {

ChartSpec const spec21 = ChartSpec::ordinary(2, 1);

ScalarExpr P(std::string const &s) { return parse(s, spec21); }

HamiltonianModel const &free_model()
{
	static HamiltonianModel m = ModelSpec::free_field().build();
	return m;
}

HamiltonianPair smear(char const *eps)
{
	return pair_from_data(shift_smear_data(P(eps), ModelSpec::free_field()), free_model());
}

HamiltonianPair energy() { return pair_from_data(energy_data(2), free_model()); }

std::vector<HamiltonianPair> catalog_pairs()
{
	std::vector<HamiltonianPair> out;
	for (auto const &d : free_field_compatible_basis())
		out.push_back(pair_from_data(d, free_model()));
	return out;
}

// Brute force: a 3-form evaluated on (u, v, e_k) as a sum of 3x3 determinants.
ScalarExpr eval3(DiffForm const &w, VectorField const &u, VectorField const &v, int k)
{
	ScalarExpr acc;
	for (auto const &[key, coef] : w.terms())
	{
		auto idx = key_indices(key);
		ScalarExpr row[3][3];
		for (int j = 0; j < 3; ++j)
		{
			row[0][j] = u[idx[static_cast<std::size_t>(j)]];
			row[1][j] = v[idx[static_cast<std::size_t>(j)]];
			row[2][j] = ScalarExpr(idx[static_cast<std::size_t>(j)] == k ? 1 : 0);
		}
		ScalarExpr det = row[0][0] * (row[1][1] * row[2][2] - row[1][2] * row[2][1]) -
		                 row[0][1] * (row[1][0] * row[2][2] - row[1][2] * row[2][0]) +
		                 row[0][2] * (row[1][0] * row[2][1] - row[1][1] * row[2][0]);
		acc += coef * det;
	}
	return acc;
}

} // namespace

TEST(Pseudo, AntisymmetricOverCatalog)
{
	auto s = SymplecticStructure::dynamical(free_model());
	auto pairs = catalog_pairs();
	for (std::size_t i = 0; i < pairs.size(); ++i)
		for (std::size_t j = i; j < pairs.size(); ++j)
			for (auto kind : {BracketKind::pseudo, BracketKind::modified})
			{
				DiffForm ab = bracket(kind, pairs[i], pairs[j], s).value;
				DiffForm ba = bracket(kind, pairs[j], pairs[i], s).value;
				EXPECT_EQ(is_zero(ab + ba), Verdict::zero) << to_string(kind) << " " << i << "," << j;
				if (i == j)
				{
					EXPECT_EQ(is_zero(ab), Verdict::zero);
				}
			}
}

TEST(Pseudo, EpsilonPairMatchesFormulaAndContractionOracle)
{
	auto const &m = free_model();
	auto s = SymplecticStructure::dynamical(m);
	auto ginv = ModelSpec::free_field().inverse_metric();
	char const *eps[][2] = {{"x0", "x1"}, {"x0^2 + x1^2", "x0*x1"}, {"cos(x0)*cos(x1)", "sin(x0)*sin(x1)"}};
	for (auto const &[s1, s2] : eps)
	{
		ScalarExpr e1 = P(s1), e2 = P(s2);
		HamiltonianPair a = smear(s1), b = smear(s2);
		DiffForm got = pseudo_bracket(a, b, s);

		DiffForm want(m.chart, 1);
		for (int mu = 0; mu < 2; ++mu)
		{
			ScalarExpr c;
			for (int nu = 0; nu < 2; ++nu)
			{
				ScalarExpr g = ginv[static_cast<std::size_t>(mu)][static_cast<std::size_t>(nu)];
				c += e1 * g * diff(e2, ChartSpec::x_name(nu)) - e2 * g * diff(e1, ChartSpec::x_name(nu));
			}
			want += c * dnx_mu(m.chart, mu);
		}
		EXPECT_EQ(equal(got, want), Verdict::zero) << render(got) << " vs " << render(want);

		for (int k = 0; k < m.chart->dim(); ++k)
		{
			ScalarExpr oracle = eval3(m.omega_H, a.X, b.X, k);
			EXPECT_EQ(is_zero(got.coefficient(key_bit(k)) - oracle), Verdict::zero) << s1 << " k=" << k;
		}
		for (auto const &[key, coef] : got.terms())
			for (auto const &c : coordinates_of(coef))
				EXPECT_EQ(c.rfind('x', 0), 0u) << "field-dependent coefficient " << render(coef);
	}
}

TEST(Pseudo, FieldShiftWithItselfVanishes)
{
	auto s = SymplecticStructure::dynamical(free_model());
	HamiltonianPair a = pair_from_data(field_shift_data(2), free_model());
	EXPECT_TRUE(pseudo_bracket(a, a, s).empty() || is_zero(pseudo_bracket(a, a, s)) == Verdict::zero);
}

TEST(Pseudo, DifferentialIsContractionWithMinusCommutator)
{
	auto const &m = free_model();
	auto s = SymplecticStructure::dynamical(m);
	auto pairs = catalog_pairs();
	pairs.push_back(smear("cos(x0)*cos(x1)"));
	for (std::size_t i = 0; i < pairs.size(); ++i)
		for (std::size_t j = i + 1; j < pairs.size(); ++j)
		{
			DiffForm lhs = d(pseudo_bracket(pairs[i], pairs[j], s));
			DiffForm rhs = contract(-commutator(pairs[i].X, pairs[j].X), m.omega_H);
			EXPECT_EQ(equal(lhs, rhs), Verdict::zero) << i << "," << j;
		}
}

TEST(Modified, DiffersFromPseudoByReturnedExactTerm)
{
	auto s = SymplecticStructure::dynamical(free_model());
	auto pairs = catalog_pairs();
	for (std::size_t i = 0; i < pairs.size(); ++i)
		for (std::size_t j = 0; j < pairs.size(); ++j)
		{
			BracketResult r = modified_bracket(pairs[i], pairs[j], s);
			DiffForm diff_form = r.value - pseudo_bracket(pairs[i], pairs[j], s);
			EXPECT_EQ(equal(diff_form, d(r.primitive)), Verdict::zero);
		}
}

TEST(Modified, EpsilonPairStaysClosed)
{
	auto s = SymplecticStructure::dynamical(free_model());
	// two vertical fields: every correction term has a double vertical contraction
	BracketResult r = modified_bracket(smear("x0^2 + x1^2"), smear("x0*x1"), s);
	EXPECT_EQ(is_zero(r.primitive), Verdict::zero);
	EXPECT_EQ(is_zero(d(r.value)), Verdict::zero);

	BracketResult re = modified_bracket(smear("x0^2 + x1^2"), energy(), s);
	EXPECT_EQ(is_zero(re.primitive), Verdict::nonzero);
	EXPECT_EQ(is_zero(d(re.value)), Verdict::nonzero) << render(re.value);
}

TEST(Modified, MechanicsReducesToPseudo)
{
	HamiltonianModel mech = build_model(1, 1, parse("1/2*p10^2 + 1/2*q^2", ChartSpec::ordinary(1, 1)));
	auto s = SymplecticStructure::dynamical(mech);
	HamiltonianPair a = pair_from_data(energy_data(1), mech);
	VFClassData shift = VFClassData::zero(1, 1);
	shift.base[0] = ScalarExpr(2);
	HamiltonianPair b = pair_from_data(shift, mech);
	ASSERT_EQ(a.f.degree(), 0);
	BracketResult r = modified_bracket(a, b, s);
	EXPECT_EQ(is_zero(r.primitive), Verdict::zero);
	EXPECT_EQ(equal(r.value, pseudo_bracket(a, b, s)), Verdict::zero);
}

TEST(Kinematical, ExtendedPairsShareTheCodePath)
{
	CanonicalForms c = build_extended(2, 1);
	auto s = SymplecticStructure::kinematical(c);
	auto pair_for = [&](VFClassData const &data) {
		VectorField X = build_lhvf_extended(data, c.chart);
		return HamiltonianPair::make(contract(X, c.theta), X, c.omega);
	};
	HamiltonianPair a = pair_for(field_shift_data(2));
	HamiltonianPair b = pair_for(energy_data(2));
	DiffForm ab = modified_bracket(a, b, s).value;
	EXPECT_EQ(is_zero(ab + modified_bracket(b, a, s).value), Verdict::zero);
	EXPECT_EQ(equal(d(pseudo_bracket(a, b, s)), contract(-commutator(a.X, b.X), c.omega)),
	          Verdict::zero);
}

TEST(Jacobi, EpsilonTripleIsZero)
{
	auto s = SymplecticStructure::dynamical(free_model());
	HamiltonianPair a = smear("x0"), b = smear("x1");
	HamiltonianPair c = pair_from_data(field_shift_data(2), free_model());
	for (auto kind : {BracketKind::pseudo, BracketKind::modified})
	{
		JacobiReport r = jacobi_defect(kind, a, b, c, s);
		EXPECT_EQ(r.classification, JacobiClass::zero) << to_string(kind);
		ASSERT_EQ(r.inner.size(), 3u);
		for (auto const &in : r.inner)
			EXPECT_TRUE(is_zero(in.X) == Verdict::zero);
	}
}

TEST(Jacobi, PseudoDefectExactModifiedDefectZero)
{
	auto s = SymplecticStructure::dynamical(free_model());
	struct Case
	{
		char const *e1, *e2, *method;
	} cases[] = {{"x0^2 + x1^2", "x0*x1", "homotopy"},
	             {"cos(x0)*cos(x1)", "sin(x0)*sin(x1)", "correction-terms"}};
	for (auto const &cs : cases)
	{
		HamiltonianPair a = smear(cs.e1), b = smear(cs.e2), c = energy();
		JacobiReport ps = jacobi_defect(BracketKind::pseudo, a, b, c, s);
		EXPECT_EQ(is_zero(ps.defect), Verdict::nonzero) << cs.e1;
		EXPECT_EQ(ps.classification, JacobiClass::exact_with_primitive) << cs.e1;
		ASSERT_TRUE(ps.primitive.has_value());
		EXPECT_EQ(ps.primitive_method, cs.method);
		EXPECT_EQ(equal(d(*ps.primitive), ps.defect), Verdict::zero);

		// the defect is the time derivative of the (field-independent) bracket
		DiffForm ab = pseudo_bracket(a, b, s);
		DiffForm want = ab.map_coefficients([](ScalarExpr const &e) { return diff(e, "x0"); });
		EXPECT_EQ(equal(ps.defect, want), Verdict::zero) << render(ps.defect);

		JacobiReport mod = jacobi_defect(BracketKind::modified, a, b, c, s);
		EXPECT_EQ(mod.classification, JacobiClass::zero) << render(mod.defect);
	}
}

TEST(Jacobi, HomotopyPrimitiveOnPolynomials)
{
	auto c = make_chart(2, 1, false);
	DiffForm f = DiffForm::function(c, P("x0^2*q + p10*x1"));
	auto h = homotopy_primitive(d(f));
	ASSERT_TRUE(h.has_value());
	EXPECT_EQ(equal(d(*h), d(f)), Verdict::zero);
	EXPECT_FALSE(homotopy_primitive(d(DiffForm::function(c, P("sin(x0)")))).has_value());
}
