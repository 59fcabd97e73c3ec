#pragma once

// Brackets of hamiltonian (n-1)-forms:
//
//   pseudo:    {f,g} = i_{X_g} i_{X_f} omega
//   modified:  {f,g} = i_{X_g} i_{X_f} omega
//                      + d(i_{X_g} f - i_{X_f} g - i_{X_g} i_{X_f} theta)
//
// and the Jacobi-defect analyzer. The same code serves the dynamical
// (theta_H, omega_H) and kinematical (theta, omega) settings.

#include "covphase/hamvf.hpp"

#include <optional>
#include <string>
#include <vector>

namespace covphase {

/// The (theta, omega) pair a bracket is taken with.
struct SymplecticStructure
{
	DiffForm theta;
	DiffForm omega;

	static SymplecticStructure dynamical(HamiltonianModel const &m)
	{
		return {m.theta_H, m.omega_H};
	}
	static SymplecticStructure kinematical(CanonicalForms const &c)
	{
		return {c.theta, c.omega};
	}
};

/// A hamiltonian form with its hamiltonian vector field, i_X omega = df.
struct HamiltonianPair
{
	DiffForm f;
	VectorField X;
	bool projectable_to_E = false;
	bool projectable_to_M = false;

	/// Pairs f with X after checking the defining equation.
	static HamiltonianPair make(DiffForm f, VectorField X, DiffForm const &omega)
	{
		DiffForm residual = contract(X, omega) - d(f);
		if (is_zero(residual) != Verdict::zero)
			throw HamiltonianError("i_X omega != df for supplied pair", residual);
		HamiltonianPair p{std::move(f), std::move(X)};
		projectability(p.X, p.projectable_to_E, p.projectable_to_M);
		return p;
	}

	/// Pairs f with the field solving i_X omega = df.
	static HamiltonianPair solve(DiffForm f, DiffForm const &omega)
	{
		SolvedField s = solve_hamiltonian_vf(f, omega);
		return {std::move(f), std::move(s.X), s.projectable_to_E, s.projectable_to_M};
	}
};

enum class BracketKind
{
	pseudo,
	modified
};

inline char const *to_string(BracketKind k)
{
	return k == BracketKind::pseudo ? "pseudo" : "modified";
}

struct BracketResult
{
	DiffForm value;
	DiffForm primitive; // beta with value = pseudo + d beta (zero for pseudo)
};

inline DiffForm pseudo_bracket(HamiltonianPair const &a, HamiltonianPair const &b,
                               SymplecticStructure const &s)
{
	return contract(b.X, contract(a.X, s.omega));
}

/// i_{X_b} f_a - i_{X_a} f_b - i_{X_b} i_{X_a} theta
inline DiffForm bracket_correction_primitive(HamiltonianPair const &a,
                                             HamiltonianPair const &b,
                                             SymplecticStructure const &s)
{
	return contract(b.X, a.f) - contract(a.X, b.f) -
	       contract(b.X, contract(a.X, s.theta));
}

inline BracketResult modified_bracket(HamiltonianPair const &a, HamiltonianPair const &b,
                                      SymplecticStructure const &s)
{
	DiffForm beta = bracket_correction_primitive(a, b, s);
	DiffForm value = pseudo_bracket(a, b, s);
	if (beta.degree() >= 0 && !beta.empty())
		value += d(beta);
	return {std::move(value), std::move(beta)};
}

inline BracketResult bracket(BracketKind kind, HamiltonianPair const &a,
                             HamiltonianPair const &b, SymplecticStructure const &s)
{
	if (kind == BracketKind::modified)
		return modified_bracket(a, b, s);
	DiffForm v = pseudo_bracket(a, b, s);
	DiffForm zero(v.chart(), std::max(v.degree() - 1, 0));
	return {std::move(v), std::move(zero)};
}

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

inline int coordinate_degree(Monomial const &m)
{
	int deg = 0;
	for (auto const &[a, e] : m)
		if (a->kind == Atom::Kind::coordinate)
			deg += e;
		else if (a->kind != Atom::Kind::parameter)
			return -1;
	return deg;
}

} // namespace detail

/// Straight-line homotopy operator centered at the chart origin, applied to
/// a closed form with polynomial coefficients. Returns nothing when a
/// coefficient is outside the polynomial tier.
inline std::optional<DiffForm> homotopy_primitive(DiffForm const &a)
{
	int p = a.degree();
	if (p == 0)
		return std::nullopt;
	Chart const &c = a.chart();
	DiffForm out(c, p - 1);
	for (auto const &[key, coef] : a.terms())
	{
		if (!coef.is_polynomial())
			return std::nullopt;
		auto idx = key_indices(key);
		for (auto const &t : coef.num())
		{
			int m = detail::coordinate_degree(t.mono);
			if (m < 0)
				return std::nullopt;
			ScalarExpr scaled = ScalarExpr::from_parts(
			    Poly{Term{t.mono, t.coef / Rational(m + p)}}, detail::const_poly(Rational(1)));
			for (std::size_t r = 0; r < idx.size(); ++r)
			{
				ScalarExpr y = ScalarExpr::coordinate(c->name(idx[r]));
				ScalarExpr v = scaled * y;
				out.add_term(key & ~key_bit(idx[r]), (r % 2) ? -v : v);
			}
		}
	}
	return out;
}

enum class JacobiClass
{
	zero,
	exact_with_primitive,
	closed,
	other
};

inline char const *to_string(JacobiClass c)
{
	switch (c)
	{
	case JacobiClass::zero:
		return "zero";
	case JacobiClass::exact_with_primitive:
		return "exact-with-primitive";
	case JacobiClass::closed:
		return "closed";
	default:
		return "other";
	}
}

struct JacobiReport
{
	DiffForm defect;
	JacobiClass classification;
	std::optional<DiffForm> primitive;
	std::string primitive_method; // "homotopy" or "correction-terms"
	std::vector<HamiltonianPair> inner; // {b,c}, {c,a}, {a,b}
};

/// J = {a,{b,c}} + {b,{c,a}} + {c,{a,b}}; inner brackets are paired with
/// their own hamiltonian fields by solving i_X omega = d{.,.}.
inline JacobiReport jacobi_defect(BracketKind kind, HamiltonianPair const &a,
                                  HamiltonianPair const &b, HamiltonianPair const &c,
                                  SymplecticStructure const &s)
{
	HamiltonianPair const *trip[3] = {&a, &b, &c};
	JacobiReport rep{DiffForm(a.f.chart(), a.f.degree()), JacobiClass::other, {}, {}, {}};
	// candidate primitive from the bracket correction terms:
	// J_modified - J_pseudo = d(sum_cyc beta(x, {y,z}_modified))
	DiffForm beta_sum(a.f.chart(), std::max(a.f.degree() - 1, 0));
	for (int k = 0; k < 3; ++k)
	{
		HamiltonianPair const &x = *trip[k];
		HamiltonianPair const &y = *trip[(k + 1) % 3];
		HamiltonianPair const &z = *trip[(k + 2) % 3];
		DiffForm inner_val = bracket(kind, y, z, s).value;
		HamiltonianPair inner = [&] {
			try
			{
				return HamiltonianPair::solve(inner_val, s.omega);
			}
			catch (HamiltonianError const &e)
			{
				throw HamiltonianError(
				    std::string("inner bracket is not hamiltonian: ") + e.what(),
				    e.residual());
			}
		}();
		rep.defect += bracket(kind, x, inner, s).value;
		HamiltonianPair inner_mod = inner;
		if (kind == BracketKind::pseudo)
			inner_mod.f = modified_bracket(y, z, s).value;
		beta_sum += bracket_correction_primitive(x, inner_mod, s);
		rep.inner.push_back(std::move(inner));
	}

	if (is_zero(rep.defect) == Verdict::zero)
	{
		rep.classification = JacobiClass::zero;
		return rep;
	}
	if (is_zero(d(rep.defect)) != Verdict::zero)
	{
		rep.classification = JacobiClass::other;
		return rep;
	}
	auto accept = [&](DiffForm const &beta, char const *method) {
		if (equal(d(beta), rep.defect) != Verdict::zero)
			return false;
		rep.classification = JacobiClass::exact_with_primitive;
		rep.primitive = beta;
		rep.primitive_method = method;
		return true;
	};
	if (auto h = homotopy_primitive(rep.defect); h && accept(*h, "homotopy"))
		return rep;
	if (kind == BracketKind::pseudo && accept(-beta_sum, "correction-terms"))
		return rep;
	rep.classification = JacobiClass::closed;
	return rep;
}

} // namespace covphase
