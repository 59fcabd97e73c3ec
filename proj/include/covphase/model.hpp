#pragma once

// Scalar-field models H = 1/2 g_{mu nu} p^mu p^nu + A_mu p^mu + V(x, q)
// (N = 1) and the catalog of classification data used throughout: field
// shift, smeared shift f[eps], time translation (energy).

#include "covphase/brackets.hpp"
#include "covphase/parse.hpp"

#include <random>
#include <stdexcept>
#include <vector>

namespace covphase {

struct ModelSpec
{
	int n = 2;
	std::vector<std::vector<ScalarExpr>> g; // g_{mu nu}, symmetric
	std::vector<ScalarExpr> A;              // A_mu(x)
	ScalarExpr V;                           // V(x, q)

	/// Free scalar field on 1+1 Minkowski space, g = diag(1, -1).
	static ModelSpec free_field(ScalarExpr V = ScalarExpr())
	{
		return {2, {{ScalarExpr(1), ScalarExpr(0)}, {ScalarExpr(0), ScalarExpr(-1)}},
		        {ScalarExpr(), ScalarExpr()}, std::move(V)};
	}

	void validate() const
	{
		auto un = static_cast<std::size_t>(n);
		if (n < 1 || g.size() != un || A.size() != un)
			throw std::invalid_argument("model: metric/gauge arity mismatch");
		for (auto const &row : g)
			if (row.size() != un)
				throw std::invalid_argument("model: metric must be square");
		for (std::size_t a = 0; a < un; ++a)
			for (std::size_t b = 0; b < un; ++b)
				if (is_zero(g[a][b] - g[b][a]) != Verdict::zero)
					throw std::invalid_argument("model: metric must be symmetric");
	}

	ScalarExpr hamiltonian() const
	{
		validate();
		auto P = [](int mu) { return ScalarExpr::coordinate(ChartSpec::p_name(1, mu)); };
		ScalarExpr H = V;
		for (int a = 0; a < n; ++a)
		{
			H += A[static_cast<std::size_t>(a)] * P(a);
			for (int b = 0; b < n; ++b)
				H += ScalarExpr(Rational(1, 2)) *
				     g[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] * P(a) * P(b);
		}
		return H;
	}

	/// Inverse metric g^{mu nu} by exact elimination.
	std::vector<std::vector<ScalarExpr>> inverse_metric() const
	{
		validate();
		auto un = static_cast<std::size_t>(n);
		std::vector<std::vector<ScalarExpr>> a = g;
		std::vector<std::vector<ScalarExpr>> inv(un, std::vector<ScalarExpr>(un));
		for (std::size_t i = 0; i < un; ++i)
			inv[i][i] = ScalarExpr(1);
		for (std::size_t col = 0; col < un; ++col)
		{
			std::size_t piv = un;
			for (std::size_t r = col; r < un; ++r)
				if (is_zero(a[r][col]) == Verdict::nonzero)
				{
					piv = r;
					break;
				}
			if (piv == un)
				throw std::domain_error("model: metric is singular");
			std::swap(a[col], a[piv]);
			std::swap(inv[col], inv[piv]);
			ScalarExpr p = a[col][col];
			for (std::size_t j = 0; j < un; ++j)
			{
				a[col][j] = a[col][j] / p;
				inv[col][j] = inv[col][j] / p;
			}
			for (std::size_t r = 0; r < un; ++r)
			{
				if (r == col || a[r][col].is_zero_form())
					continue;
				ScalarExpr f = a[r][col];
				for (std::size_t j = 0; j < un; ++j)
				{
					a[r][j] -= f * a[col][j];
					inv[r][j] -= f * inv[col][j];
				}
			}
		}
		return inv;
	}

	HamiltonianModel build() const { return build_model(n, 1, hamiltonian()); }
};

// ---------------------------------------------------------------------------
// Catalog

/// X^q = 1.
inline VFClassData field_shift_data(int n)
{
	VFClassData d = VFClassData::zero(n, 1);
	d.fiber[0] = ScalarExpr(1);
	return d;
}

/// X^q = eps(x), X_-^mu = q g^{mu nu} d_nu eps.
inline VFClassData shift_smear_data(ScalarExpr const &eps, ModelSpec const &spec)
{
	VFClassData d = VFClassData::zero(spec.n, 1);
	d.fiber[0] = eps;
	auto ginv = spec.inverse_metric();
	ScalarExpr q = ScalarExpr::coordinate("q1");
	for (int mu = 0; mu < spec.n; ++mu)
		for (int nu = 0; nu < spec.n; ++nu)
			d.minus[static_cast<std::size_t>(mu)] +=
			    q * ginv[static_cast<std::size_t>(mu)][static_cast<std::size_t>(nu)] *
			    diff(eps, ChartSpec::x_name(nu));
	return d;
}

/// X^mu = delta^mu_0 (time translation); its form is the energy current.
inline VFClassData energy_data(int n)
{
	VFClassData d = VFClassData::zero(n, 1);
	d.base[0] = ScalarExpr(1);
	return d;
}

/// Builds the verified (f, X) pair of compatible classification data.
inline HamiltonianPair pair_from_data(VFClassData const &d, HamiltonianModel const &m)
{
	ClassifiedField cf = build_lhvf_ordinary(d, m);
	DiffForm f = hamiltonian_form_for(d, m);
	return HamiltonianPair::make(std::move(f), std::move(cf.X), m.omega_H);
}

/// Compatible classification data for the free field H = 1/2(p0^2 - p1^2):
/// translations, boost, dilation, field shift, eps-shifts with box eps = 0
/// and divergence-free X_-.
inline std::vector<VFClassData> free_field_compatible_basis()
{
	ModelSpec spec = ModelSpec::free_field();
	auto X = [](char const *s) { return parse(s, ChartSpec::ordinary(2, 1)); };
	std::vector<VFClassData> out;
	auto base = [&](char const *a, char const *b) {
		VFClassData d = VFClassData::zero(2, 1);
		d.base = {X(a), X(b)};
		out.push_back(d);
	};
	base("1", "0");
	base("0", "1");
	base("x1", "x0"); // boost
	base("x0", "x1"); // dilation
	out.push_back(field_shift_data(2));
	for (char const *eps : {"x0", "x1", "x0^2 + x1^2", "x0*x1", "x0 - x1"})
		out.push_back(shift_smear_data(X(eps), spec));
	VFClassData dm = VFClassData::zero(2, 1);
	dm.minus = {X("x1^2"), X("x0^2")};
	out.push_back(dm);
	return out;
}

/// Random rational combination of the free-field basis (compatibility is
/// linear in the data). Entries have polynomial degree <= 2.
inline VFClassData random_compatible_free(std::mt19937_64 &rng)
{
	auto basis = free_field_compatible_basis();
	std::uniform_int_distribution<int> num(-4, 4), den(1, 3), pick(0, 1);
	VFClassData out = VFClassData::zero(2, 1);
	for (auto const &b : basis)
	{
		if (!pick(rng))
			continue;
		ScalarExpr c(Rational(num(rng), den(rng)));
		for (std::size_t k = 0; k < 2; ++k)
		{
			out.base[k] += c * b.base[k];
			out.minus[k] += c * b.minus[k];
		}
		out.fiber[0] += c * b.fiber[0];
	}
	return out;
}

} // namespace covphase
