#pragma once

// Multiphase charts, the canonical forms theta/omega on extended space and
// their pullbacks theta_H/omega_H to ordinary space along the hamiltonian
// section p = -H.

#include "covphase/forms.hpp"

#include <Eigen/Dense>

#include <random>
#include <stdexcept>
#include <string>

namespace covphase {

class ConstructionError : public std::runtime_error
{
  public:
	using std::runtime_error::runtime_error;
};

struct CanonicalForms
{
	Chart chart; // extended
	DiffForm theta;
	DiffForm omega;
};

/// theta = p_i^mu dq^i ^ d^n x_mu + p d^n x, omega = -d theta, both checked
/// against the explicit expansion.
inline CanonicalForms build_extended(int n, int N)
{
	Chart c = make_chart(n, N, true);
	DiffForm theta(c, n);
	DiffForm omega_explicit(c, n + 1);
	ScalarExpr pE = ScalarExpr::coordinate("pE");
	for (int i = 1; i <= N; ++i)
		for (int mu = 0; mu < n; ++mu)
		{
			DiffForm dq = DiffForm::basis(c, c->q_index(i));
			DiffForm dp = DiffForm::basis(c, c->p_index(i, mu));
			ScalarExpr p = ScalarExpr::coordinate(ChartSpec::p_name(i, mu));
			theta += p * wedge(dq, dnx_mu(c, mu));
			omega_explicit += wedge(wedge(dq, dp), dnx_mu(c, mu));
		}
	theta += pE * dnx(c);
	omega_explicit -= wedge(DiffForm::basis(c, c->energy_index()), dnx(c));
	DiffForm omega = -d(theta);
	if (equal(omega, omega_explicit) != Verdict::zero)
		throw ConstructionError("omega != -d theta on construction");
	if (is_zero(d(omega)) != Verdict::zero)
		throw ConstructionError("d omega != 0 on construction");
	return {c, std::move(theta), std::move(omega)};
}

/// Ordinary-space model: hamiltonian density H and the pulled-back forms.
struct HamiltonianModel
{
	Chart chart;    // ordinary
	Chart extended; // extended
	ScalarExpr H;
	CanonicalForms canonical;
	ChartMap section; // ordinary -> extended, p = -H
	DiffForm theta_H;
	DiffForm omega_H;

	int n() const { return chart->n(); }
	int N() const { return chart->N(); }
};

/// theta_H = p_i^mu dq^i ^ d^n x_mu - H d^n x
inline DiffForm theta_H_explicit(Chart const &c, ScalarExpr const &H)
{
	DiffForm out(c, c->n());
	for (int i = 1; i <= c->N(); ++i)
		for (int mu = 0; mu < c->n(); ++mu)
			out += ScalarExpr::coordinate(ChartSpec::p_name(i, mu)) *
			       wedge(DiffForm::basis(c, c->q_index(i)), dnx_mu(c, mu));
	out -= H * dnx(c);
	return out;
}

/// omega_H = dq^i ^ dp_i^mu ^ d^n x_mu + dH/dq^i dq^i ^ d^n x
///           + dH/dp_i^mu dp_i^mu ^ d^n x
inline DiffForm omega_H_explicit(Chart const &c, ScalarExpr const &H)
{
	DiffForm out(c, c->n() + 1);
	for (int i = 1; i <= c->N(); ++i)
	{
		DiffForm dq = DiffForm::basis(c, c->q_index(i));
		out += diff(H, ChartSpec::q_name(i)) * wedge(dq, dnx(c));
		for (int mu = 0; mu < c->n(); ++mu)
		{
			DiffForm dp = DiffForm::basis(c, c->p_index(i, mu));
			out += wedge(wedge(dq, dp), dnx_mu(c, mu));
			out += diff(H, ChartSpec::p_name(i, mu)) * wedge(dp, dnx(c));
		}
	}
	return out;
}

inline HamiltonianModel build_model(int n, int N, ScalarExpr const &H)
{
	if (depends_on(H, "pE"))
		throw std::invalid_argument(
		    "hamiltonian must not reference the energy coordinate");
	CanonicalForms can = build_extended(n, N);
	Chart c = make_chart(n, N, false);
	for (auto const &name : coordinates_of(H))
		if (!c->contains(name))
			throw std::invalid_argument("hamiltonian references unknown coordinate '" +
			                            name + "'");
	ChartMap section{c, can.chart, {}};
	for (auto const &name : c->names())
		section.assign.emplace(name, ScalarExpr::coordinate(name));
	section.assign.emplace("pE", -H);
	DiffForm theta_H = pullback(section, can.theta);
	DiffForm omega_H = pullback(section, can.omega);
	if (equal(theta_H, theta_H_explicit(c, H)) != Verdict::zero)
		throw ConstructionError("theta_H does not match its expansion");
	if (equal(omega_H, -d(theta_H)) != Verdict::zero)
		throw ConstructionError("omega_H != -d theta_H");
	if (equal(omega_H, omega_H_explicit(c, H)) != Verdict::zero)
		throw ConstructionError("omega_H does not match its expansion");
	return {c, can.chart, H, std::move(can), std::move(section), std::move(theta_H),
	        std::move(omega_H)};
}

/// Scaling field p_i^mu d/dp_i^mu + p d/dp on extended space.
inline VectorField euler_field(Chart const &ext)
{
	if (!ext->extended())
		throw std::invalid_argument("Euler field requires an extended chart");
	VectorField E(ext);
	for (int k = 0; k < ext->dim(); ++k)
		if (ext->is_momentum(k) || ext->is_energy(k))
			E.set(k, ScalarExpr::coordinate(ext->name(k)));
	return E;
}

/// True iff i_Z i_Y i_X omega vanishes for every triple of vertical
/// coordinate directions.
inline bool horizontality_holds(DiffForm const &omega)
{
	Chart const &c = omega.chart();
	std::vector<VectorField> vert;
	for (int k = 0; k < c->dim(); ++k)
		if (c->is_vertical(k))
			vert.push_back(VectorField::coordinate(c, k));
	for (std::size_t a = 0; a < vert.size(); ++a)
		for (std::size_t b = a + 1; b < vert.size(); ++b)
		{
			DiffForm ab = contract(vert[b], contract(vert[a], omega));
			if (ab.empty())
				continue;
			for (std::size_t e = b + 1; e < vert.size(); ++e)
				if (is_zero(contract(vert[e], ab)) != Verdict::zero)
					return false;
		}
	return true;
}

struct DegeneracyReport
{
	int dimension = 0;
	int min_rank = 0;
	bool degenerate = false;
	std::vector<double> kernel; // one kernel vector at the first degenerate point
};

/// Numeric rank of X -> i_X omega at random chart points.
inline DegeneracyReport probe_degeneracy(DiffForm const &omega, int points = 16,
                                         std::uint64_t seed = 1234,
                                         double tol = 1e-9)
{
	Chart const &c = omega.chart();
	int dim = c->dim();
	std::vector<DiffForm> cols;
	std::map<FormKey, int> rows;
	for (int k = 0; k < dim; ++k)
	{
		cols.push_back(contract(VectorField::coordinate(c, k), omega));
		for (auto const &[key, coef] : cols.back().terms())
			rows.emplace(key, 0);
	}
	int r = 0;
	for (auto &[key, idx] : rows)
		idx = r++;
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> dist(-1.0, 1.0);
	DegeneracyReport rep;
	rep.dimension = dim;
	rep.min_rank = dim;
	for (int t = 0; t < points; ++t)
	{
		Assignment pt;
		for (auto const &name : c->names())
			pt[name] = dist(rng);
		Eigen::MatrixXd M = Eigen::MatrixXd::Zero(std::max(r, 1), dim);
		for (int k = 0; k < dim; ++k)
			for (auto const &[key, coef] : cols[static_cast<std::size_t>(k)].terms())
				M(rows.at(key), k) = eval(coef, pt);
		Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
		lu.setThreshold(tol);
		int rank = static_cast<int>(lu.rank());
		if (rank < rep.min_rank)
		{
			rep.min_rank = rank;
			if (!rep.degenerate)
			{
				Eigen::MatrixXd K = lu.kernel();
				rep.kernel.assign(K.col(0).data(), K.col(0).data() + K.rows());
			}
			rep.degenerate = true;
		}
	}
	return rep;
}

} // namespace covphase
