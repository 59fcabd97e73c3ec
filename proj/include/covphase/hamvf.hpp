#pragma once

// Locally and exactly hamiltonian vector fields on ordinary and extended
// multiphase space: construction from classification data, verdicts, the
// hamiltonian form of a field and the inverse problem i_X omega_H = df.

#include "covphase/multiphase.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace covphase {

class HamiltonianError : public std::runtime_error
{
  public:
	HamiltonianError(std::string const &msg, std::optional<DiffForm> residual = {})
	    : std::runtime_error(msg), residual_(std::move(residual))
	{}
	std::optional<DiffForm> const &residual() const { return residual_; }

  private:
	std::optional<DiffForm> residual_;
};

/// Classification data: base components X^mu, fiber components X^i and the
/// auxiliary X_-^mu, all functions of (x, q) only.
struct VFClassData
{
	std::vector<ScalarExpr> base;  // X^mu, size n
	std::vector<ScalarExpr> fiber; // X^i, size N
	std::vector<ScalarExpr> minus; // X_-^mu, size n

	static VFClassData zero(int n, int N)
	{
		return {std::vector<ScalarExpr>(static_cast<std::size_t>(n)),
		        std::vector<ScalarExpr>(static_cast<std::size_t>(N)),
		        std::vector<ScalarExpr>(static_cast<std::size_t>(n))};
	}

	bool exact() const
	{
		for (auto const &e : minus)
			if (is_zero(e) != Verdict::zero)
				return false;
		return true;
	}
};

namespace detail {

inline void validate_class_data(VFClassData const &d, ChartSpec const &c)
{
	auto nn = static_cast<std::size_t>(c.n()), NN = static_cast<std::size_t>(c.N());
	if (d.base.size() != nn || d.minus.size() != nn || d.fiber.size() != NN)
		throw std::invalid_argument("classification data has wrong arity");
	auto check = [&](ScalarExpr const &e, char const *what, bool forbid_q) {
		for (auto const &name : coordinates_of(e))
		{
			auto k = c.index_of(name);
			if (name == "pE" || (k && c.is_momentum(*k)))
				throw std::invalid_argument(std::string(what) +
				                            " depends on momentum variable " + name);
			if (!k && name != "pE")
				throw std::invalid_argument(std::string(what) +
				                            " references unknown coordinate " + name);
			if (forbid_q && c.is_position(*k))
				throw std::invalid_argument(std::string(what) +
				                            " depends on " + name + " while N > 1");
		}
	};
	for (auto const &e : d.base)
		check(e, "X^mu", c.N() > 1);
	for (auto const &e : d.fiber)
		check(e, "X^i", false);
	for (auto const &e : d.minus)
		check(e, "X_-^mu", false);
}

inline ScalarExpr divergence(std::vector<ScalarExpr> const &v)
{
	ScalarExpr acc;
	for (std::size_t mu = 0; mu < v.size(); ++mu)
		acc += diff(v[mu], ChartSpec::x_name(static_cast<int>(mu)));
	return acc;
}

// Shared part of X_i^mu on both spaces:
// -p_j^mu dX^j/dq^i + p_i^nu dX^mu/dx^nu - p_i^mu dX^nu/dx^nu + dX_-^mu/dq^i
inline ScalarExpr momentum_component(VFClassData const &d, int n, int N, int i,
                                     int mu)
{
	auto P = [](int j, int m) { return ScalarExpr::coordinate(ChartSpec::p_name(j, m)); };
	std::string qi = ChartSpec::q_name(i);
	auto umu = static_cast<std::size_t>(mu);
	ScalarExpr out;
	for (int j = 1; j <= N; ++j)
		out -= P(j, mu) * diff(d.fiber[static_cast<std::size_t>(j - 1)], qi);
	for (int nu = 0; nu < n; ++nu)
		out += P(i, nu) * diff(d.base[umu], ChartSpec::x_name(nu));
	out -= P(i, mu) * divergence(d.base);
	out += diff(d.minus[umu], qi);
	return out;
}

} // namespace detail

struct ClassifiedField
{
	VectorField X;
	Verdict compatible; // zero defect means compatible
	ScalarExpr defect;  // compatibility defect (LHS - RHS)
};

/// Ordinary space: X_i^mu from the classification formula, then the
/// compatibility defect
///   dH/dx^mu X^mu + dH/dq^i X^i + dH/dp_i^mu X_i^mu
///   + H dX^mu/dx^mu - p_i^mu dX^i/dx^mu + dX_-^mu/dx^mu.
inline ClassifiedField build_lhvf_ordinary(VFClassData const &d,
                                           HamiltonianModel const &m)
{
	ChartSpec const &c = *m.chart;
	detail::validate_class_data(d, c);
	int n = c.n(), N = c.N();
	VectorField X(m.chart);
	for (int mu = 0; mu < n; ++mu)
		X.set(c.x_index(mu), d.base[static_cast<std::size_t>(mu)]);
	for (int i = 1; i <= N; ++i)
		X.set(c.q_index(i), d.fiber[static_cast<std::size_t>(i - 1)]);
	for (int i = 1; i <= N; ++i)
		for (int mu = 0; mu < n; ++mu)
		{
			ScalarExpr comp = detail::momentum_component(d, n, N, i, mu);
			comp += m.H * diff(d.base[static_cast<std::size_t>(mu)], ChartSpec::q_name(i));
			X.set(c.p_index(i, mu), comp);
		}

	ScalarExpr defect;
	for (int k = 0; k < c.dim(); ++k)
		defect += diff(m.H, c.name(k)) * X[k];
	defect += m.H * detail::divergence(d.base);
	for (int i = 1; i <= N; ++i)
		for (int mu = 0; mu < n; ++mu)
			defect -= ScalarExpr::coordinate(ChartSpec::p_name(i, mu)) *
			          diff(d.fiber[static_cast<std::size_t>(i - 1)], ChartSpec::x_name(mu));
	defect += detail::divergence(d.minus);
	return {std::move(X), is_zero(defect), defect};
}

/// Extended space: X_i^mu and X_0 (the d/dp component) from the
/// classification formulas. No compatibility condition applies.
inline VectorField build_lhvf_extended(VFClassData const &d, Chart const &ext)
{
	if (!ext->extended())
		throw std::invalid_argument("extended chart required");
	ChartSpec const &c = *ext;
	detail::validate_class_data(d, c);
	int n = c.n(), N = c.N();
	ScalarExpr pE = ScalarExpr::coordinate("pE");
	VectorField X(ext);
	for (int mu = 0; mu < n; ++mu)
		X.set(c.x_index(mu), d.base[static_cast<std::size_t>(mu)]);
	for (int i = 1; i <= N; ++i)
		X.set(c.q_index(i), d.fiber[static_cast<std::size_t>(i - 1)]);
	for (int i = 1; i <= N; ++i)
		for (int mu = 0; mu < n; ++mu)
		{
			ScalarExpr comp = detail::momentum_component(d, n, N, i, mu);
			comp -= pE * diff(d.base[static_cast<std::size_t>(mu)], ChartSpec::q_name(i));
			X.set(c.p_index(i, mu), comp);
		}
	ScalarExpr X0 = -pE * detail::divergence(d.base) + detail::divergence(d.minus);
	for (int i = 1; i <= N; ++i)
		for (int mu = 0; mu < n; ++mu)
			X0 -= ScalarExpr::coordinate(ChartSpec::p_name(i, mu)) *
			      diff(d.fiber[static_cast<std::size_t>(i - 1)], ChartSpec::x_name(mu));
	X.set(c.energy_index(), X0);
	return X;
}

inline Verdict is_locally_hamiltonian(VectorField const &X, DiffForm const &omega)
{
	return is_zero(lie(X, omega));
}

inline Verdict is_exact_hamiltonian(VectorField const &X, DiffForm const &theta)
{
	return is_zero(lie(X, theta));
}

/// X_-^mu d^n x_mu
inline DiffForm minus_current(VFClassData const &d, Chart const &c)
{
	DiffForm out(c, c->n() - 1);
	for (int mu = 0; mu < c->n(); ++mu)
		out += d.minus[static_cast<std::size_t>(mu)] * dnx_mu(c, mu);
	return out;
}

/// f = i_X theta_H - X_-^mu d^n x_mu, verified against df = i_X omega_H.
inline DiffForm hamiltonian_form_for(VFClassData const &data, HamiltonianModel const &m)
{
	ClassifiedField cf = build_lhvf_ordinary(data, m);
	if (cf.compatible != Verdict::zero)
		throw HamiltonianError("classification data is not compatible: defect " +
		                       render(cf.defect));
	DiffForm f = contract(cf.X, m.theta_H) - minus_current(data, m.chart);
	DiffForm defect = d(f) - contract(cf.X, m.omega_H);
	if (is_zero(defect) != Verdict::zero)
		throw HamiltonianError("hamiltonian form failed verification", defect);
	return f;
}

struct SolvedField
{
	VectorField X;
	bool projectable_to_E = false; // X^mu, X^i free of momenta
	bool projectable_to_M = false; // X^mu free of q and momenta
};

inline void projectability(VectorField const &X, bool &to_E, bool &to_M)
{
	ChartSpec const &c = *X.chart();
	to_E = to_M = true;
	for (int k = 0; k < c.dim(); ++k)
	{
		if (!(c.is_base(k) || c.is_position(k)))
			continue;
		for (auto const &name : coordinates_of(X[k]))
		{
			auto idx = c.index_of(name);
			bool momentum = idx && (c.is_momentum(*idx) || c.is_energy(*idx));
			if (momentum)
			{
				to_E = false;
				if (c.is_base(k))
					to_M = false;
			}
			if (c.is_base(k) && idx && c.is_position(*idx))
				to_M = false;
		}
	}
}

/// Solves i_X omega = df for X by elimination over symbolic coefficients.
/// Pivots are taken in fixed column order, preferring rational constants.
inline SolvedField solve_hamiltonian_vf(DiffForm const &f, DiffForm const &omega)
{
	Chart const &c = omega.chart();
	if (c->n() < 2)
		throw HamiltonianError("solve_hamiltonian_vf is unsupported for n = 1");
	f.check(omega);
	if (f.degree() != omega.degree() - 2)
		throw std::invalid_argument("form degree must be n - 1");
	DiffForm rhs = d(f);
	int dim = c->dim();

	std::map<FormKey, int> row_of;
	std::vector<DiffForm> cols;
	for (int k = 0; k < dim; ++k)
	{
		cols.push_back(contract(VectorField::coordinate(c, k), omega));
		for (auto const &[key, coef] : cols.back().terms())
			row_of.emplace(key, 0);
	}
	for (auto const &[key, coef] : rhs.terms())
		row_of.emplace(key, 0);
	int rows = 0;
	for (auto &[key, r] : row_of)
		r = rows++;

	// augmented matrix
	std::vector<std::vector<ScalarExpr>> A(static_cast<std::size_t>(rows),
	                                       std::vector<ScalarExpr>(static_cast<std::size_t>(dim + 1)));
	for (int k = 0; k < dim; ++k)
		for (auto const &[key, coef] : cols[static_cast<std::size_t>(k)].terms())
			A[static_cast<std::size_t>(row_of.at(key))][static_cast<std::size_t>(k)] = coef;
	for (auto const &[key, coef] : rhs.terms())
		A[static_cast<std::size_t>(row_of.at(key))][static_cast<std::size_t>(dim)] = coef;

	std::vector<int> pivot_col_of_row;
	int r = 0;
	for (int col = 0; col < dim && r < rows; ++col)
	{
		int best = -1;
		for (int i = r; i < rows; ++i)
		{
			auto const &e = A[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
			if (e.is_zero_form())
				continue;
			if (e.is_constant())
			{
				best = i;
				break;
			}
			if (best < 0 && is_zero(e) == Verdict::nonzero)
				best = i;
		}
		if (best < 0)
			continue;
		std::swap(A[static_cast<std::size_t>(r)], A[static_cast<std::size_t>(best)]);
		auto &prow = A[static_cast<std::size_t>(r)];
		ScalarExpr piv = prow[static_cast<std::size_t>(col)];
		for (auto &e : prow)
			if (!e.is_zero_form())
				e = e / piv;
		for (int i = 0; i < rows; ++i)
		{
			if (i == r)
				continue;
			auto &row = A[static_cast<std::size_t>(i)];
			ScalarExpr factor = row[static_cast<std::size_t>(col)];
			if (factor.is_zero_form())
				continue;
			for (int j = 0; j <= dim; ++j)
				if (!prow[static_cast<std::size_t>(j)].is_zero_form())
					row[static_cast<std::size_t>(j)] -= factor * prow[static_cast<std::size_t>(j)];
		}
		pivot_col_of_row.push_back(col);
		++r;
	}
	for (int i = r; i < rows; ++i)
		if (is_zero(A[static_cast<std::size_t>(i)][static_cast<std::size_t>(dim)]) != Verdict::zero)
			throw HamiltonianError("f is not hamiltonian: inconsistent system", rhs);

	VectorField X(c);
	for (int i = 0; i < r; ++i)
		X.set(pivot_col_of_row[static_cast<std::size_t>(i)],
		      A[static_cast<std::size_t>(i)][static_cast<std::size_t>(dim)]);
	DiffForm residual = contract(X, omega) - rhs;
	if (is_zero(residual) != Verdict::zero)
		throw HamiltonianError("f is not hamiltonian", residual);
	SolvedField out{X};
	projectability(X, out.projectable_to_E, out.projectable_to_M);
	return out;
}

inline SolvedField solve_hamiltonian_vf(DiffForm const &f, HamiltonianModel const &m)
{
	return solve_hamiltonian_vf(f, m.omega_H);
}

/// Non-projectable construction for n = 2, N = 1 from a generating
/// function F, through the inverse momentum Hessian. Returns the field and
/// its local-hamiltonicity verdict.
inline std::pair<VectorField, Verdict>
build_nonprojectable_n1n2(ScalarExpr const &F, HamiltonianModel const &m)
{
	ChartSpec const &c = *m.chart;
	if (c.n() != 2 || c.N() != 1)
		throw std::invalid_argument("non-projectable construction requires n = 2, N = 1");
	std::string const q = "q1";
	std::string const p[2] = {"p10", "p11"};
	std::string const x[2] = {"x0", "x1"};
	ScalarExpr const &H = m.H;
	ScalarExpr Hpp[2][2];
	for (int a = 0; a < 2; ++a)
		for (int b = 0; b < 2; ++b)
			Hpp[a][b] = diff(diff(H, p[a]), p[b]);
	ScalarExpr det = Hpp[0][0] * Hpp[1][1] - Hpp[0][1] * Hpp[1][0];
	if (is_zero(det) != Verdict::nonzero)
		throw std::domain_error("momentum Hessian is singular");
	ScalarExpr Hinv[2][2] = {{Hpp[1][1] / det, -Hpp[0][1] / det},
	                         {-Hpp[1][0] / det, Hpp[0][0] / det}};
	ScalarExpr Hp[2], Fp[2], Fx[2], Hqp[2];
	for (int a = 0; a < 2; ++a)
	{
		Hp[a] = diff(H, p[a]);
		Fp[a] = diff(F, p[a]);
		Fx[a] = diff(F, x[a]);
		Hqp[a] = diff(diff(H, q), p[a]);
	}
	ScalarExpr Fq = diff(F, q);

	// curvature-like bracket B_{kappa lambda}
	ScalarExpr B[2][2];
	for (int k = 0; k < 2; ++k)
		for (int l = 0; l < 2; ++l)
			B[k][l] = diff(diff(H, x[k]), p[l]) - diff(diff(H, x[l]), p[k]) +
			          Hp[k] * Hqp[l] - Hp[l] * Hqp[k];

	VectorField X(m.chart);
	ScalarExpr Xt = F;
	for (int mu = 0; mu < 2; ++mu)
	{
		ScalarExpr Xmu, Xtmu;
		for (int nu = 0; nu < 2; ++nu)
		{
			Xmu -= Hinv[mu][nu] * Fp[nu];
			Xt -= Hinv[mu][nu] * Hp[mu] * Fp[nu];
			Xtmu += Hinv[mu][nu] * (Fx[nu] + Hp[nu] * Fq - Hqp[nu] * F);
			for (int k = 0; k < 2; ++k)
				for (int l = 0; l < 2; ++l)
					Xtmu -= Hinv[mu][k] * B[k][l] * Hinv[l][nu] * Fp[nu];
		}
		X.set(x[mu], Xmu);
		X.set(p[mu], Xtmu);
	}
	X.set(q, Xt);
	return {X, is_locally_hamiltonian(X, m.omega_H)};
}

} // namespace covphase
