#pragma once

// Local functionals F_{Sigma,f}[phi] = int_Sigma phi^* f on constant-time
// lattice circles, their derivatives, the action, the symplectic pairing on
// solutions, and two independent routes to the Peierls bracket:
//
//   algebraic:  {F,G} = -G'[phi](delta_{X_f} phi)
//   green:      {F,G} = -G'[phi]((G_adv - G_ret) rho_F)
//
// compared against F_{Sigma,{f,g}} for the pseudo and modified brackets.
//
// Sign convention: with Sigma oriented by dx^1 and d^2x_0 = dx^1, the pair
// f[cos(k(x-t))], f[sin(k(x-t))] on the free field has bracket -kL.

#include "covphase/lattice.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace covphase {

inline constexpr double epsilon_pair_sign = -1.0;

/// Model data in both the symbolic and the lattice form.
struct Theory
{
	ModelSpec spec;
	HamiltonianModel geometry;
	LatticeModel lattice;

	explicit Theory(ModelSpec s) : spec(s), geometry(s.build()), lattice(s) {}

	SymplecticStructure dynamical() const { return SymplecticStructure::dynamical(geometry); }
};

struct SliceSpec
{
	int t = 2;

	/// Two slices of margin on each side (p^0 stencil plus causal sources).
	void validate(LatticeGrid const &g) const
	{
		if (t < 2 || t > g.nt - 3)
			throw std::out_of_range("functional: slice " + std::to_string(t) + " out of range");
	}
};

struct RegionSpec
{
	int t0 = 1;
	int t1 = 2;

	void validate(LatticeGrid const &g) const
	{
		if (t0 < 1 || t1 > g.nt - 2 || t1 - t0 < 2)
			throw std::out_of_range("functional: region out of range");
	}
};

struct LocalFunctional
{
	SliceSpec slice;
	DiffForm f;
	std::optional<HamiltonianPair> pair;

	static LocalFunctional from_pair(SliceSpec s, HamiltonianPair p)
	{
		DiffForm f = p.f;
		return {s, std::move(f), std::move(p)};
	}

	LocalFunctional at(int t) const
	{
		LocalFunctional out = *this;
		out.slice.t = t;
		return out;
	}
};

/// Gradient of the discrete functional with respect to the section values
/// on its slice.
struct SliceCovector
{
	int slice = 0;
	std::array<std::vector<double>, 3> c; // d/dphi, d/dp0, d/dp1 per site
};

namespace detail {

// Pullback data of a 1-form on a constant-time circle. Legs: x1, q, p0, p1
// (dx0 does not pull back).
class SlicePullback
{
  public:
	explicit SlicePullback(DiffForm const &f)
	{
		Chart const &c = f.chart();
		if (c->extended() || c->n() != 2 || c->N() != 1)
			throw std::invalid_argument("functional: form must live on the ordinary (2,1) chart");
		if (f.degree() != 1)
			throw std::invalid_argument("functional: form must have degree n-1 = 1");
		int idx[4] = {c->x_index(1), c->q_index(1), c->p_index(1, 0), c->p_index(1, 1)};
		for (int B = 0; B < 4; ++B)
		{
			ScalarExpr a = f.coefficient(key_bit(idx[B]));
			present_[B] = !a.is_zero_form();
			alpha_[B] = CompiledExpr(a, *c);
			for (int A = 0; A < 3; ++A)
				dalpha_[B][A] = CompiledExpr(diff(a, c->name(idx[A + 1])), *c);
		}
	}

	double alpha(int B, std::span<double const> y) const { return present_[B] ? alpha_[B](y) : 0.0; }
	double dalpha(int B, int A, std::span<double const> y) const
	{
		return present_[B] ? dalpha_[B][A](y) : 0.0;
	}
	bool present(int B) const { return present_[B]; }

  private:
	bool present_[4] = {};
	CompiledExpr alpha_[4];
	CompiledExpr dalpha_[4][3];
};

inline std::array<double, 5> point(LatticeSection const &s, int n, int j)
{
	return {s.grid.t(n), s.grid.x(j), s.phi(n, j), s.p0(n, j), s.p1(n, j)};
}

// Tangential derivative of leg B along the slice.
inline double leg(LatticeSection const &s, int B, int n, int j)
{
	return B == 0 ? 1.0 : dx_central(s.field(B - 1), n, j, s.grid.dx);
}

} // namespace detail

/// Riemann sum of the pulled-back form on the slice.
inline double evaluate(LocalFunctional const &F, LatticeSection const &s)
{
	F.slice.validate(s.grid);
	detail::SlicePullback pb(F.f);
	int n = F.slice.t;
	double acc = 0;
	for (int j = 0; j < s.grid.nx; ++j)
	{
		auto y = detail::point(s, n, j);
		for (int B = 0; B < 4; ++B)
			if (pb.present(B))
				acc += pb.alpha(B, y) * detail::leg(s, B, n, j);
	}
	return acc * s.grid.dx;
}

/// Exact gradient of evaluate() with respect to (phi, p0, p1) on the slice.
inline SliceCovector variational_derivative(LocalFunctional const &F, LatticeSection const &s)
{
	F.slice.validate(s.grid);
	detail::SlicePullback pb(F.f);
	int n = F.slice.t, nx = s.grid.nx;
	double dx = s.grid.dx;
	SliceCovector out{n, {}};
	for (auto &v : out.c)
		v.assign(static_cast<std::size_t>(nx), 0.0);
	std::vector<std::array<double, 4>> alpha(static_cast<std::size_t>(nx));
	for (int j = 0; j < nx; ++j)
	{
		auto y = detail::point(s, n, j);
		for (int B = 0; B < 4; ++B)
		{
			alpha[static_cast<std::size_t>(j)][static_cast<std::size_t>(B)] = pb.alpha(B, y);
			if (!pb.present(B))
				continue;
			double L = detail::leg(s, B, n, j);
			for (int A = 0; A < 3; ++A)
				out.c[static_cast<std::size_t>(A)][static_cast<std::size_t>(j)] += pb.dalpha(B, A, y) * L * dx;
		}
	}
	// d/dy_k of alpha_B(j) (y_{j+1} - y_{j-1}) / 2
	for (int A = 0; A < 3; ++A)
		for (int k = 0; k < nx; ++k)
		{
			auto km = static_cast<std::size_t>((k - 1 + nx) % nx), kp = static_cast<std::size_t>((k + 1) % nx);
			out.c[static_cast<std::size_t>(A)][static_cast<std::size_t>(k)] +=
			    0.5 * (alpha[km][static_cast<std::size_t>(A + 1)] - alpha[kp][static_cast<std::size_t>(A + 1)]);
		}
	return out;
}

/// Pairing of a slice covector with a perturbation.
inline double pair(SliceCovector const &c, Perturbation const &d)
{
	double acc = 0;
	for (int A = 0; A < 3; ++A)
	{
		auto row = d.field(A).row(c.slice);
		for (std::size_t j = 0; j < row.size(); ++j)
			acc += c.c[static_cast<std::size_t>(A)][j] * row[j];
	}
	return acc;
}

/// F' . delta in Lie-derivative form (the gradient paired with delta).
inline double directional_derivative(LocalFunctional const &F, LatticeSection const &s, Perturbation const &d)
{
	return pair(variational_derivative(F, s), d);
}

/// F' . delta in contraction form int_Sigma phi^*(i_X df), with the pullback
/// of d alpha_A realized as the lattice difference of alpha_A along the
/// slice. Agrees with directional_derivative by summation by parts.
inline double directional_derivative_via_df(LocalFunctional const &F, LatticeSection const &s,
                                            Perturbation const &d)
{
	F.slice.validate(s.grid);
	detail::SlicePullback pb(F.f);
	int n = F.slice.t, nx = s.grid.nx;
	double dx = s.grid.dx;
	std::vector<std::array<double, 4>> alpha(static_cast<std::size_t>(nx));
	for (int j = 0; j < nx; ++j)
	{
		auto y = detail::point(s, n, j);
		for (int B = 0; B < 4; ++B)
			alpha[static_cast<std::size_t>(j)][static_cast<std::size_t>(B)] = pb.alpha(B, y);
	}
	double acc = 0;
	for (int j = 0; j < nx; ++j)
	{
		auto y = detail::point(s, n, j);
		auto jm = static_cast<std::size_t>((j - 1 + nx) % nx), jp = static_cast<std::size_t>((j + 1) % nx);
		for (int A = 0; A < 3; ++A)
		{
			double dA = d.field(A)(n, j);
			if (dA == 0.0)
				continue;
			double w = -(alpha[jp][static_cast<std::size_t>(A + 1)] - alpha[jm][static_cast<std::size_t>(A + 1)]) / (2 * dx);
			for (int B = 0; B < 4; ++B)
				if (pb.present(B))
					w += pb.dalpha(B, A, y) * detail::leg(s, B, n, j);
			acc += dA * w;
		}
	}
	return acc * dx;
}

// ---------------------------------------------------------------------------
// Action

/// S_K = sum over K of phi^* theta_H = (p^mu d_mu phi - H) dt dx.
inline double action(RegionSpec const &K, LatticeModel const &m, LatticeSection const &s)
{
	auto const &g = s.grid;
	K.validate(g);
	double acc = 0;
	for (int n = K.t0; n <= K.t1; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			double p0 = s.p0(n, j), p1 = s.p1(n, j);
			acc += p0 * detail::dt_central(s.phi, n, j, g.dt) + p1 * detail::dx_central(s.phi, n, j, g.dx) -
			       m.H(g.t(n), g.x(j), s.phi(n, j), p0, p1);
		}
	return acc * g.dt * g.dx;
}

/// dS_K/d lambda along delta by central differences with one Richardson
/// step. delta must vanish on the boundary slices of K.
inline double stationarity_defect(RegionSpec const &K, LatticeModel const &m, LatticeSection const &s,
                                  Perturbation const &delta)
{
	K.validate(s.grid);
	double scale = 0;
	for (int A = 0; A < 3; ++A)
	{
		for (int t : {K.t0, K.t1})
			for (double v : delta.field(A).row(t))
				if (v != 0.0)
					throw std::invalid_argument("functional: perturbation does not vanish on the boundary of K");
		scale = std::max(scale, delta.field(A).max_abs());
	}
	if (scale == 0)
		return 0;
	auto shifted = [&](double lambda) {
		LatticeSection t = s;
		for (int A = 0; A < 3; ++A)
		{
			auto &dst = t.field(A).data();
			auto const &src = delta.field(A).data();
			for (std::size_t i = 0; i < dst.size(); ++i)
				dst[i] += lambda * src[i];
		}
		return action(K, m, t);
	};
	auto D = [&](double h) { return (shifted(h) - shifted(-h)) / (2 * h); };
	double h = 1e-2 / scale;
	return (4 * D(h / 2) - D(h)) / 3;
}

// ---------------------------------------------------------------------------
// Covariant phase space

/// int_Sigma phi^*(i_{X2} i_{X1} omega_H) for vertical representatives.
inline double symplectic_pairing(Perturbation const &d1, Perturbation const &d2, SliceSpec const &sigma)
{
	sigma.validate(d1.grid);
	int n = sigma.t;
	double acc = 0;
	for (int j = 0; j < d1.grid.nx; ++j)
		acc += d1.phi(n, j) * d2.p0(n, j) - d1.p0(n, j) * d2.phi(n, j);
	return acc * d1.grid.dx;
}

/// delta_{X_f} phi = X_f(phi) - T phi(X_{f,M}) sampled on the whole lattice.
inline Perturbation hamiltonian_flow_vector(LocalFunctional const &F, LatticeSection const &s)
{
	if (!F.pair)
		throw std::invalid_argument("functional: no hamiltonian pair attached");
	VectorField const &X = F.pair->X;
	bool to_E = false, to_M = false;
	projectability(X, to_E, to_M);
	if (!to_M)
		throw std::invalid_argument("functional: hamiltonian field is not projectable to space-time");
	Chart const &c = X.chart();
	if (c->extended() || c->n() != 2 || c->N() != 1)
		throw std::invalid_argument("functional: field must live on the ordinary (2,1) chart");
	CompiledExpr Xm[2] = {CompiledExpr(X[c->x_index(0)], *c), CompiledExpr(X[c->x_index(1)], *c)};
	CompiledExpr Xv[3] = {CompiledExpr(X[c->q_index(1)], *c), CompiledExpr(X[c->p_index(1, 0)], *c),
	                      CompiledExpr(X[c->p_index(1, 1)], *c)};
	auto const &g = s.grid;
	Perturbation d(g);
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			auto y = detail::point(s, n, j);
			double x0 = Xm[0](y), x1 = Xm[1](y);
			for (int A = 0; A < 3; ++A)
			{
				SpaceTime const &f = s.field(A);
				double v = Xv[A](y);
				if (x0 != 0.0)
					v -= x0 * detail::dt_central(f, n, j, g.dt);
				if (x1 != 0.0)
					v -= x1 * detail::dx_central(f, n, j, g.dx);
				d.field(A)(n, j) = v;
			}
		}
	return d;
}

inline double peierls_algebraic(LocalFunctional const &F, LocalFunctional const &G, LatticeSection const &s)
{
	return -pair(variational_derivative(G, s), hamiltonian_flow_vector(F, s));
}

/// Scalar source for the causal solves: the covector pulled back along
/// p^mu = g^{mu nu}(d_nu phi - A_nu) and divided by the cell volume.
inline SpaceTime scalar_source(LatticeModel const &m, LatticeGrid const &g, SliceCovector const &c)
{
	SpaceTime rho(g.nt, g.nx);
	int n = c.slice, nx = g.nx;
	for (int j = 0; j < nx; ++j)
	{
		auto sj = static_cast<std::size_t>(j);
		rho(n, j) += c.c[0][sj];
		double w0 = c.c[1][sj] / (m.a() * 2 * g.dt);
		rho(n + 1, j) += w0;
		rho(n - 1, j) -= w0;
		double w1 = -c.c[2][sj] / (m.b() * 2 * g.dx);
		rho(n, (j + 1) % nx) += w1;
		rho(n, (j - 1 + nx) % nx) -= w1;
	}
	for (double &v : rho.data())
		v /= g.dt * g.dx;
	return rho;
}

/// X_F = (G_adv - G_ret) rho_F; approximates delta_{X_f} phi everywhere.
inline Perturbation green_flow_vector(LocalFunctional const &F, LatticeModel const &m, LatticeSection const &s,
                                      Workers *workers = nullptr)
{
	auto const &g = s.grid;
	SpaceTime rho = scalar_source(m, g, variational_derivative(F, s));
	Perturbation ret = solve_causal(m, g, s, rho, CausalDirection::retarded, workers);
	Perturbation out = solve_causal(m, g, s, rho, CausalDirection::advanced, workers);
	for (int A = 0; A < 3; ++A)
	{
		auto &o = out.field(A).data();
		auto const &r = ret.field(A).data();
		for (std::size_t i = 0; i < o.size(); ++i)
			o[i] -= r[i];
	}
	return out;
}

/// Causal-propagator route: -G'(X_F) with X_F from green_flow_vector,
/// paired through the scalar source of G.
inline double peierls_green(LocalFunctional const &F, LocalFunctional const &G, LatticeModel const &m,
                            LatticeSection const &s, Workers *workers = nullptr)
{
	auto const &g = s.grid;
	Perturbation u = green_flow_vector(F, m, s, workers);
	SpaceTime rhoG = scalar_source(m, g, variational_derivative(G, s));
	double acc = 0;
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
			if (rhoG(n, j) != 0.0)
				acc += rhoG(n, j) * u.phi(n, j);
	return -acc * g.dt * g.dx;
}

// ---------------------------------------------------------------------------
// Main theorem verifier

struct TheoremTolerances
{
	double route = 0.02;        // relative agreement of the routes
	double slice = 1e-3;        // relative change under a slice shift
	int slice_shift = 0;        // 0 means nt/8
};

struct RouteRow
{
	std::string name;
	double value = 0;
	double deviation = 0; // |value - reference| / scale
	double tolerance = 0;
	bool pass = false;
};

struct MainTheoremReport
{
	double algebraic = 0;
	double green = 0;
	double pseudo = 0;   // F_{Sigma,{f,g}} with the pseudo bracket
	double modified = 0; // F_{Sigma,{f,g}} with the modified bracket
	double algebraic_shifted = 0;
	double pseudo_shifted = 0;
	int slice = 0;
	int shifted_slice = 0;
	double scale = 0;
	std::vector<RouteRow> rows;
	bool pass = false;

	void write_text(std::ostream &os) const
	{
		auto old = os.precision(12);
		os << "slice = " << slice << "\nshifted_slice = " << shifted_slice << "\nscale = " << scale << '\n';
		for (auto const &r : rows)
			os << r.name << " = " << r.value << "  deviation = " << r.deviation << "  tolerance = " << r.tolerance
			   << "  " << (r.pass ? "pass" : "FAIL") << '\n';
		os << "result = " << (pass ? "pass" : "FAIL") << '\n';
		os.precision(old);
	}

	void write_csv(std::ostream &os) const
	{
		auto old = os.precision(17);
		os << "route,value,deviation,tolerance,pass\n";
		for (auto const &r : rows)
			os << r.name << ',' << r.value << ',' << r.deviation << ',' << r.tolerance << ','
			   << (r.pass ? 1 : 0) << '\n';
		os.precision(old);
	}
};

inline MainTheoremReport verify_main_theorem(LocalFunctional const &F, LocalFunctional const &G, Theory const &th,
                                             LatticeSection const &s, TheoremTolerances tol = {},
                                             Workers *workers = nullptr)
{
	if (!F.pair || !G.pair)
		throw std::invalid_argument("functional: both functionals need hamiltonian pairs");
	if (F.slice.t != G.slice.t)
		throw std::invalid_argument("functional: both functionals must share the slice");
	auto const &g = s.grid;
	MainTheoremReport rep;
	rep.slice = F.slice.t;
	rep.shifted_slice = F.slice.t + (tol.slice_shift ? tol.slice_shift : g.nt / 8);

	SymplecticStructure sym = th.dynamical();
	DiffForm b_ps = pseudo_bracket(*F.pair, *G.pair, sym);
	DiffForm b_mod = modified_bracket(*F.pair, *G.pair, sym).value;

	Perturbation XF = hamiltonian_flow_vector(F, s);
	SliceCovector cG = variational_derivative(G, s);
	rep.algebraic = -pair(cG, XF);
	rep.green = peierls_green(F, G, th.lattice, s, workers);
	rep.pseudo = evaluate({F.slice, b_ps, {}}, s);
	rep.modified = evaluate({F.slice, b_mod, {}}, s);
	LocalFunctional Gs = G.at(rep.shifted_slice);
	rep.algebraic_shifted = -pair(variational_derivative(Gs, s), XF);
	rep.pseudo_shifted = evaluate({Gs.slice, b_ps, {}}, s);

	// Size of the summed terms, so that identically vanishing brackets are
	// judged against rounding rather than against zero.
	double natural = 0;
	for (int A = 0; A < 3; ++A)
	{
		double l1 = 0;
		for (double v : cG.c[static_cast<std::size_t>(A)])
			l1 += std::abs(v);
		natural += l1 * XF.field(A).max_abs();
	}
	rep.scale = std::max({std::abs(rep.algebraic), std::abs(rep.green), std::abs(rep.pseudo),
	                      std::abs(rep.modified), 1e-9 * natural, 1e-300});

	auto row = [&](std::string name, double value, double ref, double t) {
		double dev = std::abs(value - ref) / rep.scale;
		rep.rows.push_back({std::move(name), value, dev, t, dev <= t});
	};
	row("algebraic", rep.algebraic, rep.algebraic, tol.route);
	row("green", rep.green, rep.algebraic, tol.route);
	row("bracket_pseudo", rep.pseudo, rep.algebraic, tol.route);
	row("bracket_modified", rep.modified, rep.algebraic, tol.route);
	double vals[4] = {rep.algebraic, rep.green, rep.pseudo, rep.modified};
	double spread = *std::max_element(vals, vals + 4) - *std::min_element(vals, vals + 4);
	rep.rows.push_back({"route_spread", spread, spread / rep.scale, tol.route, spread / rep.scale <= tol.route});
	row("algebraic_shifted", rep.algebraic_shifted, rep.algebraic, tol.slice);
	row("bracket_pseudo_shifted", rep.pseudo_shifted, rep.pseudo, tol.slice);
	rep.pass = true;
	for (auto const &r : rep.rows)
		rep.pass = rep.pass && r.pass;
	return rep;
}

} // namespace covphase
