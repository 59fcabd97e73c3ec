#include "covphase/functionals.hpp"
#include "covphase/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace covphase;

namespace {

constexpr double pi = std::numbers::pi;

Theory const &free_theory()
{
	static Theory th(ModelSpec::free_field());
	return th;
}

ParseContext context(double k = 2 * pi)
{
	ParseContext ctx(ChartSpec::ordinary(2, 1));
	ctx.bind_parameter("k", k);
	return ctx;
}

HamiltonianPair smear(std::string const &eps, Theory const &th = free_theory())
{
	return pair_from_data(shift_smear_data(parse(eps, context()), th.spec), th.geometry);
}

HamiltonianPair energy(Theory const &th = free_theory()) { return pair_from_data(energy_data(2), th.geometry); }

DiffForm custom(std::initializer_list<std::pair<char const *, char const *>> terms)
{
	Chart const &c = free_theory().geometry.chart;
	DiffForm f(c, 1);
	for (auto const &[key, coef] : terms)
		f += parse(coef, context()) * parse_form_key(c, key);
	return f;
}

/// p^mu d^n x_mu
DiffForm momentum_form()
{
	Chart const &c = free_theory().geometry.chart;
	DiffForm f(c, 1);
	for (int mu = 0; mu < 2; ++mu)
		f += ScalarExpr::coordinate(ChartSpec::p_name(1, mu)) * dnx_mu(c, mu);
	return f;
}

// A smooth section that does not solve anything.
LatticeSection generic_section(int nx, int nt)
{
	auto g = LatticeGrid::periodic(nx, nt, 1.0, 0.5);
	LatticeSection s(g);
	for (int n = 0; n < nt; ++n)
		for (int j = 0; j < nx; ++j)
		{
			double t = g.t(n), x = g.x(j);
			s.phi(n, j) = std::cos(2 * pi * x) + 0.3 * std::sin(4 * pi * x + t);
			s.p0(n, j) = 0.5 + std::sin(2 * pi * x - t);
			s.p1(n, j) = 0.7 * std::cos(6 * pi * x) - 0.2;
		}
	return s;
}

LatticeSection free_solution(int nx, double k = 2 * pi)
{
	auto g = LatticeGrid::periodic(nx, nx + 1, 1.0, 0.5);
	InitialData init{std::vector<double>(static_cast<std::size_t>(nx)), std::vector<double>(static_cast<std::size_t>(nx))};
	for (int j = 0; j < nx; ++j)
		init.phi0[static_cast<std::size_t>(j)] = std::cos(k * g.x(j));
	return integrate(free_theory().lattice, g, init);
}

std::vector<DiffForm> catalog_forms()
{
	std::vector<DiffForm> out;
	for (auto const &d : free_field_compatible_basis())
		out.push_back(hamiltonian_form_for(d, free_theory().geometry));
	out.push_back(smear("cos(k*(x1 - x0))").f);
	out.push_back(energy().f);
	out.push_back(momentum_form());
	out.push_back(custom({{"dx1", "q^3 + x1*p10*p11"}, {"dq", "q*p10 + sin(x1)"}, {"dp10", "cos(q)"}}));
	return out;
}

double max_abs(SliceCovector const &c)
{
	double m = 0;
	for (auto const &v : c.c)
		for (double x : v)
			m = std::max(m, std::abs(x));
	return m;
}

} // namespace

TEST(Evaluate, MomentumFormSumsP0)
{
	auto s = generic_section(16, 8);
	LocalFunctional F{{4}, momentum_form(), {}};
	double want = 0;
	for (int j = 0; j < 16; ++j)
		want += s.p0(4, j) * s.grid.dx;
	EXPECT_NEAR(evaluate(F, s), want, 1e-14);
	LocalFunctional Z{{4}, DiffForm(free_theory().geometry.chart, 1), {}};
	EXPECT_EQ(evaluate(Z, s), 0.0);
}

TEST(Evaluate, EnergyFormIsMinusEnergy)
{
	auto s = free_solution(64);
	int n = 30;
	LocalFunctional F = LocalFunctional::from_pair({n}, energy());
	double want = 0;
	for (int j = 0; j < 64; ++j)
		want -= 0.5 * (s.p0(n, j) * s.p0(n, j) + s.p1(n, j) * s.p1(n, j)) * s.grid.dx;
	EXPECT_NEAR(evaluate(F, s), want, 1e-12);
	// the lattice energy differs at O(h^2)
	double E = leapfrog_energy(free_theory().lattice, s, n);
	EXPECT_NEAR(-evaluate(F, s), E, 1e-2 * E);
}

TEST(Evaluate, RejectsSliceOutOfRange)
{
	auto s = generic_section(16, 8);
	EXPECT_THROW(evaluate({{1}, momentum_form(), {}}, s), std::out_of_range);
	EXPECT_THROW(evaluate({{6}, momentum_form(), {}}, s), std::out_of_range);
	EXPECT_NO_THROW(evaluate({{5}, momentum_form(), {}}, s));
}

TEST(Derivative, MatchesBumpOracleOnCatalog)
{
	auto s = generic_section(24, 8);
	int n = 4;
	double h = 1e-5;
	for (auto const &f : catalog_forms())
	{
		LocalFunctional F{{n}, f, {}};
		SliceCovector c = variational_derivative(F, s);
		double scale = std::max(max_abs(c), 1e-12);
		double worst = 0;
		for (int A = 0; A < 3; ++A)
			for (int j = 0; j < 24; ++j)
			{
				LatticeSection up = s, dn = s;
				up.field(A)(n, j) += h;
				dn.field(A)(n, j) -= h;
				double fd = (evaluate(F, up) - evaluate(F, dn)) / (2 * h);
				worst = std::max(worst, std::abs(fd - c.c[static_cast<std::size_t>(A)][static_cast<std::size_t>(j)]));
			}
		EXPECT_LE(worst / scale, 1e-6) << render(f);
		// no sensitivity off the slice
		LatticeSection off = s;
		off.phi(n + 1, 3) += 1.0;
		off.p0(n - 1, 3) += 1.0;
		EXPECT_EQ(evaluate(F, off), evaluate(F, s));
	}
}

TEST(Derivative, ClosedFormExamples)
{
	auto s = generic_section(16, 8);
	auto one = variational_derivative({{4}, momentum_form(), {}}, s);
	for (int j = 0; j < 16; ++j)
	{
		EXPECT_NEAR(one.c[1][static_cast<std::size_t>(j)], s.grid.dx, 1e-15);
		EXPECT_EQ(one.c[0][static_cast<std::size_t>(j)], 0.0);
		EXPECT_EQ(one.c[2][static_cast<std::size_t>(j)], 0.0);
	}
	auto cst = variational_derivative({{4}, custom({{"dx1", "3"}, {"dx0", "x1"}}), {}}, s);
	EXPECT_EQ(max_abs(cst), 0.0);

	// f[eps]: d/dp0 = eps dx, d/dphi = -d_t eps dx on the slice
	auto c = variational_derivative(LocalFunctional::from_pair({4}, smear("cos(k*(x1 - x0))")), s);
	double k = 2 * pi, t = s.grid.t(4);
	for (int j = 0; j < 16; ++j)
	{
		double x = s.grid.x(j);
		EXPECT_NEAR(c.c[1][static_cast<std::size_t>(j)], std::cos(k * (x - t)) * s.grid.dx, 1e-14);
		EXPECT_NEAR(c.c[0][static_cast<std::size_t>(j)], -k * std::sin(k * (x - t)) * s.grid.dx, 1e-2 * k * s.grid.dx);
	}
}

TEST(Derivative, LieAndContractionFormsAgree)
{
	auto s = generic_section(32, 8);
	Perturbation d(s.grid);
	std::mt19937_64 rng(3);
	std::uniform_real_distribution<double> U(-1, 1);
	for (int A = 0; A < 3; ++A)
		for (double &v : d.field(A).data())
			v = U(rng);
	for (auto const &f : catalog_forms())
	{
		LocalFunctional F{{4}, f, {}};
		double a = directional_derivative(F, s, d), b = directional_derivative_via_df(F, s, d);
		double scale = std::max({std::abs(a), max_abs(variational_derivative(F, s)), 1e-12});
		EXPECT_LE(std::abs(a - b), 1e-10 * scale) << render(f);
	}
}

TEST(Action, FreeFieldMatchesKleinGordonLagrangian)
{
	auto s = free_solution(32);
	auto const &g = s.grid;
	RegionSpec K{3, 20};
	double want = 0;
	for (int n = K.t0; n <= K.t1; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			double ft = (s.phi(n + 1, j) - s.phi(n - 1, j)) / (2 * g.dt);
			double fx = (s.phi(n, (j + 1) % g.nx) - s.phi(n, (j - 1 + g.nx) % g.nx)) / (2 * g.dx);
			want += 0.5 * (ft * ft - fx * fx) * g.dt * g.dx;
		}
	EXPECT_NEAR(action(K, free_theory().lattice, s), want, 1e-12);
	EXPECT_THROW(action({0, 5}, free_theory().lattice, s), std::out_of_range);
	EXPECT_THROW(action({3, 4}, free_theory().lattice, s), std::out_of_range);
}

namespace {

Perturbation interior_bump(LatticeGrid const &g, RegionSpec K, int field)
{
	Perturbation d(g);
	for (int n = K.t0 + 1; n < K.t1; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			double u = static_cast<double>(n - K.t0) / (K.t1 - K.t0);
			d.field(field)(n, j) = std::pow(std::sin(pi * u), 2) * std::cos(2 * pi * g.x(j));
		}
	return d;
}

} // namespace

TEST(Action, StationaryAtSecondOrderOnSolutions)
{
	LatticeModel m(ModelSpec::free_field(parse("1/2*q^2", ChartSpec::ordinary(2, 1))));
	double defect[2];
	int nxs[2] = {64, 128};
	for (int i = 0; i < 2; ++i)
	{
		auto g = LatticeGrid::periodic(nxs[i], nxs[i] + 1, 1.0, 0.5);
		InitialData init{std::vector<double>(static_cast<std::size_t>(g.nx)), std::vector<double>(static_cast<std::size_t>(g.nx))};
		for (int j = 0; j < g.nx; ++j)
			init.phi0[static_cast<std::size_t>(j)] = std::cos(2 * pi * g.x(j));
		auto s = integrate(m, g, init);
		RegionSpec K{g.nt / 4, 3 * g.nt / 4};
		defect[i] = std::abs(stationarity_defect(K, m, s, interior_bump(g, K, 0)));
		// momentum variations vanish identically at interior slices
		EXPECT_LE(std::abs(stationarity_defect(K, m, s, interior_bump(g, K, 1))), 1e-9);
	}
	EXPECT_GE(defect[0] / defect[1], 3.5);
	EXPECT_LE(defect[0] / defect[1], 4.5);

	auto g = LatticeGrid::periodic(64, 65, 1.0, 0.5);
	LatticeSection noise(g);
	std::mt19937_64 rng(11);
	std::normal_distribution<double> N;
	for (int A = 0; A < 3; ++A)
		for (double &v : noise.field(A).data())
			v = N(rng);
	RegionSpec K{16, 48};
	EXPECT_GT(std::abs(stationarity_defect(K, m, noise, interior_bump(g, K, 0))), 1e3 * defect[1]);

	// a smooth non-solution keeps an O(1) defect under refinement
	double frozen[2];
	for (int i = 0; i < 2; ++i)
	{
		auto gi = LatticeGrid::periodic(nxs[i], nxs[i] + 1, 1.0, 0.5);
		LatticeSection s(gi);
		for (int n = 0; n < gi.nt; ++n)
			for (int j = 0; j < gi.nx; ++j)
				s.phi(n, j) = std::cos(2 * pi * gi.x(j));
		reconstruct_momenta(m, s);
		RegionSpec Ki{gi.nt / 4, 3 * gi.nt / 4};
		frozen[i] = std::abs(stationarity_defect(Ki, m, s, interior_bump(gi, Ki, 0)));
	}
	EXPECT_GT(frozen[1], 0.5);
	EXPECT_LT(frozen[0] / frozen[1], 1.5);
}

TEST(Action, PerturbationMustVanishOnBoundary)
{
	auto s = free_solution(16);
	RegionSpec K{3, 10};
	Perturbation d(s.grid);
	d.phi(K.t1, 2) = 1;
	EXPECT_THROW(stationarity_defect(K, free_theory().lattice, s, d), std::invalid_argument);
	EXPECT_EQ(stationarity_defect(K, free_theory().lattice, s, Perturbation(s.grid)), 0.0);
}

TEST(Symplectic, EpsilonPairGivesMinusKL)
{
	auto s = free_solution(64);
	auto d1 = hamiltonian_flow_vector(LocalFunctional::from_pair({10}, smear("cos(k*(x1 - x0))")), s);
	auto d2 = hamiltonian_flow_vector(LocalFunctional::from_pair({10}, smear("sin(k*(x1 - x0))")), s);
	for (int t : {2, 10, 40, 62})
	{
		EXPECT_NEAR(symplectic_pairing(d1, d2, {t}), epsilon_pair_sign * 2 * pi, 1e-12);
		EXPECT_NEAR(symplectic_pairing(d2, d1, {t}), -epsilon_pair_sign * 2 * pi, 1e-12);
		EXPECT_EQ(symplectic_pairing(d1, d1, {t}), 0.0);
	}
}

TEST(Symplectic, ConservedForLinearizedSolutions)
{
	LatticeModel m(ModelSpec::free_field(parse("1/4*q^4", ChartSpec::ordinary(2, 1))));
	auto g = LatticeGrid::periodic(128, 129, 1.0, 0.5);
	InitialData base{std::vector<double>(128), std::vector<double>(128)}, a = base, b = base;
	for (int j = 0; j < 128; ++j)
	{
		double x = g.x(j);
		base.phi0[static_cast<std::size_t>(j)] = std::cos(2 * pi * x);
		a.phi0[static_cast<std::size_t>(j)] = std::sin(4 * pi * x);
		b.phi_t0[static_cast<std::size_t>(j)] = std::sin(4 * pi * x) + 0.5 * std::cos(2 * pi * x);
	}
	auto bg = integrate(m, g, base);
	auto d1 = integrate_linearized(m, g, bg, a), d2 = integrate_linearized(m, g, bg, b);
	double w1 = symplectic_pairing(d1, d2, {g.nt / 4}), w2 = symplectic_pairing(d1, d2, {3 * g.nt / 4});
	EXPECT_GT(std::abs(w1), 0.1);
	EXPECT_LE(std::abs(w1 - w2), 1e-3 * std::abs(w1));
}

TEST(FlowVector, CatalogExamples)
{
	auto s = free_solution(32);
	auto const &g = s.grid;
	auto shift = hamiltonian_flow_vector(LocalFunctional::from_pair({5}, pair_from_data(field_shift_data(2), free_theory().geometry)), s);
	for (double v : shift.phi.data())
		EXPECT_EQ(v, 1.0);
	EXPECT_EQ(shift.p0.max_abs() + shift.p1.max_abs(), 0.0);

	double k = 2 * pi;
	auto e = hamiltonian_flow_vector(LocalFunctional::from_pair({5}, smear("cos(k*(x1 - x0))")), s);
	for (int n : {0, 7, 20})
		for (int j : {0, 9})
		{
			double t = g.t(n), x = g.x(j);
			EXPECT_NEAR(e.phi(n, j), std::cos(k * (x - t)), 1e-14);
			EXPECT_NEAR(e.p0(n, j), k * std::sin(k * (x - t)), 1e-12);
			EXPECT_NEAR(e.p1(n, j), k * std::sin(k * (x - t)), 1e-12); // g^{11} d_1 eps
		}

	auto en = hamiltonian_flow_vector(LocalFunctional::from_pair({5}, energy()), s);
	for (int n : {1, 12})
		for (int j : {0, 9})
		{
			EXPECT_NEAR(en.phi(n, j), -(s.phi(n + 1, j) - s.phi(n - 1, j)) / (2 * g.dt), 1e-12);
			EXPECT_NEAR(en.p0(n, j), -(s.p0(n + 1, j) - s.p0(n - 1, j)) / (2 * g.dt), 1e-12);
		}
}

TEST(FlowVector, RejectsMissingPair)
{
	auto s = free_solution(16);
	EXPECT_THROW(hamiltonian_flow_vector({{5}, momentum_form(), {}}, s), std::invalid_argument);
}

TEST(Peierls, EpsilonPairBothRoutes)
{
	auto s = free_solution(128);
	SliceSpec sl{s.grid.nt / 2};
	auto F = LocalFunctional::from_pair(sl, smear("cos(k*(x1 - x0))"));
	auto G = LocalFunctional::from_pair(sl, smear("sin(k*(x1 - x0))"));
	double want = epsilon_pair_sign * 2 * pi;
	double alg = peierls_algebraic(F, G, s), grn = peierls_green(F, G, free_theory().lattice, s);
	EXPECT_NEAR(alg, want, 0.02 * 2 * pi);
	EXPECT_NEAR(grn, want, 0.02 * 2 * pi);
	EXPECT_NEAR(peierls_algebraic(G, F, s), -alg, 1e-12 * 2 * pi);
	EXPECT_NEAR(peierls_green(G, F, free_theory().lattice, s), -grn, 1e-8 * 2 * pi);
	EXPECT_NEAR(peierls_algebraic(F, F, s), 0.0, 1e-12 * 2 * pi);
	EXPECT_NEAR(peierls_green(F, F, free_theory().lattice, s), 0.0, 1e-8 * 2 * pi);
	LocalFunctional Z{sl, custom({{"dx1", "7"}}), {}};
	EXPECT_EQ(peierls_green(Z, G, free_theory().lattice, s), 0.0);
}

TEST(Peierls, GreenFieldConvergesToFlowVector)
{
	double err[3];
	int nxs[3] = {32, 64, 128};
	for (int i = 0; i < 3; ++i)
	{
		auto s = free_solution(nxs[i]);
		auto F = LocalFunctional::from_pair({s.grid.nt / 2}, smear("cos(k*(x1 - x0))"));
		auto u = green_flow_vector(F, free_theory().lattice, s);
		auto v = hamiltonian_flow_vector(F, s);
		double e = 0;
		for (std::size_t k = 0; k < u.phi.data().size(); ++k)
			e = std::max(e, std::abs(u.phi.data()[k] - v.phi.data()[k]));
		err[i] = e;
	}
	EXPECT_GT(err[0] / err[1], 3.0);
	EXPECT_GT(err[1] / err[2], 3.0);
}

TEST(MainTheorem, EpsilonPairAndEnergyAgree)
{
	auto s = free_solution(128);
	SliceSpec sl{s.grid.nt / 2};
	auto F = LocalFunctional::from_pair(sl, smear("cos(k*(x1 - x0))"));
	auto G = LocalFunctional::from_pair(sl, smear("sin(k*(x1 - x0))"));
	auto E = LocalFunctional::from_pair(sl, energy());
	auto r = verify_main_theorem(F, G, free_theory(), s);
	EXPECT_TRUE(r.pass);
	EXPECT_NEAR(r.pseudo, r.modified, 1e-12);
	EXPECT_NEAR(std::abs(r.algebraic), 2 * pi, 0.02 * 2 * pi);
	EXPECT_EQ(r.shifted_slice, sl.t + s.grid.nt / 8);
	auto r2 = verify_main_theorem(F, E, free_theory(), s);
	EXPECT_TRUE(r2.pass);
	EXPECT_GT(std::abs(r2.algebraic), 1.0);
	auto r3 = verify_main_theorem(F, F, free_theory(), s);
	EXPECT_TRUE(r3.pass);
	EXPECT_LE(std::abs(r3.algebraic) + std::abs(r3.pseudo), 1e-12);

	std::ostringstream txt, csv;
	r.write_text(txt);
	r.write_csv(csv);
	EXPECT_NE(txt.str().find("result = pass"), std::string::npos);
	EXPECT_EQ(csv.str().substr(0, 36), "route,value,deviation,tolerance,pass");
	EXPECT_THROW(verify_main_theorem(F, G.at(sl.t + 1), free_theory(), s), std::invalid_argument);
}
