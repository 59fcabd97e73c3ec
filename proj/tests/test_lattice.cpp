#include "covphase/lattice.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace covphase;

namespace {

constexpr double pi = std::numbers::pi;

ScalarExpr P(std::string const &s) { return parse(s, ChartSpec::ordinary(2, 1)); }

InitialData standing(LatticeGrid const &g, double k)
{
	InitialData d{std::vector<double>(static_cast<std::size_t>(g.nx)), std::vector<double>(static_cast<std::size_t>(g.nx))};
	for (int j = 0; j < g.nx; ++j)
		d.phi0[static_cast<std::size_t>(j)] = std::cos(k * g.x(j));
	return d;
}

// One period of cos(kx) cos(kt) on the unit circle at CFL 0.5.
double standing_error(int nx)
{
	LatticeModel m(ModelSpec::free_field());
	auto g = LatticeGrid::periodic(nx, 2 * nx + 1, 1.0, 0.5);
	double k = 2 * pi;
	auto s = integrate(m, g, standing(g, k));
	return l2_error(s, [&](double t, double x) { return std::cos(k * x) * std::cos(k * t); });
}

LatticeSection exact_standing(LatticeGrid const &g, double k)
{
	LatticeSection s(g);
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			double t = g.t(n), x = g.x(j);
			s.phi(n, j) = std::cos(k * x) * std::cos(k * t);
			s.p0(n, j) = -k * std::cos(k * x) * std::sin(k * t);
			s.p1(n, j) = k * std::sin(k * x) * std::cos(k * t);
		}
	return s;
}

SpaceTime point_source(LatticeGrid const &g, int n0, int j0, double w = 1.0)
{
	SpaceTime s(g.nt, g.nx);
	s(n0, j0) = w;
	return s;
}

} // namespace

TEST(Integrate, StandingWaveConvergesAtSecondOrder)
{
	double e64 = standing_error(64), e128 = standing_error(128);
	EXPECT_GE(e64 / e128, 3.5);
	EXPECT_LE(e64 / e128, 4.5);
	EXPECT_LT(e128, 1e-3);
}

TEST(Integrate, ConstantFixedPointIsPreserved)
{
	LatticeModel m(ModelSpec::free_field(P("1/2*(q - 2)^2")));
	auto g = LatticeGrid::periodic(16, 50, 1.0, 0.5);
	InitialData d{std::vector<double>(16, 2.0), std::vector<double>(16, 0.0)};
	auto s = integrate(m, g, d);
	for (double v : s.phi.data())
		EXPECT_EQ(v, 2.0);
	EXPECT_EQ(s.p0.max_abs(), 0.0);
	EXPECT_EQ(s.p1.max_abs(), 0.0);
}

TEST(Integrate, MassiveEnergyDriftOverTenPeriods)
{
	LatticeModel m(ModelSpec::free_field(P("1/2*q^2")));
	double k = 2 * pi, period = 2 * pi / std::sqrt(k * k + 1);
	auto g = LatticeGrid::periodic(128, 3, 1.0, 0.5);
	g.nt = static_cast<int>(std::ceil(10 * period / g.dt)) + 2;
	auto s = integrate(m, g, standing(g, k));
	auto E = energy_series(m, s);
	double drift = 0;
	for (double e : E)
		drift = std::max(drift, std::abs(e - E.front()));
	EXPECT_LE(drift / std::abs(E.front()), 1e-6);
}

TEST(Integrate, EnergyMatchesContinuumValue)
{
	// free standing wave: E = int 1/2 (phi_t^2 + phi_x^2) = k^2 / 4 on the unit circle
	LatticeModel m(ModelSpec::free_field());
	double k = 2 * pi;
	auto g = LatticeGrid::periodic(256, 20, 1.0, 0.5);
	auto s = integrate(m, g, standing(g, k));
	EXPECT_NEAR(leapfrog_energy(m, s, 5), k * k / 4, 1e-3 * k * k);
}

TEST(Integrate, GaugeTermActsAsSource)
{
	// A_0 = x0 gives s = d_0(g^{00} A_0) = 1, so phi_tt - phi_xx = 1: phi = t^2/2
	ModelSpec spec = ModelSpec::free_field();
	spec.A = {P("x0"), ScalarExpr()};
	LatticeModel m(spec);
	auto g = LatticeGrid::periodic(16, 40, 1.0, 0.5);
	auto s = integrate(m, g, InitialData{std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)});
	for (int n : {10, 39})
		EXPECT_NEAR(s.phi(n, 3), 0.5 * g.t(n) * g.t(n), 1e-12);
	// p^0 = phi_t - A_0 = 0
	EXPECT_LT(s.p0.max_abs(), 1e-10);
}

TEST(Integrate, RejectsBadGridsAndModels)
{
	LatticeModel m(ModelSpec::free_field());
	auto g = LatticeGrid::periodic(16, 10, 1.0, 0.95);
	EXPECT_THROW(integrate(m, g, standing(g, 1)), LatticeError);
	EXPECT_THROW(LatticeGrid::periodic(4, 10, 1.0, 0.5), LatticeError);
	ModelSpec xg = ModelSpec::free_field();
	xg.g[0][0] = P("1 + x1^2");
	EXPECT_THROW(LatticeModel{xg}, std::invalid_argument);
	ModelSpec off = ModelSpec::free_field();
	off.g[0][1] = off.g[1][0] = ScalarExpr(Rational(1, 2));
	EXPECT_THROW(LatticeModel{off}, std::invalid_argument);
}

TEST(Integrate, NonFiniteAbortReportsStep)
{
	LatticeModel m(ModelSpec::free_field(P("1/4*q^4")));
	auto g = LatticeGrid::periodic(8, 50, 1.0, 0.5);
	InitialData d{std::vector<double>(8, 1e100), std::vector<double>(8, 0.0)};
	try
	{
		integrate(m, g, d);
		FAIL() << "expected abort";
	}
	catch (LatticeError const &e)
	{
		EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
	}
}

TEST(Residual, SecondOrderOnSolutionsAndDetectsNoise)
{
	LatticeModel m(ModelSpec::free_field());
	double k = 2 * pi;
	ResidualNorms r[2];
	ResidualNorms ex[2];
	int nxs[2] = {64, 128};
	for (int i = 0; i < 2; ++i)
	{
		auto g = LatticeGrid::periodic(nxs[i], nxs[i] + 1, 1.0, 0.5);
		r[i] = ddw_residual(m, g, integrate(m, g, standing(g, k)));
		ex[i] = ddw_residual(m, g, exact_standing(g, k));
	}
	double ratio = r[0].divergence_l2 / r[1].divergence_l2;
	EXPECT_GE(ratio, 3.5);
	EXPECT_LE(ratio, 4.5);
	EXPECT_LT(r[1].gradient_max, 1e-10);
	double ex_ratio = ex[0].divergence_l2 / ex[1].divergence_l2;
	EXPECT_GE(ex_ratio, 3.5);
	EXPECT_LE(ex_ratio, 4.5);

	std::mt19937_64 rng(7);
	std::normal_distribution<double> N;
	double noise[2];
	for (int i = 0; i < 2; ++i)
	{
		auto g = LatticeGrid::periodic(nxs[i], nxs[i] + 1, 1.0, 0.5);
		LatticeSection s(g);
		for (int A = 0; A < 3; ++A)
			for (double &v : s.field(A).data())
				v = N(rng);
		noise[i] = ddw_residual(m, g, s).divergence_l2;
	}
	EXPECT_GT(noise[0], 10.0);
	EXPECT_GT(noise[1] / noise[0], 1.5);
}

TEST(Linearized, ZeroDataGivesZero)
{
	LatticeModel m(ModelSpec::free_field(P("1/4*q^4")));
	auto g = LatticeGrid::periodic(16, 30, 1.0, 0.5);
	auto bg = integrate(m, g, standing(g, 2 * pi));
	auto d = integrate_linearized(m, g, bg, {std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)});
	EXPECT_EQ(d.phi.max_abs(), 0.0);
}

TEST(Linearized, FreeFieldEqualsDifferenceOfSolutions)
{
	LatticeModel m(ModelSpec::free_field());
	auto g = LatticeGrid::periodic(32, 40, 1.0, 0.5);
	InitialData a = standing(g, 2 * pi), dd = standing(g, 4 * pi), b = a;
	for (std::size_t j = 0; j < b.phi0.size(); ++j)
		b.phi0[j] += 0.3 * dd.phi0[j];
	auto sa = integrate(m, g, a), sb = integrate(m, g, b);
	auto lin = integrate_linearized(m, g, sa, dd);
	for (std::size_t i = 0; i < lin.phi.data().size(); ++i)
		EXPECT_NEAR((sb.phi.data()[i] - sa.phi.data()[i]) / 0.3, lin.phi.data()[i], 1e-10);
}

TEST(Linearized, QuarticCoefficientAndDifferenceQuotientSlope)
{
	double lambda = 2;
	LatticeModel m(ModelSpec::free_field(P("1/2*q^4")));
	auto g = LatticeGrid::periodic(32, 40, 1.0, 0.5);
	InitialData base = standing(g, 2 * pi), dir = standing(g, 4 * pi);
	auto bg = integrate(m, g, base);
	SpaceTime c = jacobi_coefficient(m, bg);
	for (int n : {0, 17, 39})
		for (int j : {0, 5})
			EXPECT_NEAR(c(n, j), 3 * lambda * bg.phi(n, j) * bg.phi(n, j), 1e-12);

	auto lin = integrate_linearized(m, g, bg, dir);
	auto quotient_error = [&](double h) {
		InitialData p = base, q = base;
		for (std::size_t j = 0; j < p.phi0.size(); ++j)
		{
			p.phi0[j] += h * dir.phi0[j];
			q.phi0[j] -= h * dir.phi0[j];
		}
		auto sp = integrate(m, g, p), sq = integrate(m, g, q);
		double e = 0;
		for (std::size_t i = 0; i < lin.phi.data().size(); ++i)
			e = std::max(e, std::abs((sp.phi.data()[i] - sq.phi.data()[i]) / (2 * h) - lin.phi.data()[i]));
		return e;
	};
	double slope = std::log2(quotient_error(1e-2) / quotient_error(5e-3));
	EXPECT_GE(slope, 1.9);
}

TEST(Causal, RetardedVanishesBeforeSourceAndStaysInCone)
{
	LatticeModel m(ModelSpec::free_field());
	auto g = LatticeGrid::periodic(64, 60, 1.0, 0.5);
	LatticeSection bg(g);
	int n0 = 20, j0 = 30;
	auto r = solve_causal(m, g, bg, point_source(g, n0, j0), CausalDirection::retarded);
	for (int n = 0; n <= n0; ++n)
		for (int j = 0; j < g.nx; ++j)
			EXPECT_LE(std::abs(r.phi(n, j)), 1e-14);
	for (int n = n0 + 1; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			int dist = std::min(std::abs(j - j0), g.nx - std::abs(j - j0));
			if (dist > n - n0 + 1)
			{
				EXPECT_EQ(r.phi(n, j), 0.0) << n << "," << j;
			}
		}
	auto a = solve_causal(m, g, bg, point_source(g, n0, j0), CausalDirection::advanced);
	for (int n = n0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
			EXPECT_EQ(a.phi(n, j), 0.0);
}

TEST(Causal, ZeroSourceLinearityAndOperatorIdentity)
{
	LatticeModel m(ModelSpec::free_field(P("1/4*q^4")));
	auto g = LatticeGrid::periodic(32, 50, 1.0, 0.5);
	auto bg = integrate(m, g, standing(g, 2 * pi));
	SpaceTime zero(g.nt, g.nx);
	EXPECT_EQ(solve_causal(m, g, bg, zero, CausalDirection::retarded).phi.max_abs(), 0.0);

	SpaceTime s1 = point_source(g, 10, 3, 2.0), s2 = point_source(g, 25, 17, -1.5), s12 = s1;
	for (std::size_t i = 0; i < s12.data().size(); ++i)
		s12.data()[i] += s2.data()[i];
	for (auto dir : {CausalDirection::retarded, CausalDirection::advanced})
	{
		auto u1 = solve_causal(m, g, bg, s1, dir), u2 = solve_causal(m, g, bg, s2, dir);
		auto u12 = solve_causal(m, g, bg, s12, dir);
		double scale = u12.phi.max_abs();
		for (std::size_t i = 0; i < u12.phi.data().size(); ++i)
			EXPECT_NEAR(u12.phi.data()[i], u1.phi.data()[i] + u2.phi.data()[i], 1e-12 * scale);
		SpaceTime J = apply_jacobi(m, bg, u12.phi);
		for (int n = 1; n + 1 < g.nt; ++n)
			for (int j = 0; j < g.nx; ++j)
				EXPECT_NEAR(J(n, j), s12(n, j), 1e-9 * 2.0);
	}
	EXPECT_THROW(solve_causal(m, g, bg, point_source(g, 0, 1), CausalDirection::retarded), LatticeError);
	EXPECT_THROW(solve_causal(m, g, bg, point_source(g, g.nt - 1, 1), CausalDirection::advanced), LatticeError);
}

TEST(Causal, KernelPairingIsAntisymmetric)
{
	LatticeModel m(ModelSpec::free_field(P("1/4*q^4")));
	auto g = LatticeGrid::periodic(32, 60, 1.0, 0.5);
	auto bg = integrate(m, g, standing(g, 2 * pi));
	SpaceTime a = point_source(g, 20, 5), b = point_source(g, 26, 9);
	auto causal = [&](SpaceTime const &s) {
		auto r = solve_causal(m, g, bg, s, CausalDirection::retarded);
		auto v = solve_causal(m, g, bg, s, CausalDirection::advanced);
		for (std::size_t i = 0; i < r.phi.data().size(); ++i)
			r.phi.data()[i] -= v.phi.data()[i];
		return r.phi;
	};
	auto dot = [](SpaceTime const &x, SpaceTime const &y) {
		double acc = 0;
		for (std::size_t i = 0; i < x.data().size(); ++i)
			acc += x.data()[i] * y.data()[i];
		return acc;
	};
	double ab = dot(b, causal(a)), ba = dot(a, causal(b));
	double scale = std::max(std::abs(ab), 1e-300);
	EXPECT_GT(std::abs(ab), 0.0);
	EXPECT_LE(std::abs(ab + ba), 1e-10 * scale);
}

TEST(Causal, AdvancedIsTimeReflectedRetarded)
{
	LatticeModel m(ModelSpec::free_field(P("1/2*q^2")));
	auto g = LatticeGrid::periodic(32, 41, 1.0, 0.5);
	LatticeSection bg(g); // static background is time-symmetric
	SpaceTime s = point_source(g, 12, 7), sr(g.nt, g.nx);
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
			sr(n, j) = s(g.nt - 1 - n, j);
	auto r = solve_causal(m, g, bg, s, CausalDirection::retarded);
	auto a = solve_causal(m, g, bg, sr, CausalDirection::advanced);
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
			EXPECT_NEAR(a.phi(g.nt - 1 - n, j), r.phi(n, j), 1e-12);
}

TEST(Parallel, ResultsAreBitIdenticalAcrossWorkerCounts)
{
	LatticeModel m(ModelSpec::free_field(P("1/4*q^4 + 1/2*q^2")));
	auto g = LatticeGrid::periodic(96, 80, 1.0, 0.5);
	auto serial = integrate(m, g, standing(g, 2 * pi));
	Workers w(4);
	auto par = integrate(m, g, standing(g, 2 * pi), &w);
	EXPECT_TRUE(serial.phi == par.phi);
	EXPECT_TRUE(serial.p0 == par.p0);
	auto src = point_source(g, 30, 40);
	auto r1 = solve_causal(m, g, serial, src, CausalDirection::advanced);
	auto r4 = solve_causal(m, g, serial, src, CausalDirection::advanced, &w);
	EXPECT_TRUE(r1.phi == r4.phi);
}

TEST(IO, BinaryRoundTripAndValidation)
{
	LatticeModel m(ModelSpec::free_field());
	auto g = LatticeGrid::periodic(16, 12, 2.0, 0.5);
	auto s = integrate(m, g, standing(g, pi));
	std::stringstream buf;
	write_section(buf, s);
	std::string bytes = buf.str();
	EXPECT_EQ(bytes.substr(0, 4), "DDWL");
	EXPECT_EQ(bytes.size(), 4 + 4 + 8 + 8 + 8 + 8 + 4 + 3 * 16 * 12 * sizeof(double));
	std::stringstream in(bytes);
	LatticeSection t = read_section(in);
	EXPECT_EQ(t.grid.nx, 16);
	EXPECT_EQ(t.grid.nt, 12);
	EXPECT_EQ(t.grid.dx, g.dx);
	EXPECT_TRUE(t.phi == s.phi && t.p0 == s.p0 && t.p1 == s.p1);

	std::stringstream bad("XXXX");
	EXPECT_THROW(read_section(bad), std::runtime_error);
	std::stringstream cut(bytes.substr(0, bytes.size() - 8));
	EXPECT_THROW(read_section(cut), std::runtime_error);

	std::ostringstream csv;
	write_slice_csv(csv, s, 3);
	std::string text = csv.str();
	EXPECT_EQ(text.substr(0, 12), "x,phi,p0,p1\n");
	EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 17);
}
