#pragma once

// Lattice De Donder-Weyl dynamics for n = 2, N = 1 on time x circle.
//
// The field equations for H = 1/2 g_{mu nu} p^mu p^nu + A_mu p^mu + V with
// g = diag(a, -b) reduce to
//
//   (1/a) d_t^2 phi - (1/b) d_x^2 phi = s(x) - V'(phi),
//   s = d_mu (g^{mu nu} A_nu),
//
// which is evolved by leapfrog; momenta are then read off from
// d_mu phi = dH/dp^mu, i.e. p^mu = g^{mu nu}(d_nu phi - A_nu), with central
// differences (second-order one-sided differences on the first and last
// slice). Spatial boundary is periodic.

#include "covphase/model.hpp"
#include "covphase/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace covphase {

class LatticeError : public std::runtime_error
{
  public:
	using std::runtime_error::runtime_error;
};

struct LatticeGrid
{
	int nx = 64;
	int nt = 64;
	double dx = 1.0 / 64;
	double dt = 0.5 / 64;

	double length() const { return nx * dx; }
	double t(int n) const { return n * dt; }
	double x(int j) const { return j * dx; }

	void validate() const
	{
		if (nx < 8)
			throw LatticeError("lattice: nx must be >= 8");
		if (nt < 3)
			throw LatticeError("lattice: nt must be >= 3");
		if (!(dx > 0) || !(dt > 0) || !std::isfinite(dx) || !std::isfinite(dt))
			throw LatticeError("lattice: spacings must be positive");
	}

	/// Grid on a circle of circumference L with dt = cfl * dx.
	static LatticeGrid periodic(int nx, int nt, double L, double cfl)
	{
		LatticeGrid g{nx, nt, L / nx, cfl * L / nx};
		g.validate();
		return g;
	}
};

/// nt x nx array, row n is the time slice t = n dt.
class SpaceTime
{
  public:
	SpaceTime() = default;
	SpaceTime(int nt, int nx) : nt_(nt), nx_(nx), v_(static_cast<std::size_t>(nt) * nx, 0.0) {}

	int nt() const { return nt_; }
	int nx() const { return nx_; }
	double &operator()(int n, int j) { return v_[idx(n, j)]; }
	double operator()(int n, int j) const { return v_[idx(n, j)]; }
	/// Periodic in j.
	double wrap(int n, int j) const { return (*this)(n, ((j % nx_) + nx_) % nx_); }
	std::span<double> row(int n) { return {v_.data() + idx(n, 0), static_cast<std::size_t>(nx_)}; }
	std::span<double const> row(int n) const
	{
		return {v_.data() + idx(n, 0), static_cast<std::size_t>(nx_)};
	}
	std::vector<double> &data() { return v_; }
	std::vector<double> const &data() const { return v_; }

	double max_abs() const
	{
		double m = 0;
		for (double x : v_)
			m = std::max(m, std::abs(x));
		return m;
	}

	friend bool operator==(SpaceTime const &, SpaceTime const &) = default;

  private:
	std::size_t idx(int n, int j) const
	{
		return static_cast<std::size_t>(n) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(j);
	}
	int nt_ = 0, nx_ = 0;
	std::vector<double> v_;
};

/// A section (phi, p^0, p^1) sampled on the lattice. Also used for
/// perturbations (dphi, dp^0, dp^1).
struct LatticeSection
{
	LatticeGrid grid;
	SpaceTime phi, p0, p1;

	explicit LatticeSection(LatticeGrid const &g = {})
	    : grid(g), phi(g.nt, g.nx), p0(g.nt, g.nx), p1(g.nt, g.nx)
	{}

	SpaceTime &field(int k) { return k == 0 ? phi : k == 1 ? p0 : p1; }
	SpaceTime const &field(int k) const { return k == 0 ? phi : k == 1 ? p0 : p1; }
};

using Perturbation = LatticeSection;

// ---------------------------------------------------------------------------
// Model on the lattice

/// Numeric view of a ModelSpec with constant metric diag(a, -b).
class LatticeModel
{
  public:
	explicit LatticeModel(ModelSpec spec) : spec_(std::move(spec))
	{
		spec_.validate();
		if (spec_.n != 2)
			throw std::invalid_argument("lattice: only n = 2 models are supported");
		auto g = [&](int a, int b) {
			auto r = spec_.g[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].as_rational();
			if (!r)
				throw std::invalid_argument("lattice: metric must be constant");
			return r->to_double();
		};
		a_ = g(0, 0);
		b_ = -g(1, 1);
		if (g(0, 1) != 0.0)
			throw std::invalid_argument("lattice: metric must be diagonal");
		if (!(a_ > 0) || !(b_ > 0))
			throw std::invalid_argument("lattice: metric must have signature (+,-)");

		ChartSpec chart = ChartSpec::ordinary(2, 1);
		for (auto const &Am : spec_.A)
			for (auto const &c : coordinates_of(Am))
				if (auto k = chart.index_of(c); !k || !chart.is_base(*k))
					throw std::invalid_argument("lattice: gauge term may depend on x only");
		for (auto const &c : coordinates_of(spec_.V))
			if (auto k = chart.index_of(c); !k || chart.is_momentum(*k) || chart.is_energy(*k))
				throw std::invalid_argument("lattice: potential may not depend on momenta");

		ScalarExpr V = spec_.V;
		ScalarExpr dV = diff(V, "q1");
		auto ginv = spec_.inverse_metric();
		ScalarExpr src;
		for (int m = 0; m < 2; ++m)
			for (int n = 0; n < 2; ++n)
				src += diff(ginv[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] *
				                spec_.A[static_cast<std::size_t>(n)],
				            ChartSpec::x_name(m));
		V_ = CompiledExpr(V, chart);
		dV_ = CompiledExpr(dV, chart);
		d2V_ = CompiledExpr(diff(dV, "q1"), chart);
		src_ = CompiledExpr(src, chart);
		A0_ = CompiledExpr(spec_.A[0], chart);
		A1_ = CompiledExpr(spec_.A[1], chart);
		H_ = CompiledExpr(spec_.hamiltonian(), chart);
	}

	ModelSpec const &spec() const { return spec_; }
	double a() const { return a_; }
	double b() const { return b_; }
	double wave_speed() const { return std::sqrt(a_ / b_); }

	double V(double t, double x, double q) const { return at(V_, t, x, q); }
	double dV(double t, double x, double q) const { return at(dV_, t, x, q); }
	double d2V(double t, double x, double q) const { return at(d2V_, t, x, q); }
	double source(double t, double x) const { return at(src_, t, x, 0); }
	double A0(double t, double x) const { return at(A0_, t, x, 0); }
	double A1(double t, double x) const { return at(A1_, t, x, 0); }
	double H(double t, double x, double q, double p0, double p1) const
	{
		double y[5] = {t, x, q, p0, p1};
		return H_(y);
	}

	void check_cfl(LatticeGrid const &g) const
	{
		g.validate();
		double cfl = wave_speed() * g.dt / g.dx;
		if (cfl > 0.9)
		{
			std::ostringstream os;
			os << "lattice: CFL number " << cfl << " exceeds 0.9";
			throw LatticeError(os.str());
		}
	}

  private:
	static double at(CompiledExpr const &e, double t, double x, double q)
	{
		double y[5] = {t, x, q, 0, 0};
		return e(y);
	}

	ModelSpec spec_;
	double a_ = 1, b_ = 1;
	CompiledExpr V_, dV_, d2V_, src_, A0_, A1_, H_;
};

// ---------------------------------------------------------------------------
// Difference operators

namespace detail {

inline double dt_central(SpaceTime const &f, int n, int j, double dt)
{
	int nt = f.nt();
	if (n == 0)
		return (-3 * f(0, j) + 4 * f(1, j) - f(2, j)) / (2 * dt);
	if (n == nt - 1)
		return (3 * f(nt - 1, j) - 4 * f(nt - 2, j) + f(nt - 3, j)) / (2 * dt);
	return (f(n + 1, j) - f(n - 1, j)) / (2 * dt);
}

inline double dx_central(SpaceTime const &f, int n, int j, double dx)
{
	return (f.wrap(n, j + 1) - f.wrap(n, j - 1)) / (2 * dx);
}

inline double dxx(SpaceTime const &f, int n, int j, double dx)
{
	return (f.wrap(n, j + 1) - 2 * f(n, j) + f.wrap(n, j - 1)) / (dx * dx);
}

inline void check_finite(SpaceTime const &f, int n)
{
	for (double v : f.row(n))
		if (!std::isfinite(v))
			throw LatticeError("lattice: non-finite value at step " + std::to_string(n));
}

inline void for_sites(Workers *w, int nx, std::function<void(std::size_t)> const &body)
{
	if (w)
		w->for_each(static_cast<std::size_t>(nx), body);
	else
		for (std::size_t j = 0; j < static_cast<std::size_t>(nx); ++j)
			body(j);
}

} // namespace detail

/// p^mu = g^{mu nu}(d_nu phi - A_nu); pass gauge = false for perturbations.
inline void reconstruct_momenta(LatticeModel const &m, LatticeSection &s, bool gauge = true)
{
	auto const &g = s.grid;
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			double t = g.t(n), x = g.x(j);
			double A0 = gauge ? m.A0(t, x) : 0, A1 = gauge ? m.A1(t, x) : 0;
			s.p0(n, j) = (detail::dt_central(s.phi, n, j, g.dt) - A0) / m.a();
			s.p1(n, j) = -(detail::dx_central(s.phi, n, j, g.dx) - A1) / m.b();
		}
}

// ---------------------------------------------------------------------------
// Evolution

struct InitialData
{
	std::vector<double> phi0;   // phi on slice 0
	std::vector<double> phi_t0; // d_t phi on slice 0
};

/// Samples phi0(x) and its time derivative from expressions in x1 (and
/// optionally x0, evaluated at t = 0).
inline InitialData sample_initial(LatticeGrid const &g, ScalarExpr const &phi0, ScalarExpr const &phi_t0)
{
	ChartSpec chart = ChartSpec::ordinary(2, 1);
	CompiledExpr f(phi0, chart), ft(phi_t0, chart);
	InitialData d{std::vector<double>(static_cast<std::size_t>(g.nx)),
	              std::vector<double>(static_cast<std::size_t>(g.nx))};
	for (int j = 0; j < g.nx; ++j)
	{
		double y[5] = {0, g.x(j), 0, 0, 0};
		d.phi0[static_cast<std::size_t>(j)] = f(y);
		d.phi_t0[static_cast<std::size_t>(j)] = ft(y);
	}
	return d;
}

namespace detail {

// Leapfrog for (1/a) u_tt - (1/b) u_xx + W(n, j, u) = 0, where W is given as
// a callback returning the non-derivative terms.
template <class Forcing>
void leapfrog(LatticeModel const &m, LatticeGrid const &g, SpaceTime &u, InitialData const &init,
              Forcing const &W, Workers *workers)
{
	if (init.phi0.size() != static_cast<std::size_t>(g.nx) || init.phi_t0.size() != init.phi0.size())
		throw std::invalid_argument("lattice: initial data size mismatch");
	double a = m.a(), c2 = m.a() / m.b(), dt2 = g.dt * g.dt;
	for (int j = 0; j < g.nx; ++j)
		u(0, j) = init.phi0[static_cast<std::size_t>(j)];
	for_sites(workers, g.nx, [&](std::size_t jj) {
		int j = static_cast<int>(jj);
		double acc = c2 * dxx(u, 0, j, g.dx) - a * W(0, j, u(0, j));
		u(1, j) = u(0, j) + g.dt * init.phi_t0[jj] + 0.5 * dt2 * acc;
	});
	check_finite(u, 1);
	for (int n = 1; n + 1 < g.nt; ++n)
	{
		for_sites(workers, g.nx, [&](std::size_t jj) {
			int j = static_cast<int>(jj);
			double acc = c2 * dxx(u, n, j, g.dx) - a * W(n, j, u(n, j));
			u(n + 1, j) = 2 * u(n, j) - u(n - 1, j) + dt2 * acc;
		});
		check_finite(u, n + 1);
	}
}

} // namespace detail

/// Full nonlinear evolution.
inline LatticeSection integrate(LatticeModel const &m, LatticeGrid const &g, InitialData const &init,
                                Workers *workers = nullptr)
{
	m.check_cfl(g);
	LatticeSection s(g);
	detail::leapfrog(
	    m, g, s.phi, init,
	    [&](int n, int j, double q) { return m.dV(g.t(n), g.x(j), q) - m.source(g.t(n), g.x(j)); },
	    workers);
	reconstruct_momenta(m, s);
	return s;
}

/// V''(phi) on the background; the zeroth-order coefficient of the Jacobi
/// operator.
inline SpaceTime jacobi_coefficient(LatticeModel const &m, LatticeSection const &bg)
{
	auto const &g = bg.grid;
	SpaceTime c(g.nt, g.nx);
	for (int n = 0; n < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
			c(n, j) = m.d2V(g.t(n), g.x(j), bg.phi(n, j));
	return c;
}

namespace detail {

inline void check_background(LatticeGrid const &g, LatticeSection const &bg)
{
	if (bg.grid.nx != g.nx || bg.grid.nt != g.nt || bg.grid.dx != g.dx || bg.grid.dt != g.dt)
		throw std::invalid_argument("lattice: background does not match grid");
}

} // namespace detail

/// Linearized evolution around a background section.
inline Perturbation integrate_linearized(LatticeModel const &m, LatticeGrid const &g,
                                         LatticeSection const &bg, InitialData const &init,
                                         Workers *workers = nullptr)
{
	m.check_cfl(g);
	detail::check_background(g, bg);
	SpaceTime k = jacobi_coefficient(m, bg);
	Perturbation d(g);
	detail::leapfrog(
	    m, g, d.phi, init, [&](int n, int j, double u) { return k(n, j) * u; }, workers);
	reconstruct_momenta(m, d, false);
	return d;
}

enum class CausalDirection
{
	retarded,
	advanced
};

/// Solves (1/a) D_t^2 u - (1/b) D_x^2 u + V''(bg) u = source with u = 0
/// before (retarded) or after (advanced) the time support of the source.
inline Perturbation solve_causal(LatticeModel const &m, LatticeGrid const &g, LatticeSection const &bg,
                                 SpaceTime const &source, CausalDirection dir,
                                 Workers *workers = nullptr)
{
	m.check_cfl(g);
	detail::check_background(g, bg);
	if (source.nt() != g.nt || source.nx() != g.nx)
		throw std::invalid_argument("lattice: source does not match grid");
	int first = -1, last = -1;
	for (int n = 0; n < g.nt; ++n)
		for (double v : source.row(n))
			if (v != 0.0)
			{
				if (first < 0)
					first = n;
				last = n;
				break;
			}
	Perturbation out(g);
	if (first < 0)
		return out;
	if (first < 1 || last > g.nt - 2)
		throw LatticeError("lattice: source support touches the time boundary");

	SpaceTime k = jacobi_coefficient(m, bg);
	SpaceTime &u = out.phi;
	double a = m.a(), inv_b = 1.0 / m.b(), dt2 = g.dt * g.dt;
	auto rhs = [&](int n, int j) {
		return a * dt2 * (source(n, j) + inv_b * detail::dxx(u, n, j, g.dx) - k(n, j) * u(n, j));
	};
	if (dir == CausalDirection::retarded)
	{
		for (int n = first; n + 1 < g.nt; ++n)
		{
			detail::for_sites(workers, g.nx, [&](std::size_t jj) {
				int j = static_cast<int>(jj);
				u(n + 1, j) = 2 * u(n, j) - u(n - 1, j) + rhs(n, j);
			});
			detail::check_finite(u, n + 1);
		}
	}
	else
	{
		for (int n = last; n >= 1; --n)
		{
			detail::for_sites(workers, g.nx, [&](std::size_t jj) {
				int j = static_cast<int>(jj);
				u(n - 1, j) = 2 * u(n, j) - u(n + 1, j) + rhs(n, j);
			});
			detail::check_finite(u, n - 1);
		}
	}
	reconstruct_momenta(m, out, false);
	return out;
}

/// The discrete Jacobi operator applied to u on interior slices (zero on the
/// first and last slice).
inline SpaceTime apply_jacobi(LatticeModel const &m, LatticeSection const &bg, SpaceTime const &u)
{
	auto const &g = bg.grid;
	SpaceTime k = jacobi_coefficient(m, bg), out(g.nt, g.nx);
	for (int n = 1; n + 1 < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
			out(n, j) = (u(n + 1, j) - 2 * u(n, j) + u(n - 1, j)) / (m.a() * g.dt * g.dt) -
			            detail::dxx(u, n, j, g.dx) / m.b() + k(n, j) * u(n, j);
	return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct ResidualNorms
{
	double gradient_max = 0; // d_mu phi - dH/dp^mu
	double gradient_l2 = 0;
	double divergence_max = 0; // d_mu p^mu + dH/dq
	double divergence_l2 = 0;
};

/// Both DDW residual families on interior slices, central differences.
inline ResidualNorms ddw_residual(LatticeModel const &m, LatticeGrid const &g, LatticeSection const &s)
{
	detail::check_background(g, s);
	ResidualNorms r;
	double sg = 0, sd = 0;
	for (int n = 1; n + 1 < g.nt; ++n)
		for (int j = 0; j < g.nx; ++j)
		{
			double t = g.t(n), x = g.x(j);
			double r0 = detail::dt_central(s.phi, n, j, g.dt) - (m.a() * s.p0(n, j) + m.A0(t, x));
			double r1 = detail::dx_central(s.phi, n, j, g.dx) - (-m.b() * s.p1(n, j) + m.A1(t, x));
			double rd = detail::dt_central(s.p0, n, j, g.dt) + detail::dx_central(s.p1, n, j, g.dx) +
			            m.dV(t, x, s.phi(n, j));
			r.gradient_max = std::max({r.gradient_max, std::abs(r0), std::abs(r1)});
			r.divergence_max = std::max(r.divergence_max, std::abs(rd));
			sg += r0 * r0 + r1 * r1;
			sd += rd * rd;
		}
	r.gradient_l2 = std::sqrt(sg * g.dt * g.dx);
	r.divergence_l2 = std::sqrt(sd * g.dt * g.dx);
	return r;
}

/// The quantity conserved by the leapfrog step between slices n and n+1.
/// Exact (up to rounding) for potentials quadratic in q and time-independent
/// data; a second-order approximation of the field energy otherwise.
inline double leapfrog_energy(LatticeModel const &m, LatticeSection const &s, int n)
{
	auto const &g = s.grid;
	if (n < 0 || n + 1 >= g.nt)
		throw std::out_of_range("lattice: energy slice out of range");
	double e = 0;
	double t = 0.5 * (g.t(n) + g.t(n + 1));
	for (int j = 0; j < g.nx; ++j)
	{
		double u0 = s.phi(n, j), u1 = s.phi(n + 1, j);
		double du = u1 - u0;
		double gx0 = (s.phi.wrap(n, j + 1) - u0) / g.dx;
		double gx1 = (s.phi.wrap(n + 1, j + 1) - u1) / g.dx;
		double x = g.x(j), src = m.source(t, x);
		double v = 0.5 * (m.V(t, x, u0) - src * u0 + m.V(t, x, u1) - src * u1) -
		           0.25 * m.d2V(t, x, 0.5 * (u0 + u1)) * du * du;
		e += du * du / (2 * m.a() * g.dt * g.dt) + gx0 * gx1 / (2 * m.b()) + v;
	}
	return e * g.dx;
}

inline std::vector<double> energy_series(LatticeModel const &m, LatticeSection const &s)
{
	std::vector<double> out;
	for (int n = 0; n + 1 < s.grid.nt; ++n)
		out.push_back(leapfrog_energy(m, s, n));
	return out;
}

/// L2 distance on slice n to a function of (t, x).
template <class F>
double slice_l2_error(LatticeSection const &s, int n, F const &exact)
{
	double acc = 0;
	for (int j = 0; j < s.grid.nx; ++j)
	{
		double e = s.phi(n, j) - exact(s.grid.t(n), s.grid.x(j));
		acc += e * e;
	}
	return std::sqrt(acc * s.grid.dx);
}

/// Space-time L2 distance over all slices.
template <class F>
double l2_error(LatticeSection const &s, F const &exact)
{
	double acc = 0;
	for (int n = 0; n < s.grid.nt; ++n)
		for (int j = 0; j < s.grid.nx; ++j)
		{
			double e = s.phi(n, j) - exact(s.grid.t(n), s.grid.x(j));
			acc += e * e;
		}
	return std::sqrt(acc * s.grid.dx * s.grid.dt);
}

// ---------------------------------------------------------------------------
// Serialization: "DDWL" | u32 version | u64 nt | u64 nx | f64 dt | f64 dx |
// u32 field count | fields, row-major doubles, little-endian.

inline constexpr std::uint32_t section_format_version = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "section IO assumes little-endian");

template <class T>
void put(std::ostream &os, T v)
{
	os.write(reinterpret_cast<char const *>(&v), sizeof v);
}

template <class T>
T get(std::istream &is)
{
	T v{};
	if (!is.read(reinterpret_cast<char *>(&v), sizeof v))
		throw std::runtime_error("section: truncated header");
	return v;
}

} // namespace detail

inline void write_section(std::ostream &os, LatticeSection const &s)
{
	os.write("DDWL", 4);
	detail::put<std::uint32_t>(os, section_format_version);
	detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.grid.nt));
	detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.grid.nx));
	detail::put<double>(os, s.grid.dt);
	detail::put<double>(os, s.grid.dx);
	detail::put<std::uint32_t>(os, 3);
	for (int k = 0; k < 3; ++k)
	{
		auto const &v = s.field(k).data();
		os.write(reinterpret_cast<char const *>(v.data()),
		         static_cast<std::streamsize>(v.size() * sizeof(double)));
	}
	if (!os)
		throw std::runtime_error("section: write failed");
}

inline LatticeSection read_section(std::istream &is)
{
	char magic[4];
	if (!is.read(magic, 4) || std::memcmp(magic, "DDWL", 4) != 0)
		throw std::runtime_error("section: bad magic");
	if (detail::get<std::uint32_t>(is) != section_format_version)
		throw std::runtime_error("section: unsupported version");
	LatticeGrid g;
	auto nt = detail::get<std::uint64_t>(is), nx = detail::get<std::uint64_t>(is);
	if (nt > (1u << 24) || nx > (1u << 24))
		throw std::runtime_error("section: implausible size");
	g.nt = static_cast<int>(nt);
	g.nx = static_cast<int>(nx);
	g.dt = detail::get<double>(is);
	g.dx = detail::get<double>(is);
	if (detail::get<std::uint32_t>(is) != 3)
		throw std::runtime_error("section: expected 3 fields");
	LatticeSection s(g);
	for (int k = 0; k < 3; ++k)
	{
		auto &v = s.field(k).data();
		if (!is.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
			throw std::runtime_error("section: truncated data");
	}
	return s;
}

/// CSV of one time slice: x,phi,p0,p1.
inline void write_slice_csv(std::ostream &os, LatticeSection const &s, int n)
{
	if (n < 0 || n >= s.grid.nt)
		throw std::out_of_range("section: slice out of range");
	auto old = os.precision(17);
	os << "x,phi,p0,p1\n";
	for (int j = 0; j < s.grid.nx; ++j)
		os << s.grid.x(j) << ',' << s.phi(n, j) << ',' << s.p0(n, j) << ',' << s.p1(n, j) << '\n';
	os.precision(old);
}

} // namespace covphase
