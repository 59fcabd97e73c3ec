#pragma once

// Exact symbolic scalar expressions on a multiphase coordinate chart.
//
// Expressions are kept in a canonical form at all times: a quotient of two
// polynomials with rational coefficients over "atoms". Atoms are chart
// coordinates, named numeric parameters, opaque symbols with user supplied
// partial derivatives, and the primitives sin, cos and exp applied to a
// canonical argument. The following rewrites are applied eagerly:
//
//   sin(u)^2        -> 1 - cos(u)^2
//   exp(a) * exp(b) -> exp(a + b)
//   sin(-u), cos(-u) -> -sin(u), cos(u)
//
// On the polynomial tier (coordinates and parameters only) the canonical
// form is unique, so zero testing is exact.

#include "covphase/rational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace covphase {

/// Result of a symbolic zero test.
enum class Verdict
{
	zero,
	nonzero,
	undecided
};

inline char const *to_string(Verdict v)
{
	switch (v)
	{
	case Verdict::zero:
		return "zero";
	case Verdict::nonzero:
		return "nonzero";
	default:
		return "undecided";
	}
}

class SymbolicError : public std::runtime_error
{
  public:
	using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Chart

/// Coordinate layout of an ordinary or extended multiphase chart.
///
/// Order: x0..x{n-1}, q1..qN, p_1^0..p_1^{n-1}, ..., p_N^{n-1}, then the
/// energy coordinate pE iff extended. Multimomentum p_i^mu is spelled
/// "p{i}{mu}", so p10 is p_1^0.
class ChartSpec
{
  public:
	static constexpr int max_coordinates = 64;

	ChartSpec(int n, int N, bool extended) : n_(n), N_(N), extended_(extended)
	{
		if (n < 1 || N < 1)
			throw std::invalid_argument("chart requires n >= 1 and N >= 1");
		if (n > 10)
			throw std::invalid_argument("chart naming supports n <= 10");
		if (n + N + n * N > max_coordinates)
			throw std::length_error(
			    "chart exceeds the resource limit of 64 coordinates");
		for (int mu = 0; mu < n; ++mu)
			names_.push_back(x_name(mu));
		for (int i = 1; i <= N; ++i)
			names_.push_back(q_name(i));
		for (int i = 1; i <= N; ++i)
			for (int mu = 0; mu < n; ++mu)
				names_.push_back(p_name(i, mu));
		if (extended)
			names_.push_back("pE");
		for (std::size_t k = 0; k < names_.size(); ++k)
			index_.emplace(names_[k], static_cast<int>(k));
	}

	static ChartSpec ordinary(int n, int N) { return ChartSpec(n, N, false); }
	static ChartSpec extended_chart(int n, int N)
	{
		return ChartSpec(n, N, true);
	}

	int n() const { return n_; }
	int N() const { return N_; }
	bool extended() const { return extended_; }
	int dim() const { return static_cast<int>(names_.size()); }
	std::vector<std::string> const &names() const { return names_; }
	std::string const &name(int k) const { return names_.at(k); }

	std::optional<int> index_of(std::string_view name) const
	{
		auto it = index_.find(std::string(name));
		if (it == index_.end())
			return std::nullopt;
		return it->second;
	}
	bool contains(std::string_view name) const
	{
		return index_of(name).has_value();
	}

	int x_index(int mu) const { return mu; }
	int q_index(int i) const { return n_ + i - 1; }
	int p_index(int i, int mu) const { return n_ + N_ + (i - 1) * n_ + mu; }
	int energy_index() const
	{
		if (!extended_)
			throw std::logic_error("ordinary chart has no energy coordinate");
		return dim() - 1;
	}

	bool is_base(int k) const { return k < n_; }
	bool is_position(int k) const { return k >= n_ && k < n_ + N_; }
	bool is_momentum(int k) const
	{
		return k >= n_ + N_ && k < n_ + N_ + n_ * N_;
	}
	bool is_energy(int k) const { return extended_ && k == dim() - 1; }
	bool is_vertical(int k) const { return !is_base(k); }

	static std::string x_name(int mu) { return "x" + std::to_string(mu); }
	static std::string q_name(int i) { return "q" + std::to_string(i); }
	static std::string p_name(int i, int mu)
	{
		return "p" + std::to_string(i) + std::to_string(mu);
	}

	friend bool operator==(ChartSpec const &a, ChartSpec const &b)
	{
		return a.n_ == b.n_ && a.N_ == b.N_ && a.extended_ == b.extended_;
	}

  private:
	int n_, N_;
	bool extended_;
	std::vector<std::string> names_;
	std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Atoms and canonical polynomials

class ScalarExpr;
struct ExprNode;
struct Atom;
struct OpaqueInfo;

using Monomial = std::vector<std::pair<Atom const *, int>>;

struct Term
{
	Monomial mono;
	Rational coef;
};

using Poly = std::vector<Term>;

/// Classification of coordinate names by their role in a multiphase chart.
struct CoordinateClass
{
	int cls = 9; // 0 base, 1 position, 2 multimomentum, 3 energy
	int i = 0;
	int j = 0;
};

inline CoordinateClass classify_coordinate(std::string_view name)
{
	auto digits = [](std::string_view s) {
		return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
			return c >= '0' && c <= '9';
		});
	};
	CoordinateClass c;
	if (name == "pE")
		c.cls = 3;
	else if (name.size() > 1 && name[0] == 'x' && digits(name.substr(1)))
	{
		c.cls = 0;
		c.i = std::stoi(std::string(name.substr(1)));
	}
	else if (name.size() > 1 && name[0] == 'q' && digits(name.substr(1)))
	{
		c.cls = 1;
		c.i = std::stoi(std::string(name.substr(1)));
	}
	else if (name.size() > 2 && name[0] == 'p' && digits(name.substr(1)))
	{
		c.cls = 2;
		c.i = std::stoi(std::string(name.substr(1, name.size() - 2)));
		c.j = name.back() - '0';
	}
	return c;
}

/// Canonical expression node. `den` is the constant polynomial 1 for
/// polynomial expressions.
struct ExprNode
{
	Poly num;
	Poly den;
};

/// An immutable, canonical symbolic scalar. Cheap to copy.
class ScalarExpr
{
  public:
	ScalarExpr();
	ScalarExpr(Rational c);
	ScalarExpr(std::int64_t c) : ScalarExpr(Rational(c)) {}
	ScalarExpr(int c) : ScalarExpr(Rational(c)) {}

	static ScalarExpr coordinate(std::string const &name);
	static ScalarExpr parameter(std::string const &name, double value);

	Poly const &num() const { return node_->num; }
	Poly const &den() const { return node_->den; }
	bool is_polynomial() const;
	bool is_zero_form() const { return node_->num.empty(); }
	std::optional<Rational> as_rational() const;
	bool is_constant() const;

	friend ScalarExpr operator+(ScalarExpr const &a, ScalarExpr const &b);
	friend ScalarExpr operator-(ScalarExpr const &a, ScalarExpr const &b);
	friend ScalarExpr operator*(ScalarExpr const &a, ScalarExpr const &b);
	friend ScalarExpr operator/(ScalarExpr const &a, ScalarExpr const &b);
	ScalarExpr operator-() const;
	ScalarExpr &operator+=(ScalarExpr const &b) { return *this = *this + b; }
	ScalarExpr &operator-=(ScalarExpr const &b) { return *this = *this - b; }
	ScalarExpr &operator*=(ScalarExpr const &b) { return *this = *this * b; }

	/// Structural identity of canonical forms.
	friend bool identical(ScalarExpr const &a, ScalarExpr const &b);

	static ScalarExpr from_parts(Poly num, Poly den);

  private:
	explicit ScalarExpr(std::shared_ptr<ExprNode const> n) : node_(std::move(n))
	{}
	std::shared_ptr<ExprNode const> node_;
};

/// Opaque symbol payload: name, coordinate dependencies, partial table.
struct OpaqueInfo
{
	std::string name;
	std::vector<std::string> depends;
	std::map<std::string, ScalarExpr> partials;
	std::function<double(std::map<std::string, double> const &)> numeric;
};

struct Atom
{
	enum class Kind
	{
		coordinate,
		parameter,
		opaque,
		exp,
		cos,
		sin
	};
	Kind kind;
	CoordinateClass coord;
	std::string key;  // unique identity
	std::string name; // coordinate, parameter or opaque name
	double value = 0; // parameter value
	std::optional<ScalarExpr> arg;
	std::shared_ptr<OpaqueInfo const> opaque;
};

namespace detail {

inline bool atom_less(Atom const *a, Atom const *b)
{
	if (a == b)
		return false;
	if (a->kind != b->kind)
		return a->kind < b->kind;
	if (a->kind == Atom::Kind::coordinate)
	{
		if (a->coord.cls != b->coord.cls)
			return a->coord.cls < b->coord.cls;
		if (a->coord.i != b->coord.i)
			return a->coord.i < b->coord.i;
		if (a->coord.j != b->coord.j)
			return a->coord.j < b->coord.j;
	}
	return a->key < b->key;
}

inline int mono_degree(Monomial const &m)
{
	int d = 0;
	for (auto const &[a, e] : m)
		d += e;
	return d;
}

// canonical term order: total degree descending, then lexicographic
inline bool mono_less(Monomial const &a, Monomial const &b)
{
	int da = mono_degree(a), db = mono_degree(b);
	if (da != db)
		return da > db;
	std::size_t k = 0;
	for (; k < a.size() && k < b.size(); ++k)
	{
		if (a[k].first != b[k].first)
			return atom_less(a[k].first, b[k].first);
		if (a[k].second != b[k].second)
			return a[k].second > b[k].second;
	}
	return a.size() > b.size();
}

inline bool mono_equal(Monomial const &a, Monomial const &b) { return a == b; }

class AtomRegistry
{
  public:
	static AtomRegistry &instance()
	{
		static AtomRegistry reg;
		return reg;
	}

	Atom const *intern(Atom proto)
	{
		std::lock_guard lock(mutex_);
		auto it = atoms_.find(proto.key);
		if (it != atoms_.end())
			return it->second.get();
		auto owned = std::make_unique<Atom>(std::move(proto));
		Atom const *ptr = owned.get();
		atoms_.emplace(ptr->key, std::move(owned));
		return ptr;
	}

	std::uint64_t next_id()
	{
		std::lock_guard lock(mutex_);
		return ++counter_;
	}

  private:
	std::mutex mutex_;
	std::unordered_map<std::string, std::unique_ptr<Atom>> atoms_;
	std::uint64_t counter_ = 0;
};

inline Poly const_poly(Rational c)
{
	if (c.is_zero())
		return {};
	return {Term{{}, c}};
}

inline bool poly_is_const(Poly const &p)
{
	return p.empty() || (p.size() == 1 && p[0].mono.empty());
}

inline Rational poly_const(Poly const &p)
{
	return p.empty() ? Rational(0) : p[0].coef;
}

inline bool poly_equal(Poly const &a, Poly const &b)
{
	if (a.size() != b.size())
		return false;
	for (std::size_t k = 0; k < a.size(); ++k)
		if (!(a[k].coef == b[k].coef) || a[k].mono != b[k].mono)
			return false;
	return true;
}

Atom const *exp_atom(ScalarExpr const &arg);
Atom const *function_atom(Atom::Kind kind, ScalarExpr const &arg);
Poly canonicalize(Poly terms);

inline Atom const *find_exp(Monomial const &m)
{
	for (auto const &[a, e] : m)
		if (a->kind == Atom::Kind::exp)
			return a;
	return nullptr;
}

// Multiplies two monomials; exp atoms are merged. Returns the coefficient
// adjustment (always 1) via the monomial only; a merged exp(0) disappears.
Monomial mul_mono(Monomial const &a, Monomial const &b);

inline Poly poly_add(Poly const &a, Poly const &b)
{
	Poly out;
	out.reserve(a.size() + b.size());
	std::size_t i = 0, j = 0;
	while (i < a.size() || j < b.size())
	{
		if (j == b.size() || (i < a.size() && mono_less(a[i].mono, b[j].mono)))
			out.push_back(a[i++]);
		else if (i == a.size() || mono_less(b[j].mono, a[i].mono))
			out.push_back(b[j++]);
		else
		{
			Rational c = a[i].coef + b[j].coef;
			if (!c.is_zero())
				out.push_back(Term{a[i].mono, c});
			++i;
			++j;
		}
	}
	return out;
}

inline Poly poly_scale(Poly const &a, Rational c)
{
	if (c.is_zero())
		return {};
	Poly out = a;
	for (auto &t : out)
		t.coef *= c;
	return out;
}

inline Poly poly_neg(Poly const &a) { return poly_scale(a, Rational(-1)); }

inline Poly poly_mul(Poly const &a, Poly const &b)
{
	if (a.empty() || b.empty())
		return {};
	if (poly_is_const(a))
		return poly_scale(b, poly_const(a));
	if (poly_is_const(b))
		return poly_scale(a, poly_const(b));
	Poly out;
	out.reserve(a.size() * b.size());
	for (auto const &ta : a)
		for (auto const &tb : b)
			out.push_back(Term{mul_mono(ta.mono, tb.mono), ta.coef * tb.coef});
	return canonicalize(std::move(out));
}

inline Poly poly_pow(Poly const &a, int e)
{
	Poly result = const_poly(Rational(1));
	Poly base = a;
	while (e > 0)
	{
		if (e & 1)
			result = poly_mul(result, base);
		e >>= 1;
		if (e)
			base = poly_mul(base, base);
	}
	return result;
}

// Sorts, merges equal monomials, drops zeros and reduces sin powers >= 2.
inline Poly canonicalize(Poly terms)
{
	for (;;)
	{
		std::sort(terms.begin(), terms.end(), [](Term const &x, Term const &y) {
			return mono_less(x.mono, y.mono);
		});
		Poly merged;
		merged.reserve(terms.size());
		for (auto &t : terms)
		{
			if (!merged.empty() && merged.back().mono == t.mono)
				merged.back().coef += t.coef;
			else
				merged.push_back(std::move(t));
		}
		Poly out;
		out.reserve(merged.size());
		for (auto &t : merged)
			if (!t.coef.is_zero())
				out.push_back(std::move(t));

		// sin(u)^e, e >= 2  ->  sin(u)^(e-2) * (1 - cos(u)^2)
		bool changed = false;
		Poly next;
		next.reserve(out.size());
		for (auto &t : out)
		{
			auto it = std::find_if(t.mono.begin(), t.mono.end(), [](auto const &p) {
				return p.first->kind == Atom::Kind::sin && p.second >= 2;
			});
			if (it == t.mono.end())
			{
				next.push_back(std::move(t));
				continue;
			}
			changed = true;
			Atom const *s = it->first;
			Monomial base = t.mono;
			auto bit = std::find_if(base.begin(), base.end(),
			                        [s](auto const &p) { return p.first == s; });
			bit->second -= 2;
			if (bit->second == 0)
				base.erase(bit);
			next.push_back(Term{base, t.coef});
			Atom const *cs = function_atom(Atom::Kind::cos, *s->arg);
			Monomial with_cos = mul_mono(base, Monomial{{cs, 2}});
			next.push_back(Term{std::move(with_cos), -t.coef});
		}
		terms = std::move(next);
		if (!changed)
			return terms;
	}
}

} // namespace detail

// ---------------------------------------------------------------------------
// ScalarExpr arithmetic

std::string render(ScalarExpr const &e);

namespace detail {

inline std::shared_ptr<ExprNode const> one_node()
{
	static auto node = std::make_shared<ExprNode const>(
	    ExprNode{{}, const_poly(Rational(1))});
	return node;
}

// Leading coefficient of the canonical order.
inline Rational leading_coef(Poly const &p) { return p.front().coef; }

inline std::optional<Rational> proportional(Poly const &a, Poly const &b)
{
	if (a.size() != b.size() || a.empty())
		return std::nullopt;
	Rational ratio = a[0].coef / b[0].coef;
	for (std::size_t k = 0; k < a.size(); ++k)
	{
		if (a[k].mono != b[k].mono)
			return std::nullopt;
		if (!(a[k].coef == ratio * b[k].coef))
			return std::nullopt;
	}
	return ratio;
}

// Divides every monomial of p by the monomial content m (exponents of
// non-exp atoms common to every term).
inline Monomial monomial_content(Poly const &p)
{
	if (p.empty())
		return {};
	Monomial content;
	for (auto const &[a, e] : p[0].mono)
		if (a->kind != Atom::Kind::exp)
			content.emplace_back(a, e);
	for (std::size_t k = 1; k < p.size() && !content.empty(); ++k)
	{
		Monomial next;
		for (auto const &[a, e] : content)
		{
			auto it = std::find_if(p[k].mono.begin(), p[k].mono.end(),
			                       [a](auto const &q) { return q.first == a; });
			if (it != p[k].mono.end())
				next.emplace_back(a, std::min(e, it->second));
		}
		content = std::move(next);
	}
	return content;
}

inline Monomial mono_div(Monomial const &m, Monomial const &c)
{
	Monomial out;
	for (auto const &[a, e] : m)
	{
		int ee = e;
		for (auto const &[b, f] : c)
			if (b == a)
				ee -= f;
		if (ee > 0)
			out.emplace_back(a, ee);
	}
	return out;
}

inline Monomial mono_min(Monomial const &a, Monomial const &b)
{
	Monomial out;
	for (auto const &[x, e] : a)
		for (auto const &[y, f] : b)
			if (x == y)
				out.emplace_back(x, std::min(e, f));
	return out;
}

} // namespace detail

inline ScalarExpr::ScalarExpr() : node_(std::make_shared<ExprNode const>(ExprNode{{}, detail::const_poly(Rational(1))}))
{}

inline ScalarExpr::ScalarExpr(Rational c)
    : node_(std::make_shared<ExprNode const>(
          ExprNode{detail::const_poly(c), detail::const_poly(Rational(1))}))
{}

inline ScalarExpr ScalarExpr::from_parts(Poly num, Poly den)
{
	using namespace detail;
	if (den.empty())
		throw std::domain_error("division by zero expression");
	if (num.empty())
		return ScalarExpr();
	if (!poly_is_const(den))
	{
		// move exp factors of a single-term denominator into the numerator
		if (den.size() == 1)
		{
			Atom const *ex = find_exp(den[0].mono);
			if (ex)
			{
				Monomial rest;
				for (auto const &p : den[0].mono)
					if (p.first != ex)
						rest.push_back(p);
				Poly inv{Term{Monomial{{exp_atom(-*ex->arg), 1}}, Rational(1)}};
				num = poly_mul(num, inv);
				den = Poly{Term{std::move(rest), den[0].coef}};
			}
		}
	}
	if (!poly_is_const(den))
	{
		// cancel common monomial content
		Monomial c = mono_min(monomial_content(num), monomial_content(den));
		if (!c.empty())
		{
			for (auto &t : num)
				t.mono = mono_div(t.mono, c);
			for (auto &t : den)
				t.mono = mono_div(t.mono, c);
			num = canonicalize(std::move(num));
			den = canonicalize(std::move(den));
		}
	}
	if (poly_is_const(den))
	{
		Rational c = poly_const(den);
		return ScalarExpr(std::make_shared<ExprNode const>(
		    ExprNode{poly_scale(num, Rational(1) / c), const_poly(Rational(1))}));
	}
	if (auto r = proportional(num, den))
		return ScalarExpr(*r);
	Rational lc = leading_coef(den);
	if (!lc.is_one())
	{
		num = poly_scale(num, Rational(1) / lc);
		den = poly_scale(den, Rational(1) / lc);
	}
	return ScalarExpr(
	    std::make_shared<ExprNode const>(ExprNode{std::move(num), std::move(den)}));
}

inline bool ScalarExpr::is_polynomial() const
{
	return detail::poly_is_const(node_->den);
}

inline std::optional<Rational> ScalarExpr::as_rational() const
{
	if (!is_polynomial() || !detail::poly_is_const(node_->num))
		return std::nullopt;
	return detail::poly_const(node_->num);
}

inline bool ScalarExpr::is_constant() const { return as_rational().has_value(); }

inline ScalarExpr ScalarExpr::coordinate(std::string const &name)
{
	Atom proto;
	proto.kind = Atom::Kind::coordinate;
	proto.coord = classify_coordinate(name);
	proto.key = name;
	proto.name = name;
	Atom const *a = detail::AtomRegistry::instance().intern(std::move(proto));
	return ScalarExpr(std::make_shared<ExprNode const>(
	    ExprNode{Poly{Term{Monomial{{a, 1}}, Rational(1)}},
	             detail::const_poly(Rational(1))}));
}

/// A named real constant. Treated as an indeterminate by the zero test and
/// as a constant by differentiation; evaluates to its bound value.
inline ScalarExpr ScalarExpr::parameter(std::string const &name, double value)
{
	Atom proto;
	proto.kind = Atom::Kind::parameter;
	std::ostringstream key;
	key.precision(17);
	key << name << "=" << value;
	proto.key = key.str();
	proto.name = name;
	proto.value = value;
	Atom const *a = detail::AtomRegistry::instance().intern(std::move(proto));
	return ScalarExpr(std::make_shared<ExprNode const>(
	    ExprNode{Poly{Term{Monomial{{a, 1}}, Rational(1)}},
	             detail::const_poly(Rational(1))}));
}

inline ScalarExpr operator+(ScalarExpr const &a, ScalarExpr const &b)
{
	using namespace detail;
	if (a.is_zero_form())
		return b;
	if (b.is_zero_form())
		return a;
	if (a.is_polynomial() && b.is_polynomial())
		return ScalarExpr(std::make_shared<ExprNode const>(
		    ExprNode{poly_add(a.num(), b.num()), const_poly(Rational(1))}));
	if (poly_equal(a.den(), b.den()))
		return ScalarExpr::from_parts(poly_add(a.num(), b.num()), a.den());
	return ScalarExpr::from_parts(
	    poly_add(poly_mul(a.num(), b.den()), poly_mul(b.num(), a.den())),
	    poly_mul(a.den(), b.den()));
}

inline ScalarExpr ScalarExpr::operator-() const
{
	return ScalarExpr(std::make_shared<ExprNode const>(
	    ExprNode{detail::poly_neg(num()), den()}));
}

inline ScalarExpr operator-(ScalarExpr const &a, ScalarExpr const &b)
{
	return a + (-b);
}

inline ScalarExpr operator*(ScalarExpr const &a, ScalarExpr const &b)
{
	using namespace detail;
	if (a.is_zero_form() || b.is_zero_form())
		return ScalarExpr();
	if (a.is_polynomial() && b.is_polynomial())
		return ScalarExpr(std::make_shared<ExprNode const>(
		    ExprNode{poly_mul(a.num(), b.num()), const_poly(Rational(1))}));
	return ScalarExpr::from_parts(poly_mul(a.num(), b.num()),
	                              poly_mul(a.den(), b.den()));
}

inline ScalarExpr operator/(ScalarExpr const &a, ScalarExpr const &b)
{
	using namespace detail;
	if (b.is_zero_form())
		throw std::domain_error("division by zero expression");
	return ScalarExpr::from_parts(poly_mul(a.num(), b.den()),
	                              poly_mul(a.den(), b.num()));
}

inline bool identical(ScalarExpr const &a, ScalarExpr const &b)
{
	return a.node_ == b.node_ || (detail::poly_equal(a.num(), b.num()) &&
	                              detail::poly_equal(a.den(), b.den()));
}

inline ScalarExpr pow(ScalarExpr const &base, int e)
{
	using namespace detail;
	if (e == 0)
		return ScalarExpr(1);
	if (e < 0)
		return ScalarExpr(1) / pow(base, -e);
	return ScalarExpr::from_parts(poly_pow(base.num(), e),
	                              poly_pow(base.den(), e));
}

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

// Sign normalization for odd/even primitives: returns (flipped?, arg').
inline std::pair<bool, ScalarExpr> normalize_sign(ScalarExpr const &u)
{
	if (!u.is_zero_form() && leading_coef(u.num()).sign() < 0)
		return {true, -u};
	return {false, u};
}

inline Atom const *function_atom(Atom::Kind kind, ScalarExpr const &arg)
{
	Atom proto;
	proto.kind = kind;
	char const *fname = kind == Atom::Kind::sin   ? "sin"
	                    : kind == Atom::Kind::cos ? "cos"
	                                              : "exp";
	proto.key = std::string(fname) + "(" + render(arg) + ")";
	proto.arg = arg;
	return AtomRegistry::instance().intern(std::move(proto));
}

inline Atom const *exp_atom(ScalarExpr const &arg)
{
	return function_atom(Atom::Kind::exp, arg);
}

inline ScalarExpr atom_expr(Atom const *a)
{
	return ScalarExpr::from_parts(Poly{Term{Monomial{{a, 1}}, Rational(1)}},
	                              const_poly(Rational(1)));
}

inline Monomial mul_mono(Monomial const &a, Monomial const &b)
{
	if (a.empty())
		return b;
	if (b.empty())
		return a;
	Atom const *ea = find_exp(a);
	Atom const *eb = find_exp(b);
	Monomial out;
	out.reserve(a.size() + b.size());
	std::size_t i = 0, j = 0;
	while (i < a.size() || j < b.size())
	{
		if (j == b.size() ||
		    (i < a.size() && atom_less(a[i].first, b[j].first)))
			out.push_back(a[i++]);
		else if (i == a.size() || atom_less(b[j].first, a[i].first))
			out.push_back(b[j++]);
		else
		{
			out.emplace_back(a[i].first, a[i].second + b[j].second);
			++i;
			++j;
		}
	}
	if (ea && eb)
	{
		out.erase(std::remove_if(out.begin(), out.end(),
		                         [](auto const &p) {
			                         return p.first->kind == Atom::Kind::exp;
		                         }),
		          out.end());
		ScalarExpr sum = *ea->arg + *eb->arg;
		if (!sum.is_zero_form())
		{
			Atom const *merged = exp_atom(sum);
			auto pos = std::lower_bound(
			    out.begin(), out.end(), merged,
			    [](auto const &p, Atom const *x) { return atom_less(p.first, x); });
			out.insert(pos, {merged, 1});
		}
	}
	return out;
}

} // namespace detail

inline ScalarExpr sin(ScalarExpr const &u)
{
	if (u.is_zero_form())
		return ScalarExpr();
	auto [flip, v] = detail::normalize_sign(u);
	ScalarExpr s = detail::atom_expr(detail::function_atom(Atom::Kind::sin, v));
	return flip ? -s : s;
}

inline ScalarExpr cos(ScalarExpr const &u)
{
	if (u.is_zero_form())
		return ScalarExpr(1);
	auto [flip, v] = detail::normalize_sign(u);
	(void)flip;
	return detail::atom_expr(detail::function_atom(Atom::Kind::cos, v));
}

inline ScalarExpr exp(ScalarExpr const &u)
{
	if (u.is_zero_form())
		return ScalarExpr(1);
	return detail::atom_expr(detail::exp_atom(u));
}

/// Creates an opaque symbol depending on the given coordinates, with an
/// explicit partial-derivative table and optional numeric evaluator.
inline ScalarExpr opaque_symbol(
    std::string const &name, std::vector<std::string> depends,
    std::map<std::string, ScalarExpr> partials = {},
    std::function<double(std::map<std::string, double> const &)> numeric = {})
{
	auto info = std::make_shared<OpaqueInfo>();
	info->name = name;
	info->depends = std::move(depends);
	info->partials = std::move(partials);
	info->numeric = std::move(numeric);
	Atom proto;
	proto.kind = Atom::Kind::opaque;
	proto.key = name + "#" + std::to_string(detail::AtomRegistry::instance().next_id());
	proto.name = name;
	proto.opaque = std::move(info);
	Atom const *a = detail::AtomRegistry::instance().intern(std::move(proto));
	return detail::atom_expr(a);
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string render_atom(Atom const *a)
{
	switch (a->kind)
	{
	case Atom::Kind::coordinate:
	case Atom::Kind::parameter:
	case Atom::Kind::opaque:
		return a->name;
	default:
		return a->key;
	}
}

inline std::string render_poly(Poly const &p)
{
	if (p.empty())
		return "0";
	std::string out;
	bool first = true;
	for (auto const &t : p)
	{
		Rational c = t.coef;
		bool neg = c.sign() < 0;
		if (neg)
			c = -c;
		if (first)
			out += neg ? "-" : "";
		else
			out += neg ? " - " : " + ";
		first = false;
		std::string factors;
		for (auto const &[a, e] : t.mono)
		{
			if (!factors.empty())
				factors += "*";
			factors += render_atom(a);
			if (e != 1)
				factors += "^" + std::to_string(e);
		}
		if (factors.empty())
			out += c.to_string();
		else if (c.is_one())
			out += factors;
		else
			out += c.to_string() + "*" + factors;
	}
	return out;
}

} // namespace detail

/// Canonical text rendering; parseable by covphase::parse given the same
/// parameter and opaque-symbol bindings.
inline std::string render(ScalarExpr const &e)
{
	if (e.is_polynomial())
		return detail::render_poly(e.num());
	return "(" + detail::render_poly(e.num()) + ")/(" +
	       detail::render_poly(e.den()) + ")";
}

inline std::ostream &operator<<(std::ostream &os, ScalarExpr const &e)
{
	return os << render(e);
}

// ---------------------------------------------------------------------------
// Structure queries

namespace detail {

template <class Fn> void for_each_atom(Poly const &p, Fn &&fn)
{
	for (auto const &t : p)
		for (auto const &[a, e] : t.mono)
			fn(a);
}

inline void collect_coordinates(ScalarExpr const &e, std::set<std::string> &out);

inline void collect_atom_coordinates(Atom const *a, std::set<std::string> &out)
{
	switch (a->kind)
	{
	case Atom::Kind::coordinate:
		out.insert(a->name);
		break;
	case Atom::Kind::opaque:
		for (auto const &d : a->opaque->depends)
			out.insert(d);
		break;
	case Atom::Kind::parameter:
		break;
	default:
		collect_coordinates(*a->arg, out);
	}
}

inline void collect_coordinates(ScalarExpr const &e, std::set<std::string> &out)
{
	for_each_atom(e.num(), [&](Atom const *a) { collect_atom_coordinates(a, out); });
	for_each_atom(e.den(), [&](Atom const *a) { collect_atom_coordinates(a, out); });
}

inline bool has_kind(ScalarExpr const &e, Atom::Kind k);

inline bool atom_has_kind(Atom const *a, Atom::Kind k)
{
	if (a->kind == k)
		return true;
	if (a->arg)
		return has_kind(*a->arg, k);
	return false;
}

inline bool has_kind(ScalarExpr const &e, Atom::Kind k)
{
	bool found = false;
	for_each_atom(e.num(), [&](Atom const *a) { found = found || atom_has_kind(a, k); });
	for_each_atom(e.den(), [&](Atom const *a) { found = found || atom_has_kind(a, k); });
	return found;
}

} // namespace detail

/// Coordinates the expression depends on (opaque symbols contribute their
/// declared dependencies).
inline std::set<std::string> coordinates_of(ScalarExpr const &e)
{
	std::set<std::string> out;
	detail::collect_coordinates(e, out);
	return out;
}

inline bool depends_on(ScalarExpr const &e, std::string const &coordinate)
{
	return coordinates_of(e).count(coordinate) > 0;
}

/// True when only coordinates and parameters occur.
inline bool is_polynomial_tier(ScalarExpr const &e)
{
	using K = Atom::Kind;
	return !detail::has_kind(e, K::sin) && !detail::has_kind(e, K::cos) &&
	       !detail::has_kind(e, K::exp) && !detail::has_kind(e, K::opaque);
}

inline bool has_opaque(ScalarExpr const &e)
{
	return detail::has_kind(e, Atom::Kind::opaque);
}

// ---------------------------------------------------------------------------
// Differentiation

ScalarExpr diff(ScalarExpr const &e, std::string const &c);

namespace detail {

inline ScalarExpr diff_atom(Atom const *a, std::string const &c)
{
	switch (a->kind)
	{
	case Atom::Kind::coordinate:
		return a->name == c ? ScalarExpr(1) : ScalarExpr();
	case Atom::Kind::parameter:
		return ScalarExpr();
	case Atom::Kind::sin:
		return cos(*a->arg) * diff(*a->arg, c);
	case Atom::Kind::cos:
		return -(sin(*a->arg) * diff(*a->arg, c));
	case Atom::Kind::exp:
		return atom_expr(a) * diff(*a->arg, c);
	case Atom::Kind::opaque: {
		auto const &info = *a->opaque;
		if (std::find(info.depends.begin(), info.depends.end(), c) ==
		    info.depends.end())
			return ScalarExpr();
		auto it = info.partials.find(c);
		if (it == info.partials.end())
			throw SymbolicError("opaque symbol '" + info.name +
			                    "' has no derivative table entry for " + c);
		return it->second;
	}
	}
	return ScalarExpr();
}

inline ScalarExpr mono_expr(Monomial const &m)
{
	return ScalarExpr::from_parts(Poly{Term{m, Rational(1)}},
	                              const_poly(Rational(1)));
}

inline ScalarExpr diff_poly(Poly const &p, std::string const &c)
{
	ScalarExpr acc;
	for (auto const &t : p)
	{
		for (std::size_t k = 0; k < t.mono.size(); ++k)
		{
			ScalarExpr da = diff_atom(t.mono[k].first, c);
			if (da.is_zero_form())
				continue;
			Monomial rest = t.mono;
			int e = rest[k].second;
			if (e == 1)
				rest.erase(rest.begin() + static_cast<long>(k));
			else
				rest[k].second -= 1;
			acc += ScalarExpr(t.coef * Rational(e)) * mono_expr(rest) * da;
		}
	}
	return acc;
}

} // namespace detail

/// Exact partial derivative with respect to the coordinate named `c`.
inline ScalarExpr diff(ScalarExpr const &e, std::string const &c)
{
	using namespace detail;
	ScalarExpr dn = diff_poly(e.num(), c);
	if (e.is_polynomial())
		return dn;
	ScalarExpr dd = diff_poly(e.den(), c);
	ScalarExpr N = ScalarExpr::from_parts(e.num(), const_poly(Rational(1)));
	ScalarExpr D = ScalarExpr::from_parts(e.den(), const_poly(Rational(1)));
	return (dn * D - N * dd) / (D * D);
}

/// Partial derivative checked against a chart: unknown coordinates error.
inline ScalarExpr diff(ScalarExpr const &e, std::string const &c,
                       ChartSpec const &chart)
{
	if (!chart.contains(c))
		throw SymbolicError("unknown coordinate '" + c + "'");
	return diff(e, c);
}

// ---------------------------------------------------------------------------
// Substitution

ScalarExpr substitute(ScalarExpr const &e,
                      std::map<std::string, ScalarExpr> const &map);

namespace detail {

inline ScalarExpr subst_atom(Atom const *a,
                             std::map<std::string, ScalarExpr> const &map)
{
	switch (a->kind)
	{
	case Atom::Kind::coordinate: {
		auto it = map.find(a->name);
		return it == map.end() ? atom_expr(a) : it->second;
	}
	case Atom::Kind::parameter:
		return atom_expr(a);
	case Atom::Kind::sin:
		return sin(substitute(*a->arg, map));
	case Atom::Kind::cos:
		return cos(substitute(*a->arg, map));
	case Atom::Kind::exp:
		return exp(substitute(*a->arg, map));
	case Atom::Kind::opaque:
		for (auto const &d : a->opaque->depends)
		{
			auto it = map.find(d);
			if (it != map.end() && !identical(it->second, ScalarExpr::coordinate(d)))
				throw SymbolicError("cannot substitute into opaque symbol '" +
				                    a->opaque->name + "'");
		}
		return atom_expr(a);
	}
	return atom_expr(a);
}

inline ScalarExpr subst_poly(Poly const &p,
                             std::map<std::string, ScalarExpr> const &map)
{
	ScalarExpr acc;
	for (auto const &t : p)
	{
		ScalarExpr term(t.coef);
		for (auto const &[a, e] : t.mono)
			term *= pow(subst_atom(a, map), e);
		acc += term;
	}
	return acc;
}

} // namespace detail

/// Replaces coordinates by expressions (simultaneously).
inline ScalarExpr substitute(ScalarExpr const &e,
                             std::map<std::string, ScalarExpr> const &map)
{
	ScalarExpr n = detail::subst_poly(e.num(), map);
	if (e.is_polynomial())
		return n;
	return n / detail::subst_poly(e.den(), map);
}

/// Rebuilds the canonical form from scratch. Idempotent.
inline ScalarExpr normalize(ScalarExpr const &e) { return substitute(e, {}); }

// ---------------------------------------------------------------------------
// Evaluation

using Assignment = std::map<std::string, double>;

class EvalError : public std::runtime_error
{
  public:
	using std::runtime_error::runtime_error;
};

double eval(ScalarExpr const &e, Assignment const &point);

namespace detail {

inline double eval_atom(Atom const *a, Assignment const &point)
{
	switch (a->kind)
	{
	case Atom::Kind::coordinate: {
		auto it = point.find(a->name);
		if (it == point.end())
			throw EvalError("missing assignment for coordinate '" + a->name + "'");
		return it->second;
	}
	case Atom::Kind::parameter:
		return a->value;
	case Atom::Kind::sin:
		return std::sin(eval(*a->arg, point));
	case Atom::Kind::cos:
		return std::cos(eval(*a->arg, point));
	case Atom::Kind::exp:
		return std::exp(eval(*a->arg, point));
	case Atom::Kind::opaque:
		if (!a->opaque->numeric)
			throw EvalError("opaque symbol '" + a->opaque->name +
			                "' has no numeric evaluator");
		return a->opaque->numeric(point);
	}
	return 0;
}

inline double eval_poly(Poly const &p, Assignment const &point,
                        double *abs_scale = nullptr)
{
	double acc = 0, scale = 0;
	for (auto const &t : p)
	{
		double v = t.coef.to_double();
		for (auto const &[a, e] : t.mono)
		{
			double x = eval_atom(a, point);
			double xe = 1;
			for (int k = 0; k < e; ++k)
				xe *= x;
			v *= xe;
		}
		acc += v;
		scale += std::fabs(v);
	}
	if (abs_scale)
		*abs_scale = scale;
	return acc;
}

} // namespace detail

/// Pointwise floating-point evaluation.
inline double eval(ScalarExpr const &e, Assignment const &point)
{
	double n = detail::eval_poly(e.num(), point);
	if (e.is_polynomial())
		return n;
	double d = detail::eval_poly(e.den(), point);
	if (d == 0.0)
		throw EvalError("division by zero during evaluation");
	return n / d;
}

/// Flattened evaluator over a chart's coordinate vector, for hot loops.
class CompiledExpr
{
  public:
	CompiledExpr() = default;

	CompiledExpr(ScalarExpr const &e, ChartSpec const &chart)
	{
		num_ = compile_poly(e.num(), chart);
		if (!e.is_polynomial())
		{
			den_ = compile_poly(e.den(), chart);
			has_den_ = true;
		}
	}

	double operator()(std::span<double const> coords) const
	{
		std::vector<double> scratch(atoms_.size());
		for (std::size_t k = 0; k < atoms_.size(); ++k)
			scratch[k] = eval_slot(atoms_[k], coords);
		double n = eval_terms(num_, scratch);
		if (!has_den_)
			return n;
		double d = eval_terms(den_, scratch);
		if (d == 0.0)
			throw EvalError("division by zero during evaluation");
		return n / d;
	}

  private:
	struct Slot
	{
		Atom::Kind kind;
		int coord = -1;
		double value = 0;
		std::shared_ptr<CompiledExpr> arg;
		std::shared_ptr<OpaqueInfo const> opaque;
		std::vector<std::string> const *names = nullptr;
	};
	struct CTerm
	{
		double coef;
		std::vector<std::pair<int, int>> factors;
	};

	std::vector<Slot> atoms_;
	std::vector<Atom const *> keys_;
	std::vector<CTerm> num_, den_;
	bool has_den_ = false;
	std::vector<std::string> chart_names_;

	int slot_of(Atom const *a, ChartSpec const &chart)
	{
		for (std::size_t k = 0; k < keys_.size(); ++k)
			if (keys_[k] == a)
				return static_cast<int>(k);
		Slot s;
		s.kind = a->kind;
		switch (a->kind)
		{
		case Atom::Kind::coordinate: {
			auto idx = chart.index_of(a->name);
			if (!idx)
				throw EvalError("coordinate '" + a->name + "' not in chart");
			s.coord = *idx;
			break;
		}
		case Atom::Kind::parameter:
			s.value = a->value;
			break;
		case Atom::Kind::opaque:
			if (!a->opaque->numeric)
				throw EvalError("opaque symbol '" + a->opaque->name +
				                "' has no numeric evaluator");
			s.opaque = a->opaque;
			chart_names_ = chart.names();
			break;
		default:
			s.arg = std::make_shared<CompiledExpr>(*a->arg, chart);
		}
		atoms_.push_back(std::move(s));
		keys_.push_back(a);
		return static_cast<int>(atoms_.size() - 1);
	}

	std::vector<CTerm> compile_poly(Poly const &p, ChartSpec const &chart)
	{
		std::vector<CTerm> out;
		for (auto const &t : p)
		{
			CTerm ct{t.coef.to_double(), {}};
			for (auto const &[a, e] : t.mono)
				ct.factors.emplace_back(slot_of(a, chart), e);
			out.push_back(std::move(ct));
		}
		return out;
	}

	double eval_slot(Slot const &s, std::span<double const> coords) const
	{
		switch (s.kind)
		{
		case Atom::Kind::coordinate:
			return coords[static_cast<std::size_t>(s.coord)];
		case Atom::Kind::parameter:
			return s.value;
		case Atom::Kind::sin:
			return std::sin((*s.arg)(coords));
		case Atom::Kind::cos:
			return std::cos((*s.arg)(coords));
		case Atom::Kind::exp:
			return std::exp((*s.arg)(coords));
		case Atom::Kind::opaque: {
			Assignment pt;
			for (std::size_t k = 0; k < chart_names_.size(); ++k)
				pt[chart_names_[k]] = coords[k];
			return s.opaque->numeric(pt);
		}
		}
		return 0;
	}

	static double eval_terms(std::vector<CTerm> const &terms,
	                         std::vector<double> const &scratch)
	{
		double acc = 0;
		for (auto const &t : terms)
		{
			double v = t.coef;
			for (auto const &[slot, e] : t.factors)
			{
				double x = scratch[static_cast<std::size_t>(slot)];
				for (int k = 0; k < e; ++k)
					v *= x;
			}
			acc += v;
		}
		return acc;
	}
};

// ---------------------------------------------------------------------------
// Zero test

/// Number of random evaluation points used when the canonical form cannot
/// settle a zero test on its own.
inline constexpr int kWitnessPoints = 32;
inline constexpr std::uint64_t kWitnessSeed = 0x5eed'c0de'2015ULL;

/// Zero test. On the polynomial tier the verdict is exact. With primitives
/// or opaque symbols, a numerator that canonicalizes to zero is zero; a
/// nonzero numerator is reported nonzero only when a random evaluation
/// point witnesses it, otherwise undecided.
inline Verdict is_zero(ScalarExpr const &e)
{
	if (e.is_zero_form())
		return Verdict::zero;
	ScalarExpr numerator = ScalarExpr::from_parts(e.num(), detail::const_poly(Rational(1)));
	if (is_polynomial_tier(numerator))
		return Verdict::nonzero;

	std::set<std::string> coords = coordinates_of(e);
	std::mt19937_64 rng(kWitnessSeed);
	std::uniform_real_distribution<double> dist(-1.3, 1.7);
	for (int k = 0; k < kWitnessPoints; ++k)
	{
		Assignment pt;
		for (auto const &c : coords)
			pt[c] = dist(rng);
		try
		{
			double scale = 0;
			double v = detail::eval_poly(e.num(), pt, &scale);
			if (std::isfinite(v) && std::fabs(v) > 1e-9 * std::max(scale, 1e-300) &&
			    std::fabs(v) > 1e-300)
				return Verdict::nonzero;
		}
		catch (EvalError const &)
		{
			return Verdict::undecided;
		}
	}
	return Verdict::undecided;
}

inline Verdict combine(Verdict a, Verdict b)
{
	if (a == Verdict::nonzero || b == Verdict::nonzero)
		return Verdict::nonzero;
	if (a == Verdict::undecided || b == Verdict::undecided)
		return Verdict::undecided;
	return Verdict::zero;
}

} // namespace covphase
