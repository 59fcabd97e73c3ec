#pragma once

// Exterior algebra on a chart: differential forms and vector fields with
// symbolic coefficients.
//
// A p-form is stored sparsely as a map from a coordinate subset (bitmask
// over chart indices, read in increasing chart order) to its coefficient.
// Volume pieces follow
//
//   d^n x_mu    := i_{d/dx^mu} d^n x
//   d^n x_{mu nu} := i_{d/dx^nu} i_{d/dx^mu} d^n x

#include "covphase/symexpr.hpp"

#include <bit>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace covphase {

using Chart = std::shared_ptr<ChartSpec const>;

inline Chart make_chart(int n, int N, bool extended = false)
{
	return std::make_shared<ChartSpec const>(n, N, extended);
}

using FormKey = unsigned __int128;

inline FormKey key_bit(int k) { return FormKey(1) << k; }

inline int key_degree(FormKey k)
{
	return std::popcount(static_cast<std::uint64_t>(k)) +
	       std::popcount(static_cast<std::uint64_t>(k >> 64));
}

inline bool key_has(FormKey k, int i) { return (k >> i) & 1; }

inline std::vector<int> key_indices(FormKey k)
{
	std::vector<int> out;
	for (int i = 0; k; ++i, k >>= 1)
		if (k & 1)
			out.push_back(i);
	return out;
}

class ChartMismatch : public std::invalid_argument
{
  public:
	ChartMismatch() : std::invalid_argument("chart mismatch") {}
};

class VectorField;

/// Homogeneous differential form of fixed degree.
class DiffForm
{
  public:
	using Terms = std::map<FormKey, ScalarExpr>;

	DiffForm(Chart chart, int degree) : chart_(std::move(chart)), degree_(degree)
	{
		if (degree < 0)
			throw std::invalid_argument("negative form degree");
	}

	static DiffForm function(Chart chart, ScalarExpr f)
	{
		DiffForm out(std::move(chart), 0);
		out.add_term(0, std::move(f));
		return out;
	}

	/// d(coordinate k)
	static DiffForm basis(Chart chart, int k)
	{
		if (k < 0 || k >= chart->dim())
			throw std::out_of_range("coordinate index out of range");
		DiffForm out(std::move(chart), 1);
		out.terms_.emplace(key_bit(k), ScalarExpr(1));
		return out;
	}

	static DiffForm basis(Chart chart, std::string const &name)
	{
		auto k = chart->index_of(name);
		if (!k)
			throw SymbolicError("unknown coordinate '" + name + "'");
		return basis(std::move(chart), *k);
	}

	Chart const &chart() const { return chart_; }
	int degree() const { return degree_; }
	Terms const &terms() const { return terms_; }
	bool empty() const { return terms_.empty(); }

	ScalarExpr coefficient(FormKey k) const
	{
		auto it = terms_.find(k);
		return it == terms_.end() ? ScalarExpr() : it->second;
	}

	/// Adds c to the coefficient of key k; zero results are dropped.
	void add_term(FormKey k, ScalarExpr const &c)
	{
		if (key_degree(k) != degree_)
			throw std::logic_error("form key degree mismatch");
		if (c.is_zero_form())
			return;
		auto it = terms_.find(k);
		if (it == terms_.end())
		{
			terms_.emplace(k, c);
			return;
		}
		it->second += c;
		if (it->second.is_zero_form())
			terms_.erase(it);
	}

	DiffForm &operator+=(DiffForm const &b)
	{
		check(b);
		if (b.degree_ != degree_)
			throw std::invalid_argument("adding forms of different degree");
		for (auto const &[k, c] : b.terms_)
			add_term(k, c);
		return *this;
	}
	DiffForm &operator-=(DiffForm const &b) { return *this += -b; }

	friend DiffForm operator+(DiffForm a, DiffForm const &b) { return a += b; }
	friend DiffForm operator-(DiffForm a, DiffForm const &b) { return a -= b; }

	DiffForm operator-() const
	{
		DiffForm out(chart_, degree_);
		for (auto const &[k, c] : terms_)
			out.terms_.emplace(k, -c);
		return out;
	}

	friend DiffForm operator*(ScalarExpr const &f, DiffForm const &a)
	{
		DiffForm out(a.chart_, a.degree_);
		if (f.is_zero_form())
			return out;
		for (auto const &[k, c] : a.terms_)
			out.add_term(k, f * c);
		return out;
	}

	void check(DiffForm const &b) const
	{
		if (chart_ != b.chart_ && !(*chart_ == *b.chart_))
			throw ChartMismatch();
	}

	/// Applies fn to every coefficient.
	template <class Fn> DiffForm map_coefficients(Fn &&fn) const
	{
		DiffForm out(chart_, degree_);
		for (auto const &[k, c] : terms_)
			out.add_term(k, fn(c));
		return out;
	}

  private:
	Chart chart_;
	int degree_;
	Terms terms_;
};

/// Vector field with one symbolic component per chart coordinate.
class VectorField
{
  public:
	explicit VectorField(Chart chart)
	    : chart_(std::move(chart)), comp_(static_cast<std::size_t>(chart_->dim()))
	{}

	static VectorField coordinate(Chart chart, int k)
	{
		VectorField X(std::move(chart));
		X.set(k, ScalarExpr(1));
		return X;
	}
	static VectorField coordinate(Chart chart, std::string const &name)
	{
		auto k = chart->index_of(name);
		if (!k)
			throw SymbolicError("unknown coordinate '" + name + "'");
		return coordinate(std::move(chart), *k);
	}

	Chart const &chart() const { return chart_; }
	int dim() const { return chart_->dim(); }
	ScalarExpr const &operator[](int k) const
	{
		return comp_.at(static_cast<std::size_t>(k));
	}
	ScalarExpr const &operator[](std::string const &name) const
	{
		return (*this)[index(name)];
	}
	void set(int k, ScalarExpr v) { comp_.at(static_cast<std::size_t>(k)) = std::move(v); }
	void set(std::string const &name, ScalarExpr v) { set(index(name), std::move(v)); }

	VectorField &operator+=(VectorField const &b)
	{
		check(b);
		for (int k = 0; k < dim(); ++k)
			comp_[static_cast<std::size_t>(k)] += b[k];
		return *this;
	}
	friend VectorField operator+(VectorField a, VectorField const &b) { return a += b; }
	friend VectorField operator-(VectorField a, VectorField const &b)
	{
		return a += (ScalarExpr(-1) * b);
	}
	VectorField operator-() const { return ScalarExpr(-1) * *this; }
	friend VectorField operator*(ScalarExpr const &f, VectorField const &X)
	{
		VectorField out(X.chart_);
		for (int k = 0; k < X.dim(); ++k)
			out.set(k, f * X[k]);
		return out;
	}

	/// X(f) = X^k df/dy^k
	ScalarExpr apply(ScalarExpr const &f) const
	{
		ScalarExpr acc;
		for (int k = 0; k < dim(); ++k)
			if (!comp_[static_cast<std::size_t>(k)].is_zero_form())
				acc += comp_[static_cast<std::size_t>(k)] * diff(f, chart_->name(k));
		return acc;
	}

	void check(VectorField const &b) const
	{
		if (chart_ != b.chart_ && !(*chart_ == *b.chart_))
			throw ChartMismatch();
	}
	void check(DiffForm const &a) const
	{
		if (chart_ != a.chart() && !(*chart_ == *a.chart()))
			throw ChartMismatch();
	}

  private:
	int index(std::string const &name) const
	{
		auto k = chart_->index_of(name);
		if (!k)
			throw SymbolicError("unknown coordinate '" + name + "'");
		return *k;
	}
	Chart chart_;
	std::vector<ScalarExpr> comp_;
};

/// Commutator [X, Y]^k = X(Y^k) - Y(X^k).
inline VectorField commutator(VectorField const &X, VectorField const &Y)
{
	X.check(Y);
	VectorField out(X.chart());
	for (int k = 0; k < X.dim(); ++k)
		out.set(k, X.apply(Y[k]) - Y.apply(X[k]));
	return out;
}

inline Verdict is_zero(VectorField const &X)
{
	Verdict v = Verdict::zero;
	for (int k = 0; k < X.dim(); ++k)
		v = combine(v, is_zero(X[k]));
	return v;
}

inline Verdict is_zero(DiffForm const &a)
{
	Verdict v = Verdict::zero;
	for (auto const &[k, c] : a.terms())
		v = combine(v, is_zero(c));
	return v;
}

inline Verdict equal(DiffForm const &a, DiffForm const &b)
{
	return is_zero(a - b);
}

// ---------------------------------------------------------------------------
// Algebra

/// a ^ b. Returns the zero form of degree |a|+|b| when that exceeds the
/// chart dimension.
inline DiffForm wedge(DiffForm const &a, DiffForm const &b)
{
	a.check(b);
	DiffForm out(a.chart(), a.degree() + b.degree());
	if (out.degree() > a.chart()->dim())
		return out;
	for (auto const &[ka, ca] : a.terms())
		for (auto const &[kb, cb] : b.terms())
		{
			if (ka & kb)
				continue;
			// inversions: pairs (i in a, j in b) with i > j
			int inv = 0;
			for (int j : key_indices(kb))
				inv += key_degree(ka >> (j + 1));
			ScalarExpr c = ca * cb;
			out.add_term(ka | kb, (inv & 1) ? -c : c);
		}
	return out;
}

inline DiffForm operator^(DiffForm const &a, DiffForm const &b) { return wedge(a, b); }

/// Exterior derivative.
inline DiffForm d(DiffForm const &a)
{
	auto const &chart = a.chart();
	DiffForm out(chart, a.degree() + 1);
	if (out.degree() > chart->dim())
		return out;
	for (auto const &[key, c] : a.terms())
		for (int k = 0; k < chart->dim(); ++k)
		{
			if (key_has(key, k))
				continue;
			ScalarExpr dc = diff(c, chart->name(k));
			if (dc.is_zero_form())
				continue;
			int sign = key_degree(key & (key_bit(k) - 1)) & 1;
			out.add_term(key | key_bit(k), sign ? -dc : dc);
		}
	return out;
}

/// Interior product i_X a.
inline DiffForm contract(VectorField const &X, DiffForm const &a)
{
	X.check(a);
	if (a.degree() == 0)
		return DiffForm(a.chart(), 0);
	DiffForm out(a.chart(), a.degree() - 1);
	for (auto const &[key, c] : a.terms())
	{
		int pos = 0;
		for (int j : key_indices(key))
		{
			if (!X[j].is_zero_form())
			{
				ScalarExpr t = X[j] * c;
				out.add_term(key & ~key_bit(j), (pos & 1) ? -t : t);
			}
			++pos;
		}
	}
	return out;
}

/// Lie derivative via Cartan's formula.
inline DiffForm lie(VectorField const &X, DiffForm const &a)
{
	DiffForm out = contract(X, d(a));
	if (a.degree() > 0)
		out += d(contract(X, a));
	return out;
}

// ---------------------------------------------------------------------------
// Volume pieces

inline DiffForm dnx(Chart const &chart)
{
	DiffForm out(chart, chart->n());
	FormKey k = 0;
	for (int mu = 0; mu < chart->n(); ++mu)
		k |= key_bit(chart->x_index(mu));
	out.add_term(k, ScalarExpr(1));
	return out;
}

inline DiffForm dnx_mu(Chart const &chart, int mu)
{
	return contract(VectorField::coordinate(chart, chart->x_index(mu)), dnx(chart));
}

inline DiffForm dnx_munu(Chart const &chart, int mu, int nu)
{
	return contract(VectorField::coordinate(chart, chart->x_index(nu)),
	                dnx_mu(chart, mu));
}

// ---------------------------------------------------------------------------
// Pullback

/// Coordinate map from a source chart into a target chart: each target
/// coordinate is assigned an expression in source coordinates.
struct ChartMap
{
	Chart source;
	Chart target;
	std::map<std::string, ScalarExpr> assign;

	static ChartMap identity(Chart c)
	{
		ChartMap m{c, c, {}};
		for (auto const &name : c->names())
			m.assign.emplace(name, ScalarExpr::coordinate(name));
		return m;
	}

	ScalarExpr const &at(std::string const &name) const
	{
		auto it = assign.find(name);
		if (it == assign.end())
			throw std::invalid_argument("target coordinate '" + name +
			                            "' unassigned in chart map");
		return it->second;
	}
};

inline DiffForm pullback(ChartMap const &m, DiffForm const &a)
{
	if (a.chart() != m.target && !(*a.chart() == *m.target))
		throw ChartMismatch();
	for (auto const &name : m.target->names())
		(void)m.at(name);
	std::vector<DiffForm> dm;
	dm.reserve(static_cast<std::size_t>(m.target->dim()));
	for (auto const &name : m.target->names())
		dm.push_back(d(DiffForm::function(m.source, m.at(name))));
	DiffForm out(m.source, a.degree());
	for (auto const &[key, c] : a.terms())
	{
		DiffForm piece = DiffForm::function(m.source, substitute(c, m.assign));
		for (int k : key_indices(key))
			piece = wedge(piece, dm[static_cast<std::size_t>(k)]);
		out += piece;
	}
	return out;
}

// ---------------------------------------------------------------------------
// Text

inline std::string render_key(ChartSpec const &chart, FormKey key)
{
	std::string out;
	for (int k : key_indices(key))
	{
		if (!out.empty())
			out += "^";
		out += "d" + chart.name(k);
	}
	return out.empty() ? "1" : out;
}

inline std::string render(DiffForm const &a)
{
	if (a.empty())
		return "0";
	std::string out;
	for (auto const &[k, c] : a.terms())
	{
		if (!out.empty())
			out += " + ";
		out += "(" + render(c) + ")*" + render_key(*a.chart(), k);
	}
	return out;
}

inline std::ostream &operator<<(std::ostream &os, DiffForm const &a)
{
	return os << render(a);
}

/// Parses a basis spelling such as "dq1^dx0" into a wedge of coordinate
/// differentials (sign from reordering included). "1" is the 0-form unit.
inline DiffForm parse_form_key(Chart const &chart, std::string const &spec)
{
	if (spec == "1")
		return DiffForm::function(chart, ScalarExpr(1));
	DiffForm out = DiffForm::function(chart, ScalarExpr(1));
	std::stringstream ss(spec);
	std::string piece;
	while (std::getline(ss, piece, '^'))
	{
		if (piece.size() < 2 || piece[0] != 'd')
			throw std::invalid_argument("malformed form key '" + spec + "'");
		std::string name = piece.substr(1);
		if (name == "q" && chart->N() == 1)
			name = "q1";
		if (!chart->contains(name))
			throw std::invalid_argument("unknown coordinate '" + name +
			                            "' in form key '" + spec + "'");
		out = wedge(out, DiffForm::basis(chart, name));
	}
	return out;
}

} // namespace covphase
