#pragma once

// Run configuration for the command-line driver. Every physics input is an
// expression string; errors report the JSON pointer of the offending value.
//
//   {
//     "parameters": {"k": 6.283185307179586},
//     "model":   {"n": 2, "N": 1, "metric": [["1","0"],["0","-1"]],
//                 "gauge": ["0","0"], "potential": "1/2*q^2"},
//     "lattice": {"nx": 128, "nt": 129, "length": 1, "cfl": 0.5},
//     "initial": {"phi0": "cos(2*pi*x)", "phi_t0": "0"},
//     "forms":   {"F": {"kind": "shift_smear", "epsilon": "cos(k*(x1 - x0))"},
//                 "E": {"kind": "energy"}},
//     "experiment": {...}
//   }
//
// "lattice" also accepts explicit "dx" and "dt" instead of "length"/"cfl".
// Identifiers "pi" and "L" (circle length) are predefined; initial data may
// use "x" for x1.

#include "covphase/functionals.hpp"
#include "covphase/model.hpp"

#include "json.hpp"

#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace covphase {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error
{
  public:
	ConfigError(std::string pointer, std::string const &msg)
	    : std::runtime_error(pointer + ": " + msg), pointer_(std::move(pointer))
	{}
	std::string const &pointer() const { return pointer_; }

  private:
	std::string pointer_;
};

struct FormEntry
{
	std::string name;
	std::string kind; // shift_smear, field_shift, energy, custom
	std::string pointer;
	ScalarExpr epsilon;
	std::vector<std::pair<std::string, ScalarExpr>> components; // custom: basis key -> coefficient
};

struct LatticeBlock
{
	LatticeGrid grid;
	double length = 1;
	double ratio = 0.5; // dt / dx
};

/// Typed access into a JSON object with pointer-tagged errors.
class Node
{
  public:
	Node(Json const &j, std::string pointer) : j_(&j), ptr_(std::move(pointer)) {}

	std::string const &pointer() const { return ptr_; }
	Json const &json() const { return *j_; }
	bool has(std::string const &key) const { return j_->is_object() && j_->contains(key); }

	Node at(std::string const &key) const
	{
		if (!j_->is_object())
			throw ConfigError(ptr_, "expected an object");
		auto it = j_->find(key);
		if (it == j_->end())
			throw ConfigError(ptr_ + "/" + key, "missing required value");
		return {*it, ptr_ + "/" + key};
	}

	Node at(std::size_t i) const
	{
		if (!j_->is_array() || i >= j_->size())
			throw ConfigError(ptr_ + "/" + std::to_string(i), "missing array element");
		return {(*j_)[i], ptr_ + "/" + std::to_string(i)};
	}

	std::size_t size(std::optional<std::size_t> expect = {}) const
	{
		if (!j_->is_array())
			throw ConfigError(ptr_, "expected an array");
		if (expect && j_->size() != *expect)
			throw ConfigError(ptr_, "expected " + std::to_string(*expect) + " entries, got " +
			                            std::to_string(j_->size()));
		return j_->size();
	}

	long long integer() const
	{
		if (!j_->is_number_integer())
			throw ConfigError(ptr_, "expected an integer");
		return j_->get<long long>();
	}

	double number() const
	{
		if (!j_->is_number())
			throw ConfigError(ptr_, "expected a number");
		double v = j_->get<double>();
		if (!std::isfinite(v))
			throw ConfigError(ptr_, "expected a finite number");
		return v;
	}

	std::string string() const
	{
		if (!j_->is_string())
			throw ConfigError(ptr_, "expected a string");
		return j_->get<std::string>();
	}

	/// Expression given as a string (numbers are accepted as constants).
	ScalarExpr expr(ParseContext const &ctx) const
	{
		std::string text;
		if (j_->is_string())
			text = j_->get<std::string>();
		else if (j_->is_number_integer())
			text = std::to_string(j_->get<long long>());
		else
			throw ConfigError(ptr_, "expected an expression string");
		try
		{
			return parse(text, ctx);
		}
		catch (std::exception const &e)
		{
			throw ConfigError(ptr_, e.what());
		}
	}

	long long integer_or(std::string const &key, long long fallback) const
	{
		return has(key) ? at(key).integer() : fallback;
	}
	double number_or(std::string const &key, double fallback) const
	{
		return has(key) ? at(key).number() : fallback;
	}
	std::string string_or(std::string const &key, std::string fallback) const
	{
		return has(key) ? at(key).string() : fallback;
	}

  private:
	Json const *j_;
	std::string ptr_;
};

struct RunConfig
{
	Json root;
	int n = 2;
	ModelSpec model;
	std::map<std::string, double> parameters;
	std::optional<LatticeBlock> lattice;
	std::optional<std::pair<ScalarExpr, ScalarExpr>> initial;
	std::vector<FormEntry> forms;

	Node node(std::string const &key) const { return Node(root, "").at(key); }
	Node experiment() const
	{
		static Json const empty = Json::object();
		return root.contains("experiment") ? node("experiment") : Node(empty, "/experiment");
	}

	ParseContext context() const
	{
		ParseContext ctx(ChartSpec::ordinary(n, 1));
		ctx.bind_parameter("pi", std::numbers::pi);
		if (lattice)
			ctx.bind_parameter("L", lattice->length);
		for (auto const &[name, v] : parameters)
			ctx.bind_parameter(name, v);
		return ctx;
	}

	FormEntry const &form(Node const &name_node) const
	{
		std::string name = name_node.string();
		for (auto const &f : forms)
			if (f.name == name)
				return f;
		throw ConfigError(name_node.pointer(), "no form named '" + name + "' in /forms");
	}
};

namespace detail {

inline void parse_model(RunConfig &cfg, Node const &m)
{
	cfg.n = static_cast<int>(m.integer_or("n", 2));
	if (cfg.n < 1 || cfg.n > 4)
		throw ConfigError(m.pointer() + "/n", "space-time dimension must be between 1 and 4");
	if (m.integer_or("N", 1) != 1)
		throw ConfigError(m.pointer() + "/N", "only one field component (N = 1) is supported");
	auto un = static_cast<std::size_t>(cfg.n);
	ParseContext ctx = cfg.context();
	ModelSpec spec;
	spec.n = cfg.n;
	spec.g.assign(un, std::vector<ScalarExpr>(un));
	spec.A.assign(un, ScalarExpr());
	auto only_x = [&](ScalarExpr const &e, std::string const &ptr, bool allow_q) {
		for (auto const &c : coordinates_of(e))
			if (c.rfind('x', 0) != 0 && !(allow_q && c == "q1"))
				throw ConfigError(ptr, "may not depend on " + c);
	};
	if (m.has("metric"))
	{
		Node g = m.at("metric");
		g.size(un);
		for (std::size_t a = 0; a < un; ++a)
		{
			Node row = g.at(a);
			row.size(un);
			for (std::size_t b = 0; b < un; ++b)
			{
				spec.g[a][b] = row.at(b).expr(ctx);
				only_x(spec.g[a][b], row.at(b).pointer(), false);
			}
		}
	}
	else
	{
		for (std::size_t a = 0; a < un; ++a)
			spec.g[a][a] = ScalarExpr(a == 0 ? 1 : -1);
	}
	if (m.has("gauge"))
	{
		Node A = m.at("gauge");
		A.size(un);
		for (std::size_t a = 0; a < un; ++a)
		{
			spec.A[a] = A.at(a).expr(ctx);
			only_x(spec.A[a], A.at(a).pointer(), false);
		}
	}
	if (m.has("potential"))
	{
		spec.V = m.at("potential").expr(ctx);
		only_x(spec.V, m.pointer() + "/potential", true);
	}
	try
	{
		spec.validate();
		(void)spec.inverse_metric();
	}
	catch (std::exception const &e)
	{
		throw ConfigError(m.pointer() + "/metric", e.what());
	}
	cfg.model = std::move(spec);
}

inline void parse_lattice(RunConfig &cfg, Node const &l)
{
	LatticeBlock b;
	auto nx = l.at("nx").integer(), nt = l.at("nt").integer();
	if (nx < 8 || nx > (1 << 20))
		throw ConfigError(l.pointer() + "/nx", "nx must be in [8, 2^20]");
	if (nt < 3 || nt > (1 << 24))
		throw ConfigError(l.pointer() + "/nt", "nt must be in [3, 2^24]");
	if (l.has("dx") || l.has("dt"))
	{
		double dx = l.at("dx").number(), dt = l.at("dt").number();
		if (!(dx > 0))
			throw ConfigError(l.pointer() + "/dx", "must be positive");
		if (!(dt > 0))
			throw ConfigError(l.pointer() + "/dt", "must be positive");
		b.grid = {static_cast<int>(nx), static_cast<int>(nt), dx, dt};
		b.length = nx * dx;
		b.ratio = dt / dx;
	}
	else
	{
		b.length = l.number_or("length", 1.0);
		b.ratio = l.number_or("cfl", 0.5);
		if (!(b.length > 0))
			throw ConfigError(l.pointer() + "/length", "must be positive");
		if (!(b.ratio > 0))
			throw ConfigError(l.pointer() + "/cfl", "must be positive");
		b.grid = LatticeGrid::periodic(static_cast<int>(nx), static_cast<int>(nt), b.length, b.ratio);
	}
	cfg.lattice = b;
}

inline void parse_forms(RunConfig &cfg, Node const &f)
{
	if (!f.json().is_object())
		throw ConfigError(f.pointer(), "expected an object of named forms");
	ParseContext ctx = cfg.context();
	Chart chart = make_chart(cfg.n, 1, false);
	for (auto const &[name, value] : f.json().items())
	{
		Node e(value, f.pointer() + "/" + name);
		FormEntry fe;
		fe.name = name;
		fe.pointer = e.pointer();
		fe.kind = e.at("kind").string();
		if (fe.kind == "shift_smear")
		{
			fe.epsilon = e.at("epsilon").expr(ctx);
			for (auto const &c : coordinates_of(fe.epsilon))
				if (c.rfind('x', 0) != 0)
					throw ConfigError(e.pointer() + "/epsilon", "may depend on space-time only, found " + c);
		}
		else if (fe.kind == "custom")
		{
			Node comps = e.at("components");
			if (!comps.json().is_object() || comps.json().empty())
				throw ConfigError(comps.pointer(), "expected a non-empty object of basis keys");
			for (auto const &[key, coef] : comps.json().items())
			{
				Node c(coef, comps.pointer() + "/" + key);
				try
				{
					DiffForm basis = parse_form_key(chart, key);
					if (basis.degree() != cfg.n - 1)
						throw std::invalid_argument("basis key must have degree n - 1");
				}
				catch (std::exception const &ex)
				{
					throw ConfigError(c.pointer(), ex.what());
				}
				fe.components.emplace_back(key, c.expr(ctx));
			}
		}
		else if (fe.kind != "field_shift" && fe.kind != "energy")
			throw ConfigError(e.pointer() + "/kind",
			                  "unknown kind '" + fe.kind + "' (shift_smear, field_shift, energy, custom)");
		cfg.forms.push_back(std::move(fe));
	}
}

} // namespace detail

inline RunConfig parse_config(Json root)
{
	RunConfig cfg;
	cfg.root = std::move(root);
	Node top(cfg.root, "");
	if (!cfg.root.is_object())
		throw ConfigError("", "configuration must be a JSON object");
	if (top.has("parameters"))
	{
		Node p = top.at("parameters");
		if (!p.json().is_object())
			throw ConfigError(p.pointer(), "expected an object of numbers");
		for (auto const &[name, v] : p.json().items())
			cfg.parameters[name] = Node(v, p.pointer() + "/" + name).number();
	}
	if (top.has("lattice"))
		detail::parse_lattice(cfg, top.at("lattice"));
	detail::parse_model(cfg, top.at("model"));
	if (top.has("initial"))
	{
		Node init = top.at("initial");
		ParseContext ctx = cfg.context();
		ctx.bind("x", ScalarExpr::coordinate("x1"));
		ScalarExpr phi0 = init.at("phi0").expr(ctx);
		ScalarExpr phit = init.has("phi_t0") ? init.at("phi_t0").expr(ctx) : ScalarExpr();
		for (auto const &[e, key] : {std::pair{&phi0, "phi0"}, std::pair{&phit, "phi_t0"}})
			for (auto const &c : coordinates_of(*e))
				if (c != "x1")
					throw ConfigError(init.pointer() + "/" + key, "initial data may depend on x only, found " + c);
		cfg.initial = {phi0, phit};
	}
	if (top.has("forms"))
		detail::parse_forms(cfg, top.at("forms"));
	return cfg;
}

inline RunConfig load_config(std::string const &path)
{
	std::ifstream in(path);
	if (!in)
		throw ConfigError("", "cannot open " + path);
	Json root;
	try
	{
		root = Json::parse(in);
	}
	catch (nlohmann::json::parse_error const &e)
	{
		throw ConfigError("", std::string("malformed JSON: ") + e.what());
	}
	return parse_config(std::move(root));
}

/// Hamiltonian form and field for a catalog entry.
inline HamiltonianPair build_pair(FormEntry const &fe, ModelSpec const &spec, HamiltonianModel const &m)
{
	int n = spec.n;
	try
	{
		if (fe.kind == "shift_smear")
			return pair_from_data(shift_smear_data(fe.epsilon, spec), m);
		if (fe.kind == "field_shift")
			return pair_from_data(field_shift_data(n), m);
		if (fe.kind == "energy")
			return pair_from_data(energy_data(n), m);
		DiffForm f(m.chart, n - 1);
		for (auto const &[key, coef] : fe.components)
			f += coef * parse_form_key(m.chart, key);
		return HamiltonianPair::solve(std::move(f), m.omega_H);
	}
	catch (HamiltonianError const &e)
	{
		throw ConfigError(fe.pointer, e.what());
	}
}

/// Classification data for the catalog kinds that have it.
inline std::optional<VFClassData> class_data(FormEntry const &fe, ModelSpec const &spec)
{
	if (fe.kind == "shift_smear")
		return shift_smear_data(fe.epsilon, spec);
	if (fe.kind == "field_shift")
		return field_shift_data(spec.n);
	if (fe.kind == "energy")
		return energy_data(spec.n);
	return std::nullopt;
}

/// {"base": [...], "fiber": [...], "minus": [...]}; missing arrays are zero.
inline VFClassData parse_class_data(Node const &e, RunConfig const &cfg)
{
	VFClassData d = VFClassData::zero(cfg.n, 1);
	ParseContext ctx = cfg.context();
	auto fill = [&](char const *key, std::vector<ScalarExpr> &out) {
		if (!e.has(key))
			return;
		Node arr = e.at(key);
		arr.size(out.size());
		for (std::size_t i = 0; i < out.size(); ++i)
			out[i] = arr.at(i).expr(ctx);
	};
	fill("base", d.base);
	fill("fiber", d.fiber);
	fill("minus", d.minus);
	try
	{
		detail::validate_class_data(d, ChartSpec::ordinary(cfg.n, 1));
	}
	catch (std::exception const &ex)
	{
		throw ConfigError(e.pointer(), ex.what());
	}
	return d;
}

} // namespace covphase
