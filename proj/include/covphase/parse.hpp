#pragma once

// Recursive-descent parser for the expression grammar:
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' unsigned-int)?
//   base   := number | ident | '(' expr ')' | func '(' expr ')'
//
// Two small extensions: a leading unary minus on a term ("-x0", "2*-q") and
// decimal literals ("0.25"), which are read as exact rationals.

#include "covphase/symexpr.hpp"

#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace covphase {

class ParseError : public std::runtime_error
{
  public:
	ParseError(std::string const &msg, std::size_t offset)
	    : std::runtime_error(msg + " at offset " + std::to_string(offset)),
	      offset_(offset)
	{}
	std::size_t offset() const { return offset_; }

  private:
	std::size_t offset_;
};

/// Name bindings visible to the parser besides chart coordinates.
struct ParseContext
{
	std::optional<ChartSpec> chart;
	std::map<std::string, ScalarExpr> symbols; // constants, parameters, opaque

	ParseContext() = default;
	explicit ParseContext(ChartSpec c) : chart(std::move(c)) {}

	ParseContext &bind(std::string const &name, ScalarExpr value)
	{
		symbols.insert_or_assign(name, std::move(value));
		return *this;
	}
	ParseContext &bind_parameter(std::string const &name, double value)
	{
		return bind(name, ScalarExpr::parameter(name, value));
	}
};

namespace detail {

class Parser
{
  public:
	Parser(std::string_view text, ParseContext const &ctx) : s_(text), ctx_(ctx)
	{}

	ScalarExpr run()
	{
		skip();
		if (pos_ == s_.size())
			throw ParseError("empty expression", pos_);
		ScalarExpr e = expr();
		skip();
		if (pos_ != s_.size())
			throw ParseError(std::string("unexpected '") + s_[pos_] + "'", pos_);
		return e;
	}

  private:
	std::string_view s_;
	ParseContext const &ctx_;
	std::size_t pos_ = 0;

	void skip()
	{
		while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
			++pos_;
	}
	bool accept(char c)
	{
		skip();
		if (pos_ < s_.size() && s_[pos_] == c)
		{
			++pos_;
			return true;
		}
		return false;
	}
	void expect(char c)
	{
		if (!accept(c))
			throw ParseError(std::string("expected '") + c + "'", pos_);
	}

	ScalarExpr expr()
	{
		ScalarExpr acc = term();
		for (;;)
		{
			if (accept('+'))
				acc = acc + term();
			else if (accept('-'))
				acc = acc - term();
			else
				return acc;
		}
	}

	ScalarExpr term()
	{
		ScalarExpr acc = factor();
		for (;;)
		{
			skip();
			std::size_t at = pos_;
			if (accept('*'))
				acc = acc * factor();
			else if (accept('/'))
			{
				ScalarExpr rhs = factor();
				if (rhs.is_zero_form())
					throw ParseError("division by zero", at);
				acc = acc / rhs;
			}
			else
				return acc;
		}
	}

	ScalarExpr factor()
	{
		if (accept('-'))
			return -factor();
		ScalarExpr b = base();
		if (accept('^'))
		{
			skip();
			std::size_t start = pos_;
			while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
				++pos_;
			if (start == pos_)
				throw ParseError("expected unsigned integer exponent", pos_);
			int e = std::stoi(std::string(s_.substr(start, pos_ - start)));
			return pow(b, e);
		}
		return b;
	}

	ScalarExpr number()
	{
		std::size_t start = pos_;
		std::int64_t whole = 0, frac = 0, scale = 1;
		while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
		{
			if (whole > (INT64_MAX - 9) / 10)
				throw ParseError("numeric literal too large", start);
			whole = whole * 10 + (s_[pos_++] - '0');
		}
		if (pos_ < s_.size() && s_[pos_] == '.')
		{
			++pos_;
			std::size_t fstart = pos_;
			while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
			{
				if (scale > INT64_MAX / 100)
					throw ParseError("numeric literal too long", start);
				frac = frac * 10 + (s_[pos_++] - '0');
				scale *= 10;
			}
			if (fstart == pos_)
				throw ParseError("expected digits after '.'", pos_);
		}
		return ScalarExpr(Rational(whole) + Rational(frac, scale));
	}

	ScalarExpr base()
	{
		skip();
		if (pos_ == s_.size())
			throw ParseError("unexpected end of input", pos_);
		char c = s_[pos_];
		if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
			return number();
		if (c == '(')
		{
			++pos_;
			ScalarExpr e = expr();
			expect(')');
			return e;
		}
		if (std::isalpha(static_cast<unsigned char>(c)))
		{
			std::size_t start = pos_;
			while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_])))
				++pos_;
			std::string id(s_.substr(start, pos_ - start));
			if (id == "sin" || id == "cos" || id == "exp")
			{
				expect('(');
				ScalarExpr arg = expr();
				expect(')');
				if (id == "sin")
					return sin(arg);
				if (id == "cos")
					return cos(arg);
				return exp(arg);
			}
			return identifier(id, start);
		}
		throw ParseError(std::string("unexpected '") + c + "'", pos_);
	}

	ScalarExpr identifier(std::string const &id, std::size_t at)
	{
		if (auto it = ctx_.symbols.find(id); it != ctx_.symbols.end())
			return it->second;
		if (!ctx_.chart)
			return ScalarExpr::coordinate(id);
		ChartSpec const &chart = *ctx_.chart;
		if (chart.contains(id))
			return ScalarExpr::coordinate(id);
		// single-field shorthand
		if (chart.N() == 1 && id == "q")
			return ScalarExpr::coordinate("q1");
		throw ParseError("unknown identifier '" + id + "'", at);
	}
};

} // namespace detail

/// Parses `text`. Identifiers resolve first against `ctx.symbols`, then
/// against the chart; without a chart every free identifier is taken as a
/// coordinate name.
inline ScalarExpr parse(std::string_view text, ParseContext const &ctx = {})
{
	return detail::Parser(text, ctx).run();
}

inline ScalarExpr parse(std::string_view text, ChartSpec const &chart)
{
	return parse(text, ParseContext(chart));
}

} // namespace covphase
