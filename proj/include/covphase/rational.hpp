#pragma once

#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace covphase {

/// Exact rational number over 64-bit integers.
///
/// Always stored reduced with a positive denominator. Every arithmetic
/// operation is checked; an intermediate that does not fit in 64 bits
/// raises std::overflow_error rather than wrapping.
class Rational
{
  public:
	constexpr Rational() = default;
	constexpr Rational(std::int64_t n) : num_(n) {}
	Rational(std::int64_t n, std::int64_t d) { assign(n, d); }

	std::int64_t num() const { return num_; }
	std::int64_t den() const { return den_; }

	bool is_zero() const { return num_ == 0; }
	bool is_one() const { return num_ == 1 && den_ == 1; }
	bool is_integer() const { return den_ == 1; }
	int sign() const { return (num_ > 0) - (num_ < 0); }

	double to_double() const
	{
		return static_cast<double>(num_) / static_cast<double>(den_);
	}

	std::string to_string() const
	{
		if (den_ == 1)
			return std::to_string(num_);
		return std::to_string(num_) + "/" + std::to_string(den_);
	}

	Rational operator-() const
	{
		if (num_ == INT64_MIN)
			throw std::overflow_error("rational overflow");
		Rational r;
		r.num_ = -num_;
		r.den_ = den_;
		return r;
	}

	friend Rational operator+(Rational const &a, Rational const &b)
	{
		if (a.den_ == b.den_)
			return make(static_cast<__int128>(a.num_) + b.num_, a.den_);
		__int128 n = static_cast<__int128>(a.num_) * b.den_ +
		             static_cast<__int128>(b.num_) * a.den_;
		__int128 d = static_cast<__int128>(a.den_) * b.den_;
		return make(n, d);
	}
	friend Rational operator-(Rational const &a, Rational const &b)
	{
		return a + (-b);
	}
	friend Rational operator*(Rational const &a, Rational const &b)
	{
		return make(static_cast<__int128>(a.num_) * b.num_,
		            static_cast<__int128>(a.den_) * b.den_);
	}
	friend Rational operator/(Rational const &a, Rational const &b)
	{
		if (b.num_ == 0)
			throw std::domain_error("rational division by zero");
		__int128 n = static_cast<__int128>(a.num_) * b.den_;
		__int128 d = static_cast<__int128>(a.den_) * b.num_;
		if (d < 0)
		{
			n = -n;
			d = -d;
		}
		return make(n, d);
	}
	Rational &operator+=(Rational const &b) { return *this = *this + b; }
	Rational &operator-=(Rational const &b) { return *this = *this - b; }
	Rational &operator*=(Rational const &b) { return *this = *this * b; }
	Rational &operator/=(Rational const &b) { return *this = *this / b; }

	friend bool operator==(Rational const &a, Rational const &b)
	{
		return a.num_ == b.num_ && a.den_ == b.den_;
	}
	friend bool operator<(Rational const &a, Rational const &b)
	{
		return static_cast<__int128>(a.num_) * b.den_ <
		       static_cast<__int128>(b.num_) * a.den_;
	}

	friend std::ostream &operator<<(std::ostream &os, Rational const &r)
	{
		return os << r.to_string();
	}

	Rational pow(int e) const
	{
		if (e < 0)
			return Rational(1) / pow(-e);
		Rational result(1), base = *this;
		while (e)
		{
			if (e & 1)
				result *= base;
			e >>= 1;
			if (e)
				base *= base;
		}
		return result;
	}

  private:
	std::int64_t num_ = 0;
	std::int64_t den_ = 1;

	static __int128 gcd128(__int128 a, __int128 b)
	{
		if (a < 0)
			a = -a;
		if (b < 0)
			b = -b;
		while (b != 0)
		{
			__int128 t = a % b;
			a = b;
			b = t;
		}
		return a;
	}

	// d > 0 on entry
	static Rational make(__int128 n, __int128 d)
	{
		if (n == 0)
			return Rational();
		__int128 g = gcd128(n, d);
		n /= g;
		d /= g;
		if (n > INT64_MAX || n < -INT64_MAX || d > INT64_MAX)
			throw std::overflow_error("rational overflow");
		Rational r;
		r.num_ = static_cast<std::int64_t>(n);
		r.den_ = static_cast<std::int64_t>(d);
		return r;
	}

	void assign(std::int64_t n, std::int64_t d)
	{
		if (d == 0)
			throw std::domain_error("rational with zero denominator");
		__int128 nn = n, dd = d;
		if (dd < 0)
		{
			nn = -nn;
			dd = -dd;
		}
		*this = make(nn, dd);
	}
};

} // namespace covphase
