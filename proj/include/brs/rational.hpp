#ifndef BRS_RATIONAL_HPP
#define BRS_RATIONAL_HPP

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace brs {

/// Exact rational number with 64-bit numerator/denominator, always kept in
/// lowest terms with a positive denominator. Used by the polynomial algebra
/// tests where round-off would mask real bugs; solver-facing code uses double.
class Rational {
 public:
  Rational() : num_(0), den_(1) {}
  Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { normalize(); }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return Rational(checked(__int128(a.num_) * b.den_ + __int128(b.num_) * a.den_),
                    checked(__int128(a.den_) * b.den_));
  }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return Rational(checked(__int128(a.num_) * b.num_), checked(__int128(a.den_) * b.den_));
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw std::domain_error("Rational: division by zero");
    return Rational(checked(__int128(a.num_) * b.den_), checked(__int128(a.den_) * b.num_));
  }
  Rational operator-() const {
    Rational r;
    r.num_ = -num_;
    r.den_ = den_;
    return r;
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

  bool is_zero() const { return num_ == 0; }

  std::string to_string() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  static std::int64_t checked(__int128 v) {
    if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error("Rational: 64-bit overflow");
    return static_cast<std::int64_t>(v);
  }
  void normalize() {
    if (den_ == 0) throw std::domain_error("Rational: zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }
  std::int64_t num_, den_;
};

inline bool coeff_is_zero(double c) { return c == 0.0; }
inline bool coeff_is_zero(const Rational& c) { return c.is_zero(); }

}  // namespace brs

#endif  // BRS_RATIONAL_HPP
