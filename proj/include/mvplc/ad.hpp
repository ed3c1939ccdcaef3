#ifndef MVPLC_AD_HPP
#define MVPLC_AD_HPP

// Minimal reverse-mode automatic differentiation.
//
// Every arithmetic operation on a Var appends one statement to the calling
// thread's tape: the result slot plus (operand, partial) pairs. A reverse
// sweep accumulates adjoints. Tapes are thread_local so concurrent chains never
// share state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mvplc::ad {

class Tape {
 public:
  std::uint32_t new_var(double v) {
    value_.push_back(v);
    adjoint_.push_back(0.0);
    return static_cast<std::uint32_t>(value_.size() - 1);
  }

  std::uint32_t push(double v, std::uint32_t a, double da) {
    const std::uint32_t out = new_var(v);
    stmts_.push_back({out, static_cast<std::uint32_t>(operand_.size())});
    operand_.push_back(a);
    partial_.push_back(da);
    return out;
  }

  std::uint32_t push(double v, std::uint32_t a, double da, std::uint32_t b, double db) {
    const std::uint32_t out = new_var(v);
    stmts_.push_back({out, static_cast<std::uint32_t>(operand_.size())});
    operand_.push_back(a);
    partial_.push_back(da);
    operand_.push_back(b);
    partial_.push_back(db);
    return out;
  }

  std::uint32_t push(double v, std::span<const std::uint32_t> ids, std::span<const double> partials) {
    const std::uint32_t out = new_var(v);
    stmts_.push_back({out, static_cast<std::uint32_t>(operand_.size())});
    operand_.insert(operand_.end(), ids.begin(), ids.end());
    partial_.insert(partial_.end(), partials.begin(), partials.end());
    return out;
  }

  double value(std::uint32_t id) const { return value_[id]; }
  double adjoint(std::uint32_t id) const { return adjoint_[id]; }

  // Seeds d(root)/d(root) = 1 and propagates to every slot.
  void backward(std::uint32_t root) {
    std::fill(adjoint_.begin(), adjoint_.end(), 0.0);
    adjoint_[root] = 1.0;
    const std::size_t n = stmts_.size();
    for (std::size_t i = n; i-- > 0;) {
      const double a = adjoint_[stmts_[i].out];
      if (a == 0.0) continue;
      const std::size_t end = i + 1 < n ? stmts_[i + 1].begin : operand_.size();
      for (std::size_t j = stmts_[i].begin; j < end; ++j) adjoint_[operand_[j]] += partial_[j] * a;
    }
  }

  void clear() {
    value_.clear();
    adjoint_.clear();
    stmts_.clear();
    operand_.clear();
    partial_.clear();
  }

  std::size_t size() const { return value_.size(); }

 private:
  struct Stmt {
    std::uint32_t out;
    std::uint32_t begin;
  };
  std::vector<double> value_;
  std::vector<double> adjoint_;
  std::vector<Stmt> stmts_;
  std::vector<std::uint32_t> operand_;
  std::vector<double> partial_;
};

inline Tape& tape() {
  thread_local Tape t;
  return t;
}

class Var {
 public:
  Var() : id_(tape().new_var(0.0)) {}
  Var(double v) : id_(tape().new_var(v)) {}  // NOLINT: implicit by intent, constants lift to independents
  static Var from_id(std::uint32_t id) {
    Var v(Tag{});
    v.id_ = id;
    return v;
  }

  double val() const { return tape().value(id_); }
  double adj() const { return tape().adjoint(id_); }
  std::uint32_t id() const { return id_; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);
  Var& operator+=(double o);
  Var& operator-=(double o);
  Var& operator*=(double o);
  Var& operator/=(double o);

 private:
  struct Tag {};
  explicit Var(Tag) : id_(0) {}
  std::uint32_t id_;
};

// Node with caller-supplied partials; used for hand-differentiated kernels.
inline Var precomputed(double value, std::span<const Var> inputs, std::span<const double> partials) {
  thread_local std::vector<std::uint32_t> ids;
  ids.clear();
  for (const auto& v : inputs) ids.push_back(v.id());
  return Var::from_id(tape().push(value, ids, partials));
}

inline Var operator+(const Var& a, const Var& b) {
  return Var::from_id(tape().push(a.val() + b.val(), a.id(), 1.0, b.id(), 1.0));
}
inline Var operator+(const Var& a, double b) { return Var::from_id(tape().push(a.val() + b, a.id(), 1.0)); }
inline Var operator+(double a, const Var& b) { return b + a; }
inline Var operator-(const Var& a, const Var& b) {
  return Var::from_id(tape().push(a.val() - b.val(), a.id(), 1.0, b.id(), -1.0));
}
inline Var operator-(const Var& a, double b) { return Var::from_id(tape().push(a.val() - b, a.id(), 1.0)); }
inline Var operator-(double a, const Var& b) { return Var::from_id(tape().push(a - b.val(), b.id(), -1.0)); }
inline Var operator-(const Var& a) { return Var::from_id(tape().push(-a.val(), a.id(), -1.0)); }
inline Var operator*(const Var& a, const Var& b) {
  return Var::from_id(tape().push(a.val() * b.val(), a.id(), b.val(), b.id(), a.val()));
}
inline Var operator*(const Var& a, double b) { return Var::from_id(tape().push(a.val() * b, a.id(), b)); }
inline Var operator*(double a, const Var& b) { return b * a; }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.val() / b.val();
  return Var::from_id(tape().push(q, a.id(), 1.0 / b.val(), b.id(), -q / b.val()));
}
inline Var operator/(const Var& a, double b) { return Var::from_id(tape().push(a.val() / b, a.id(), 1.0 / b)); }
inline Var operator/(double a, const Var& b) {
  const double q = a / b.val();
  return Var::from_id(tape().push(q, b.id(), -q / b.val()));
}

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }
inline Var& Var::operator+=(double o) { return *this = *this + o; }
inline Var& Var::operator-=(double o) { return *this = *this - o; }
inline Var& Var::operator*=(double o) { return *this = *this * o; }
inline Var& Var::operator/=(double o) { return *this = *this / o; }

inline bool operator<(const Var& a, const Var& b) { return a.val() < b.val(); }
inline bool operator<(const Var& a, double b) { return a.val() < b; }
inline bool operator<(double a, const Var& b) { return a < b.val(); }
inline bool operator>(const Var& a, const Var& b) { return a.val() > b.val(); }
inline bool operator>(const Var& a, double b) { return a.val() > b; }
inline bool operator>(double a, const Var& b) { return a > b.val(); }
inline bool operator<=(const Var& a, double b) { return a.val() <= b; }
inline bool operator>=(const Var& a, double b) { return a.val() >= b; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.val());
  return Var::from_id(tape().push(e, a.id(), e));
}
inline Var log(const Var& a) { return Var::from_id(tape().push(std::log(a.val()), a.id(), 1.0 / a.val())); }
inline Var log1p(const Var& a) {
  return Var::from_id(tape().push(std::log1p(a.val()), a.id(), 1.0 / (1.0 + a.val())));
}
inline Var expm1(const Var& a) {
  return Var::from_id(tape().push(std::expm1(a.val()), a.id(), std::exp(a.val())));
}
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.val());
  return Var::from_id(tape().push(s, a.id(), 0.5 / s));
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.val());
  return Var::from_id(tape().push(t, a.id(), 1.0 - t * t));
}
inline Var square(const Var& a) { return Var::from_id(tape().push(a.val() * a.val(), a.id(), 2.0 * a.val())); }
Var lgamma(const Var& a);
Var inv_logit(const Var& a);
Var log_inv_logit(const Var& a);
Var log_sum_exp(const Var& a, const Var& b);

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.val(); }

}  // namespace mvplc::ad

namespace mvplc {
using ad::value_of;
inline double square(double x) { return x * x; }
}  // namespace mvplc

#endif  // MVPLC_AD_HPP
