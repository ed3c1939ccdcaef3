#include "mvplc/ad.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include "mvplc/math.hpp"

namespace mvplc::ad {

Var lgamma(const Var& a) {
  return Var::from_id(tape().push(std::lgamma(a.val()), a.id(), boost::math::digamma(a.val())));
}

Var inv_logit(const Var& a) {
  const double p = mvplc::inv_logit(a.val());
  return Var::from_id(tape().push(p, a.id(), p * (1.0 - p)));
}

Var log_inv_logit(const Var& a) {
  // d/dx log(inv_logit(x)) = 1 - inv_logit(x)
  return Var::from_id(tape().push(mvplc::log_inv_logit(a.val()), a.id(), mvplc::inv_logit(-a.val())));
}

Var log_sum_exp(const Var& a, const Var& b) {
  const double v = mvplc::log_sum_exp(a.val(), b.val());
  return Var::from_id(tape().push(v, a.id(), std::exp(a.val() - v), b.id(), std::exp(b.val() - v)));
}

}  // namespace mvplc::ad
