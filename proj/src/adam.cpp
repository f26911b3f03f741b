#include <cmath>
#include <sstream>

#include "ucds/errors.hpp"
#include "ucds/models.hpp"

namespace ucds {

AdamState AdamState::for_params(const ParamSet& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads,
               double lr) {
  if (state.m.size() != params.size() || grads.size() != params.size())
    throw std::invalid_argument("adam_step: parameter sets differ in size");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].values.size() != params[p].values.size() ||
        state.m[p].values.size() != params[p].values.size())
      throw std::invalid_argument("adam_step: shape mismatch in " +
                                  params[p].name);
    const auto& g = grads[p].values;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        std::ostringstream msg;
        msg << "non-finite gradient " << g[k] << " in " << grads[p].name
            << "[" << k << "] at step " << state.t + 1;
        throw NumericError(msg.str());
      }
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(AdamState::beta1, t);
  const double c2 = 1.0 - std::pow(AdamState::beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& x = params[p].values;
    auto& m = state.m[p].values;
    auto& v = state.v[p].values;
    const auto& g = grads[p].values;
    for (std::size_t k = 0; k < x.size(); ++k) {
      m[k] = AdamState::beta1 * m[k] + (1.0 - AdamState::beta1) * g[k];
      v[k] = AdamState::beta2 * v[k] + (1.0 - AdamState::beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      x[k] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::epsilon);
    }
  }
}

}  // namespace ucds
