#include "metaadr/maml.hpp"

namespace metaadr {

void MetaHyper::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidInput("step sizes must be non-negative");
  if (meta_batch_size < 1 || inner_episodes < 1 || outer_episodes < 1 || epochs < 1)
    throw InvalidInput("meta_batch_size, episode counts and epochs must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in (0, 1)");
}

ParamVector adapt_step(const ParamVector& theta, const ParamVector& gradient, double alpha) {
  ParamVector out = axpy_params(-alpha, gradient, theta);
  if (!out.all_finite()) throw DivergedRun("non-finite adapted parameters");
  return out;
}

}  // namespace metaadr
