#include "ghyena/gradcheck.hpp"

#include <cmath>

namespace ghyena {

double finite_diff_check(const LossFn& f, ParamStore& params, double eps) {
  if (eps <= 0) fail_invalid("finite_diff_check: eps > 0 required");

  auto eval = [&]() {
    Lease lease(nullptr);
    double v = f(lease).scalar_value();
    if (!std::isfinite(v)) fail_numeric("finite_diff_check: non-finite loss");
    return v;
  };

  params.zero_grads();
  {
    Tape tape;
    Lease lease(&tape);
    Value loss = f(lease);
    if (!std::isfinite(loss.scalar_value())) fail_numeric("finite_diff_check: non-finite loss");
    if (loss.recorded()) {
      tape.backward(loss);
      lease.accumulate_grads(params);
    }
    // a loss that never touched the tape has zero gradient everywhere
  }

  // Per parameter: || analytic - fd ||_2 / (|| fd ||_2 + 1e-12). The norm is
  // taken over the parameter tensor so individual near-zero partials do not
  // turn central-difference roundoff into spurious relative error.
  double max_err = 0;
  for (auto& entry : params.entries()) {
    Tensor& theta = *entry.value;
    const Tensor& analytic = entry.grad;
    double num = 0, den = 0;
    for (int64_t i = 0; i < theta.numel(); ++i) {
      double saved = theta.at(i);
      theta.set(i, saved + eps);
      double plus = eval();
      theta.set(i, saved - eps);
      double minus = eval();
      theta.set(i, saved);
      double fd = (plus - minus) / (2.0 * eps);
      double ga = analytic.numel() > 0 ? analytic.at(i) : 0.0;
      num += (ga - fd) * (ga - fd);
      den += fd * fd;
    }
    double err = std::sqrt(num) / (std::sqrt(den) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace ghyena
