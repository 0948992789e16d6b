#include "angrymtl/optim.hpp"

#include <cmath>

namespace angrymtl {

Adam::Adam(double lr_shared, double lr_other, double beta1, double beta2, double eps)
    : lr_shared_(lr_shared), lr_other_(lr_other), beta1_(beta1), beta2_(beta2), eps_(eps) {}

double Adam::lr_for(const std::string& name) const {
  return name.rfind("shared.", 0) == 0 ? lr_shared_ : lr_other_;
}

void Adam::step(ParamStore& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& tp : params.tensors()) {
    Tensor& t = *tp;
    if (!t.trainable) continue;
    Moments& mo = state_[t.name];
    if (mo.m.size() == 0) {
      mo.m = Mat::Zero(t.value.rows(), t.value.cols());
      mo.v = Mat::Zero(t.value.rows(), t.value.cols());
    }
    mo.m = beta1_ * mo.m + (1.0 - beta1_) * t.grad;
    mo.v = beta2_ * mo.v + (1.0 - beta2_) * t.grad.cwiseProduct(t.grad);
    const double lr = lr_for(t.name);
    Mat mhat = mo.m / bc1;
    Mat vhat = mo.v / bc2;
    t.value -= lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(), eps_));
  }
}

}  // namespace angrymtl
