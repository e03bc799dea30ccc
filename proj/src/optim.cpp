#include "rapi/optim.hpp"

#include <cmath>

namespace rapi {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "adam") return OptimizerKind::Adam;
  throw Error("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void Optimizer::step(std::vector<Matrix*> params, const std::vector<Matrix>& grads,
                     const std::vector<bool>& frozen) {
  if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient count mismatch");
  auto is_frozen = [&](std::size_t i) { return !frozen.empty() && frozen[i]; };
  if (kind_ == OptimizerKind::SGD) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!is_frozen(i)) *params[i] -= lr_ * grads[i];
    }
    return;
  }
  if (m_.empty()) {
    for (const auto& g : grads) {
      m_.push_back(Matrix::Zero(g.rows(), g.cols()));
      v_.push_back(Matrix::Zero(g.rows(), g.cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (is_frozen(i)) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

}  // namespace rapi
