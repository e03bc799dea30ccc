#pragma once

#include <string>
#include <vector>

#include "rapi/common.hpp"

namespace rapi {

struct ParamGroup {
  std::string name;
  Matrix value;
};

enum class OptimizerKind { SGD, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

// First-order optimizer over a fixed list of parameter matrices.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8)
      : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update; `frozen[i]` skips group i when given.
  void step(std::vector<Matrix*> params, const std::vector<Matrix>& grads,
            const std::vector<bool>& frozen = {});

  double learning_rate() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace rapi
