#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "angrymtl/params.hpp"

namespace angrymtl {

// Adam with two learning-rate groups: tensors named "shared.*" use lr_shared,
// everything else lr_other. Frozen tensors are skipped entirely.
class Adam {
 public:
  Adam(double lr_shared, double lr_other, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // One update over every trainable tensor in the store. Gradients are left
  // untouched; callers zero them between steps.
  void step(ParamStore& params);

  double lr_for(const std::string& name) const;
  int64_t step_count() const { return t_; }

 private:
  struct Moments {
    Mat m;
    Mat v;
  };

  double lr_shared_;
  double lr_other_;
  double beta1_;
  double beta2_;
  double eps_;
  int64_t t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

}  // namespace angrymtl
