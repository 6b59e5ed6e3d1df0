#pragma once

namespace hqm {

/// Term and branch weights shared by the matching cost and the losses.
struct LossWeights {
  double lambda_b = 2.5;  // box L1
  double lambda_u = 1.0;  // GIoU
  double lambda_c = 1.0;  // object cross-entropy
  double lambda_a = 1.0;  // verb focal
  double alpha = 1.0;     // learnable-query branch
  double beta = 1.0;      // hard-positive branch
  double no_object_weight = 0.1;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  void validate() const;
};

}  // namespace hqm
