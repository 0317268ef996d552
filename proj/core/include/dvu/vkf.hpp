#pragma once

#include <Eigen/Core>

#include "dvu/srnn.hpp"
#include "dvu/tracker.hpp"

namespace dvu::vkf {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;

// Constant-velocity linear dynamics on the 8-dim state [box, velocity]:
// position += velocity, velocity unchanged. Process noise is diagonal and
// stays fixed; its box and velocity blocks are initialized from the same
// values as the observation covariance.
struct LinearDynParams {
  Mat8 A;
  Vec8 lambda_diag;

  static LinearDynParams make(const Eigen::Vector4d& phi_slot_diag);
};

struct LinearState {
  Vec8 mean = Vec8::Zero();      // [box, velocity]
  Vec8 cov_diag = Vec8::Zero();  // diagonal covariance
};

// One-step prediction projected onto the box coordinates:
// mean = (A x)[0:4], var = diag(A Sigma A^T + Lambda)[0:4].
srnn::GaussianDiag vkf_predict(const LinearDynParams& p, const LinearState& st);

// The tracker loop with the DVAE prediction replaced by the linear one.
// Same E-W assignment, fusion, cascade initialization and outputs.
tracker::TrackResult vkf_track(const tracker::SceneData& scene, tracker::TrackerConfig cfg);

}  // namespace dvu::vkf
