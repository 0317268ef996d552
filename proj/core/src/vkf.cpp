#include "dvu/vkf.hpp"

#include <cmath>

namespace dvu::vkf {

LinearDynParams LinearDynParams::make(const Eigen::Vector4d& phi_slot_diag) {
  LinearDynParams p;
  p.A = Mat8::Identity();
  p.A.block<4, 4>(0, 4) = Eigen::Matrix4d::Identity();
  p.lambda_diag << phi_slot_diag, phi_slot_diag;
  return p;
}

srnn::GaussianDiag vkf_predict(const LinearDynParams& p, const LinearState& st) {
  const Vec8 mean = p.A * st.mean;
  const Mat8 cov = p.A * st.cov_diag.asDiagonal() * p.A.transpose() +
                   Mat8(p.lambda_diag.asDiagonal());
  srnn::GaussianDiag g;
  g.mean = mean.head<4>();
  for (int d = 0; d < 4; ++d) g.logvar[d] = std::log(cov(d, d));
  return g;
}

tracker::TrackResult vkf_track(const tracker::SceneData& scene, tracker::TrackerConfig cfg) {
  cfg.dynamics = tracker::Dynamics::kLinear;
  return tracker::track(scene, nullptr, cfg);
}

}  // namespace dvu::vkf
