#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Cholesky>

#include "dvu/autodiff.hpp"
#include "dvu/dataio.hpp"
#include "dvu/error.hpp"
#include "dvu/rng.hpp"
#include "dvu/tracker.hpp"

using dvu::BBox;
using dvu::Rng;
namespace tracker = dvu::tracker;
namespace srnn = dvu::srnn;
using Eigen::Vector4d;

namespace {

tracker::SceneData static_scene(int T, const std::vector<BBox>& boxes) {
  tracker::SceneData scene;
  scene.T = T;
  scene.detections.assign(T, boxes);
  return scene;
}

BBox box_at(double cx, double cy, double w, double h) {
  return BBox{cx - w / 2, cy + h / 2, cx + w / 2, cy - h / 2};
}

// Direct (non-log) evaluation of the assignment weights.
double beta_direct(const Vector4d& o, const Vector4d& m, const Vector4d& v,
                   const Vector4d& phi) {
  double dens = 1.0, trace = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double diff = o[d] - m[d];
    dens *= std::exp(-0.5 * diff * diff / phi[d]) / std::sqrt(2.0 * M_PI * phi[d]);
    trace += v[d] / phi[d];
  }
  return dens * std::exp(-0.5 * trace);
}

}  // namespace

TEST_CASE("config validation") {
  tracker::TrackerConfig cfg;
  cfg.r_phi = 0.0;
  CHECK_THROWS_AS(cfg.validate(), dvu::ConfigError);
  cfg = tracker::TrackerConfig{};
  cfg.r_phi = 1.0;
  CHECK_THROWS_AS(cfg.validate(), dvu::ConfigError);
  cfg = tracker::TrackerConfig{};
  cfg.init_window = 1;
  CHECK_THROWS_AS(cfg.validate(), dvu::ConfigError);
  CHECK_NOTHROW(tracker::TrackerConfig{}.validate());
}

TEST_CASE("fixed_phi arithmetic from frame-1 sizes") {
  // Width 10, height 20 at frame 1, r = 0.04.
  const tracker::SceneData scene = static_scene(5, {BBox{0, 20, 10, 0}});
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.04);
  const Vector4d expect(0.16, 0.64, 0.16, 0.64);
  for (int t = 0; t < 5; ++t) {
    REQUIRE(phi.diag[t].size() == 1);
    for (int d = 0; d < 4; ++d) {
      CHECK(phi.diag[t][0][d] == doctest::Approx(expect[d]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(tracker::fixed_phi(scene, 0.0), dvu::ConfigError);
}

TEST_CASE("fixed_phi extra slots use their own frame size") {
  tracker::SceneData scene = static_scene(3, {BBox{0, 1, 1, 0}});
  scene.detections[1].push_back(BBox{0, 2, 2, 0});  // K_2 = 2 > K_1
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.1);
  CHECK(phi.diag[1][1][0] == doctest::Approx(0.01 * 4.0).epsilon(1e-12));
}

TEST_CASE("log_beta trivial value") {
  // V = 0, Phi = I, o = m: beta = (2*pi)^-2.
  const double lb = tracker::log_beta(Vector4d::Zero(), Vector4d::Zero(), Vector4d::Zero(),
                                      Vector4d::Ones());
  CHECK(std::exp(lb) == doctest::Approx(std::pow(2.0 * M_PI, -2.0)).epsilon(1e-12));
}

TEST_CASE("e_w_step: single object gets probability one") {
  const tracker::SceneData scene = static_scene(4, {box_at(0.5, 0.5, 0.1, 0.2)});
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.04);
  tracker::TrackState st = tracker::TrackState::allocate(4, 1, false);
  for (int t = 0; t < 4; ++t) {
    st.m[t][0] = Vector4d(0.4, 0.6, 0.6, 0.4);
    st.V[t][0] = phi.diag[0][0];
  }
  const tracker::AssignmentPosterior eta = tracker::e_w_step(scene, st, phi);
  for (int t = 0; t < 4; ++t) CHECK(eta.eta[t](0, 0) == 1.0);
}

TEST_CASE("e_w_step: identical objects split evenly") {
  const tracker::SceneData scene =
      static_scene(2, {box_at(0.5, 0.5, 0.1, 0.2), box_at(0.7, 0.5, 0.1, 0.2)});
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.04);
  tracker::TrackState st = tracker::TrackState::allocate(2, 2, false);
  for (int t = 0; t < 2; ++t) {
    for (int n = 0; n < 2; ++n) {
      st.m[t][n] = Vector4d(0.5, 0.5, 0.6, 0.4);
      st.V[t][n] = phi.diag[0][0];
    }
  }
  const tracker::AssignmentPosterior eta = tracker::e_w_step(scene, st, phi);
  for (int t = 0; t < 2; ++t) {
    for (int k = 0; k < 2; ++k) {
      CHECK(eta.eta[t](k, 0) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(eta.eta[t](k, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }
  }
}

TEST_CASE("e_w rows sum to one and match the direct-domain oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int N = 2 + static_cast<int>(rng.uniform_index(3));
    const int K = 1 + static_cast<int>(rng.uniform_index(4));
    // Keep the case well-conditioned (the direct oracle works in raw
    // densities): everything clusters within a few noise deviations.
    std::vector<BBox> dets;
    for (int k = 0; k < K; ++k) {
      dets.push_back(box_at(rng.uniform(0.48, 0.52), rng.uniform(0.48, 0.52), 0.1, 0.15));
    }
    tracker::SceneData scene = static_scene(1, dets);
    tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.08);
    tracker::TrackState st = tracker::TrackState::allocate(1, N, false);
    for (int n = 0; n < N; ++n) {
      const Vector4d anchor = dets[rng.uniform_index(K)].vec();
      for (int d = 0; d < 4; ++d) {
        st.m[0][n][d] = anchor[d] + rng.uniform(-0.01, 0.01);
        st.V[0][n][d] = rng.uniform(1e-5, 5e-4);
      }
    }
    const tracker::AssignmentPosterior eta = tracker::e_w_step(scene, st, phi);
    for (int k = 0; k < K; ++k) {
      CHECK(std::abs(eta.eta[0].row(k).sum() - 1.0) < 1e-9);
      double denom = 0.0;
      std::vector<double> betas(N);
      for (int n = 0; n < N; ++n) {
        betas[n] = beta_direct(dets[k].vec(), st.m[0][n], st.V[0][n], phi.diag[0][k]);
        denom += betas[n];
      }
      for (int n = 0; n < N; ++n) {
        const double direct = betas[n] / denom;
        CHECK(std::abs(eta.eta[0](k, n) - direct) <= 1e-9 * std::max(1.0, std::abs(direct)));
      }
    }
  }
}

TEST_CASE("e_w scale invariance") {
  Rng rng(5);
  const std::vector<BBox> dets = {box_at(0.4, 0.5, 0.1, 0.2), box_at(0.6, 0.5, 0.12, 0.2)};
  tracker::SceneData scene = static_scene(1, dets);
  tracker::TrackState st = tracker::TrackState::allocate(1, 2, false);
  for (int n = 0; n < 2; ++n) {
    st.m[0][n] = Vector4d(0.4 + 0.2 * n, 0.55, 0.5 + 0.2 * n, 0.45);
    st.V[0][n] = Vector4d(2e-3, 3e-3, 2.5e-3, 1e-3);
  }
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.04);
  const tracker::AssignmentPosterior e1 = tracker::e_w_step(scene, st, phi);

  const double c = 17.0;
  tracker::SceneData scaled = scene;
  for (auto& frame : scaled.detections) {
    for (auto& b : frame) b = BBox{b.l * c, b.t * c, b.r * c, b.b * c};
  }
  tracker::TrackState st2 = st;
  tracker::ObservationNoise phi2 = phi;
  for (int n = 0; n < 2; ++n) {
    st2.m[0][n] *= c;
    st2.V[0][n] *= c * c;
  }
  for (auto& frame : phi2.diag) {
    for (auto& v : frame) v *= c * c;
  }
  const tracker::AssignmentPosterior e2 = tracker::e_w_step(scaled, st2, phi2);
  for (int k = 0; k < 2; ++k) {
    for (int n = 0; n < 2; ++n) {
      CHECK(e1.eta[0](k, n) == doctest::Approx(e2.eta[0](k, n)).epsilon(1e-9));
    }
  }
}

TEST_CASE("fusion with no detections returns the prior") {
  srnn::GaussianDiag prior;
  prior.mean = Vector4d(0.1, 0.2, 0.3, 0.4);
  prior.logvar = Vector4d(-2, -3, -1, -2.5);
  Vector4d m, v;
  tracker::fuse_diag({}, Eigen::VectorXd(), {}, prior, m, v);
  for (int d = 0; d < 4; ++d) {
    CHECK(m[d] == doctest::Approx(prior.mean[d]).epsilon(1e-15));
    CHECK(v[d] == doctest::Approx(prior.var()[d]).epsilon(1e-15));
  }
}

TEST_CASE("fusion scalar worked example") {
  // K=1, eta=1, Phi=0.16 I, v=0.04: V=0.032 I, m = 0.2 o + 0.8 mu.
  srnn::GaussianDiag prior;
  prior.mean = Vector4d(0.1, 0.1, 0.2, 0.2);
  prior.logvar = Vector4d::Constant(std::log(0.04));
  const BBox o{0.5, 0.9, 0.7, 0.5};
  Eigen::VectorXd eta(1);
  eta << 1.0;
  Vector4d m, v;
  tracker::fuse_diag({o}, eta, {Vector4d::Constant(0.16)}, prior, m, v);
  for (int d = 0; d < 4; ++d) {
    CHECK(v[d] == doctest::Approx(0.032).epsilon(1e-12));
    CHECK(m[d] == doctest::Approx(0.2 * o.vec()[d] + 0.8 * prior.mean[d]).epsilon(1e-12));
  }
}

TEST_CASE("fusion matches the product-of-Gaussians oracle on 1000 cases") {
  Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform_index(4));
    std::vector<BBox> dets;
    std::vector<Vector4d> phis;
    Eigen::VectorXd eta(K);
    double esum = 0.0;
    for (int k = 0; k < K; ++k) {
      dets.push_back(box_at(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), 0.1, 0.1));
      phis.emplace_back(rng.uniform(1e-4, 1e-1), rng.uniform(1e-4, 1e-1),
                        rng.uniform(1e-4, 1e-1), rng.uniform(1e-4, 1e-1));
      eta[k] = rng.uniform(0.01, 1.0);
      esum += eta[k];
    }
    eta /= esum;
    srnn::GaussianDiag prior;
    prior.mean = Vector4d(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
    prior.logvar = Vector4d(rng.uniform(-8, 1), rng.uniform(-8, 1), rng.uniform(-8, 1),
                            rng.uniform(-8, 1));
    Vector4d m, v;
    tracker::fuse_diag(dets, eta, phis, prior, m, v);

    // Independent oracle: accumulate precisions the long way around.
    for (int d = 0; d < 4; ++d) {
      long double prec = 1.0L / static_cast<long double>(prior.var()[d]);
      long double lin = static_cast<long double>(prior.mean[d]) / prior.var()[d];
      for (int k = 0; k < K; ++k) {
        prec += static_cast<long double>(eta[k]) / phis[k][d];
        lin += static_cast<long double>(eta[k]) * dets[k].vec()[d] / phis[k][d];
      }
      const double v_oracle = static_cast<double>(1.0L / prec);
      const double m_oracle = static_cast<double>(lin / prec);
      CHECK(std::abs(v[d] - v_oracle) <= 1e-10 * std::abs(v_oracle));
      CHECK(std::abs(m[d] - m_oracle) <= 1e-10 * std::max(1.0, std::abs(m_oracle)));
      // Convex combination: m stays inside the hull of inputs.
      double lo = prior.mean[d], hi = prior.mean[d];
      for (int k = 0; k < K; ++k) {
        lo = std::min(lo, dets[k].vec()[d]);
        hi = std::max(hi, dets[k].vec()[d]);
      }
      CHECK(m[d] >= lo - 1e-12);
      CHECK(m[d] <= hi + 1e-12);
      // V bounded by the prior variance.
      CHECK(v[d] > 0.0);
      CHECK(v[d] <= prior.var()[d] + 1e-15);
    }
  }
}

TEST_CASE("one-hot eta equals the two-Gaussian closed form") {
  srnn::GaussianDiag prior;
  prior.mean = Vector4d(0.3, 0.4, 0.5, 0.6);
  prior.logvar = Vector4d(-3, -4, -3.5, -2);
  const std::vector<BBox> dets = {box_at(0.5, 0.5, 0.2, 0.2), box_at(0.8, 0.8, 0.1, 0.1)};
  const std::vector<Vector4d> phis = {Vector4d(1e-3, 2e-3, 3e-3, 4e-3),
                                      Vector4d(5e-3, 6e-3, 7e-3, 8e-3)};
  Eigen::VectorXd eta(2);
  eta << 1.0, 0.0;
  Vector4d m, v;
  tracker::fuse_diag(dets, eta, phis, prior, m, v);
  for (int d = 0; d < 4; ++d) {
    const double pv = prior.var()[d];
    const double expect_v = 1.0 / (1.0 / phis[0][d] + 1.0 / pv);
    const double expect_m = expect_v * (dets[0].vec()[d] / phis[0][d] + prior.mean[d] / pv);
    CHECK(v[d] == expect_v);
    CHECK(m[d] == expect_m);
  }
}

TEST_CASE("e_s_step: empty frames fall back to the prior") {
  // One object, a frame with no detections in the middle.
  tracker::SceneData scene = static_scene(3, {box_at(0.5, 0.5, 0.1, 0.2)});
  scene.detections[1].clear();
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.04);
  const srnn::SrnnParams params = srnn::SrnnParams::init(3);
  tracker::TrackState prev = tracker::TrackState::allocate(3, 1, false);
  for (int t = 0; t < 3; ++t) {
    prev.m[t][0] = scene.detections[0][0].vec();
    prev.s_sample[t][0] = prev.m[t][0];
    prev.V[t][0] = phi.diag[0][0];
  }
  const tracker::AssignmentPosterior eta = tracker::e_w_step(scene, prev, phi);
  const tracker::TrackState next = tracker::e_s_step(scene, eta, phi, params, prev, 1, 1);
  // Frame 1 (empty): posterior equals the decoder prior, which we can't see
  // directly, but V must exceed the fused frames' V and stay positive.
  for (int d = 0; d < 4; ++d) {
    CHECK(next.V[1][0][d] > next.V[0][0][d]);
    CHECK(next.V[1][0][d] > 0.0);
  }
}

TEST_CASE("m_step_phi trivial cases") {
  tracker::SceneData scene = static_scene(1, {box_at(0.5, 0.5, 0.2, 0.2)});
  tracker::TrackState st = tracker::TrackState::allocate(1, 1, false);
  st.m[0][0] = Vector4d(0.3, 0.7, 0.5, 0.3);
  st.V[0][0] = Vector4d::Zero();
  tracker::AssignmentPosterior eta;
  eta.eta.resize(1);
  eta.eta[0].resize(1, 1);
  eta.eta[0](0, 0) = 1.0;
  const tracker::ObservationNoise phi = tracker::m_step_phi(scene, eta, st);
  const Vector4d diff = scene.detections[0][0].vec() - st.m[0][0];
  const Eigen::Matrix4d expect = diff * diff.transpose();
  CHECK((phi.mat[0][0] - expect).norm() <= 1e-8 * 16 + 1e-12);

  // o = m for all objects: Phi reduces to V.
  st.m[0][0] = scene.detections[0][0].vec();
  st.V[0][0] = Vector4d(1e-3, 2e-3, 3e-3, 4e-3);
  const tracker::ObservationNoise phi2 = tracker::m_step_phi(scene, eta, st);
  CHECK((phi2.mat[0][0] - Eigen::Matrix4d(st.V[0][0].asDiagonal())).norm() < 1e-12);
}

TEST_CASE("m_step recovers a known covariance from simulated noise") {
  // Single object, eta fixed to the truth; average the per-detection updates
  // over 1e4 noisy frame-detections and compare to the generating covariance.
  Rng rng(424242);
  const Vector4d true_sd(0.02, 0.03, 0.025, 0.015);
  const int T = 10000;
  tracker::SceneData scene;
  scene.T = T;
  scene.detections.resize(T);
  tracker::TrackState st = tracker::TrackState::allocate(T, 1, false);
  const Vector4d center(0.4, 0.6, 0.6, 0.4);
  for (int t = 0; t < T; ++t) {
    Vector4d noise;
    for (int d = 0; d < 4; ++d) noise[d] = true_sd[d] * rng.normal();
    const Vector4d o = center + noise;
    scene.detections[t].push_back(BBox::from_vec(o));
    st.m[t][0] = center;
    st.V[t][0] = Vector4d::Zero();
  }
  tracker::AssignmentPosterior eta;
  eta.eta.resize(T);
  for (int t = 0; t < T; ++t) {
    eta.eta[t].resize(1, 1);
    eta.eta[t](0, 0) = 1.0;
  }
  const tracker::ObservationNoise phi = tracker::m_step_phi(scene, eta, st);
  Eigen::Matrix4d avg = Eigen::Matrix4d::Zero();
  for (int t = 0; t < T; ++t) avg += phi.mat[t][0];
  avg /= static_cast<double>(T);
  Eigen::Matrix4d truth = Eigen::Matrix4d::Zero();
  for (int d = 0; d < 4; ++d) truth(d, d) = true_sd[d] * true_sd[d];
  const double rel = (avg - truth).norm() / truth.norm();
  CHECK(rel < 0.20);
}

TEST_CASE("cascade init structure") {
  const srnn::SrnnParams params = srnn::SrnnParams::init(7);
  tracker::TrackerConfig cfg;
  cfg.init_window = 30;
  cfg.init_iters = 3;
  cfg.seed = 5;

  // T <= J: single window, frame-1 detections repeated.
  {
    const tracker::SceneData scene = static_scene(12, {box_at(0.5, 0.5, 0.1, 0.2)});
    const tracker::ObservationNoise phi = tracker::fixed_phi(scene, cfg.r_phi);
    const tracker::TrackState init = tracker::cascade_init(scene, &params, cfg, phi);
    for (int t = 0; t < 12; ++t) {
      CHECK(init.m[t][0] == scene.detections[0][0].vec());
      CHECK(init.s_sample[t][0] == scene.detections[0][0].vec());
      CHECK(init.V[t][0] == phi.diag[0][0]);
    }
  }
  // T = 60, J = 30: two windows, each constant; window 2 seeded by the
  // refined endpoint of window 1. With a model that predicts the static
  // target exactly, the cascade lands on the truth.
  {
    const BBox target = box_at(0.45, 0.55, 0.1, 0.2);
    srnn::SrnnParams pinned = srnn::SrnnParams::zeros();
    const Vector4d tv = target.vec();
    pinned.ds1_b = dvu::ad::Tensor::vec({tv[0], tv[1], tv[2], tv[3], -6, -6, -6, -6});
    const tracker::SceneData scene = static_scene(60, {target});
    const tracker::ObservationNoise phi = tracker::fixed_phi(scene, cfg.r_phi);
    const tracker::TrackState init = tracker::cascade_init(scene, &pinned, cfg, phi);
    for (int t = 0; t < 30; ++t) CHECK(init.m[t][0] == target.vec());
    for (int t = 31; t < 60; ++t) CHECK(init.m[t][0] == init.m[30][0]);
    CHECK((init.m[30][0] - target.vec()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("track: single static object converges to the detections") {
  const BBox target = box_at(0.5, 0.5, 0.12, 0.2);
  const tracker::SceneData scene = static_scene(40, {target});
  const srnn::SrnnParams params = srnn::SrnnParams::init(11);
  tracker::TrackerConfig cfg;
  cfg.iters = 30;
  cfg.init_iters = 5;
  cfg.seed = 3;
  const tracker::TrackResult res = tracker::track(scene, &params, cfg);
  for (int t = 0; t < 40; ++t) {
    CHECK((res.state.m[t][0] - target.vec()).cwiseAbs().maxCoeff() < 1e-3);
    for (int d = 0; d < 4; ++d) CHECK(res.state.V[t][0][d] > 0.0);
  }
  CHECK(res.iterations.size() == 30);
}

TEST_CASE("track is deterministic under a fixed seed") {
  Rng rng(8);
  tracker::SceneData scene;
  scene.T = 20;
  scene.detections.resize(20);
  for (int t = 0; t < 20; ++t) {
    scene.detections[t].push_back(box_at(0.3 + 0.004 * t, 0.5, 0.1, 0.15));
    scene.detections[t].push_back(box_at(0.7 - 0.004 * t, 0.45, 0.1, 0.15));
  }
  const srnn::SrnnParams params = srnn::SrnnParams::init(17);
  tracker::TrackerConfig cfg;
  cfg.iters = 10;
  cfg.init_iters = 4;
  cfg.init_window = 10;
  cfg.seed = 12345;
  const tracker::TrackResult a = tracker::track(scene, &params, cfg);
  const tracker::TrackResult b = tracker::track(scene, &params, cfg);
  for (int t = 0; t < 20; ++t) {
    for (int n = 0; n < 2; ++n) {
      CHECK(a.state.m[t][n] == b.state.m[t][n]);
      CHECK(a.state.V[t][n] == b.state.V[t][n]);
      CHECK(a.state.s_sample[t][n] == b.state.s_sample[t][n]);
      CHECK(a.state.z_sample[t][n] == b.state.z_sample[t][n]);
    }
    CHECK(a.eta.eta[t] == b.eta.eta[t]);
    CHECK(a.hard_assignment[t] == b.hard_assignment[t]);
  }
}

TEST_CASE("track: well-separated objects get correctly assigned") {
  // Three constant-velocity objects with 2% detection noise and known labels.
  dvu::dataio::SuiteConfig suite;
  suite.scenarios = {"separated"};
  suite.scenes_per_scenario = 2;
  suite.noise_sigma = 0.02;
  suite.T = 60;
  suite.seed = 2023;
  const auto scenes = dvu::dataio::synth_benchmark(suite);
  const srnn::SrnnParams params = srnn::SrnnParams::init(19);
  tracker::TrackerConfig cfg;
  cfg.iters = 30;
  cfg.seed = 55;

  long long correct = 0, total = 0;
  for (const auto& scene : scenes) {
    const tracker::TrackResult res = tracker::track(scene.data, &params, cfg);
    // Objects are initialized from frame-1 detections in order, so object n
    // corresponds to the label of frame-1 detection slot n.
    std::vector<int> obj_label(res.n_objects);
    for (int n = 0; n < res.n_objects; ++n) obj_label[n] = scene.det_labels[0][n];
    for (int t = 0; t < scene.data.T; ++t) {
      for (std::size_t k = 0; k < scene.data.detections[t].size(); ++k) {
        ++total;
        if (obj_label[res.hard_assignment[t][k]] == scene.det_labels[t][k]) ++correct;
      }
    }
  }
  CHECK(static_cast<double>(correct) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("e_w counts direct-domain underflow but still resolves by proximity") {
  // A detection far from both objects at tiny Phi: every log beta sinks
  // below -700 (the raw densities underflow), yet the log-domain softmax
  // still assigns it to the nearer object.
  tracker::SceneData scene = static_scene(1, {BBox{100.0, 100.01, 100.01, 100.0}});
  const tracker::ObservationNoise phi = tracker::fixed_phi(scene, 0.04);
  tracker::TrackState st = tracker::TrackState::allocate(1, 2, false);
  for (int n = 0; n < 2; ++n) {
    st.m[0][n] = Vector4d(0.1 * n, 0.1, 0.1 * n + 0.05, 0.05);  // object 1 is nearer
    st.V[0][n] = Vector4d::Constant(1e-6);
  }
  const tracker::AssignmentPosterior eta = tracker::e_w_step(scene, st, phi);
  CHECK(eta.underflow_events == 1);
  CHECK(std::abs(eta.eta[0].row(0).sum() - 1.0) < 1e-9);
  CHECK(eta.eta[0](0, 1) > 0.99);  // nearer object wins
}

TEST_CASE("finetune objective: frozen-sample gradient matches finite differences") {
  const tracker::SceneData scene = static_scene(4, {box_at(0.5, 0.5, 0.1, 0.2)});
  srnn::SrnnParams params = srnn::SrnnParams::init(29);
  Rng rng(17);
  tracker::TrackState prev = tracker::TrackState::allocate(4, 1, false);
  tracker::TrackState cur = prev;
  for (int t = 0; t < 4; ++t) {
    for (int d = 0; d < 4; ++d) {
      prev.s_sample[t][0][d] = rng.uniform(0.3, 0.7);
      cur.s_sample[t][0][d] = rng.uniform(0.3, 0.7);
      cur.z_sample[t][0][d] = rng.uniform(-0.5, 0.5);
    }
  }
  std::vector<double> analytic;
  tracker::finetune_objective(scene, params, prev, cur, &analytic);
  const std::vector<double> flat = params.flatten();
  const double err = dvu::ad::finite_diff_check(
      [&](std::span<const double> p) {
        srnn::SrnnParams q = params;
        q.unflatten(p);
        return tracker::finetune_objective(scene, q, prev, cur);
      },
      flat, analytic, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("finetune objective reduces to the decoder likelihood when q equals p") {
  // Zero weights with identical biases in the encoder and prior heads make
  // the KL vanish; the objective is then the sum of decoder log densities.
  srnn::SrnnParams params = srnn::SrnnParams::zeros();
  params.ds1_b = dvu::ad::Tensor::vec({0.4, 0.6, 0.5, 0.4, -1, -1, -1, -1});
  const tracker::SceneData scene = static_scene(3, {box_at(0.5, 0.5, 0.1, 0.2)});
  Rng rng(23);
  tracker::TrackState prev = tracker::TrackState::allocate(3, 1, false);
  tracker::TrackState cur = prev;
  for (int t = 0; t < 3; ++t) {
    for (int d = 0; d < 4; ++d) {
      prev.s_sample[t][0][d] = rng.uniform(0.3, 0.7);
      cur.s_sample[t][0][d] = rng.uniform(0.3, 0.7);
      cur.z_sample[t][0][d] = rng.uniform(-0.5, 0.5);
    }
  }
  const double objective = tracker::finetune_objective(scene, params, prev, cur);
  srnn::GaussianDiag dec;
  dec.mean = Vector4d(0.4, 0.6, 0.5, 0.4);
  dec.logvar = Vector4d::Constant(-1.0);
  double expected = 0.0;
  for (int t = 0; t < 3; ++t) expected += gaussian_logpdf(cur.s_sample[t][0], dec);
  CHECK(objective == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("e_z_finetune is the identity when disabled") {
  const tracker::SceneData scene = static_scene(3, {box_at(0.5, 0.5, 0.1, 0.2)});
  const srnn::SrnnParams params = srnn::SrnnParams::init(31);
  tracker::TrackState st = tracker::TrackState::allocate(3, 1, false);
  tracker::TrackerConfig cfg;
  cfg.fine_tune = false;
  const srnn::SrnnParams out = tracker::e_z_finetune(scene, st, st, params, cfg);
  CHECK(out.flatten() == params.flatten());

  tracker::TrackerConfig on = cfg;
  on.fine_tune = true;
  const srnn::SrnnParams tuned = tracker::e_z_finetune(scene, st, st, params, on);
  CHECK(tuned.flatten() != params.flatten());
}

TEST_CASE("track with fine-tuning stays deterministic and tunes the model") {
  const tracker::SceneData scene = static_scene(12, {box_at(0.5, 0.5, 0.12, 0.2)});
  const srnn::SrnnParams params = srnn::SrnnParams::init(37);
  tracker::TrackerConfig cfg;
  cfg.iters = 5;
  cfg.init_window = 6;
  cfg.init_iters = 2;
  cfg.fine_tune = true;
  cfg.seed = 77;
  const tracker::TrackResult a = tracker::track(scene, &params, cfg);
  const tracker::TrackResult b = tracker::track(scene, &params, cfg);
  CHECK(a.params_tuned);
  CHECK(a.tuned_params.flatten() != params.flatten());
  CHECK(a.tuned_params.flatten() == b.tuned_params.flatten());
  for (int t = 0; t < 12; ++t) CHECK(a.state.m[t][0] == b.state.m[t][0]);
}

TEST_CASE("track with the m-step flag uses the full-matrix path") {
  tracker::SceneData scene;
  scene.T = 10;
  scene.detections.resize(10);
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    BBox b = box_at(0.5 + 0.002 * t, 0.5, 0.1, 0.15);
    b.l += 0.002 * rng.normal();
    b.r += 0.002 * rng.normal();
    scene.detections[t].push_back(b);
  }
  const srnn::SrnnParams params = srnn::SrnnParams::init(41);
  tracker::TrackerConfig cfg;
  cfg.iters = 6;
  cfg.init_window = 5;
  cfg.init_iters = 2;
  cfg.m_step_phi = true;
  cfg.seed = 5;
  const tracker::TrackResult a = tracker::track(scene, &params, cfg);
  const tracker::TrackResult b = tracker::track(scene, &params, cfg);
  REQUIRE_FALSE(a.state.V_full.empty());
  for (int t = 0; t < 10; ++t) {
    const Eigen::Matrix4d& V = a.state.V_full[t][0];
    CHECK(Eigen::LLT<Eigen::Matrix4d>(V).info() == Eigen::Success);  // positive definite
    CHECK(a.state.m[t][0] == b.state.m[t][0]);
  }
}

TEST_CASE("scene validation") {
  tracker::SceneData scene;
  scene.T = 0;
  CHECK_THROWS_AS(scene.validate(), dvu::DataError);
  scene.T = 3;
  scene.detections.resize(3);
  CHECK_THROWS_AS(scene.validate(), dvu::DataError);  // K_1 = 0
  scene.detections[0].push_back(BBox{0.5, 0.4, 0.4, 0.5});  // invalid box
  CHECK_THROWS_AS(scene.validate(), dvu::DataError);
}
