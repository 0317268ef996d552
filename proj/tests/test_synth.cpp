#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dvu/dataset.hpp"
#include "dvu/error.hpp"
#include "dvu/synth.hpp"

using dvu::BBox;
using dvu::Rng;
namespace synth = dvu::synth;
namespace fs = std::filesystem;

TEST_CASE("config validation") {
  synth::TrajectoryConfig cfg;
  cfg.seg_type_probs = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), dvu::ConfigError);
  cfg = synth::TrajectoryConfig{};
  cfg.T = 1;
  CHECK_THROWS_AS(cfg.validate(), dvu::ConfigError);
  cfg = synth::TrajectoryConfig{};
  cfg.a1.sigma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), dvu::ConfigError);
  CHECK_NOTHROW(synth::TrajectoryConfig{}.validate());
}

TEST_CASE("static segment") {
  const auto vals = synth::gen_segment(synth::SegmentKind::kStatic, {}, 0.3, 1, 11);
  CHECK(vals.size() == 10);
  for (double v : vals) CHECK(v == 0.3);
}

TEST_CASE("constant velocity segment ends where it should") {
  synth::SegmentParams sp;
  sp.a1 = 0.01;
  synth::SegmentFit fit;
  const auto vals = synth::gen_segment(synth::SegmentKind::kConstVelocity, sp, 0.2, 5, 16, &fit);
  CHECK(vals.front() == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(vals.back() == doctest::Approx(0.3).epsilon(1e-12));  // 10 frames later
  CHECK(synth::eval_segment(fit.kind, fit.params, fit.free_const, fit.t_start, 5) ==
        doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("sinusoidal continuity plug-back") {
  synth::SegmentParams sp;
  sp.omega = 0.13;
  sp.phi0 = 0.7;
  synth::SegmentFit fit;
  const auto vals = synth::gen_segment(synth::SegmentKind::kSinusoidal, sp, 0.42, 7, 30, &fit);
  CHECK(std::abs(vals.front() - 0.42) < 1e-12);

  // Unsolvable phase: sin(omega*t + phi) == 0 at the boundary.
  synth::SegmentParams bad;
  bad.omega = 0.0;
  bad.phi0 = 0.0;
  CHECK_THROWS_AS(synth::gen_segment(synth::SegmentKind::kSinusoidal, bad, 0.5, 3, 10),
                  dvu::NumericError);
  // Zero start is solvable with zero amplitude.
  const auto zero_vals = synth::gen_segment(synth::SegmentKind::kSinusoidal, bad, 0.0, 3, 10);
  for (double v : zero_vals) CHECK(v == 0.0);
}

TEST_CASE("continuity property over 1000 seeds") {
  synth::TrajectoryConfig cfg;
  cfg.T = 60;
  for (int seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const synth::CoordSequence seq = synth::gen_sequence(cfg, rng);
    REQUIRE(static_cast<int>(seq.values.size()) == cfg.T);
    for (std::size_t i = 0; i + 1 < seq.segments.size(); ++i) {
      const auto& a = seq.segments[i];
      const auto& b = seq.segments[i + 1];
      CHECK(a.t_end == b.t_start);
      const double left = synth::eval_segment(a.kind, a.params, a.free_const, a.t_start, a.t_end);
      const double right = b.start_value;
      CHECK(std::abs(left - right) < 1e-9);
      // And the first emitted value of b matches its start.
      CHECK(std::abs(seq.values[b.t_start - 1] - right) < 1e-9);
    }
    for (double v : seq.values) CHECK(std::isfinite(v));
  }
}

TEST_CASE("forced static single segment is constant") {
  synth::TrajectoryConfig cfg;
  cfg.s_max = 1;
  cfg.seg_type_probs = {1.0, 0.0, 0.0, 0.0};
  Rng rng(3);
  const synth::CoordSequence seq = synth::gen_sequence(cfg, rng);
  CHECK(seq.segments.size() == 1);
  for (double v : seq.values) CHECK(v == seq.values.front());
}

TEST_CASE("bbox tracks: ratio constant, sizes positive") {
  synth::TrajectoryConfig cfg;
  for (int seed = 0; seed < 10000; ++seed) {
    Rng rng(seed);
    const std::vector<BBox> track = synth::gen_bbox_track(cfg, rng);
    REQUIRE(static_cast<int>(track.size()) == cfg.T);
    const double ratio0 = track[0].height() / track[0].width();
    for (const BBox& b : track) {
      CHECK(b.width() > 0.0);
      CHECK(b.width() >= 1e-4 * 0.999);
      CHECK(b.height() >= 1e-4 * 0.999);
      CHECK(b.height() / b.width() == doctest::Approx(ratio0).epsilon(1e-9));
    }
  }
}

TEST_CASE("static bbox track has constant size") {
  synth::TrajectoryConfig cfg;
  cfg.s_max = 1;
  cfg.seg_type_probs = {1.0, 0.0, 0.0, 0.0};
  Rng rng(9);
  const std::vector<BBox> track = synth::gen_bbox_track(cfg, rng);
  for (const BBox& b : track) {
    CHECK(b.width() == doctest::Approx(track[0].width()).epsilon(1e-12));
    CHECK(b.height() == doctest::Approx(track[0].height()).epsilon(1e-12));
  }
}

TEST_CASE("fixed seed reproducibility") {
  synth::TrajectoryConfig cfg;
  Rng a(1234), b(1234);
  const auto t1 = synth::gen_bbox_track(cfg, a);
  const auto t2 = synth::gen_bbox_track(cfg, b);
  for (int t = 0; t < cfg.T; ++t) {
    CHECK(t1[t].l == t2[t].l);
    CHECK(t1[t].t == t2[t].t);
    CHECK(t1[t].r == t2[t].r);
    CHECK(t1[t].b == t2[t].b);
  }
}

TEST_CASE("gen_dataset writes counts and stats") {
  const fs::path dir = fs::temp_directory_path() / "dvu_synth_test";
  fs::remove_all(dir);
  synth::TrajectoryConfig cfg;
  cfg.T = 20;
  cfg.seed = 7;
  const synth::DatasetStats stats = synth::gen_dataset(cfg, 2, 1, dir);
  CHECK(stats.n_train == 2);
  CHECK(stats.n_val == 1);
  const auto train = dvu::read_dataset(dir / "train.txt");
  const auto val = dvu::read_dataset(dir / "val.txt");
  CHECK(train.size() == 2);
  CHECK(val.size() == 1);
  CHECK(train[0].size() == 20);
  CHECK(fs::exists(dir / "stats.json"));
  fs::remove_all(dir);
}

TEST_CASE("full-scale dataset generation") {
  // 12105 training and 3052 validation sequences of 60 frames.
  const fs::path dir = fs::temp_directory_path() / "dvu_synth_full";
  fs::remove_all(dir);
  synth::TrajectoryConfig cfg;
  cfg.T = 60;
  cfg.seed = 1;
  const synth::DatasetStats stats = synth::gen_dataset(cfg, 12105, 3052, dir);
  CHECK(stats.n_train == 12105);
  CHECK(stats.n_val == 3052);
  std::ifstream train(dir / "train.txt"), val(dir / "val.txt");
  std::string h1, h2;
  std::getline(train, h1);
  std::getline(val, h2);
  CHECK(h1 == "T=60 count=12105");
  CHECK(h2 == "T=60 count=3052");
  fs::remove_all(dir);
}

TEST_CASE("speed histogram covers a wide range") {
  const fs::path dir = fs::temp_directory_path() / "dvu_synth_hist";
  fs::remove_all(dir);
  synth::TrajectoryConfig cfg;
  cfg.seed = 11;
  const synth::DatasetStats stats = synth::gen_dataset(cfg, 180, 20, dir);
  int nonzero = 0;
  for (int c : stats.speed_bin_counts) nonzero += c > 0 ? 1 : 0;
  CHECK(nonzero >= 5);
  fs::remove_all(dir);
}

TEST_CASE("gen_dataset determinism") {
  const fs::path d1 = fs::temp_directory_path() / "dvu_synth_det1";
  const fs::path d2 = fs::temp_directory_path() / "dvu_synth_det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  synth::TrajectoryConfig cfg;
  cfg.T = 15;
  cfg.seed = 99;
  synth::gen_dataset(cfg, 5, 2, d1);
  synth::gen_dataset(cfg, 5, 2, d2);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(d1 / "train.txt") == slurp(d2 / "train.txt"));
  CHECK(slurp(d1 / "val.txt") == slurp(d2 / "val.txt"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("dataset io round trip and errors") {
  const fs::path dir = fs::temp_directory_path() / "dvu_dataset_io";
  fs::create_directories(dir);
  std::vector<dvu::BoxSequence> seqs(3);
  Rng rng(5);
  for (auto& s : seqs) {
    for (int t = 0; t < 4; ++t) {
      s.emplace_back(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
    }
  }
  dvu::write_dataset(dir / "d.txt", seqs);
  const auto back = dvu::read_dataset(dir / "d.txt");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    for (int t = 0; t < 4; ++t) {
      for (int d = 0; d < 4; ++d) {
        CHECK(back[i][t][d] == doctest::Approx(seqs[i][t][d]).epsilon(1e-8));
      }
    }
  }
  {
    std::ofstream bad(dir / "bad.txt");
    bad << "T=2 count=1\n0.1 0.2 0.3\n";
  }
  CHECK_THROWS_AS(dvu::read_dataset(dir / "bad.txt"), dvu::DataError);
  fs::remove_all(dir);
}
