#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "ctacl/ctam.hpp"
#include "ctacl/synthdata.hpp"
#include "support/oracles.hpp"

using namespace ctacl;

namespace {

/// Deterministic toy encoder: a fixed mixing of the input, normalized.
FeatureVec toy_encode(const Sample& s) {
  Vec v(s.input.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = s.input[i] + 0.25 * s.input[(i + 1) % v.size()] + 0.01 * (i + 1);
  }
  return l2_normalize(v);
}

Dataset handmade(std::uint32_t cams, std::uint32_t trk_per_cam,
                 std::uint32_t len) {
  Dataset ds;
  ds.d_in = 4;
  ds.n_cameras = cams;
  std::uint32_t trk = 0;
  for (std::uint32_t c = 0; c < cams; ++c) {
    for (std::uint32_t t = 0; t < trk_per_cam; ++t, ++trk) {
      for (std::uint32_t f = 0; f < len; ++f) {
        Sample s;
        s.input = {1.0 + c, 0.5 * t, 0.25 * f, 1.0};
        s.camera_id = c;
        s.tracklet_id = trk;
        s.frame_index = f;
        ds.samples.push_back(std::move(s));
      }
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("build: single slot equals the encoded sample") {
  const Dataset ds = handmade(1, 1, 1);
  const Ctam m = Ctam::build(ds, toy_encode);
  REQUIRE(m.size() == 1);
  REQUIRE(m.n_cameras() == 1);
  const FeatureVec want = toy_encode(ds.samples[0]);
  REQUIRE(m.slot(0).v == want.v);
}

TEST_CASE("build: 3 cameras x 2 tracklets x 4 images -> 24 slots, banks of 8") {
  const Dataset ds = handmade(3, 2, 4);
  const Ctam m = Ctam::build(ds, toy_encode);
  REQUIRE(m.size() == 24);
  REQUIRE(m.n_tracklets() == 6);
  for (std::uint32_t c = 0; c < 3; ++c) {
    REQUIRE(m.subdomain(c).size() == 8);
  }
}

TEST_CASE("build on the seeded dataset equals a per-image re-encoding") {
  GenConfig cfg;
  cfg.n_vehicles = 15;
  cfg.seed = 7;
  const GeneratedDataset g = generate(cfg);
  const Ctam m = Ctam::build(g.data, toy_encode);
  REQUIRE(m.size() == g.data.samples.size());
  for (std::uint32_t i = 0; i < g.data.samples.size(); ++i) {
    const FeatureVec want = toy_encode(g.data.samples[i]);
    REQUIRE(m.slot(i).v == want.v);  // exact: same call, same arithmetic
  }
}

TEST_CASE("build rejects a tracklet spanning two cameras") {
  Dataset ds = handmade(2, 1, 2);
  ds.samples[3].tracklet_id = 0;  // camera 1's tracklet collides with camera 0's
  CHECK_THROWS_AS(Ctam::build(ds, toy_encode), IntegrityError);
}

TEST_CASE("slot_update worked examples") {
  Dataset ds = handmade(1, 1, 1);
  ds.d_in = 2;
  ds.samples[0].input = {1.0, 0.0};
  const auto ident_encode = [](const Sample& s) { return l2_normalize(s.input); };
  Ctam m = Ctam::build(ds, ident_encode);

  m.slot_update(0, FeatureVec{{1.0, 0.0}});
  CHECK(m.slot(0).v[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(m.slot(0).v[1] == Catch::Approx(0.0).margin(1e-12));

  m.slot_update(0, FeatureVec{{0.0, 1.0}});
  CHECK(m.slot(0).v[0] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
  CHECK(m.slot(0).v[1] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));

  // (0.6,0.8) + (0.8,0.6) -> (1.4,1.4) -> diagonal
  Ctam m2 = Ctam::build(ds, [](const Sample&) {
    return FeatureVec{{0.6, 0.8}};
  });
  m2.slot_update(0, FeatureVec{{0.8, 0.6}});
  CHECK(m2.slot(0).v[0] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
  CHECK(m2.slot(0).v[1] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
}

TEST_CASE("antipodal update keeps the slot and counts the degeneracy") {
  Dataset ds = handmade(1, 1, 1);
  ds.d_in = 2;
  ds.samples[0].input = {1.0, 0.0};
  Ctam m = Ctam::build(ds, [](const Sample& s) { return l2_normalize(s.input); });
  REQUIRE(m.degenerate_updates() == 0);
  m.slot_update(0, FeatureVec{{-1.0, 0.0}});
  CHECK(m.slot(0).v[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(m.degenerate_updates() == 1);
}

TEST_CASE("slots stay unit norm under random update sequences") {
  GenConfig cfg;
  cfg.n_vehicles = 8;
  cfg.seed = 19;
  const GeneratedDataset g = generate(cfg);
  Ctam m = Ctam::build(g.data, toy_encode);
  Rng rng = Rng::seeded(20);
  for (int step = 0; step < 1000; ++step) {
    const std::uint32_t id =
        static_cast<std::uint32_t>(rng.below(g.data.samples.size()));
    m.slot_update(id, FeatureVec{oracle::random_unit(rng, m.dim())});
  }
  for (std::uint32_t i = 0; i < m.size(); ++i) {
    REQUIRE(std::fabs(oracle::norm_of(m.slot(i).v) - 1.0) <= 1e-9);
  }
}

TEST_CASE("overhaul restores fresh encodings and resets update history") {
  const Dataset ds = handmade(2, 2, 3);
  Ctam m = Ctam::build(ds, toy_encode);
  Rng rng = Rng::seeded(21);
  for (int step = 0; step < 50; ++step) {
    m.slot_update(static_cast<std::uint32_t>(rng.below(ds.samples.size())),
                  FeatureVec{oracle::random_unit(rng, m.dim())});
  }
  m.overhaul(ds, toy_encode);
  for (std::uint32_t i = 0; i < ds.samples.size(); ++i) {
    const FeatureVec want = toy_encode(ds.samples[i]);
    for (std::size_t j = 0; j < want.v.size(); ++j) {
      REQUIRE(m.slot(i).v[j] == Catch::Approx(want.v[j]).margin(1e-12));
    }
  }

  // post-overhaul update behaves like a fresh t=1 moving average
  const FeatureVec z{oracle::random_unit(rng, m.dim())};
  Vec expect = toy_encode(ds.samples[0]).v;
  for (std::size_t j = 0; j < expect.size(); ++j) expect[j] += z.v[j];
  const double n = oracle::norm_of(expect);
  for (double& x : expect) x /= n;
  m.slot_update(0, z);
  for (std::size_t j = 0; j < expect.size(); ++j) {
    REQUIRE(m.slot(0).v[j] == Catch::Approx(expect[j]).margin(1e-12));
  }
}

TEST_CASE("overhaul rejects a shape mismatch") {
  const Dataset ds = handmade(2, 2, 3);
  Ctam m = Ctam::build(ds, toy_encode);
  const Dataset other = handmade(2, 2, 4);
  CHECK_THROWS_AS(m.overhaul(other, toy_encode), IntegrityError);
}

TEST_CASE("subdomains partition the slot set; tracklets nest in subdomains") {
  GenConfig cfg;
  cfg.n_vehicles = 12;
  cfg.seed = 23;
  const GeneratedDataset g = generate(cfg);
  const Ctam m = Ctam::build(g.data, toy_encode);

  std::set<std::uint32_t> seen;
  std::size_t total = 0;
  for (std::uint32_t c = 0; c < m.n_cameras(); ++c) {
    for (const auto& ref : m.subdomain(c)) {
      REQUIRE(seen.insert(ref.image_id).second);
      REQUIRE(m.key_of(ref.image_id).camera_id == c);
      ++total;
    }
  }
  REQUIRE(total == m.size());

  // every tracklet's slots sit inside its camera's subdomain
  for (std::uint32_t i = 0; i < m.size(); ++i) {
    const CamTrkKey key = m.key_of(i);
    const auto own = m.tracklet_slots(key);
    std::set<std::uint32_t> sub_ids;
    for (const auto& ref : m.subdomain(key.camera_id)) {
      sub_ids.insert(ref.image_id);
    }
    for (const auto& ref : own) REQUIRE(sub_ids.count(ref.image_id) == 1);
  }

  CHECK_THROWS_AS(m.subdomain(m.n_cameras()), std::invalid_argument);
  CHECK_THROWS_AS(m.tracklet_slots(CamTrkKey{0, 999999}), std::invalid_argument);
}

TEST_CASE("camera centroids match the naive mean oracle") {
  const Dataset ds = handmade(3, 2, 3);
  const Ctam m = Ctam::build(ds, toy_encode);
  const CentroidSet cs = m.camera_centroids();
  REQUIRE(cs.n_cameras() == 3);
  for (std::uint32_t c = 0; c < 3; ++c) {
    Vec mean(m.dim(), 0.0);
    const auto sub = m.subdomain(c);
    for (const auto& ref : sub) {
      for (std::size_t j = 0; j < mean.size(); ++j) {
        mean[j] += ref.feature->v[j];
      }
    }
    for (double& x : mean) x /= static_cast<double>(sub.size());
    const double n = oracle::norm_of(mean);
    for (std::size_t j = 0; j < mean.size(); ++j) {
      REQUIRE(cs.centroids[c].v[j] == Catch::Approx(mean[j] / n).margin(1e-12));
    }
    REQUIRE(std::fabs(oracle::norm_of(cs.centroids[c].v) - 1.0) <= 1e-9);
  }
}

TEST_CASE("centroid worked examples") {
  Dataset ds;
  ds.d_in = 2;
  ds.n_cameras = 2;
  ds.samples.push_back({{1.0, 0.0}, 0, 0, 0});
  ds.samples.push_back({{0.0, 1.0}, 0, 1, 0});
  ds.samples.push_back({{0.0, 1.0}, 1, 2, 0});
  const Ctam m = Ctam::build(ds, [](const Sample& s) {
    return l2_normalize(s.input);
  });
  const CentroidSet cs = m.camera_centroids();
  CHECK(cs.centroids[0].v[0] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
  CHECK(cs.centroids[0].v[1] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
  CHECK(cs.centroids[1].v[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(cs.centroids[1].v[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("snapshot round-trips bit-exactly") {
  GenConfig cfg;
  cfg.n_vehicles = 10;
  cfg.seed = 29;
  const GeneratedDataset g = generate(cfg);
  Ctam m = Ctam::build(g.data, toy_encode);
  Rng rng = Rng::seeded(30);
  for (int step = 0; step < 200; ++step) {
    m.slot_update(static_cast<std::uint32_t>(rng.below(g.data.samples.size())),
                  FeatureVec{oracle::random_unit(rng, m.dim())});
  }

  const std::string path =
      (std::filesystem::temp_directory_path() / "ctacl_ctam_snap.bin").string();
  CtamSnapshot::save(path, m, g.data, g.labels);
  const Ctam back = CtamSnapshot::load(path).memory;

  REQUIRE(back.size() == m.size());
  REQUIRE(back.degenerate_updates() == m.degenerate_updates());
  for (std::uint32_t i = 0; i < m.size(); ++i) {
    REQUIRE(back.slot(i).v == m.slot(i).v);  // bitwise
    REQUIRE(back.key_of(i) == m.key_of(i));
  }
  std::remove(path.c_str());
}
