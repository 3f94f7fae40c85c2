#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "ctacl/eval.hpp"
#include "support/oracles.hpp"

using namespace ctacl;

namespace {

FeatureVec unit2(double x, double y) { return l2_normalize(Vec{x, y}); }

struct Fixture {
  std::vector<FeatureVec> emb;
  std::vector<std::uint32_t> cam;
  std::vector<std::uint32_t> veh;

  void add(FeatureVec z, std::uint32_t c, std::uint32_t v) {
    emb.push_back(std::move(z));
    cam.push_back(c);
    veh.push_back(v);
  }
};

}  // namespace

TEST_CASE("single query, matching gallery entry ranked first") {
  Fixture f;
  f.add(unit2(1.0, 0.0), 0, 0);   // query
  f.add(unit2(0.9, 0.1), 1, 0);   // cross-camera match
  f.add(unit2(0.0, 1.0), 1, 1);   // distractor
  QueryGallerySplit split{{0}, {1, 2}, 0};
  const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 3);
  CHECK(rep.cmc[0] == 1.0);
  CHECK(rep.cmc[1] == 1.0);
  CHECK(rep.map == Catch::Approx(1.0).margin(1e-15));
  CHECK(rep.n_queries == 1);
  CHECK(rep.n_excluded_queries == 0);
}

TEST_CASE("lone positive at rank two gives AP one half") {
  Fixture f;
  f.add(unit2(1.0, 0.0), 0, 0);      // query
  f.add(unit2(0.99, 0.141), 1, 1);   // distractor wins rank 1
  f.add(unit2(0.8, 0.6), 1, 0);      // the only match, rank 2
  QueryGallerySplit split{{0}, {1, 2}, 0};
  const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 2);
  CHECK(rep.cmc[0] == 0.0);
  CHECK(rep.cmc[1] == 1.0);
  CHECK(rep.map == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("same-vehicle same-camera gallery entries never count") {
  Fixture f;
  f.add(unit2(1.0, 0.0), 0, 0);   // query
  f.add(unit2(1.0, 0.0), 0, 0);   // own camera duplicate: filtered out
  f.add(unit2(0.5, 0.86), 1, 0);  // real cross-camera match
  f.add(unit2(0.0, 1.0), 1, 1);
  QueryGallerySplit split{{0}, {1, 2, 3}, 0};
  const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 2);
  // the duplicate would have ranked first; with it filtered, the true match
  // competes only against the distractor
  CHECK(rep.cmc[0] == 1.0);
  CHECK(rep.map == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("queries without any cross-camera match are excluded but counted") {
  Fixture f;
  f.add(unit2(1.0, 0.0), 0, 0);  // query; its only mate shares camera 0
  f.add(unit2(0.9, 0.1), 0, 0);  // filtered for query 0 (same vehicle+camera)
  f.add(unit2(0.2, 0.8), 0, 1);  // cross-camera mate for query 3
  f.add(unit2(0.1, 0.9), 1, 1);  // second query
  QueryGallerySplit split{{0, 3}, {1, 2}, 0};
  const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 2);
  CHECK(rep.n_queries == 2);
  CHECK(rep.n_excluded_queries == 1);  // query 0 has no valid target left
  CHECK(rep.cmc[0] == 1.0);            // the surviving query ranks its mate first
}

TEST_CASE("score ties resolve toward the lower gallery id") {
  Fixture f;
  f.add(unit2(1.0, 0.0), 0, 0);  // query
  f.add(unit2(0.0, 1.0), 1, 1);  // id 1, score 0
  f.add(unit2(0.0, 1.0), 1, 0);  // id 2, score 0, the match
  QueryGallerySplit split{{0}, {1, 2}, 0};
  const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 2);
  // tie at score zero: id 1 sits above id 2, so the match lands at rank 2
  CHECK(rep.cmc[0] == 0.0);
  CHECK(rep.cmc[1] == 1.0);
  CHECK(rep.map == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("cmc is monotone and bounded on a seeded workload") {
  GenConfig cfg;
  cfg.n_vehicles = 30;
  cfg.seed = 11;
  const GeneratedDataset g = generate(cfg);
  const QueryGallerySplit split = split_query_gallery(g.data, g.labels, 5);
  Rng rng = Rng::seeded(109);
  std::vector<FeatureVec> emb;
  std::vector<std::uint32_t> cam;
  for (const Sample& s : g.data.samples) {
    emb.push_back(FeatureVec{oracle::random_unit(rng, 16)});
    cam.push_back(s.camera_id);
  }
  const EvalReport rep =
      evaluate_embeddings(emb, cam, g.labels.vehicle_ids, split, 10);
  for (std::size_t k = 1; k < rep.cmc.size(); ++k) {
    REQUIRE(rep.cmc[k] >= rep.cmc[k - 1]);
  }
  REQUIRE(rep.cmc.back() <= 1.0);
  REQUIRE(rep.map >= 0.0);
  REQUIRE(rep.map <= 1.0);
}

TEST_CASE("matches the naive per-query oracle on random embeddings") {
  GenConfig cfg;
  cfg.n_vehicles = 40;
  cfg.seed = 13;
  const GeneratedDataset g = generate(cfg);
  const QueryGallerySplit split = split_query_gallery(g.data, g.labels, 13);
  Rng rng = Rng::seeded(113);
  std::vector<FeatureVec> emb;
  std::vector<Vec> raw;
  std::vector<std::uint32_t> cam;
  for (const Sample& s : g.data.samples) {
    Vec v = oracle::random_unit(rng, 12);
    raw.push_back(v);
    emb.push_back(FeatureVec{std::move(v)});
    cam.push_back(s.camera_id);
  }
  const EvalReport rep =
      evaluate_embeddings(emb, cam, g.labels.vehicle_ids, split, 10);
  const oracle::NaiveEval want = oracle::naive_cmc_map(
      raw, cam, g.labels.vehicle_ids, split.query_ids, split.gallery_ids, 10);
  REQUIRE(rep.n_excluded_queries == want.excluded);
  REQUIRE(rep.map == Catch::Approx(want.map).margin(1e-12));
  for (std::size_t k = 0; k < 10; ++k) {
    REQUIRE(rep.cmc[k] == Catch::Approx(want.cmc[k]).margin(1e-12));
  }
}

TEST_CASE("gallery enumeration order does not change the metrics") {
  GenConfig cfg;
  cfg.n_vehicles = 20;
  cfg.seed = 17;
  const GeneratedDataset g = generate(cfg);
  QueryGallerySplit split = split_query_gallery(g.data, g.labels, 17);
  Rng rng = Rng::seeded(127);
  std::vector<FeatureVec> emb;
  std::vector<std::uint32_t> cam;
  for (const Sample& s : g.data.samples) {
    emb.push_back(FeatureVec{oracle::random_unit(rng, 8)});
    cam.push_back(s.camera_id);
  }
  const EvalReport a =
      evaluate_embeddings(emb, cam, g.labels.vehicle_ids, split, 5);
  std::reverse(split.gallery_ids.begin(), split.gallery_ids.end());
  const EvalReport b =
      evaluate_embeddings(emb, cam, g.labels.vehicle_ids, split, 5);
  REQUIRE(a.map == Catch::Approx(b.map).margin(1e-12));
  REQUIRE(a.cmc == b.cmc);
}

TEST_CASE("camera probe accuracy: separable and collapsed embeddings") {
  SECTION("perfectly separated cameras classify perfectly") {
    Fixture f;
    f.add(unit2(1.0, 0.0), 0, 0);
    f.add(unit2(0.9, 0.44), 0, 1);
    f.add(unit2(0.0, 1.0), 1, 0);
    f.add(unit2(0.44, 0.9), 1, 1);
    QueryGallerySplit split{{0}, {2, 3}, 0};
    const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 1);
    CHECK(rep.camera_probe_accuracy == 1.0);
  }
  SECTION("identical embeddings across cameras collapse to one prediction") {
    Fixture f;
    f.add(unit2(1.0, 0.0), 0, 0);
    f.add(unit2(1.0, 0.0), 1, 0);
    f.add(unit2(1.0, 0.0), 0, 1);
    f.add(unit2(1.0, 0.0), 1, 1);
    QueryGallerySplit split{{0}, {1, 3}, 0};
    const EvalReport rep = evaluate_embeddings(f.emb, f.cam, f.veh, split, 1);
    // both centroids coincide; the tie resolves to camera 0 for everyone
    CHECK(rep.camera_probe_accuracy == 0.5);
  }
}

TEST_CASE("validation failures") {
  Fixture f;
  f.add(unit2(1.0, 0.0), 0, 0);
  f.add(unit2(0.0, 1.0), 1, 0);
  CHECK_THROWS_AS(evaluate_embeddings(f.emb, f.cam, f.veh,
                                      QueryGallerySplit{{0}, {0, 1}, 0}, 2),
                  std::invalid_argument);  // overlap
  CHECK_THROWS_AS(evaluate_embeddings(f.emb, f.cam, f.veh,
                                      QueryGallerySplit{{0}, {5}, 0}, 2),
                  std::invalid_argument);  // out of range
  CHECK_THROWS_AS(evaluate_embeddings(f.emb, f.cam, f.veh,
                                      QueryGallerySplit{{0}, {1}, 0}, 0),
                  std::invalid_argument);  // k_max zero
}

TEST_CASE("encode_all + evaluate agree with the embedding-level entry point") {
  GenConfig cfg;
  cfg.n_vehicles = 15;
  cfg.d_in = 10;
  cfg.seed = 19;
  const GeneratedDataset g = generate(cfg);
  const QueryGallerySplit split = split_query_gallery(g.data, g.labels, 19);
  const EncoderParams params = encoder_init({10, 12, 6}, 41);

  const EvalReport a = evaluate(params, g.data, g.labels, split, 5);

  std::vector<std::uint32_t> cam;
  for (const Sample& s : g.data.samples) cam.push_back(s.camera_id);
  const EvalReport b = evaluate_embeddings(encode_all(params, g.data), cam,
                                           g.labels.vehicle_ids, split, 5);
  REQUIRE(a.map == b.map);
  REQUIRE(a.cmc == b.cmc);
  REQUIRE(a.camera_probe_accuracy == b.camera_probe_accuracy);
}
