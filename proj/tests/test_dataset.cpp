#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctacl/dataset.hpp"
#include "ctacl/synthdata.hpp"
#include "support/oracles.hpp"

using namespace ctacl;

namespace {

Dataset tiny_dataset() {
  Dataset ds;
  ds.d_in = 3;
  ds.n_cameras = 2;
  ds.samples.push_back({{1.0, 0.0, 0.0}, 0, 0, 0});
  ds.samples.push_back({{0.0, 1.0, 0.0}, 0, 0, 1});
  ds.samples.push_back({{0.0, 0.0, 1.0}, 1, 1, 0});
  return ds;
}

EvalLabels tiny_labels() {
  EvalLabels lab;
  lab.vehicle_ids = {0, 0, 0};
  lab.n_vehicles = 1;
  return lab;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("validate accepts a well-formed dataset") {
  CHECK_NOTHROW(validate(tiny_dataset()));
}

TEST_CASE("validate rejects structural corruption") {
  Dataset ds = tiny_dataset();
  ds.samples[1].input.pop_back();
  CHECK_THROWS_AS(validate(ds), IntegrityError);

  Dataset ds2 = tiny_dataset();
  ds2.samples[2].camera_id = 7;  // out of declared camera range
  CHECK_THROWS_AS(validate(ds2), IntegrityError);

  Dataset ds3 = tiny_dataset();
  ds3.samples[2].tracklet_id = 0;  // tracklet 0 now spans two cameras
  CHECK_THROWS_AS(validate(ds3), IntegrityError);

  Dataset empty;
  empty.d_in = 3;
  empty.n_cameras = 1;
  CHECK_THROWS_AS(validate(empty), IntegrityError);
}

TEST_CASE("round-trip through the binary format preserves everything") {
  const GenConfig cfg = [] {
    GenConfig c;
    c.n_vehicles = 12;
    c.seed = 21;
    return c;
  }();
  const GeneratedDataset g = generate(cfg);
  const std::string path = temp_path("ctacl_ds_roundtrip.bin");
  save_dataset(path, g.data, g.labels);
  const LoadedDataset back = load_dataset(path);

  REQUIRE(back.data.samples.size() == g.data.samples.size());
  REQUIRE(back.data.d_in == g.data.d_in);
  REQUIRE(back.data.n_cameras == g.data.n_cameras);
  REQUIRE(back.labels.n_vehicles == g.labels.n_vehicles);
  REQUIRE(back.labels.vehicle_ids == g.labels.vehicle_ids);
  for (std::size_t i = 0; i < g.data.samples.size(); ++i) {
    const Sample& a = g.data.samples[i];
    const Sample& b = back.data.samples[i];
    REQUIRE(a.camera_id == b.camera_id);
    REQUIRE(a.tracklet_id == b.tracklet_id);
    REQUIRE(a.frame_index == b.frame_index);
    REQUIRE(a.input == b.input);  // bit-exact
  }
  std::remove(path.c_str());
}

TEST_CASE("writes are byte-identical for identical inputs") {
  const GeneratedDataset g = generate(GenConfig{});
  std::ostringstream a, b;
  write_dataset(a, g.data, g.labels);
  write_dataset(b, g.data, g.labels);
  REQUIRE(a.str() == b.str());
  CHECK(a.str().substr(0, 4) == "CTDS");
}

TEST_CASE("loader rejects corrupted streams") {
  const Dataset ds = tiny_dataset();
  std::ostringstream os;
  write_dataset(os, ds, tiny_labels());
  const std::string bytes = os.str();

  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream is(bad);
    CHECK_THROWS_AS(read_dataset(is), IntegrityError);
  }
  {
    std::string truncated = bytes.substr(0, bytes.size() / 2);
    std::istringstream is(truncated);
    CHECK_THROWS_AS(read_dataset(is), IntegrityError);
  }
  {
    std::string bad_version = bytes;
    bad_version[4] = static_cast<char>(0xEE);
    std::istringstream is(bad_version);
    CHECK_THROWS_AS(read_dataset(is), IntegrityError);
  }
}

TEST_CASE("per_camera_counts and tracklet_count recount correctly") {
  const GeneratedDataset g = generate(GenConfig{});
  const auto counts = per_camera_counts(g.data);
  const auto rc = oracle::recount(g.data, g.labels);
  REQUIRE(counts.size() == g.data.n_cameras);
  for (std::uint32_t c = 0; c < g.data.n_cameras; ++c) {
    REQUIRE(counts[c] == rc.per_camera.at(c));
  }
  REQUIRE(tracklet_count(g.data) == rc.per_tracklet.size());
}

TEST_CASE("vehicle ids live only in the eval label channel") {
  // the training-side Sample carries camera/tracklet/frame and nothing else
  const Sample s{{1.0}, 0, 0, 0};
  static_assert(sizeof(s.camera_id) + sizeof(s.tracklet_id) +
                        sizeof(s.frame_index) ==
                    3 * sizeof(std::uint32_t),
                "Sample must not grow identity fields");
  const GeneratedDataset g = generate(GenConfig{});
  REQUIRE(g.labels.vehicle_ids.size() == g.data.samples.size());
}
