#include <doctest.h>

#include "lidarvoice/config.hpp"
#include "lidarvoice/error.hpp"
#include "support.hpp"

using namespace lidarvoice;
using namespace lidarvoice::testing;

namespace {

ErrorKind kind_of(std::string_view json) {
  try {
    parse_run_config(json);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error for " << json);
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("empty object gives the defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.seed == 0);
  CHECK(c.fit.lr0 == 0.0005);
  CHECK(c.fit.batch_size == 8);
  CHECK(c.model.mode == FusionMode::kFused);
  CHECK(c.model.dims.num_points == 1024);
  CHECK(c.data.val_fraction == 0.2);
}

TEST_CASE("values are read and the seed reaches model and fit") {
  const RunConfig c = parse_run_config(R"({
    "seed": 17,
    "data": {"train_dir": "/d/train", "limit": 5, "use_calib": false},
    "model": {"mode": "lidar_only", "dims": {"num_points": 64, "head_dense": [32, 16]}},
    "fit": {"max_epochs": 3, "class_weights": [1, 2, 3, 4], "evaluate_train": false},
    "output": {"dir": "/tmp/out", "metrics": "m.txt"}
  })");
  CHECK(c.seed == 17);
  CHECK(c.model.seed == 17);
  CHECK(c.fit.seed == 17);
  CHECK(c.data.train_dir == "/d/train");
  CHECK(c.data.limit == 5);
  CHECK_FALSE(c.data.use_calib);
  CHECK(c.model.mode == FusionMode::kLidarOnly);
  CHECK(c.model.dims.num_points == 64);
  CHECK(c.model.dims.head_dense == std::vector<std::size_t>{32, 16});
  CHECK(c.fit.max_epochs == 3);
  CHECK(c.fit.class_weights == std::array<double, 4>{1, 2, 3, 4});
  CHECK_FALSE(c.fit.evaluate_train);
  CHECK(c.output.metrics == "m.txt");
}

TEST_CASE("strict schema") {
  CHECK(kind_of(R"({"sed": 1})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"fit": {"lr": 0.1}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"model": {"dims": {"width": 3}}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"seed": -1})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"fit": {"batch_size": "8"}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"fit": {"batch_size": 0}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"fit": {"class_weights": [1, 2]}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"model": {"mode": "radar"}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"model": {"dims": {"lidar_point": []}}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"data": {"val_fraction": 1.0}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"data": 3})") == ErrorKind::kConfig);
  CHECK(kind_of("[]") == ErrorKind::kConfig);
}

TEST_CASE("malformed JSON reports the line") {
  try {
    parse_run_config("{\n  \"seed\": 1,\n  \"fit\": {,}\n}");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(e.line() == 3);
  }
}

TEST_CASE("dump and parse round trip") {
  RunConfig c;
  c.seed = 99;
  c.data.val_dir = "/v";
  c.model.mode = FusionMode::kLidarOnly;
  c.model.dims = small_dims();
  c.fit.min_lr = 1e-7;
  c.fit.grad_clip_norm = 2.5;
  c.output.checkpoint = "x.ckpt";
  const std::string text = dump_run_config(c);
  const RunConfig back = parse_run_config(text);
  CHECK(dump_run_config(back) == text);
  CHECK(back.model.dims.lidar_point == small_dims().lidar_point);
  CHECK(back.fit.grad_clip_norm == 2.5);
}

TEST_CASE("relative paths resolve against the config file") {
  TempDir dir("cfg");
  write_file_text(dir / "run.json",
                  R"({"data": {"train_dir": "train", "val_dir": "/abs/val"}, "output": {"dir": "out"}})");
  const RunConfig c = load_run_config(dir / "run.json");
  CHECK(c.data.train_dir == dir / "train");
  CHECK(c.data.val_dir == "/abs/val");
  CHECK(c.output.dir == dir / "out");
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), Error);
}
