#include "doctest.h"

#include "fixtures.hpp"

#include "ncl/experiments.hpp"
#include "ncl/io.hpp"

#include <filesystem>
#include <sstream>

using namespace ncl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("ncl_exp_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Config resolved(const std::string& text) { return resolve_config(Config::parse(text)); }

}  // namespace

TEST_CASE("defaults parse and resolve_config rejects unknown keys") {
  CHECK(default_config().has("model.preset"));
  CHECK(Config::parse(default_config().serialize()) == default_config());
  CHECK(resolve_config(Config{}) == default_config());
  const Config c = resolved("model.num_classes = 3\nmodel.num_samples = 9\n");
  CHECK(c.get_int("model.num_classes") == 3);
  CHECK(c.get_string("model.preset") == "one_hot");
  try {
    resolved("no.such.key = 1\n");
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigInvalid);
    CHECK(std::string(e.what()).find("no.such.key") != std::string::npos);
  }
}

TEST_CASE("builders follow the config") {
  const Config c = resolved("model.num_classes = 3\nmodel.num_samples = 9\nencoder.transform = softplus\n");
  const auto model = model_from_config(c);
  CHECK(model.num_classes() == 3);
  CHECK(model.num_samples() == 9);
  CHECK(feature_dims(c, model) == 3);
  REQUIRE(transform_from_config(c));
  CHECK(transform_from_config(c)->kind == TransformKind::Softplus);
  CHECK_FALSE(transform_from_config(resolved("encoder.transform = none\n")));
  const auto enc = encoder_from_config(c, model, transform_from_config(c));
  CHECK(enc->num_samples() == 9);
  CHECK(enc->output_dim() == 3);
  CHECK(train_config_from(c).learning_rate == 0.5);
  CHECK(objective_from(c).kind == ObjectiveSpec::Kind::Spectral);
  CHECK_ERRC(transform_from_config(resolved("encoder.transform = tanh\n")), Errc::ConfigInvalid);

  const Config ex = resolved("model.preset = explicit\nmodel.conditional = [[0.5, 0.5, 0], [0, 0, 1]]\n");
  const auto em = model_from_config(ex);
  CHECK(em.num_samples() == 3);
  CHECK(em.num_classes() == 2);
}

TEST_CASE("generate writes the model matrices") {
  TempDir dir("generate");
  std::ostringstream log;
  run_generate(resolved("model.num_classes = 2\nmodel.num_samples = 4\n"), dir.path, log);
  for (const char* f : {"phi.csv", "report.json", "timing.json", "model.cfg"}) CHECK(fs::exists(dir.path / f));
  const Matrix phi = read_csv(dir.path / "phi.csv");
  CHECK(phi.rows() == 4);
  CHECK(phi.cols() == 2);
}

TEST_CASE("verify passes on the default preset and its body is deterministic") {
  TempDir a("verify_a"), b("verify_b");
  std::ostringstream log;
  const Config c = resolved("verify.restarts = 3\n");
  const auto ra = run_verify(c, a.path, log);
  const auto rb = run_verify(c, b.path, log);
  CHECK(ra.all_pass());
  CHECK(run_command("verify", c, a.path, log) == 0);
  CHECK(read_text(a.path / "report.json") == read_text(b.path / "report.json"));
  CHECK(ra.body() == rb.body());
  CHECK(run_command("verify", resolved("verify.restarts = 2\nverify.align_tolerance = 0\n"), a.path, log) == 1);
}

TEST_CASE("train then evaluate from the checkpoint") {
  TempDir dir("train"), ev("evaluate");
  std::ostringstream log;
  const std::string base = "model.num_classes = 3\nmodel.num_samples = 12\n";
  run_train(resolved(base), dir.path, log);
  CHECK(fs::exists(dir.path / "checkpoint.bin"));
  CHECK(fs::exists(dir.path / "trace.csv"));
  const auto r = run_evaluate(resolved(base + "features.source = checkpoint\nfeatures.checkpoint = \"" +
                                       (dir.path / "checkpoint.bin").string() + "\"\n"),
                              ev.path, log);
  bool found = false;
  for (const auto& m : r.metrics())
    if (m.name == "sparsity") {
      found = true;
      CHECK(m.value == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
    }
  CHECK(found);
  CHECK(r.body()["inputs"].dump().find("checkpoint") != std::string::npos);
}

TEST_CASE("evaluate rejects unknown metrics before doing work") {
  TempDir dir("unknown");
  std::ostringstream log;
  CHECK_ERRC(run_evaluate(resolved("evaluate.metrics = [sparsity, bogus_metric]\n"), dir.path, log),
             Errc::UnknownMetric);
  CHECK_FALSE(fs::exists(dir.path / "report.json"));
}

TEST_CASE("select: EA picks the informative dimensions") {
  TempDir dir("select");
  std::ostringstream log;
  const auto r = run_select(resolved("model.num_classes = 3\nmodel.num_samples = 30\nselect.pad_dims = 3\n"), dir.path, log);
  double ea = -1.0, all = -2.0, random = 2.0;
  for (const auto& m : r.metrics()) {
    if (m.name == "map_ea") ea = m.value;
    if (m.name == "map_all") all = m.value;
    if (m.name == "map_random") random = m.value;
  }
  CHECK(std::abs(ea - all) < 1e-6);
  CHECK(ea > random);
  CHECK(fs::exists(dir.path / "selection.csv"));
}

TEST_CASE("compare is deterministic") {
  TempDir a("compare_a"), b("compare_b");
  std::ostringstream log;
  const Config c = resolved("model.num_classes = 3\nmodel.num_samples = 15\ncompare.seeds = [0, 1]\n");
  run_compare(c, a.path, log);
  run_compare(c, b.path, log);
  CHECK(read_text(a.path / "report.json") == read_text(b.path / "report.json"));
  CHECK(read_text(a.path / "compare.csv") == read_text(b.path / "compare.csv"));
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(Errc::DivergenceDetected, "x")) == 1);
  CHECK(exit_code_for(Error(Errc::ConfigInvalid, "x")) == 2);
  CHECK(exit_code_for(Error(Errc::UnknownMetric, "x")) == 2);
  std::ostringstream log;
  CHECK_ERRC(run_command("bogus", default_config(), fs::temp_directory_path(), log), Errc::ConfigInvalid);
}
