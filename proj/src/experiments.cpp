#include "ncl/experiments.hpp"

#include "ncl/io.hpp"
#include "ncl/metrics.hpp"
#include "ncl/objectives.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <random>

namespace ncl {

namespace {

constexpr const char* kDefaults = R"(
seed = 0
output.dir = ncl_out

model {
  preset = one_hot
  num_classes = 5
  num_samples = 50
  overlap = 0.01
  prior = uniform
  prior_values = []
  conditional = []
  seed = -1
}

labels.map = []

encoder {
  kind = tabular
  dims = 0
  transform = relu
  hidden = [32]
  seed = -1
}

objective {
  kind = spectral
  temperature = 1
  cosine = false
  cosine_temperature = 0.5
  mean_negatives = false
  l1 = false
  l1_lambda = 0.01
}

train {
  optimizer = gd
  learning_rate = 0.5
  schedule = constant
  steps = 3000
  batch_size = 0
  num_negatives = 0
  tolerance = 1e-14
  patience = 50
  seed = -1
  snapshot_every = 0
  backtracking = true
  backtrack_factor = 0.5
  max_backtracks = 60
  momentum = 0.9
  beta1 = 0.9
  beta2 = 0.999
  epsilon = 1e-8
  divergence_threshold = 1e12
}

nmf {
  learning_rate = 1
  step_growth = 1.1
  steps = 5000
  tolerance = 1e-16
  patience = 50
}

two_view {
  per_class_visual = 2
  per_class_language = 2
}

features {
  source = phi
  checkpoint = ""
}

metrics {
  threshold = 1e-5
  retrieval_k = 10
  sepin {
    top_k = 1
    batch_size = 64
    num_negatives = 64
    batches = 200
    critic_scale = 40
    mean_negatives = true
    seed = -1
  }
  probe {
    learning_rate = 0.5
    max_steps = 5000
    tolerance = 1e-6
    l2 = 0
  }
}

evaluate.metrics = [sparsity, correlation, class_consistency, expected_activation, retrieval_map, eigen_spectrum, activated_dims, linear_probe, spectral_loss]

verify {
  restarts = 20
  overlaps = [0, 0.01, 0.05]
  overlap_classes = 3
  overlap_samples = 30
  random_models = 10
  random_tables = 10
  rotation_seed = 0
  tolerance = 1e-10
  align_tolerance = 1e-3
}

select {
  n = 0
  pad_dims = 0
  noise = 1e-3
  random_trials = 20
}

compare {
  seeds = [0, 1, 2, 3, 4]
}
)";

using Clock = std::chrono::steady_clock;

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::uint64_t seed_for(const Config& cfg, const std::string& key) {
  const long long v = cfg.get_int(key);
  return v < 0 ? cfg.get_u64("seed") : static_cast<std::uint64_t>(v);
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "gd") return OptimizerKind::Gd;
  if (s == "momentum_gd") return OptimizerKind::MomentumGd;
  if (s == "adam" || s == "adam_like") return OptimizerKind::Adam;
  fail(Errc::ConfigInvalid, "unknown optimizer '" + s + "' (gd, momentum_gd, adam_like)");
}

Schedule parse_schedule(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "cosine") return Schedule::Cosine;
  fail(Errc::ConfigInvalid, "unknown schedule '" + s + "' (constant, cosine)");
}

nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
  return rows;
}

MetricFragment fragment(std::string name, double value, nlohmann::json per_item = nullptr,
                        std::optional<double> se = std::nullopt, nlohmann::json config = nlohmann::json::object()) {
  MetricFragment f;
  f.name = std::move(name);
  f.value = value;
  f.per_item = std::move(per_item);
  f.stderr_value = se;
  f.config = std::move(config);
  return f;
}

SepinConfig sepin_config_from(const Config& cfg) {
  SepinConfig s;
  s.top_k = static_cast<int>(cfg.get_int("metrics.sepin.top_k"));
  s.batch_size = static_cast<int>(cfg.get_int("metrics.sepin.batch_size"));
  s.num_negatives = static_cast<int>(cfg.get_int("metrics.sepin.num_negatives"));
  s.batches = static_cast<int>(cfg.get_int("metrics.sepin.batches"));
  s.critic_scale = cfg.get_double("metrics.sepin.critic_scale");
  s.mean_negatives = cfg.get_bool("metrics.sepin.mean_negatives");
  s.seed = seed_for(cfg, "metrics.sepin.seed");
  return s;
}

ProbeConfig probe_config_from(const Config& cfg) {
  ProbeConfig p;
  p.learning_rate = cfg.get_double("metrics.probe.learning_rate");
  p.max_steps = static_cast<int>(cfg.get_int("metrics.probe.max_steps"));
  p.tolerance = cfg.get_double("metrics.probe.tolerance");
  p.l2 = cfg.get_double("metrics.probe.l2");
  return p;
}

// Even samples train the probe, odd samples test it.
ProbeResult split_probe(const Matrix& features, const std::vector<int>& labels, const ProbeConfig& pc) {
  std::vector<int> tr, te;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) (i % 2 == 0 ? tr : te).push_back(i);
  Matrix ftr(static_cast<Eigen::Index>(tr.size()), features.cols()), fte(static_cast<Eigen::Index>(te.size()), features.cols());
  std::vector<int> ytr, yte;
  for (size_t i = 0; i < tr.size(); ++i) {
    ftr.row(static_cast<Eigen::Index>(i)) = features.row(tr[i]);
    ytr.push_back(labels[static_cast<size_t>(tr[i])]);
  }
  for (size_t i = 0; i < te.size(); ++i) {
    fte.row(static_cast<Eigen::Index>(i)) = features.row(te[i]);
    yte.push_back(labels[static_cast<size_t>(te[i])]);
  }
  return linear_probe(ftr, ytr, fte, yte, pc);
}

double spectral_loss_of(const Matrix& f, const LatentClassModel& model) {
  return spectral_loss_population(f, cooccurrence(model).raw, model.marginal(), false).loss;
}

Matrix random_nonneg_table(int rows, int cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  return m;
}

LatentClassModel random_model(int m, int n, std::uint64_t seed) {
  ModelSpec s;
  s.preset = "random";
  s.num_classes = m;
  s.num_samples = n;
  s.prior = "random";
  s.seed = seed;
  return build_model(s);
}

LatentClassModel overlap_model(const Config& cfg, double eps) {
  ModelSpec s;
  s.preset = eps > 0.0 ? "overlap" : "one_hot";
  s.num_classes = static_cast<int>(cfg.get_int("verify.overlap_classes"));
  s.num_samples = static_cast<int>(cfg.get_int("verify.overlap_samples"));
  s.overlap = eps;
  s.seed = seed_for(cfg, "model.seed");
  return build_model(s);
}

struct TrainedFeatures {
  Matrix values;
  TrainTrace trace;
  std::unique_ptr<Encoder> encoder;
};

TrainedFeatures train_features(const Config& cfg, const LatentClassModel& model,
                               const std::optional<NonNegTransform>& transform, std::uint64_t seed_override,
                               bool use_override) {
  Config local = cfg;
  if (use_override) {
    local.set("encoder.seed", std::to_string(seed_override));
    local.set("train.seed", std::to_string(seed_override));
  }
  TrainedFeatures t;
  t.encoder = encoder_from_config(local, model, transform);
  t.trace = train(*t.encoder, objective_from(local), model, train_config_from(local));
  t.values = t.encoder->evaluate_all().values;
  return t;
}

// Source of the feature table evaluated by `evaluate` and `select`.
Matrix source_features(const Config& cfg, const LatentClassModel& model, ExperimentReport& report, std::ostream& log) {
  const std::string source = cfg.get_string("features.source");
  if (source == "phi") return ground_truth_phi(model, identity_permutation(model.num_classes()), feature_dims(cfg, model)).values;
  if (source == "train") {
    log << "training encoder for evaluation\n";
    return train_features(cfg, model, transform_from_config(cfg), 0, false).values;
  }
  if (source == "checkpoint") {
    const std::string path = cfg.get_string("features.checkpoint");
    require(!path.empty() && std::filesystem::exists(path), Errc::ConfigInvalid,
            "features.checkpoint '" + path + "' does not exist");
    report.add_input("checkpoint", read_text(path));
    auto encoders = load_checkpoint(path);
    require(!encoders.empty(), Errc::ConfigInvalid, "checkpoint holds no encoder");
    require(encoders.front()->num_samples() == model.num_samples(), Errc::ConfigInvalid,
            "checkpoint encoder covers a different sample space than the model");
    return encoders.front()->evaluate_all().values;
  }
  fail(Errc::ConfigInvalid, "unknown features.source '" + source + "' (phi, train, checkpoint)");
}

}  // namespace

const Config& default_config() {
  static const Config cfg = Config::parse(kDefaults, "<defaults>");
  return cfg;
}

Config resolve_config(const Config& user) {
  Config out = default_config();
  for (const auto& [k, v] : user.entries()) {
    require(default_config().has(k), Errc::ConfigInvalid, "unknown config key '" + k + "'");
    out.set(k, v);
  }
  return out;
}

LatentClassModel model_from_config(const Config& cfg) {
  ModelSpec s;
  s.preset = cfg.get_string("model.preset");
  s.num_classes = static_cast<int>(cfg.get_int("model.num_classes"));
  s.num_samples = static_cast<int>(cfg.get_int("model.num_samples"));
  s.overlap = cfg.get_double("model.overlap");
  s.prior = cfg.get_string("model.prior");
  s.prior_values = cfg.get_doubles("model.prior_values");
  if (cfg.raw("model.conditional") != "[]") s.conditional = cfg.get_matrix("model.conditional");
  s.seed = seed_for(cfg, "model.seed");
  if (s.preset == "explicit") {
    s.num_classes = static_cast<int>(s.conditional.rows());
    s.num_samples = static_cast<int>(s.conditional.cols());
  }
  return build_model(s);
}

LabelMap labels_from_config(const Config& cfg, const LatentClassModel& model) {
  const auto raw = cfg.get_ints("labels.map");
  if (raw.empty()) return LabelMap::identity(model.num_classes());
  require(static_cast<int>(raw.size()) == model.num_classes(), Errc::ConfigInvalid,
          "labels.map needs one label per latent class");
  std::vector<int> map(raw.begin(), raw.end());
  const int count = *std::max_element(map.begin(), map.end()) + 1;
  return LabelMap(map, count);
}

int feature_dims(const Config& cfg, const LatentClassModel& model) {
  const long long k = cfg.get_int("encoder.dims");
  require(k >= 0, Errc::ConfigInvalid, "encoder.dims must be >= 0");
  return k == 0 ? model.num_classes() : static_cast<int>(k);
}

std::optional<NonNegTransform> transform_from_config(const Config& cfg) {
  const std::string t = cfg.get_string("encoder.transform");
  if (t == "none") return std::nullopt;
  return parse_transform(t);
}

std::unique_ptr<Encoder> encoder_from_config(const Config& cfg, const LatentClassModel& model,
                                             const std::optional<NonNegTransform>& transform) {
  const std::string kind = cfg.get_string("encoder.kind");
  const int k = feature_dims(cfg, model);
  const std::uint64_t seed = seed_for(cfg, "encoder.seed");
  if (kind == "tabular") return std::make_unique<TabularEncoder>(model.num_samples(), k, transform, seed);
  if (kind == "mlp") {
    std::vector<int> sizes{model.num_samples()};
    for (long long h : cfg.get_ints("encoder.hidden")) {
      require(h >= 1, Errc::ConfigInvalid, "encoder.hidden widths must be >= 1");
      sizes.push_back(static_cast<int>(h));
    }
    sizes.push_back(k);
    return std::make_unique<MlpEncoder>(sizes, transform, seed);
  }
  fail(Errc::ConfigInvalid, "unknown encoder.kind '" + kind + "' (tabular, mlp)");
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig t;
  t.optimizer = parse_optimizer(cfg.get_string("train.optimizer"));
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.schedule = parse_schedule(cfg.get_string("train.schedule"));
  t.steps = static_cast<int>(cfg.get_int("train.steps"));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  t.num_negatives = static_cast<int>(cfg.get_int("train.num_negatives"));
  t.tolerance = cfg.get_double("train.tolerance");
  t.patience = static_cast<int>(cfg.get_int("train.patience"));
  t.seed = seed_for(cfg, "train.seed");
  t.snapshot_every = static_cast<int>(cfg.get_int("train.snapshot_every"));
  t.backtracking = cfg.get_bool("train.backtracking");
  t.backtrack_factor = cfg.get_double("train.backtrack_factor");
  t.max_backtracks = static_cast<int>(cfg.get_int("train.max_backtracks"));
  t.momentum = cfg.get_double("train.momentum");
  t.beta1 = cfg.get_double("train.beta1");
  t.beta2 = cfg.get_double("train.beta2");
  t.epsilon = cfg.get_double("train.epsilon");
  t.divergence_threshold = cfg.get_double("train.divergence_threshold");
  validate(t);
  return t;
}

TrainConfig nmf_config_from(const Config& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.get_double("nmf.learning_rate");
  t.step_growth = cfg.get_double("nmf.step_growth");
  t.steps = static_cast<int>(cfg.get_int("nmf.steps"));
  t.tolerance = cfg.get_double("nmf.tolerance");
  t.patience = static_cast<int>(cfg.get_int("nmf.patience"));
  t.seed = seed_for(cfg, "train.seed");
  validate(t);
  return t;
}

ObjectiveSpec objective_from(const Config& cfg) {
  ObjectiveSpec o;
  const std::string kind = cfg.get_string("objective.kind");
  if (kind == "spectral") {
    o.kind = ObjectiveSpec::Kind::Spectral;
  } else if (kind == "infonce") {
    o.kind = ObjectiveSpec::Kind::InfoNce;
  } else {
    fail(Errc::ConfigInvalid, "objective.kind '" + kind + "' does not train a single encoder here");
  }
  o.infonce.cosine = cfg.get_bool("objective.cosine");
  o.infonce.temperature =
      o.infonce.cosine ? cfg.get_double("objective.cosine_temperature") : cfg.get_double("objective.temperature");
  require(o.infonce.temperature > 0.0, Errc::ConfigInvalid, "InfoNCE temperature must be > 0");
  o.infonce.mean_negatives = cfg.get_bool("objective.mean_negatives");
  o.l1_lambda = cfg.get_bool("objective.l1") ? cfg.get_double("objective.l1_lambda") : 0.0;
  require(o.l1_lambda >= 0.0, Errc::ConfigInvalid, "objective.l1_lambda must be >= 0");
  return o;
}

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = {
      "sparsity",       "correlation",    "class_consistency", "expected_activation", "retrieval_map",
      "sepin",          "sepin_normalized", "alignment",       "eigen_spectrum",      "activated_dims",
      "linear_probe",   "bayes_agreement", "spectral_loss",    "nmf_residual",        "cross_moment",
      "dead_dims"};
  return names;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"generate", "train", "evaluate", "verify", "select", "compare"};
  return names;
}

// ---- generate ---------------------------------------------------------------

ExperimentReport run_generate(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto t0 = Clock::now();
  ExperimentReport report("generate", cfg);
  const LatentClassModel model = model_from_config(cfg);
  const auto co = cooccurrence(model);
  const auto phi = ground_truth_phi(model, identity_permutation(model.num_classes()), feature_dims(cfg, model));
  write_csv(out / "prior.csv", model.class_prior().transpose());
  write_csv(out / "conditional.csv", model.conditional());
  write_csv(out / "marginal.csv", model.marginal().transpose());
  write_csv(out / "posterior.csv", model.posterior());
  write_csv(out / "cooccurrence.csv", co.raw);
  write_csv(out / "normalized.csv", co.normalized);
  write_csv(out / "phi.csv", phi.values);

  Config explicit_model;
  explicit_model.set("model.preset", "explicit");
  std::string prior = "[";
  for (Eigen::Index c = 0; c < model.class_prior().size(); ++c)
    prior += (c ? ", " : "") + format_double(model.class_prior()(c));
  explicit_model.set("model.prior_values", prior + "]");
  std::string cond = "[";
  for (Eigen::Index c = 0; c < model.conditional().rows(); ++c) {
    cond += c ? ", [" : "[";
    for (Eigen::Index x = 0; x < model.conditional().cols(); ++x)
      cond += (x ? ", " : "") + format_double(model.conditional()(c, x));
    cond += "]";
  }
  explicit_model.set("model.conditional", cond + "]");
  write_text(out / "model.cfg", explicit_model.serialize());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(co.normalized, Eigen::EigenvaluesOnly);
  const Vector spectrum = eig.eigenvalues().reverse();
  int rank = 0;
  for (Eigen::Index i = 0; i < spectrum.size(); ++i)
    if (std::abs(spectrum(i)) > 1e-10) ++rank;
  report.add_metric(fragment("equivalence_constant", equivalence_constant(model)));
  report.add_metric(fragment("class_overlap", model.num_classes() >= 2 ? class_overlap(model) : 0.0));
  report.add_metric(fragment("min_class_prior", model.min_class_prior()));
  report.add_metric(fragment("normalized_rank", rank, to_json(spectrum)));
  report.set("files", {"prior.csv", "conditional.csv", "marginal.csv", "posterior.csv", "cooccurrence.csv",
                       "normalized.csv", "phi.csv", "model.cfg"});
  log << "model: m=" << model.num_classes() << " N=" << model.num_samples() << " written to " << out.string() << "\n";
  report.time("generate", seconds_since(t0));
  report.write(out);
  return report;
}

// ---- train ------------------------------------------------------------------

ExperimentReport run_train(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto t0 = Clock::now();
  ExperimentReport report("train", cfg);
  const LatentClassModel model = model_from_config(cfg);
  const std::string kind = cfg.get_string("objective.kind");
  const auto transform = transform_from_config(cfg);

  if (kind == "spectral" || kind == "infonce") {
    auto encoder = encoder_from_config(cfg, model, transform);
    const TrainConfig tc = train_config_from(cfg);
    const TrainTrace trace = train(*encoder, objective_from(cfg), model, tc);
    const Matrix f = encoder->evaluate_all().values;
    save_checkpoint(out / "checkpoint.bin", {encoder.get()});
    write_trace_csv(out / "trace.csv", trace);
    write_csv(out / "features.csv", f);
    const double loss = spectral_loss_of(f, model);
    report.add_metric(fragment("final_loss", trace.steps() ? trace.loss.back() : 0.0));
    report.add_metric(fragment("population_spectral_loss", loss));
    report.add_metric(fragment("loss_gap", loss + equivalence_constant(model)));
    report.add_metric(fragment("steps", static_cast<double>(trace.steps())));
    report.add_metric(fragment("converged", trace.converged ? 1.0 : 0.0));
    report.add_metric(fragment("dead_dims", dead_dimensions(f)));
    report.add_metric(fragment("sparsity", sparsity(f, cfg.get_double("metrics.threshold")).mean));
    log << "trained " << encoder->kind() << " encoder: " << trace.steps() << " steps, loss " << format_double(loss)
        << "\n";
  } else if (kind == "nmf") {
    const auto co = cooccurrence(model);
    const NmfResult r = projected_gradient_nmf(co.normalized, model.marginal(), feature_dims(cfg, model), nmf_config_from(cfg));
    write_csv(out / "factor.csv", r.factor.weighted());
    write_csv(out / "features.csv", r.factor.values);
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < r.residual.size(); ++i) rows.push_back({std::to_string(i + 1), format_double(r.residual[i])});
    write_table_csv(out / "trace.csv", {"step", "residual"}, rows);
    report.add_metric(fragment("residual", r.residual.empty() ? 0.0 : r.residual.back()));
    report.add_metric(fragment("steps", static_cast<double>(r.residual.size())));
    const auto phi = ground_truth_phi(model, identity_permutation(model.num_classes()));
    if (r.factor.dims() == phi.dims())
      report.add_metric(fragment("alignment_residual", identifiability_align(r.factor.values, phi.values).residual));
    log << "NMF residual " << format_double(r.residual.empty() ? 0.0 : r.residual.back()) << "\n";
  } else if (kind == "mmncl") {
    const TwoViewModel two = build_one_hot_two_view(model.num_classes(),
                                                    static_cast<int>(cfg.get_int("two_view.per_class_visual")),
                                                    static_cast<int>(cfg.get_int("two_view.per_class_language")));
    const int k = feature_dims(cfg, model);
    const std::uint64_t seed = seed_for(cfg, "encoder.seed");
    TabularEncoder visual(two.visual().num_samples(), k, transform, seed);
    TabularEncoder language(two.language().num_samples(), k, transform, seed + 1);
    const TrainTrace trace = train_asymmetric(visual, language, two, train_config_from(cfg));
    save_checkpoint(out / "checkpoint.bin", {&visual, &language});
    write_trace_csv(out / "trace.csv", trace);
    write_csv(out / "visual_features.csv", visual.evaluate_all().values);
    write_csv(out / "language_features.csv", language.evaluate_all().values);
    const double residual = asymmetric_residual(visual, language, two);
    report.add_metric(fragment("asymmetric_residual", residual));
    report.add_metric(fragment("final_loss", trace.steps() ? trace.loss.back() : 0.0));
    report.add_metric(fragment("equivalence_constant", mm_equivalence_constant(two)));
    report.add_metric(fragment("steps", static_cast<double>(trace.steps())));
    log << "two-view residual " << format_double(residual) << "\n";
  } else if (kind == "ce" || kind == "nce") {
    const LabelMap labels = labels_from_config(cfg, model);
    const std::vector<int> y = bayes_labels(model, labels);
    std::vector<int> sizes{model.num_samples()};
    for (long long h : cfg.get_ints("encoder.hidden")) sizes.push_back(static_cast<int>(h));
    const int k = feature_dims(cfg, model);
    sizes.push_back(k);
    const std::uint64_t seed = seed_for(cfg, "encoder.seed");
    MlpEncoder encoder(sizes, std::nullopt, seed);
    Rng rng(seed + 7);
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
    std::optional<NonNegTransform> nce;
    if (kind == "nce") nce = transform ? *transform : NonNegTransform{TransformKind::Relu};
    // Non-negative start for NCE so no class column begins dead under relu.
    Matrix embeddings(k, labels.label_count());
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j)
      for (Eigen::Index i = 0; i < embeddings.rows(); ++i) embeddings(i, j) = nce ? std::abs(g(rng)) : g(rng);
    const Matrix inputs = encoder.embedding();
    const TrainTrace trace = train_supervised(encoder, embeddings, inputs, y, nce, train_config_from(cfg));
    Matrix f = encoder.evaluate_coordinates(inputs).values;
    Matrix w = embeddings;
    if (nce) {
      f = forward(*nce, f);
      w = forward(*nce, w);
    }
    Matrix logits = f * w;
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      if (argmax_with_ties(logits.row(i).transpose()) == y[static_cast<size_t>(i)]) ++correct;
    save_checkpoint(out / "checkpoint.bin", {&encoder});
    write_csv(out / "class_embeddings.csv", w);
    write_trace_csv(out / "trace.csv", trace);
    report.add_metric(fragment("train_accuracy", static_cast<double>(correct) / static_cast<double>(logits.rows())));
    report.add_metric(fragment("final_loss", trace.steps() ? trace.loss.back() : 0.0));
    report.add_metric(fragment("embedding_min", w.minCoeff()));
    log << kind << " training accuracy " << format_double(static_cast<double>(correct) / logits.rows()) << "\n";
  } else {
    fail(Errc::ConfigInvalid, "unknown objective.kind '" + kind + "' (spectral, infonce, nmf, mmncl, ce, nce)");
  }
  report.time("train", seconds_since(t0));
  report.write(out);
  return report;
}

// ---- evaluate ---------------------------------------------------------------

ExperimentReport run_evaluate(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto requested = cfg.get_strings("evaluate.metrics");
  for (const auto& name : requested)
    require(std::find(known_metrics().begin(), known_metrics().end(), name) != known_metrics().end(),
            Errc::UnknownMetric, "unknown metric '" + name + "'");

  ExperimentReport report("evaluate", cfg);
  const LatentClassModel model = model_from_config(cfg);
  const LabelMap labels = labels_from_config(cfg, model);
  const std::vector<int> y = bayes_labels(model, labels);
  const Matrix f = source_features(cfg, model, report, log);
  const double threshold = cfg.get_double("metrics.threshold");
  const nlohmann::json thr = {{"threshold", threshold}};

  for (const auto& name : requested) {
    if (name == "sparsity") {
      const auto s = sparsity(f, threshold);
      report.add_metric(fragment(name, s.mean, s.per_sample, std::nullopt, thr));
    } else if (name == "correlation") {
      const auto c = correlation_matrix(f, threshold);
      report.add_metric(fragment(name, c.max_off_diagonal(), to_json(c.matrix), std::nullopt,
                                 {{"threshold", threshold}, {"convention", "sum"}, {"dead_dims", c.dead}}));
    } else if (name == "class_consistency") {
      const auto c = class_consistency(f, y, threshold);
      report.add_metric(fragment(name, c.mean, c.rates, std::nullopt,
                                 {{"threshold", threshold}, {"dims", c.dims}, {"empty_dims", c.empty_dims}}));
    } else if (name == "expected_activation") {
      const auto ea = expected_activation(f, &model.marginal());
      report.add_metric(fragment(name, ea.values.maxCoeff(), to_json(ea.values), std::nullopt,
                                 {{"weights", "marginal"}, {"zero_rows", ea.zero_rows},
                                  {"ranking", select_top(ea.values, static_cast<int>(ea.values.size()))}}));
    } else if (name == "retrieval_map") {
      const int k = static_cast<int>(cfg.get_int("metrics.retrieval_k"));
      const auto r = retrieval_map(f, y, k);
      report.add_metric(fragment(name, r.map, r.per_query, std::nullopt, {{"k", k}, {"zero_relevant", r.zero_relevant}}));
    } else if (name == "sepin" || name == "sepin_normalized") {
      SepinConfig sc = sepin_config_from(cfg);
      sc.normalize = name == "sepin_normalized";
      const auto r = sepin_at_k(f, model, sc);
      report.add_metric(fragment(name, r.score, r.per_dim, r.score_stderr,
                                 {{"top_k", sc.top_k}, {"batches", sc.batches}, {"batch_size", sc.batch_size},
                                  {"num_negatives", sc.num_negatives}, {"critic_scale", sc.critic_scale},
                                  {"normalize", sc.normalize}, {"mean_negatives", sc.mean_negatives},
                                  {"per_dim_stderr", r.per_dim_stderr}, {"order", r.order}}));
    } else if (name == "alignment") {
      const auto phi = ground_truth_phi(model, identity_permutation(model.num_classes()), static_cast<int>(f.cols()));
      require(f.cols() == model.num_classes(), Errc::ConfigInvalid, "alignment needs k == number of classes");
      const auto a = identifiability_align(f, phi.values);
      report.add_metric(fragment(name, a.residual, to_json(a.scale), std::nullopt, {{"permutation", a.permutation}}));
    } else if (name == "eigen_spectrum") {
      const Vector ev = eigen_spectrum(f, model.marginal());
      report.add_metric(fragment(name, ev(0), to_json(ev)));
    } else if (name == "activated_dims") {
      const auto h = activated_dim_histogram(f, threshold);
      const double mean = std::accumulate(h.per_sample.begin(), h.per_sample.end(), 0.0) / h.per_sample.size();
      report.add_metric(fragment(name, mean, h.counts, std::nullopt, thr));
    } else if (name == "linear_probe") {
      const auto p = split_probe(f, y, probe_config_from(cfg));
      report.add_metric(fragment(name, p.test_accuracy, nullptr, std::nullopt,
                                 {{"train_accuracy", p.train_accuracy}, {"split", "even/odd"}, {"steps", p.steps}}));
    } else if (name == "bayes_agreement") {
      const Matrix w = bayes_classifier_weights(model, labels, identity_permutation(model.num_classes()),
                                                static_cast<int>(f.cols()));
      report.add_metric(fragment(name, bayes_agreement(w, f, model, labels)));
    } else if (name == "spectral_loss") {
      const double loss = spectral_loss_of(f, model);
      report.add_metric(fragment(name, loss, nullptr, std::nullopt, {{"optimum", -equivalence_constant(model)}}));
    } else if (name == "nmf_residual") {
      FeatureTable t(f, false);
      t.weight_by(model.marginal());
      report.add_metric(fragment(name, mf_objective(cooccurrence(model).normalized, t, false).loss));
    } else if (name == "cross_moment") {
      const double bound = model.num_classes() >= 2 ? class_overlap(model) / model.min_class_prior() : 0.0;
      report.add_metric(fragment(name, weighted_cross_moment(f, model.marginal()), nullptr, std::nullopt, {{"bound", bound}}));
    } else if (name == "dead_dims") {
      report.add_metric(fragment(name, dead_dimensions(f, threshold), nullptr, std::nullopt, thr));
    }
  }
  log << "evaluated " << requested.size() << " metrics\n";
  report.time("evaluate", seconds_since(t0));
  report.write(out);
  return report;
}

// ---- verify -----------------------------------------------------------------

ExperimentReport run_verify(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto t0 = Clock::now();
  ExperimentReport report("verify", cfg);
  const double tol = cfg.get_double("verify.tolerance");
  const double align_tol = cfg.get_double("verify.align_tolerance");
  const LatentClassModel model = model_from_config(cfg);
  const int m = model.num_classes();
  const int n = model.num_samples();
  const auto perm = identity_permutation(m);
  const auto phi = ground_truth_phi(model, perm);
  const bool one_hot = m >= 2 && class_overlap(model) == 0.0;
  const std::uint64_t seed = cfg.get_u64("seed");

  std::vector<LatentClassModel> extra;
  for (double eps : cfg.get_doubles("verify.overlaps")) extra.push_back(overlap_model(cfg, eps));
  const int random_models = static_cast<int>(cfg.get_int("verify.random_models"));
  for (int i = 0; i < random_models; ++i) {
    Rng rng(seed * 1000 + static_cast<std::uint64_t>(i));
    std::uniform_int_distribution<int> mm(2, 8), nn(8, 64);
    const int mi = mm(rng);
    extra.push_back(random_model(mi, std::max(nn(rng), mi), seed * 1000 + static_cast<std::uint64_t>(i)));
  }

  // T1: rotation symmetry vs non-negativity.
  {
    const Matrix r = random_rotation(m, cfg.get_u64("verify.rotation_seed"));
    auto loss = [&](const Matrix& f) { return spectral_loss_of(f, model); };
    const Matrix cl = train_features(cfg, model, std::nullopt, 0, false).values;
    const Matrix ncl = train_features(cfg, model, NonNegTransform{TransformKind::Relu}, 0, false).values;
    const auto rc = rotation_symmetry_check(cl, r, loss);
    const auto rn = rotation_symmetry_check(ncl, r, loss);
    report.add_check(check_less("T1.cl_rotation_loss_delta", rc.loss_delta, tol));
    report.add_check(check_less("T1.cl_rotated_min_entry", rc.min_entry, -1e-3));
    report.add_check(check_less("T1.ncl_rotation_loss_delta", rn.loss_delta, tol));
    report.add_check(check_less("T1.ncl_rotated_min_entry", rn.min_entry, 0.0,
                                is_permutation_like(r) ? "rotation is a permutation" : "non-permutation rotation"));
    if (m >= 2) {
      const auto planar = rotation_symmetry_check(phi.values, planar_rotation(m, 0, 1, std::acos(-1.0) / 4), loss);
      report.add_check(check_less("T1.phi_planar45_min_entry", planar.min_entry, 0.0));
    }
  }

  // T2: L_NMF - L_NCL == const.
  {
    double worst = 0.0;
    const int tables = static_cast<int>(cfg.get_int("verify.random_tables"));
    std::vector<const LatentClassModel*> all{&model};
    for (const auto& e : extra) all.push_back(&e);
    Rng rng(seed + 17);
    for (const auto* mod : all) {
      const auto co = cooccurrence(*mod);
      const double c = equivalence_constant(*mod);
      for (int t = 0; t < tables; ++t) {
        FeatureTable ft(random_nonneg_table(mod->num_samples(), mod->num_classes() + t % 3, rng), true);
        ft.weight_by(mod->marginal());
        const double nmf = nmf_objective(co.normalized, ft, false).loss;
        const double ncl = spectral_loss_population(ft.values, co.raw, mod->marginal(), false).loss;
        worst = std::max(worst, std::abs(nmf - ncl - c) / std::max(1.0, c));
      }
    }
    report.add_check(check_less("T2.equivalence_gap", worst, tol, std::to_string(all.size()) + " models"));
  }

  // T3: phi is optimal.
  {
    double gap = 0.0, resid = 0.0;
    std::vector<const LatentClassModel*> all{&model};
    for (const auto& e : extra) all.push_back(&e);
    for (const auto* mod : all) {
      const auto p = ground_truth_phi(*mod, identity_permutation(mod->num_classes()));
      gap = std::max(gap, std::abs(spectral_loss_of(p.values, *mod) + equivalence_constant(*mod)));
      resid = std::max(resid, nmf_objective(cooccurrence(*mod).normalized, p, false).loss);
    }
    report.add_check(check_less("T3.phi_loss_gap", gap, tol));
    report.add_check(check_less("T3.phi_nmf_residual", resid, tol));
  }

  // T4: one-hot structure.
  if (one_hot) {
    const Matrix second = phi.values.transpose() * model.marginal().asDiagonal() * phi.values;
    report.add_check(check_less("T4.second_moment_identity", (second - Matrix::Identity(m, m)).cwiseAbs().maxCoeff(), tol));
    int bad_rows = 0;
    for (Eigen::Index x = 0; x < n; ++x)
      if ((phi.values.row(x).array() > kZeroThreshold).count() != 1) ++bad_rows;
    report.add_check(check_less_equal("T4.rows_not_one_hot", bad_rows, 0.0));
    report.add_check(check_near("T4.mean_sparsity", sparsity(phi.values).mean, static_cast<double>(m - 1) / m, 0.0));
    const Vector ev = eigen_spectrum(phi.values, model.marginal());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cooccurrence(model).normalized, Eigen::EigenvaluesOnly);
    const Vector spec = eig.eigenvalues().reverse();
    const double tail = spec.size() > m ? spec.tail(spec.size() - m).cwiseAbs().maxCoeff() : 0.0;
    report.add_check(check_less("T4.normalized_rank_tail", tail, tol));
    report.add_check(check_less("T4.phi_spectrum_ones", (ev - Vector::Ones(m)).cwiseAbs().maxCoeff(), tol));
  }

  // T5: Bayes optimality.
  {
    double worst = 1.0;
    std::vector<const LatentClassModel*> all{&model};
    for (const auto& e : extra) all.push_back(&e);
    for (const auto* mod : all) {
      const LabelMap lm = LabelMap::identity(mod->num_classes());
      const auto p = identity_permutation(mod->num_classes());
      worst = std::min(worst, bayes_agreement(bayes_classifier_weights(*mod, lm, p), ground_truth_phi(*mod, p).values, *mod, lm));
    }
    report.add_check(check_near("T5.bayes_agreement_min", worst, 1.0, 0.0, std::to_string(all.size()) + " models"));
    const LabelMap lm = labels_from_config(cfg, model);
    const auto pr = split_probe(phi.values, bayes_labels(model, lm), probe_config_from(cfg));
    report.add_check(check_near("T5.probe_accuracy_phi", pr.test_accuracy, 1.0, 0.0));
  }

  // T6: uniqueness across restarts.
  if (one_hot) {
    const int restarts = static_cast<int>(cfg.get_int("verify.restarts"));
    double worst_ncl = 0.0, worst_nmf = 0.0;
    const auto co = cooccurrence(model);
    for (int r = 0; r < restarts; ++r) {
      const auto s = seed + static_cast<std::uint64_t>(r);
      const auto t = train_features(cfg, model, NonNegTransform{TransformKind::Relu}, s, true);
      worst_ncl = std::max(worst_ncl, identifiability_align(t.values, phi.values).residual);
      TrainConfig nc = nmf_config_from(cfg);
      nc.seed = s;
      const auto f = projected_gradient_nmf(co.normalized, model.marginal(), m, nc);
      worst_nmf = std::max(worst_nmf, identifiability_align(f.factor.values, phi.values).residual);
    }
    report.add_check(check_less("T6.ncl_restart_alignment_max", worst_ncl, align_tol, std::to_string(restarts) + " restarts"));
    report.add_check(check_less("T6.nmf_restart_alignment_max", worst_nmf, align_tol, std::to_string(restarts) + " restarts"));
  }

  // Eq. 8 style orthogonality bound on overlap models.
  for (double eps : cfg.get_doubles("verify.overlaps")) {
    const LatentClassModel mod = overlap_model(cfg, eps);
    const auto p = ground_truth_phi(mod, identity_permutation(mod.num_classes()));
    const double bound = class_overlap(mod) / mod.min_class_prior();
    report.add_check(check_less_equal("E8.cross_moment_eps_" + short_number(eps),
                                      weighted_cross_moment(p.values, mod.marginal()) - bound, 1e-9,
                                      "bound " + format_double(bound)));
  }

  int failed = 0;
  for (const auto& c : report.checks()) {
    log << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << format_double(c.value) << " " << c.relation << " "
        << format_double(c.tolerance) << "\n";
    if (!c.pass) ++failed;
  }
  log << report.checks().size() - failed << "/" << report.checks().size() << " theorem checks pass\n";
  report.add_metric(fragment("checks_failed", failed));
  report.time("verify", seconds_since(t0));
  report.write(out);
  return report;
}

// ---- select -----------------------------------------------------------------

ExperimentReport run_select(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto t0 = Clock::now();
  ExperimentReport report("select", cfg);
  const LatentClassModel model = model_from_config(cfg);
  const LabelMap labels = labels_from_config(cfg, model);
  const std::vector<int> y = bayes_labels(model, labels);
  Matrix f = source_features(cfg, model, report, log);

  const long long pad = cfg.get_int("select.pad_dims");
  require(pad >= 0, Errc::ConfigInvalid, "select.pad_dims must be >= 0");
  if (pad > 0) {
    // Low-amplitude non-negative noise columns.
    Rng rng(cfg.get_u64("seed") + 101);
    std::uniform_real_distribution<double> u(0.0, cfg.get_double("select.noise"));
    Matrix padded(f.rows(), f.cols() + pad);
    padded.leftCols(f.cols()) = f;
    for (Eigen::Index j = f.cols(); j < padded.cols(); ++j)
      for (Eigen::Index i = 0; i < padded.rows(); ++i) padded(i, j) = u(rng);
    f = std::move(padded);
  }
  const int k = static_cast<int>(f.cols());
  const long long nn = cfg.get_int("select.n");
  const int n = nn == 0 ? model.num_classes() : static_cast<int>(nn);
  require(n >= 1 && n <= k, Errc::ConfigInvalid, "select.n must lie in 1..k");
  const int depth = static_cast<int>(cfg.get_int("metrics.retrieval_k"));
  const ProbeConfig pc = probe_config_from(cfg);

  const auto ea = expected_activation(f, &model.marginal());
  const auto top = select_top(ea.values, n);
  auto evaluate = [&](const Matrix& g) {
    return std::pair{retrieval_map(g, y, depth).map, split_probe(g, y, pc).test_accuracy};
  };
  const auto [map_all, acc_all] = evaluate(f);
  const auto [map_ea, acc_ea] = evaluate(select_columns(f, top));

  const int trials = static_cast<int>(cfg.get_int("select.random_trials"));
  require(trials >= 1, Errc::ConfigInvalid, "select.random_trials must be >= 1");
  std::vector<double> maps, accs;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"all", std::to_string(k), format_double(map_all), format_double(acc_all)});
  rows.push_back({"ea", std::to_string(n), format_double(map_ea), format_double(acc_ea)});
  for (int t = 0; t < trials; ++t) {
    Rng rng(cfg.get_u64("seed") + 1000 + static_cast<std::uint64_t>(t));
    std::vector<int> cols(static_cast<size_t>(k));
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    cols.resize(static_cast<size_t>(n));
    std::sort(cols.begin(), cols.end());
    const auto [mp, ac] = evaluate(select_columns(f, cols));
    maps.push_back(mp);
    accs.push_back(ac);
    rows.push_back({"random_" + std::to_string(t), std::to_string(n), format_double(mp), format_double(ac)});
  }
  const double map_rand = std::accumulate(maps.begin(), maps.end(), 0.0) / trials;
  const double acc_rand = std::accumulate(accs.begin(), accs.end(), 0.0) / trials;
  write_table_csv(out / "selection.csv", {"selection", "dims", "map", "probe_accuracy"}, rows);

  report.add_metric(fragment("expected_activation", ea.values.maxCoeff(), to_json(ea.values), std::nullopt,
                             {{"ranking", select_top(ea.values, k)}, {"zero_rows", ea.zero_rows}}));
  report.add_metric(fragment("map_all", map_all, nullptr, std::nullopt, {{"k", depth}}));
  report.add_metric(fragment("map_ea", map_ea, nullptr, std::nullopt, {{"dims", top}}));
  report.add_metric(fragment("map_random", map_rand, maps, std::nullopt, {{"trials", trials}}));
  report.add_metric(fragment("probe_all", acc_all));
  report.add_metric(fragment("probe_ea", acc_ea));
  report.add_metric(fragment("probe_random", acc_rand, accs));
  log << "mAP all " << format_double(map_all) << " ea " << format_double(map_ea) << " random " << format_double(map_rand)
      << "\n";
  report.time("select", seconds_since(t0));
  report.write(out);
  return report;
}

// ---- compare ----------------------------------------------------------------

ExperimentReport run_compare(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto t0 = Clock::now();
  ExperimentReport report("compare", cfg);
  const LatentClassModel model = model_from_config(cfg);
  const LabelMap labels = labels_from_config(cfg, model);
  const std::vector<int> y = bayes_labels(model, labels);
  const double threshold = cfg.get_double("metrics.threshold");
  const double constant = equivalence_constant(model);
  const auto phi = ground_truth_phi(model, identity_permutation(model.num_classes()), feature_dims(cfg, model));
  auto ncl_transform = transform_from_config(cfg);
  if (!ncl_transform) ncl_transform = NonNegTransform{TransformKind::Relu};

  const std::vector<std::string> columns = {"loss_gap", "sparsity", "max_correlation", "class_consistency",
                                            "dead_dims", "alignment_residual", "retrieval_map", "min_entry"};
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::vector<double>> per_method;
  for (long long s : cfg.get_ints("compare.seeds")) {
    require(s >= 0, Errc::ConfigInvalid, "compare.seeds must be >= 0");
    for (const bool nonneg : {false, true}) {
      const std::string method = nonneg ? "ncl" : "cl";
      const auto t = train_features(cfg, model, nonneg ? ncl_transform : std::nullopt, static_cast<std::uint64_t>(s), true);
      const Matrix& f = t.values;
      std::vector<double> vals;
      vals.push_back(spectral_loss_of(f, model) + constant);
      vals.push_back(sparsity(f, threshold).mean);
      vals.push_back(dead_dimensions(f, threshold) < f.cols() ? correlation_matrix(f, threshold).max_off_diagonal() : 0.0);
      vals.push_back(class_consistency(f, y, threshold).mean);
      vals.push_back(dead_dimensions(f, threshold));
      vals.push_back(identifiability_align(f, phi.values).residual);
      bool zero_row = false;
      for (Eigen::Index x = 0; x < f.rows(); ++x) zero_row = zero_row || f.row(x).norm() == 0.0;
      vals.push_back(zero_row ? 0.0 : retrieval_map(f, y, static_cast<int>(cfg.get_int("metrics.retrieval_k"))).map);
      vals.push_back(f.minCoeff());
      std::vector<std::string> row{method, std::to_string(s)};
      for (size_t i = 0; i < vals.size(); ++i) {
        row.push_back(format_double(vals[i]));
        per_method[method + "." + columns[i]].push_back(vals[i]);
      }
      rows.push_back(row);
    }
  }
  std::vector<std::string> header{"method", "seed"};
  header.insert(header.end(), columns.begin(), columns.end());
  write_table_csv(out / "compare.csv", header, rows);
  for (const auto& [name, vals] : per_method) {
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    report.add_metric(fragment(name, mean, vals, std::nullopt, {{"aggregate", "mean over seeds"}}));
  }
  report.set("table", {{"header", header}, {"rows", rows}});
  log << "compared CL and NCL over " << cfg.get_ints("compare.seeds").size() << " seeds\n";
  report.time("compare", seconds_since(t0));
  report.write(out);
  return report;
}

int run_command(const std::string& command, const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  std::filesystem::create_directories(out);
  if (command == "generate") return run_generate(cfg, out, log), 0;
  if (command == "train") return run_train(cfg, out, log), 0;
  if (command == "evaluate") return run_evaluate(cfg, out, log), 0;
  if (command == "verify") return run_verify(cfg, out, log).all_pass() ? 0 : 1;
  if (command == "select") return run_select(cfg, out, log), 0;
  if (command == "compare") return run_compare(cfg, out, log), 0;
  fail(Errc::ConfigInvalid, "unknown subcommand '" + command + "'");
}

int exit_code_for(const Error& e) { return e.code() == Errc::DivergenceDetected ? 1 : 2; }

}  // namespace ncl
