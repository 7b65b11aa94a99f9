#include "ncl/training.hpp"

#include "ncl/error.hpp"
#include "ncl/kernels.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>

namespace ncl {

void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate >= 0.0 && std::isfinite(cfg.learning_rate), Errc::ConfigInvalid,
          "learning rate must be finite and >= 0");
  require(cfg.steps >= 0, Errc::ConfigInvalid, "step budget must be >= 0");
  require(cfg.batch_size >= 0 && cfg.num_negatives >= 0, Errc::ConfigInvalid, "batch sizes must be >= 0");
  require(cfg.tolerance >= 0.0, Errc::ConfigInvalid, "tolerance must be >= 0");
  require(cfg.patience >= 1, Errc::ConfigInvalid, "patience must be >= 1");
  require(cfg.backtrack_factor > 0.0 && cfg.backtrack_factor < 1.0, Errc::ConfigInvalid,
          "backtrack factor must lie in (0, 1)");
  require(cfg.step_growth >= 1.0, Errc::ConfigInvalid, "step growth must be >= 1");
  require(cfg.snapshot_every >= 0, Errc::ConfigInvalid, "snapshot cadence must be >= 0");
}

ParamBundle Optimizer::direction(const ParamBundle& grads) {
  ++step_;
  switch (cfg_.optimizer) {
    case OptimizerKind::Gd: return grads;
    case OptimizerKind::MomentumGd: {
      if (first_.empty())
        for (const auto& g : grads) first_.push_back(Matrix::Zero(g.rows(), g.cols()));
      for (size_t i = 0; i < grads.size(); ++i) first_[i] = cfg_.momentum * first_[i] + grads[i];
      return first_;
    }
    case OptimizerKind::Adam: {
      if (first_.empty()) {
        for (const auto& g : grads) {
          first_.push_back(Matrix::Zero(g.rows(), g.cols()));
          second_.push_back(Matrix::Zero(g.rows(), g.cols()));
        }
      }
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
      ParamBundle dir(grads.size());
      for (size_t i = 0; i < grads.size(); ++i) {
        first_[i] = cfg_.beta1 * first_[i] + (1.0 - cfg_.beta1) * grads[i];
        second_[i] = cfg_.beta2 * second_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
        dir[i] = ((first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + cfg_.epsilon)).matrix();
      }
      return dir;
    }
  }
  return grads;
}

double scheduled_rate(const TrainConfig& cfg, int step) {
  if (cfg.schedule == Schedule::Constant || cfg.steps <= 0) return cfg.learning_rate;
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * step / static_cast<double>(cfg.steps)));
}

namespace {

using Clock = std::chrono::steady_clock;

double bundle_norm(const ParamBundle& b) {
  double sq = 0.0;
  for (const auto& m : b) sq += m.squaredNorm();
  return std::sqrt(sq);
}

ParamBundle axpy(const ParamBundle& x, double alpha, const ParamBundle& d) {
  ParamBundle out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - alpha * d[i];
  return out;
}

bool diverged(double loss, const TrainConfig& cfg) {
  return !std::isfinite(loss) || std::abs(loss) > cfg.divergence_threshold;
}

struct Evaluation {
  LossReport report;
  int dead = 0;
};

// Encoders handled jointly as one parameter vector.
struct EncoderSet {
  std::vector<Encoder*> encoders;

  ParamBundle get() const {
    ParamBundle out;
    for (auto* e : encoders) out.insert(out.end(), e->params().begin(), e->params().end());
    return out;
  }
  void set(const ParamBundle& all) const {
    size_t at = 0;
    for (auto* e : encoders) {
      auto& p = e->mutable_params();
      for (auto& block : p) block = all[at++];
    }
  }
};

// Full-batch descent with optional backtracking. `evaluate` must leave the
// encoders' forward caches at the current parameters; `param_grads` maps the
// loss report to parameter gradients.
TrainTrace full_batch_loop(const EncoderSet& set, const TrainConfig& cfg, const std::function<Evaluation()>& evaluate,
                           const std::function<ParamBundle(const LossReport&)>& param_grads) {
  TrainTrace trace;
  Evaluation cur = evaluate();
  if (diverged(cur.report.loss, cfg)) fail(Errc::DivergenceDetected, "initial loss is not finite");
  Optimizer opt(cfg);
  int calm = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = Clock::now();
    const ParamBundle g = param_grads(cur.report);
    const double gn = bundle_norm(g);
    double lr = scheduled_rate(cfg, step);
    const ParamBundle dir = opt.direction(g);
    const double before = cur.report.loss;
    bool stalled = false;
    if (lr > 0.0) {
      const ParamBundle saved = set.get();
      for (int tries = 0;; ++tries) {
        set.set(axpy(saved, lr, dir));
        Evaluation trial = evaluate();
        const bool bad = diverged(trial.report.loss, cfg);
        if (!cfg.backtracking) {
          if (bad)
            fail(Errc::DivergenceDetected,
                 "loss " + std::to_string(trial.report.loss) + " at step " + std::to_string(step));
          cur = std::move(trial);
          break;
        }
        if (!bad && trial.report.loss <= before + 1e-12) {
          cur = std::move(trial);
          break;
        }
        if (tries >= cfg.max_backtracks) {
          set.set(saved);
          cur = evaluate();
          stalled = true;
          break;
        }
        lr *= cfg.backtrack_factor;
      }
    }
    trace.loss.push_back(cur.report.loss);
    trace.grad_norm.push_back(gn);
    trace.dead_dims.push_back(cur.dead);
    trace.ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    if (cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0) trace.snapshots.emplace_back(step + 1, set.get());

    calm = std::abs(cur.report.loss - before) < cfg.tolerance ? calm + 1 : 0;
    if (calm >= cfg.patience || stalled) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

LossReport population_objective(const Matrix& f, const Matrix& joint, const Vector& marginal,
                                const ObjectiveSpec& objective) {
  LossReport r = spectral_loss_population(f, joint, marginal, true);
  if (objective.l1_lambda > 0.0) r = l1_regularized_loss(std::move(r), f, objective.l1_lambda, &marginal);
  return r;
}

TrainTrace minibatch_loop(Encoder& encoder, const ObjectiveSpec& objective, const LatentClassModel& model,
                          const TrainConfig& cfg) {
  const PairSampler sampler(model);
  Rng rng(cfg.seed);
  const int b = cfg.batch_size;
  const int m = cfg.num_negatives > 0 ? cfg.num_negatives : b;
  Optimizer opt(cfg);
  TrainTrace trace;
  double prev = std::numeric_limits<double>::quiet_NaN();
  int calm = 0;
  std::vector<int> idx(static_cast<size_t>(2 * b + m));
  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = Clock::now();
    for (int i = 0; i < b; ++i) {
      const auto [x, xp] = sampler.sample_pair(rng);
      idx[static_cast<size_t>(i)] = x;
      idx[static_cast<size_t>(b + i)] = xp;
    }
    for (int i = 0; i < m; ++i) idx[static_cast<size_t>(2 * b + i)] = sampler.sample_negative(rng);

    const Matrix f = encoder.encode(idx).values;
    const Matrix anchor = f.topRows(b), positive = f.middleRows(b, b), negative = f.bottomRows(m);
    LossReport r = objective.kind == ObjectiveSpec::Kind::Spectral
                       ? spectral_loss_batch(anchor, positive, negative, true)
                       : infonce_loss(anchor, positive, negative, objective.infonce, true);
    if (objective.l1_lambda > 0.0) r = l1_regularized_loss(std::move(r), anchor, objective.l1_lambda);
    if (diverged(r.loss, cfg))
      fail(Errc::DivergenceDetected, "loss " + std::to_string(r.loss) + " at step " + std::to_string(step));

    Matrix upstream(f.rows(), f.cols());
    upstream << r.grads[0], r.grads[1], r.grads[2];
    const ParamBundle g = encoder.grad_params(upstream);
    const ParamBundle dir = opt.direction(g);
    const double lr = scheduled_rate(cfg, step);
    if (lr > 0.0) {
      auto& params = encoder.mutable_params();
      for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * dir[i];
    }

    trace.loss.push_back(r.loss);
    trace.grad_norm.push_back(bundle_norm(g));
    trace.dead_dims.push_back(dead_dimensions(encoder.evaluate_all().values));
    trace.ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    if (cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0)
      trace.snapshots.emplace_back(step + 1, encoder.params());

    calm = std::abs(r.loss - prev) < cfg.tolerance ? calm + 1 : 0;
    prev = r.loss;
    if (calm >= cfg.patience) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

}  // namespace

TrainTrace train(Encoder& encoder, const ObjectiveSpec& objective, const LatentClassModel& model,
                 const TrainConfig& cfg) {
  validate(cfg);
  require(encoder.num_samples() == model.num_samples(), Errc::ConfigInvalid,
          "encoder covers " + std::to_string(encoder.num_samples()) + " samples, model has " +
              std::to_string(model.num_samples()));
  if (cfg.batch_size > 0) return minibatch_loop(encoder, objective, model, cfg);

  require(objective.kind == ObjectiveSpec::Kind::Spectral, Errc::ConfigInvalid,
          "full-batch training supports the spectral objective only; set batch_size for InfoNCE");
  const Matrix joint = cooccurrence(model).raw;
  const Vector& marginal = model.marginal();
  EncoderSet set{{&encoder}};
  auto evaluate = [&]() {
    const Matrix f = encoder.encode_all().values;
    return Evaluation{population_objective(f, joint, marginal, objective), dead_dimensions(f)};
  };
  auto grads = [&](const LossReport& r) { return encoder.grad_params(r.grads[0]); };
  return full_batch_loop(set, cfg, evaluate, grads);
}

TrainTrace train_asymmetric(Encoder& visual, Encoder& language, const TwoViewModel& model, const TrainConfig& cfg) {
  validate(cfg);
  require(visual.num_samples() == model.joint().rows() && language.num_samples() == model.joint().cols(),
          Errc::ConfigInvalid, "encoder sample spaces do not match the two views");
  require(visual.output_dim() == language.output_dim(), Errc::ConfigInvalid,
          "visual and language encoders have different output widths");
  EncoderSet set{{&visual, &language}};
  auto evaluate = [&]() {
    const Matrix fv = visual.encode_all().values;
    const Matrix fl = language.encode_all().values;
    return Evaluation{mm_spectral_loss(fv, fl, model, true), dead_dimensions(fv) + dead_dimensions(fl)};
  };
  auto grads = [&](const LossReport& r) {
    ParamBundle g = visual.grad_params(r.grads[0]);
    ParamBundle gl = language.grad_params(r.grads[1]);
    g.insert(g.end(), gl.begin(), gl.end());
    return g;
  };
  return full_batch_loop(set, cfg, evaluate, grads);
}

double asymmetric_residual(const Encoder& visual, const Encoder& language, const TwoViewModel& model) {
  const Matrix fv = model.visual().marginal().cwiseSqrt().asDiagonal() * visual.evaluate_all().values;
  const Matrix fl = model.language().marginal().cwiseSqrt().asDiagonal() * language.evaluate_all().values;
  return asymmetric_nmf_objective(model.normalized_joint(), fv, fl, false, false).loss;
}

NmfResult projected_gradient_nmf(const Matrix& normalized, const Vector& marginal, int dims, const TrainConfig& cfg) {
  validate(cfg);
  require(dims >= 1, Errc::ConfigInvalid, "NMF rank must be >= 1");
  require(normalized.rows() == normalized.cols() && marginal.size() == normalized.rows(), Errc::DimensionMismatch,
          "target must be N x N with an N-vector marginal");
  require((normalized - normalized.transpose()).cwiseAbs().maxCoeff() <= 1e-12, Errc::NonSymmetricInput,
          "symmetric NMF target is not symmetric");
  require(normalized.minCoeff() >= 0.0, Errc::NegativeEntry, "symmetric NMF target has a negative entry");

  const Eigen::Index n = normalized.rows();
  Rng rng(cfg.seed);
  const double scale = 2.0 * std::sqrt(std::max(normalized.mean(), 1e-300) / dims);
  std::uniform_real_distribution<double> u(0.0, scale);
  Matrix f(n, dims);
  for (Eigen::Index j = 0; j < f.cols(); ++j)
    for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, j) = u(rng);

  auto objective = [&](const Matrix& x, bool grad) {
    auto t = kernels::parallel::factor_residual(normalized, x, x, grad);
    if (grad) t.grad_left += t.grad_right;
    return t;
  };

  NmfResult out;
  auto cur = objective(f, true);
  double eta = cfg.learning_rate;
  int calm = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    bool accepted = false;
    for (int tries = 0; tries <= cfg.max_backtracks; ++tries) {
      const Matrix trial = (f - eta * cur.grad_left).cwiseMax(0.0);
      auto next = objective(trial, true);
      if (std::isfinite(next.residual) && next.residual <= cur.residual) {
        const double delta = cur.residual - next.residual;
        f = trial;
        cur = std::move(next);
        eta *= cfg.step_growth;
        accepted = true;
        calm = delta < cfg.tolerance ? calm + 1 : 0;
        break;
      }
      eta *= cfg.backtrack_factor;
    }
    out.residual.push_back(cur.residual);
    if (!accepted || calm >= cfg.patience || cur.residual == 0.0) break;
  }

  out.factor = FeatureTable(marginal.cwiseSqrt().cwiseInverse().asDiagonal() * f, true);
  out.factor.weight_by(marginal);
  return out;
}

TrainTrace train_supervised(MlpEncoder& encoder, Matrix& embeddings, const Matrix& inputs,
                            std::span<const int> labels, const std::optional<NonNegTransform>& nce,
                            const TrainConfig& cfg) {
  validate(cfg);
  require(embeddings.rows() == encoder.output_dim(), Errc::ConfigInvalid, "embedding rows != encoder output width");
  require(!nce || !encoder.transform(), Errc::ConfigInvalid,
          "the non-negative cross-entropy applies its own transform; use an encoder without one");
  Optimizer opt(cfg);
  TrainTrace trace;
  double prev = std::numeric_limits<double>::quiet_NaN();
  int calm = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = Clock::now();
    const Matrix f = encoder.encode_coordinates(inputs).values;
    LossReport r = nce ? nce_loss(f, embeddings, labels, *nce, true) : ce_loss(f, embeddings, labels, true);
    if (diverged(r.loss, cfg)) fail(Errc::DivergenceDetected, "loss diverged at step " + std::to_string(step));
    ParamBundle g = encoder.grad_params(r.grads[0]);
    g.push_back(r.grads[1]);
    const ParamBundle dir = opt.direction(g);
    const double lr = scheduled_rate(cfg, step);
    if (lr > 0.0) {
      auto& params = encoder.mutable_params();
      for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * dir[i];
      embeddings -= lr * dir.back();
    }
    trace.loss.push_back(r.loss);
    trace.grad_norm.push_back(bundle_norm(g));
    trace.dead_dims.push_back(dead_dimensions(nce ? forward(*nce, f) : f));
    trace.ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    calm = std::abs(r.loss - prev) < cfg.tolerance ? calm + 1 : 0;
    prev = r.loss;
    if (calm >= cfg.patience) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

}  // namespace ncl
