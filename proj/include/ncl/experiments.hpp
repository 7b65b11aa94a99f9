#pragma once

#include "ncl/config.hpp"
#include "ncl/encoders.hpp"
#include "ncl/error.hpp"
#include "ncl/latent_model.hpp"
#include "ncl/report.hpp"
#include "ncl/training.hpp"

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace ncl {

/// Every recognized key with its default value.
const Config& default_config();

/// Defaults overlaid with `user`. Unknown keys raise ConfigInvalid naming
/// the key.
Config resolve_config(const Config& user);

// Builders from a resolved config.
LatentClassModel model_from_config(const Config& cfg);
LabelMap labels_from_config(const Config& cfg, const LatentClassModel& model);
int feature_dims(const Config& cfg, const LatentClassModel& model);
std::optional<NonNegTransform> transform_from_config(const Config& cfg);
std::unique_ptr<Encoder> encoder_from_config(const Config& cfg, const LatentClassModel& model,
                                             const std::optional<NonNegTransform>& transform);
TrainConfig train_config_from(const Config& cfg);
TrainConfig nmf_config_from(const Config& cfg);
ObjectiveSpec objective_from(const Config& cfg);

/// Names accepted by evaluate.metrics.
const std::vector<std::string>& known_metrics();

// Subcommands. Each writes its files into `out` and returns the report
// (already written as report.json / timing.json).
ExperimentReport run_generate(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
ExperimentReport run_train(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
ExperimentReport run_evaluate(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
ExperimentReport run_verify(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
ExperimentReport run_select(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
ExperimentReport run_compare(const Config& cfg, const std::filesystem::path& out, std::ostream& log);

const std::vector<std::string>& subcommands();

/// Dispatches `command` on a resolved config. Returns 1 when verify has a
/// failing row, else 0; config problems propagate as ncl::Error.
int run_command(const std::string& command, const Config& cfg, const std::filesystem::path& out, std::ostream& log);

/// Exit code for an error escaping run_command: 1 for divergence, 2 otherwise.
int exit_code_for(const Error& e);

}  // namespace ncl
