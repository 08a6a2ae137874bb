#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dvga/graph.hpp"
#include "dvga/metrics.hpp"
#include "dvga/model.hpp"
#include "dvga/params.hpp"

namespace dvga {

/// Configuration validation failure carrying every problem found.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class FeatureSource {
  /// Feature file given by `features` (identity when absent).
  kFile,
  kIdentity,
  /// Rows of the train adjacency.
  kAdjacency,
};

/// Every knob of one experiment. Each field maps to one config-file key.
struct TrainConfig {
  ModelMode mode = ModelMode::kDGA;
  int channels = 4;
  int channel_dim = 16;
  int layers = 1;
  int iterations = 3;
  int flow_steps = 1;
  /// 0 selects channel_dim / 2.
  int flow_split = 0;
  double lambda = 0.01;
  double learning_rate = 0.01;
  double dropout = 0.0;
  int epochs = 3000;
  std::uint64_t seed = 0;
  int eval_every = 10;
  double val_frac = 0.05;
  double test_frac = 0.10;

  std::string edges;
  std::string features;
  std::string labels;
  FeatureSource feature_source = FeatureSource::kFile;
  bool row_normalize = false;

  bool synthetic = false;
  int synth_factors = 4;
  Index synth_nodes = 1000;
  int synth_classes = 16;
  double synth_p = 0.0;
  double synth_q = 3e-5;
  /// When positive, synth_p is solved for this expected mean degree.
  double synth_target_degree = 40.0;
  std::uint64_t synth_seed = 0;

  std::string output_dir = "runs";

  /// All range and consistency problems; empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;
  ModelConfig model(Index in_features) const;
};

/// Ordered key=value view of a config (the on-disk snapshot format).
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& config);
std::string format_config(const TrainConfig& config);

/// Parses "key=value" lines ('#' starts a comment) and then the overrides.
/// Unknown keys, malformed values and range violations are all collected
/// and raised together as a ConfigError.
TrainConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Stable 64-bit FNV-1a hash of the formatted config, as 16 hex digits.
std::string config_hash(const TrainConfig& config);

/// One configuration per point of the Cartesian product of `grid`
/// (key -> candidate values), each expressed as overrides on `base`.
std::vector<std::vector<std::string>> expand_grid(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& grid);

struct EpochRecord {
  int epoch = 0;
  LossReport loss;
  Index clamped = 0;
};

struct EvalRecord {
  int epoch = 0;
  double auc = 0.0;
  double ap = 0.0;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::vector<EvalRecord> evals;
  /// Epoch whose parameters maximize validation AUC (last epoch when no
  /// validation pairs exist).
  int best_epoch = 0;
  double best_val_auc = 0.0;
};

struct TrainResult {
  ModelConfig model;
  /// Best-on-validation parameters.
  ParamStore params;
  ParamStore final_params;
  RunHistory history;
};

/// Algorithm driver shared by both modes: full-batch Adam on the train
/// graph for cfg.epochs epochs. Non-finite values abort with a NumericError
/// naming the epoch and loss component.
TrainResult train(const EdgeSplit& split, const TrainConfig& config);
/// Requires cfg.mode == DVGA.
TrainResult train_dvga(const EdgeSplit& split, const TrainConfig& config);
/// Requires cfg.mode == DGA.
TrainResult train_dga(const EdgeSplit& split, const TrainConfig& config);

/// Scores held-out pairs with the test-time embedding of the train graph.
RankMetrics evaluate_link(const ParamStore& params, const ModelConfig& model, const Graph& train,
                          const std::vector<Edge>& pos, const std::vector<Edge>& neg);

/// Full graph for a config: loaded from files or synthesized.
Graph load_dataset(const TrainConfig& config, std::vector<std::string>* warnings = nullptr);

/// Split plus the feature matrix chosen by the config. Adjacency features
/// are rebuilt from the train graph so held-out edges never leak in.
EdgeSplit prepare_split(const Graph& full, const TrainConfig& config);

/// Sets the train graph's features according to config.feature_source.
/// Synthetic graphs always use train adjacency rows.
void apply_feature_source(EdgeSplit& split, const TrainConfig& config);

/// Replaces the train graph's features with rows of its own adjacency.
void use_train_adjacency_features(EdgeSplit& split);

/// Versioned text checkpoint: config snapshot plus every tensor with a
/// shape header and hex-float entries (exact round trip).
struct Checkpoint {
  TrainConfig config;
  ModelConfig model;
  ParamStore params;
  int best_epoch = 0;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dvga
