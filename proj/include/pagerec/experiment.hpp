#pragma once

// Experiment recipes behind the command-line tool: a flat, dotted-key JSON
// config, corpus assembly, per-seed runs and their on-disk artifacts.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pagerec/corpus.hpp"
#include "pagerec/eval.hpp"
#include "pagerec/synthgen.hpp"
#include "pagerec/train.hpp"
#include "pagerec/vocab.hpp"

namespace pagerec {

/// Every recognised key with its default value.
nlohmann::ordered_json default_config();

/// Reads a flat JSON object. Throws ConfigError on parse failure.
nlohmann::ordered_json load_config_file(const std::filesystem::path& path);

/// Defaults, then `file` entries, then `key=value` overrides. Unknown keys
/// and ill-typed values throw ConfigError.
nlohmann::ordered_json resolve_config(const nlohmann::ordered_json& file,
                                      const std::vector<std::string>& overrides);

struct ExperimentConfig {
  nlohmann::ordered_json resolved;  // flat, every key present

  std::string experiment;
  std::filesystem::path out;
  std::vector<std::uint64_t> seeds;

  std::string source;  // "sessions", "ratings" or "toy"
  std::filesystem::path sessions_path, ratings_path, movies_path;
  std::optional<std::size_t> dense_dim;
  SynthVariant synth;
  std::uint64_t synth_seed = 0;
  ToySpec toy;
  std::uint64_t toy_seed = 0;

  PreprocessConfig preprocess;
  std::optional<ListPageFeatures> list_pages;
  SplitStrategy split;
  std::uint64_t split_seed = 0;

  bool items_only = false;  // strategy.mode = "items": pages removed
  ReprStrategy strategy;
  TrainConfig train;
  EvalProtocol protocol = EvalProtocol::LastItem;
  std::string eval_model;  // "checkpoint" or "genre_pop"

  std::vector<double> hyptrails_k;
  std::vector<double> noise_ratios;
  std::vector<std::string> analyze_runs;
  std::uint64_t analyze_random_seed = 0;

  std::filesystem::path experiment_dir() const { return out / experiment; }
  std::filesystem::path seed_dir(std::uint64_t seed) const { return experiment_dir() / std::to_string(seed); }
};

/// Typed view of a resolved config; throws ConfigError on invalid values.
ExperimentConfig parse_config(const nlohmann::ordered_json& resolved);

/// Corpus from the configured source, synthesized with `variant` for
/// ratings/toy sources, then preprocessed and list-page features derived.
Corpus build_corpus(const ExperimentConfig& cfg, std::optional<SynthVariant> variant = std::nullopt);

struct RunOutcome {
  Vocab vocab;
  ReprStrategy strategy;
  TrainResult trained;
  EvalReport test;
};

/// Vocabulary from the training split, training with `seed`, test evaluation.
RunOutcome train_and_evaluate(const CorpusSplit& data, const ExperimentConfig& cfg, std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
MeanStd mean_std(const std::vector<double>& values);

const std::vector<std::string>& command_names();

/// Runs one command, writing artifacts under cfg.out. Progress goes to `log`.
void run_command(std::string_view command, const ExperimentConfig& cfg, std::ostream& log);

}  // namespace pagerec
