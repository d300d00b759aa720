#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ilioseg/phantom.hpp"
#include "ilioseg/trainer.hpp"

namespace ilio::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

struct RunConfig {
  std::filesystem::path workdir = ".";
  std::string scale = "desk";
  std::uint64_t seed = 20240101;

  std::size_t n = 30;
  std::size_t train_count = 24;  // first subjects train, the rest are held out
  bool symmetric = false;

  TrainConfig train = TrainConfig::desk();
  bool validate_each_epoch = false;
  bool largest_component = false;

  std::string stats_volumes = "predicted";  // or "true"
  int gam_knots = 10;

  std::filesystem::path cohort_csv;     // default <workdir>/cohort.csv
  std::filesystem::path checkpoint;     // default <workdir>/model.ckpt
  std::filesystem::path segmented_csv;  // default <workdir>/segmented.csv

  static RunConfig for_scale(const std::string& scale);

  // Throws ArgumentError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  PhantomGeometry geometry() const;
  std::filesystem::path cohort_path() const;
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path segmented_path() const;
  std::filesystem::path image_path(const std::string& id) const;
  std::filesystem::path mask_path(const std::string& id) const;
  std::filesystem::path prediction_path(const std::string& id) const;
  std::filesystem::path landmarks_path() const;
  std::filesystem::path history_path() const;
  std::filesystem::path dsc_path() const;
  std::filesystem::path stats_dir() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// "key = value" lines; '#' starts a comment. Throws ArgumentError with the line number.
KeyValues parse_config_text(const std::string& text);

// Scale defaults, then the file (if any), then `overrides` in order.
RunConfig resolve_config(const std::filesystem::path& config_file, const KeyValues& overrides);

int cmd_cohort_gen(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_segment(const RunConfig& config);
int cmd_eval(const RunConfig& config);
int cmd_stats(const RunConfig& config);

// Runs a command, mapping input errors to 2 and numeric failures to 3.
int run_command(const std::string& name, const RunConfig& config);

// Deterministic seed of subject i's image.
std::uint64_t image_seed(std::uint64_t seed, std::size_t index);

}  // namespace ilio::cli
