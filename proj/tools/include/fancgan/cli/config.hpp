#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fancgan/generation.hpp"
#include "fancgan/losses.hpp"
#include "fancgan/training.hpp"

namespace fancgan::cli {

struct AblationEntry {
  std::string key;  // section name, e.g. "ablation2"
  std::string label;
  loss::LossConfig losses;
};

struct EvalSettings {
  std::string extractor = "random-conv-v1";
  std::uint64_t seed = 0;
  double threshold = 0.5;
  bool identity_baseline = false;
  gen::PostProcessSpec post{};
};

// Everything a command can be configured with. Sections of the INI file:
// [data] [model] [losses] [training] [eval] [synthesis] and [ablationN]
// sections. ablation1..3 are the default comparison rows; a section with a
// new name appends a row. Every row starts from the resolved [losses].
struct RunConfig {
  std::string data_root;
  std::uint64_t split_seed = 0;
  train::ModelConfig model{};
  loss::LossConfig losses{};
  train::TrainingConfig training{};
  EvalSettings eval{};
  // canvas 0x0 stands for the model image size.
  gen::MaskSynthesisSpec synthesis{{0, 0}};
  std::vector<AblationEntry> ablations;

  void validate() const;
};

// The three loss configurations compared by default.
std::vector<AblationEntry> default_ablations(const loss::LossConfig& base);

// Defaults, then the file, then `section.key=value` overrides in order.
// Unknown sections or keys raise ConfigError.
RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::string>& overrides);

void apply_override(RunConfig& config, const std::string& assignment);
void apply_setting(RunConfig& config, const std::string& section, const std::string& key,
                   const std::string& value);

// Fully resolved INI text; loading it back yields the same configuration.
std::string to_ini(const RunConfig& config);

// "count=3,canvas=64x64,particles=2:4,radius=3:6,ellipticity=0:0.3,overlap=1,seed=9"
// Returns the count; other keys update `spec`.
int parse_synthesis_request(const std::string& text, gen::MaskSynthesisSpec& spec);

}  // namespace fancgan::cli
