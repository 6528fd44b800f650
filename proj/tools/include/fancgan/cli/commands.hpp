#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fancgan/cli/config.hpp"
#include "fancgan/evaluation.hpp"

namespace fancgan::cli {

struct TrainArgs {
  RunConfig config;
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
};

struct GenerateArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> masks_dir;
  // Synthesize this many masks instead of reading masks_dir. A 0x0 canvas
  // means the checkpoint's image size.
  std::optional<int> synthesize_count;
  gen::MaskSynthesisSpec synthesis{{0, 0}};
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  gen::PostProcessSpec post{};
};

struct SegmentArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path images_dir;
  std::filesystem::path out_dir;
  double threshold = 0.5;
};

struct EvaluateArgs {
  RunConfig config;
  std::filesystem::path checkpoint;
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  // Test ids from a training run's split.tsv instead of re-splitting.
  std::optional<std::filesystem::path> split_manifest;
};

struct AblateArgs {
  RunConfig config;
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
};

struct MakeMasksArgs {
  gen::MaskSynthesisSpec spec{};
  int count = 0;
  std::filesystem::path out_dir;
};

struct MakeToyDataArgs {
  int count = 16;
  int size = 64;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

// Each command writes <out>/manifest.json first and finalizes it with
// output checksums. Progress lines go to `log`.
void cmd_train(const TrainArgs& args, std::ostream& log);
void cmd_generate(const GenerateArgs& args, std::ostream& log);
void cmd_segment(const SegmentArgs& args, std::ostream& log);
std::vector<eval::MetricsReport> cmd_evaluate(const EvaluateArgs& args, std::ostream& log);
std::vector<eval::MetricsReport> cmd_ablate(const AblateArgs& args, std::ostream& log);
void cmd_make_masks(const MakeMasksArgs& args, std::ostream& log);
void cmd_make_toy_data(const MakeToyDataArgs& args, std::ostream& log);

// Re-executes the command recorded in a manifest, writing into `out_dir`.
void cmd_replay(const std::filesystem::path& manifest, const std::filesystem::path& out_dir, std::ostream& log);

// Maps an exception to the process exit code: 1 for validation problems,
// 2 for everything else.
int exit_code_for(const std::exception& e);

}  // namespace fancgan::cli
