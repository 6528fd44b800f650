#pragma once

#include <string>

namespace fancgan::testing {

// A model small enough for a few epochs to finish in seconds on one core.
inline std::string tiny_ini(int size = 32, int epochs = 1) {
  return "[data]\nimage_size = " + std::to_string(size) + "x" + std::to_string(size) +
         "\nclahe = false\n"
         "[model]\ngenerator_depth = 2\ngenerator_width = 4\nlatent_dim = 8\nstyle_dim = 8\nmapping_layers = 2\n"
         "segmenter_depth = 2\nsegmenter_width = 4\ndisc_width = 4\ndisc_strided_layers = 2\n"
         "[training]\nepochs = " + std::to_string(epochs) + "\ncheckpoint_every = 1\nlearning_rate = 0.0002\n";
}

// The 64x64 configuration used by the smoke experiments.
inline std::string toy_ini(int epochs) {
  return "[data]\nimage_size = 64x64\nclahe = false\n"
         "[model]\ngenerator_depth = 3\ngenerator_width = 8\nlatent_dim = 16\nstyle_dim = 16\n"
         "segmenter_depth = 3\nsegmenter_width = 8\ndisc_width = 16\n"
         "[training]\nepochs = " + std::to_string(epochs) + "\ncheckpoint_every = 1\nlearning_rate = 0.0002\n";
}

}  // namespace fancgan::testing
