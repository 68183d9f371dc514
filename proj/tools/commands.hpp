#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "codecomp/synth.hpp"
#include "codecomp/trainer.hpp"

namespace codecomp::cli {

/// Flat key=value settings; each `--config` argument is either one pair
/// or the path of a JSON object holding several.
using Settings = std::map<std::string, std::string>;

Settings parse_settings(const std::vector<std::string>& config_args);

/// Applies the keys it knows and removes them from `settings`.
void apply_train_settings(TrainConfig& config, Settings& settings);
void apply_synth_settings(SynthSpec& spec, Settings& settings);

/// Entry point shared by the executable and the tests; returns the exit code.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace codecomp::cli
