#pragma once
// Layered run configuration: defaults, then a JSON config file, then
// --section.key command-line overrides. Unknown keys are rejected and every
// error names the offending key.

#include <string>
#include <utility>
#include <vector>

#include "evaluation/dca.hpp"
#include "morphometry/morphometry.hpp"
#include "synthdata/dataset.hpp"
#include "training/train.hpp"

namespace chromo::cli {

struct MatchParams {
    float tau = morphometry::kDefaultTau;  // foreground threshold
    int window = morphometry::kDefaultWindow;  // midpoint smoothing window
};

struct RunConfig {
    synthdata::DatasetConfig data;  // out_dir comes from the command line, not a key
    training::TrainConfig train;    // model.* keys land here as well
    evaluation::DcaConfig eval;
    MatchParams match;

    void validate() const;
    std::string to_json() const;  // section/key echo that parse_config re-reads
};

// ("train.epochs", "3") pairs, applied after the file in the given order.
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Empty config_path skips the file layer. The result is validated.
RunConfig parse_config(const std::string& config_path, const Overrides& overrides = {});

// Same layering from an in-memory JSON document (the file layer's parser).
RunConfig parse_config_text(const std::string& json_text, const Overrides& overrides = {});

// All recognized section.key names, for mirroring config keys as flags.
const std::vector<std::string>& config_keys();

}  // namespace chromo::cli
