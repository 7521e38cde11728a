#pragma once

#include <ostream>
#include <span>
#include <string>

#include "feed/config.hpp"
#include "feed/data.hpp"
#include "feed/recon.hpp"
#include "feed/train.hpp"

namespace feed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

// argv[0] is the subcommand: train-scratch | distill | pfeed | sfeed |
// evaluate | analyze-recon. The rest are key=value / --key=value overrides,
// applied after the file named by config=.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

// Config -> typed settings. FEEDKIT_OUT, when set, replaces out_dir.
TrainConfig train_config_from(const Config& c);
ReconConfig recon_config_from(const Config& c);
DatasetSource dataset_source_from(const Config& c, Split split);

// Both splits, normalized with statistics of the training split when
// normalize=true (the default).
struct DataPair {
  Dataset train;
  Dataset test;
};
DataPair load_data(const Config& c);

}  // namespace feed
