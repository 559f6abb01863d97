#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gatta::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

/// Runs one command line (args[0] is the program name). Table output goes to
/// the files named by the options; progress and diagnostics go to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

/// Noise levels used by noise-sweep unless --sigmas is given.
std::vector<double> default_noise_grid();

/// Lesion masks named in the published lesion study, in its order.
std::vector<std::string> named_lesion_masks();

}  // namespace gatta::cli
