#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace srel::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on domain errors and 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Expands --config: the JSON object's entries become flags, global ones
/// ahead of everything and the rest right after the subcommand, so explicit
/// flags still win. Exposed for tests.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

// Per-purpose seeds derived from --seed.
std::uint64_t dataset_seed(std::uint64_t seed);
std::uint64_t training_seed(std::uint64_t seed);
std::uint64_t teaching_seed(std::uint64_t seed);
std::uint64_t search_seed(std::uint64_t seed);

}  // namespace srel::cli
