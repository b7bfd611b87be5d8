#ifndef SMOOTHCONV_CONFIG_HPP
#define SMOOTHCONV_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "smoothconv/lab.hpp"

namespace smoothconv {

/**
 * Parses an experiment document. Every entry is validated up front; a
 * list-valued "p" expands into one config per value (sharing simulated paths).
 * Entries without an explicit seed get one derived from `master_seed` and the
 * entry name. Errors are ConfigError with a line:column or field path.
 */
std::vector<ExperimentConfig> parse_config_text(const std::string& text, const std::string& source,
                                                std::uint64_t master_seed = 1);

std::vector<ExperimentConfig> parse_config(const std::string& path, std::uint64_t master_seed = 1);

/// Seed used for an entry that does not set one.
std::uint64_t derive_seed(std::uint64_t master_seed, const std::string& name);

}  // namespace smoothconv

#endif  // SMOOTHCONV_CONFIG_HPP
