#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "nphmm/likelihood.hpp"
#include "nphmm/model.hpp"

namespace nphmm {

// K = max + max(5, ceil(0.1 * max)).
int default_support(int max_observed);

// One-column integer text/CSV. A non-numeric first line is a header; "NA"
// marks a missing value; blank lines are skipped. Without an explicit
// support the bound comes from default_support.
CountSeries parse_counts(std::istream& in, std::optional<int> support = std::nullopt);
CountSeries load_counts(const std::filesystem::path& path,
                        std::optional<int> support = std::nullopt);

inline constexpr int kModelSchemaVersion = 1;

struct FitMetadata {
  double loglik = 0.0;
  double penalized_loglik = 0.0;
  std::uint64_t seed = 0;
  bool converged = false;
};

struct ModelFile {
  int schema_version = kModelSchemaVersion;
  HmmParams params;
  PenaltyConfig penalty;
  std::optional<FitMetadata> fit;
};

// JSON document; doubles are written in shortest round-trip form, so
// parse_model(serialize_model(m)) reproduces every probability bit for bit.
std::string serialize_model(const ModelFile& model);
ModelFile parse_model(std::string_view text);

void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

// Shortest decimal that round-trips; "inf", "-inf" and "nan" otherwise.
std::string format_number(double value);

std::string read_file(const std::filesystem::path& path);

}  // namespace nphmm
