#include "nphmm/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nphmm/errors.hpp"

namespace nphmm {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<long long> parse_integer(std::string_view token) {
  long long value = 0;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) return std::nullopt;
  return value;
}

json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError("expected a number in model file");
}

Eigen::MatrixXd matrix_from(const json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string("model field '") + name + "' must be a non-empty array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError(std::string("model field '") + name + "' is not rectangular");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json matrix_to(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

int default_support(int max_observed) {
  if (max_observed < 0) throw ConfigError("cannot derive a support bound without observed counts");
  const int buffer = std::max(5, static_cast<int>(std::ceil(0.1 * max_observed)));
  return max_observed + buffer;
}

CountSeries parse_counts(std::istream& in, std::optional<int> support) {
  if (support && *support < 1) throw ConfigError("support bound must be at least 1");
  std::vector<int> values;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view token = trim(line);
    if (token.empty()) continue;
    const bool first_content = !seen_content;
    seen_content = true;
    if (token == "NA") {
      values.push_back(CountSeries::kMissing);
      continue;
    }
    const auto value = parse_integer(token);
    if (!value) {
      if (first_content) continue;  // header row
      throw ParseError("'" + std::string(token) + "' is not a non-negative integer count", line_no);
    }
    if (*value < 0) throw ParseError("negative count " + std::string(token), line_no);
    if (*value > std::numeric_limits<int>::max() / 2) throw ParseError("count too large", line_no);
    if (support && *value > *support) {
      throw ParseError("count " + std::string(token) + " exceeds the support bound " + std::to_string(*support),
                       line_no);
    }
    values.push_back(static_cast<int>(*value));
  }
  if (values.empty()) throw ConfigError("count file contains no observations");
  int max_value = CountSeries::kMissing;
  for (int v : values) max_value = std::max(max_value, v);
  const int k = support ? *support : default_support(max_value);
  return CountSeries(std::move(values), k);
}

CountSeries load_counts(const std::filesystem::path& path, std::optional<int> support) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open count file " + path.string());
  return parse_counts(in, support);
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string serialize_model(const ModelFile& model) {
  const HmmParams& p = model.params;
  json j;
  j["schema_version"] = model.schema_version;
  j["states"] = p.states();
  j["support_bound"] = p.support_bound();
  j["stationary"] = p.stationary;
  j["gamma"] = matrix_to(p.gamma);
  j["delta"] = std::vector<double>(p.delta.begin(), p.delta.end());
  j["pmfs"] = matrix_to(p.pmfs);
  j["penalty"] = {
      {"order", model.penalty.order},
      {"lambdas", model.penalty.lambdas},
      {"inflation_exempt", std::vector<int>(model.penalty.inflation_exempt.begin(), model.penalty.inflation_exempt.end())},
  };
  if (model.fit) {
    j["fit"] = {
        {"loglik", number_or_string(model.fit->loglik)},
        {"penalized_loglik", number_or_string(model.fit->penalized_loglik)},
        {"seed", model.fit->seed},
        {"converged", model.fit->converged},
    };
  }
  return j.dump(2) + "\n";
}

ModelFile parse_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    ModelFile m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kModelSchemaVersion) {
      throw ConfigError("unsupported model schema_version " + std::to_string(m.schema_version));
    }
    HmmParams& p = m.params;
    p.stationary = j.value("stationary", true);
    p.gamma = matrix_from(j.at("gamma"), "gamma");
    p.pmfs = matrix_from(j.at("pmfs"), "pmfs");
    if (j.contains("delta")) {
      const auto d = j.at("delta").get<std::vector<double>>();
      p.delta = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    } else if (p.stationary) {
      p.delta = stationary_distribution(p.gamma);
    } else {
      throw ConfigError("model file lacks 'delta' and is not stationary");
    }
    if (j.contains("states") && j.at("states").get<int>() != p.states()) {
      throw ConfigError("'states' disagrees with the gamma matrix");
    }
    if (j.contains("support_bound") && j.at("support_bound").get<int>() != p.support_bound()) {
      throw ConfigError("'support_bound' disagrees with the pmf matrix");
    }
    p.validate();
    if (j.contains("penalty")) {
      const json& pen = j.at("penalty");
      m.penalty.order = pen.value("order", 3);
      m.penalty.lambdas = pen.value("lambdas", std::vector<double>{});
      const auto exempt = pen.value("inflation_exempt", std::vector<int>{});
      m.penalty.inflation_exempt = std::set<int>(exempt.begin(), exempt.end());
    } else {
      m.penalty = PenaltyConfig::unpenalized(p.states());
    }
    if (j.contains("fit")) {
      const json& f = j.at("fit");
      m.fit = FitMetadata{number_from(f.at("loglik")), number_from(f.at("penalized_loglik")),
                          f.at("seed").get<std::uint64_t>(), f.at("converged").get<bool>()};
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << serialize_model(model);
}

ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace nphmm
