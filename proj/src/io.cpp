#include "convsparse/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace convsparse {

namespace {

[[noreturn]] void fail_at(const std::string& origin, std::size_t line,
                          const std::string& message) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " +
                              message);
}

double parse_number(const std::string& token, const std::string& origin,
                    std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE)
    fail_at(origin, line, "expected a number, got '" + token + "'");
  return v;
}

std::int64_t parse_integer(const std::string& token, const std::string& origin,
                           std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE)
    fail_at(origin, line, "expected an integer, got '" + token + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  for (char c : s) {
    if (c == sep) {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(current);
  return lines;
}

// Parses "# <tag> key=<int> key=<int>" headers.
std::map<std::string, std::int64_t> parse_header(const std::string& line,
                                                 const std::string& tag,
                                                 const std::string& origin) {
  std::map<std::string, std::int64_t> out;
  std::istringstream ss(line);
  std::string hash, got_tag;
  ss >> hash >> got_tag;
  if (hash != "#" || got_tag != tag)
    fail_at(origin, 1, "expected header '# " + tag + " ...'");
  std::string kv;
  while (ss >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail_at(origin, 1, "malformed header field '" + kv + "'");
    out[kv.substr(0, eq)] = parse_integer(kv.substr(eq + 1), origin, 1);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out.flush()) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dictionary_to_csv(const LocalDictionary& dict) {
  std::string out = "# local_dictionary n=" + std::to_string(dict.n()) +
                    " m=" + std::to_string(dict.m()) + "\n";
  for (Index r = 0; r < dict.n(); ++r) {
    for (Index j = 0; j < dict.m(); ++j) {
      if (j > 0) out += ',';
      out += format_double(dict.atoms()(r, j));
    }
    out += '\n';
  }
  return out;
}

LocalDictionary dictionary_from_csv(const std::string& text,
                                    const std::string& origin) {
  const auto lines = lines_of(text);
  if (lines.empty()) fail_at(origin, 1, "empty dictionary file");
  const auto header = parse_header(lines[0], "local_dictionary", origin);
  if (!header.count("n") || !header.count("m"))
    fail_at(origin, 1, "header must carry n= and m=");
  const Index n = header.at("n");
  const Index m = header.at("m");
  if (n < 1 || m < 1) fail_at(origin, 1, "n and m must be positive");
  if (static_cast<Index>(lines.size()) < n + 1)
    fail_at(origin, lines.size(), "expected " + std::to_string(n) + " data rows");
  MatrixXd raw(n, m);
  for (Index r = 0; r < n; ++r) {
    const auto fields = split(trim(lines[r + 1]), ',');
    if (static_cast<Index>(fields.size()) != m)
      fail_at(origin, r + 2,
              "expected " + std::to_string(m) + " columns, got " +
                  std::to_string(fields.size()));
    for (Index j = 0; j < m; ++j)
      raw(r, j) = parse_number(trim(fields[j]), origin, r + 2);
  }
  return make_local_dictionary(raw);
}

void save_dictionary(const std::string& path, const LocalDictionary& dict) {
  write_text_atomic(path, dictionary_to_csv(dict));
}

LocalDictionary load_dictionary(const std::string& path) {
  return dictionary_from_csv(read_text(path), path);
}

std::string code_to_csv(const GlobalCode& code) {
  std::string out = "# global_code N=" + std::to_string(code.N()) +
                    " m=" + std::to_string(code.m()) + "\n";
  out += "shift,filter,value\n";
  for (const auto& [c, v] : code.entries()) {
    out += std::to_string(c / code.m()) + ',' + std::to_string(c % code.m()) +
           ',' + format_double(v) + '\n';
  }
  return out;
}

GlobalCode code_from_csv(const std::string& text, const std::string& origin) {
  const auto lines = lines_of(text);
  if (lines.empty()) fail_at(origin, 1, "empty code file");
  const auto header = parse_header(lines[0], "global_code", origin);
  if (!header.count("N") || !header.count("m"))
    fail_at(origin, 1, "header must carry N= and m=");
  GlobalCode code(header.at("N"), header.at("m"));
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const std::string line = trim(lines[l]);
    if (line.empty() || line == "shift,filter,value") continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3)
      fail_at(origin, l + 1, "expected 'shift,filter,value'");
    const Index shift = parse_integer(trim(fields[0]), origin, l + 1);
    const Index filter = parse_integer(trim(fields[1]), origin, l + 1);
    const double value = parse_number(trim(fields[2]), origin, l + 1);
    if (shift < 0 || shift >= code.N() || filter < 0 || filter >= code.m())
      fail_at(origin, l + 1, "entry position out of range");
    code.set(shift, filter, value);
  }
  return code;
}

void save_code(const std::string& path, const GlobalCode& code) {
  write_text_atomic(path, code_to_csv(code));
}

GlobalCode load_code(const std::string& path) {
  return code_from_csv(read_text(path), path);
}

std::string signal_to_csv(const Eigen::Ref<const VectorXd>& signal) {
  std::string out = "# signal N=" + std::to_string(signal.size()) + "\n";
  for (Index i = 0; i < signal.size(); ++i) out += format_double(signal[i]) + "\n";
  return out;
}

VectorXd signal_from_csv(const std::string& text, const std::string& origin) {
  const auto lines = lines_of(text);
  std::vector<double> samples;
  std::optional<Index> declared;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::string line = trim(lines[l]);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (l == 0) {
        const auto header = parse_header(line, "signal", origin);
        if (header.count("N")) declared = header.at("N");
      }
      continue;
    }
    samples.push_back(parse_number(line, origin, l + 1));
  }
  if (declared && *declared != static_cast<Index>(samples.size()))
    fail_at(origin, lines.size(),
            "header declares N=" + std::to_string(*declared) + " but file has " +
                std::to_string(samples.size()) + " samples");
  return Eigen::Map<const VectorXd>(samples.data(),
                                    static_cast<Index>(samples.size()));
}

void save_signal(const std::string& path,
                 const Eigen::Ref<const VectorXd>& signal) {
  write_text_atomic(path, signal_to_csv(signal));
}

VectorXd load_signal(const std::string& path) {
  return signal_from_csv(read_text(path), path);
}

std::string profile_to_csv(const CoherenceProfile& profile) {
  std::string out = "s,mu_s\n";
  for (Index s = -profile.n + 1; s <= profile.n - 1; ++s)
    out += std::to_string(s) + ',' + format_double(profile.at(s)) + '\n';
  return out;
}

nlohmann::json bound_report_to_json(const BoundReport& report) {
  auto finite_or_null = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return nullptr;
    return v;
  };
  return {
      {"mu_global", report.mu_global},
      {"mu_zero", report.mu_zero},
      {"welch_lower", report.welch_lower},
      {"uniqueness_threshold", finite_or_null(report.uniqueness_threshold)},
      {"omp_threshold", finite_or_null(report.uniqueness_threshold)},
      {"bp_threshold", finite_or_null(report.uniqueness_threshold)},
      {"stripe_spark_lower", finite_or_null(report.stripe_spark_lower)},
      {"bp_noisy_threshold", finite_or_null(report.bp_noisy_threshold)},
      {"stripe_coherence_threshold", report.stripe_coherence_threshold},
      {"mu_is_zero", report.mu_is_zero},
  };
}

nlohmann::json instance_to_json(const ConvOperator& op,
                                const SyntheticInstance& inst,
                                const nlohmann::json& meta) {
  return {
      {"format", "convsparse-instance-v1"},
      {"prng", kRngStreamId},
      {"n", op.n()},
      {"m", op.m()},
      {"N", op.N()},
      {"dictionary_csv", dictionary_to_csv(op.local())},
      {"code_csv", code_to_csv(inst.gamma_true)},
      {"x_csv", signal_to_csv(inst.x)},
      {"e_csv", signal_to_csv(inst.e)},
      {"y_csv", signal_to_csv(inst.y)},
      {"eps_global", inst.eps_global},
      {"eps_local", inst.eps_local},
      {"gamma_min", inst.gamma_min},
      {"l0inf", inst.l0inf_true},
      {"meta", meta},
  };
}

StoredInstance instance_from_json(const nlohmann::json& j,
                                  const std::string& origin) {
  if (!j.is_object() || j.value("format", "") != "convsparse-instance-v1")
    throw std::invalid_argument(origin + ": not a convsparse instance file");
  StoredInstance stored;
  stored.dict = dictionary_from_csv(j.at("dictionary_csv").get<std::string>(),
                                    origin + "#dictionary");
  stored.N = j.at("N").get<Index>();
  ConvOperator op(stored.dict, stored.N);
  SyntheticInstance& inst = stored.instance;
  inst.gamma_true =
      code_from_csv(j.at("code_csv").get<std::string>(), origin + "#code");
  inst.x = signal_from_csv(j.at("x_csv").get<std::string>(), origin + "#x");
  inst.e = signal_from_csv(j.at("e_csv").get<std::string>(), origin + "#e");
  inst.y = signal_from_csv(j.at("y_csv").get<std::string>(), origin + "#y");
  inst.eps_global = j.at("eps_global").get<double>();
  inst.eps_local = j.at("eps_local").get<double>();
  inst.gamma_min = j.at("gamma_min").get<double>();
  inst.l0inf_true = j.at("l0inf").get<Index>();
  stored.meta = j.value("meta", nlohmann::json::object());

  // Re-validate the stored invariants.
  if (inst.y.size() != inst.x.size() || inst.e.size() != inst.x.size() ||
      !(inst.y.array() == (inst.x + inst.e).array()).all())
    throw std::invalid_argument(origin + ": y != x + e");
  if ((inst.x - apply(op, inst.gamma_true)).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument(origin + ": x does not match D*gamma");
  if (std::abs(inst.e.norm() - inst.eps_global) > 1e-12 * (1.0 + inst.eps_global))
    throw std::invalid_argument(origin + ": eps_global does not match e");
  double eps_local = 0.0;
  for (Index i = 0; i < op.N(); ++i)
    eps_local = std::max(eps_local, extract_patch(op, inst.e, i).norm());
  if (std::abs(eps_local - inst.eps_local) > 1e-12 * (1.0 + eps_local))
    throw std::invalid_argument(origin + ": eps_local does not match e");
  if (op.stripes_valid() && l0_inf(inst.gamma_true, op) != inst.l0inf_true)
    throw std::invalid_argument(origin + ": l0inf does not match code");
  return stored;
}

void save_instance(const std::string& path, const ConvOperator& op,
                   const SyntheticInstance& inst, const nlohmann::json& meta) {
  write_text_atomic(path, instance_to_json(op, inst, meta).dump(2) + "\n");
}

StoredInstance load_instance(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return instance_from_json(j, path);
}

KeyValueConfig KeyValueConfig::parse(const std::string& text,
                                     const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  const auto lines = lines_of(text);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    std::string line = lines[l];
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail_at(origin, l + 1, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_at(origin, l + 1, "empty key");
    if (cfg.values_.count(key)) fail_at(origin, l + 1, "duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  return parse(read_text(path), path);
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::invalid_argument(origin_ + ": missing required key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key,
                                   const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::number(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return parse_number(it->second, origin_ + " key '" + key + "'", 0);
}

std::int64_t KeyValueConfig::integer(const std::string& key,
                                     std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return parse_integer(it->second, origin_ + " key '" + key + "'", 0);
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace convsparse
