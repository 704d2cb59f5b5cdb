// File formats: dictionary/code/signal CSV, instance JSON, bound-report JSON
// and the key=value experiment config reader. All floats are printed with 17
// significant digits so written values round-trip bit exactly.
#ifndef CONVSPARSE_IO_HPP
#define CONVSPARSE_IO_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "convsparse/conv_dict.hpp"
#include "convsparse/measures.hpp"
#include "convsparse/synth.hpp"

namespace convsparse {

std::string format_double(double v);

/// Write-then-rename so readers never observe a half-written file.
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

// Dictionary CSV: "# local_dictionary n=<n> m=<m>" then n rows of m values.
std::string dictionary_to_csv(const LocalDictionary& dict);
LocalDictionary dictionary_from_csv(const std::string& text,
                                    const std::string& origin);
void save_dictionary(const std::string& path, const LocalDictionary& dict);
LocalDictionary load_dictionary(const std::string& path);

// Code CSV: "# global_code N=<N> m=<m>" then "shift,filter,value" triples in
// ascending column order.
std::string code_to_csv(const GlobalCode& code);
GlobalCode code_from_csv(const std::string& text, const std::string& origin);
void save_code(const std::string& path, const GlobalCode& code);
GlobalCode load_code(const std::string& path);

// Signal CSV: "# signal N=<N>" then one sample per line (header optional on
// input).
std::string signal_to_csv(const Eigen::Ref<const VectorXd>& signal);
VectorXd signal_from_csv(const std::string& text, const std::string& origin);
void save_signal(const std::string& path,
                 const Eigen::Ref<const VectorXd>& signal);
VectorXd load_signal(const std::string& path);

// Coherence profile CSV: "s,mu_s".
std::string profile_to_csv(const CoherenceProfile& profile);

nlohmann::json bound_report_to_json(const BoundReport& report);

/// Instance JSON bundles the dictionary, the code and all signals so an
/// experiment can be replayed from the file alone. Loading re-validates the
/// stored invariants (y = x + e, x = D gamma, noise levels, l0_inf).
struct StoredInstance {
  LocalDictionary dict;
  Index N = 0;
  SyntheticInstance instance;
  nlohmann::json meta;
};

nlohmann::json instance_to_json(const ConvOperator& op,
                                const SyntheticInstance& inst,
                                const nlohmann::json& meta);
StoredInstance instance_from_json(const nlohmann::json& j,
                                  const std::string& origin);
void save_instance(const std::string& path, const ConvOperator& op,
                   const SyntheticInstance& inst, const nlohmann::json& meta);
StoredInstance load_instance(const std::string& path);

/// Line-oriented "key = value" config files; '#' starts a comment. Lookups
/// remember which keys were consumed so unknown keys can be reported.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text,
                              const std::string& origin);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const;
  std::string require(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  const std::map<std::string, std::string>& entries() const { return values_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// FNV-1a, used to fingerprint dictionaries in experiment metadata.
std::string content_hash(const std::string& bytes);

}  // namespace convsparse

#endif  // CONVSPARSE_IO_HPP
