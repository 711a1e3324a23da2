#pragma once

#include "aisurvey/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aisurvey {

struct ResponseRecord {
  int year = 0;
  std::int64_t respondent_key = 0;
  std::string variable;
  std::string question_text;
  int binarized = 0;
  double weight = 1.0;

  bool operator==(const ResponseRecord&) const = default;
};

// Bijection between raw keys and dense IDs [0, n) assigned in ascending
// sorted order of the raw key.
template <typename Key>
class IdIndex {
 public:
  IdIndex() = default;

  static IdIndex build(std::vector<Key> keys) {
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    IdIndex index;
    index.keys_ = std::move(keys);
    return index;
  }

  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  std::optional<int> find(const Key& key) const {
    auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    if (it == keys_.end() || !(*it == key)) return std::nullopt;
    return static_cast<int>(it - keys_.begin());
  }

  int encode(const Key& key) const {
    auto id = find(key);
    if (!id) throw Error(ErrorKind::Index, "unknown key");
    return *id;
  }

  const Key& decode(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= keys_.size()) {
      throw Error(ErrorKind::Index, "dense id " + std::to_string(id) + " out of range");
    }
    return keys_[static_cast<std::size_t>(id)];
  }

  std::span<const Key> keys() const { return keys_; }

 private:
  std::vector<Key> keys_;
};

template <typename Key>
IdIndex<Key> encode_ids(std::vector<Key> raw_keys) {
  return IdIndex<Key>::build(std::move(raw_keys));
}

// One response in dense coordinates.
struct Observation {
  int individual = 0;
  int question = 0;
  int year = 0;  // dense year rank
  int label = 0;
  double weight = 1.0;
};

// Immutable after construction; safe to share across reader threads.
class SurveyDataset {
 public:
  SurveyDataset() = default;

  // Validates and indexes. Throws DuplicateKey / InvalidResponse.
  static SurveyDataset from_records(std::vector<ResponseRecord> records);

  std::span<const ResponseRecord> records() const { return records_; }
  std::span<const Observation> observations() const { return observations_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const IdIndex<std::int64_t>& individuals() const { return individuals_; }
  const IdIndex<std::string>& questions() const { return questions_; }
  const IdIndex<int>& years() const { return years_; }

  int n_individuals() const { return static_cast<int>(individuals_.size()); }
  int n_questions() const { return static_cast<int>(questions_.size()); }
  int n_years() const { return static_cast<int>(years_.size()); }

  const std::string& question_text(int question) const { return question_texts_.at(static_cast<std::size_t>(question)); }
  std::span<const std::string> question_texts() const { return question_texts_; }
  std::span<const std::string> warnings() const { return warnings_; }

 private:
  std::vector<ResponseRecord> records_;
  std::vector<Observation> observations_;
  IdIndex<std::int64_t> individuals_;
  IdIndex<std::string> questions_;
  IdIndex<int> years_;
  std::vector<std::string> question_texts_;
  std::vector<std::string> warnings_;
};

struct IngestOptions {
  bool use_weight_column = true;
  std::vector<std::string> include_variables;  // empty = all
  std::vector<std::string> exclude_variables;
};

// Canonical file: header `year,yearid,variable,question,binarized[,weight]`.
SurveyDataset ingest_responses(const std::filesystem::path& path, const IngestOptions& options = {});
std::vector<ResponseRecord> filter_records(std::vector<ResponseRecord> records, const IngestOptions& options);
void write_responses(const SurveyDataset& ds, const std::filesystem::path& path);

// Response-option label set -> per-option bit. Labels are matched after
// trimming and ASCII case folding.
class BinarizationMap {
 public:
  struct Entry {
    std::string key;
    std::vector<std::string> labels;  // normalized, in order
    std::vector<int> bits;
  };

  void add(const std::string& option_set_key, const std::string& label, int bit);

  // File columns: option_set_key,option_label,bit (header row required).
  static BinarizationMap load(const std::filesystem::path& path);
  // The fifty most frequent GSS option sets and their published mapping.
  static BinarizationMap top_response_options();

  int apply(const std::string& raw_label, std::span<const std::string> option_set) const;
  int apply_by_key(const std::string& option_set_key, const std::string& raw_label) const;

  const Entry* find_key(const std::string& option_set_key) const;
  std::size_t size() const { return entries_.size(); }

 private:
  const Entry& find_set(std::span<const std::string> option_set) const;

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> by_key_;
};

std::string normalize_label(std::string_view label);

int apply_binarization(const std::string& raw_label, std::span<const std::string> option_set,
                       const BinarizationMap& map);

// Raw file: `year,yearid,variable,question,response,option_set[,weight]`,
// where option_set names an entry of the map.
std::vector<ResponseRecord> binarize_raw_responses(const std::filesystem::path& path, const BinarizationMap& map);

struct CellStats {
  int question = 0;
  int year = 0;
  int count = 0;
  double positive_share = 0.0;
};

struct DatasetStats {
  std::size_t records = 0;
  int individuals = 0;
  int questions = 0;
  int years = 0;
  double sparsity = 0.0;  // records / (n * p * Y)
  std::vector<CellStats> cells;  // observed (question, year) cells, sorted
  std::vector<int> per_question;
  std::vector<int> per_year;

  // Zero-count cell when the pair was never observed.
  CellStats cell(int question, int year) const;
};

DatasetStats dataset_stats(const SurveyDataset& ds);
nlohmann::json stats_to_json(const SurveyDataset& ds, const DatasetStats& stats);
void write_stats_csv(const SurveyDataset& ds, const DatasetStats& stats, const std::filesystem::path& path);

}  // namespace aisurvey
