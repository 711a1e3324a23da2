#include "aisurvey/survey_store.hpp"

#include "aisurvey/csv.hpp"

#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace aisurvey {

namespace {

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::map<std::string, std::size_t> header_columns(const std::vector<std::string>& header) {
  std::map<std::string, std::size_t> cols;
  for (std::size_t i = 0; i < header.size(); ++i) cols[normalize_label(header[i])] = i;
  return cols;
}

std::size_t require_column(const std::map<std::string, std::size_t>& cols, const std::string& name,
                           const std::filesystem::path& path) {
  auto it = cols.find(name);
  if (it == cols.end()) throw Error(ErrorKind::Parse, path.string() + ": header lacks column '" + name + "'");
  return it->second;
}

}  // namespace

std::string normalize_label(std::string_view label) {
  while (!label.empty() && std::isspace(static_cast<unsigned char>(label.front()))) label.remove_prefix(1);
  while (!label.empty() && std::isspace(static_cast<unsigned char>(label.back()))) label.remove_suffix(1);
  std::string out(label);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

SurveyDataset SurveyDataset::from_records(std::vector<ResponseRecord> records) {
  SurveyDataset ds;
  std::vector<std::int64_t> individual_keys;
  std::vector<std::string> variables;
  std::vector<int> years;
  individual_keys.reserve(records.size());
  variables.reserve(records.size());
  years.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.binarized != 0 && r.binarized != 1) {
      throw Error(ErrorKind::InvalidResponse, "record " + std::to_string(i) + ": binarized value " +
                                                  std::to_string(r.binarized) + " not in {0,1}");
    }
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight)) {
      throw Error(ErrorKind::InvalidResponse, "record " + std::to_string(i) + ": weight must be finite and >= 0");
    }
    individual_keys.push_back(r.respondent_key);
    variables.push_back(r.variable);
    years.push_back(r.year);
  }
  ds.individuals_ = encode_ids(std::move(individual_keys));
  ds.questions_ = encode_ids(std::move(variables));
  ds.years_ = encode_ids(std::move(years));

  ds.question_texts_.assign(ds.questions_.size(), std::string());
  std::vector<bool> seen_text(ds.questions_.size(), false);
  std::unordered_set<std::uint64_t> triples;
  triples.reserve(records.size());
  const auto n_q = static_cast<std::uint64_t>(ds.questions_.size());
  const auto n_y = static_cast<std::uint64_t>(ds.years_.size());
  ds.observations_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Observation o;
    o.individual = ds.individuals_.encode(r.respondent_key);
    o.question = ds.questions_.encode(r.variable);
    o.year = ds.years_.encode(r.year);
    o.label = r.binarized;
    o.weight = r.weight;
    const std::uint64_t key = (static_cast<std::uint64_t>(o.individual) * n_q + static_cast<std::uint64_t>(o.question)) * n_y +
                              static_cast<std::uint64_t>(o.year);
    if (!triples.insert(key).second) {
      throw Error(ErrorKind::DuplicateKey, "record " + std::to_string(i) + ": duplicate (individual " +
                                               std::to_string(r.respondent_key) + ", question " + r.variable +
                                               ", year " + std::to_string(r.year) + ")");
    }
    auto q = static_cast<std::size_t>(o.question);
    if (!seen_text[q]) {
      ds.question_texts_[q] = r.question_text;
      seen_text[q] = true;
    } else if (ds.question_texts_[q] != r.question_text) {
      // first occurrence wins
      const std::string msg = "variable '" + r.variable + "' has conflicting question texts; keeping the first";
      if (std::find(ds.warnings_.begin(), ds.warnings_.end(), msg) == ds.warnings_.end()) ds.warnings_.push_back(msg);
    }
    ds.observations_.push_back(o);
  }
  ds.records_ = std::move(records);
  return ds;
}

std::vector<ResponseRecord> filter_records(std::vector<ResponseRecord> records, const IngestOptions& options) {
  const std::set<std::string> include(options.include_variables.begin(), options.include_variables.end());
  const std::set<std::string> exclude(options.exclude_variables.begin(), options.exclude_variables.end());
  for (const auto& v : include) {
    if (exclude.count(v)) throw Error(ErrorKind::Filter, "variable '" + v + "' is both included and excluded");
  }
  if (include.empty() && exclude.empty()) return records;
  std::erase_if(records, [&](const ResponseRecord& r) {
    if (!include.empty() && !include.count(r.variable)) return true;
    return exclude.count(r.variable) > 0;
  });
  return records;
}

SurveyDataset ingest_responses(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw Error(ErrorKind::Parse, path.string() + ": missing header row");
  const auto cols = header_columns(*header);
  const auto c_year = require_column(cols, "year", path);
  const auto c_key = require_column(cols, "yearid", path);
  const auto c_var = require_column(cols, "variable", path);
  const auto c_text = require_column(cols, "question", path);
  const auto c_bin = require_column(cols, "binarized", path);
  std::optional<std::size_t> c_weight;
  if (options.use_weight_column && cols.count("weight")) c_weight = cols.at("weight");

  std::vector<ResponseRecord> records;
  while (auto row = reader.next()) {
    const auto line = reader.line();
    if (row->size() == 1 && (*row)[0].empty()) continue;  // blank line
    if (row->size() != header->size()) {
      throw Error(ErrorKind::Parse, line_prefix(line) + "expected " + std::to_string(header->size()) +
                                        " fields, found " + std::to_string(row->size()));
    }
    ResponseRecord r;
    try {
      r.year = static_cast<int>(csv::parse_int((*row)[c_year]));
      r.respondent_key = csv::parse_int((*row)[c_key]);
      r.binarized = static_cast<int>(csv::parse_int((*row)[c_bin]));
      if (c_weight) r.weight = csv::parse_double((*row)[*c_weight]);
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse, line_prefix(line) + e.what());
    }
    r.variable = (*row)[c_var];
    r.question_text = (*row)[c_text];
    if (r.variable.empty()) throw Error(ErrorKind::Parse, line_prefix(line) + "empty variable name");
    if (r.binarized != 0 && r.binarized != 1) {
      throw Error(ErrorKind::InvalidResponse,
                  line_prefix(line) + "binarized value " + std::to_string(r.binarized) + " not in {0,1}");
    }
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight)) {
      throw Error(ErrorKind::InvalidResponse, line_prefix(line) + "weight must be finite and >= 0");
    }
    records.push_back(std::move(r));
  }
  auto ds = SurveyDataset::from_records(filter_records(std::move(records), options));
  for (const auto& w : ds.warnings()) std::cerr << "warning: " << w << '\n';
  return ds;
}

void write_responses(const SurveyDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  csv::write_row(out, {"year", "yearid", "variable", "question", "binarized", "weight"});
  for (const auto& r : ds.records()) {
    // Canonical text per variable so re-ingestion sees no conflicts.
    const auto& text = ds.question_text(ds.questions().encode(r.variable));
    csv::write_row(out, {std::to_string(r.year), std::to_string(r.respondent_key), r.variable, text,
                         std::to_string(r.binarized), csv::format_double(r.weight)});
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Binarization

void BinarizationMap::add(const std::string& option_set_key, const std::string& label, int bit) {
  if (bit != 0 && bit != 1) {
    throw Error(ErrorKind::InvalidResponse, "option '" + label + "' in set '" + option_set_key + "' maps to " +
                                                std::to_string(bit) + ", expected 0 or 1");
  }
  auto it = by_key_.find(option_set_key);
  if (it == by_key_.end()) {
    it = by_key_.emplace(option_set_key, entries_.size()).first;
    entries_.push_back({option_set_key, {}, {}});
  }
  auto& e = entries_[it->second];
  const auto norm = normalize_label(label);
  if (std::find(e.labels.begin(), e.labels.end(), norm) != e.labels.end()) {
    throw Error(ErrorKind::DuplicateKey, "option '" + label + "' listed twice in set '" + option_set_key + "'");
  }
  e.labels.push_back(norm);
  e.bits.push_back(bit);
}

BinarizationMap BinarizationMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw Error(ErrorKind::Parse, path.string() + ": missing header row");
  const auto cols = header_columns(*header);
  const auto c_key = require_column(cols, "option_set_key", path);
  const auto c_label = require_column(cols, "option_label", path);
  const auto c_bit = require_column(cols, "bit", path);
  BinarizationMap map;
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != header->size()) {
      throw Error(ErrorKind::Parse, line_prefix(reader.line()) + "wrong field count");
    }
    int bit = 0;
    try {
      bit = static_cast<int>(csv::parse_int((*row)[c_bit]));
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse, line_prefix(reader.line()) + e.what());
    }
    map.add((*row)[c_key], (*row)[c_label], bit);
  }
  return map;
}

const BinarizationMap::Entry* BinarizationMap::find_key(const std::string& option_set_key) const {
  auto it = by_key_.find(option_set_key);
  return it == by_key_.end() ? nullptr : &entries_[it->second];
}

const BinarizationMap::Entry& BinarizationMap::find_set(std::span<const std::string> option_set) const {
  std::vector<std::string> norm;
  norm.reserve(option_set.size());
  for (const auto& l : option_set) norm.push_back(normalize_label(l));
  for (const auto& e : entries_) {
    if (e.labels == norm) return e;
  }
  std::string joined;
  for (const auto& l : norm) joined += (joined.empty() ? "" : ", ") + l;
  throw Error(ErrorKind::UnmappedOptionSet, "no mapping for option set {" + joined + "}");
}

namespace {

int lookup_bit(const BinarizationMap::Entry& e, const std::string& raw_label) {
  const auto norm = normalize_label(raw_label);
  for (std::size_t i = 0; i < e.labels.size(); ++i) {
    if (e.labels[i] == norm) return e.bits[i];
  }
  throw Error(ErrorKind::UnknownLabel, "label '" + raw_label + "' not in option set '" + e.key + "'");
}

}  // namespace

int BinarizationMap::apply(const std::string& raw_label, std::span<const std::string> option_set) const {
  return lookup_bit(find_set(option_set), raw_label);
}

int BinarizationMap::apply_by_key(const std::string& option_set_key, const std::string& raw_label) const {
  const auto* e = find_key(option_set_key);
  if (!e) throw Error(ErrorKind::UnmappedOptionSet, "no mapping for option set key '" + option_set_key + "'");
  return lookup_bit(*e, raw_label);
}

int apply_binarization(const std::string& raw_label, std::span<const std::string> option_set,
                       const BinarizationMap& map) {
  return map.apply(raw_label, option_set);
}

BinarizationMap BinarizationMap::top_response_options() {
  struct Row {
    std::vector<std::string> labels;
    std::vector<int> bits;
  };
  // Ranked by frequency across the questionnaire.
  const std::vector<Row> rows = {
      {{"yes", "no"}, {1, 0}},
      {{"strongly agree", "agree", "neither agree nor disagree", "disagree", "strongly disagree"}, {1, 1, 0, 0, 0}},
      {{"strongly agree", "agree", "disagree", "strongly disagree"}, {1, 1, 0, 0}},
      {{"mentioned", "not mentioned"}, {1, 0}},
      {{"very likely", "somewhat likely", "not very likely", "not at all likely"}, {1, 1, 0, 0}},
      {{"too little", "about right", "too much"}, {0, 0, 1}},
      {{"true", "false"}, {1, 0}},
      {{"strongly agree", "agree", "not agree/disagree", "disagree", "strongly disagree"}, {1, 1, 0, 0, 0}},
      {{"agree", "disagree"}, {1, 0}},
      {{"strongly agree", "agree", "neither", "disagree", "strongly disagree"}, {1, 1, 0, 0, 0}},
      {{"often", "sometimes", "rarely", "never"}, {1, 1, 0, 0}},
      {{"agree strongly", "agree", "neither agree nor disagree", "disagree", "disagree strongly"}, {1, 1, 0, 0, 0}},
      {{"not at all", "1 or 2 times", "3-5 times", "6 or more times"}, {0, 0, 1, 1}},
      {{"1 most desirable", "3 most desirable", "not mentioned", "3 least desirable", "1 least desirable"},
       {1, 1, 0, 0, 0}},
      {{"strongly favor", "favor", "neither favor nor oppose", "oppose", "strongly oppose"}, {1, 1, 0, 0, 0}},
      {{"never", "1-2 times", "3-5 times", "more than 5 times"}, {0, 0, 1, 1}},
      {{"strongly agree", "agree", "disagree, or", "strongly disagree?"}, {1, 1, 0, 0}},
      {{"definitely allowed", "probably allowed", "prob not allowed", "definitely not allowed"}, {1, 1, 0, 0}},
      {{"very likely", "somewhat likely", "somewhat unlikely", "very unlikely"}, {1, 1, 0, 0}},
      {{"very true", "somewhat true", "not too true", "not at all true"}, {1, 1, 0, 0}},
      {{"definitely should", "probably should", "probably should not", "definitely should not"}, {1, 1, 0, 0}},
      {{"like very much", "like it", "mixed feelings", "dislike it", "dislike very much"}, {1, 1, 0, 0, 0}},
      {{"spend much more", "spend more", "spend same", "spend less", "spend much less"}, {1, 1, 0, 0, 0}},
      {{"very important", "important", "somewhat important", "not at all important"}, {1, 1, 0, 0}},
      {{"very likely", "somewhat likely", "mixed", "somewhat unlikely", "very unlikely"}, {1, 1, 0, 0, 0}},
      {{"essential", "very important", "fairly important", "not very important", "not important at all"},
       {1, 1, 1, 0, 0}},
      {{"did", "didn't"}, {1, 0}},
      {{"strongly agree", "somewhat agree", "somewhat disagree", "strongly disagree"}, {1, 1, 0, 0}},
      {{"definitely willing", "probably willing", "probably unwilling", "definitely unwilling"}, {1, 1, 0, 0}},
      {{"should", "should not"}, {1, 0}},
      {{"strongly agree", "agree somewhat", "disagree somewhat", "strongly disagree"}, {1, 1, 0, 0}},
      {{"definitely expect", "probably expect", "probably not expect", "definitely not expect"}, {1, 1, 0, 0}},
      {{"a great deal of influence", "a fair amount", "a little influence", "none at all"}, {1, 1, 0, 0}},
      {{"strongly agree", "agree", "uncertain", "disagree", "strongly disagree"}, {1, 1, 0, 0, 0}},
      {{"a reason", "not a reason"}, {1, 0}},
      {{"major reason", "minor reason", "not a reason"}, {1, 0, 0}},
      {{"no", "yes, respondent", "yes, someone respondent knows", "yes, both respondent and someone respondent knows"},
       {0, 1, 1, 1}},
      {{"1 not at all effective", "2", "3", "4", "5 extremely effective"}, {0, 0, 0, 1, 1}},
      {{"remove", "not remove"}, {1, 0}},
      {{"a great deal", "only some", "hardly any"}, {1, 0, 0}},
      {{"most important", "2nd most imp.", "3rd most imp.", "not chosen"}, {1, 1, 0, 0}},
      {{"very likely", "somewhat likely", "not too likely", "not likely at all"}, {1, 1, 0, 0}},
      {{"definitely true", "probably true", "probably not true", "definitely not true"}, {1, 1, 0, 0}},
      {{"allowed", "not allowed"}, {1, 0}},
      {{"no", "yes"}, {0, 1}},
      {{"too much", "about the right amount", "too little"}, {1, 0, 0}},
      {{"extremely likely", "somewhat likely", "not too likely", "not likely at all"}, {1, 1, 0, 0}},
      {{"extremely dangerous", "very dangerous", "somewhat dangerous", "not very dangerous", "not dangerous"},
       {1, 1, 1, 0, 0}},
      {{"excellent", "very good", "good", "fair", "poor"}, {1, 1, 1, 0, 0}},
      {{"many times a day", "every day", "most days", "some days", "once in a while", "never or almost never"},
       {1, 1, 1, 0, 0, 0}},
  };
  BinarizationMap map;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "top%02zu", i + 1);
    for (std::size_t j = 0; j < rows[i].labels.size(); ++j) map.add(key, rows[i].labels[j], rows[i].bits[j]);
  }
  return map;
}

std::vector<ResponseRecord> binarize_raw_responses(const std::filesystem::path& path, const BinarizationMap& map) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw Error(ErrorKind::Parse, path.string() + ": missing header row");
  const auto cols = header_columns(*header);
  const auto c_year = require_column(cols, "year", path);
  const auto c_key = require_column(cols, "yearid", path);
  const auto c_var = require_column(cols, "variable", path);
  const auto c_text = require_column(cols, "question", path);
  const auto c_resp = require_column(cols, "response", path);
  const auto c_set = require_column(cols, "option_set", path);
  std::optional<std::size_t> c_weight;
  if (cols.count("weight")) c_weight = cols.at("weight");

  std::vector<ResponseRecord> records;
  while (auto row = reader.next()) {
    const auto line = reader.line();
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != header->size()) throw Error(ErrorKind::Parse, line_prefix(line) + "wrong field count");
    ResponseRecord r;
    try {
      r.year = static_cast<int>(csv::parse_int((*row)[c_year]));
      r.respondent_key = csv::parse_int((*row)[c_key]);
      if (c_weight) r.weight = csv::parse_double((*row)[*c_weight]);
      r.binarized = map.apply_by_key((*row)[c_set], (*row)[c_resp]);
    } catch (const Error& e) {
      throw Error(e.kind(), line_prefix(line) + e.what());
    }
    r.variable = (*row)[c_var];
    r.question_text = (*row)[c_text];
    records.push_back(std::move(r));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Stats

CellStats DatasetStats::cell(int question, int year) const {
  auto it = std::lower_bound(cells.begin(), cells.end(), std::pair{question, year}, [](const CellStats& c, auto key) {
    return std::pair{c.question, c.year} < key;
  });
  if (it != cells.end() && it->question == question && it->year == year) return *it;
  return CellStats{question, year, 0, 0.0};
}

DatasetStats dataset_stats(const SurveyDataset& ds) {
  DatasetStats s;
  s.records = ds.size();
  s.individuals = ds.n_individuals();
  s.questions = ds.n_questions();
  s.years = ds.n_years();
  const double denom = static_cast<double>(s.individuals) * s.questions * s.years;
  s.sparsity = denom > 0 ? static_cast<double>(s.records) / denom : 0.0;
  s.per_question.assign(static_cast<std::size_t>(s.questions), 0);
  s.per_year.assign(static_cast<std::size_t>(s.years), 0);
  std::map<std::pair<int, int>, std::pair<int, int>> cells;
  for (const auto& o : ds.observations()) {
    auto& c = cells[{o.question, o.year}];
    c.first += 1;
    c.second += o.label;
    ++s.per_question[static_cast<std::size_t>(o.question)];
    ++s.per_year[static_cast<std::size_t>(o.year)];
  }
  for (const auto& [key, v] : cells) {
    s.cells.push_back({key.first, key.second, v.first, static_cast<double>(v.second) / v.first});
  }
  return s;
}

nlohmann::json stats_to_json(const SurveyDataset& ds, const DatasetStats& stats) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : stats.cells) {
    cells.push_back({{"variable", ds.questions().decode(c.question)},
                     {"year", ds.years().decode(c.year)},
                     {"count", c.count},
                     {"positive_share", c.positive_share}});
  }
  return {{"records", stats.records},   {"individuals", stats.individuals}, {"questions", stats.questions},
          {"years", stats.years},       {"sparsity", stats.sparsity},       {"cells", cells}};
}

void write_stats_csv(const SurveyDataset& ds, const DatasetStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  csv::write_row(out, {"variable", "year", "count", "positive_share"});
  for (const auto& c : stats.cells) {
    csv::write_row(out, {ds.questions().decode(c.question), std::to_string(ds.years().decode(c.year)),
                         std::to_string(c.count), csv::format_double(c.positive_share)});
  }
}

}  // namespace aisurvey
