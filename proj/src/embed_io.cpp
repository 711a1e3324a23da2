#include "aisurvey/embed_io.hpp"

#include "aisurvey/csv.hpp"
#include "aisurvey/tensor_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <unordered_map>

namespace aisurvey {

std::string PromptTemplate::render(std::string_view question_text) const {
  if (question_text.empty()) throw Error(ErrorKind::EmptyQuestion, "question text is empty");
  std::string out;
  out.reserve(prefix.size() + infix.size() + question_text.size() + suffix.size());
  out += prefix;
  out += infix;
  out += question_text;
  out += suffix;
  return out;
}

std::string build_prompt(std::string_view question_text) {
  static const PromptTemplate kTemplate;
  return kTemplate.render(question_text);
}

std::string_view to_string(ExtractionMode mode) {
  return mode == ExtractionMode::LastToken ? "last-token" : "pooled";
}

ExtractionMode parse_extraction_mode(std::string_view text) {
  if (text == "last-token") return ExtractionMode::LastToken;
  if (text == "pooled") return ExtractionMode::Pooled;
  throw Error(ErrorKind::Format, "unknown extraction mode '" + std::string(text) + "'");
}

Eigen::MatrixXd EmbeddingMatrix::to_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(count()), dim);
  for (std::size_t i = 0; i < count(); ++i) {
    auto r = row(i);
    for (int j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), j) = r[static_cast<std::size_t>(j)];
  }
  return m;
}

EmbeddingMatrix EmbeddingMatrix::from_matrix(const Eigen::MatrixXd& m, std::vector<std::string> labels,
                                             std::string model_tag, ExtractionMode mode) {
  if (static_cast<Eigen::Index>(labels.size()) != m.rows()) {
    throw Error(ErrorKind::Shape, "label count does not match matrix rows");
  }
  EmbeddingMatrix e;
  e.dim = static_cast<int>(m.cols());
  e.labels = std::move(labels);
  e.model_tag = std::move(model_tag);
  e.extraction_mode = mode;
  e.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) e.values.push_back(static_cast<float>(m(r, c)));
  }
  return e;
}

namespace {

void check_finite(const EmbeddingMatrix& e, const std::string& source) {
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    if (!std::isfinite(e.values[i])) {
      const auto row = i / static_cast<std::size_t>(e.dim);
      throw Error(ErrorKind::CorruptEmbedding, source + ": non-finite value in row '" + e.labels[row] + "' column " +
                                                   std::to_string(i % static_cast<std::size_t>(e.dim)));
    }
  }
}

EmbeddingMatrix read_manifest(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Format, path.string() + ": " + ex.what());
  }
  EmbeddingMatrix e;
  try {
    e.dim = doc.at("dim").get<int>();
    const auto count = doc.at("count").get<std::size_t>();
    e.labels = doc.at("variables").get<std::vector<std::string>>();
    e.model_tag = doc.value("model_tag", "");
    e.extraction_mode = parse_extraction_mode(doc.value("extraction_mode", "last-token"));
    if (e.dim <= 0) throw Error(ErrorKind::Format, "dim must be positive");
    if (e.labels.size() != count) {
      throw Error(ErrorKind::Format, "manifest count " + std::to_string(count) + " but " +
                                         std::to_string(e.labels.size()) + " variables listed");
    }
    const auto payload = path.parent_path() / doc.value("payload", payload_path_for(path).filename().string());
    std::ifstream in(payload, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read payload " + payload.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = count * static_cast<std::size_t>(e.dim) * 4;
    if (bytes.size() != expected) {
      throw Error(ErrorKind::Format, "payload has " + std::to_string(bytes.size()) + " bytes, manifest implies " +
                                         std::to_string(expected));
    }
    e.values.resize(count * static_cast<std::size_t>(e.dim));
    for (std::size_t i = 0; i < e.values.size(); ++i) e.values[i] = read_f32_le(bytes.data() + 4 * i);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Format, path.string() + ": " + ex.what());
  }
  check_finite(e, path.string());
  return e;
}

EmbeddingMatrix read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  csv::Reader reader(in);
  EmbeddingMatrix e;
  e.model_tag = "delimited";
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() < 2) throw Error(ErrorKind::Format, "line " + std::to_string(reader.line()) + ": no values");
    const int width = static_cast<int>(row->size()) - 1;
    if (e.dim == 0) e.dim = width;
    if (width != e.dim) {
      throw Error(ErrorKind::Format, "line " + std::to_string(reader.line()) + ": width " + std::to_string(width) +
                                         " differs from " + std::to_string(e.dim));
    }
    e.labels.push_back((*row)[0]);
    for (int j = 1; j <= width; ++j) {
      double v = 0.0;
      const auto& field = (*row)[static_cast<std::size_t>(j)];
      if (field == "nan" || field == "NaN" || field == "inf" || field == "-inf") {
        v = std::nan("");
      } else {
        try {
          v = csv::parse_double(field);
        } catch (const Error&) {
          throw Error(ErrorKind::Format, "line " + std::to_string(reader.line()) + ": bad value '" + field + "'");
        }
      }
      e.values.push_back(static_cast<float>(v));
    }
  }
  check_finite(e, path.string());
  return e;
}

}  // namespace

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv" || ext == ".txt") return read_delimited(path);
  return read_manifest(path);
}

EmbeddingMatrix align_embeddings(EmbeddingMatrix raw, const SurveyDataset& ds, std::vector<std::string>* dropped) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < raw.labels.size(); ++i) {
    if (!position.emplace(raw.labels[i], i).second) {
      throw Error(ErrorKind::Format, "variable '" + raw.labels[i] + "' appears twice in embedding file");
    }
  }
  std::vector<std::string> missing;
  for (const auto& v : ds.questions().keys()) {
    if (!position.count(v)) missing.push_back(v);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& v : missing) list += (list.empty() ? "" : ", ") + v;
    throw Error(ErrorKind::Alignment, "embeddings missing for dataset variables: " + list);
  }
  EmbeddingMatrix out;
  out.dim = raw.dim;
  out.model_tag = raw.model_tag;
  out.extraction_mode = raw.extraction_mode;
  for (const auto& v : ds.questions().keys()) {
    auto r = raw.row(position.at(v));
    out.labels.push_back(v);
    out.values.insert(out.values.end(), r.begin(), r.end());
  }
  if (dropped) {
    for (const auto& l : raw.labels) {
      if (!ds.questions().find(l)) dropped->push_back(l);
    }
  }
  return out;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& manifest_path, const SurveyDataset& ds) {
  std::vector<std::string> dropped;
  auto aligned = align_embeddings(read_embeddings(manifest_path), ds, &dropped);
  if (!dropped.empty()) {
    std::cerr << "warning: dropped " << dropped.size() << " embedding rows for variables absent from the dataset\n";
  }
  return aligned;
}

void export_vectors(const EmbeddingMatrix& matrix, const std::filesystem::path& manifest_path) {
  if (matrix.values.size() != matrix.count() * static_cast<std::size_t>(matrix.dim)) {
    throw Error(ErrorKind::Shape, "embedding payload size does not match dim x count");
  }
  const auto bin = payload_path_for(manifest_path);
  std::vector<unsigned char> bytes;
  bytes.reserve(matrix.values.size() * 4);
  for (float v : matrix.values) write_f32_le(bytes, v);
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + bin.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + bin.string());
  }
  nlohmann::json doc = {{"dim", matrix.dim},
                        {"count", matrix.count()},
                        {"model_tag", matrix.model_tag},
                        {"extraction_mode", std::string(to_string(matrix.extraction_mode))},
                        {"payload", bin.filename().string()},
                        {"variables", matrix.labels}};
  write_text_file(manifest_path, doc.dump(2) + "\n");
}

void export_vectors_csv(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t i = 0; i < matrix.count(); ++i) {
    std::vector<std::string> row{matrix.labels[i]};
    for (float v : matrix.row(i)) row.push_back(csv::format_double(static_cast<double>(v)));
    csv::write_row(out, row);
  }
}

}  // namespace aisurvey
