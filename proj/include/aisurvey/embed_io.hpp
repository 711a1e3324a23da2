#pragma once

#include "aisurvey/survey_store.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aisurvey {

struct PromptTemplate {
  std::string prefix =
      "Below is an instruction that describes a task. Write a response that appropriately completes the request.";
  std::string infix = "\n\n### Instruction:";
  std::string suffix = "\n\n### Response:";

  std::string render(std::string_view question_text) const;
};

// Alpaca-style instruction prompt wrapped around a survey question.
std::string build_prompt(std::string_view question_text);

enum class ExtractionMode { LastToken, Pooled };
std::string_view to_string(ExtractionMode mode);
ExtractionMode parse_extraction_mode(std::string_view text);

// Frozen per-question vectors, stored at 32-bit precision, row-major.
struct EmbeddingMatrix {
  int dim = 0;
  std::vector<std::string> labels;  // row i belongs to labels[i]
  std::vector<float> values;        // labels.size() * dim
  std::string model_tag;
  ExtractionMode extraction_mode = ExtractionMode::LastToken;

  std::size_t count() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  }
  // count x dim in 64-bit for downstream arithmetic.
  Eigen::MatrixXd to_matrix() const;
  static EmbeddingMatrix from_matrix(const Eigen::MatrixXd& m, std::vector<std::string> labels, std::string model_tag,
                                     ExtractionMode mode = ExtractionMode::LastToken);
};

// Reads either a JSON manifest (payload beside it) or the delimited-text
// fallback `variable,v1,...,vD` (selected by a .csv/.txt extension).
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

// Reads and aligns rows to the dataset's dense question IDs. Variables not
// in the dataset are dropped with a warning on stderr.
EmbeddingMatrix load_embeddings(const std::filesystem::path& manifest_path, const SurveyDataset& ds);
EmbeddingMatrix align_embeddings(EmbeddingMatrix raw, const SurveyDataset& ds, std::vector<std::string>* dropped = nullptr);

void export_vectors(const EmbeddingMatrix& matrix, const std::filesystem::path& manifest_path);
void export_vectors_csv(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

}  // namespace aisurvey
