#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace aisurvey {

// Manifest (JSON text) + payload (little-endian float32, row-major) with a
// SHA-256 per tensor. The payload sits beside the manifest with the
// extension replaced by ".bin".
inline constexpr int kTensorFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;  // vectors are stored as n x 1
};

struct TensorBundle {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Eigen::MatrixXd& get(const std::string& name) const;
};

std::filesystem::path payload_path_for(const std::filesystem::path& manifest);

void write_f32_le(std::vector<unsigned char>& out, double value);
float read_f32_le(const unsigned char* bytes);

void save_bundle(const TensorBundle& bundle, const std::filesystem::path& manifest);
TensorBundle load_bundle(const std::filesystem::path& manifest);

// Writes text atomically enough for our purposes: truncate + write + check.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace aisurvey
