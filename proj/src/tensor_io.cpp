#include "aisurvey/tensor_io.hpp"

#include "aisurvey/error.hpp"
#include "aisurvey/hashing.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>

namespace aisurvey {

const Eigen::MatrixXd& TensorBundle::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw Error(ErrorKind::Format, "tensor '" + name + "' missing from bundle of kind " + kind);
}

std::filesystem::path payload_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

void write_f32_le(std::vector<unsigned char>& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFF));
}

float read_f32_le(const unsigned char* bytes) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_bundle(const TensorBundle& bundle, const std::filesystem::path& manifest) {
  std::vector<unsigned char> payload;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& t : bundle.tensors) {
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(t.value.size()) * 4);
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) write_f32_le(bytes, t.value(r, c));
    }
    entries.push_back({{"name", t.name},
                       {"rows", t.value.rows()},
                       {"cols", t.value.cols()},
                       {"offset", payload.size()},
                       {"sha256", sha256_hex(bytes)}});
    payload.insert(payload.end(), bytes.begin(), bytes.end());
  }
  const auto bin = payload_path_for(manifest);
  nlohmann::json doc = {{"format", "aisurvey-tensors"},
                        {"version", kTensorFormatVersion},
                        {"kind", bundle.kind},
                        {"payload", bin.filename().string()},
                        {"meta", bundle.meta},
                        {"tensors", entries}};
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + bin.string());
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + bin.string());
  }
  write_text_file(manifest, doc.dump(2) + "\n");
}

TensorBundle load_bundle(const std::filesystem::path& manifest) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, manifest.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "aisurvey-tensors") {
    throw Error(ErrorKind::Format, manifest.string() + " is not a tensor manifest");
  }
  const int version = doc.value("version", -1);
  if (version != kTensorFormatVersion) {
    throw Error(ErrorKind::Version, "unsupported tensor manifest version " + std::to_string(version));
  }
  const auto bin = manifest.parent_path() / doc.at("payload").get<std::string>();
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + bin.string());
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  TensorBundle bundle;
  bundle.kind = doc.value("kind", "");
  bundle.meta = doc.value("meta", nlohmann::json::object());
  for (const auto& e : doc.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t len = static_cast<std::size_t>(rows * cols) * 4;
    if (offset + len > payload.size()) {
      throw Error(ErrorKind::Format, "tensor '" + name + "' extends past end of payload");
    }
    std::span<const unsigned char> bytes(payload.data() + offset, len);
    if (sha256_hex(bytes) != e.at("sha256").get<std::string>()) {
      throw Error(ErrorKind::Checksum, "tensor '" + name + "' failed checksum verification");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        m(r, c) = read_f32_le(bytes.data() + 4 * static_cast<std::size_t>(r * cols + c));
      }
    }
    bundle.tensors.push_back({name, std::move(m)});
  }
  return bundle;
}

}  // namespace aisurvey
