#include "aisurvey/hashing.hpp"

#include "aisurvey/error.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

namespace aisurvey {

namespace {

std::string digest_hex(const EVP_MD* md, std::span<const std::span<const unsigned char>> parts) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1) {
    throw Error(ErrorKind::Numerical, "digest init failed");
  }
  for (auto part : parts) EVP_DigestUpdate(ctx.get(), part.data(), part.size());
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), out, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(hex[out[i] >> 4]);
    s.push_back(hex[out[i] & 0xF]);
  }
  return s;
}

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  std::span<const unsigned char> parts[] = {bytes};
  return digest_hex(EVP_sha256(), parts);
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string git_blob_hash(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + file.string());
  std::vector<unsigned char> content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string header = "blob " + std::to_string(content.size());
  header.push_back('\0');
  std::span<const unsigned char> parts[] = {
      std::span(reinterpret_cast<const unsigned char*>(header.data()), header.size()), content};
  return digest_hex(EVP_sha1(), parts);
}

}  // namespace aisurvey
