// SPDX-License-Identifier: Apache-2.0

#include "elfstore/crypto.hpp"

#include <openssl/evp.h>

#include "elfstore/error.hpp"

namespace elfstore::crypto {

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> digest(const EVP_MD* md, const void* data, std::size_t len) {
  std::array<std::uint8_t, N> out{};
  unsigned int out_len = 0;
  if (EVP_Digest(data, len, out.data(), &out_len, md, nullptr) != 1 || out_len != N) {
    throw Error(Errc::internal, "digest computation failed");
  }
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

}  // namespace

Sha1Digest sha1(std::span<const std::uint8_t> bytes) {
  return digest<20>(EVP_sha1(), bytes.data(), bytes.size());
}

Sha1Digest sha1(std::string_view text) {
  return digest<20>(EVP_sha1(), text.data(), text.size());
}

std::string md5_hex(std::span<const std::uint8_t> bytes) {
  return to_hex(digest<16>(EVP_md5(), bytes.data(), bytes.size()));
}

std::string md5_hex(std::string_view text) {
  return to_hex(digest<16>(EVP_md5(), text.data(), text.size()));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(Errc::protocol, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                          static_cast<int>(text.size()));
  if (n < 0) throw Error(Errc::protocol, "malformed base64");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

}  // namespace elfstore::crypto
