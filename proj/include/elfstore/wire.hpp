// SPDX-License-Identifier: Apache-2.0
//
// Messages exchanged between clients, fogs and edges, and their framing on a
// byte stream. A frame is a 4-byte big-endian length followed by that many
// bytes. Every message is one JSON frame; a block payload, when present,
// follows as a second frame whose length and md5 are declared in the JSON
// (data_len, data_md5).

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "elfstore/error.hpp"
#include "elfstore/types.hpp"

namespace elfstore {

using json = nlohmann::json;

inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;

struct Message {
  std::string op;
  json args = json::object();
  std::optional<Payload> payload;
  // Sender-chosen; echoed in the reply. Zero for one-way messages.
  std::uint64_t request_id = 0;
};

struct Reply {
  bool ok = true;
  json result = json::object();
  Errc code = Errc::internal;
  std::string message;
  std::optional<Payload> payload;
  std::uint64_t request_id = 0;

  static Reply success(json result = json::object(), std::optional<Payload> payload = std::nullopt);
  static Reply failure(Errc code, std::string message);
  static Reply from_error(const Error& e) { return failure(e.code(), e.detail()); }

  // Throws the carried error when !ok.
  const Reply& check() const;
};

// JSON envelopes without the payload frame.
json envelope(const Message& m);
json envelope(const Reply& r);

// Serialized frames, ready to write. The payload frame is appended when the
// message carries one.
std::vector<std::uint8_t> encode(const Message& m);
std::vector<std::uint8_t> encode(const Reply& r);

void append_frame(std::vector<std::uint8_t>& out, const std::uint8_t* data, std::size_t size);

// Incremental decoder: feed bytes as they arrive and pull complete messages.
// Throws Error(protocol) on oversized frames, bad JSON, or a payload whose
// md5 does not match its declaration.
class FrameDecoder {
 public:
  void feed(const std::uint8_t* data, std::size_t size);
  std::optional<Message> next_message();
  std::optional<Reply> next_reply();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::optional<std::vector<std::uint8_t>> take_frame();
  // JSON of the frame pair at the head, once both frames have arrived.
  std::optional<std::pair<json, std::optional<Payload>>> take_unit();

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::optional<json> pending_;
};

Message message_from_envelope(const json& j, std::optional<Payload> payload);
Reply reply_from_envelope(const json& j, std::optional<Payload> payload);

// Estimated wire size of a message or reply, computed without encoding it.
// The simulated transport charges by it.
std::size_t wire_size(const Message& m);
std::size_t wire_size(const Reply& r);

}  // namespace elfstore
