// SPDX-License-Identifier: Apache-2.0

#include "elfstore/wire.hpp"

#include "elfstore/crypto.hpp"

namespace elfstore {

Reply Reply::success(json result, std::optional<Payload> payload) {
  Reply r;
  r.ok = true;
  r.result = std::move(result);
  r.payload = std::move(payload);
  return r;
}

Reply Reply::failure(Errc code, std::string message) {
  Reply r;
  r.ok = false;
  r.result = nullptr;
  r.code = code;
  r.message = std::move(message);
  return r;
}

const Reply& Reply::check() const {
  if (!ok) throw Error(code, message);
  return *this;
}

namespace {

void describe_payload(json& j, const std::optional<Payload>& p) {
  if (!p) return;
  j["data_len"] = p->size();
  j["data_md5"] = crypto::md5_hex(std::span(p->data(), p->size()));
}

std::vector<std::uint8_t> frames(const json& j, const std::optional<Payload>& p) {
  const std::string text = j.dump();
  std::vector<std::uint8_t> out;
  out.reserve(text.size() + 8 + (p ? p->size() : 0));
  append_frame(out, reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  if (p) append_frame(out, p->data(), p->size());
  return out;
}

}  // namespace

json envelope(const Message& m) {
  json j = {{"request_id", m.request_id}, {"op", m.op}, {"args", m.args}};
  describe_payload(j, m.payload);
  return j;
}

json envelope(const Reply& r) {
  json j = {{"request_id", r.request_id}};
  if (r.ok) {
    j["status"] = "ok";
    j["result"] = r.result;
  } else {
    j["status"] = "error";
    j["error"] = {{"code", to_string(r.code)}, {"message", r.message}};
  }
  describe_payload(j, r.payload);
  return j;
}

std::vector<std::uint8_t> encode(const Message& m) { return frames(envelope(m), m.payload); }
std::vector<std::uint8_t> encode(const Reply& r) { return frames(envelope(r), r.payload); }

void append_frame(std::vector<std::uint8_t>& out, const std::uint8_t* data, std::size_t size) {
  if (size > kMaxFrameBytes) throw Error(Errc::protocol, "frame too large");
  const auto n = static_cast<std::uint32_t>(size);
  out.push_back(static_cast<std::uint8_t>(n >> 24));
  out.push_back(static_cast<std::uint8_t>(n >> 16));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  out.push_back(static_cast<std::uint8_t>(n));
  out.insert(out.end(), data, data + size);
}

void FrameDecoder::feed(const std::uint8_t* data, std::size_t size) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), data, data + size);
}

std::optional<std::vector<std::uint8_t>> FrameDecoder::take_frame() {
  if (buffered() < 4) return std::nullopt;
  const std::uint8_t* p = buf_.data() + pos_;
  const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                          (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
  if (n > kMaxFrameBytes) throw Error(Errc::protocol, "frame too large");
  if (buffered() < 4 + std::size_t{n}) return std::nullopt;
  std::vector<std::uint8_t> frame(p + 4, p + 4 + n);
  pos_ += 4 + n;
  if (pos_ > (1u << 20) && pos_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  return frame;
}

std::optional<std::pair<json, std::optional<Payload>>> FrameDecoder::take_unit() {
  if (!pending_) {
    auto frame = take_frame();
    if (!frame) return std::nullopt;
    json j = json::parse(frame->begin(), frame->end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::protocol, "malformed JSON frame");
    pending_ = std::move(j);
  }
  if (!pending_->contains("data_len")) {
    json j = std::move(*pending_);
    pending_.reset();
    return std::pair{std::move(j), std::optional<Payload>{}};
  }
  auto frame = take_frame();
  if (!frame) return std::nullopt;
  json j = std::move(*pending_);
  pending_.reset();
  if (frame->size() != j["data_len"].get<std::size_t>()) {
    throw Error(Errc::protocol, "payload length does not match data_len");
  }
  if (j.value("data_md5", "") != crypto::md5_hex(std::span(frame->data(), frame->size()))) {
    throw Error(Errc::protocol, "payload md5 does not match data_md5");
  }
  return std::pair{std::move(j), std::optional<Payload>(Payload(std::move(*frame)))};
}

std::optional<Message> FrameDecoder::next_message() {
  auto unit = take_unit();
  if (!unit) return std::nullopt;
  return message_from_envelope(unit->first, std::move(unit->second));
}

std::optional<Reply> FrameDecoder::next_reply() {
  auto unit = take_unit();
  if (!unit) return std::nullopt;
  return reply_from_envelope(unit->first, std::move(unit->second));
}

Message message_from_envelope(const json& j, std::optional<Payload> payload) {
  try {
    Message m;
    m.request_id = j.value("request_id", std::uint64_t{0});
    m.op = j.at("op").get<std::string>();
    m.args = j.value("args", json::object());
    m.payload = std::move(payload);
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, std::string("bad request envelope: ") + e.what());
  }
}

Reply reply_from_envelope(const json& j, std::optional<Payload> payload) {
  try {
    Reply r;
    r.request_id = j.value("request_id", std::uint64_t{0});
    if (j.at("status").get<std::string>() == "ok") {
      r.ok = true;
      r.result = j.value("result", json::object());
    } else {
      const auto& e = j.at("error");
      r.ok = false;
      r.result = nullptr;
      r.code = errc_from_string(e.at("code").get<std::string>());
      r.message = e.value("message", "");
    }
    r.payload = std::move(payload);
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::protocol, std::string("bad response envelope: ") + e.what());
  }
}

// Envelope keys, request id and the md5 hex are charged as a flat overhead so
// costing a message does not hash its payload.
constexpr std::size_t kEnvelopeOverhead = 96;

std::size_t wire_size(const Message& m) {
  return 4 + kEnvelopeOverhead + m.op.size() + m.args.dump().size() +
         (m.payload ? 4 + m.payload->size() : 0);
}

std::size_t wire_size(const Reply& r) {
  return 4 + kEnvelopeOverhead + (r.ok ? r.result.dump().size() : r.message.size()) +
         (r.payload ? 4 + r.payload->size() : 0);
}

}  // namespace elfstore
