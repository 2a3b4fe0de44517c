// SPDX-License-Identifier: Apache-2.0

#include "elfstore/edge_node.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "elfstore/codec.hpp"
#include "elfstore/crypto.hpp"

namespace elfstore {

namespace fs = std::filesystem;

namespace {

std::string payload_md5(const Payload& p) { return crypto::md5_hex(std::span(p.data(), p.size())); }

// Keeps [A-Za-z0-9._-] and percent-escapes the rest; never yields "." or "..".
std::string escape(const std::string& id) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '_' || c == '-' || (c == '.' && !out.empty())) {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out.empty() ? "%" : out;
}

std::string unescape(const std::string& s) {
  if (s == "%") return "";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

void MemoryReplicaStore::put(const StoredReplica& r) {
  auto it = items_.find(r.key);
  if (it != items_.end()) used_ -= it->second.payload.size();
  items_.insert_or_assign(r.key, r);
  used_ += r.payload.size();
}

std::optional<StoredReplica> MemoryReplicaStore::get(const BlockKey& key) const {
  auto it = items_.find(key);
  if (it == items_.end()) return std::nullopt;
  return it->second;
}

bool MemoryReplicaStore::erase(const BlockKey& key) {
  auto it = items_.find(key);
  if (it == items_.end()) return false;
  used_ -= it->second.payload.size();
  items_.erase(it);
  return true;
}

std::vector<BlockKey> MemoryReplicaStore::keys() const {
  std::vector<BlockKey> out;
  for (const auto& [k, v] : items_) out.push_back(k);
  return out;
}

void MemoryReplicaStore::corrupt(const BlockKey& key) {
  auto it = items_.find(key);
  if (it == items_.end() || it->second.payload.size() == 0) return;
  auto bytes = it->second.payload.bytes();
  bytes[0] ^= 0xFF;
  it->second.payload = Payload(std::move(bytes));
}

DiskReplicaStore::DiskReplicaStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  for (const auto& k : keys()) {
    const auto size = fs::file_size(dir_of(k.stream) / (escape(k.block) + ".blk"));
    sizes_[k] = size;
    used_ += size;
  }
}

fs::path DiskReplicaStore::dir_of(const std::string& stream) const {
  return root_ / escape(stream);
}

void DiskReplicaStore::put(const StoredReplica& r) {
  const fs::path dir = dir_of(r.key.stream);
  fs::create_directories(dir);
  const std::string base = escape(r.key.block);
  // Write to temporaries and rename so a crash never leaves a torn replica.
  const fs::path blk = dir / (base + ".blk");
  const fs::path meta = dir / (base + ".meta");
  {
    std::ofstream out(dir / (base + ".blk.tmp"), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(r.payload.data()),
              static_cast<std::streamsize>(r.payload.size()));
    if (!out) throw Error(Errc::internal, "cannot write " + blk.string());
  }
  {
    json j = {{"stream", r.key.stream}, {"block", r.key.block}, {"props", r.props},
              {"md5", r.md5},           {"reliability", r.stream_reliability},
              {"stored_at", r.stored_at}};
    std::ofstream out(dir / (base + ".meta.tmp"), std::ios::trunc);
    out << j.dump();
    if (!out) throw Error(Errc::internal, "cannot write " + meta.string());
  }
  fs::rename(dir / (base + ".blk.tmp"), blk);
  fs::rename(dir / (base + ".meta.tmp"), meta);
  auto it = sizes_.find(r.key);
  if (it != sizes_.end()) used_ -= it->second;
  sizes_[r.key] = r.payload.size();
  used_ += r.payload.size();
}

std::optional<StoredReplica> DiskReplicaStore::get(const BlockKey& key) const {
  const fs::path dir = dir_of(key.stream);
  const std::string base = escape(key.block);
  std::ifstream meta(dir / (base + ".meta"));
  std::ifstream blk(dir / (base + ".blk"), std::ios::binary);
  if (!meta || !blk) return std::nullopt;
  const json j = json::parse(meta, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::integrity, "unreadable metadata for " + key.block);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(blk)), {});
  StoredReplica r;
  r.key = key;
  r.payload = Payload(std::move(bytes));
  r.props = j.at("props").get<std::vector<Property>>();
  r.md5 = j.at("md5").get<std::string>();
  r.stream_reliability = j.value("reliability", 0.0);
  r.stored_at = j.value("stored_at", 0.0);
  return r;
}

bool DiskReplicaStore::erase(const BlockKey& key) {
  auto it = sizes_.find(key);
  if (it == sizes_.end()) return false;
  const fs::path dir = dir_of(key.stream);
  fs::remove(dir / (escape(key.block) + ".blk"));
  fs::remove(dir / (escape(key.block) + ".meta"));
  used_ -= it->second;
  sizes_.erase(it);
  return true;
}

std::vector<BlockKey> DiskReplicaStore::keys() const {
  std::vector<BlockKey> out;
  if (!fs::exists(root_)) return out;
  for (const auto& sdir : fs::directory_iterator(root_)) {
    if (!sdir.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(sdir.path())) {
      if (f.path().extension() != ".meta") continue;
      if (!fs::exists(fs::path(f.path()).replace_extension(".blk"))) continue;
      out.push_back({unescape(sdir.path().filename().string()),
                     unescape(f.path().stem().string())});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

EdgeNode::EdgeNode(EdgeConfig config, std::unique_ptr<ReplicaStore> store, Clock& clock)
    : config_(std::move(config)), store_(std::move(store)), clock_(clock) {
  if (!(config_.reliability > 0.0 && config_.reliability < 1.0)) {
    throw Error(Errc::invalid_config, "edge reliability must be in (0,1)");
  }
  if (config_.capacity == 0) throw Error(Errc::invalid_config, "edge capacity must be positive");
  // A store that already holds replicas (restart on disk) re-reports them.
  full_report_ = !store_->keys().empty();
}

std::uint64_t EdgeNode::free_storage() const {
  std::shared_lock lock(mu_);
  const auto used = store_->used_bytes();
  return used >= config_.capacity ? 0 : config_.capacity - used;
}

EdgeStat EdgeNode::stat() const { return {config_.id, config_.reliability, free_storage()}; }

std::vector<BlockKey> EdgeNode::hosted() const {
  std::shared_lock lock(mu_);
  return store_->keys();
}

Reply EdgeNode::handle(const Message& m) {
  if (m.op == "store_replica") return store_replica(m, false);
  if (m.op == "overwrite_replica") return store_replica(m, true);
  if (m.op == "read_replica") return read_replica(m);
  if (m.op == "delete_replica") {
    const auto key = arg<BlockKey>(m.args, "key");
    std::unique_lock lock(mu_);
    if (!store_->erase(key)) return Reply::failure(Errc::not_found, "no replica of " + key.block);
    return Reply::success();
  }
  if (m.op == "edge_stat") return Reply::success(json(stat()));
  return Reply::failure(Errc::protocol, "edge does not handle " + m.op);
}

Reply EdgeNode::store_replica(const Message& m, bool overwrite) {
  if (!m.payload) return Reply::failure(Errc::invalid_argument, "store needs a payload");
  StoredReplica r;
  r.key = arg<BlockKey>(m.args, "key");
  r.payload = *m.payload;
  r.props = arg_or<std::vector<Property>>(m.args, "props", {});
  r.md5 = arg<std::string>(m.args, "md5");
  r.stream_reliability = arg_or<double>(m.args, "reliability", 0.0);
  r.stored_at = clock_.now();
  if (payload_md5(r.payload) != r.md5) {
    return Reply::failure(Errc::integrity, "payload does not match md5 for " + r.key.block);
  }
  std::unique_lock lock(mu_);
  const auto existing = store_->get(r.key);
  if (overwrite && !existing) return Reply::failure(Errc::not_found, "no replica of " + r.key.block);
  if (!overwrite && existing) {
    if (existing->md5 == r.md5) {
      return Reply::success({{"free", config_.capacity - store_->used_bytes()}});
    }
    return Reply::failure(Errc::already_exists, "edge already holds " + r.key.block);
  }
  const std::uint64_t used_after =
      store_->used_bytes() - (existing ? existing->payload.size() : 0) + r.payload.size();
  if (used_after > config_.capacity) {
    return Reply::failure(Errc::no_capacity, "edge " + std::to_string(config_.id.value) + " is full");
  }
  store_->put(r);
  pending_.emplace_back(next_seq_++,
                        IndexTuple{r.key, r.props, r.payload.size(), r.md5, r.stream_reliability});
  return Reply::success({{"free", config_.capacity - store_->used_bytes()}});
}

Reply EdgeNode::read_replica(const Message& m) const {
  const auto key = arg<BlockKey>(m.args, "key");
  std::optional<StoredReplica> r;
  {
    std::shared_lock lock(mu_);
    r = store_->get(key);
  }
  if (!r) return Reply::failure(Errc::not_found, "no replica of " + key.stream + "/" + key.block);
  if (payload_md5(r->payload) != r->md5) {
    return Reply::failure(Errc::integrity, "stored replica of " + key.block + " is corrupt");
  }
  return Reply::success({{"props", r->props}, {"md5", r->md5}, {"reliability", r->stream_reliability}},
                        r->payload);
}

HeartbeatPayload EdgeNode::heartbeat_payload() const {
  HeartbeatPayload hb;
  hb.stat = stat();
  hb.capacity = config_.capacity;
  std::shared_lock lock(mu_);
  hb.seq = next_seq_ - 1;
  if (full_report_) {
    hb.full = true;
    for (const auto& key : store_->keys()) {
      const auto r = store_->get(key);
      if (r) hb.tuples.push_back({key, r->props, r->payload.size(), r->md5, r->stream_reliability});
    }
  } else {
    for (const auto& [seq, t] : pending_) hb.tuples.push_back(t);
  }
  return hb;
}

void EdgeNode::acknowledge(std::uint64_t seq) {
  std::unique_lock lock(mu_);
  while (!pending_.empty() && pending_.front().first <= seq) pending_.pop_front();
  full_report_ = false;
}

void EdgeNode::restart() {
  std::unique_lock lock(mu_);
  full_report_ = true;
}

bool EdgeNode::send_heartbeat(Transport& transport) {
  const HeartbeatPayload hb = heartbeat_payload();
  Message m;
  m.op = "edge_heartbeat";
  m.args = to_json(hb, config_.endpoint);
  const Reply r = transport.call(config_.parent, m);
  if (!r.ok) return false;
  acknowledge(r.result.value("acked_seq", std::uint64_t{0}));
  return true;
}

json to_json(const HeartbeatPayload& hb, const std::string& endpoint) {
  json tuples = json::array();
  for (const auto& t : hb.tuples) {
    tuples.push_back({{"key", t.key},
                      {"props", t.props},
                      {"size", t.size},
                      {"md5", t.md5},
                      {"reliability", t.stream_reliability}});
  }
  return {{"stat", hb.stat}, {"capacity", hb.capacity}, {"seq", hb.seq},
          {"full", hb.full}, {"tuples", tuples},        {"endpoint", endpoint}};
}

HeartbeatPayload heartbeat_from_json(const json& j) {
  HeartbeatPayload hb;
  hb.stat = arg<EdgeStat>(j, "stat");
  hb.capacity = arg_or<std::uint64_t>(j, "capacity", 0);
  hb.seq = arg_or<std::uint64_t>(j, "seq", 0);
  hb.full = arg_or<bool>(j, "full", false);
  for (const auto& t : j.value("tuples", json::array())) {
    hb.tuples.push_back({arg<BlockKey>(t, "key"), arg_or<std::vector<Property>>(t, "props", {}),
                         arg_or<std::uint64_t>(t, "size", 0), arg_or<std::string>(t, "md5", ""),
                         arg_or<double>(t, "reliability", 0.0)});
  }
  return hb;
}

}  // namespace elfstore
