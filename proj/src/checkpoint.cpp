#include "sredge/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sredge/errors.hpp"

namespace sredge {
namespace {

constexpr char kMagic[4] = {'S', 'R', 'E', 'W'};
constexpr std::uint8_t kF32 = 0;
constexpr std::uint8_t kU8 = 1;

class Writer {
 public:
  std::vector<std::uint8_t> bytes;

  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }

  void entry_header(const std::string& name, std::uint8_t dtype, const Shape& dims) {
    if (name.size() > 0xffff) throw FormatError("checkpoint entry name too long: " + name);
    if (dims.size() > 0xff) throw FormatError("checkpoint entry rank too large: " + name);
    le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    raw(name.data(), name.size());
    bytes.push_back(dtype);
    bytes.push_back(static_cast<std::uint8_t>(dims.size()));
    for (std::size_t d : dims) {
      if (d > 0xffffffffu) throw FormatError("checkpoint dimension too large in " + name);
      le<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
  }

  void tensor(const std::string& name, const Tensor<float>& t) {
    entry_header(name, kF32, t.shape());
    for (float v : t.values()) le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }

  void text(const std::string& name, const std::string& s) {
    entry_header(name, kU8, Shape{s.size()});
    raw(s.data(), s.size());
  }
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, const std::string& origin) : b_(b), origin_(origin) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(origin_ + ": truncated checkpoint (" + what + " at byte " + std::to_string(pos_) + ")");
    }
  }
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string state_text(const Checkpoint& ck) {
  KeyValues kv;
  kv.set("epoch", std::to_string(ck.epoch));
  kv.set("step", std::to_string(ck.step));
  kv.set("adam.t", std::to_string(ck.adam.t));
  kv.set("adam.beta1", format_double(ck.adam.beta1));
  kv.set("adam.beta2", format_double(ck.adam.beta2));
  kv.set("adam.eps", format_double(ck.adam.eps));
  return kv.to_text();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  const std::size_t n_entries = 2 + ck.params.size() + 2 * ck.adam.moments.size();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(n_entries));

  w.text("meta/config", ck.config.to_text());
  w.text("meta/state", state_text(ck));
  for (const auto& [name, t] : ck.params.tensors()) w.tensor("param/" + name, t);
  for (const auto& [name, mv] : ck.adam.moments) {
    w.tensor("adam.m/" + name, mv.m);
    w.tensor("adam.v/" + name, mv.v);
  }
  w.le<std::uint32_t>(crc_of(w.bytes.data() + 12, w.bytes.size() - 12));
  return w.bytes;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  Reader r(bytes, origin);
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError(origin + ": not a checkpoint (expected magic \"SREW\")");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.le<std::uint32_t>("entry count");
  if (bytes.size() < 16) throw FormatError(origin + ": truncated checkpoint (no checksum)");
  const std::size_t body_end = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (std::size_t i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body_end + i]) << (8 * i);
  if (crc_of(bytes.data() + 12, body_end - 12) != stored) throw FormatError(origin + ": checksum mismatch (file corrupt or truncated)");

  Checkpoint ck;
  bool have_state = false;
  std::map<std::string, Tensor<float>> m_moments, v_moments;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.le<std::uint16_t>("entry name length");
    const std::string name = r.str(name_len, "entry name");
    const auto dtype = r.le<std::uint8_t>("dtype");
    const auto rank = r.le<std::uint8_t>("rank");
    Shape dims(rank);
    for (auto& d : dims) d = r.le<std::uint32_t>("dims");
    const std::size_t n = shape_numel(dims);
    if (dtype == kU8) {
      if (r.pos() + n > body_end) throw FormatError(origin + ": truncated checkpoint (payload of " + name + ")");
      const std::string text = r.str(n, "payload");
      if (name == "meta/config") {
        ck.config = KeyValues::parse(text, origin + ":meta/config");
      } else if (name == "meta/state") {
        const KeyValues kv = KeyValues::parse(text, origin + ":meta/state");
        ck.epoch = static_cast<std::uint64_t>(kv.get_int("epoch", 0));
        ck.step = static_cast<std::uint64_t>(kv.get_int("step", 0));
        ck.adam.t = static_cast<std::uint64_t>(kv.get_int("adam.t", 0));
        ck.adam.beta1 = kv.get_double("adam.beta1", ck.adam.beta1);
        ck.adam.beta2 = kv.get_double("adam.beta2", ck.adam.beta2);
        ck.adam.eps = kv.get_double("adam.eps", ck.adam.eps);
        have_state = true;
      } else {
        throw FormatError(origin + ": unknown text entry " + name);
      }
      continue;
    }
    if (dtype != kF32) throw FormatError(origin + ": entry " + name + " has unknown dtype " + std::to_string(dtype));
    if (n > (body_end - r.pos()) / 4) throw FormatError(origin + ": truncated checkpoint (payload of " + name + ")");
    std::vector<float> vals(n);
    for (float& v : vals) v = std::bit_cast<float>(r.le<std::uint32_t>("payload"));
    Tensor<float> t(dims, std::move(vals));
    const auto slash = name.find('/');
    const std::string kind = name.substr(0, slash), pname = slash == std::string::npos ? "" : name.substr(slash + 1);
    if (pname.empty()) throw FormatError(origin + ": malformed entry name " + name);
    if (kind == "param") {
      ck.params.set(pname, std::move(t));
    } else if (kind == "adam.m") {
      m_moments.emplace(pname, std::move(t));
    } else if (kind == "adam.v") {
      v_moments.emplace(pname, std::move(t));
    } else {
      throw FormatError(origin + ": unknown entry " + name);
    }
  }
  if (r.pos() != body_end) throw FormatError(origin + ": trailing bytes before checksum");
  if (!have_state) throw FormatError(origin + ": missing meta/state entry");
  if (m_moments.size() != v_moments.size()) throw FormatError(origin + ": unpaired optimizer moments");
  for (auto& [pname, m] : m_moments) {
    auto it = v_moments.find(pname);
    if (it == v_moments.end() || it->second.shape() != m.shape()) throw FormatError(origin + ": unpaired optimizer moments for " + pname);
    ck.adam.moments[pname] = AdamMoments{std::move(m), std::move(it->second)};
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace sredge
