#include "disasterlens/weights.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <set>

#include "disasterlens/errors.hpp"

namespace disasterlens {

static_assert(std::endian::native == std::endian::little, "CNWF I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'N', 'W', 'F'};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { bytes(&v, sizeof v); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("CNWF: unexpected end of data at byte " + std::to_string(pos_));
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint16_t u16() {
    std::uint16_t v;
    bytes(&v, 2);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks so multi-GB inputs stay correct.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void ModelWeights::set(std::string name, Tensor tensor, bool frozen) {
  if (auto* e = find(name)) {
    e->tensor = std::move(tensor);
    e->frozen = frozen;
    return;
  }
  entries_.push_back({std::move(name), std::move(tensor), frozen});
}

const WeightEntry* ModelWeights::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

WeightEntry* ModelWeights::find(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const Tensor& ModelWeights::tensor(std::string_view name) const {
  const auto* e = find(name);
  if (!e) throw ShapeError("no weight entry named '" + std::string(name) + "'");
  return e->tensor;
}

void ModelWeights::merge(const ModelWeights& other) {
  for (const auto& e : other.entries_) set(e.name, e.tensor, e.frozen);
}

bool ModelWeights::bit_equal(const ModelWeights& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.frozen != b.frozen || !a.tensor.bit_equal(b.tensor)) return false;
  }
  return true;
}

std::size_t cnwf_encoded_size(const ModelWeights& weights) {
  std::size_t n = 4 + 4 + 4 + 4;  // magic, version, count, trailing CRC
  for (const auto& e : weights.entries()) {
    n += 2 + e.name.size() + 1 + 1 + 4 * e.tensor.rank() + 4 * e.tensor.size();
  }
  return n;
}

std::vector<std::uint8_t> encode_cnwf(const ModelWeights& weights) {
  std::vector<std::uint8_t> out;
  out.reserve(cnwf_encoded_size(weights));
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u32(kCnwfVersion);
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& e : weights.entries()) {
    if (e.name.size() > 0xFFFF) throw FormatError("CNWF: entry name too long: " + e.name.substr(0, 32));
    if (e.tensor.rank() == 0 || e.tensor.rank() > 0xFF) throw FormatError("CNWF: bad rank for entry " + e.name);
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(e.frozen ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) {
      if (d > 0xFFFFFFFFu) throw FormatError("CNWF: dimension too large in entry " + e.name);
      w.u32(static_cast<std::uint32_t>(d));
    }
    w.bytes(e.tensor.raw(), e.tensor.size() * sizeof(float));
  }
  w.u32(crc32_of(out));
  return out;
}

ModelWeights decode_cnwf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw ChecksumError("CNWF: file too short (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("CNWF: bad magic");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  const auto actual = crc32_of(body);
  if (stored != actual) {
    throw ChecksumError("CNWF: checksum mismatch (file truncated or corrupted)");
  }
  Reader r(body);
  char magic[4];
  r.bytes(magic, 4);
  const auto version = r.u32();
  if (version != kCnwfVersion) throw FormatError("CNWF: unsupported version " + std::to_string(version));
  const auto count = r.u32();
  ModelWeights weights;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u16();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto frozen = r.u8();
    if (frozen > 1) throw FormatError("CNWF: bad frozen flag in entry " + name);
    const auto rank = r.u8();
    if (rank == 0) throw FormatError("CNWF: zero rank in entry " + name);
    Tensor::Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw FormatError("CNWF: zero dimension in entry " + name);
      numel *= d;
      if (numel > r.remaining()) throw FormatError("CNWF: entry " + name + " exceeds file size");
    }
    if (numel * sizeof(float) > r.remaining()) throw FormatError("CNWF: entry " + name + " exceeds file size");
    std::vector<float> data(numel);
    r.bytes(data.data(), numel * sizeof(float));
    if (!seen.insert(name).second) throw FormatError("CNWF: duplicate entry " + name);
    weights.set(std::move(name), Tensor(std::move(shape), std::move(data)), frozen == 1);
  }
  if (r.remaining() != 0) throw FormatError("CNWF: " + std::to_string(r.remaining()) + " trailing bytes");
  return weights;
}

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
  const auto bytes = encode_cnwf(weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cnwf(bytes);
}

std::string BindingReport::summary() const {
  std::string s;
  auto add = [&](const char* label, const std::vector<std::string>& items) {
    for (const auto& item : items) {
      if (!s.empty()) s += "; ";
      s += std::string(label) + " " + item;
    }
  };
  add("missing", missing);
  add("shape mismatch", mismatched);
  add("wrong frozen flag", wrong_flag);
  add("unexpected", unexpected);
  return s.empty() ? "ok" : s;
}

BindingReport check_binding(const ArchitectureSpec& spec, const ModelWeights& weights, bool require_head) {
  BindingReport report;
  std::set<std::string> expected;
  for (const auto& slot : spec.params()) {
    expected.insert(slot.name);
    const auto* e = weights.find(slot.name);
    if (!e) {
      if (slot.frozen || require_head) report.missing.push_back(slot.name);
      continue;
    }
    if (e->tensor.shape() != slot.shape) {
      report.mismatched.push_back(slot.name + " " + shape_string(e->tensor.shape()) + " != " +
                                  shape_string(slot.shape));
    }
    if (e->frozen != slot.frozen) report.wrong_flag.push_back(slot.name);
  }
  for (const auto& e : weights.entries()) {
    if (!expected.count(e.name)) report.unexpected.push_back(e.name);
  }
  return report;
}

void bind_weights(const ArchitectureSpec& spec, const ModelWeights& weights, bool require_head) {
  const auto report = check_binding(spec, weights, require_head);
  if (!report.ok()) throw ShapeError("weights do not bind to architecture: " + report.summary());
}

std::string backbone_digest(const ArchitectureSpec& spec, const ModelWeights& weights) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  for (const auto& slot : spec.backbone_params()) {
    const auto& t = weights.tensor(slot.name);
    EVP_DigestUpdate(ctx.get(), slot.name.data(), slot.name.size() + 1);  // include the NUL separator
    for (auto d : t.shape()) {
      const auto d32 = static_cast<std::uint32_t>(d);
      EVP_DigestUpdate(ctx.get(), &d32, sizeof d32);
    }
    EVP_DigestUpdate(ctx.get(), t.raw(), t.size() * sizeof(float));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

}  // namespace disasterlens
