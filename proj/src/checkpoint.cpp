#include "pidnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace pidnet {
namespace {

constexpr char kMagic[4] = {'P', 'I', 'D', 'N'};
constexpr const char* kMetaName = "meta/config";
const char* const kPresetNames[] = {"tiny", "s", "m", "l"};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(data_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw FormatError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

std::vector<float> encode_config(const ModelConfig& c, bool fused) {
  float preset = 4;
  for (int i = 0; i < 4; ++i)
    if (c.name == kPresetNames[i]) preset = static_cast<float>(i);
  return {1.0f,  // meta layout version
          preset,
          static_cast<float>(c.base_width),
          static_cast<float>(c.pd_depth),
          static_cast<float>(c.i_depth),
          c.deep ? 1.0f : 0.0f,
          c.fusion == Fusion::kAdd ? 1.0f : 0.0f,
          c.context == ContextKind::kDappm ? 1.0f : 0.0f,
          static_cast<float>(c.ppm_channels),
          static_cast<float>(c.head_channels),
          static_cast<float>(c.num_classes),
          static_cast<float>(c.boundary_radius),
          static_cast<float>(c.input_multiple),
          c.pad == PadMode::kReplicate ? 1.0f : 0.0f,
          fused ? 1.0f : 0.0f};
}

ModelConfig decode_config(const std::vector<float>& v, bool& fused) {
  if (v.size() != 15 || v[0] != 1.0f) throw FormatError("checkpoint: unsupported meta/config layout");
  auto i = [&](std::size_t k) { return static_cast<int>(v[k]); };
  ModelConfig c;
  c.name = i(1) >= 0 && i(1) < 4 ? kPresetNames[i(1)] : "custom";
  c.base_width = i(2);
  c.pd_depth = i(3);
  c.i_depth = i(4);
  c.deep = v[5] != 0;
  c.fusion = v[6] != 0 ? Fusion::kAdd : Fusion::kPagBag;
  c.context = v[7] != 0 ? ContextKind::kDappm : ContextKind::kPappm;
  c.ppm_channels = i(8);
  c.head_channels = i(9);
  c.num_classes = i(10);
  c.boundary_radius = i(11);
  c.input_multiple = i(12);
  c.pad = v[13] != 0 ? PadMode::kReplicate : PadMode::kZeros;
  fused = v[14] != 0;
  return c;
}

void write_entry(Writer& w, const std::string& name, const std::vector<std::uint32_t>& dims,
                 const float* values, std::size_t count) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.u32(d);
  for (std::size_t i = 0; i < count; ++i) w.f32(values[i]);
}

std::vector<Entry> parse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (expected \"PIDN\")");
  }
  Reader head(bytes.data() + 4, 4);
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::size_t payload_size = bytes.size() - 12;
  const std::uint8_t* payload = bytes.data() + 8;
  Reader tail(bytes.data() + bytes.size() - 4, 4);
  const std::uint32_t stored = tail.u32();
  const auto actual = static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), payload, static_cast<uInt>(payload_size)));
  if (stored != actual) throw FormatError("checkpoint: CRC mismatch (file is corrupt)");

  Reader r(payload, payload_size);
  const std::uint32_t count = r.u32();
  std::vector<Entry> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    Entry e;
    e.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: tensor '" + e.name + "' has rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.u32());
      n *= e.dims.back();
    }
    if (n > (payload_size - r.pos()) / 4) {
      throw FormatError("checkpoint: tensor '" + e.name + "' overruns the file");
    }
    e.values.resize(n);
    for (auto& v : e.values) v = r.f32();
    entries.push_back(std::move(e));
  }
  if (r.pos() != payload_size) throw FormatError("checkpoint: trailing bytes after last entry");
  return entries;
}

std::vector<std::uint32_t> dims_of(const Shape& s) {
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
}

std::string dims_str(const std::vector<std::uint32_t>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
  return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(PidNet<float>& model) {
  auto state = model.state();
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::size_t payload_start = w.bytes().size();
  w.u32(static_cast<std::uint32_t>(state.size() + 1));
  const auto meta = encode_config(model.config(), model.fused());
  write_entry(w, kMetaName, {static_cast<std::uint32_t>(meta.size())}, meta.data(), meta.size());
  for (const auto& [name, t] : state) write_entry(w, name, dims_of(t->shape()), t->ptr(), t->size());
  auto& b = w.bytes();
  const auto crc = static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), b.data() + payload_start,
            static_cast<uInt>(b.size() - payload_start)));
  w.u32(crc);
  return std::move(w.bytes());
}

void load_state(PidNet<float>& model, const std::vector<std::uint8_t>& bytes, bool strict) {
  const auto entries = parse(bytes);
  auto state = model.state();
  std::map<std::string, Tensor<float>*> by_name(state.begin(), state.end());
  std::map<std::string, bool> seen;
  for (const auto& e : entries) {
    if (e.name == kMetaName) continue;
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      if (strict) throw FormatError("checkpoint: unknown tensor '" + e.name + "'");
      continue;
    }
    const auto want = dims_of(it->second->shape());
    if (e.dims != want) {
      throw ShapeError("checkpoint: tensor '" + e.name + "' has dims " + dims_str(e.dims) +
                       ", model expects " + dims_str(want));
    }
    std::copy(e.values.begin(), e.values.end(), it->second->ptr());
    seen[e.name] = true;
  }
  if (strict) {
    for (const auto& [name, t] : state) {
      if (!seen.count(name)) throw FormatError("checkpoint: missing tensor '" + name + "'");
    }
  }
}

PidNet<float> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const auto entries = parse(bytes);
  if (entries.empty() || entries.front().name != kMetaName) {
    throw FormatError("checkpoint: first entry must be meta/config");
  }
  bool fused = false;
  PidNet<float> model(decode_config(entries.front().values, fused));
  if (fused) model.fuse_bn();
  load_state(model, bytes, true);
  return model;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

void save_checkpoint(PidNet<float>& model, const std::string& path) {
  write_file(path, serialize_checkpoint(model));
}

PidNet<float> load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace pidnet
