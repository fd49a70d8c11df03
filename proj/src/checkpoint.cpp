#include "mkh/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace mkh {
namespace {

constexpr std::string_view kMagic = "MKHN";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) { little_endian(v, 4); }
  void u64(std::uint64_t v) { little_endian(v, 8); }
  void f64(double v) { little_endian(std::bit_cast<std::uint64_t>(v), 8); }
  void text32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void little_endian(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    const std::string_view out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little_endian(4)); }
  std::uint64_t u64() { return little_endian(8); }
  double f64() { return std::bit_cast<double>(little_endian(8)); }
  std::string text32() { return std::string(bytes(u32())); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::uint64_t little_endian(std::size_t width) {
    const std::string_view raw = bytes(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

bool Checkpoint::operator==(const Checkpoint& other) const {
  return format_run_config(config) == format_run_config(other.config) && params == other.params &&
         stats.mean == other.stats.mean && stats.std == other.stats.std && seed == other.seed;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  const std::string config = format_run_config(checkpoint.config);
  w.u64(config.size());
  w.bytes(config);
  w.u32(static_cast<std::uint32_t>(checkpoint.params.size()));
  for (std::size_t i = 0; i < checkpoint.params.size(); ++i) {
    const Array& value = checkpoint.params.value(i);
    w.text32(checkpoint.params.name(i));
    w.u32(static_cast<std::uint32_t>(value.rank()));
    for (std::size_t extent : value.shape()) w.u64(extent);
    for (double v : value.values()) w.f64(v);
  }
  if (checkpoint.stats.mean.size() != checkpoint.stats.std.size()) {
    throw FormatError("normalization stats have mismatched lengths");
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.stats.mean.size()));
  for (double v : checkpoint.stats.mean) w.f64(v);
  for (double v : checkpoint.stats.std) w.f64(v);
  w.u64(checkpoint.seed);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint cp;
  const std::uint64_t config_size = r.u64();
  try {
    cp.config = parse_run_config(r.bytes(config_size));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.text32();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("parameter " + name + " has implausible rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(r.u64());
      elements *= shape.back();
    }
    if (elements > bytes.size()) throw FormatError("parameter " + name + " larger than the file");
    Array value(shape);
    for (double& v : value.values()) v = r.f64();
    try {
      cp.params.add(name, std::move(value));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
  }
  const std::uint32_t n = r.u32();
  cp.stats.mean.resize(n);
  cp.stats.std.resize(n);
  for (double& v : cp.stats.mean) v = r.f64();
  for (double& v : cp.stats.std) v = r.f64();
  cp.seed = r.u64();
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace mkh
