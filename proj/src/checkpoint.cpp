#include "feed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "feed/data.hpp"
#include "feed/errors.hpp"

namespace feed {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'F', 'E', 'E', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, take(sizeof(T), what), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("checkpoint truncated reading ") + what + " at byte offset " +
                        std::to_string(pos_));
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string encode_meta(const CheckpointMeta& meta) {
  std::string out = "arch=" + meta.arch + "\nstack=" + std::to_string(meta.stack) +
                    "\nseed=" + std::to_string(meta.seed) + "\n";
  for (const auto& [k, v] : meta.extra) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ParameterError("checkpoint meta entry '" + k + "' contains '=' or a newline");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

CheckpointMeta decode_meta(const std::string& text) {
  CheckpointMeta meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint meta line without '=': " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "arch") {
        meta.arch = value;
      } else if (key == "stack") {
        meta.stack = std::stoi(value);
      } else if (key == "seed") {
        meta.seed = std::stoull(value);
      } else {
        meta.extra[key] = value;
      }
    } catch (const std::logic_error&) {
      throw FormatError("checkpoint meta value for '" + key + "' is malformed: " + value);
    }
  }
  return meta;
}

}  // namespace

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors,
                                            const CheckpointMeta& meta) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string text = encode_meta(meta);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& e : tensors) {
    if (e.name.size() > 0xffff) throw ParameterError("tensor name too long: " + e.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(0);
    const Shape& s = e.tensor.shape();
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.rank()));
    for (std::size_t a = 0; a < s.rank(); ++a) w.put<std::uint64_t>(s[a]);
    w.put_bytes(e.tensor.data().data(), sizeof(float) * e.tensor.numel());
  }
  w.put<std::uint64_t>(fnv1a(w.bytes));
  return std::move(w.bytes);
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() < 8 + sizeof(kMagic)) throw FormatError("checkpoint truncated");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  const std::uint64_t actual = fnv1a(bytes.first(body));
  if (stored != actual) {
    throw CorruptionError("checkpoint hash mismatch (stored " + std::to_string(stored) +
                          ", computed " + std::to_string(actual) + ")");
  }

  CheckpointFile file;
  file.hash = stored;
  const auto meta_len = r.get<std::uint32_t>("meta length");
  const auto* meta = r.take(meta_len, "meta");
  file.meta = decode_meta(std::string(reinterpret_cast<const char*>(meta), meta_len));
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    const auto* name = r.take(name_len, "tensor name");
    NamedTensor e;
    e.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != 0) throw FormatError("tensor " + e.name + ": unsupported dtype " +
                                      std::to_string(dtype));
    const auto rank = r.get<std::uint8_t>("rank");
    std::vector<Index> dims(rank);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      const auto v = r.get<std::uint64_t>("dims");
      if (v > (std::uint64_t{1} << 40)) throw FormatError("tensor " + e.name + ": absurd dim");
      d = static_cast<Index>(v);
      numel *= v;
    }
    if (numel * sizeof(float) > body - r.pos()) {
      throw FormatError("tensor " + e.name + ": payload exceeds file at byte offset " +
                        std::to_string(r.pos()));
    }
    Vector values(static_cast<Index>(numel));
    std::memcpy(values.data(), r.take(numel * sizeof(float), "payload"), numel * sizeof(float));
    e.tensor = Tensor(Shape(dims), std::move(values));
    file.tensors.push_back(std::move(e));
  }
  if (r.pos() != body) {
    throw FormatError("checkpoint has " + std::to_string(body - r.pos()) +
                      " unexpected bytes before the hash");
  }
  return file;
}

void save_checkpoint(const Network& net, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(net.state(), meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
  }
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  CheckpointFile file = read_checkpoint(path);
  LoadedCheckpoint out;
  out.net = build_resnet(ArchDescriptor::parse(file.meta.arch), file.meta.seed);
  out.net->load_state(file.tensors);
  out.meta = std::move(file.meta);
  out.hash = file.hash;
  return out;
}

std::uint64_t checkpoint_hash(const std::filesystem::path& path) {
  return read_checkpoint(path).hash;
}

}  // namespace feed
