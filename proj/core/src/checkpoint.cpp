#include "wngan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "wngan/errors.hpp"

namespace wngan {

namespace {

constexpr char kMagic[7] = {'W', 'N', 'G', 'A', 'N', '1', '\0'};
constexpr std::uint8_t kDtypeF64 = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  template <typename T>
  void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), c, c + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (n > buf.size() - pos) throw IoError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

void put_tensors(Writer& w, const NamedTensors& list) {
  w.put<std::uint64_t>(list.size());
  for (const auto& [name, t] : list) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(kDtypeF64);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.data()) w.put<double>(v);
  }
}

NamedTensors get_tensors(Reader& r) {
  const auto count = r.get<std::uint64_t>("tensor count");
  NamedTensors list;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF64) throw IoError("checkpoint tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dims");
      if (d == 0) throw IoError("checkpoint tensor '" + name + "' has a zero dimension");
      shape.push_back(static_cast<std::size_t>(d));
      numel *= d;
    }
    r.need(numel * sizeof(double), "tensor data");
    std::vector<double> data(numel);
    for (auto& v : data) v = r.get<double>("tensor data");
    list.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return list;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  const std::string meta = c.meta.dump();
  w.put<std::uint64_t>(meta.size());
  w.bytes(meta.data(), meta.size());
  put_tensors(w, c.tensors);
  put_tensors(w, c.optimizer);
  w.put<std::uint64_t>(c.rng_seed);
  w.put<std::uint64_t>(c.rng_counter);
  w.put<std::uint64_t>(c.iteration);
  w.put<double>(c.best_running_loss);
  return std::move(w.out);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw IoError("not a checkpoint: bad magic");
  }
  Checkpoint c;
  const auto meta_len = r.get<std::uint64_t>("metadata length");
  const std::string meta = r.str(meta_len, "metadata");
  try {
    c.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  c.tensors = get_tensors(r);
  c.optimizer = get_tensors(r);
  c.rng_seed = r.get<std::uint64_t>("rng seed");
  c.rng_counter = r.get<std::uint64_t>("rng counter");
  c.iteration = r.get<std::uint64_t>("iteration");
  c.best_running_loss = r.get<double>("best running loss");
  if (r.pos != bytes.size()) throw IoError("checkpoint has " + std::to_string(bytes.size() - r.pos) + " trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::vector<std::uint8_t> bytes = serialize(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const IoError& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

}  // namespace wngan
