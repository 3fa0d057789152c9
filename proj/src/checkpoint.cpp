#include "cpr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "cpr/error.hpp"

namespace cpr {
namespace {

constexpr char kMagic[8] = {'C', 'P', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxLen = std::uint64_t{1} << 40;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(Errc::kBadCheckpoint, "truncated checkpoint");
  return v;
}

std::uint64_t get_len(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > kMaxLen) throw Error(Errc::kBadCheckpoint, "implausible length field");
  return n;
}

std::string get_string(std::istream& in) {
  std::string s(get_len(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!in) throw Error(Errc::kBadCheckpoint, "truncated string");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamStore& params, const std::string& header) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, params.step());
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, p] : params) {
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, p.value.rank());
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw Error(Errc::kIo, "checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(Errc::kBadCheckpoint, "bad magic");
  }
  if (get<std::uint32_t>(in) != kVersion) throw Error(Errc::kBadCheckpoint, "unsupported version");
  Checkpoint ck;
  ck.params.set_step(get<std::uint64_t>(in));
  ck.header = get_string(in);
  const std::uint64_t count = get_len(in);
  for (std::uint64_t t = 0; t < count; ++t) {
    std::string name = get_string(in);
    const std::uint64_t rank = get_len(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_len(in);
    Tensor value(shape);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!in) throw Error(Errc::kBadCheckpoint, "truncated tensor " + name);
    ck.params.add(name, std::move(value));
  }
  return ck;
}

void save_checkpoint(const std::string& path, const ParamStore& params, const std::string& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot open " + path);
  write_checkpoint(out, params, header);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace cpr
