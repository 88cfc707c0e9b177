#include "fieldslam/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fieldslam {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'F', 'S', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  return v;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, uint64_t config_hash,
                     const ParamStore& store, const AdamState& adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, uint32_t{0});
  put(out, config_hash);
  const int64_t n = store.size();
  put(out, n);
  put(out, adam.step_count);
  out.write(reinterpret_cast<const char*>(store.values().data()),
            static_cast<std::streamsize>(sizeof(double)) * n);
  out.write(reinterpret_cast<const char*>(adam.m.data()),
            static_cast<std::streamsize>(sizeof(double)) * n);
  out.write(reinterpret_cast<const char*>(adam.v.data()),
            static_cast<std::streamsize>(sizeof(double)) * n);
  if (!out) throw IoError("short write to " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, uint64_t config_hash, ParamStore& store,
                     AdamState& adam, bool ignore_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  const uint32_t version = get<uint32_t>(in, path);
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  get<uint32_t>(in, path);  // reserved
  const uint64_t stored_hash = get<uint64_t>(in, path);
  if (!ignore_hash && stored_hash != config_hash) {
    throw IoError(path.string() + ": config hash mismatch (checkpoint was written by a "
                                  "different configuration)");
  }
  const int64_t n = get<int64_t>(in, path);
  if (n != store.size()) {
    throw IoError(path.string() + ": parameter count mismatch (" + std::to_string(n) + " vs " +
                  std::to_string(store.size()) + ")");
  }
  adam.step_count = get<int64_t>(in, path);
  in.read(reinterpret_cast<char*>(store.values().data()),
          static_cast<std::streamsize>(sizeof(double)) * n);
  adam.m.resize(n);
  adam.v.resize(n);
  in.read(reinterpret_cast<char*>(adam.m.data()),
          static_cast<std::streamsize>(sizeof(double)) * n);
  in.read(reinterpret_cast<char*>(adam.v.data()),
          static_cast<std::streamsize>(sizeof(double)) * n);
  if (!in) throw IoError("truncated checkpoint " + path.string());
}

}  // namespace fieldslam
