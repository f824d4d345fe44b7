#include "esaw/snapshot.hpp"

#include <cstdio>
#include <fstream>

#include "esaw/binio.hpp"

namespace esaw {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'A', 'W'};

}  // namespace

std::vector<std::uint8_t> snapshot_encode(const ParameterVector& x) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + x.size() * 8 + 8);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kSnapshotVersion);
  put_u16(out, 0);  // flags
  put_u64(out, x.size());
  const std::size_t payload_begin = out.size();
  for (double v : x) {
    put_f64(out, v);
  }
  const std::uint64_t checksum =
      fnv1a64(std::span<const std::uint8_t>(out.data() + payload_begin, x.size() * 8));
  put_u64(out, checksum);
  return out;
}

ParameterVector snapshot_decode(std::span<const std::uint8_t> bytes) {
  BinReader r(bytes);
  std::uint8_t magic[4];
  r.bytes(magic);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("snapshot: bad magic");
  }
  const std::uint16_t version = r.u16();
  if (version != kSnapshotVersion) {
    throw FormatError("snapshot: unsupported format version " + std::to_string(version));
  }
  (void)r.u16();  // flags
  const std::uint64_t d = r.u64();
  if (r.remaining() != d * 8 + 8) {
    throw FormatError("snapshot: header declares d=" + std::to_string(d) + " but " +
                      std::to_string(r.remaining()) + " bytes follow");
  }
  const std::uint64_t checksum =
      fnv1a64(std::span<const std::uint8_t>(bytes.data() + 16, d * 8));
  ParameterVector out(d);
  for (std::uint64_t i = 0; i < d; ++i) {
    out[i] = r.f64();
  }
  if (r.u64() != checksum) {
    throw FormatError("snapshot: checksum mismatch");
  }
  if (!all_finite(out)) {
    throw FormatError("snapshot: non-finite values in payload");
  }
  return out;
}

void atomic_write_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw IoError("cannot open for writing: " + tmp.string());
    }
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " +
                  ec.message());
  }
}

void atomic_write_file(const std::filesystem::path& path, const std::string& text) {
  atomic_write_file(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("cannot open: " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void snapshot_write(const ParameterVector& x, const std::filesystem::path& path) {
  atomic_write_file(path, snapshot_encode(x));
}

ParameterVector snapshot_read(const std::filesystem::path& path) {
  return snapshot_decode(read_file_bytes(path));
}

std::uint64_t file_digest(const std::filesystem::path& path) {
  return fnv1a64(read_file_bytes(path));
}

}  // namespace esaw
