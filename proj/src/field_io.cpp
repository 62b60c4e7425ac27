#include "dac/field_io.hpp"

#include <limits>
#include <string>
#include <vector>

#include "dac/binary_io.hpp"

namespace dac {

namespace {
constexpr std::uint32_t kFieldVersion = 1;
}

void write_field(const Field& field, const std::filesystem::path& path) {
  const auto& dom = field.domain();
  if (dom.nx() > std::numeric_limits<std::uint32_t>::max() ||
      dom.ny() > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument("grid too large for DACF");
  io::Writer w(path);
  w.magic("DACF");
  w.u32(kFieldVersion);
  w.u32(static_cast<std::uint32_t>(dom.nx()));
  w.u32(static_cast<std::uint32_t>(dom.ny()));
  w.f64(dom.spacing());
  for (double v : field.values()) w.f64(v);
  w.close();
}

Field read_field(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("DACF");
  const auto version = r.u32();
  if (version != kFieldVersion)
    throw IoError(path.string() + ": unsupported DACF version " + std::to_string(version));
  const std::size_t nx = r.u32();
  const std::size_t ny = r.u32();
  const double spacing = r.f64();
  GridDomain dom = [&] {
    try {
      return GridDomain(nx, ny, spacing);
    } catch (const InvalidArgument& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }();
  std::vector<double> values(dom.size());
  for (double& v : values) v = r.f64();
  r.expect_end();
  try {
    return Field(dom, std::move(values));
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace dac
