#include "s2e/chip_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "s2e/error.hpp"

namespace s2e {

static_assert(std::endian::native == std::endian::little,
              "chip files are little-endian; big-endian hosts need byte swapping");

namespace {

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorKind::io, "truncated chip file " + path.string());
  return value;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& chip_path) {
  return std::filesystem::path(chip_path.string() + ".json");
}

void write_chip(const std::filesystem::path& path, const RasterChip& chip,
                std::optional<ModalityKind> modality) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write chip " + path.string());
    out.write(kChipMagic.data(), kChipMagic.size());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(chip.channels()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(chip.height()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(chip.width()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(chip.value_range()));
    put<std::uint8_t>(out, chip.nodata_mask() ? 1 : 0);
    put<std::uint16_t>(out, 0);
    out.write(reinterpret_cast<const char*>(chip.data().data()),
              static_cast<std::streamsize>(chip.data().size() * sizeof(float)));
    if (chip.nodata_mask()) {
      out.write(reinterpret_cast<const char*>(chip.nodata_mask()->data()),
                static_cast<std::streamsize>(chip.nodata_mask()->size()));
    }
    if (!out) fail(ErrorKind::io, "short write on chip " + path.string());
  }

  nlohmann::ordered_json meta;
  meta["modality"] = modality ? to_string(*modality) : nullptr;
  meta["value_range"] = to_string(chip.value_range());
  meta["channels"] = chip.channels();
  meta["height"] = chip.height();
  meta["width"] = chip.width();
  if (chip.geo()) {
    meta["geo"] = {{"center_lat", chip.geo()->center_lat},
                   {"center_lon", chip.geo()->center_lon},
                   {"ground_resolution", chip.geo()->ground_resolution}};
  } else {
    meta["geo"] = nullptr;
  }
  std::ofstream side(sidecar_path(path), std::ios::binary | std::ios::trunc);
  if (!side) fail(ErrorKind::io, "cannot write chip sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

RasterChip read_chip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open chip " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kChipMagic) fail(ErrorKind::io, "bad chip magic in " + path.string());
  const auto channels = get<std::uint32_t>(in, path);
  const auto height = get<std::uint32_t>(in, path);
  const auto width = get<std::uint32_t>(in, path);
  const auto range = get<std::uint8_t>(in, path);
  const auto has_mask = get<std::uint8_t>(in, path);
  (void)get<std::uint16_t>(in, path);
  if (range > 2) fail(ErrorKind::io, "bad value range tag in " + path.string());
  if (channels == 0 || height == 0 || width == 0 || channels > 4096 || height > 1 << 16 ||
      width > 1 << 16) {
    fail(ErrorKind::io, "implausible chip dimensions in " + path.string());
  }
  std::vector<float> data(static_cast<std::size_t>(channels) * height * width);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) fail(ErrorKind::io, "truncated chip data in " + path.string());
  std::optional<std::vector<std::uint8_t>> mask;
  if (has_mask) {
    mask.emplace(static_cast<std::size_t>(height) * width);
    in.read(reinterpret_cast<char*>(mask->data()), static_cast<std::streamsize>(mask->size()));
    if (!in) fail(ErrorKind::io, "truncated chip mask in " + path.string());
  }

  std::optional<GeoInfo> geo;
  std::ifstream side(sidecar_path(path), std::ios::binary);
  if (side) {
    try {
      const auto meta = nlohmann::json::parse(side);
      if (meta.contains("geo") && !meta["geo"].is_null()) {
        const auto& g = meta["geo"];
        geo = GeoInfo{g.at("center_lat").get<double>(), g.at("center_lon").get<double>(),
                      g.at("ground_resolution").get<double>()};
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, "malformed chip sidecar for " + path.string() + ": " + e.what());
    }
  }
  return RasterChip(static_cast<int>(channels), static_cast<int>(height),
                    static_cast<int>(width), std::move(data), static_cast<ValueRange>(range),
                    geo, std::move(mask));
}

}  // namespace s2e
