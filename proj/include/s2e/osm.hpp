#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "s2e/core.hpp"
#include "s2e/image_io.hpp"
#include "s2e/manifest.hpp"

namespace s2e {

inline constexpr double kMercatorMaxLat = 85.0511;
inline constexpr int kTileSize = 256;
// Equatorial ground resolution of zoom 0 in m/px.
inline constexpr double kZoom0Resolution = 156543.03;

struct TileCoord {
  int zoom = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;

  bool valid() const;
  std::string path() const;  // "z/x/y"
  bool operator==(const TileCoord&) const = default;
  auto operator<=>(const TileCoord&) const = default;
};

/// Slippy-map tile containing (lat, lon). Throws a projection error outside
/// |lat| <= 85.0511 or lon in [-180, 180]; lon = 180 maps to the last column.
TileCoord latlon_to_tile(double lat, double lon, int zoom);

/// North-west corner of a tile.
std::pair<double, double> tile_to_latlon(const TileCoord& tile);

/// Fractional world pixel of (lat, lon) at a zoom: tile index * 256 plus the
/// offset inside the tile.
std::pair<double, double> latlon_to_world_pixel(double lat, double lon, int zoom);

/// Meters per tile pixel at a latitude.
double tile_ground_resolution(double lat, int zoom);

/// Zoom whose tile resolution at `lat` is closest to ground_resolution.
int select_zoom(double lat, double ground_resolution, int max_zoom = 19);

/// Endpoint contract shared by the HTTP and directory backends. fetch returns
/// PNG bytes, or nullopt when the server has no such tile (HTTP 404).
class TileSource {
 public:
  virtual ~TileSource() = default;
  virtual std::optional<std::vector<std::uint8_t>> fetch(const TileCoord& tile) = 0;
  /// Identifies the server; a cache directory is bound to one identity.
  virtual std::string identity() const = 0;
  std::size_t requests() const { return requests_; }

 protected:
  std::size_t requests_ = 0;
};

/// Offline backend: {root}/{z}/{x}/{y}.png.
class DirectoryTileSource : public TileSource {
 public:
  explicit DirectoryTileSource(std::filesystem::path root);
  std::optional<std::vector<std::uint8_t>> fetch(const TileCoord& tile) override;
  std::string identity() const override;

 private:
  std::filesystem::path root_;
};

struct HttpOptions {
  std::string user_agent;  // required; public tile servers reject anonymous clients
  int max_retries = 3;
  std::chrono::milliseconds min_interval{250};
  std::chrono::seconds timeout{20};
};

/// GETs {base}/{z}/{x}/{y}.png. Transport failures and 5xx answers are
/// retried with backoff, then raised as fetch errors. Requests are spaced at
/// least min_interval apart process-wide.
class HttpTileSource : public TileSource {
 public:
  HttpTileSource(std::string base_url, HttpOptions options);
  std::optional<std::vector<std::uint8_t>> fetch(const TileCoord& tile) override;
  std::string identity() const override { return base_url_; }

 private:
  std::string base_url_;
  HttpOptions options_;
};

/// Disk cache {dir}/{z}/{x}/{y}.png in front of a source. The directory
/// records the source identity in source.txt and refuses to serve another
/// server. Files land by atomic rename so concurrent writers are safe.
class TileCache {
 public:
  TileCache(std::filesystem::path dir, TileSource& source);

  /// Decoded 256x256 tile, or nullopt for a missing tile.
  std::optional<Rgb8Image> get(const TileCoord& tile);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  TileSource& source_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

struct MapFetchOptions {
  std::optional<int> zoom;         // default: select_zoom
  bool blank_missing = false;      // fill 404 tiles instead of failing
  std::uint8_t blank[3] = {242, 239, 233};
};

/// chip_size x chip_size map chip centered on (lat, lon) with
/// ground_resolution m/px, nearest-neighbor resampled from the covering
/// tiles. Unit value range.
RasterChip fetch_map_chip(double center_lat, double center_lon, double ground_resolution,
                          int chip_size, TileCache& cache, const MapFetchOptions& options = {});

struct ScrapeSummary {
  std::size_t chips = 0;
  std::size_t skipped = 0;  // entries without geo information
};

/// Adds a map chip to every manifest entry whose SAR chip carries geo info,
/// writes chips/<id>.map.chip and rewrites the manifest file.
ScrapeSummary scrape_maps(Manifest& manifest, const std::filesystem::path& manifest_path,
                          TileCache& cache, const MapFetchOptions& options = {});

}  // namespace s2e
