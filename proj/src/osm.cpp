#include "s2e/osm.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "s2e/chip_io.hpp"
#include "s2e/error.hpp"
#include "s2e/ingest.hpp"

namespace s2e {

namespace {

double mercator_y(double lat) {
  const double phi = lat * std::numbers::pi / 180.0;
  return (1.0 - std::log(std::tan(phi) + 1.0 / std::cos(phi)) / std::numbers::pi) / 2.0;
}

void check_latlon(double lat, double lon) {
  if (!(std::abs(lat) <= kMercatorMaxLat)) {
    fail(ErrorKind::projection, "latitude " + std::to_string(lat) + " is outside the Web Mercator range");
  }
  if (!(lon >= -180.0 && lon <= 180.0)) {
    fail(ErrorKind::projection, "longitude " + std::to_string(lon) + " is outside [-180, 180]");
  }
}

void check_zoom(int zoom) {
  if (zoom < 0 || zoom > 30) fail(ErrorKind::config, "zoom must be in [0, 30]");
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::create_directories(path.parent_path());
  std::ostringstream tag;
  tag << ".tmp." << std::this_thread::get_id();
  const auto tmp = path.string() + tag.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Process-wide spacing between uncached requests.
void wait_for_slot(std::chrono::milliseconds interval) {
  static std::mutex mutex;
  static std::chrono::steady_clock::time_point last{};
  std::lock_guard lock(mutex);
  const auto now = std::chrono::steady_clock::now();
  if (last.time_since_epoch().count() != 0 && now < last + interval) {
    std::this_thread::sleep_for(last + interval - now);
  }
  last = std::chrono::steady_clock::now();
}

}  // namespace

bool TileCoord::valid() const {
  if (zoom < 0 || zoom > 30) return false;
  const std::int64_t n = std::int64_t{1} << zoom;
  return x >= 0 && x < n && y >= 0 && y < n;
}

std::string TileCoord::path() const {
  return std::to_string(zoom) + "/" + std::to_string(x) + "/" + std::to_string(y);
}

TileCoord latlon_to_tile(double lat, double lon, int zoom) {
  check_latlon(lat, lon);
  check_zoom(zoom);
  const std::int64_t n = std::int64_t{1} << zoom;
  const double scale = static_cast<double>(n);
  auto x = static_cast<std::int64_t>(std::floor((lon + 180.0) / 360.0 * scale));
  auto y = static_cast<std::int64_t>(std::floor(mercator_y(lat) * scale));
  x = std::clamp<std::int64_t>(x, 0, n - 1);
  y = std::clamp<std::int64_t>(y, 0, n - 1);
  return {zoom, x, y};
}

std::pair<double, double> tile_to_latlon(const TileCoord& tile) {
  const double n = std::ldexp(1.0, tile.zoom);
  const double lon = static_cast<double>(tile.x) / n * 360.0 - 180.0;
  const double lat =
      std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * static_cast<double>(tile.y) / n))) *
      180.0 / std::numbers::pi;
  return {lat, lon};
}

std::pair<double, double> latlon_to_world_pixel(double lat, double lon, int zoom) {
  check_latlon(lat, lon);
  check_zoom(zoom);
  const double size = std::ldexp(static_cast<double>(kTileSize), zoom);
  return {(lon + 180.0) / 360.0 * size, mercator_y(lat) * size};
}

double tile_ground_resolution(double lat, int zoom) {
  return kZoom0Resolution * std::cos(lat * std::numbers::pi / 180.0) / std::ldexp(1.0, zoom);
}

int select_zoom(double lat, double ground_resolution, int max_zoom) {
  if (!(ground_resolution > 0.0)) fail(ErrorKind::config, "ground resolution must be positive");
  int best = 0;
  double best_err = std::abs(tile_ground_resolution(lat, 0) - ground_resolution);
  for (int z = 1; z <= max_zoom; ++z) {
    const double err = std::abs(tile_ground_resolution(lat, z) - ground_resolution);
    if (err < best_err) {
      best = z;
      best_err = err;
    }
  }
  return best;
}

DirectoryTileSource::DirectoryTileSource(std::filesystem::path root) : root_(std::move(root)) {
  if (!std::filesystem::is_directory(root_)) {
    fail(ErrorKind::config, "offline tile directory not found: " + root_.string());
  }
}

std::optional<std::vector<std::uint8_t>> DirectoryTileSource::fetch(const TileCoord& tile) {
  ++requests_;
  const auto path = root_ / (tile.path() + ".png");
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_bytes(path);
}

std::string DirectoryTileSource::identity() const {
  return "file://" + std::filesystem::absolute(root_).lexically_normal().string();
}

HttpTileSource::HttpTileSource(std::string base_url, HttpOptions options)
    : base_url_(std::move(base_url)), options_(std::move(options)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (options_.user_agent.empty()) {
    fail(ErrorKind::config, "a user agent is required for tile requests");
  }
  if (base_url_.rfind("http://", 0) != 0 && base_url_.rfind("https://", 0) != 0) {
    fail(ErrorKind::config, "tile server must be an http(s) URL: " + base_url_);
  }
}

std::optional<std::vector<std::uint8_t>> HttpTileSource::fetch(const TileCoord& tile) {
  const auto scheme_end = base_url_.find("://") + 3;
  const auto path_start = base_url_.find('/', scheme_end);
  const std::string host = base_url_.substr(0, path_start);
  const std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);
  const std::string path = prefix + "/" + tile.path() + ".png";

  httplib::Client client(host);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_follow_location(true);
  const httplib::Headers headers{{"User-Agent", options_.user_agent}};

  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 << (attempt - 1)));
    wait_for_slot(options_.min_interval);
    ++requests_;
    auto res = client.Get(path, headers);
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 404) return std::nullopt;
    if (res->status == 200) {
      return std::vector<std::uint8_t>(res->body.begin(), res->body.end());
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (res->status < 500 && res->status != 429) break;
  }
  fail(ErrorKind::fetch, "tile " + tile.path() + " from " + base_url_ + ": " + last_error);
}

TileCache::TileCache(std::filesystem::path dir, TileSource& source)
    : dir_(std::move(dir)), source_(source) {
  std::filesystem::create_directories(dir_);
  const auto marker = dir_ / "source.txt";
  const std::string id = source_.identity();
  if (std::filesystem::exists(marker)) {
    const auto bytes = read_bytes(marker);
    std::string bound(bytes.begin(), bytes.end());
    while (!bound.empty() && (bound.back() == '\n' || bound.back() == '\r')) bound.pop_back();
    if (bound != id) {
      fail(ErrorKind::config, "tile cache " + dir_.string() + " belongs to " + bound +
                                  ", not " + id);
    }
  } else {
    const std::string text = id + "\n";
    write_atomic(marker, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
}

std::optional<Rgb8Image> TileCache::get(const TileCoord& tile) {
  if (!tile.valid()) fail(ErrorKind::projection, "invalid tile " + tile.path());
  const auto path = dir_ / (tile.path() + ".png");
  std::vector<std::uint8_t> bytes;
  if (std::filesystem::exists(path)) {
    ++hits_;
    bytes = read_bytes(path);
  } else {
    ++misses_;
    auto fetched = source_.fetch(tile);
    if (!fetched) return std::nullopt;
    bytes = std::move(*fetched);
    decode_png(bytes);  // never cache an undecodable answer
    write_atomic(path, bytes);
  }
  Rgb8Image img = decode_png(bytes);
  if (img.width != kTileSize || img.height != kTileSize) {
    fail(ErrorKind::integrity, "tile " + tile.path() + " is not 256x256");
  }
  return img;
}

RasterChip fetch_map_chip(double center_lat, double center_lon, double ground_resolution,
                          int chip_size, TileCache& cache, const MapFetchOptions& options) {
  if (chip_size <= 0) fail(ErrorKind::config, "chip size must be positive");
  check_latlon(center_lat, center_lon);
  const int zoom = options.zoom ? *options.zoom : select_zoom(center_lat, ground_resolution);
  const auto [cx, cy] = latlon_to_world_pixel(center_lat, center_lon, zoom);
  const double step = ground_resolution / tile_ground_resolution(center_lat, zoom);
  const std::int64_t n = std::int64_t{1} << zoom;

  std::vector<std::int64_t> wx(chip_size), wy(chip_size);
  for (int i = 0; i < chip_size; ++i) {
    const double offset = (i + 0.5 - chip_size / 2.0) * step;
    wx[i] = static_cast<std::int64_t>(std::floor(cx + offset));
    wy[i] = static_cast<std::int64_t>(std::floor(cy + offset));
  }

  std::map<TileCoord, std::optional<Rgb8Image>> tiles;
  auto tile_at = [&](std::int64_t tx, std::int64_t ty) -> const std::optional<Rgb8Image>& {
    const TileCoord key{zoom, ((tx % n) + n) % n, ty};
    auto it = tiles.find(key);
    if (it != tiles.end()) return it->second;
    std::optional<Rgb8Image> img;
    if (ty >= 0 && ty < n) {
      img = cache.get(key);
      if (!img && !options.blank_missing) {
        fail(ErrorKind::missing_tile, "tile " + key.path() + " does not exist on the server");
      }
    }
    return tiles.emplace(key, std::move(img)).first->second;
  };

  const std::size_t plane = static_cast<std::size_t>(chip_size) * chip_size;
  std::vector<float> data(3 * plane);
  for (int i = 0; i < chip_size; ++i) {
    const std::int64_t ty = floor_div(wy[i], kTileSize);
    const int py = static_cast<int>(wy[i] - ty * kTileSize);
    for (int j = 0; j < chip_size; ++j) {
      const std::int64_t tx = floor_div(wx[j], kTileSize);
      const int px = static_cast<int>(wx[j] - tx * kTileSize);
      const auto& img = tile_at(tx, ty);
      const std::uint8_t* rgb = img ? img->at(px, py) : options.blank;
      const std::size_t k = static_cast<std::size_t>(i) * chip_size + j;
      for (int c = 0; c < 3; ++c) data[c * plane + k] = rgb[c] / 255.0f;
    }
  }
  return RasterChip(3, chip_size, chip_size, std::move(data), ValueRange::unit,
                    GeoInfo{center_lat, center_lon, ground_resolution});
}

ScrapeSummary scrape_maps(Manifest& manifest, const std::filesystem::path& manifest_path,
                          TileCache& cache, const MapFetchOptions& options) {
  ScrapeSummary summary;
  for (auto& entry : manifest.samples) {
    const RasterChip sar = read_chip(manifest.base_dir / entry.paths.sar);
    if (!sar.geo() || !(sar.geo()->ground_resolution > 0.0)) {
      ++summary.skipped;
      continue;
    }
    const auto& geo = *sar.geo();
    if (sar.height() != sar.width()) fail(ErrorKind::dimension, "map chips must be square");
    const RasterChip map =
        fetch_map_chip(geo.center_lat, geo.center_lon, geo.ground_resolution, sar.width(), cache,
                       options);
    std::filesystem::path rel = std::filesystem::path(entry.paths.sar).parent_path() /
                                (entry.id + ".map.chip");
    write_chip(manifest.base_dir / rel, to_unit_signed(map), ModalityKind::map_rgb);
    entry.paths.map = rel.generic_string();
    ++summary.chips;
  }
  write_manifest(manifest, manifest_path);
  return summary;
}

}  // namespace s2e
