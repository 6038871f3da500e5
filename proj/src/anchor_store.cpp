#include "lanequest/anchor_store.hpp"

#include <algorithm>
#include <cmath>

#include "lanequest/error.hpp"
#include "lanequest/text.hpp"

namespace lanequest {

namespace {

constexpr std::string_view kHeader = "#lanequest-anchors v1";
constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;
constexpr double kCellDeg = 100.0 / kMetersPerDegree;  // ~100 m of latitude
constexpr long long kLonCells = static_cast<long long>(360.0 / kCellDeg) + 1;

long long lon_cell(double lon) { return static_cast<long long>(std::floor((lon + 180.0) / kCellDeg)); }
long long lat_cell(double lat) { return static_cast<long long>(std::floor((lat + 90.0) / kCellDeg)); }

bool valid_id(const std::string& id) {
  return !id.empty() && std::none_of(id.begin(), id.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void validate(const Anchor& a) {
  if (!valid_id(a.id)) throw ValidationError("anchor id must be non-empty without whitespace");
  if (!is_distribution(a.lane_distribution))
    throw ValidationError("anchor '" + a.id + "' has an invalid lane distribution");
  if (!std::isfinite(a.centroid.lat) || !std::isfinite(a.centroid.lon) || std::abs(a.centroid.lat) > 90.0 ||
      std::abs(a.centroid.lon) > 180.0)
    throw ValidationError("anchor '" + a.id + "' has an invalid centroid");
  if (!std::isfinite(a.feature_mean) || !std::isfinite(a.feature_spread))
    throw ValidationError("anchor '" + a.id + "' has non-finite feature statistics");
  if (a.support_count < 0) throw ValidationError("anchor '" + a.id + "' has negative support");
}

std::string sigma_key(AnchorKind kind) { return std::string(to_string(kind)); }

AnchorStore::Cell AnchorStore::cell_of(const LatLon& p) { return {lat_cell(p.lat), lon_cell(p.lon)}; }

void AnchorStore::unindex(const Anchor& a) {
  auto it = grid_.find(cell_of(a.centroid));
  if (it == grid_.end()) return;
  auto& ids = it->second;
  ids.erase(std::remove(ids.begin(), ids.end(), a.id), ids.end());
  if (ids.empty()) grid_.erase(it);
}

void AnchorStore::insert(Anchor a) {
  validate(a);
  auto it = anchors_.find(a.id);
  if (it != anchors_.end()) {
    unindex(it->second);
    it->second = std::move(a);
  } else {
    it = anchors_.emplace(a.id, std::move(a)).first;
  }
  grid_[cell_of(it->second.centroid)].push_back(it->first);
}

bool AnchorStore::erase(const std::string& id) {
  auto it = anchors_.find(id);
  if (it == anchors_.end()) return false;
  unindex(it->second);
  anchors_.erase(it);
  return true;
}

const Anchor* AnchorStore::find(const std::string& id) const {
  auto it = anchors_.find(id);
  return it == anchors_.end() ? nullptr : &it->second;
}

std::vector<const Anchor*> AnchorStore::query_nearby(const LatLon& where, double radius_m,
                                                     std::span<const AnchorKind> kinds) const {
  if (!(radius_m > 0.0)) throw DomainError("query radius must be positive");
  const auto kind_ok = [&](AnchorKind k) { return kinds.empty() || std::find(kinds.begin(), kinds.end(), k) != kinds.end(); };

  // Bounding box with a 1% margin; haversine decides membership.
  const double dlat = radius_m * 1.01 / kMetersPerDegree;
  const double lat_lo = std::max(-90.0, where.lat - dlat);
  const double lat_hi = std::min(90.0, where.lat + dlat);
  const double cos_max = std::cos(deg2rad(std::max(std::abs(lat_lo), std::abs(lat_hi))));
  const double dlon = cos_max > 1e-9 ? dlat / cos_max : 360.0;

  std::vector<std::pair<double, const Anchor*>> hits;
  const auto visit = [&](const Cell& c) {
    auto it = grid_.find(c);
    if (it == grid_.end()) return;
    for (const auto& id : it->second) {
      const Anchor& a = anchors_.at(id);
      if (!kind_ok(a.kind)) continue;
      const double d = haversine_m(where, a.centroid);
      if (d <= radius_m) hits.emplace_back(d, &a);
    }
  };
  const long long r0 = lat_cell(lat_lo), r1 = lat_cell(lat_hi);
  if (dlon >= 180.0) {
    for (const auto& [cell, ids] : grid_)
      if (cell.first >= r0 && cell.first <= r1) visit(cell);
  } else {
    const long long c0 = lon_cell(where.lon - dlon), c1 = lon_cell(where.lon + dlon);
    for (long long r = r0; r <= r1; ++r)
      for (long long c = c0; c <= c1; ++c) visit({r, ((c % kLonCells) + kLonCells) % kLonCells});
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second->id < b.second->id;
  });
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  std::vector<const Anchor*> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.second);
  return out;
}

std::vector<const Anchor*> AnchorStore::all() const {
  std::vector<const Anchor*> out;
  out.reserve(anchors_.size());
  for (const auto& [id, a] : anchors_) out.push_back(&a);
  return out;
}

void AnchorStore::set_sigma(const std::string& key, double sigma) {
  if (!valid_id(key)) throw ValidationError("sigma key must be non-empty without whitespace");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
  sigmas_[key] = sigma;
}

std::optional<double> AnchorStore::sigma(const std::string& key) const {
  auto it = sigmas_.find(key);
  if (it == sigmas_.end()) return std::nullopt;
  return it->second;
}

std::string format_anchors(const AnchorStore& store) {
  std::string out(kHeader);
  out += '\n';
  for (const Anchor* a : store.all()) {
    out += "A\t" + a->id + '\t' + std::string(to_string(a->kind));
    for (double v : {a->centroid.lat, a->centroid.lon}) out += '\t' + text::format_double(v);
    out += '\t' + std::to_string(a->lane_distribution.size());
    for (double p : a->lane_distribution) out += '\t' + text::format_double(p);
    out += '\t' + text::format_double(a->feature_mean);
    out += '\t' + text::format_double(a->feature_spread);
    out += '\t' + std::to_string(a->support_count) + '\n';
  }
  for (const auto& [key, s] : store.sigmas()) out += "S\t" + key + '\t' + text::format_double(s) + '\n';
  return out;
}

AnchorStore parse_anchors_text(std::string_view body) {
  AnchorStore store;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    const std::string_view line = text::chomp(body.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!header) {
      if (line != kHeader) throw ParseError(line_no, "expected header '" + std::string(kHeader) + "'");
      header = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split_fields(line);
    if (f.empty()) continue;
    if (f[0] == "S") {
      if (f.size() != 3) throw ParseError(line_no, "record 'S' expects 2 fields");
      try {
        store.set_sigma(std::string(f[1]), text::parse_double(f[2], line_no));
      } catch (const ValidationError& e) {
        throw ParseError(line_no, e.what());
      }
      continue;
    }
    if (f[0] != "A") throw ParseError(line_no, "unknown record type '" + std::string(f[0]) + "'");
    if (f.size() < 7) throw ParseError(line_no, "truncated anchor record");
    Anchor a;
    a.id = std::string(f[1]);
    const auto kind = anchor_kind_from_string(f[2]);
    if (!kind) throw ParseError(line_no, "unknown anchor kind '" + std::string(f[2]) + "'");
    a.kind = *kind;
    a.centroid = {text::parse_double(f[3], line_no), text::parse_double(f[4], line_no)};
    const long long n = text::parse_int(f[5], line_no);
    if (n < 1 || f.size() != static_cast<std::size_t>(9 + n))
      throw ParseError(line_no, "anchor record field count does not match its lane count");
    for (long long i = 0; i < n; ++i) a.lane_distribution.push_back(text::parse_double(f[6 + i], line_no));
    a.feature_mean = text::parse_double(f[6 + n], line_no);
    a.feature_spread = text::parse_double(f[7 + n], line_no);
    a.support_count = static_cast<int>(text::parse_int(f[8 + n], line_no));
    try {
      store.insert(std::move(a));
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!header) throw ParseError(0, "missing header '" + std::string(kHeader) + "'");
  return store;
}

void save_anchors(const AnchorStore& store, const std::string& path) { text::write_file(path, format_anchors(store)); }

AnchorStore load_anchors(const std::string& path) {
  const std::string body = text::read_file(path);
  try {
    return parse_anchors_text(body);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

}  // namespace lanequest
