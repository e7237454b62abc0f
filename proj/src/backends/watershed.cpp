#include "crownstitch/backends/watershed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <queue>

namespace crownstitch::backends {

namespace {

constexpr double kScoreHeight = 40.0;  // m; heuristic canopy top for scoring

// Sliding maximum over [i - h, i + h] along one axis, clipped at the ends.
void running_max_1d(const float* in, float* out, int n, int stride, int h) {
  std::deque<int> q;
  int added = 0;
  for (int i = 0; i < n; ++i) {
    const int hi = std::min(n - 1, i + h);
    while (added <= hi) {
      while (!q.empty() && in[q.back() * stride] <= in[added * stride]) q.pop_back();
      q.push_back(added++);
    }
    while (q.front() < i - h) q.pop_front();
    out[i * stride] = in[q.front() * stride];
  }
}

std::vector<float> running_max_2d(const std::vector<float>& g, int w, int h, int half) {
  std::vector<float> rows(g.size()), out(g.size());
  for (int y = 0; y < h; ++y) running_max_1d(&g[y * w], &rows[y * w], w, 1, half);
  for (int x = 0; x < w; ++x) running_max_1d(&rows[x], &out[x], h, w, half);
  return out;
}

}  // namespace

void WatershedParams::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(smoothing_sigma) || !positive(min_treetop_distance) || !positive(min_height) ||
      min_crown_pixels <= 0) {
    throw ValidationError("watershed parameters must all be strictly positive");
  }
}

std::vector<float> gaussian_smooth(const std::vector<float>& grid, int width, int height, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& v : kernel) v /= norm;

  std::vector<float> tmp(grid.size()), out(grid.size());
  for (int y = 0; y < height; ++y) {
    const float* row = &grid[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * row[std::clamp(x + k, 0, width - 1)];
      tmp[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, height - 1)) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<InstancePrediction> watershed_segment(const raster::GeoRaster& chm_tile,
                                                  const WatershedParams& params,
                                                  const std::string& tile_id) {
  params.validate();
  if (chm_tile.bands() != 1) throw ValidationError("watershed needs a single-band height tile");
  const int w = chm_tile.width();
  const int h = chm_tile.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;

  std::vector<float> heights(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = chm_tile.value(x, y);
      heights[static_cast<std::size_t>(y) * w + x] = chm_tile.is_nodata(v) || !std::isfinite(v) ? 0.0f : v;
    }
  const std::vector<float> smooth = gaussian_smooth(heights, w, h, params.smoothing_sigma);

  std::vector<std::uint8_t> mask(n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) any |= (mask[i] = smooth[i] >= params.min_height) != 0;
  if (!any) return {};

  // treetop candidates
  const int half = static_cast<int>(std::floor(params.min_treetop_distance));
  const std::vector<float> peak = running_max_2d(smooth, w, h, half);
  std::vector<int> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] && smooth[i] == peak[i]) candidates.push_back(static_cast<int>(i));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return smooth[a] > smooth[b]; });

  // greedy suppression, bucketed so plateaus with many candidates stay cheap
  const double d = params.min_treetop_distance;
  const int cell = std::max(1, static_cast<int>(std::ceil(d)));
  const int gw = w / cell + 1;
  const int gh = h / cell + 1;
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(gw) * gh);
  std::vector<int> seeds;
  for (const int c : candidates) {
    const int cx = c % w, cy = c / w;
    const int bx = cx / cell, by = cy / cell;
    bool near = false;
    for (int yy = std::max(0, by - 1); yy <= std::min(gh - 1, by + 1) && !near; ++yy) {
      for (int xx = std::max(0, bx - 1); xx <= std::min(gw - 1, bx + 1) && !near; ++xx) {
        for (const int s : buckets[static_cast<std::size_t>(yy) * gw + xx]) {
          if (std::abs(s % w - cx) <= d && std::abs(s / w - cy) <= d) {
            near = true;
            break;
          }
        }
      }
    }
    if (near) continue;
    seeds.push_back(c);
    buckets[static_cast<std::size_t>(by) * gw + bx].push_back(c);
  }

  // priority flood
  struct Item {
    float height;
    std::uint64_t age;
    int index;
  };
  auto lower = [](const Item& a, const Item& b) {
    if (a.height != b.height) return a.height < b.height;
    return a.age > b.age;
  };
  std::priority_queue<Item, std::vector<Item>, decltype(lower)> queue(lower);
  std::vector<int> label(n, 0);
  std::uint64_t age = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    label[seeds[s]] = static_cast<int>(s) + 1;
    queue.push({smooth[seeds[s]], age++, seeds[s]});
  }
  while (!queue.empty()) {
    const Item cur = queue.top();
    queue.pop();
    const int x = cur.index % w, y = cur.index / w;
    const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (const auto& p : nbr) {
      if (p[0] < 0 || p[1] < 0 || p[0] >= w || p[1] >= h) continue;
      const int j = p[1] * w + p[0];
      if (!mask[j] || label[j] != 0) continue;
      label[j] = label[cur.index];
      queue.push({smooth[j], age++, j});
    }
  }

  std::vector<int> sizes(seeds.size() + 1, 0);
  for (const int l : label) ++sizes[l];

  // All region RLEs in one column-major sweep.
  std::vector<std::vector<std::uint32_t>> runs(seeds.size() + 1);
  std::vector<std::uint32_t> run_end(seeds.size() + 1, 0);
  std::uint32_t k = 0;
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y, ++k) {
      const int l = label[static_cast<std::size_t>(y) * w + x];
      if (l == 0 || sizes[l] < params.min_crown_pixels) continue;
      auto& r = runs[l];
      if (!r.empty() && run_end[l] == k) {
        ++r.back();
      } else {
        r.push_back(k - run_end[l]);
        r.push_back(1);
      }
      run_end[l] = k + 1;
    }
  }

  std::vector<InstancePrediction> out;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const int l = static_cast<int>(s) + 1;
    if (sizes[l] < params.min_crown_pixels) continue;
    runs[l].push_back(static_cast<std::uint32_t>(n) - run_end[l]);
    if (runs[l].back() == 0) runs[l].pop_back();
    const double score = std::clamp(smooth[seeds[s]] / kScoreHeight, 0.05, 0.99);
    out.push_back({score, geometry::RlePayload{w, h, std::move(runs[l])}, tile_id});
  }
  return out;
}

WatershedBackend::WatershedBackend(WatershedParams params) : params_(params) { params_.validate(); }

Capabilities WatershedBackend::capabilities() const { return {false, true, "watershed"}; }

std::vector<InstancePrediction> WatershedBackend::predict(const raster::TileImage& /*rgb*/,
                                                          const raster::TileImage* chm) {
  if (!chm) throw ValidationError("watershed backend needs a CHM tile");
  return watershed_segment(chm->raster, params_, chm->rect.id());
}

}  // namespace crownstitch::backends
