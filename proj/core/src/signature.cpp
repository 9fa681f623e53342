#include "rulsurv/signature.hpp"

#include <cmath>
#include <limits>

#include "rulsurv/error.hpp"

namespace rulsurv {

AugmentedPath::AugmentedPath(std::size_t dim, std::vector<double> coordinates)
    : dim_(dim), coords_(std::move(coordinates)) {
  if (dim_ == 0 || coords_.size() % dim_ != 0) {
    throw Error(ErrorCode::InvalidArgument, "coordinate count is not a multiple of the dimension");
  }
  if (size() < 2) throw Error(ErrorCode::DegeneratePath, "augmented path needs at least two points");
  for (std::size_t i = 1; i < size(); ++i) {
    if (!(coords_[i * dim_] > coords_[(i - 1) * dim_])) {
      throw Error(ErrorCode::DegeneratePath, "time channel must be strictly increasing");
    }
  }
}

AugmentedPath AugmentedPath::slice(std::size_t first, std::size_t last) const {
  std::vector<double> sub(coords_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                          coords_.begin() + static_cast<std::ptrdiff_t>((last + 1) * dim_));
  return AugmentedPath(dim_, std::move(sub));
}

AugmentedPath augment_time(const VoltagePath& path) {
  if (path.points.size() < 2) {
    throw Error(ErrorCode::DegeneratePath, "path '" + path.sample_id + "' has fewer than two points");
  }
  const double t0 = path.points.front().t;
  const double span = path.points.back().t - t0;
  if (!(span > 0.0)) throw Error(ErrorCode::DegeneratePath, "path '" + path.sample_id + "' has zero span");
  std::vector<double> coords;
  coords.reserve(path.points.size() * 2);
  for (const auto& p : path.points) {
    coords.push_back((p.t - t0) / span);
    coords.push_back(p.v);
  }
  return AugmentedPath(2, std::move(coords));
}

std::size_t signature_length(std::size_t dim, int depth) noexcept {
  std::size_t total = 0;
  std::size_t level = 1;
  for (int j = 1; j <= depth; ++j) {
    if (level > std::numeric_limits<std::size_t>::max() / dim) return 0;
    level *= dim;
    if (total > std::numeric_limits<std::size_t>::max() - level) return 0;
    total += level;
  }
  return total;
}

namespace {

std::vector<std::size_t> level_offsets(std::size_t dim, int depth) {
  // offsets[j] = start of level j (1-based); offsets[depth + 1] = total.
  std::vector<std::size_t> offsets(static_cast<std::size_t>(depth) + 2, 0);
  std::size_t width = 1;
  for (int j = 1; j <= depth; ++j) {
    width *= dim;
    offsets[j + 1] = offsets[j] + width;
  }
  return offsets;
}

/// result_n (+)= sum_{i=1}^{n-1} a_i (x) b_{n-i}, plus a_n + b_n, from the
/// top level down so that `a` may alias `out`.
void truncated_product(std::span<double> out, std::span<const double> a, std::span<const double> b,
                       std::size_t dim, int depth, const std::vector<std::size_t>& off) {
  std::vector<std::size_t> width(static_cast<std::size_t>(depth) + 1, 1);
  for (int j = 1; j <= depth; ++j) width[j] = width[j - 1] * dim;
  for (int n = depth; n >= 1; --n) {
    double* dst = out.data() + off[n];
    const double* an = a.data() + off[n];
    const double* bn = b.data() + off[n];
    for (std::size_t k = 0; k < width[n]; ++k) dst[k] = an[k] + bn[k];
    for (int i = 1; i < n; ++i) {
      const double* ai = a.data() + off[i];
      const double* bj = b.data() + off[n - i];
      const std::size_t wb = width[n - i];
      for (std::size_t p = 0; p < width[i]; ++p) {
        const double ap = ai[p];
        double* row = dst + p * wb;
        for (std::size_t q = 0; q < wb; ++q) row[q] += ap * bj[q];
      }
    }
  }
}

}  // namespace

std::span<const double> SignatureVector::level(int j) const {
  const auto off = level_offsets(dim, depth);
  return {values.data() + off[j], off[j + 1] - off[j]};
}

SignatureVector signature(const AugmentedPath& path, int depth, std::size_t max_entries) {
  return polyline_signature(path.dim(), path.coordinates(), depth, max_entries);
}

SignatureVector polyline_signature(std::size_t dim, std::span<const double> coordinates, int depth,
                                   std::size_t max_entries) {
  if (depth < 1) throw Error(ErrorCode::InvalidArgument, "signature depth must be at least 1");
  if (dim == 0 || coordinates.size() % dim != 0) {
    throw Error(ErrorCode::InvalidArgument, "coordinate count is not a multiple of the dimension");
  }
  const std::size_t points = coordinates.size() / dim;
  if (points < 2) throw Error(ErrorCode::DegeneratePath, "path needs at least two points");
  const std::size_t total = signature_length(dim, depth);
  if (total == 0 || total > max_entries) {
    throw Error(ErrorCode::DepthTooLarge, "depth " + std::to_string(depth) + " in dimension " +
                                              std::to_string(dim) + " exceeds the feature cap of " +
                                              std::to_string(max_entries));
  }
  const auto off = level_offsets(dim, depth);

  SignatureVector sig{depth, dim, std::vector<double>(total, 0.0)};
  std::vector<double> segment(total, 0.0);
  std::vector<double> increment(dim);

  for (std::size_t s = 0; s + 1 < points; ++s) {
    const double* p0 = coordinates.data() + s * dim;
    const double* p1 = p0 + dim;
    for (std::size_t i = 0; i < dim; ++i) increment[i] = p1[i] - p0[i];
    // exp(increment): level j = increment^{(x) j} / j!
    for (std::size_t i = 0; i < dim; ++i) segment[i] = increment[i];
    for (int j = 2; j <= depth; ++j) {
      const double* prev = segment.data() + off[j - 1];
      double* cur = segment.data() + off[j];
      const std::size_t wprev = off[j] - off[j - 1];
      const double inv_j = 1.0 / j;
      for (std::size_t p = 0; p < wprev; ++p) {
        for (std::size_t q = 0; q < dim; ++q) cur[p * dim + q] = prev[p] * increment[q] * inv_j;
      }
    }
    truncated_product(sig.values, sig.values, segment, dim, depth, off);
  }
  return sig;
}

SignatureVector chen_product(const SignatureVector& a, const SignatureVector& b) {
  if (a.depth != b.depth || a.dim != b.dim || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::InvalidArgument, "signatures differ in depth or dimension");
  }
  SignatureVector out{a.depth, a.dim, std::vector<double>(a.values.size(), 0.0)};
  truncated_product(out.values, a.values, b.values, a.dim, a.depth, level_offsets(a.dim, a.depth));
  return out;
}

std::vector<double> featurize(const std::optional<AugmentedPath>& charge,
                              const std::optional<AugmentedPath>& discharge, Phase phase, int depth,
                              std::size_t max_entries) {
  const auto& chosen = phase == Phase::Charge ? charge : discharge;
  if (!chosen) {
    throw Error(ErrorCode::InvalidArgument, std::string("sample has no ") + to_string(phase) + " path");
  }
  return signature(*chosen, depth, max_entries).values;
}

std::vector<std::string> signature_labels(std::size_t dim, int depth) {
  std::vector<std::string> labels;
  std::vector<std::size_t> index;
  for (int j = 1; j <= depth; ++j) {
    index.assign(static_cast<std::size_t>(j), 0);
    while (true) {
      std::string name = "S";
      for (std::size_t k = 0; k < index.size(); ++k) {
        if (k > 0) name += '_';
        name += std::to_string(index[k] + 1);
      }
      labels.push_back(std::move(name));
      int pos = j - 1;
      while (pos >= 0 && ++index[pos] == dim) index[pos--] = 0;
      if (pos < 0) break;
    }
  }
  return labels;
}

}  // namespace rulsurv
