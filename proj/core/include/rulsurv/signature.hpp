#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulsurv/ingest.hpp"

namespace rulsurv {

inline constexpr std::size_t kDefaultSignatureCap = 10'000;

/// Piecewise-linear path in R^d, stored row-major. The first coordinate
/// (time) is strictly increasing.
class AugmentedPath {
 public:
  AugmentedPath(std::size_t dim, std::vector<double> coordinates);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return coords_.size() / dim_; }
  std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  const std::vector<double>& coordinates() const noexcept { return coords_; }

  /// Sub-path over points [first, last], inclusive.
  AugmentedPath slice(std::size_t first, std::size_t last) const;

 private:
  std::size_t dim_;
  std::vector<double> coords_;
};

/// (t, v) -> ((t - t0) / (t_end - t0), v). Throws DegeneratePath when the
/// path has fewer than two points or zero time span.
AugmentedPath augment_time(const VoltagePath& path);

/// Truncated signature. Level j holds d^j entries in lexicographic
/// multi-index order; levels are concatenated 1..depth.
struct SignatureVector {
  int depth = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> level(int j) const;
};

/// d + d^2 + ... + d^depth, or 0 on overflow.
std::size_t signature_length(std::size_t dim, int depth) noexcept;

/// Exact signature of the piecewise-linear interpolation: each segment
/// contributes exp(increment), segments are chained with the truncated
/// tensor product (Chen's identity).
SignatureVector signature(const AugmentedPath& path, int depth,
                          std::size_t max_entries = kDefaultSignatureCap);

/// Same computation for an arbitrary polyline in R^dim (row-major points,
/// at least two); no monotone time channel is required.
SignatureVector polyline_signature(std::size_t dim, std::span<const double> coordinates, int depth,
                                   std::size_t max_entries = kDefaultSignatureCap);

/// Truncated tensor product of two signatures of equal depth and dim.
SignatureVector chen_product(const SignatureVector& a, const SignatureVector& b);

/// Signature of the requested phase. Throws InvalidArgument if that phase
/// is absent.
std::vector<double> featurize(const std::optional<AugmentedPath>& charge,
                              const std::optional<AugmentedPath>& discharge, Phase phase, int depth,
                              std::size_t max_entries = kDefaultSignatureCap);

/// Column names matching signature order, e.g. "S1", "S2", "S1_1", "S1_2".
std::vector<std::string> signature_labels(std::size_t dim, int depth);

}  // namespace rulsurv
