#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>

#include "posekit/losses.hpp"

namespace posekit {

/// Loss weights and per-category symmetry, read from `key = value` lines:
///
///   weights.lambda1 = 0.2          # pose; also lambda2..lambda4, lambda_reg, beta
///   category.bottle.symmetry = axis
///   category.bottle.axis = 0 1 0
///   category.bottle.discretization = 64
///   category.mug.symmetry = none
///
/// Blank lines and text after '#' are ignored.
struct CategoryConfig {
  LossWeights weights;
  std::map<std::string, SymmetrySpec> categories;

  /// Bottle, bowl and can are symmetric about +y; camera, laptop and mug are not.
  static CategoryConfig defaults();

  std::set<std::string> category_names() const;
  /// Throws kInvalidInput for an unknown category.
  const SymmetrySpec& symmetry(const std::string& category) const;
};

/// Starts from `base` and overrides whatever the text sets. Throws kParse with
/// the line number on malformed input.
CategoryConfig parse_category_config(std::istream& in, CategoryConfig base = CategoryConfig::defaults());
CategoryConfig load_category_config(const std::filesystem::path& path,
                                    CategoryConfig base = CategoryConfig::defaults());

}  // namespace posekit
