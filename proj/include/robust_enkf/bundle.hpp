#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "robust_enkf/common.hpp"
#include "robust_enkf/dual_enkf.hpp"
#include "robust_enkf/reduced_model.hpp"

namespace robust_enkf {

/// Flat text bundle of named scalars and row-major matrices.
///
///   robust-enkf-bundle 1
///   kind <name>
///   scalar <key> <value>
///   matrix <key> <rows> <cols>
///   <row 0, comma separated>
///   ...
///
/// Values are written with 17 significant digits so a save/load cycle is
/// exact.
struct Bundle {
  std::string kind;
  std::map<std::string, double> scalars;
  std::map<std::string, Mat> matrices;

  double scalar(const std::string& key) const;
  const Mat& matrix(const std::string& key) const;
};

void write_bundle(const std::filesystem::path& path, const Bundle& bundle);
Bundle read_bundle(const std::filesystem::path& path);

std::string to_text(const Bundle& bundle);
Bundle bundle_from_text(const std::string& text);

Bundle to_bundle(const ReducedModel& model);
ReducedModel reduced_model_from_bundle(const Bundle& bundle);

Bundle to_bundle(const GainApprox& gain);
GainApprox gain_from_bundle(const Bundle& bundle);

}  // namespace robust_enkf
