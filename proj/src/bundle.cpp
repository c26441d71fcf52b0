#include "robust_enkf/bundle.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace robust_enkf {

namespace {

constexpr const char* kMagic = "robust-enkf-bundle";
constexpr int kVersion = 1;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& token, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw IoError("bundle line " + std::to_string(line_no) + ": bad number '" +
                  token + "'");
  }
}

}  // namespace

double Bundle::scalar(const std::string& key) const {
  auto it = scalars.find(key);
  if (it == scalars.end()) throw IoError("bundle has no scalar '" + key + "'");
  return it->second;
}

const Mat& Bundle::matrix(const std::string& key) const {
  auto it = matrices.find(key);
  if (it == matrices.end()) throw IoError("bundle has no matrix '" + key + "'");
  return it->second;
}

std::string to_text(const Bundle& bundle) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "kind " << bundle.kind << '\n';
  for (const auto& [key, value] : bundle.scalars) {
    out << "scalar " << key << ' ' << format_double(value) << '\n';
  }
  for (const auto& [key, M] : bundle.matrices) {
    out << "matrix " << key << ' ' << M.rows() << ' ' << M.cols() << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) {
        if (j) out << ',';
        out << format_double(M(i, j));
      }
      out << '\n';
    }
  }
  return out.str();
}

Bundle bundle_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };

  if (!next_line()) throw IoError("empty bundle");
  {
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kMagic || version != kVersion) {
      throw IoError("not a version-1 robust-enkf bundle");
    }
  }

  Bundle bundle;
  while (next_line()) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      ls >> bundle.kind;
    } else if (tag == "scalar") {
      std::string key, value;
      ls >> key >> value;
      bundle.scalars[key] = parse_double(value, line_no);
    } else if (tag == "matrix") {
      std::string key;
      long rows = -1, cols = -1;
      ls >> key >> rows >> cols;
      if (rows < 0 || cols < 0) {
        throw IoError("bundle line " + std::to_string(line_no) + ": bad matrix header");
      }
      Mat M(rows, cols);
      for (long i = 0; i < rows; ++i) {
        if (!next_line()) throw IoError("bundle truncated inside matrix " + key);
        std::istringstream row(line);
        std::string cell;
        long j = 0;
        while (std::getline(row, cell, ',')) {
          if (j >= cols) {
            throw IoError("bundle line " + std::to_string(line_no) + ": too many columns");
          }
          M(i, j++) = parse_double(cell, line_no);
        }
        if (j != cols) {
          throw IoError("bundle line " + std::to_string(line_no) + ": too few columns");
        }
      }
      bundle.matrices[key] = std::move(M);
    } else {
      throw IoError("bundle line " + std::to_string(line_no) + ": unknown record '" +
                    tag + "'");
    }
  }
  return bundle;
}

void write_bundle(const std::filesystem::path& path, const Bundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_text(bundle);
  if (!out) throw IoError("write failed: " + path.string());
}

Bundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return bundle_from_text(buf.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Bundle to_bundle(const ReducedModel& model) {
  Bundle b;
  b.kind = "reduced_model";
  b.scalars["n"] = static_cast<double>(model.n());
  b.scalars["m"] = static_cast<double>(model.m());
  b.scalars["p"] = static_cast<double>(model.full_dim());
  b.scalars["dt_fit"] = model.dt_fit;
  b.scalars["discrete"] = model.discrete ? 1.0 : 0.0;
  b.matrices["A"] = model.A;
  b.matrices["B"] = model.B;
  b.matrices["Phi"] = model.Phi;
  return b;
}

ReducedModel reduced_model_from_bundle(const Bundle& bundle) {
  if (bundle.kind != "reduced_model") {
    throw IoError("expected a reduced_model bundle, got '" + bundle.kind + "'");
  }
  ReducedModel model;
  model.A = bundle.matrix("A");
  model.B = bundle.matrix("B");
  model.Phi = bundle.matrix("Phi");
  model.dt_fit = bundle.scalar("dt_fit");
  model.discrete = bundle.scalar("discrete") != 0.0;
  require_dim(model.A.rows(), static_cast<Eigen::Index>(bundle.scalar("n")), "bundle n");
  require_dim(model.Phi.rows(), model.n(), "bundle Phi rows");
  return model;
}

Bundle to_bundle(const GainApprox& gain) {
  Bundle b;
  b.kind = "gain";
  b.scalars["n"] = static_cast<double>(gain.dim());
  b.scalars["nonlinear"] = gain.mode == GainMode::nonlinear ? 1.0 : 0.0;
  b.matrices["S0"] = gain.S0;
  b.matrices["P"] = gain.P;
  return b;
}

GainApprox gain_from_bundle(const Bundle& bundle) {
  if (bundle.kind != "gain") {
    throw IoError("expected a gain bundle, got '" + bundle.kind + "'");
  }
  GainApprox gain;
  gain.S0 = bundle.matrix("S0");
  gain.P = bundle.matrix("P");
  gain.mode = bundle.scalar("nonlinear") != 0.0 ? GainMode::nonlinear : GainMode::linear;
  require_dim(gain.P.rows(), static_cast<Eigen::Index>(bundle.scalar("n")), "bundle n");
  return gain;
}

}  // namespace robust_enkf
