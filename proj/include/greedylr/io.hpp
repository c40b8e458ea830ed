#pragma once

// On-disk formats: Matrix Market for sparse matrices, headered whitespace text for
// dense ones, binary PGM for images, FNV-1a checksums, and the problem bundle
// (manifest.json + Lx.mtx, Ly.mtx, X.txt, Y.txt, Omega.txt). Text formats print 17
// significant digits, so doubles round-trip bit-exactly.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "greedylr/errors.hpp"
#include "greedylr/problem.hpp"

namespace greedylr {

// ----------------------------------------------------------------------------
// Checksums
// ----------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= static_cast<std::uint64_t>(bytes[i]);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline std::string checksum_hex(const std::string& bytes) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return std::string(hex);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw io_error("failed reading " + path.string());
  return buf.str();
}

inline std::string file_checksum(const std::filesystem::path& path) {
  return checksum_hex(read_file_bytes(path));
}

namespace detail {

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::ofstream open_for_write(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw io_error("cannot write " + path.string());
  return out;
}

inline void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw io_error("failed writing " + path.string());
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Matrix Market (coordinate, real); the writer emits "general", the reader also
// accepts "symmetric" with either triangle stored.
// ----------------------------------------------------------------------------

inline void write_matrix_market(const std::filesystem::path& path, const SpMat& m) {
  std::ofstream out = detail::open_for_write(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  for (Index c = 0; c < m.outerSize(); ++c)
    for (SpMat::InnerIterator it(m, c); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << detail::format_value(it.value())
          << '\n';
  detail::finish_write(out, path);
}

inline SpMat read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw io_error(path.string() + ": empty file");
  std::istringstream head(header);
  std::string banner, object, format, field, qualifier;
  head >> banner >> object >> format >> field >> qualifier;
  if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate" ||
      field != "real")
    throw io_error(path.string() + ": expected a coordinate real Matrix Market header");
  const bool symmetric = qualifier == "symmetric";
  if (!symmetric && qualifier != "general")
    throw io_error(path.string() + ": unsupported qualifier '" + qualifier + "'");

  std::string line;
  Index rows = -1, cols = -1;
  long long declared = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream sizes(line);
    if (!(sizes >> rows >> cols >> declared))
      throw io_error(path.string() + ": malformed size line '" + line + "'");
    break;
  }
  if (rows < 0 || cols < 0 || declared < 0)
    throw io_error(path.string() + ": missing size line");

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(symmetric ? 2 * declared : declared));
  for (long long k = 0; k < declared; ++k) {
    Index i = 0, j = 0;
    double value = 0.0;
    if (!(in >> i >> j >> value))
      throw io_error(path.string() + ": expected " + std::to_string(declared) +
                     " entries, got " + std::to_string(k));
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw io_error(path.string() + ": entry index out of range");
    if (!std::isfinite(value)) throw io_error(path.string() + ": non-finite entry");
    entries.emplace_back(i - 1, j - 1, value);
    if (symmetric && i != j) entries.emplace_back(j - 1, i - 1, value);
  }

  SpMat m(rows, cols);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  return m;
}

// ----------------------------------------------------------------------------
// Dense text: "rows cols" header, then row-major whitespace-delimited entries.
// ----------------------------------------------------------------------------

inline void write_dense_text(const std::filesystem::path& path, const Mat& m) {
  std::ofstream out = detail::open_for_write(path);
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ' ';
      out << detail::format_value(m(i, j));
    }
    out << '\n';
  }
  detail::finish_write(out, path);
}

inline Mat read_dense_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  Index rows = -1, cols = -1;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0)
    throw io_error(path.string() + ": malformed dimension header");
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (!(in >> m(i, j)))
        throw io_error(path.string() + ": expected " + std::to_string(rows * cols) + " entries");
  std::string extra;
  if (in >> extra) throw io_error(path.string() + ": trailing data after matrix entries");
  return m;
}

// ----------------------------------------------------------------------------
// Binary PGM (P5). Values map linearly from [min, max] to [0, 255]; the scale is
// returned so a sidecar can record it. A constant image maps to all-zero pixels.
// ----------------------------------------------------------------------------

struct PgmScale {
  double min_value = 0.0;
  double max_value = 0.0;
};

inline PgmScale write_pgm(const std::filesystem::path& path, const Mat& values) {
  if (values.size() == 0) throw validation_error("write_pgm: empty image");
  PgmScale scale{values.minCoeff(), values.maxCoeff()};
  const double span = scale.max_value - scale.min_value;
  std::ofstream out = detail::open_for_write(path, /*binary=*/true);
  out << "P5\n" << values.cols() << ' ' << values.rows() << "\n255\n";
  std::string pixels;
  pixels.reserve(static_cast<std::size_t>(values.size()));
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j) {
      const double unit = span > 0.0 ? (values(i, j) - scale.min_value) / span : 0.0;
      pixels.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * unit))));
    }
  out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  detail::finish_write(out, path);
  return scale;
}

// ----------------------------------------------------------------------------
// Problem bundle
// ----------------------------------------------------------------------------

struct BundleMeta {
  std::string kind = "custom";  // toy | grid | custom
  Index n_y = 0, n_x = 0, n_inj = 0;
  double lambda_bar = 0.0, lambda = 0.0;
  std::string mask_convention = "observed-is-one";
  Index grid_height = 0, grid_width = 0;    // 0 x 0 when cells carry no 2-D layout
  std::string cell_ordering = "row-major";  // cell index = row * width + col
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  double lattice_weight = 0.0;  // generator quadrature weight; 0 when not generated
  std::string note;
};

struct Bundle {
  ProblemInstance problem;
  BundleMeta meta;
};

namespace detail {

inline const std::vector<std::string>& bundle_files() {
  static const std::vector<std::string> names = {"Lx.mtx", "Ly.mtx", "X.txt", "Y.txt",
                                                 "Omega.txt"};
  return names;
}

}  // namespace detail

// Writes the five matrix files plus manifest.json. Dimension and lambda fields of
// the meta are taken from the instance; the rest (kind, seed, note, grid layout)
// is caller-provided provenance.
inline void write_bundle(const std::filesystem::path& dir, const ProblemInstance& p,
                         BundleMeta meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());

  meta.n_y = p.n_y();
  meta.n_x = p.n_x();
  meta.n_inj = p.n_inj();
  meta.lambda_bar = p.lambda_bar;
  meta.lambda = p.lambda;
  meta.mask_convention = "observed-is-one";

  write_matrix_market(dir / "Lx.mtx", p.lx);
  write_matrix_market(dir / "Ly.mtx", p.ly);
  write_dense_text(dir / "X.txt", p.x);
  write_dense_text(dir / "Y.txt", p.y);
  write_dense_text(dir / "Omega.txt", p.omega);

  nlohmann::ordered_json manifest;
  manifest["kind"] = meta.kind;
  manifest["n_y"] = meta.n_y;
  manifest["n_x"] = meta.n_x;
  manifest["n_inj"] = meta.n_inj;
  manifest["lambda_bar"] = meta.lambda_bar;
  manifest["lambda"] = meta.lambda;
  manifest["mask_convention"] = meta.mask_convention;
  manifest["grid"] = {{"height", meta.grid_height}, {"width", meta.grid_width}};
  manifest["cell_ordering"] = meta.cell_ordering;
  manifest["seed"] = meta.seed;
  manifest["noise_sigma"] = meta.noise_sigma;
  manifest["lattice_weight"] = meta.lattice_weight;
  manifest["note"] = meta.note;
  nlohmann::ordered_json files;
  for (const std::string& name : detail::bundle_files())
    files[name] = file_checksum(dir / name);
  manifest["files"] = files;

  std::ofstream out = detail::open_for_write(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  detail::finish_write(out, dir / "manifest.json");
}

inline Bundle read_bundle(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file_bytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw io_error(dir.string() + "/manifest.json: " + e.what());
  }

  BundleMeta meta;
  try {
    meta.kind = manifest.at("kind").get<std::string>();
    meta.n_y = manifest.at("n_y").get<Index>();
    meta.n_x = manifest.at("n_x").get<Index>();
    meta.n_inj = manifest.at("n_inj").get<Index>();
    meta.lambda_bar = manifest.at("lambda_bar").get<double>();
    meta.lambda = manifest.at("lambda").get<double>();
    meta.mask_convention = manifest.at("mask_convention").get<std::string>();
    meta.grid_height = manifest.at("grid").at("height").get<Index>();
    meta.grid_width = manifest.at("grid").at("width").get<Index>();
    meta.cell_ordering = manifest.value("cell_ordering", std::string("row-major"));
    meta.seed = manifest.at("seed").get<std::uint64_t>();
    meta.noise_sigma = manifest.value("noise_sigma", 0.0);
    meta.lattice_weight = manifest.value("lattice_weight", 0.0);
    meta.note = manifest.value("note", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw io_error(dir.string() + "/manifest.json: " + e.what());
  }

  for (const std::string& name : detail::bundle_files()) {
    if (!manifest.at("files").contains(name))
      throw io_error(dir.string() + "/manifest.json: missing checksum for " + name);
    const std::string expected = manifest.at("files").at(name).get<std::string>();
    const std::string actual = file_checksum(dir / name);
    if (expected != actual)
      throw io_error(dir.string() + "/" + name + ": checksum mismatch (manifest " + expected +
                     ", file " + actual + ")");
  }

  SpMat lx = read_matrix_market(dir / "Lx.mtx");
  SpMat ly = read_matrix_market(dir / "Ly.mtx");
  Mat x = read_dense_text(dir / "X.txt");
  Mat y = read_dense_text(dir / "Y.txt");
  Mat omega = read_dense_text(dir / "Omega.txt");

  if (lx.rows() != meta.n_x || ly.rows() != meta.n_y || x.cols() != meta.n_inj)
    throw io_error(dir.string() + ": manifest dimensions do not match the matrix files");

  MaskConvention convention;
  if (meta.mask_convention == "observed-is-one")
    convention = MaskConvention::observed_is_one;
  else if (meta.mask_convention == "masked-is-one")
    convention = MaskConvention::masked_is_one;
  else
    throw io_error(dir.string() + ": unknown mask_convention '" + meta.mask_convention + "'");

  Bundle bundle;
  bundle.problem = build_problem(std::move(lx), std::move(ly), std::move(x), std::move(y),
                                 std::move(omega), meta.lambda_bar, convention);
  if (std::abs(bundle.problem.lambda - meta.lambda) >
      1e-9 * std::max(1.0, std::abs(meta.lambda)))
    throw io_error(dir.string() + ": manifest lambda is inconsistent with lambda_bar");
  bundle.meta = std::move(meta);
  return bundle;
}

}  // namespace greedylr
