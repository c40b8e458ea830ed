#pragma once

// Command-line surface. run_cli takes argv minus the program name and returns the
// process exit code: 0 success, 2 validation error, 3 solver failure, 4 I/O error,
// 1 anything else. Failures print a single-line JSON object on stderr so scripts
// can parse them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "greedylr/greedy.hpp"
#include "greedylr/io.hpp"
#include "greedylr/reference.hpp"
#include "greedylr/toybrain.hpp"

namespace greedylr {
namespace detail {

inline std::vector<int> parse_rank_list(const std::string& text) {
  std::vector<int> ranks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string token = text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      const int r = std::stoi(token, &used);
      if (used != token.size() || r < 1)
        throw validation_error("rank list: '" + token + "' is not a positive integer");
      ranks.push_back(r);
    } catch (const std::logic_error&) {
      throw validation_error("rank list: '" + token + "' is not a positive integer");
    }
    pos = comma + 1;
  }
  if (ranks.empty()) throw validation_error("rank list: empty");
  return ranks;
}

// "LO:HI" -> per-run tolerances interpolated geometrically across the rank list.
inline std::pair<double, double> parse_tau_schedule(const std::string& text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size())
    throw validation_error("tau schedule: expected LO:HI, got '" + text + "'");
  try {
    const double lo = std::stod(text.substr(0, colon));
    const double hi = std::stod(text.substr(colon + 1));
    if (!(lo > 0.0) || !(hi > 0.0))
      throw validation_error("tau schedule: tolerances must be positive");
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw validation_error("tau schedule: expected LO:HI, got '" + text + "'");
  }
}

inline double schedule_tau(double lo, double hi, std::size_t i, std::size_t count) {
  if (count <= 1) return lo;
  const double t = static_cast<double>(i) / static_cast<double>(count - 1);
  return lo * std::pow(hi / lo, t);
}

inline void write_report_csv(const std::filesystem::path& path,
                             const std::vector<RankRecord>& records) {
  std::ofstream out = open_for_write(path);
  out << "rank,deltaW,cg_iters,als_sweeps,objective,seconds\n";
  for (const RankRecord& rec : records)
    out << rec.rank << ',' << format_value(rec.delta_w) << ',' << rec.cg_iterations << ','
        << rec.als_sweeps << ',' << format_value(rec.objective) << ','
        << format_value(rec.seconds) << '\n';
  finish_write(out, path);
}

// One solve run: factors, their SVD, the per-rank report, and a summary document.
inline void write_run(const std::filesystem::path& dir, const Bundle& bundle,
                      const SolveSettings& settings, int requested_rank,
                      const GreedyResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());

  const LowRankSolution& sol = result.solution;
  write_dense_text(dir / "U.txt", sol.u);
  write_dense_text(dir / "Z.txt", sol.z);
  write_dense_text(dir / "V.txt", sol.v);
  const SolutionSvd svd = solution_svd(sol);
  write_dense_text(dir / "U_hat.txt", svd.u_hat);
  write_dense_text(dir / "sigma.txt", Mat(svd.sigma));
  write_dense_text(dir / "V_hat.txt", svd.v_hat);
  write_report_csv(dir / "report.csv", result.report.records);

  nlohmann::ordered_json doc;
  doc["bundle_kind"] = bundle.meta.kind;
  doc["bundle_seed"] = bundle.meta.seed;
  doc["grid"] = {{"height", bundle.meta.grid_height}, {"width", bundle.meta.grid_width}};
  doc["cell_ordering"] = bundle.meta.cell_ordering;
  doc["lattice_weight"] = bundle.meta.lattice_weight;
  doc["rank_requested"] = requested_rank;
  doc["rank_reached"] = sol.rank();
  doc["tau"] = settings.tau;
  doc["seed"] = settings.seed;
  doc["warm_start"] = settings.warm_start;
  doc["termination"] = to_string(result.report.termination);
  doc["total_seconds"] = result.report.total_seconds;
  doc["total_cg_iterations"] = result.report.total_cg_iterations;
  doc["als_restarts"] = result.report.als_restarts;
  doc["shift_retries"] = result.report.shift_retries;
  doc["final_objective"] =
      result.report.records.empty() ? 0.0 : result.report.records.back().objective;
  std::ofstream out = open_for_write(dir / "solve.json");
  out << doc.dump(2) << '\n';
  finish_write(out, dir / "solve.json");
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

inline int cmd_generate_toy(const ToySpec& spec, const std::filesystem::path& out_dir) {
  const ToyProblem toy = generate_toy(spec);
  BundleMeta meta;
  meta.kind = "toy";
  meta.grid_height = 1;
  meta.grid_width = spec.n;
  meta.seed = spec.seed;
  meta.noise_sigma = spec.noise_sigma;
  meta.lattice_weight = toy.lattice_weight;
  meta.note = "synthetic 1-d connectome; Gaussian-kernel ground truth sampled on a chain";
  write_bundle(out_dir, toy.problem, meta);
  std::cout << "wrote toy bundle to " << out_dir.string() << " (n=" << spec.n
            << ", n_inj=" << spec.n_inj << ", lambda=" << toy.problem.lambda << ")\n";
  return 0;
}

inline int cmd_generate_grid(const GridSpec& spec, const std::filesystem::path& out_dir) {
  const GridProblem grid = generate_grid(spec);
  BundleMeta meta;
  meta.kind = "grid";
  meta.grid_height = spec.height;
  meta.grid_width = spec.width;
  meta.seed = spec.seed;
  meta.noise_sigma = spec.noise_sigma;
  meta.lattice_weight = grid.lattice_weight;
  meta.note = "synthetic 2-d grid problem; low-rank Gaussian-bump ground truth";
  write_bundle(out_dir, grid.problem, meta);
  std::cout << "wrote grid bundle to " << out_dir.string() << " (" << spec.height << "x"
            << spec.width << ", n_inj=" << spec.n_inj << ", lambda=" << grid.problem.lambda
            << ")\n";
  return 0;
}

struct SolveFlags {
  std::string bundle_dir;
  std::string rank_list;
  double tau = 1e-6;
  std::string tau_schedule;  // "LO:HI"; overrides tau when set
  std::uint64_t seed = 0;
  bool cold_start = false;
  std::string out_dir;
};

inline int cmd_solve(const SolveFlags& flags) {
  const Bundle bundle = read_bundle(flags.bundle_dir);
  const std::vector<int> ranks = detail::parse_rank_list(flags.rank_list);
  double tau_lo = flags.tau, tau_hi = flags.tau;
  if (!flags.tau_schedule.empty())
    std::tie(tau_lo, tau_hi) = detail::parse_tau_schedule(flags.tau_schedule);

  for (std::size_t i = 0; i < ranks.size(); ++i) {
    SolveSettings settings;
    settings.max_rank = ranks[i];
    settings.tau = detail::schedule_tau(tau_lo, tau_hi, i, ranks.size());
    settings.seed = flags.seed;
    settings.warm_start = !flags.cold_start;
    const GreedyResult result = greedy_solve(bundle.problem, settings);
    const std::filesystem::path dir =
        ranks.size() == 1 ? std::filesystem::path(flags.out_dir)
                          : std::filesystem::path(flags.out_dir) /
                                ("rank_" + std::to_string(ranks[i]));
    detail::write_run(dir, bundle, settings, ranks[i], result);
    std::cout << "rank " << ranks[i] << ": reached " << result.solution.rank() << " ("
              << to_string(result.report.termination) << ", tau=" << settings.tau << ") -> "
              << dir.string() << "\n";
    if (result.report.termination == Termination::stalled)
      throw solver_error("solve: stalled at rank " + std::to_string(result.solution.rank()) +
                         " of " + std::to_string(ranks[i]) +
                         " (partial results were written to " + dir.string() + ")");
  }
  return 0;
}

struct BenchmarkFlags {
  std::string bundle_dir;
  std::string rank_list;
  double tau = 1e-7;
  std::uint64_t seed = 0;
  std::string reference = "auto";  // auto | dense | rank:N
  std::string out_csv;
  bool check = false;
};

inline int cmd_benchmark(const BenchmarkFlags& flags) {
  const Bundle bundle = read_bundle(flags.bundle_dir);
  const ProblemInstance& p = bundle.problem;
  const std::vector<int> ranks = detail::parse_rank_list(flags.rank_list);
  for (std::size_t i = 1; i < ranks.size(); ++i)
    if (ranks[i] <= ranks[i - 1])
      throw validation_error("benchmark: rank list must be strictly increasing");

  // Reference solution: the dense oracle when the Kronecker system fits the budget,
  // otherwise a high-rank greedy run standing in for it.
  std::string ref_kind = flags.reference;
  if (ref_kind == "auto")
    ref_kind = p.n_y() * p.n_x() <= 1000 ? "dense"
                                         : "rank:" + std::to_string(static_cast<int>(
                                               std::ceil(1.75 * ranks.back())));
  Mat ref_dense;
  Factored ref_factored;
  bool dense_reference = false;
  if (ref_kind == "dense") {
    ref_dense = dense_solve(p);
    dense_reference = true;
  } else if (ref_kind.rfind("rank:", 0) == 0) {
    int ref_rank = 0;
    try {
      ref_rank = std::stoi(ref_kind.substr(5));
    } catch (const std::logic_error&) {
      throw validation_error("benchmark: bad reference '" + flags.reference + "'");
    }
    if (ref_rank < 1 || ref_rank <= ranks.back())
      throw validation_error("benchmark: reference rank must exceed the largest probe rank");
    SolveSettings settings;
    settings.max_rank = ref_rank;
    settings.tau = flags.tau;
    settings.seed = flags.seed;
    ref_factored = greedy_solve(p, settings).solution.factored();
  } else {
    throw validation_error("benchmark: bad reference '" + flags.reference +
                           "' (want auto, dense, or rank:N)");
  }

  std::ofstream out = detail::open_for_write(flags.out_csv);
  out << "rank,seconds,E,E_rel\n";
  std::vector<double> e_column;
  for (const int r : ranks) {
    SolveSettings settings;
    settings.max_rank = r;
    settings.tau = flags.tau;
    settings.seed = flags.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const GreedyResult result = greedy_solve(p, settings);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count();
    const Factored w = result.solution.factored();
    const ErrorSummary err = dense_reference ? errors(w, ref_dense) : errors(w, ref_factored);
    e_column.push_back(err.rms);
    out << r << ',' << detail::format_value(seconds) << ',' << detail::format_value(err.rms)
        << ',' << detail::format_value(err.rel_frobenius) << '\n';
  }
  detail::finish_write(out, flags.out_csv);
  std::cout << "wrote " << flags.out_csv << " (" << ranks.size() << " ranks, reference "
            << ref_kind << ")\n";

  if (flags.check)
    for (std::size_t i = 1; i < e_column.size(); ++i)
      if (!(e_column[i] < e_column[i - 1]))
        throw solver_error("benchmark: E did not decrease from rank " +
                           std::to_string(ranks[i - 1]) + " to rank " +
                           std::to_string(ranks[i]));
  return 0;
}

struct ExportImagesFlags {
  std::string solution_dir;
  int count = 0;
  std::string out_dir;
};

inline int cmd_export_images(const ExportImagesFlags& flags) {
  const std::filesystem::path sol(flags.solution_dir);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file_bytes(sol / "solve.json"));
  } catch (const nlohmann::json::exception& e) {
    throw io_error((sol / "solve.json").string() + ": " + e.what());
  }
  Index height = 0, width = 0;
  try {
    height = doc.at("grid").at("height").get<Index>();
    width = doc.at("grid").at("width").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error((sol / "solve.json").string() + ": " + e.what());
  }
  if (height < 1 || width < 1)
    throw validation_error("export-images: solution does not carry a 2-d cell layout");
  if (flags.count < 1) throw validation_error("export-images: count must be positive");

  const Mat u_hat = read_dense_text(sol / "U_hat.txt");
  const Mat sigma = read_dense_text(sol / "sigma.txt");
  const Mat v_hat = read_dense_text(sol / "V_hat.txt");
  if (flags.count > u_hat.cols())
    throw validation_error("export-images: count exceeds the solution rank " +
                           std::to_string(u_hat.cols()));
  if (u_hat.rows() != height * width || v_hat.rows() != height * width)
    throw validation_error("export-images: factor length does not match the grid layout");
  if (height == 1)
    std::cerr << "warning: 1-d cell layout; emitting single-row images\n";

  std::error_code ec;
  std::filesystem::create_directories(flags.out_dir, ec);
  if (ec) throw io_error("cannot create directory " + flags.out_dir + ": " + ec.message());
  const std::filesystem::path out(flags.out_dir);

  std::ofstream scales = detail::open_for_write(out / "scales.csv");
  scales << "image,min_value,max_value\n";
  auto emit = [&](const std::string& name, const Vec& cells) {
    Mat img(height, width);
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c) img(r, c) = cells(r * width + c);
    const PgmScale scale = write_pgm(out / (name + ".pgm"), img);
    scales << name << ',' << detail::format_value(scale.min_value) << ','
           << detail::format_value(scale.max_value) << '\n';
    std::ofstream raw = detail::open_for_write(out / (name + ".csv"));
    raw << "row,col,value\n";
    for (Index r = 0; r < height; ++r)
      for (Index c = 0; c < width; ++c)
        raw << r << ',' << c << ',' << detail::format_value(img(r, c)) << '\n';
    detail::finish_write(raw, out / (name + ".csv"));
  };
  for (int j = 0; j < flags.count; ++j) {
    emit("target_" + std::to_string(j + 1), Vec(u_hat.col(j) * sigma(j, 0)));
    emit("source_" + std::to_string(j + 1), Vec(v_hat.col(j)));
  }
  detail::finish_write(scales, out / "scales.csv");
  std::cout << "wrote " << 2 * flags.count << " images to " << flags.out_dir << "\n";
  return 0;
}

// ----------------------------------------------------------------------------
// Dispatch
// ----------------------------------------------------------------------------

namespace detail {

inline void print_error_line(const std::string& type, const std::string& message) {
  nlohmann::ordered_json doc;
  doc["error"] = {{"type", type}, {"message", message}};
  std::cerr << doc.dump() << '\n';
}

}  // namespace detail

inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"greedy low-rank solver for masked, smoothness-regularized regression"};
  app.require_subcommand(1);

  // generate
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic problem bundle");
  generate->require_subcommand(1);
  ToySpec toy_spec;
  std::string toy_out;
  CLI::App* gen_toy = generate->add_subcommand("toy", "1-d chain with a Gaussian kernel truth");
  gen_toy->add_option("--n", toy_spec.n, "lattice points");
  gen_toy->add_option("--n-inj", toy_spec.n_inj, "injection count");
  gen_toy->add_option("--sigma", toy_spec.noise_sigma, "noise level in kernel units");
  gen_toy->add_option("--lambda-bar", toy_spec.lambda_bar, "smoothing weight before scaling");
  gen_toy->add_option("--seed", toy_spec.seed, "generator seed");
  gen_toy->add_option("--out", toy_out, "output bundle directory")->required();

  GridSpec grid_spec;
  std::string grid_out;
  CLI::App* gen_grid =
      generate->add_subcommand("grid", "2-d grid with a low-rank Gaussian-bump truth");
  gen_grid->add_option("--height", grid_spec.height, "grid rows");
  gen_grid->add_option("--width", grid_spec.width, "grid columns");
  gen_grid->add_option("--n-inj", grid_spec.n_inj, "injection count");
  gen_grid->add_option("--sigma", grid_spec.noise_sigma, "noise level in truth units");
  gen_grid->add_option("--true-rank", grid_spec.true_rank, "rank of the ground truth");
  gen_grid->add_option("--lambda-bar", grid_spec.lambda_bar, "smoothing weight before scaling");
  gen_grid->add_option("--seed", grid_spec.seed, "generator seed");
  gen_grid->add_option("--out", grid_out, "output bundle directory")->required();

  // solve
  SolveFlags solve_flags;
  CLI::App* solve = app.add_subcommand("solve", "run the greedy solver on a bundle");
  solve->add_option("--bundle", solve_flags.bundle_dir, "problem bundle directory")->required();
  solve->add_option("--rank", solve_flags.rank_list, "target rank, or comma list of ranks")
      ->required();
  CLI::Option* tau_opt = solve->add_option("--tau", solve_flags.tau, "stopping tolerance");
  solve->add_option("--tau-schedule", solve_flags.tau_schedule,
                    "LO:HI geometric tolerance schedule across the rank list")
      ->excludes(tau_opt);
  solve->add_option("--seed", solve_flags.seed, "solver seed");
  solve->add_flag("--cold", solve_flags.cold_start, "disable the warm-started Galerkin solve");
  solve->add_option("--out", solve_flags.out_dir, "output directory")->required();

  // benchmark
  BenchmarkFlags bench_flags;
  CLI::App* bench = app.add_subcommand("benchmark", "rank sweep with times and errors");
  bench->add_option("--bundle", bench_flags.bundle_dir, "problem bundle directory")->required();
  bench->add_option("--ranks", bench_flags.rank_list, "strictly increasing comma list")
      ->required();
  bench->add_option("--tau", bench_flags.tau, "stopping tolerance for every run");
  bench->add_option("--seed", bench_flags.seed, "solver seed");
  bench->add_option("--reference", bench_flags.reference,
                    "reference solution: auto, dense, or rank:N");
  bench->add_option("--out", bench_flags.out_csv, "output CSV path")->required();
  bench->add_flag("--check", bench_flags.check, "fail unless E decreases at every rank");

  // export-images
  ExportImagesFlags img_flags;
  CLI::App* images = app.add_subcommand("export-images", "render leading factors as images");
  images->add_option("--solution", img_flags.solution_dir, "solve output directory")
      ->required();
  images->add_option("--count", img_flags.count, "number of factor pairs")->required();
  images->add_option("--out", img_flags.out_dir, "output directory")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (gen_toy->parsed()) return cmd_generate_toy(toy_spec, toy_out);
    if (gen_grid->parsed()) return cmd_generate_grid(grid_spec, grid_out);
    if (solve->parsed()) return cmd_solve(solve_flags);
    if (bench->parsed()) return cmd_benchmark(bench_flags);
    if (images->parsed()) return cmd_export_images(img_flags);
    throw validation_error("no command given");
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    detail::print_error_line("validation", e.what());
    return 2;
  } catch (const validation_error& e) {
    detail::print_error_line("validation", e.what());
    return 2;
  } catch (const solver_error& e) {
    detail::print_error_line("solver", e.what());
    return 3;
  } catch (const io_error& e) {
    detail::print_error_line("io", e.what());
    return 4;
  } catch (const std::exception& e) {
    detail::print_error_line("internal", e.what());
    return 1;
  }
}

}  // namespace greedylr
