// spi_cli: simulate, reconstruct and score single-pixel imaging experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spi/spi.hpp"

namespace fs = std::filesystem;
using namespace spi;

namespace {

enum Exit { ok = 0, usage = 2, bad_input = 3, numerical = 4 };

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::numerical: return numerical;
    case ErrorKind::parameter:
    case ErrorKind::range: return usage;
    default: return bad_input;
  }
}

double length_arg(const std::string& text, const char* flag) {
  return detail::parse_length(text, std::string("in ") + flag);
}

std::vector<double> number_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  for (const auto& item : detail::split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::parameter, std::string("bad number '") + item + "' in " + flag);
    }
  }
  if (out.empty()) throw Error(ErrorKind::parameter, std::string(flag) + " is empty");
  return out;
}

struct Common {
  std::string scene;
  std::string patterns;
  std::optional<double> cr;
  std::optional<double> noise_sigma;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::string out_dir = ".";
};

SceneSpec load_scene(const Common& c) {
  SceneSpec s = c.scene.empty() ? SceneSpec{} : read_scene(c.scene);
  if (c.cr) s.cr = *c.cr;
  if (c.noise_sigma) s.noise_sigma = *c.noise_sigma;
  if (c.seed) s.seed = *c.seed;
  if (c.iterations) s.iterations = *c.iterations;
  s.validate();
  return s;
}

PatternSet load_patterns(const Common& c, const SceneSpec& s) {
  if (c.patterns.empty()) return scene_patterns(s);
  return read_patterns(c.patterns, s.modulation_depth);
}

void report(const fs::path& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << (dir / f).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-pixel imaging with angular-spectrum refocusing"};
  app.require_subcommand(1);
  Common c;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scene", c.scene, "scene file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--patterns", c.patterns, "pattern file")->check(CLI::ExistingFile);
    sub->add_option("--cr", c.cr, "compression ratio in (0, 1]");
    sub->add_option("--seed", c.seed, "measurement noise seed");
    sub->add_option("--iterations", c.iterations, "optimiser iterations");
    sub->add_option("--out-dir", c.out_dir, "output directory");
  };

  auto* patterns = app.add_subcommand("patterns", "write a Walsh-Hadamard pattern file");
  add_common(patterns);
  std::string pattern_file = "patterns.spat";
  patterns->add_option("--file", pattern_file, "output file name inside --out-dir");

  auto* simulate = app.add_subcommand("simulate", "object -> diffraction -> differential readings");
  add_common(simulate);
  simulate->add_option("--noise-sigma", c.noise_sigma, "Gaussian noise per detector reading");

  auto* reconstruct = app.add_subcommand("reconstruct", "recover an image from readings");
  add_common(reconstruct);
  std::string method_name = "untrained", measurement_path, reference_path, mask_path, backprop;
  std::optional<std::uint64_t> init_seed;
  reconstruct->add_option("--method", method_name, "hspi | dgi | cstv | untrained");
  reconstruct->add_option("--measurement", measurement_path, "measurement CSV")
      ->required()
      ->check(CLI::ExistingFile);
  reconstruct->add_option("--backprop-distance", backprop, "propagation distance in the model, e.g. 0.5mm");
  reconstruct->add_option("--init-seed", init_seed, "generator initialisation seed");
  reconstruct->add_option("--reference", reference_path, "reference image (PGM) for SSIM")->check(CLI::ExistingFile);
  reconstruct->add_option("--mask", mask_path, "signal mask (PGM) for SNR")->check(CLI::ExistingFile);

  auto* benchmark = app.add_subcommand("benchmark", "SSIM / SNR table over methods, ratios and noise levels");
  add_common(benchmark);
  std::string cr_list = "0.015625,0.03125,0.0625,0.125,0.25,0.5", method_list = "hspi,untrained", noise_list;
  int repeats = 1;
  bool against_object = false;
  benchmark->add_option("--cr-list", cr_list, "comma separated compression ratios");
  benchmark->add_option("--methods", method_list, "comma separated methods");
  benchmark->add_option("--noise-sigma", noise_list, "comma separated noise levels");
  benchmark->add_option("--repeats", repeats, "runs per cell")->check(CLI::PositiveNumber);
  benchmark->add_flag("--against-object", against_object, "score against the object instead of the diffracted image");

  auto* metrics = app.add_subcommand("metrics", "score an image file");
  std::string image_path;
  std::string profile_axis = "cols";
  double dip = 0.2;
  metrics->add_option("--image", image_path, "image (PGM)")->required()->check(CLI::ExistingFile);
  metrics->add_option("--reference", reference_path, "reference image (PGM)")->check(CLI::ExistingFile);
  metrics->add_option("--mask", mask_path, "signal mask (PGM)")->check(CLI::ExistingFile);
  metrics->add_option("--profile", profile_axis, "profile axis for slit counting")
      ->check(CLI::IsMember({"rows", "cols"}));
  metrics->add_option("--dip-threshold", dip, "relative dip depth separating lobes");
  metrics->add_option("--out-dir", c.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    const fs::path out = c.out_dir;
    if (*patterns) {
      const auto s = load_scene(c);
      const auto set = scene_patterns(s);
      fs::create_directories(out);
      io::write_atomic(out / pattern_file, encode_patterns(set));
      report(out, {pattern_file});
    } else if (*simulate) {
      const auto s = load_scene(c);
      const auto set = load_patterns(c, s);
      const auto sim = run_simulate(s, set);
      write_simulation(sim, out);
      io::write_atomic(out / "patterns.spat", encode_patterns(set));
      io::write_atomic(out / "scene.txt", encode_scene(s));
      report(out, {"object.pgm", "diffracted.pgm", "measurement.csv", "patterns.spat", "scene.txt"});
    } else if (*reconstruct) {
      auto s = load_scene(c);
      const auto meas = read_measurement_csv(measurement_path);
      s.modulation_depth = meas.modulation_depth;
      if (c.patterns.empty()) throw Error(ErrorKind::parameter, "reconstruct needs --patterns");
      const auto set = load_patterns(c, s);
      auto opts = reconstruct_options(s, parse_method(method_name));
      opts.pitch = s.fov / static_cast<double>(set.order());
      opts.backprop_distance = backprop.empty() ? 0.0 : length_arg(backprop, "--backprop-distance");
      if (init_seed) opts.init_seed = *init_seed;
      const auto rec = run_reconstruct(meas, set, opts);
      std::optional<RealGrid> reference;
      std::optional<BinaryMask> mask;
      if (!reference_path.empty()) reference = read_pgm(reference_path);
      if (!mask_path.empty()) mask = threshold_mask(read_pgm(mask_path));
      const auto m = evaluate_image(rec.display, reference ? &*reference : nullptr, mask ? &*mask : nullptr);
      write_reconstruction(rec, m, out);
      std::cout << encode_metrics_csv(rec.result, m);
    } else if (*benchmark) {
      const auto s = load_scene(c);
      BenchmarkRequest req;
      req.cr_list = number_list(cr_list, "--cr-list");
      for (const auto& name : detail::split_list(method_list)) req.methods.push_back(parse_method(name));
      req.noise_levels = noise_list.empty() ? std::vector<double>{s.noise_sigma} : number_list(noise_list, "--noise-sigma");
      req.repeats = repeats;
      req.reference_is_object = against_object;
      const auto csv = encode_benchmark_csv(run_benchmark(s, req));
      fs::create_directories(out);
      io::write_atomic(out / "benchmark.csv", csv);
      std::cout << csv;
    } else if (*metrics) {
      const auto image = read_pgm(image_path);
      std::optional<RealGrid> reference;
      std::optional<BinaryMask> mask;
      if (!reference_path.empty()) reference = read_pgm(reference_path);
      if (!mask_path.empty()) mask = threshold_mask(read_pgm(mask_path));
      const auto m = evaluate_image(image, reference ? &*reference : nullptr, mask ? &*mask : nullptr);
      const auto profile = line_profile(image, profile_axis == "rows" ? ProfileAxis::rows : ProfileAxis::cols);
      std::string csv = "metric,value\n";
      if (m.ssim) csv += "ssim," + io::format_double(*m.ssim) + "\n";
      if (m.ssim_degenerate) csv += "ssim,degenerate\n";
      if (m.snr) csv += "snr," + (m.snr->infinite ? std::string("inf") : io::format_double(m.snr->value)) + "\n";
      csv += "resolved_lobes," + std::to_string(count_resolved_slits(profile, dip)) + "\n";
      std::string prof = "index,value\n";
      for (std::size_t i = 0; i < profile.size(); ++i) prof += std::to_string(i) + "," + io::format_double(profile[i]) + "\n";
      fs::create_directories(out);
      io::write_atomic(out / "metrics.csv", csv);
      io::write_atomic(out / "profile.csv", prof);
      std::cout << csv;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bad_input;
  }
  return ok;
}
