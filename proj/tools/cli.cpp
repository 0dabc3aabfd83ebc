#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>

#include "manifest.hpp"
#include "sti/analysis.hpp"
#include "sti/dipole.hpp"
#include "sti/file_util.hpp"
#include "sti/nn.hpp"
#include "sti/parallel.hpp"
#include "sti/phantom.hpp"
#include "sti/render.hpp"
#include "sti/solvers.hpp"
#include "sti/stiv.hpp"
#include "sti/tracking.hpp"

namespace fs = std::filesystem;

namespace sti::cli {
namespace {

struct PhantomArgs {
  std::string geometry, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma, epsilon;
};

struct ForwardArgs {
  std::string phantom, orientations, mask, out;
  std::optional<double> snr;
  std::uint64_t seed = 0;
  double pad = 1.0;
};

struct ReconArgs {
  std::vector<std::string> fields;
  std::string orientations, mask, out, method = "stiimag", prox = "identity", weights, topology;
  std::vector<double> tau{0.0};
  int iterations = 4;
  std::optional<double> alpha;
  std::string init = "zero";
  bool zero_outside_mask = false;
  double lambda = 1.0, tolerance = 1e-6, pad = 1.0;
  int max_iter = 300;
};

struct MetricsArgs {
  std::string est, gt, mask, csv;
  double threshold = kAnisotropyThreshold;
  std::optional<double> peak;
  bool signed_cosine = false;
};

struct TrackArgs {
  std::string input, mask, region, out;
  TrackConfig cfg;
};

struct RenderArgs {
  std::string input, mode = "gray", map = "mms", slice = "z:0", out, msa;
  int component = 0;
  std::vector<double> window;
};

std::string join_args(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------- phantom

void cmd_phantom(const PhantomArgs& a, const std::vector<std::string>& argv) {
  Manifest man("phantom", argv);
  GeometrySpec spec = read_geometry(a.geometry);
  man.input(a.geometry);
  if (a.seed) spec.params.seed = *a.seed;
  if (a.gamma) spec.params.gamma = *a.gamma;
  if (a.epsilon) spec.params.epsilon = *a.epsilon;
  const GroundTruthFields f = synth_geometry(spec.grid, spec.primitives, spec.mask_margin);
  const TensorVolume chi = build_phantom(f.q, f.dir, f.fa, spec.params);

  const fs::path out(a.out);
  ensure_dir(out);
  const std::map<std::string, std::function<void(const fs::path&)>> files{
      {"chi.stiv", [&](const fs::path& p) { write_volume(p, chi); }},
      {"q.stiv", [&](const fs::path& p) { write_volume(p, f.q); }},
      {"dir.stiv", [&](const fs::path& p) { write_volume(p, f.dir); }},
      {"fa.stiv", [&](const fs::path& p) { write_volume(p, f.fa); }},
      {"mask.stiv", [&](const fs::path& p) { write_mask(p, f.mask); }},
  };
  for (const auto& [name, writer] : files) {
    writer(out / name);
    man.output(out / name);
  }
  man.parameter("gamma", spec.params.gamma);
  man.parameter("epsilon", spec.params.epsilon);
  man.parameter("mask_margin", spec.mask_margin);
  man.parameter("grid", spec.grid.describe());
  man.seed("phantom", spec.params.seed);
  man.write(out / "manifest.json");
  std::cout << "phantom " << spec.grid.describe() << " written to " << out.string() << "\n";
}

// ---------------------------------------------------------------- forward

void cmd_forward(const ForwardArgs& a, const std::vector<std::string>& argv) {
  Manifest man("forward", argv);
  const TensorVolume chi = read_tensor_volume(a.phantom);
  man.input(a.phantom);
  const auto orientations = read_orientations(a.orientations);
  man.input(a.orientations);
  std::optional<Mask> mask;
  if (!a.mask.empty()) {
    mask = read_mask(a.mask);
    require_same_grid(chi.grid(), mask->grid(), "forward mask");
    man.input(a.mask);
  }
  OperatorOptions opt;
  opt.pad_factor = a.pad;
  const DipoleOperator op = build_operator(chi.grid(), orientations, opt);
  FieldSet y = forward(op, chi);
  if (a.snr) {
    NoiseResult noisy = add_noise(y, *a.snr, a.seed, mask ? &*mask : nullptr);
    for (Index c : noisy.zero_signal)
      std::cerr << "warning: orientation " << c << " has zero signal; no noise added\n";
    y = std::move(noisy.fields);
    man.seed("noise", a.seed);
  }
  const fs::path out(a.out);
  ensure_dir(out);
  for (Index c = 0; c < y.count(); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "field_%02lld.stiv", static_cast<long long>(c));
    write_volume(out / name, y.field(c));
    man.output(out / name);
  }
  write_file_atomic(out / "orientations.txt", format_orientations(orientations));
  man.output(out / "orientations.txt");
  man.parameter("snr_amplitude_ratio", a.snr ? nlohmann::json(*a.snr) : nlohmann::json(nullptr));
  man.parameter("pad_factor", a.pad);
  man.parameter("orientation_count", y.count());
  man.write(out / "manifest.json");
  std::cout << y.count() << " field(s) written to " << out.string() << "\n";
}

// ---------------------------------------------------------------- recon

FieldSet load_fields(const ReconArgs& a, Manifest& man, std::string& orientations_path) {
  std::vector<fs::path> files;
  if (a.fields.size() == 1 && fs::is_directory(a.fields.front())) {
    const fs::path dir(a.fields.front());
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("field_", 0) == 0 && e.path().extension() == ".stiv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (orientations_path.empty() && fs::exists(dir / "orientations.txt"))
      orientations_path = (dir / "orientations.txt").string();
  } else {
    files.assign(a.fields.begin(), a.fields.end());
  }
  if (files.empty()) throw InputError("no field files given");
  if (orientations_path.empty()) throw UsageError("--orientations is required");
  const auto orientations = read_orientations(orientations_path);
  man.input(orientations_path);
  if (orientations.size() != files.size()) {
    throw InputError(std::to_string(files.size()) + " field file(s) but " + std::to_string(orientations.size()) +
                     " orientation(s)");
  }
  const ScalarVolume first = read_scalar_volume(files.front());
  FieldSet y(first.grid(), orientations);
  for (std::size_t c = 0; c < files.size(); ++c) {
    const ScalarVolume f = c == 0 ? first : read_scalar_volume(files[c]);
    require_same_grid(first.grid(), f.grid(), "field files");
    y.data.col(Index(c)) = f.data().col(0);
    man.input(files[c]);
  }
  return y;
}

ProximalOperator make_prox(const ReconArgs& a, Manifest& man) {
  if (a.prox == "identity") return IdentityProx{};
  if (a.prox == "soft") {
    SoftThresholdProx p;
    if (a.tau.size() == 1) p.tau.fill(a.tau[0]);
    else if (a.tau.size() == 6) std::copy(a.tau.begin(), a.tau.end(), p.tau.begin());
    else throw UsageError("--tau takes 1 or 6 values");
    return p;
  }
  if (a.weights.empty() || a.topology.empty()) throw UsageError("--prox cnn needs --weights and --topology");
  const nn::NetworkSpec spec = nn::read_topology(a.topology);
  man.input(a.topology);
  const nn::WeightBundle w = nn::load_weights(a.weights, spec);
  man.input(a.weights);
  return CnnProx{std::make_shared<const nn::ProxNetwork>(spec, w)};
}

void cmd_recon(const ReconArgs& a, const std::vector<std::string>& argv) {
  Manifest man("recon", argv);
  std::string orientations_path = a.orientations;
  const FieldSet y = load_fields(a, man, orientations_path);
  Mask mask(y.grid, true);
  if (!a.mask.empty()) {
    mask = read_mask(a.mask);
    require_same_grid(y.grid, mask.grid(), "recon mask");
    man.input(a.mask);
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  man.parameter("method", a.method);

  StiImagConfig lcfg;
  lcfg.lambda = a.lambda;
  lcfg.lsqr.tolerance = a.tolerance;
  lcfg.lsqr.max_iterations = a.max_iter;
  lcfg.operator_options.pad_factor = a.pad;

  if (a.method == "stiimag" || a.method == "asti") {
    man.parameter("lambda", a.lambda);
    man.parameter("tolerance", a.tolerance);
    man.parameter("max_iterations", a.max_iter);
    SolveInfo info;
    if (a.method == "stiimag") {
      write_volume(out, sti_imag(y, mask, lcfg, &info));
      man.output(out);
    } else {
      const AstiResult r = asti_fit(y, mask, lcfg, &info);
      const fs::path anti = out.parent_path() / (out.stem().string() + "_anti.stiv");
      write_volume(out, r.symmetric);
      write_volume(anti, r.antisymmetric);
      man.output(out);
      man.output(anti);
    }
    man.parameter("lsqr_iterations", info.iterations);
    man.parameter("relative_residual", info.relative_residual);
    std::cout << a.method << ": " << info.iterations << " LSQR iterations, relative residual "
              << info.relative_residual << "\n";
  } else if (a.method == "pgd") {
    PgdConfig cfg;
    cfg.iterations = a.iterations;
    if (a.alpha) {
      cfg.step_rule = StepRule::Fixed;
      cfg.alpha = *a.alpha;
    }
    if (a.init == "adjoint") cfg.init = InitRule::ScaledAdjoint;
    else if (a.init != "zero") throw UsageError("--init must be zero or adjoint");
    cfg.zero_outside_mask = a.zero_outside_mask;
    cfg.operator_options.pad_factor = a.pad;
    const ProximalOperator prox = make_prox(a, man);
    PgdInfo info;
    write_volume(out, pgd_reconstruct(y, mask, prox, cfg, nullptr, &info));
    man.output(out);
    man.parameter("prox", a.prox);
    man.parameter("iterations", a.iterations);
    man.parameter("alpha", info.alpha);
    man.parameter("init", a.init);
    man.parameter("objective", info.objective);
    std::cout << "pgd: " << a.iterations << " iterations, step " << info.alpha << ", final objective "
              << info.objective.back() << "\n";
  } else {
    throw UsageError("unknown method '" + a.method + "'");
  }
  man.parameter("pad_factor", a.pad);
  man.write(manifest_for_file(out));
}

// ---------------------------------------------------------------- metrics

void cmd_metrics(const MetricsArgs& a) {
  const TensorVolume est = read_tensor_volume(a.est);
  const TensorVolume gt = read_tensor_volume(a.gt);
  require_same_grid(est.grid(), gt.grid(), "metrics est/gt");
  Mask mask(gt.grid(), true);
  if (!a.mask.empty()) mask = read_mask(a.mask);
  MetricOptions opt;
  opt.ecse.threshold = a.threshold;
  opt.ecse.signed_cosine = a.signed_cosine;
  opt.psnr.fixed_peak = a.peak;
  const MetricReport r = evaluate(est, gt, mask, opt);
  std::cout << r.to_text() << MetricReport::csv_header() << "\n" << r.to_csv_row() << "\n";
  if (r.anisotropic_voxels == 0) std::cerr << "warning: empty anisotropic region, ecse reported as nan\n";
  if (!a.csv.empty()) {
    const bool fresh = !fs::exists(a.csv);
    std::ofstream os(a.csv, std::ios::app);
    if (!os) throw InputError("cannot open " + a.csv);
    if (fresh) os << MetricReport::csv_header() << "\n";
    os << r.to_csv_row() << "\n";
  }
}

// ---------------------------------------------------------------- track

void cmd_track(const TrackArgs& a, const std::vector<std::string>& argv) {
  Manifest man("track", argv);
  const TensorVolume chi = read_tensor_volume(a.input);
  man.input(a.input);
  Mask mask(chi.grid(), true);
  if (!a.mask.empty()) {
    mask = read_mask(a.mask);
    man.input(a.mask);
  }
  const EigenMaps maps = eig_decompose(chi, &mask);
  Tractogram t = fact_track(maps.pev, maps.msa, mask, a.cfg);
  if (!a.region.empty()) {
    t = select_through_region(t, read_mask(a.region));
    man.input(a.region);
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_tractogram(out, t);
  man.output(out);
  man.parameter("anisotropy_cutoff", a.cfg.anisotropy_cutoff);
  man.parameter("max_length_mm", a.cfg.max_length_mm);
  man.parameter("angle_threshold_deg", a.cfg.angle_threshold_deg);
  man.parameter("min_step_voxels", a.cfg.min_step_voxels);
  man.parameter("seed_count", a.cfg.seed_count);
  man.seed("tracking", a.cfg.seed);
  man.write(manifest_for_file(out));
  std::cout << t.streamlines.size() << " streamline(s) written to " << out.string() << "\n";
}

// ---------------------------------------------------------------- render

void cmd_render(const RenderArgs& a, const std::vector<std::string>& argv) {
  Manifest man("render", argv);
  const RawVolume raw = read_stiv(a.input);
  man.input(a.input);
  const SliceSpec slice = parse_slice(a.slice);
  const Index nc = raw.data.cols();
  SliceImage img;

  if (a.mode == "gray") {
    ScalarVolume s(raw.grid);
    if (nc == 6) {
      const EigenMaps m = eig_decompose(TensorVolume(raw.grid, raw.data));
      if (a.map == "mms") s = m.mms;
      else if (a.map == "msa") s = m.msa;
      else if (a.map == "lambda1") s = m.lambda1;
      else if (a.map == "component") s.data().col(0) = raw.data.col(a.component);
      else throw UsageError("--map must be mms, msa, lambda1 or component");
    } else {
      if (a.component < 0 || a.component >= nc) throw UsageError("--component out of range");
      s.data().col(0) = raw.data.col(a.component);
    }
    double lo, hi;
    if (a.window.size() == 2) {
      lo = a.window[0];
      hi = a.window[1];
    } else if (a.window.empty()) {
      lo = s.data().minCoeff();
      hi = s.data().maxCoeff();
      if (!(hi > lo)) hi = lo + 1.0;
    } else {
      throw UsageError("--window takes two values: lo,hi");
    }
    img = render_gray(s, slice, lo, hi);
  } else if (a.mode == "pev-rgb" || a.mode == "msa-weighted-pev") {
    const bool weighted = a.mode == "msa-weighted-pev";
    DirectionField pev(raw.grid);
    std::optional<ScalarVolume> msa;
    if (nc == 6) {
      const EigenMaps m = eig_decompose(TensorVolume(raw.grid, raw.data));
      pev = m.pev;
      msa = m.msa;
    } else if (nc == 3) {
      pev = DirectionField(raw.grid, raw.data);
      if (weighted) {
        if (a.msa.empty()) throw UsageError("msa-weighted-pev on a direction field needs --msa");
        msa = read_scalar_volume(a.msa);
        man.input(a.msa);
      }
    } else {
      throw InputError("pev rendering needs a 6-component tensor or a 3-component direction field");
    }
    const double msa_max = a.window.size() == 2 ? a.window[1] : 0.0;
    img = render_pev(pev, slice, weighted ? &*msa : nullptr, msa_max);
  } else {
    throw UsageError("--mode must be gray, pev-rgb or msa-weighted-pev");
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_netpbm(out, img);
  man.output(out);
  man.parameter("mode", a.mode);
  man.parameter("slice", a.slice);
  man.parameter("window", {img.window_lo, img.window_hi});
  man.write(manifest_for_file(out));
}

// ---------------------------------------------------------------- replay

int cmd_replay(const std::string& manifest_path) {
  const nlohmann::json j = read_manifest(manifest_path);
  const auto argv = j["argv"].get<std::vector<std::string>>();
  if (!argv.empty() && argv.front() == "replay") throw UsageError("refusing to replay a replay");
  std::cout << "replaying: sti " << join_args(argv) << "\n";
  const int code = run(argv);
  if (code != kOk) return code;
  bool ok = true;
  for (const auto& [path, digest] : j["outputs"].items()) {
    const bool same = fs::exists(path) && file_digest(path) == digest.get<std::string>();
    std::cout << (same ? "match    " : "MISMATCH ") << path << "\n";
    ok = ok && same;
  }
  return ok ? kOk : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Susceptibility tensor imaging toolkit", "sti"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file with option defaults; command-line flags take precedence");
  int threads = 1;
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Synthesize a tensor phantom from a geometry file");
  phantom->add_option("--geometry", pa.geometry, "Geometry INI file")->required()->check(CLI::ExistingFile);
  phantom->add_option("--out", pa.out, "Output directory")->required();
  phantom->add_option("--seed", pa.seed, "Override the phantom seed");
  phantom->add_option("--gamma", pa.gamma, "a_S / a_D scale (default 1/15)");
  phantom->add_option("--epsilon", pa.epsilon, "Upper bound of the λ2 − λ3 spread, ppm");

  ForwardArgs fa;
  auto* fwd = app.add_subcommand("forward", "Simulate field perturbations for each orientation");
  fwd->add_option("--phantom", fa.phantom, "6-component tensor STIV")->required()->check(CLI::ExistingFile);
  fwd->add_option("--orientations", fa.orientations, "Orientation list")->required()->check(CLI::ExistingFile);
  fwd->add_option("--snr", fa.snr, "Amplitude SNR (signal RMS / noise sd); noiseless when absent");
  fwd->add_option("--seed", fa.seed, "Noise seed");
  fwd->add_option("--mask", fa.mask, "Mask for the signal RMS");
  fwd->add_option("--pad", fa.pad, "FFT padding factor")->check(CLI::Range(1.0, 4.0));
  fwd->add_option("--out", fa.out, "Output directory")->required();

  ReconArgs ra;
  auto* recon = app.add_subcommand("recon", "Reconstruct a tensor volume from fields");
  recon->add_option("--fields", ra.fields, "Field STIV files, or a forward output directory")->required();
  recon->add_option("--orientations", ra.orientations, "Orientation list");
  recon->add_option("--mask", ra.mask, "Brain mask");
  recon->add_option("--method", ra.method, "stiimag | asti | pgd")
      ->check(CLI::IsMember({"stiimag", "asti", "pgd"}));
  recon->add_option("--prox", ra.prox, "identity | soft | cnn")->check(CLI::IsMember({"identity", "soft", "cnn"}));
  recon->add_option("--tau", ra.tau, "Soft threshold, 1 or 6 values in ppm")->delimiter(',');
  recon->add_option("--weights", ra.weights, "STIW weights for --prox cnn");
  recon->add_option("--topology", ra.topology, "Network topology for --prox cnn");
  recon->add_option("--iterations,-K", ra.iterations, "PGD iterations")->check(CLI::PositiveNumber);
  recon->add_option("--alpha", ra.alpha, "Fixed PGD step (default 1/L)");
  recon->add_option("--init", ra.init, "PGD initial estimate: zero | adjoint");
  recon->add_flag("--zero-outside-mask", ra.zero_outside_mask, "Project PGD iterates onto the mask");
  recon->add_option("--lambda", ra.lambda, "Out-of-mask shrinkage weight");
  recon->add_option("--tolerance", ra.tolerance, "LSQR relative tolerance");
  recon->add_option("--max-iter", ra.max_iter, "LSQR iteration cap")->check(CLI::PositiveNumber);
  recon->add_option("--pad", ra.pad, "FFT padding factor")->check(CLI::Range(1.0, 4.0));
  recon->add_option("--out", ra.out, "Output tensor STIV")->required();

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Compare a reconstruction against ground truth");
  metrics->add_option("--est", ma.est, "Estimated tensor STIV")->required()->check(CLI::ExistingFile);
  metrics->add_option("--gt", ma.gt, "Ground-truth tensor STIV")->required()->check(CLI::ExistingFile);
  metrics->add_option("--mask", ma.mask, "Evaluation mask");
  metrics->add_option("--threshold", ma.threshold, "ECSE region: gt MSA above this (ppm)");
  metrics->add_option("--peak", ma.peak, "Fixed PSNR peak instead of max |gt|");
  metrics->add_flag("--signed-cosine", ma.signed_cosine, "Use 1 − cos instead of 1 − |cos| for ECSE");
  metrics->add_option("--csv", ma.csv, "Append the CSV row to this file");

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "FACT tractography on a tensor volume");
  track->add_option("--input", ta.input, "Tensor STIV")->required()->check(CLI::ExistingFile);
  track->add_option("--mask", ta.mask, "Tracking mask");
  track->add_option("--region", ta.region, "Keep only streamlines through this mask");
  track->add_option("--seeds", ta.cfg.seed_count, "Seed count");
  track->add_option("--seed", ta.cfg.seed, "Random seed");
  track->add_option("--cutoff", ta.cfg.anisotropy_cutoff, "MSA termination threshold, ppm");
  track->add_option("--max-length", ta.cfg.max_length_mm, "Maximum streamline length, mm");
  track->add_option("--angle", ta.cfg.angle_threshold_deg, "Per-step turning limit, degrees");
  track->add_option("--min-step", ta.cfg.min_step_voxels, "Minimum step, voxels");
  track->add_option("--out", ta.out, "Output tractogram")->required();

  RenderArgs rn;
  auto* render = app.add_subcommand("render", "Render one slice as PGM/PPM");
  render->add_option("--input", rn.input, "STIV volume")->required()->check(CLI::ExistingFile);
  render->add_option("--mode", rn.mode, "gray | pev-rgb | msa-weighted-pev");
  render->add_option("--map", rn.map, "Scalar map of a tensor input: mms | msa | lambda1 | component");
  render->add_option("--component", rn.component, "Component index for raw scalar rendering");
  render->add_option("--slice", rn.slice, "axis:index, e.g. z:16");
  render->add_option("--window", rn.window, "lo,hi (gray) or MSA full scale (weighted)")->delimiter(',');
  render->add_option("--msa", rn.msa, "MSA volume for weighting a direction field");
  render->add_option("--out", rn.out, "Output .pgm/.ppm")->required();

  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
  replay->add_option("--manifest", manifest_path, "Manifest JSON")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    set_thread_count(threads);
    if (*phantom) cmd_phantom(pa, args);
    else if (*fwd) cmd_forward(fa, args);
    else if (*recon) cmd_recon(ra, args);
    else if (*metrics) cmd_metrics(ma);
    else if (*track) cmd_track(ta, args);
    else if (*render) cmd_render(rn, args);
    else if (*replay) return cmd_replay(manifest_path);
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace sti::cli
