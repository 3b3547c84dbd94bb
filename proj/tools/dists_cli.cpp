#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dists/dists.hpp"
#include "dists/image_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Process exit codes.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kUnreadable = 2,
  kWeights = 3,
  kDiverged = 4,
  kManifest = 5,
  kFit = 6,
};

struct CliError : std::runtime_error {
  CliError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

std::string sha256_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return "";
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(f.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Provenance record written next to a command's outputs.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)), started_(utc_now()) {}

  json& config() { return config_; }
  void input(const std::string& role, const fs::path& p) { inputs_[role] = p; }
  void output(const fs::path& p) { outputs_.push_back(p); }

  void write(const fs::path& path, std::uint64_t seed) const {
    json j;
    j["command"] = command_;
    j["config"] = config_;
    j["seed"] = seed;
    json in = json::object();
    for (const auto& [role, p] : inputs_) in[role] = {{"path", p.string()}, {"sha256", sha256_file(p)}};
    j["inputs"] = in;
    json out = json::array();
    for (const auto& p : outputs_) out.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    j["outputs"] = out;
    j["started"] = started_;
    j["finished"] = utc_now();
    std::ofstream f(path);
    if (!f) throw CliError(kUnreadable, "cannot write run manifest " + path.string());
    f << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::string started_;
  json config_ = json::object();
  std::map<std::string, fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

fs::path manifest_path_for(const fs::path& out) {
  if (fs::is_directory(out)) return out / "run.json";
  return fs::path(out.string() + ".run.json");
}

struct NetworkOptions {
  std::string weights;
  std::string params;
  std::string pooling = "l2";
  bool no_stage0 = false;
  int resize = 256;
  std::uint64_t seed = 0;
};

void add_network_options(CLI::App* app, NetworkOptions& o, bool params = true) {
  app->add_option("--weights", o.weights, "Backbone weight container (DWTS)")->required();
  if (params) app->add_option("--params", o.params, "Trained alpha/beta container; initial weights if omitted");
  app->add_option("--pooling", o.pooling, "Downsampling between blocks")->check(CLI::IsMember({"l2", "max"}));
  app->add_flag("--no-stage0", o.no_stage0, "Drop the pixel stage from the representation");
  app->add_option("--resize", o.resize, "Rescale so the smaller side has this length (0 keeps the size)");
  app->add_option("--seed", o.seed, "Seed for every random choice");
}

dists::BackboneOptions backbone_options(const NetworkOptions& o) {
  dists::BackboneOptions b;
  b.pooling = o.pooling == "max" ? dists::PoolingKind::max : dists::PoolingKind::l2;
  b.include_stage0 = !o.no_stage0;
  return b;
}

json network_config(const NetworkOptions& o) {
  return {{"pooling", o.pooling}, {"stage0", !o.no_stage0}, {"resize", o.resize}};
}

dists::NetworkGraph<float> load_graph(const NetworkOptions& o, RunManifest& run) {
  run.input("weights", o.weights);
  try {
    return dists::load_weights(o.weights, backbone_options(o));
  } catch (const std::exception& e) {
    throw CliError(kWeights, "weights " + o.weights + ": " + e.what());
  }
}

dists::WeightSet load_params(const NetworkOptions& o, const dists::NetworkGraph<float>& g, RunManifest& run) {
  if (o.params.empty()) return dists::initial_weights(g.stage_channels());
  run.input("params", o.params);
  dists::WeightSet w;
  try {
    w = dists::weights_from_file(dists::read_weight_file(o.params));
  } catch (const std::exception& e) {
    throw CliError(kWeights, "params " + o.params + ": " + e.what());
  }
  if (w.stage_channels() != g.stage_channels())
    throw CliError(kWeights, "params " + o.params + " do not match the network's channel layout");
  return w;
}

dists::Image load_image(const fs::path& p) {
  try {
    return dists::read_image(p);
  } catch (const std::exception& e) {
    throw CliError(kUnreadable, e.what());
  }
}

void save_image(const fs::path& p, const dists::Image& im) {
  try {
    dists::write_image(p, im);
  } catch (const std::exception& e) {
    throw CliError(kUnreadable, e.what());
  }
}

dists::QualityManifest load_manifest(const fs::path& p, bool skip_bad, bool check_files = true) {
  if (!fs::exists(p)) throw CliError(kUnreadable, "cannot open manifest " + p.string());
  try {
    auto m = dists::read_quality_manifest(p, skip_bad, check_files);
    if (!m.issues.empty()) std::cerr << "skipped rows:\n" << dists::format_issues(m.issues);
    return m;
  } catch (const dists::IngestionError& e) {
    throw CliError(kManifest, e.what());
  }
}

void write_trace(const fs::path& p, const std::vector<double>& trace, const char* column) {
  std::ofstream f(p);
  if (!f) throw CliError(kUnreadable, "cannot write " + p.string());
  f.precision(std::numeric_limits<double>::max_digits10);
  f << "iteration," << column << "\n";
  for (std::size_t i = 0; i < trace.size(); ++i) f << i << "," << trace[i] << "\n";
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

// score

struct ScoreArgs {
  NetworkOptions net;
  std::string ref, dist, out;
};

int cmd_score(const ScoreArgs& a) {
  RunManifest run("score");
  run.config() = network_config(a.net);
  const auto g = load_graph(a.net, run);
  const auto w = load_params(a.net, g, run);
  run.input("ref", a.ref);
  run.input("dist", a.dist);
  const auto x = load_image(a.ref), y = load_image(a.dist);
  if (!x.same_shape(y))
    throw CliError(kUsage, "images differ in shape: " + dists::shape_string(x) + " vs " + dists::shape_string(y));
  const auto fx = dists::extract_features(g, dists::rescale_min_side(x, a.net.resize));
  const auto fy = dists::extract_features(g, dists::rescale_min_side(y, a.net.resize));
  const double d = dists::dists(fx, fy, w);
  const double psnr = dists::psnr(x, y);
  const double ssim = dists::ssim_global(x, y);
  std::cout << "D     " << format_double(d) << "\n"
            << "d     " << format_double(std::sqrt(std::max(d, 0.0))) << "\n"
            << "PSNR  " << format_double(psnr) << "\n"
            << "SSIM  " << format_double(ssim) << "\n";
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw CliError(kUnreadable, "cannot write " + a.out);
    f.precision(std::numeric_limits<double>::max_digits10);
    f << "ref_path,dist_path,D,d,psnr,ssim\n"
      << dists::csv_field(a.ref) << "," << dists::csv_field(a.dist) << "," << d << "," << std::sqrt(std::max(d, 0.0))
      << "," << format_double(psnr) << "," << ssim << "\n";
    f.close();
    run.output(a.out);
    run.write(manifest_path_for(a.out), a.net.seed);
  }
  return kOk;
}

// eval

struct EvalArgs {
  NetworkOptions net;
  std::string manifest, out, scores;
  bool skip_bad = false;
  bool mos_higher_better = false;
};

int cmd_eval(const EvalArgs& a) {
  RunManifest run("eval");
  run.config() = network_config(a.net);
  run.config()["mos_higher_better"] = a.mos_higher_better;
  run.config()["skip_bad"] = a.skip_bad;
  const auto g = load_graph(a.net, run);
  const auto w = load_params(a.net, g, run);
  run.input("manifest", a.manifest);
  const auto m = load_manifest(a.manifest, a.skip_bad);

  std::vector<double> d(m.rows.size());
  dists::parallel_for(m.rows.size(), [&](std::size_t i) {
    const auto x = load_image(m.rows[i].ref_path), y = load_image(m.rows[i].dist_path);
    if (!x.same_shape(y))
      throw CliError(kUnreadable, "line " + std::to_string(m.rows[i].line) + ": images differ in shape");
    d[i] = dists::dists(dists::extract_features(g, dists::rescale_min_side(x, a.net.resize)),
                        dists::extract_features(g, dists::rescale_min_side(y, a.net.resize)), w);
  });

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < m.rows.size(); ++i) groups[m.rows[i].dataset].push_back(i);

  std::ofstream f(a.out);
  if (!f) throw CliError(kUnreadable, "cannot write " + a.out);
  f.precision(std::numeric_limits<double>::max_digits10);
  f << "dataset,n,plcc,srcc,krcc,eta1,eta2,eta3,eta4\n";
  std::cout << std::left << std::setw(16) << "dataset" << std::setw(8) << "n" << std::setw(10) << "PLCC"
            << std::setw(10) << "SRCC" << "KRCC\n";
  for (const auto& [name, idx] : groups) {
    std::vector<double> dd, mos;
    for (auto i : idx) dd.push_back(d[i]), mos.push_back(m.rows[i].mos);
    if (a.mos_higher_better)
      for (double& v : mos) v = -v;
    dists::eval::LogisticParams p;
    double plcc = 0;
    try {
      plcc = dists::eval::plcc(dd, mos, &p);
    } catch (const dists::FitError& e) {
      throw CliError(kFit, "dataset " + name + ": " + e.what());
    }
    const double srcc = dists::eval::srcc(dd, mos), krcc = dists::eval::krcc(dd, mos);
    f << dists::csv_field(name) << "," << idx.size() << "," << plcc << "," << srcc << "," << krcc << "," << p.eta1
      << "," << p.eta2 << "," << p.eta3 << "," << p.eta4 << "\n";
    std::cout << std::setw(16) << name << std::setw(8) << idx.size() << std::fixed << std::setprecision(4)
              << std::setw(10) << plcc << std::setw(10) << srcc << krcc << "\n"
              << std::defaultfloat;
  }
  f.close();
  run.output(a.out);
  if (!a.scores.empty()) {
    std::ofstream s(a.scores);
    if (!s) throw CliError(kUnreadable, "cannot write " + a.scores);
    s.precision(std::numeric_limits<double>::max_digits10);
    s << "ref_path,dist_path,mos,dataset,D\n";
    for (std::size_t i = 0; i < m.rows.size(); ++i)
      s << dists::csv_field(m.rows[i].ref_path.string()) << "," << dists::csv_field(m.rows[i].dist_path.string())
        << "," << m.rows[i].mos << "," << dists::csv_field(m.rows[i].dataset) << "," << d[i] << "\n";
    s.close();
    run.output(a.scores);
  }
  run.write(manifest_path_for(a.out), a.net.seed);
  return kOk;
}

// train

struct TrainArgs {
  NetworkOptions net;
  std::string manifest, textures, out;
  double lambda = 1.0;
  int iters = 5000;
  int batch = 32;
  double lr = 1e-4;
  int halving = 1000;
  int crop = 128;
  int crops_per_texture = 16;
  bool skip_bad = false;
  bool mos_higher_better = false;
};

int cmd_train(const TrainArgs& a) {
  RunManifest run("train");
  run.config() = network_config(a.net);
  run.config().update({{"lambda", a.lambda},
                       {"iters", a.iters},
                       {"batch", a.batch},
                       {"learning_rate", a.lr},
                       {"lr_halving_period", a.halving},
                       {"crop", a.crop},
                       {"crops_per_texture", a.crops_per_texture},
                       {"mos_higher_better", a.mos_higher_better}});
  dists::TrainConfig cfg;
  cfg.lambda = a.lambda;
  cfg.total_iters = a.iters;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.lr_halving_period = a.halving;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(kUsage, e.what());
  }
  const auto g = load_graph(a.net, run);
  const auto init = load_params(a.net, g, run);

  run.input("manifest", a.manifest);
  const auto m = load_manifest(a.manifest, a.skip_bad);
  std::vector<double> mos;
  for (const auto& r : m.rows) mos.push_back(r.mos);
  std::vector<double> q;
  try {
    q = dists::normalize_scores(mos, a.mos_higher_better);
  } catch (const dists::IngestionError& e) {
    throw CliError(kManifest, e.what());
  }
  std::vector<dists::ImagePair<float>> pairs(m.rows.size());
  dists::parallel_for(m.rows.size(), [&](std::size_t i) {
    pairs[i] = {load_image(m.rows[i].ref_path), load_image(m.rows[i].dist_path), q[i]};
  });
  dists::CachedQualitySource quality;
  dists::CachedTextureSource texture;
  try {
    quality = dists::build_quality_cache(g, pairs, a.net.resize);
    if (a.lambda > 0) {
      if (a.textures.empty()) throw CliError(kUsage, "--textures is required when lambda > 0");
      run.input("textures", a.textures);
      std::vector<fs::path> paths;
      try {
        paths = dists::read_texture_manifest(a.textures);
      } catch (const dists::IngestionError& e) {
        throw CliError(kManifest, e.what());
      }
      std::vector<dists::Image> tex;
      for (const auto& p : paths) tex.push_back(dists::rescale_min_side(load_image(p), a.net.resize));
      texture = dists::build_texture_cache(g, dists::texture_crop_pairs(tex, a.crops_per_texture, a.crop, a.net.seed));
    }
  } catch (const dists::ShapeError& e) {
    throw CliError(kUnreadable, e.what());
  }

  const auto result = dists::train(quality, texture, cfg, init, a.net.seed);
  dists::write_weight_file(a.out, dists::to_weight_file(result.weights));
  run.output(a.out);
  const fs::path trace = a.out + ".trace.csv";
  write_trace(trace, result.loss_trace, "loss");
  run.output(trace);
  run.write(manifest_path_for(a.out), a.net.seed);
  std::cout << "final minibatch loss " << result.loss_trace.back() << "\n";
  return kOk;
}

// synthesize / recover

struct DescentArgs {
  int iters = 2000;
  double step = 0.01;
  std::string rule = "adam";
  double rel_tol = 1e-6;
};

void add_descent_options(CLI::App* app, DescentArgs& d) {
  app->add_option("--iters", d.iters, "Iteration budget");
  app->add_option("--step", d.step, "Step size");
  app->add_option("--rule", d.rule, "Update rule")->check(CLI::IsMember({"adam", "gd"}));
  app->add_option("--rel-tol", d.rel_tol, "Relative change over 100 iterations that counts as converged");
}

dists::DescentConfig descent_config(const DescentArgs& d) {
  dists::DescentConfig c;
  c.max_iters = d.iters;
  c.step = d.step;
  c.rule = d.rule == "gd" ? dists::StepRule::gradient_descent : dists::StepRule::adam;
  c.rel_tol = d.rel_tol;
  if (c.max_iters < 1 || !(c.step > 0)) throw CliError(kUsage, "iteration budget and step must be positive");
  return c;
}

json descent_json(const DescentArgs& d) {
  return {{"iters", d.iters}, {"step", d.step}, {"rule", d.rule}, {"rel_tol", d.rel_tol}};
}

int finish_descent(const dists::DescentResult<float>& r, const std::string& out, RunManifest& run,
                   std::uint64_t seed) {
  save_image(out, r.image);
  run.output(out);
  const fs::path trace = out + ".trace.csv";
  write_trace(trace, r.trace, "objective");
  run.output(trace);
  run.config()["iterations"] = r.iterations;
  run.config()["converged"] = r.converged;
  run.write(manifest_path_for(out), seed);
  std::cout << "iterations " << r.iterations << "  objective " << format_double(r.trace.front()) << " -> "
            << format_double(r.trace.back()) << "\n";
  return kOk;
}

int diverged(const dists::OptimizationError& e, const dists::Image& last, const std::string& out, RunManifest& run,
             std::uint64_t seed) {
  if (!last.empty()) {
    save_image(out, last);
    run.output(out);
  }
  run.config()["diverged_at"] = e.iteration;
  run.write(manifest_path_for(out), seed);
  std::cerr << "error: " << e.what() << "; last stable iterate written to " << out << "\n";
  return kDiverged;
}

struct SynthArgs {
  NetworkOptions net;
  DescentArgs descent;
  std::string texture, out, mask = "all", init_image;
};

int cmd_synthesize(const SynthArgs& a) {
  RunManifest run("synthesize");
  run.config() = network_config(a.net);
  run.config()["mask"] = a.mask;
  run.config()["descent"] = descent_json(a.descent);
  dists::SynthesisConfig cfg;
  try {
    cfg.mask = dists::parse_stage_mask(a.mask);
  } catch (const std::invalid_argument& e) {
    throw CliError(kUsage, e.what());
  }
  cfg.descent = descent_config(a.descent);
  cfg.seed = a.net.seed;
  const auto g = load_graph(a.net, run);
  if (cfg.mask.test(0) && a.net.no_stage0) throw CliError(kUsage, "mask selects stage 0 but --no-stage0 is set");
  run.input("texture", a.texture);
  const auto x = dists::rescale_min_side(load_image(a.texture), a.net.resize);
  dists::Image init;
  if (!a.init_image.empty()) {
    run.input("init", a.init_image);
    init = load_image(a.init_image);
    if (!init.same_shape(x)) throw CliError(kUsage, "init image shape differs from the texture");
    cfg.init = dists::InitMode::image;
  }
  dists::Image last;
  try {
    return finish_descent(dists::synthesize(g, x, cfg, init.empty() ? nullptr : &init, &last), a.out, run, a.net.seed);
  } catch (const dists::OptimizationError& e) {
    return diverged(e, last, a.out, run, a.net.seed);
  }
}

struct RecoverArgs {
  NetworkOptions net;
  DescentArgs descent;
  std::string ref, out, init = "noise", measure = "dists";
};

int cmd_recover(RecoverArgs a) {
  RunManifest run("recover");
  run.config() = network_config(a.net);
  run.config()["measure"] = a.measure;
  run.config()["init"] = a.init;
  run.config()["descent"] = descent_json(a.descent);
  const auto cfg = descent_config(a.descent);
  run.input("ref", a.ref);
  const auto x = load_image(a.ref);
  dists::Image y0;
  if (a.init == "noise") {
    y0 = dists::uniform_noise_image<float>(x.height(), x.width(), a.net.seed);
  } else {
    run.input("init", a.init);
    y0 = load_image(a.init);
    if (!y0.same_shape(x)) throw CliError(kUsage, "init image shape differs from the reference");
  }
  std::optional<dists::NetworkGraph<float>> g;
  dists::PixelObjective<float> f;
  if (a.measure == "dists") {
    g.emplace(load_graph(a.net, run));
    f = dists::dists_objective(*g, x, load_params(a.net, *g, run));
  } else if (a.measure == "mse") {
    f = dists::mse_objective(x);
  } else {
    f = dists::ssim_objective(x);
  }
  dists::Image last;
  try {
    return finish_descent(dists::recover(f, y0, cfg, &last), a.out, run, a.net.seed);
  } catch (const dists::OptimizationError& e) {
    return diverged(e, last, a.out, run, a.net.seed);
  }
}

// augment

struct AugmentArgs {
  std::string manifest, out;
  double shift = 0.05, rotate = 3.0, dilate = 1.05;
  bool skip_bad = false;
};

int cmd_augment(const AugmentArgs& a) {
  RunManifest run("augment");
  run.config() = {{"shift_fraction", a.shift}, {"rotation_degrees", a.rotate}, {"dilation", a.dilate}};
  const dists::eval::WarpParams wp{a.shift, a.rotate, a.dilate};
  try {
    wp.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(kUsage, e.what());
  }
  run.input("manifest", a.manifest);
  const auto m = load_manifest(a.manifest, a.skip_bad);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  std::map<fs::path, std::vector<fs::path>> variants;
  std::vector<fs::path> refs;
  for (const auto& r : m.rows)
    if (variants.emplace(r.ref_path, std::vector<fs::path>{}).second) refs.push_back(r.ref_path);
  std::vector<std::vector<fs::path>> written(refs.size());
  std::vector<std::string> failures(refs.size());
  dists::parallel_for(refs.size(), [&](std::size_t i) {
    try {
      const auto x = dists::read_image(refs[i]);
      for (auto k : dists::eval::kAllTransforms) {
        const auto name = dir / (refs[i].stem().string() + "_" + dists::eval::to_string(k) + ".png");
        dists::write_image(name, dists::quantize8(dists::eval::geometric_transform(x, k, wp)));
        written[i].push_back(name);
      }
    } catch (const std::exception& e) {
      failures[i] = refs[i].string() + ": " + e.what();
    }
  });
  bool failed = false;
  for (const auto& msg : failures)
    if (!msg.empty()) std::cerr << "error: " << msg << "\n", failed = true;
  if (failed) throw CliError(kUnreadable, "augmentation failed for some references");
  for (std::size_t i = 0; i < refs.size(); ++i) variants[refs[i]] = written[i];

  std::vector<dists::QualityRow> rows = m.rows;
  for (const auto& r : m.rows)
    for (const auto& v : variants[r.ref_path]) {
      auto copy = r;
      copy.ref_path = fs::absolute(v);
      rows.push_back(copy);
    }
  const auto manifest_out = dir / "augmented.csv";
  dists::write_quality_manifest(manifest_out, rows);
  run.output(manifest_out);
  for (const auto& w : written)
    for (const auto& p : w) run.output(p);
  run.write(dir / "run.json", 0);
  std::cout << m.rows.size() << " rows -> " << rows.size() << " rows in " << manifest_out.string() << "\n";
  return kOk;
}

// init-weights

struct InitArgs {
  std::string out, params_out;
  std::uint64_t seed = 0;
};

int cmd_init_weights(const InitArgs& a) {
  RunManifest run("init-weights");
  const auto g = dists::random_graph<float>(a.seed);
  dists::write_weight_file(a.out, dists::to_weight_file(g));
  run.output(a.out);
  if (!a.params_out.empty()) {
    dists::write_weight_file(a.params_out, dists::to_weight_file(dists::initial_weights(g.stage_channels())));
    run.output(a.params_out);
  }
  run.write(manifest_path_for(a.out), a.seed);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DISTS: structure and texture similarity between images"};
  app.require_subcommand(1);

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Score a distorted image against a reference");
  s->add_option("ref", score.ref, "Reference image")->required();
  s->add_option("dist", score.dist, "Distorted image")->required();
  s->add_option("--out", score.out, "Also write the scores as CSV");
  add_network_options(s, score.net);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Correlate scores with subjective ratings, per dataset");
  e->add_option("--manifest", ev.manifest, "CSV with ref_path, dist_path, mos[, dataset]")->required();
  e->add_option("--out", ev.out, "Correlation table (CSV)")->required();
  e->add_option("--scores", ev.scores, "Per-row scores (CSV)");
  e->add_flag("--skip-bad", ev.skip_bad, "Drop malformed rows instead of aborting");
  e->add_flag("--mos-higher-better", ev.mos_higher_better, "Ratings grow with quality (MOS rather than DMOS)");
  add_network_options(e, ev.net);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit alpha/beta on rated pairs and texture crops");
  t->add_option("--manifest", tr.manifest, "Quality manifest")->required();
  t->add_option("--textures", tr.textures, "Texture manifest (one image path per row)");
  t->add_option("--out", tr.out, "Parameter container to write")->required();
  t->add_option("--lambda", tr.lambda, "Weight of the texture-invariance term");
  t->add_option("--iters", tr.iters, "Training iterations");
  t->add_option("--batch", tr.batch, "Minibatch size");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_option("--halving", tr.halving, "Halve the learning rate every this many iterations");
  t->add_option("--crop", tr.crop, "Texture crop side");
  t->add_option("--crops-per-texture", tr.crops_per_texture, "Crop pairs drawn from each texture");
  t->add_flag("--skip-bad", tr.skip_bad, "Drop malformed rows instead of aborting");
  t->add_flag("--mos-higher-better", tr.mos_higher_better, "Ratings grow with quality (MOS rather than DMOS)");
  add_network_options(t, tr.net);

  SynthArgs sy;
  sy.net.resize = 0;
  auto* y = app.add_subcommand("synthesize", "Synthesize a texture by matching stage-wise channel means");
  y->add_option("texture", sy.texture, "Example texture")->required();
  y->add_option("--out", sy.out, "Result image")->required();
  y->add_option("--mask", sy.mask, "Stages to match: all, 3, 0-2 or 0,2,5");
  y->add_option("--init-image", sy.init_image, "Start from this image instead of noise");
  add_network_options(y, sy.net, false);
  add_descent_options(y, sy.descent);

  RecoverArgs rc;
  rc.net.resize = 0;
  auto* r = app.add_subcommand("recover", "Recover a reference by minimizing a full-reference measure");
  r->add_option("ref", rc.ref, "Reference image")->required();
  r->add_option("--out", rc.out, "Result image")->required();
  r->add_option("--init", rc.init, "Starting image, or 'noise'");
  r->add_option("--measure", rc.measure, "Objective")->check(CLI::IsMember({"dists", "mse", "ssim"}));
  r->add_option("--weights", rc.net.weights, "Backbone weight container (needed for dists)");
  r->add_option("--params", rc.net.params, "Trained alpha/beta container");
  r->add_option("--pooling", rc.net.pooling, "Downsampling between blocks")->check(CLI::IsMember({"l2", "max"}));
  r->add_flag("--no-stage0", rc.net.no_stage0, "Drop the pixel stage from the representation");
  r->add_option("--seed", rc.net.seed, "Seed for the noise initialization");
  add_descent_options(r, rc.descent);

  AugmentArgs au;
  auto* a = app.add_subcommand("augment", "Write shifted, rotated, dilated and mixed copies of each reference");
  a->add_option("--manifest", au.manifest, "Quality manifest")->required();
  a->add_option("--out", au.out, "Output directory")->required();
  a->add_option("--shift", au.shift, "Horizontal shift as a fraction of the width");
  a->add_option("--rotate", au.rotate, "Clockwise rotation in degrees");
  a->add_option("--dilate", au.dilate, "Dilation factor");
  a->add_flag("--skip-bad", au.skip_bad, "Drop malformed rows instead of aborting");

  InitArgs in;
  auto* w = app.add_subcommand("init-weights", "Write a randomly initialized VGG16 weight container");
  w->add_option("--out", in.out, "Weight container to write")->required();
  w->add_option("--params", in.params_out, "Also write initial alpha/beta here");
  w->add_option("--seed", in.seed, "Initialization seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*s) return cmd_score(score);
    if (*e) return cmd_eval(ev);
    if (*t) return cmd_train(tr);
    if (*y) return cmd_synthesize(sy);
    if (*r) {
      if (rc.measure == "dists" && rc.net.weights.empty()) throw CliError(kUsage, "--weights is required for dists");
      return cmd_recover(rc);
    }
    if (*a) return cmd_augment(au);
    if (*w) return cmd_init_weights(in);
  } catch (const CliError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return err.code;
  } catch (const dists::IngestionError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUnreadable;
  } catch (const dists::ShapeError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
