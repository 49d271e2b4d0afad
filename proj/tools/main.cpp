#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfhg/errors.hpp"
#include "mfhg/fusion.hpp"
#include "mfhg/image_io.hpp"
#include "mfhg/metrics.hpp"
#include "mfhg/trainer.hpp"

namespace fs = std::filesystem;
using namespace mfhg;

namespace {

struct DatasetOptions {
  std::string manifest;
  std::string image_dir;
  std::string mask_dir;
  int count = 0;  // 0 = all file samples / required for procedural
  int width = 64;
  int height = 64;
  int objects = 3;
};

struct SynthOptions {
  double sigma_low = 1.0;
  double sigma_high = 5.0;
  double noise = 0.0;
  int crop = 400;
};

void add_dataset_flags(CLI::App* cmd, DatasetOptions& opts) {
  cmd->add_option("--manifest", opts.manifest, "JSON-lines dataset manifest");
  cmd->add_option("--images", opts.image_dir, "directory of RGB PNG images");
  cmd->add_option("--masks", opts.mask_dir, "directory of label-mask PNGs");
  cmd->add_option("--count", opts.count, "number of samples/examples");
  cmd->add_option("--width", opts.width, "procedural sample width");
  cmd->add_option("--height", opts.height, "procedural sample height");
  cmd->add_option("--objects", opts.objects, "procedural objects per sample");
}

void add_synth_flags(CLI::App* cmd, SynthOptions& opts) {
  cmd->add_option("--sigma-low", opts.sigma_low, "blur sigma lower bound");
  cmd->add_option("--sigma-high", opts.sigma_high, "blur sigma upper bound");
  cmd->add_option("--noise", opts.noise, "source noise std upper bound");
  cmd->add_option("--crop", opts.crop, "augmentation crop size");
}

SynthesisConfig to_config(const SynthOptions& opts, std::uint64_t seed) {
  SynthesisConfig cfg;
  cfg.sigma_low = opts.sigma_low;
  cfg.sigma_high = opts.sigma_high;
  cfg.noise_std_high = opts.noise;
  cfg.crop = opts.crop;
  cfg.seed = seed;
  return cfg;
}

// File samples when configured, procedural otherwise.
std::vector<SegmentedSample> resolve_samples(const DatasetOptions& opts,
                                             std::uint64_t seed) {
  if (!opts.manifest.empty()) return load_manifest(opts.manifest);
  if (!opts.image_dir.empty() || !opts.mask_dir.empty()) {
    if (opts.image_dir.empty() || opts.mask_dir.empty())
      throw std::invalid_argument("--images and --masks must be given together");
    return load_segmented_samples(opts.image_dir, opts.mask_dir);
  }
  const int n = opts.count > 0 ? opts.count : 60;
  std::vector<SegmentedSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed ^ static_cast<std::uint64_t>(i));
    samples.push_back(
        generate_procedural_sample(opts.width, opts.height, opts.objects, rng));
  }
  return samples;
}

void require_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create output directory: " + dir);
  const fs::path probe = fs::path(dir) / ".write_probe";
  std::ofstream out(probe);
  if (!out) throw IoError("output directory is not writable: " + dir);
  out.close();
  fs::remove(probe, ec);
}

int run_synth(const DatasetOptions& data, const SynthOptions& synth,
              const std::string& out_dir, std::uint64_t seed) {
  require_writable_dir(out_dir);
  const int n = data.count;
  std::vector<SegmentedSample> samples;
  if (n > 0) samples = resolve_samples(data, seed);
  if (n > 0 && samples.empty())
    throw std::invalid_argument("synth: the dataset source has no samples");
  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
  if (!manifest) throw IoError("cannot write manifest in " + out_dir);

  const SynthesisConfig cfg = to_config(synth, seed);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed ^ static_cast<std::uint64_t>(i));
    const SegmentedSample& sample = samples[i % samples.size()];
    const TrainingExample ex = synthesize_example(sample, cfg, rng);
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "ex_%04d", i);
    const std::string base = (fs::path(out_dir) / prefix).string();
    save_png(ex.pair.a, base + "_a.png");
    save_png(ex.pair.b, base + "_b.png");
    save_png(ex.truth, base + "_truth.png");
    save_png(focus_map_to_image(ex.target), base + "_target.png");
    nlohmann::json record = {{"a", std::string(prefix) + "_a.png"},
                             {"b", std::string(prefix) + "_b.png"},
                             {"truth", std::string(prefix) + "_truth.png"},
                             {"target", std::string(prefix) + "_target.png"},
                             {"sigma", ex.sigma}};
    manifest << record.dump() << "\n";
  }
  std::cerr << "wrote " << n << " examples to " << out_dir << "\n";
  return 0;
}

int run_train(const DatasetOptions& data, const SynthOptions& synth,
              const std::string& out_dir, std::uint64_t seed,
              const std::string& head_name, std::string loss_name, int epochs,
              int batch, double lr, double alpha, int depth, int channels,
              long iterations, int save_every, int threads) {
  require_writable_dir(out_dir);
  HourglassConfig cfg;
  cfg.depth = depth;
  cfg.base_channels = channels;
  if (head_name == "seg")
    cfg.head = Head::Seg;
  else if (head_name == "reg")
    cfg.head = Head::Reg;
  else
    throw std::invalid_argument("--head must be seg or reg");
  if (loss_name.empty()) loss_name = cfg.head == Head::Seg ? "bce" : "nps";
  const LossKind loss = loss_kind_from_name(loss_name);

  const std::vector<SegmentedSample> samples = resolve_samples(data, seed);
  Rng init_rng(seed);
  Parameters params = init_parameters(cfg, init_rng);

  TrainSchedule sched;
  sched.epochs = epochs;
  sched.batch_size = batch;
  sched.max_iterations = iterations;
  sched.lr = lr;
  sched.alpha = alpha;
  sched.seed = seed;
  sched.threads = threads;
  sched.checkpoint_every = save_every;
  sched.checkpoint_dir = save_every > 0 ? out_dir : "";

  // Validate the head/loss pairing before any work happens.
  if ((cfg.head == Head::Seg) != (loss == LossKind::Bce))
    throw std::invalid_argument("loss '" + loss_name +
                                "' is incompatible with the " + head_name +
                                " head");

  const TrainingReport report =
      train(params, samples, to_config(synth, seed), loss, sched);

  save_checkpoint(params, (fs::path(out_dir) / "model.mfhg").string());
  std::ofstream trace(fs::path(out_dir) / "loss_trace.csv");
  if (!trace) throw IoError("cannot write loss trace in " + out_dir);
  trace << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    char line[64];
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", e + 1,
                  report.epoch_loss[e]);
    trace << line;
  }
  std::cerr << "trained " << report.iterations << " iterations, final loss "
            << (report.iteration_loss.empty() ? 0.0
                                              : report.iteration_loss.back())
            << "\n";
  return 0;
}

Fuser strategy_fuser(const std::string& strategy, const Parameters* model,
                     bool near) {
  if (strategy == "dummy-a") return Fuser{FuserKind::DummyA};
  if (strategy == "dummy-b") return Fuser{FuserKind::DummyB};
  if (strategy == "average") return Fuser{FuserKind::Average};
  if (strategy == "model") {
    if (!model)
      throw std::invalid_argument("--checkpoint required for model strategy");
    return make_model_fuser(*model, near);
  }
  throw std::invalid_argument("unknown strategy: " + strategy);
}

int run_fuse(const std::vector<std::string>& inputs,
             const std::string& checkpoint, const std::string& strategy,
             bool near, const std::string& out_path,
             const std::string& map_path) {
  if (inputs.size() < 2)
    throw std::invalid_argument("fuse needs at least two input images");
  Burst burst;
  burst.reserve(inputs.size());
  for (const std::string& path : inputs) burst.push_back(load_png(path));
  for (std::size_t i = 1; i < burst.size(); ++i)
    if (!burst[i].same_shape(burst[0]))
      throw std::invalid_argument("input dimensions mismatch: " + inputs[i]);

  Parameters model;
  const Parameters* model_ptr = nullptr;
  if (!checkpoint.empty()) {
    model = load_checkpoint(checkpoint);
    model_ptr = &model;
  }
  const Fuser fuser = strategy_fuser(strategy, model_ptr, near);

  Image fused;
  if (!map_path.empty()) {
    if (fuser.kind != FuserKind::HfSeg)
      throw std::invalid_argument("--map requires a seg-head model");
    // fold manually so the focus map of the last step can be captured
    Image acc = burst[0];
    Tensor z;
    for (std::size_t i = 1; i < burst.size(); ++i) {
      const SourcePair pair{acc, burst[i]};
      z = forward(*fuser.model, pair);
      acc = weighted_fuse(pair, z);
    }
    fused = acc;
    FocusMap map(z.h, z.w);
    for (int y = 0; y < z.h; ++y)
      for (int x = 0; x < z.w; ++x) map.at(y, x) = z.at(y, x, 0);
    save_png(focus_map_to_image(map), map_path);
  } else {
    fused = fuse_burst(fuser, burst);
  }
  save_png(fused, out_path);
  std::cerr << "fused " << inputs.size() << " frames into " << out_path
            << "\n";
  return 0;
}

struct EvalRecord {
  std::string a, b, f, ref;
};

int run_eval(const std::string& manifest_path, const std::string& out_path,
             bool bias, const std::string& checkpoint, bool near) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  std::vector<EvalRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    EvalRecord rec;
    rec.a = (base / j.at("a").get<std::string>()).string();
    rec.b = (base / j.at("b").get<std::string>()).string();
    if (j.contains("f")) rec.f = (base / j.at("f").get<std::string>()).string();
    if (j.contains("ref"))
      rec.ref = (base / j.at("ref").get<std::string>()).string();
    records.push_back(rec);
  }

  std::vector<std::string> missing;
  for (const EvalRecord& rec : records) {
    for (const std::string& p : {rec.a, rec.b, rec.f, rec.ref})
      if (!p.empty() && !fs::exists(p)) missing.push_back(p);
  }
  if (!missing.empty()) {
    for (const std::string& p : missing)
      std::cerr << "missing file: " << p << "\n";
    return 1;
  }

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write metric csv: " + out_path);

  std::vector<BiasRow> rows;
  if (bias) {
    Parameters model;
    std::vector<Fuser> fusers = {Fuser{FuserKind::DummyA},
                                 Fuser{FuserKind::DummyB},
                                 Fuser{FuserKind::Average}};
    if (!checkpoint.empty()) {
      model = load_checkpoint(checkpoint);
      fusers.push_back(make_model_fuser(model, near));
    }
    std::vector<SourcePair> pairs;
    std::vector<Image> refs;
    bool all_refs = true;
    for (const EvalRecord& rec : records) {
      pairs.push_back(SourcePair{load_png(rec.a), load_png(rec.b)});
      if (rec.ref.empty())
        all_refs = false;
      else
        refs.push_back(load_png(rec.ref));
    }
    if (pairs.empty()) {
      write_metric_csv(out, {});
      return 0;
    }
    const BiasStudy study =
        bias_study(pairs, fusers, all_refs ? &refs : nullptr);
    rows = study.rows;
    for (const std::string& metric : study.biased_metrics)
      std::cout << "dummy-biased metric: " << metric << "\n";
  } else {
    for (std::size_t i = 0; i < records.size(); ++i) {
      const EvalRecord& rec = records[i];
      if (rec.f.empty())
        throw std::invalid_argument("eval record " + std::to_string(i) +
                                    " lacks a fused image path");
      const Image a = load_png(rec.a);
      const Image b = load_png(rec.b);
      const Image f = load_png(rec.f);
      Image ref;
      const Image* ref_ptr = nullptr;
      if (!rec.ref.empty()) {
        ref = load_png(rec.ref);
        ref_ptr = &ref;
      }
      BiasRow row;
      row.pair_id = static_cast<int>(i);
      row.fuser = fs::path(rec.f).stem().string();
      row.metrics = evaluate_fusion(a, b, f, ref_ptr);
      rows.push_back(row);
    }
  }
  write_metric_csv(out, rows);

  // mean +/- std per metric over all rows
  auto summarize = [&](const std::string& name, auto getter) {
    double sum = 0.0, sum_sq = 0.0;
    long n = 0;
    for (const BiasRow& row : rows) {
      const std::optional<double> v = getter(row);
      if (!v) continue;
      sum += *v;
      sum_sq += *v * *v;
      ++n;
    }
    if (n == 0) return;
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    std::printf("%s %.4f +/- %.4f\n", name.c_str(), mean, std::sqrt(var));
  };
  summarize("ssim", [](const BiasRow& r) { return r.metrics.ssim; });
  summarize("q_mi", [](const BiasRow& r) {
    return std::optional<double>(r.metrics.q_mi);
  });
  summarize("q_te", [](const BiasRow& r) {
    return std::optional<double>(r.metrics.q_te);
  });
  summarize("q_ncie", [](const BiasRow& r) {
    return std::optional<double>(r.metrics.q_ncie);
  });
  summarize("q_g", [](const BiasRow& r) {
    return std::optional<double>(r.metrics.q_g);
  });
  summarize("q_s", [](const BiasRow& r) {
    return std::optional<double>(r.metrics.q_s);
  });
  return 0;
}

int run_bench(const std::string& checkpoint, const std::string& sizes_csv,
              int repeat, std::uint64_t seed, const std::string& out_path) {
  const Parameters model = load_checkpoint(checkpoint);
  const Fuser fuser = make_model_fuser(model);

  std::vector<int> sizes;
  std::stringstream ss(sizes_csv);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) sizes.push_back(std::stoi(token));
  if (sizes.empty() || repeat < 1)
    throw std::invalid_argument("bench needs sizes and a positive repeat");

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw IoError("cannot write benchmark csv: " + out_path);
    out = &file;
  }
  *out << "size,mean_seconds\n";
  for (int size : sizes) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(size));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SourcePair pair{Image(size, size, 3), Image(size, size, 3)};
    for (double& v : pair.a.data()) v = u(rng);
    for (double& v : pair.b.data()) v = u(rng);

    fuse_pair(fuser, pair);  // warm-up, excluded from timing
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < repeat; ++r) fuse_pair(fuser, pair);
    const auto stop = std::chrono::steady_clock::now();
    const double mean =
        std::chrono::duration<double>(stop - start).count() / repeat;
    char line[64];
    std::snprintf(line, sizeof(line), "%d,%.9f\n", size, mean);
    *out << line;
  }
  return 0;
}


// Expands `--config FILE` into `--key=value` arguments injected after the
// subcommand, so CLI11 validates config keys exactly like flags. Keys
// already present on the command line are skipped.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config_file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_file = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_file = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (config_file.empty()) return args;
  if (args.size() < 2)
    throw std::invalid_argument("--config requires a subcommand");

  std::ifstream in(config_file);
  if (!in) throw std::invalid_argument("cannot read config file: " + config_file);
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (std::size_t i = 2; i < args.size(); ++i)
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> injected;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=', first);
    if (eq == std::string::npos)
      throw std::invalid_argument(config_file + " line " +
                                  std::to_string(line_no) +
                                  ": expected key=value");
    std::string key = line.substr(first, eq - first);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(eq + 1);
    const auto vfirst = value.find_first_not_of(" \t");
    value = vfirst == std::string::npos ? "" : value.substr(vfirst);
    value.erase(value.find_last_not_of(" \t\r") + 1);
    if (!given(key)) injected.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-focus image fusion with hourglass networks"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;

  // synth
  auto* synth_cmd =
      app.add_subcommand("synth", "synthesize multi-focus training examples");
  DatasetOptions synth_data;
  SynthOptions synth_opts;
  add_dataset_flags(synth_cmd, synth_data);
  add_synth_flags(synth_cmd, synth_opts);
  synth_cmd->add_option("--seed", seed, "rng seed");
  synth_cmd->add_option("--out", out, "output directory")->required();
  std::string config_path;
  synth_cmd->add_option("--config", config_path,
                        "key=value config file (flags win on conflict)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a fusion network");
  DatasetOptions train_data;
  SynthOptions train_opts;
  std::string head = "seg", loss_name;
  int epochs = 1, batch = 3, depth = 3, channels = 16, save_every = 0,
      threads = 0;
  long iterations = 0;
  double lr = 1e-5, alpha = 6.0;
  add_dataset_flags(train_cmd, train_data);
  add_synth_flags(train_cmd, train_opts);
  train_cmd->add_option("--seed", seed, "rng seed");
  train_cmd->add_option("--out", out, "output directory")->required();
  train_cmd->add_option("--head", head, "network head: seg or reg");
  train_cmd->add_option("--loss", loss_name, "bce, nps, l1 or mse");
  train_cmd->add_option("--epochs", epochs, "training epochs");
  train_cmd->add_option("--batch", batch, "minibatch size before inversion");
  train_cmd->add_option("--lr", lr, "learning rate");
  train_cmd->add_option("--alpha", alpha, "nps sharpness");
  train_cmd->add_option("--depth", depth, "encoder levels");
  train_cmd->add_option("--channels", channels, "base channel count");
  train_cmd->add_option("--iterations", iterations,
                        "stop after this many optimizer steps (0 = all)");
  train_cmd->add_option("--save-every", save_every,
                        "checkpoint every K epochs (0 = final only)");
  train_cmd->add_option("--threads", threads, "worker threads (0 = auto)");
  train_cmd->add_option("--config", config_path,
                       "key=value config file (flags win on conflict)");

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "fuse a burst of images");
  std::vector<std::string> inputs;
  std::string checkpoint, strategy = "model", map_path;
  bool near = false;
  fuse_cmd->add_option("inputs", inputs, "input images (2 or more)");
  fuse_cmd->add_option("--checkpoint", checkpoint, "model checkpoint");
  fuse_cmd->add_option("--strategy", strategy,
                       "model, dummy-a, dummy-b or average");
  fuse_cmd->add_flag("--near", near, "snap output to the nearest source");
  fuse_cmd->add_option("--out", out, "fused output PNG")->required();
  fuse_cmd->add_option("--map", map_path, "focus-map PNG (seg head)");
  fuse_cmd->add_option("--config", config_path,
                       "key=value config file (flags win on conflict)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score fusion results");
  std::string eval_manifest;
  bool bias = false;
  eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest")
      ->required();
  eval_cmd->add_option("--out", out, "metric CSV path")->required();
  eval_cmd->add_flag("--bias", bias, "dummy-vs-average bias study");
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint");
  eval_cmd->add_flag("--near", near, "nearest-source post-processing");
  eval_cmd->add_option("--config", config_path,
                       "key=value config file (flags win on conflict)");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "time fusion passes");
  std::string sizes = "130,260,520";
  int repeat = 5;
  bench_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")
      ->required();
  bench_cmd->add_option("--sizes", sizes, "comma-separated square sizes");
  bench_cmd->add_option("--repeat", repeat, "repetitions per size");
  bench_cmd->add_option("--seed", seed, "rng seed");
  bench_cmd->add_option("--out", out, "benchmark CSV (default stdout)");
  bench_cmd->add_option("--config", config_path,
                       "key=value config file (flags win on conflict)");

  std::vector<std::string> args;
  try {
    args = expand_config_args(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth_cmd) return run_synth(synth_data, synth_opts, out, seed);
    if (*train_cmd)
      return run_train(train_data, train_opts, out, seed, head, loss_name,
                       epochs, batch, lr, alpha, depth, channels, iterations,
                       save_every, threads);
    if (*fuse_cmd)
      return run_fuse(inputs, checkpoint, strategy, near, out, map_path);
    if (*eval_cmd)
      return run_eval(eval_manifest, out, bias, checkpoint, near);
    if (*bench_cmd) return run_bench(checkpoint, sizes, repeat, seed, out);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
