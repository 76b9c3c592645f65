// cmpnet: layout-to-topography CMP modeling pipeline.
//
//   genlayout -> rasterize -> synth -> dataset -> train -> predict/eval/xsec
//
// Exit codes: 0 ok, 2 usage/validation, 3 data format, 4 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cmpnet/error.hpp"
#include "cmpnet/evaluation.hpp"
#include "cmpnet/layout.hpp"
#include "cmpnet/persistence.hpp"
#include "cmpnet/preprocess.hpp"
#include "cmpnet/synth.hpp"
#include "cmpnet/training.hpp"

namespace fs = std::filesystem;
using namespace cmpnet;

namespace {

constexpr const char* kToolVersion = "cmpnet 0.1.0";

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Records every resolved option of a subcommand next to its primary output.
class RunManifest {
 public:
  RunManifest(const CLI::App& sub) : sub_(sub), start_(utc_now()) {}

  void write(const fs::path& path) const {
    std::ostringstream out;
    out << "subcommand " << sub_.get_name() << '\n';
    out << "tool_version " << kToolVersion << '\n';
    out << "start " << start_ << '\n';
    out << "end " << utc_now() << '\n';
    for (const CLI::Option* opt : sub_.get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      std::string value;
      if (opt->count() > 0) {
        for (const std::string& r : opt->results()) value += (value.empty() ? "" : " ") + r;
      } else {
        value = opt->get_default_str();
      }
      out << "param " << opt->get_name() << '=' << value << '\n';
    }
    write_file_atomic(path, out.str());
  }

 private:
  const CLI::App& sub_;
  std::string start_;
};

fs::path sidecar(const fs::path& primary) {
  fs::path p = primary;
  p += ".run.txt";
  return p;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

struct GenLayoutOpts {
  std::int64_t die_width = 256;
  std::int64_t die_height = 256;
  std::int64_t block = 32;
  std::uint64_t seed = 0;
  std::string out;
};

struct RasterizeOpts {
  std::string layout;
  double pitch = 0.0;
  std::string out;
  std::size_t max_pixels = kDefaultPixelBudget;
};

struct SynthOpts {
  std::string raster;
  std::string out;
  OracleConfig oracle;
};

struct DatasetOpts {
  std::string input;
  std::string target;
  std::string out;
  DataSetConfig cfg;
};

struct TrainOpts {
  std::string dataset;
  std::string out;
  UNetConfig net;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  std::string optimizer = "adam";
  bool quiet = false;
};

struct PredictOpts {
  std::string checkpoint;
  std::string input;
  std::string out;
  bool full_frame = false;
  double expect_pitch = 0.0;
};

struct EvalOpts {
  std::string checkpoint;
  std::string dataset;
  std::string pred;
  std::string truth;
  std::size_t frame = 0;
  std::string out = "metrics.csv";
};

struct XsecOpts {
  std::string pred;
  std::string truth;
  std::size_t row = 0;
  std::string out;
};

void run_genlayout(const GenLayoutOpts& o, const RunManifest& manifest) {
  const RectLayout layout = random_layout(o.die_width, o.die_height, o.seed, o.block);
  ensure_parent(o.out);
  write_file_atomic(o.out, format_layout(layout));
  manifest.write(sidecar(o.out));
}

void run_rasterize(const RasterizeOpts& o, const RunManifest& manifest) {
  const RectLayout layout = read_layout(o.layout);
  const Grid2D grid = rasterize(layout, o.pitch, o.max_pixels);
  ensure_parent(o.out);
  write_grid(grid, fs::path(o.out), GridDtype::kU8);
  manifest.write(sidecar(o.out));
}

void run_synth(const SynthOpts& o, const RunManifest& manifest) {
  const Grid2D raster = read_grid(fs::path(o.raster));
  const Grid2D heights = generate(raster, o.oracle);
  ensure_parent(o.out);
  write_grid(heights, fs::path(o.out), GridDtype::kF32);
  write_file_atomic(fs::path(o.out).parent_path() / "oracle.txt", describe(o.oracle));
  manifest.write(sidecar(o.out));
}

void run_dataset(const DatasetOpts& o, const RunManifest& manifest) {
  const Grid2D raster = read_grid(fs::path(o.input));
  const Grid2D target = read_grid(fs::path(o.target));
  const DataSet data = build_dataset(raster, target, o.cfg);
  write_dataset(data, o.out);
  manifest.write(fs::path(o.out) / "run.txt");
  std::size_t test = 0;
  for (Split s : data.base_split) test += s == Split::kTest;
  std::cout << "base_frames=" << data.base_count << " test_base=" << test
            << " samples=" << data.samples.size() << '\n';
}

void run_train(TrainOpts o, const RunManifest& manifest) {
  const DataSet data = read_dataset(o.dataset);
  o.net.frame_size = static_cast<std::uint32_t>(data.config.frame_size);
  o.net.validate();
  o.train.optimizer = o.optimizer == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  ModelState initial{UNet<float>::init(o.net, o.init_seed), data.norm, std::nullopt, 0};
  TrainResult result = train(data, initial, o.train, [&](const EpochRecord& r) {
    if (!o.quiet) {
      std::fprintf(stderr, "epoch %zu train_loss %.6g test_loss %.6g\n", r.epoch, r.train_loss,
                   r.test_loss);
    }
  });
  fs::create_directories(o.out);
  write_file_atomic(fs::path(o.out) / "history.csv", history_csv(result.history));
  save_checkpoint(result.best, fs::path(o.out) / "best.cmpw");
  manifest.write(fs::path(o.out) / "run.txt");
  std::cout << "best_epoch=" << result.best_epoch
            << " best_test_loss=" << format_double(result.history[result.best_epoch].test_loss)
            << " epochs_run=" << result.history.size() << '\n';
}

void run_predict(const PredictOpts& o, const RunManifest& manifest) {
  const ModelState state = load_checkpoint(fs::path(o.checkpoint));
  const Grid2D raster = read_grid(fs::path(o.input));
  PredictOptions options;
  options.full_frame = o.full_frame;
  if (o.expect_pitch > 0.0) options.expected_pitch_nm = o.expect_pitch;
  const Prediction pred = timed_predict(state, raster, options);
  for (const std::string& w : pred.warnings) std::cerr << "warning: " << w << '\n';
  ensure_parent(o.out);
  write_grid(pred.heights_nm, fs::path(o.out), GridDtype::kF32);
  manifest.write(sidecar(o.out));
  std::cout << "t_inf=" << pred.seconds << "s\n";
}

// Splits a pair of full grids into aligned non-overlapping frames.
std::vector<Grid2D> frames_of(const Grid2D& grid, std::size_t frame) {
  if (frame == 0) return {grid};
  std::vector<Grid2D> out;
  for (FramePair& fp : tile(grid, grid, frame, frame)) out.push_back(std::move(fp.input));
  return out;
}

void run_eval(const EvalOpts& o, const RunManifest& manifest) {
  Metrics metrics;
  if (!o.dataset.empty()) {
    if (o.checkpoint.empty()) throw ValidationError("--dataset requires --checkpoint");
    const ModelState state = load_checkpoint(fs::path(o.checkpoint));
    const DataSet data = read_dataset(o.dataset);
    std::vector<Grid2D> preds, truths;
    double seconds = 0.0;
    for (std::size_t i : data.indices(Split::kTest)) {
      const Sample& s = data.samples[i];
      const Prediction p = timed_predict(state, s.input);
      seconds += p.seconds;
      preds.push_back(p.heights_nm);
      truths.push_back(denormalize(s.target, state.norm));
    }
    metrics = compute_metrics(preds, truths);
    metrics.seconds_per_sample = seconds / static_cast<double>(preds.size());
  } else {
    if (o.pred.empty() || o.truth.empty()) {
      throw ValidationError("eval needs --checkpoint with --dataset, or --pred with --truth");
    }
    const Grid2D pred = read_grid(fs::path(o.pred));
    const Grid2D truth = read_grid(fs::path(o.truth));
    if (pred.height != truth.height || pred.width != truth.width) {
      throw FormatError("prediction is " + std::to_string(pred.height) + "x" +
                        std::to_string(pred.width) + " but truth is " +
                        std::to_string(truth.height) + "x" + std::to_string(truth.width));
    }
    metrics = compute_metrics(frames_of(pred, o.frame), frames_of(truth, o.frame));
  }
  ensure_parent(o.out);
  write_file_atomic(o.out, metrics_csv(metrics));
  manifest.write(sidecar(o.out));
  std::cout << summary_line(metrics) << '\n';
}

void run_xsec(const XsecOpts& o, const RunManifest& manifest) {
  const Grid2D pred = read_grid(fs::path(o.pred));
  std::string csv;
  if (!o.truth.empty()) {
    const Grid2D truth = read_grid(fs::path(o.truth));
    csv = cross_section_csv(pred, o.row, &truth);
  } else {
    csv = cross_section_csv(pred, o.row);
  }
  ensure_parent(o.out);
  write_file_atomic(o.out, csv);
  manifest.write(sidecar(o.out));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layout-to-topography CMP modeling with a U-Net", "cmpnet"};
  app.set_version_flag("--version", kToolVersion);
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  GenLayoutOpts gl;
  auto* genlayout = app.add_subcommand("genlayout", "Write a seeded synthetic CMPRECT layout");
  genlayout->add_option("--die-width", gl.die_width, "Die width in nm")->check(CLI::PositiveNumber);
  genlayout->add_option("--die-height", gl.die_height, "Die height in nm")->check(CLI::PositiveNumber);
  genlayout->add_option("--block", gl.block, "Pattern block size in nm")->check(CLI::Range(4, 1 << 30));
  genlayout->add_option("--seed", gl.seed, "Pattern seed");
  genlayout->add_option("--out", gl.out, "Output CMPRECT file")->required();

  RasterizeOpts ra;
  auto* rast = app.add_subcommand("rasterize", "Rasterize a CMPRECT layout to a binary CMPG grid");
  rast->add_option("--layout", ra.layout, "Input CMPRECT file")->required();
  rast->add_option("--pitch", ra.pitch, "Pixel pitch in nm")->required()->check(CLI::PositiveNumber);
  rast->add_option("--out", ra.out, "Output CMPG grid")->required();
  rast->add_option("--max-pixels", ra.max_pixels, "Pixel budget for the raster")->check(CLI::PositiveNumber);

  SynthOpts sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic erosion topography for a raster");
  synth->add_option("--raster", sy.raster, "Input binary CMPG raster")->required();
  synth->add_option("--out", sy.out, "Output CMPG height map (nm)")->required();
  synth->add_option("--sigma", sy.oracle.planarization_sigma, "Planarization length in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--max-erosion", sy.oracle.max_erosion_nm, "Erosion at full copper density, nm")->check(CLI::PositiveNumber);
  synth->add_option("--dishing", sy.oracle.dishing_amp_nm, "Dishing depth on copper, nm")->check(CLI::NonNegativeNumber);
  synth->add_option("--noise", sy.oracle.noise_amp_nm, "Uniform noise half-width, nm")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sy.oracle.seed, "Noise seed");

  DatasetOpts ds;
  auto* dataset = app.add_subcommand("dataset", "Smooth, tile, split, normalize and augment");
  dataset->add_option("--input", ds.input, "Binary layout raster (CMPG)")->required();
  dataset->add_option("--target", ds.target, "Height map in nm (CMPG)")->required();
  dataset->add_option("--out", ds.out, "Output dataset directory")->required();
  dataset->add_option("--frame", ds.cfg.frame_size, "Subframe size in pixels")->check(CLI::PositiveNumber);
  dataset->add_option("--stride", ds.cfg.stride, "Subframe stride in pixels")->check(CLI::PositiveNumber);
  dataset->add_option("--test-fraction", ds.cfg.test_fraction, "Fraction of base frames held out")->check(CLI::Range(0.0, 1.0));
  dataset->add_option("--seed", ds.cfg.seed, "Split seed");
  dataset->add_option("--smooth-m", ds.cfg.smoothing.m, "Smoothing window rows (odd)")->check(CLI::PositiveNumber);
  dataset->add_option("--smooth-n", ds.cfg.smoothing.n, "Smoothing window columns (odd)")->check(CLI::PositiveNumber);

  TrainOpts tr;
  auto* trn = app.add_subcommand("train", "Train the U-Net; writes history.csv and best.cmpw");
  trn->add_option("--dataset", tr.dataset, "Dataset directory")->required();
  trn->add_option("--out", tr.out, "Output directory")->required();
  trn->add_option("--depth", tr.net.depth, "Pooling levels")->check(CLI::Range(1, 16));
  trn->add_option("--base", tr.net.base_channels, "Channels at the first level")->check(CLI::PositiveNumber);
  trn->add_option("--kernel", tr.net.kernel, "Convolution kernel size (odd)")->check(CLI::PositiveNumber);
  trn->add_option("--lr", tr.train.learning_rate, "Learning rate")->check(CLI::NonNegativeNumber);
  trn->add_option("--batch", tr.train.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  trn->add_option("--epochs", tr.train.max_epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  trn->add_option("--patience", tr.train.patience, "Epochs without test improvement before stopping")->check(CLI::PositiveNumber);
  trn->add_option("--beta1", tr.train.beta1, "Adam first-moment decay");
  trn->add_option("--beta2", tr.train.beta2, "Adam second-moment decay");
  trn->add_option("--eps", tr.train.epsilon, "Adam epsilon");
  trn->add_option("--seed", tr.train.seed, "Minibatch shuffle seed");
  trn->add_option("--init-seed", tr.init_seed, "Weight initialization seed");
  trn->add_option("--optimizer", tr.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  trn->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  PredictOpts pr;
  auto* pred = app.add_subcommand("predict", "Predict a height map (nm) for a binary raster");
  pred->add_option("--checkpoint", pr.checkpoint, "CMPW checkpoint")->required();
  pred->add_option("--input", pr.input, "Binary CMPG raster")->required();
  pred->add_option("--out", pr.out, "Output CMPG height map (nm)")->required();
  pred->add_flag("--full-frame", pr.full_frame, "One forward pass over the whole grid instead of stitched frames");
  pred->add_option("--expect-pitch", pr.expect_pitch, "Training pitch in nm; warn on mismatch (0 = no check)")->check(CLI::NonNegativeNumber);

  EvalOpts ev;
  auto* eval = app.add_subcommand("eval", "L1/RMSE in nm on a dataset test split or a grid pair");
  eval->add_option("--checkpoint", ev.checkpoint, "CMPW checkpoint (with --dataset)");
  eval->add_option("--dataset", ev.dataset, "Dataset directory; evaluates its test split");
  eval->add_option("--pred", ev.pred, "Predicted CMPG height map (with --truth)");
  eval->add_option("--truth", ev.truth, "Ground-truth CMPG height map");
  eval->add_option("--frame", ev.frame, "Score non-overlapping frames of this size (0 = whole grid)");
  eval->add_option("--out", ev.out, "Per-sample metrics CSV");

  XsecOpts xs;
  auto* xsec = app.add_subcommand("xsec", "Cross-section CSV of one row, optionally against truth");
  xsec->add_option("--pred", xs.pred, "Predicted CMPG height map")->required();
  xsec->add_option("--truth", xs.truth, "Ground-truth CMPG height map");
  xsec->add_option("--row", xs.row, "Row index")->required();
  xsec->add_option("--out", xs.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*genlayout) run_genlayout(gl, RunManifest(*genlayout));
    if (*rast) run_rasterize(ra, RunManifest(*rast));
    if (*synth) run_synth(sy, RunManifest(*synth));
    if (*dataset) run_dataset(ds, RunManifest(*dataset));
    if (*trn) run_train(tr, RunManifest(*trn));
    if (*pred) run_predict(pr, RunManifest(*pred));
    if (*eval) run_eval(ev, RunManifest(*eval));
    if (*xsec) run_xsec(xs, RunManifest(*xsec));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kDataFormat);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
