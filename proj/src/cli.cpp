// SPDX-License-Identifier: Apache-2.0
#include "gridattn/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridattn/error.hpp"
#include "gridattn/grid.hpp"
#include "gridattn/image.hpp"
#include "gridattn/manifest.hpp"
#include "gridattn/metrics.hpp"
#include "gridattn/model.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/saliency.hpp"
#include "gridattn/synth.hpp"
#include "gridattn/train.hpp"

namespace gridattn::cli {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<PoolMode> parse_modes(const std::string& text) {
  std::vector<PoolMode> modes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) modes.push_back(ops::parse_pool_mode(item));
  return modes;
}

// ---- extract ---------------------------------------------------------------

struct ExtractArgs {
  std::string image;
  std::string out;
  std::size_t patch = 224;
  std::size_t depth = 512;
  std::uint64_t seed = 0;
  int white = kDefaultWhiteThreshold;
  bool lowres = false;
  float mpp = 2.0f;
  unsigned threads = 1;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const RgbImage img = read_ppm(a.image);
  ExtractOptions opt;
  opt.patch_size = a.patch;
  opt.depth = a.depth;
  opt.seed = a.seed;
  opt.white_threshold = a.white;
  opt.microns_per_pixel = a.mpp;
  opt.threads = a.threads;
  opt.source_id = std::filesystem::path(a.image).stem().string();
  const GridFeatureMap g = extract_grid(img, opt);
  write_gfm(g, a.out);
  out << a.out << '\t' << g.rows() << 'x' << g.cols() << 'x' << g.depth() << '\n';
  if (a.lowres) {
    opt.microns_per_pixel = a.mpp * 2.0f;
    const GridFeatureMap low = extract_grid(downscale2x(img), opt);
    const std::filesystem::path p(a.out);
    const auto low_path = p.parent_path() / (p.stem().string() + "_" + std::string(kLowResTag) + p.extension().string());
    write_gfm(low, low_path);
    out << low_path.string() << '\t' << low.rows() << 'x' << low.cols() << 'x' << low.depth() << '\n';
  }
  return kExitOk;
}

// ---- pack --------------------------------------------------------------------

struct PackArgs {
  std::string csv;
  std::string out;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint32_t patch = 224;
  float mpp = 2.0f;
};

int cmd_pack(const PackArgs& a, std::ostream& out) {
  const GridFeatureMap g = import_features(a.csv, a.rows, a.cols, GridMeta{a.patch, a.mpp, {}});
  write_gfm(g, a.out);
  out << a.out << '\t' << g.rows() << 'x' << g.cols() << 'x' << g.depth() << '\n';
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string checkpoint;
  std::string report;
  std::string task;
  std::size_t epochs = 35;
  std::size_t batch = 64;
  double lr = 0.0;  // 0 = task default
  std::string optimizer;
  double decay = -1.0;
  std::size_t decay_epoch = 20;
  double weight_decay = 0.0;
  bool deterministic = false;
  std::string modes = "max,min";
  std::size_t heads = 64;
  std::size_t kernel = 3;
  std::size_t pool = 3;
  std::string activation = "relu";
  std::uint64_t seed = 0;
  std::size_t folds = 4;
  std::size_t inits = 2;
  bool no_augment = false;
  bool no_lowres = false;
  unsigned threads = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const std::filesystem::path manifest_path(a.manifest);
  DatasetManifest m = read_manifest(manifest_path);
  if (!a.task.empty()) {
    const TaskKind requested = parse_task(a.task);
    if (requested != m.task) {
      throw Error(ErrorCode::kInvalidConfig, "--task " + a.task + " does not match the manifest's " +
                                                 std::string(to_string(m.task)) + " labels");
    }
  }
  TrainConfig cfg = TrainConfig::for_task(m.task);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  if (a.lr > 0.0) cfg.lr = a.lr;
  if (!a.optimizer.empty()) {
    if (a.optimizer == "sgd") cfg.optimizer = OptimizerKind::kSgd;
    else if (a.optimizer == "adam") cfg.optimizer = OptimizerKind::kAdam;
    else throw Error(ErrorCode::kInvalidConfig, "unknown optimizer '" + a.optimizer + "'");
  }
  if (a.decay >= 0.0) cfg.lr_decay_factor = a.decay;
  cfg.lr_decay_epoch = a.decay_epoch;
  cfg.weight_decay = a.weight_decay;
  cfg.seed = a.seed;
  cfg.folds = a.folds;
  cfg.weight_inits = a.inits;
  cfg.include_lowres = !a.no_lowres;
  cfg.threads = a.threads;
  validate(cfg);
  if (cfg.folds == 1) throw Error(ErrorCode::kInvalidConfig, "--folds must be 0 (no cross-validation) or >= 2");

  const auto base_dir = manifest_path.parent_path();
  const auto first = std::find_if(m.records.begin(), m.records.end(),
                                  [](const SampleRecord& r) { return is_training_split(r.split); });
  if (first == m.records.end()) throw Error(ErrorCode::kInvalidConfig, "manifest has no training records");
  std::filesystem::path first_path(first->grid_path);
  if (first_path.is_relative()) first_path = base_dir / first_path;

  AttentionConfig attn;
  attn.depth = read_gfm(first_path).depth();
  attn.heads = a.heads;
  attn.kernel = a.kernel;
  attn.pool_window = a.pool;
  attn.modes = parse_modes(a.modes);
  attn.activation = ops::parse_activation(a.activation);
  attn.task = m.task;
  validate(attn);

  if (!a.no_augment) m = expand_manifest(m);

  const auto started = std::chrono::steady_clock::now();
  CrossValidation cv;
  const bool run_cv = cfg.folds >= 2;
  if (run_cv) {
    cv = cross_validate(m, base_dir, cfg, attn);
    for (const FoldResult& r : cv.runs) {
      out << "fold " << r.fold << " init " << r.init << ' ' << cv.metric << ' ' << num(r.metric) << '\n';
    }
    out << cv.metric << " mean " << num(cv.mean) << " std " << num(cv.stddev) << '\n';
  }
  const TrainReport final_run = train(m, base_dir, cfg, attn, derive_seed(cfg.seed, 0));
  write_checkpoint(final_run.params, a.checkpoint);
  write_report(a.report, format_report(cfg, m.task, run_cv ? &cv : nullptr, &final_run));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  err << "trained in " << seconds << " s\n";
  return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> positional;
  std::string split = "test";
  std::vector<std::string> compare;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.compare.empty()) {
    const auto lhs = parse_report_runs(read_text(a.compare[0]));
    const auto rhs = parse_report_runs(read_text(a.compare[1]));
    std::vector<double> x, y;
    for (const FoldResult& l : lhs) {
      for (const FoldResult& r : rhs) {
        if (l.fold == r.fold && l.init == r.init) {
          x.push_back(l.metric);
          y.push_back(r.metric);
        }
      }
    }
    if (x.empty()) throw Error(ErrorCode::kInvalidConfig, "reports share no (fold, init) runs to pair");
    const auto w = metrics::wilcoxon_signed_rank(x, y);
    out << "wilcoxon\tpairs\t" << x.size() << "\tstatistic\t" << num(w.statistic) << "\tp\t" << num(w.p_value)
        << "\texact\t" << (w.exact ? 1 : 0) << '\n';
    return kExitOk;
  }
  if (a.positional.size() != 3) {
    throw Error(ErrorCode::kInvalidConfig, "eval needs MANIFEST CHECKPOINT REPORT (or --compare A B)");
  }
  const std::filesystem::path manifest_path(a.positional[0]);
  const DatasetManifest m = read_manifest(manifest_path);
  const ModelParams params = read_checkpoint(a.positional[1]);
  if (params.config().task != m.task) {
    throw Error(ErrorCode::kInvalidConfig, "checkpoint is a " + std::string(to_string(params.config().task)) +
                                               " model but the manifest holds " + std::string(to_string(m.task)) +
                                               " labels");
  }
  const std::string split = a.split;
  const auto samples = load_samples(m, manifest_path.parent_path(), [&split](const SampleRecord& r) {
    return split == "all" || r.split == split;
  });
  if (samples.empty()) throw Error(ErrorCode::kInvalidConfig, "no records with split '" + split + "'");
  const Evaluation e = evaluate(params, samples);
  std::ostringstream report;
  report << "metric\t" << e.metric << '\t' << num(e.value) << '\n';
  for (std::size_t i = 0; i < e.scores.size(); ++i) {
    report << "sample\t" << e.ids[i] << '\t' << num(e.scores[i]) << '\t' << num(e.targets[i]) << '\n';
  }
  write_report(a.positional[2], report.str());
  out << e.metric << ' ' << num(e.value) << '\n';
  return kExitOk;
}

// ---- viz ---------------------------------------------------------------------

struct VizArgs {
  std::string checkpoint;
  std::string grid;
  std::string out;
  std::string mode = "max";
  std::size_t channel = 0;
  bool gradcam = false;
  int target_class = -1;
  std::size_t scale = 0;  // 0 = grid patch size
  bool color = false;
};

int cmd_viz(const VizArgs& a, std::ostream& out) {
  const ModelParams params = read_checkpoint(a.checkpoint);
  const GridFeatureMap g = read_gfm(a.grid);
  const std::size_t scale = a.scale > 0 ? a.scale : g.patch_size_px;
  HeatMap map;
  if (a.gradcam) {
    std::optional<int> cls;
    if (a.target_class >= 0) cls = a.target_class;
    map = grad_cam(params, to_tensor(g), cls, scale);
  } else {
    if (a.channel >= params.config().heads) {
      throw Error(ErrorCode::kOutOfRange, "--channel " + std::to_string(a.channel) + " out of range (H=" +
                                              std::to_string(params.config().heads) + ")");
    }
    map = export_attention(forward(g, params), ops::parse_pool_mode(a.mode), a.channel, scale);
  }
  if (a.color) {
    write_color_ppm(map, a.out);
  } else {
    write_pgm(map, a.out);
  }
  out << a.out << '\t' << map.rows << 'x' << map.cols << '\n';
  return kExitOk;
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::size_t n_train = 200;
  std::size_t n_test = 100;
  synth::SynthConfig cfg;
  std::string task = "classification";
};

int cmd_synth(SynthArgs a, std::ostream& out) {
  a.cfg.task = parse_task(a.task);
  const auto ds = synth::gen_dataset(a.cfg, a.n_train, a.n_test);
  synth::write_dataset(ds, a.cfg.task, a.out_dir);
  out << a.out_dir << '\t' << ds.train.size() << " train\t" << ds.test.size() << " test\n";
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kState:
    case ErrorCode::kNonFinite:
      return kExitInternal;
    default:
      return kExitUsage;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-based classification of grid-compressed gigapixel images", "gridattn"};
  app.option_defaults()->always_capture_default();
  // -h stays free for the head-count flag; subcommands inherit this help flag.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Tile a PPM image and pack toy patch features into a GFM grid");
  extract->add_option("image", ex.image, "Input binary PPM (P6)")->required();
  extract->add_option("out", ex.out, "Output GFM file")->required();
  extract->add_option("--patch", ex.patch, "Patch size p in pixels");
  extract->add_option("--k", ex.depth, "Feature depth K");
  extract->add_option("--seed", ex.seed, "Seed of the feature projection");
  extract->add_option("--white-thresh", ex.white, "Channel-mean threshold below which a pixel is tissue");
  extract->add_flag("--lowres", ex.lowres, "Also write a 2x-downscaled grid next to OUT with suffix _4um");
  extract->add_option("--mpp", ex.mpp, "Microns per pixel recorded in the grid");
  extract->add_option("--threads", ex.threads, "Worker threads for patch features");

  PackArgs pk;
  auto* pack = app.add_subcommand("pack", "Pack an external feature table (i,j,f1..fK per line) into a GFM grid");
  pack->add_option("csv", pk.csv, "Comma-separated feature table")->required();
  pack->add_option("out", pk.out, "Output GFM file")->required();
  pack->add_option("--rows", pk.rows, "Grid rows M'")->required();
  pack->add_option("--cols", pk.cols, "Grid columns N'")->required();
  pack->add_option("--patch", pk.patch, "Patch size p in pixels");
  pack->add_option("--mpp", pk.mpp, "Microns per pixel");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Cross-validate and train the attention classifier");
  trn->add_option("manifest", tr.manifest, "Dataset manifest (TSV)")->required();
  trn->add_option("checkpoint", tr.checkpoint, "Output checkpoint of the model trained on all training records")
      ->required();
  trn->add_option("report", tr.report, "Output TSV report")->required();
  trn->add_option("--task", tr.task, "classification|regression; empty takes the manifest task (must match its labels)");
  trn->add_option("--epochs", tr.epochs, "Training epochs");
  trn->add_option("--batch", tr.batch, "Samples per optimizer step");
  trn->add_option("--lr", tr.lr,
                  "Initial learning rate; 0 selects the task default (classification: SGD 0.001, regression: Adam "
                  "0.0001)");
  trn->add_option("--optimizer", tr.optimizer, "sgd|adam (default: sgd for classification, adam for regression)");
  trn->add_option("--decay", tr.decay,
                  "Learning-rate decay factor; negative selects the task default (0.1 classification, 1 regression)");
  trn->add_option("--decay-epoch", tr.decay_epoch, "Epoch interval of the learning-rate decay");
  trn->add_option("--weight-decay", tr.weight_decay, "L2 coefficient added to the gradient (0 = plain loss)");
  trn->add_option("--modes", tr.modes, "Comma-separated pooling modes from max,min,avg");
  trn->add_option("--h", tr.heads, "Attention channels H (must be < K)");
  trn->add_option("--n", tr.kernel, "Convolution tap width n (odd)");
  trn->add_option("--pool", tr.pool, "Pooling window (odd)");
  trn->add_option("--activation", tr.activation, "relu|tanh");
  trn->add_option("--seed", tr.seed, "Seed for folds, shuffling and weights");
  trn->add_option("--folds", tr.folds, "Cross-validation folds (0 disables cross-validation)");
  trn->add_option("--inits", tr.inits, "Random weight initialisations per fold");
  trn->add_flag("--no-augment", tr.no_augment, "Skip the nine grid augmentations of each training record");
  trn->add_flag("--no-lowres", tr.no_lowres, "Leave 4um records out of training");
  trn->add_option("--threads", tr.threads, "Worker threads per batch (results do not depend on it)");
  trn->add_flag("--deterministic", tr.deterministic,
                "Ordered reductions; always in effect, so output is bit-identical for a given seed");

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint (AUC or Spearman) or compare two train reports");
  evl->add_option("args", ev.positional, "MANIFEST CHECKPOINT REPORT");
  evl->add_option("--split", ev.split, "Split to evaluate (train, val, test, a fold id, or all)");
  evl->add_option("--compare", ev.compare, "Two train reports; runs paired Wilcoxon on matching (fold, init) rows")
      ->expected(2);

  VizArgs vz;
  auto* viz = app.add_subcommand("viz", "Write an attention map or Grad-CAM saliency as PGM (or colour PPM)");
  viz->add_option("checkpoint", vz.checkpoint, "Model checkpoint")->required();
  viz->add_option("grid", vz.grid, "GFM grid")->required();
  viz->add_option("out", vz.out, "Output image")->required();
  viz->add_option("--mode", vz.mode, "Attention mode max|min|avg");
  viz->add_option("--channel", vz.channel, "Attention channel (0..H-1)");
  viz->add_flag("--gradcam", vz.gradcam, "Grad-CAM saliency over the convolution output instead of attention");
  viz->add_option("--class", vz.target_class, "Grad-CAM target class (-1 = predicted class)");
  viz->add_option("--scale", vz.scale, "Upscale factor (0 = the grid's patch size)");
  viz->add_flag("--color", vz.color, "Write a blue-to-red PPM instead of a PGM");

  SynthArgs sy;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic multiple-instance benchmark");
  syn->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  syn->add_option("--n-train", sy.n_train, "Training bags");
  syn->add_option("--n-test", sy.n_test, "Test bags");
  syn->add_option("--k", sy.cfg.depth, "Feature depth");
  syn->add_option("--min-size", sy.cfg.min_size, "Smallest grid side");
  syn->add_option("--max-size", sy.cfg.max_size, "Largest grid side");
  syn->add_option("--signal-min", sy.cfg.signal_min, "Fewest signal cells in a positive bag");
  syn->add_option("--signal-max", sy.cfg.signal_max, "Most signal cells in a positive bag");
  syn->add_option("--mu", sy.cfg.mu, "Shift added to the first four features of signal cells (0 = control)");
  syn->add_option("--task", sy.task, "classification|regression");
  syn->add_option("--max-fraction", sy.cfg.regression_max_fraction, "Largest signal fraction of a regression bag");
  syn->add_option("--patch", sy.cfg.patch_size_px, "Patch size recorded in the grids");
  syn->add_option("--seed", sy.cfg.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(ex, out);
    if (*pack) return cmd_pack(pk, out);
    if (*trn) return cmd_train(tr, out, err);
    if (*evl) return cmd_eval(ev, out);
    if (*viz) return cmd_viz(vz, out);
    if (*syn) return cmd_synth(sy, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace gridattn::cli
