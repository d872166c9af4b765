#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fcn/rng.hpp"
#include "fcn/train.hpp"
#include "fcn/zoo.hpp"

namespace fs = std::filesystem;
using namespace fcn;

namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
  std::string net, data, out, config, init;
  uint64_t seed = 1;
  int epochs = 0, batch = 0;
  double lr = 0, momentum = 0, weight_decay = 0, sample_p = 0, lr_drop = 0;
  bool f64 = false;
};

template <typename T>
void run_train(const NetSpec& spec, const TrainConfig& cfg, const Dataset& tr,
               const Dataset* val, const std::string& run_dir) {
  Net<T> net(spec);
  std::ofstream csv(run_dir + "/metrics.csv");
  if (!csv) throw DataError("cannot write " + run_dir + "/metrics.csv");
  Checkpoint final = train(net, tr, val, cfg, &csv);
  csv.close();
  write_checkpoint(run_dir + "/final.fcnz", final);
}

int cmd_train(const TrainArgs& a, const CLI::App* sub) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  if (sub->count("--seed")) cfg.seed = a.seed;
  if (sub->count("--epochs")) cfg.epochs = a.epochs;
  if (sub->count("--batch")) cfg.batch_size = a.batch;
  if (sub->count("--lr")) cfg.lr = a.lr;
  if (sub->count("--momentum")) cfg.momentum = a.momentum;
  if (sub->count("--weight-decay")) cfg.weight_decay = a.weight_decay;
  if (sub->count("--sample-p")) cfg.sample_p = a.sample_p;
  if (sub->count("--lr-drop")) cfg.lr_drop_factor = a.lr_drop;
  if (sub->count("--init")) cfg.init_checkpoint = a.init;

  std::string run_dir = a.out;
  if (run_dir.empty()) {
    const char* root = std::getenv("FCN_RUN_DIR");
    run_dir = std::string(root ? root : "runs") + "/" +
              fs::path(a.net).stem().string();
  }
  fs::create_directories(run_dir);

  NetSpec spec = load_net(a.net);
  Dataset tr = load_dataset(a.data + "/train");
  Dataset val;
  const bool has_val = fs::is_directory(a.data + "/val");
  if (has_val) val = load_dataset(a.data + "/val");

  {
    std::ofstream echo(run_dir + "/config.txt");
    if (!echo) throw DataError("cannot write " + run_dir + "/config.txt");
    echo << serialize_train_config(cfg);
  }

  if (a.f64)
    run_train<double>(spec, cfg, tr, has_val ? &val : nullptr, run_dir);
  else
    run_train<float>(spec, cfg, tr, has_val ? &val : nullptr, run_dir);
  std::printf("wrote %s/final.fcnz and %s/metrics.csv\n", run_dir.c_str(),
              run_dir.c_str());
  return 0;
}

// ----------------------------------------------------------------- eval ---

void print_metrics(const MetricSet& m, bool csv) {
  if (csv) {
    std::printf("pixel_acc,mean_acc,mean_iu,fw_iu\n%s,%s,%s,%s\n",
                fmt_g(m.pixel_acc).c_str(), fmt_g(m.mean_acc).c_str(),
                fmt_g(m.mean_iu).c_str(), fmt_g(m.fw_iu).c_str());
  } else {
    std::printf("%-10s %s\n", "pixel_acc", fmt_g(m.pixel_acc).c_str());
    std::printf("%-10s %s\n", "mean_acc", fmt_g(m.mean_acc).c_str());
    std::printf("%-10s %s\n", "mean_iu", fmt_g(m.mean_iu).c_str());
    std::printf("%-10s %s\n", "fw_iu", fmt_g(m.fw_iu).c_str());
  }
}

int infer_classes(const std::vector<LabelMap>& maps) {
  int max_label = -1;
  for (const LabelMap& m : maps)
    for (uint8_t v : m.data)
      if (v != kIgnoreLabel) max_label = std::max(max_label, int(v));
  if (max_label < 0) throw DataError("every pixel is IGNORE, nothing to score");
  return max_label + 1;
}

// Chunk the image list across threads; confusion counts are integers, so the
// merged result is independent of the split.
template <typename Fn>
void parallel_accumulate(ConfusionMatrix& cm, size_t count, int threads, Fn fn) {
  const int t = std::max(1, threads);
  if (t == 1 || count < 2) {
    for (size_t i = 0; i < count; ++i) fn(cm, i);
    return;
  }
  std::vector<ConfusionMatrix> parts(size_t(t), ConfusionMatrix(cm.n_cl));
  std::vector<std::thread> pool;
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&, w] {
      for (size_t i = size_t(w); i < count; i += size_t(t)) fn(parts[size_t(w)], i);
    });
  for (auto& th : pool) th.join();
  for (const auto& p : parts) cm.add(p);
}

int cmd_eval(const std::string& pred_dir, const std::string& truth_dir,
             int classes, int threads, bool csv) {
  std::vector<std::string> pred_files = list_files(pred_dir, ".pgm");
  if (pred_files.empty()) throw DataError(pred_dir + ": no .pgm files");
  std::vector<LabelMap> preds, truths;
  for (const std::string& p : pred_files) {
    const std::string name = fs::path(p).filename().string();
    const std::string t = truth_dir + "/" + name;
    if (!fs::exists(t)) throw DataError("no ground truth for " + name);
    preds.push_back(read_pgm(p));
    truths.push_back(read_pgm(t));
  }
  if (classes <= 0) {
    classes = std::max(infer_classes(preds), infer_classes(truths));
  }
  ConfusionMatrix cm(classes);
  parallel_accumulate(cm, preds.size(), threads, [&](ConfusionMatrix& part, size_t i) {
    accumulate(part, preds[i], truths[i]);
  });
  print_metrics(compute_metrics(cm), csv);
  return 0;
}

// ------------------------------------------------------------------- rf ---

std::string extent_formula(const NodeSpec& n) {
  switch (n.kind) {
    case NodeKind::kConv:
    case NodeKind::kFc:
    case NodeKind::kPool: {
      std::ostringstream out;
      out << "floor((n + " << 2 * n.p << " - " << (n.k - 1) * n.dilation + 1
          << ")/" << n.s << ") + 1";
      return out.str();
    }
    case NodeKind::kDeconv: {
      std::ostringstream out;
      out << "(n - 1)*" << n.s << " + " << n.k << " - " << 2 * n.p;
      return out.str();
    }
    case NodeKind::kCrop:
      return "reference extent";
    case NodeKind::kFuse:
      return "min of inputs";
    default:
      return "n";
  }
}

int cmd_rf(const std::string& net_path, bool csv) {
  // Geometry only: never instantiates parameters, so the large stacks with
  // hundred-million-weight FC heads are fine to inspect.
  NetSpec spec = load_net(net_path);
  std::vector<GeomSummary> sums = node_summaries(spec);
  if (csv) {
    std::printf("node,kind,k,s,p,rf,stride,pad,out_extent\n");
    for (size_t i = 0; i < spec.nodes.size(); ++i) {
      const NodeSpec& n = spec.nodes[i];
      std::printf("%s,%s,%d,%d,%d,%s,%s,%s,\"%s\"\n", n.name.c_str(),
                  kind_name(n.kind).c_str(), n.k, n.s, n.p, sums[i].K.str().c_str(),
                  sums[i].S.str().c_str(), sums[i].P.str().c_str(),
                  extent_formula(n).c_str());
    }
  } else {
    std::printf("%-14s %-7s %4s %4s %4s  %8s %8s %8s  %s\n", "node", "kind", "k",
                "s", "p", "rf", "stride", "pad", "out extent");
    for (size_t i = 0; i < spec.nodes.size(); ++i) {
      const NodeSpec& n = spec.nodes[i];
      std::printf("%-14s %-7s %4d %4d %4d  %8s %8s %8s  %s\n", n.name.c_str(),
                  kind_name(n.kind).c_str(), n.k, n.s, n.p, sums[i].K.str().c_str(),
                  sums[i].S.str().c_str(), sums[i].P.str().c_str(),
                  extent_formula(n).c_str());
    }
    const std::vector<int> outs = spec.output_indices();
    const GeomSummary& last = sums[size_t(outs.back())];
    std::printf("receptive field %s, total stride %s\n", last.K.str().c_str(),
                last.S.str().c_str());
  }
  return 0;
}

// ------------------------------------------------------------- iu-bound ---

int cmd_iu_bound(const std::string& truth_dir, const std::string& factors,
                 bool majority, int threads, bool csv) {
  std::vector<std::string> files = list_files(truth_dir, ".pgm");
  if (files.empty()) throw DataError(truth_dir + ": no .pgm files");
  std::vector<LabelMap> truths;
  for (const std::string& f : files) truths.push_back(read_pgm(f));
  const int classes = infer_classes(truths);

  std::vector<int> fs_list;
  std::istringstream in(factors);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t pos = 0;
      int f = std::stoi(item, &pos);
      if (pos != item.size() || f < 1) throw std::invalid_argument("");
      fs_list.push_back(f);
    } catch (const std::exception&) {
      throw ParseError("bad factor '" + item + "'");
    }
  }
  if (fs_list.empty()) throw ParseError("no factors given");

  if (csv)
    std::printf("factor,mean_iu\n");
  else
    std::printf("%-8s %s\n", "factor", "mean_iu");
  for (int f : fs_list) {
    ConfusionMatrix cm(classes);
    parallel_accumulate(cm, truths.size(), threads,
                        [&](ConfusionMatrix& part, size_t i) {
                          accumulate_iu_bound(part, truths[i], f, majority);
                        });
    const double miu = compute_metrics(cm).mean_iu;
    if (csv)
      std::printf("%d,%s\n", f, fmt_g(miu).c_str());
    else
      std::printf("%-8d %s\n", f, fmt_g(miu).c_str());
  }
  return 0;
}

// ------------------------------------------------------------- gen-data ---

int cmd_gen_data(const std::string& out, int n, int val_n, int height, int width,
                 int classes, uint64_t seed, int threads) {
  if (n < 1) throw DataError("need at least one training image");
  if (val_n < 0) throw DataError("val-n must be nonnegative");
  const int total = n + val_n;
  std::vector<SynthSample> samples;
  samples.resize(size_t(total));
  const int t = std::max(1, threads);
  if (t == 1) {
    for (int i = 0; i < total; ++i)
      samples[size_t(i)] = gen_synth_sample(i, height, width, classes, seed);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < t; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < total; i += t)
          samples[size_t(i)] = gen_synth_sample(i, height, width, classes, seed);
      });
    for (auto& th : pool) th.join();
  }

  auto write_split = [&](const std::string& split, int begin, int end) {
    fs::create_directories(out + "/" + split + "/images");
    fs::create_directories(out + "/" + split + "/labels");
    for (int i = begin; i < end; ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "%04d", i - begin);
      write_tensor(out + "/" + split + "/images/" + name + ".fcnt",
                   samples[size_t(i)].image);
      write_pgm(out + "/" + split + "/labels/" + name + ".pgm",
                samples[size_t(i)].labels);
    }
  };
  write_split("train", 0, n);
  if (val_n > 0) write_split("val", n, total);
  std::printf("wrote %d train and %d val images under %s\n", n, val_n,
              out.c_str());
  return 0;
}

// ---------------------------------------------------------- stitch-check ---

template <typename T>
int run_stitch_check(const NetSpec& loaded, int f_arg, uint64_t seed, double tol) {
  NetSpec spec = convolutionalize(loaded);  // identity when there are no fc rows
  Net<T> net(spec);
  net.init_params(seed);

  const std::vector<int> outs = spec.output_indices();
  if (outs.size() != 1) throw DataError("stitching needs a single-output chain");
  GeomSummary sum = net.summary_to(spec.nodes[size_t(outs[0])].name);
  if (!sum.S.is_integer() || !sum.K.is_integer())
    throw DataError("net has fractional stride " + sum.S.str() +
                    "; stitching applies to downsampling chains");
  const int stride = int(sum.S.as_int());
  const int f = f_arg > 0 ? f_arg : stride;
  if (f != stride)
    throw DataError("stitch factor " + std::to_string(f) +
                    " does not match the net stride " + std::to_string(stride));

  // Input sized for a 4-cell coarse output; contents from a fixed stream.
  const int extent = int(sum.K.as_int()) + 3 * stride;
  TensorT<T> x(1, spec.nodes[size_t(spec.input_index())].out_ch, extent, extent);
  Rng rng(seed, "stitch.input");
  for (T& v : x.data) v = T(rng.normal());

  TensorT<T> stitched = shift_and_stitch_reference(net, x, f);
  Net<T> dense = equivalent_dense_net(net);
  TensorT<T> direct = dense.forward(x);
  if (!stitched.same_shape(direct))
    throw DataError("dense output " + direct.shape_str() +
                    " does not match stitched " + stitched.shape_str());
  double md = 0;
  for (size_t i = 0; i < stitched.size(); ++i)
    md = std::max(md, double(std::abs(stitched.data[i] - direct.data[i])));
  std::printf("stitch factor %d, output %s, max |stitched - dense| = %g\n", f,
              stitched.shape_str().c_str(), md);
  if (md > tol) {
    std::fprintf(stderr, "difference exceeds %g\n", tol);
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense prediction nets: train, evaluate, inspect"};
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "minibatch SGD on a dataset directory");
  tr->add_option("--net", ta.net, "net description file")->required();
  tr->add_option("--data", ta.data, "dataset root with train/ and optional val/")
      ->required();
  tr->add_option("--out", ta.out, "run directory (default <FCN_RUN_DIR|runs>/<net>)");
  tr->add_option("--config", ta.config, "training config file (key = value)");
  tr->add_option("--seed", ta.seed, "master RNG seed");
  tr->add_option("--epochs", ta.epochs, "training epochs");
  tr->add_option("--batch", ta.batch, "loss pixels per step, in images");
  tr->add_option("--lr", ta.lr, "learning rate");
  tr->add_option("--momentum", ta.momentum, "SGD momentum");
  tr->add_option("--weight-decay", ta.weight_decay, "L2 penalty on weights");
  tr->add_option("--sample-p", ta.sample_p, "per-pixel loss sampling probability");
  tr->add_option("--lr-drop", ta.lr_drop, "divide lr by this factor");
  tr->add_option("--init", ta.init, "checkpoint to fine-tune from");
  tr->add_flag("--f64", ta.f64, "train in double precision");

  std::string ev_pred, ev_truth;
  int ev_classes = 0, ev_threads = 1;
  bool ev_csv = false;
  CLI::App* ev = app.add_subcommand("eval", "score prediction PGMs against truth PGMs");
  ev->add_option("pred_dir", ev_pred, "directory of predicted label maps")->required();
  ev->add_option("truth_dir", ev_truth, "directory of ground-truth label maps")
      ->required();
  ev->add_option("--classes", ev_classes, "class count (default: inferred)");
  ev->add_option("--threads", ev_threads, "worker threads");
  ev->add_flag("--csv", ev_csv, "machine-readable output");

  std::string rf_net;
  bool rf_csv = false;
  CLI::App* rf = app.add_subcommand("rf", "receptive field and stride table");
  rf->add_option("net", rf_net, "net description file")->required();
  rf->add_flag("--csv", rf_csv, "machine-readable output");

  std::string ib_truth, ib_factors = "1,2,4,8,16,32";
  bool ib_majority = false, ib_csv = false;
  int ib_threads = 1;
  CLI::App* ib = app.add_subcommand(
      "iu-bound", "best mean IU achievable at coarse output strides");
  ib->add_option("truth_dir", ib_truth, "directory of ground-truth label maps")
      ->required();
  ib->add_option("--factors", ib_factors, "comma-separated output strides");
  ib->add_flag("--majority", ib_majority, "per-block majority vote instead of top-left");
  ib->add_option("--threads", ib_threads, "worker threads");
  ib->add_flag("--csv", ib_csv, "machine-readable output");

  std::string gd_out;
  int gd_n = 100, gd_val = 0, gd_h = 40, gd_w = 40, gd_classes = 5, gd_threads = 1;
  uint64_t gd_seed = 1;
  CLI::App* gd = app.add_subcommand("gen-data", "write a synthetic shape dataset");
  gd->add_option("--out", gd_out, "dataset root to create")->required();
  gd->add_option("--n", gd_n, "training images");
  gd->add_option("--val-n", gd_val, "validation images");
  gd->add_option("--height", gd_h, "image height");
  gd->add_option("--width", gd_w, "image width");
  gd->add_option("--classes", gd_classes, "class count including background");
  gd->add_option("--seed", gd_seed, "master RNG seed");
  gd->add_option("--threads", gd_threads, "worker threads");

  std::string sc_net;
  int sc_f = 0;
  uint64_t sc_seed = 1;
  bool sc_f64 = false;
  CLI::App* sc = app.add_subcommand(
      "stitch-check", "compare shift-and-stitch against the destrided net");
  sc->add_option("net", sc_net, "net description file")->required();
  sc->add_option("factor", sc_f, "stitch factor (default: the net's stride)");
  sc->add_option("--seed", sc_seed, "master RNG seed");
  sc->add_flag("--f64", sc_f64, "check in double precision");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (tr->parsed()) return cmd_train(ta, tr);
    if (ev->parsed()) return cmd_eval(ev_pred, ev_truth, ev_classes, ev_threads, ev_csv);
    if (rf->parsed()) return cmd_rf(rf_net, rf_csv);
    if (ib->parsed())
      return cmd_iu_bound(ib_truth, ib_factors, ib_majority, ib_threads, ib_csv);
    if (gd->parsed())
      return cmd_gen_data(gd_out, gd_n, gd_val, gd_h, gd_w, gd_classes, gd_seed,
                          gd_threads);
    if (sc->parsed()) {
      NetSpec spec = load_net(sc_net);
      return sc_f64 ? run_stitch_check<double>(spec, sc_f, sc_seed, 1e-5)
                    : run_stitch_check<float>(spec, sc_f, sc_seed, 1e-5);
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
