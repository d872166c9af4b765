#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "fcn/loss.hpp"
#include "fcn/optim.hpp"
#include "fcn/rng.hpp"
#include "fcn/train.hpp"

namespace fcn {

namespace {

std::string stem_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key);
  }
}

long long parse_ll(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key);
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string fmt_g(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  for (const std::string& img_path : list_files(dir + "/images", ".fcnt")) {
    const std::string stem = stem_of(img_path);
    const std::string lab_path = dir + "/labels/" + stem + ".pgm";
    Tensor img = read_tensor(img_path);
    if (img.n() != 1)
      throw DataError(img_path + ": expected a single image, got batch of " +
                      std::to_string(img.n()));
    LabelMap lab = read_pgm(lab_path);
    if (lab.h != img.h() || lab.w != img.w())
      throw DataError(stem + ": label map is " + std::to_string(lab.h) + "x" +
                      std::to_string(lab.w) + " but image is " +
                      std::to_string(img.h()) + "x" + std::to_string(img.w()));
    if (!ds.images.empty() && img.c() != ds.images[0].c())
      throw DataError(stem + ": channel count differs from the rest of the set");
    ds.names.push_back(stem);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(std::move(lab));
  }
  if (ds.images.empty()) throw DataError(dir + ": no images found");
  return ds;
}

static void apply_config_kv(TrainConfig& c, const std::string& key,
                            const std::string& value) {
  if (key == "seed") {
    long long v = parse_ll(value, key);
    if (v < 0) throw ParseError("seed must be nonnegative");
    c.seed = uint64_t(v);
  } else if (key == "lr") {
    c.lr = parse_double(value, key);
  } else if (key == "momentum") {
    c.momentum = parse_double(value, key);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_double(value, key);
  } else if (key == "batch_size") {
    c.batch_size = int(parse_ll(value, key));
  } else if (key == "epochs") {
    c.epochs = int(parse_ll(value, key));
  } else if (key == "sample_p") {
    c.sample_p = parse_double(value, key);
  } else if (key == "lr_drop_factor") {
    c.lr_drop_factor = parse_double(value, key);
  } else if (key == "init_checkpoint") {
    c.init_checkpoint = value;
  } else if (key == "class_weights") {
    c.class_weights.clear();
    if (!value.empty())
      for (const std::string& item : split(value, ','))
        c.class_weights.push_back(parse_double(item, key));
  } else if (key == "heads") {
    c.heads.clear();
    if (!value.empty())
      for (const std::string& item : split(value, ',')) {
        size_t colon = item.rfind(':');
        if (colon == std::string::npos)
          throw ParseError("heads entries are name:weight, got '" + item + "'");
        c.heads.emplace_back(trim(item.substr(0, colon)),
                             parse_double(trim(item.substr(colon + 1)), key));
      }
  } else {
    throw ParseError("unknown config key '" + key + "'");
  }
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(ln) + ": expected key = value");
    try {
      apply_config_kv(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(ln) + ": " + e.what());
    }
  }
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_train_config(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string serialize_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << "\n";
  out << "lr = " << fmt_g(c.lr, "%.17g") << "\n";
  out << "momentum = " << fmt_g(c.momentum, "%.17g") << "\n";
  out << "weight_decay = " << fmt_g(c.weight_decay, "%.17g") << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "sample_p = " << fmt_g(c.sample_p, "%.17g") << "\n";
  out << "lr_drop_factor = " << fmt_g(c.lr_drop_factor, "%.17g") << "\n";
  out << "init_checkpoint = " << c.init_checkpoint << "\n";
  out << "class_weights = ";
  for (size_t i = 0; i < c.class_weights.size(); ++i)
    out << (i ? "," : "") << fmt_g(c.class_weights[i], "%.17g");
  out << "\n";
  out << "heads = ";
  for (size_t i = 0; i < c.heads.size(); ++i)
    out << (i ? "," : "") << c.heads[i].first << ":"
        << fmt_g(c.heads[i].second, "%.17g");
  out << "\n";
  return out.str();
}

namespace {

void check_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw DataError("batch_size must be at least 1");
  if (cfg.epochs < 0) throw DataError("epochs must be nonnegative");
  if (!(cfg.sample_p > 0.0 && cfg.sample_p <= 1.0))
    throw DataError("sample_p must be in (0, 1]");
  if (!(cfg.lr_drop_factor > 0.0)) throw DataError("lr_drop_factor must be positive");
  if (cfg.lr < 0.0) throw DataError("lr must be nonnegative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw DataError("momentum must be in [0, 1)");
  if (cfg.weight_decay < 0.0) throw DataError("weight_decay must be nonnegative");
}

// Pad images with zeros and labels with IGNORE up to the chunk's max extent.
template <typename T>
void assemble_batch(const Dataset& ds, const std::vector<int>& order, size_t begin,
                    size_t end, TensorT<T>* x, std::vector<LabelMap>* labels) {
  int mh = 0, mw = 0;
  const int ch = ds.images[size_t(order[begin])].c();
  for (size_t j = begin; j < end; ++j) {
    const Tensor& img = ds.images[size_t(order[j])];
    mh = std::max(mh, img.h());
    mw = std::max(mw, img.w());
  }
  *x = TensorT<T>(int(end - begin), ch, mh, mw);
  labels->clear();
  for (size_t j = begin; j < end; ++j) {
    const int b = int(j - begin);
    const Tensor& img = ds.images[size_t(order[j])];
    const LabelMap& lab = ds.labels[size_t(order[j])];
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < img.h(); ++y)
        for (int xx = 0; xx < img.w(); ++xx)
          x->at(b, c, y, xx) = T(img.at(0, c, y, xx));
    LabelMap padded(mh, mw);
    std::fill(padded.data.begin(), padded.data.end(), kIgnoreLabel);
    for (int y = 0; y < lab.h; ++y)
      for (int xx = 0; xx < lab.w; ++xx) padded.at(y, xx) = lab.at(y, xx);
    labels->push_back(std::move(padded));
  }
}

}  // namespace

template <typename T>
Checkpoint train(Net<T>& net, const Dataset& train_set, const Dataset* val_set,
                 const TrainConfig& cfg, std::ostream* csv) {
  check_config(cfg);
  if (train_set.size() == 0) throw DataError("training set is empty");

  // Resolve head names against the net's output nodes.
  const NetSpec& spec = net.spec();
  std::vector<int> out_idx = spec.output_indices();
  std::vector<std::string> out_names;
  for (int i : out_idx) out_names.push_back(spec.nodes[size_t(i)].name);
  std::vector<std::pair<size_t, double>> head_pos;  // position in outs, weight
  if (cfg.heads.empty()) {
    for (size_t i = 0; i < out_names.size(); ++i) head_pos.emplace_back(i, 1.0);
  } else {
    for (const auto& [name, weight] : cfg.heads) {
      size_t pos = 0;
      while (pos < out_names.size() && out_names[pos] != name) ++pos;
      if (pos == out_names.size())
        throw DataError("head '" + name + "' is not an output node");
      for (const auto& seen : head_pos)
        if (seen.first == pos) throw DataError("head '" + name + "' listed twice");
      head_pos.emplace_back(pos, weight);
    }
  }

  net.init_params(cfg.seed);
  if (!cfg.init_checkpoint.empty())
    net.load(read_checkpoint(cfg.init_checkpoint), true);

  OptimStateT<T> state;
  state.lr = cfg.lr / cfg.lr_drop_factor;
  state.momentum = cfg.momentum;
  state.weight_decay = cfg.weight_decay;

  const int ipb =
      int(std::ceil(double(cfg.batch_size) / cfg.sample_p - 1e-9));
  const std::vector<double>* cw =
      cfg.class_weights.empty() ? nullptr : &cfg.class_weights;

  if (csv) *csv << "iteration,epoch,loss,pixel_acc,mean_acc,mean_iu,fw_iu\n";

  // One seed stream feeds every mask of the run; untouched at sample_p = 1 so
  // masked and unmasked runs consume identical seed material elsewhere.
  std::optional<Rng> mask_seeder;
  if (cfg.sample_p < 1.0) mask_seeder.emplace(cfg.seed, "mask.seeds");

  long long it = 0;
  for (int e = 1; e <= cfg.epochs; ++e) {
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    Rng shuffle_rng(cfg.seed, "shuffle." + std::to_string(e));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    long long epoch_iters = 0;
    for (size_t begin = 0; begin < order.size(); begin += size_t(ipb)) {
      const size_t end = std::min(begin + size_t(ipb), order.size());
      TensorT<T> x;
      std::vector<LabelMap> labels;
      assemble_batch(train_set, order, begin, end, &x, &labels);

      std::vector<TensorT<T>> outs = net.forward_all(x);

      std::vector<SampleMask> masks;
      if (mask_seeder) {
        masks.reserve(labels.size());
        for (size_t b = 0; b < labels.size(); ++b)
          masks.push_back(sample_mask(cfg.sample_p, labels[b].h, labels[b].w,
                                      mask_seeder->next_u64()));
      }

      std::vector<TensorT<T>> douts(outs.size());
      std::vector<LossHead<T>> heads;
      for (const auto& [pos, weight] : head_pos) {
        LossHead<T> h;
        h.scores = &outs[pos];
        h.targets = &labels;
        h.weight = weight;
        h.dscores = &douts[pos];
        h.class_weights = cw;
        h.masks = masks.empty() ? nullptr : &masks;
        heads.push_back(h);
      }
      LossReportT<T> rep = multi_head_loss(heads, LossNorm::kMean);
      if (!std::isfinite(rep.value))
        throw NumericError("loss diverged at iteration " + std::to_string(it + 1));

      for (size_t i = 0; i < douts.size(); ++i)
        if (douts[i].size() == 0) {
          douts[i] = TensorT<T>(outs[i].n(), outs[i].c(), outs[i].h(), outs[i].w());
        }
      net.backward_all(douts);
      sgd_step<T>(net.params(), state);

      ++it;
      epoch_loss_sum += rep.value;
      ++epoch_iters;
      if (csv) *csv << it << "," << e << "," << fmt_g(rep.value) << ",,,,\n";
    }

    if (csv) {
      MetricSet m = evaluate(net, val_set ? *val_set : train_set);
      *csv << it << "," << e << "," << fmt_g(epoch_loss_sum / double(epoch_iters))
           << "," << fmt_g(m.pixel_acc) << "," << fmt_g(m.mean_acc) << ","
           << fmt_g(m.mean_iu) << "," << fmt_g(m.fw_iu) << "\n";
    }
  }
  return net.save();
}

template <typename T>
double dataset_loss(Net<T>& net, const Dataset& ds) {
  double total = 0.0;
  long long contributing = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    TensorT<T> x = ds.images[i].cast<T>();
    std::vector<TensorT<T>> outs = net.forward_all(x);
    LossReportT<T> rep = softmax_xent_spatial<T>(outs.front(), ds.labels[i], nullptr,
                                                 nullptr, LossNorm::kSum, nullptr);
    total += rep.value;
    contributing += rep.contributing;
  }
  if (contributing == 0) throw DataError("no pixel contributed to the loss");
  return total / double(contributing);
}

template <typename T>
MetricSet evaluate(Net<T>& net, const Dataset& ds) {
  if (ds.size() == 0) throw DataError("evaluation set is empty");
  ConfusionMatrix cm(net.spec().class_count());
  for (size_t i = 0; i < ds.size(); ++i) {
    TensorT<T> x = ds.images[i].cast<T>();
    std::vector<TensorT<T>> outs = net.forward_all(x);
    accumulate(cm, argmax_map(outs.front(), 0), ds.labels[i]);
  }
  return compute_metrics(cm);
}

template Checkpoint train<float>(Net<float>&, const Dataset&, const Dataset*,
                                 const TrainConfig&, std::ostream*);
template Checkpoint train<double>(Net<double>&, const Dataset&, const Dataset*,
                                  const TrainConfig&, std::ostream*);
template double dataset_loss<float>(Net<float>&, const Dataset&);
template double dataset_loss<double>(Net<double>&, const Dataset&);
template MetricSet evaluate<float>(Net<float>&, const Dataset&);
template MetricSet evaluate<double>(Net<double>&, const Dataset&);

}  // namespace fcn
